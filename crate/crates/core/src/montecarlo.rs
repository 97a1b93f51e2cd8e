//! Desk-scale ground truth: exact sampling of the random potential at small
//! N, exact enumeration of the partition function, and the concentration and
//! upper-bound checks built on them.

use crate::correlator::{Correlator, CorrelatorKind};
use crate::error::{Error, Result};
use crate::model::StateSpace;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Hard cap on the number of points the dense Cholesky route accepts.
pub const EXACT_POINT_CAP: usize = 1 << 13;
/// Cap on coupling-tensor entries for the series route.
pub const SERIES_MEMORY_CAP: usize = 1 << 24;
/// Enumeration caps: hypercube sweeps and general products.
pub const HYPERCUBE_N_CAP: usize = 20;
pub const PRODUCT_ENUM_CAP: usize = 1 << 20;

/// One realization of the random potential on an explicit point set, or a
/// coupling-tensor representation of the truncated overlap series.
#[derive(Debug, Clone)]
pub enum FieldRealization {
    Exact {
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
        /// Diagonal ridge the factorization needed (0 for clean PSD input).
        ridge: f64,
    },
    Series {
        n_dim: usize,
        r: f64,
        /// `sqrt(gamma_0) g_0` constant term.
        constant: f64,
        /// Per-order coupling tensors, order p stored flat with stride n^p.
        couplings: Vec<Vec<f64>>,
        gammas: Vec<f64>,
        tail_bound: f64,
    },
}

impl FieldRealization {
    /// Field value at a point (table lookup for the exact route, tensor
    /// contraction for the series route).
    pub fn value_at(&self, idx: usize, u: &[f64]) -> f64 {
        match self {
            FieldRealization::Exact { values, .. } => values[idx],
            FieldRealization::Series {
                n_dim,
                constant,
                couplings,
                gammas,
                ..
            } => {
                let n = *n_dim;
                debug_assert_eq!(u.len(), n);
                let mut total = *constant;
                for (p_idx, tensor) in couplings.iter().enumerate() {
                    let p = p_idx + 1;
                    let scale = (gammas[p] / (n as f64).powi(p as i32)).sqrt();
                    // contract over all p-tuples (i_1 .. i_p)
                    let mut s = 0.0;
                    let mut counter = vec![0usize; p];
                    for &g in tensor {
                        let mut prod = 1.0;
                        for &i in &counter {
                            prod *= u[i];
                        }
                        s += g * prod;
                        // odometer increment
                        for d in (0..p).rev() {
                            counter[d] += 1;
                            if counter[d] < n {
                                break;
                            }
                            counter[d] = 0;
                        }
                    }
                    total += scale * s;
                }
                total
            }
        }
    }
}

/// Dense-covariance sampler: factorizes once, draws cheaply per replica.
pub struct ExactSampler {
    chol: DMatrix<f64>,
    pub points: Vec<Vec<f64>>,
    pub ridge: f64,
    pub ridge_warning: bool,
}

impl ExactSampler {
    /// Build the covariance for the given points and factorize it.
    ///
    /// Long-range kind: `Cov(u,v) = (D_N(|u|^2) + D_N(|v|^2) - D_N(|u-v|^2))/2`
    /// with the `X(0) = 0` convention. Isotropic kind: stationary covariance
    /// `B(|u-v|^2/N)`.
    pub fn new(c: &Correlator, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() > EXACT_POINT_CAP {
            return Err(Error::TooManyPoints {
                points: points.len(),
                cap: EXACT_POINT_CAP,
            });
        }
        let m = points.len();
        let n_dim = points.first().map(|p| p.len()).unwrap_or(0).max(1);
        let norm_sq: Vec<f64> = points
            .iter()
            .map(|p| p.iter().map(|x| x * x).sum::<f64>())
            .collect();
        let dist_sq = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        let isotropic = c.spec().kind == CorrelatorKind::Isotropic;
        let b_of = |s: f64| -> f64 {
            // stationary correlation function B(s) = c0 + sum w e^{-t^2 s}
            let spec = c.spec();
            spec.const_c0
                + spec
                    .atoms
                    .iter()
                    .map(|a| a.w * (-a.t * a.t * s).exp())
                    .sum::<f64>()
        };
        let mut cov = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = if isotropic {
                    b_of(dist_sq(&points[i], &points[j]) / n_dim as f64)
                } else {
                    0.5 * (c.eval_d(norm_sq[i] / n_dim as f64)?
                        + c.eval_d(norm_sq[j] / n_dim as f64)?
                        - c.eval_d(dist_sq(&points[i], &points[j]) / n_dim as f64)?)
                };
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        // ridge ladder: silent to 1e-10, warn to 1e-8, reject beyond
        let mut result = None;
        let mut used_ridge = 0.0;
        for &ridge in &[0.0, 1e-12, 1e-10, 1e-9, 1e-8] {
            let mut trial = cov.clone();
            for i in 0..m {
                trial[(i, i)] += ridge;
            }
            if let Some(chol) = trial.cholesky() {
                result = Some(chol.unpack());
                used_ridge = ridge;
                break;
            }
        }
        let chol = result.ok_or(Error::NotPsd { ridge: 1e-8 })?;
        Ok(ExactSampler {
            chol,
            points,
            ridge: used_ridge,
            ridge_warning: used_ridge > 1e-10,
        })
    }

    /// Draw one realization; `(seed, stream)` keys the RNG stream.
    pub fn draw(&self, seed: u64, stream: u64) -> FieldRealization {
        let m = self.points.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        // values = L z
        let values: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..=i {
                    s += self.chol[(i, j)] * z[j];
                }
                s
            })
            .collect();
        FieldRealization::Exact {
            points: self.points.clone(),
            values,
            ridge: self.ridge,
        }
    }
}

/// One exact-route realization (builds a fresh factorization; use
/// [`ExactSampler`] directly when drawing many replicas).
pub fn sample_field_exact(
    c: &Correlator,
    points: Vec<Vec<f64>>,
    seed: u64,
) -> Result<FieldRealization> {
    let sampler = ExactSampler::new(c, points)?;
    Ok(sampler.draw(seed, 0))
}

/// Truncated overlap-series realization on the sphere `|u|^2 = r N`:
/// `X(u) = sqrt(gamma_0) g_0 + sum_p sqrt(gamma_p) N^{-p/2} sum g_{i..} u_{i..}`.
pub fn sample_field_series(
    c: &Correlator,
    r: f64,
    n_dim: usize,
    p_max: usize,
    tail_tol: f64,
    seed: u64,
) -> Result<FieldRealization> {
    let series = c.overlap_series(r, p_max)?;
    if series.tail_bound > tail_tol {
        return Err(Error::TailTooLarge {
            bound: series.tail_bound,
            tol: tail_tol,
        });
    }
    let mut total = 0usize;
    for p in 1..=p_max {
        total = total
            .checked_add(n_dim.pow(p as u32))
            .ok_or(Error::MemoryCap {
                count: usize::MAX,
                cap: SERIES_MEMORY_CAP,
            })?;
    }
    if total > SERIES_MEMORY_CAP {
        return Err(Error::MemoryCap {
            count: total,
            cap: SERIES_MEMORY_CAP,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g0: f64 = rng.sample(StandardNormal);
    let constant = series.coefficients[0].sqrt() * g0;
    let mut couplings = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let len = n_dim.pow(p as u32);
        couplings.push((0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    Ok(FieldRealization::Series {
        n_dim,
        r,
        constant,
        couplings,
        gammas: series.coefficients.clone(),
        tail_bound: series.tail_bound,
    })
}

/// All points of the product space `S^n`, index-major (last coordinate
/// fastest). For hypercubes the Gray-code sweep enumerates the same set by
/// single-coordinate flips.
pub fn enumerate_product_points(s: &StateSpace, n: usize) -> Result<Vec<Vec<f64>>> {
    let atoms = s.product_atoms()?;
    let size = atoms
        .len()
        .checked_pow(n as u32)
        .filter(|&sz| sz <= PRODUCT_ENUM_CAP)
        .ok_or(Error::EnumerationTooLarge {
            size: usize::MAX,
            cap: PRODUCT_ENUM_CAP,
        })?;
    if atoms.len() == 2 && n > HYPERCUBE_N_CAP {
        return Err(Error::EnumerationTooLarge {
            size,
            cap: 1 << HYPERCUBE_N_CAP,
        });
    }
    if atoms.len() > 3 || (atoms.len() == 3 && n > 12) {
        // 3-atom products are capped at N = 12 per the exact-route contract
        if atoms.len() > 3 || size > 531_441 {
            return Err(Error::EnumerationTooLarge {
                size,
                cap: 531_441,
            });
        }
    }
    let mut out = Vec::with_capacity(size);
    let mut idx = vec![0usize; n];
    loop {
        out.push(idx.iter().map(|&i| atoms[i].0).collect());
        let mut d = n;
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < atoms.len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Binary-reflected Gray-code sweep over hypercube sign vectors: yields the
/// standard-order index and the flipped coordinate (None for the first).
pub fn gray_code_sweep(n: usize) -> impl Iterator<Item = (usize, Option<usize>)> {
    (0usize..1 << n).map(move |i| {
        let gray = i ^ (i >> 1);
        let flipped = if i == 0 {
            None
        } else {
            Some(i.trailing_zeros() as usize)
        };
        (gray, flipped)
    })
}

/// Arithmetic weight of a product-measure point. Plain products keep dyadic
/// weights exact, which makes the beta = 0 identity hold to the last bit.
fn point_weight(s: &StateSpace, u: &[f64]) -> Result<f64> {
    let atoms = s.product_atoms()?;
    let mut w = 1.0;
    'coords: for &ui in u {
        for &(a, p) in atoms {
            if a == ui {
                w *= p;
                continue 'coords;
            }
        }
        return Err(Error::InvalidStateSpace(format!(
            "point coordinate {ui} not in the support"
        )));
    }
    Ok(w)
}

/// Exact quenched log-partition value `p_N = (1/N) log sum_u mu_N(u)
/// exp(beta sqrt(N) X(u))` for one realization, by enumeration with a
/// max-shift so that `beta = 0` returns `log(total mass)` exactly.
pub fn log_partition(
    real: &FieldRealization,
    beta: f64,
    s: &StateSpace,
    n: usize,
) -> Result<f64> {
    let points: &[Vec<f64>] = match real {
        FieldRealization::Exact { points, .. } => points,
        FieldRealization::Series { .. } => {
            return Err(Error::InvalidConfig(
                "series realizations evaluate through log_partition_series".into(),
            ))
        }
    };
    let scale = beta * (n as f64).sqrt();
    let mut shift = f64::NEG_INFINITY;
    for (i, _) in points.iter().enumerate() {
        shift = shift.max(scale * real.value_at(i, &points[i]));
    }
    if shift == f64::NEG_INFINITY || !shift.is_finite() {
        shift = 0.0;
    }
    let mut z = 0.0;
    for (i, u) in points.iter().enumerate() {
        z += point_weight(s, u)? * (scale * real.value_at(i, u) - shift).exp();
    }
    let p = (shift + z.ln()) / n as f64;
    if !p.is_finite() {
        return Err(Error::NonfiniteValue("log_partition"));
    }
    Ok(p)
}

/// Enumerate the hypercube and evaluate one series realization exactly.
pub fn log_partition_series(
    real: &FieldRealization,
    beta: f64,
    s: &StateSpace,
    n: usize,
) -> Result<f64> {
    let (points, values) = match real {
        FieldRealization::Series { n_dim, .. } => {
            if *n_dim != n {
                return Err(Error::InvalidConfig(format!(
                    "series realization has N={n_dim}, expected {n}"
                )));
            }
            let pts = enumerate_product_points(s, n)?;
            let vals: Vec<f64> = pts
                .par_iter()
                .map(|u| real.value_at(0, u))
                .collect();
            (pts, vals)
        }
        FieldRealization::Exact { .. } => {
            return Err(Error::InvalidConfig(
                "exact realizations evaluate through log_partition".into(),
            ))
        }
    };
    let exact = FieldRealization::Exact {
        points,
        values,
        ridge: 0.0,
    };
    log_partition(&exact, beta, s, n)
}

/// p_N replicas for (correlator, state space, beta) with one shared
/// factorization; replica i uses RNG stream i. Summation order is fixed by
/// the index, so results are bit-reproducible regardless of thread count.
pub fn replica_log_partitions(
    c: &Correlator,
    s: &StateSpace,
    beta: f64,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let points = enumerate_product_points(s, n)?;
    let sampler = ExactSampler::new(c, points)?;
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let real = sampler.draw(seed, rep as u64);
            log_partition(&real, beta, s, n)
        })
        .collect()
}

/// Empirical tail frequencies of `p_N` against the concentration bound
/// `2 exp(-N t^2 / (4 D(d)))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
    /// `(t, empirical frequency, bound, binomial se, violation)` rows.
    pub rows: Vec<(f64, f64, f64, f64, bool)>,
    pub violations: usize,
}

pub fn concentration_check(
    c: &Correlator,
    beta: f64,
    s: &StateSpace,
    n: usize,
    reps: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<ConcentrationReport> {
    let ps = replica_log_partitions(c, s, beta, n, reps, seed)?;
    let mean = ps.iter().sum::<f64>() / reps as f64;
    let var = ps.iter().map(|&p| (p - mean) * (p - mean)).sum::<f64>() / reps as f64;
    let stderr = (var / reps as f64).sqrt();
    let d = s.effective_size();
    let dd = c.eval_d(d)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut violations = 0;
    for &t in t_grid {
        let freq = ps.iter().filter(|&&p| (p - mean).abs() > t).count() as f64 / reps as f64;
        let bound = if dd > 0.0 {
            2.0 * (-(n as f64) * t * t / (4.0 * dd)).exp()
        } else {
            if t > 0.0 {
                0.0
            } else {
                2.0
            }
        };
        let se = (freq * (1.0 - freq) / reps as f64).sqrt().max(1.0 / reps as f64);
        let violation = freq > bound + 3.0 * se;
        if violation {
            violations += 1;
        }
        rows.push((t, freq, bound, se, violation));
    }
    Ok(ConcentrationReport {
        mean,
        stderr,
        reps,
        rows,
        violations,
    })
}

/// The upper-bound check: `gap = parisi_value - mc_mean` with its standard
/// error; the acceptance suite requires `gap >= -(3 se + finite-size slack)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuerraReport {
    pub mc_mean: f64,
    pub stderr: f64,
    pub gap: f64,
    pub reps: usize,
}

pub fn guerra_gap(
    c: &Correlator,
    beta: f64,
    s: &StateSpace,
    n: usize,
    reps: usize,
    parisi_value: f64,
    seed: u64,
) -> Result<GuerraReport> {
    let ps = replica_log_partitions(c, s, beta, n, reps, seed)?;
    let mc_mean = ps.iter().sum::<f64>() / reps as f64;
    let var = ps.iter().map(|&p| (p - mc_mean) * (p - mc_mean)).sum::<f64>() / reps as f64;
    let stderr = (var / reps as f64).sqrt();
    Ok(GuerraReport {
        mc_mean,
        stderr,
        gap: parisi_value - mc_mean,
        reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{validate_correlator, CorrelatorSpec};

    fn hypercube() -> StateSpace {
        StateSpace::hypercube().validated().unwrap()
    }

    fn hypercube_points(n: usize) -> Vec<Vec<f64>> {
        enumerate_product_points(&hypercube(), n).unwrap()
    }

    #[test]
    fn exact_route_variances_and_pair_covariance() {
        let lin = validate_correlator(CorrelatorSpec::linear(1.0)).unwrap();
        let n = 6;
        let pts = hypercube_points(n);
        let sampler = ExactSampler::new(&lin, pts.clone()).unwrap();
        // antipodal pair: Cov = D(1) - D(4)/2 = 1 - 2 = -1 for linear D
        let reps = 20_000;
        let (i, j) = (0usize, pts.len() - 1); // all +1 vs all -1 in índex order
        let mut cross = 0.0;
        let mut var0 = 0.0;
        for rep in 0..reps {
            let real = sampler.draw(11, rep as u64);
            if let FieldRealization::Exact { values, .. } = real {
                cross += values[i] * values[j];
                var0 += values[i] * values[i];
            }
        }
        cross /= reps as f64;
        var0 /= reps as f64;
        // Var = D(1) = 1; 3 se of a product of gaussians ~ 3 sqrt(2/reps)
        let se3 = 3.0 * (2.0_f64 / reps as f64).sqrt();
        assert!((var0 - 1.0).abs() < se3, "var {var0}");
        assert!((cross + 1.0).abs() < se3, "antipodal cov {cross}");
    }

    #[test]
    fn exact_route_empirical_covariance_random_pairs() {
        let sa = validate_correlator(CorrelatorSpec::single_atom(1.0, 1.0)).unwrap();
        let n = 5;
        let pts = hypercube_points(n);
        let sampler = ExactSampler::new(&sa, pts.clone()).unwrap();
        let reps = 10_000;
        let pairs = [(0usize, 3usize), (1, 17), (7, 22), (4, 4)];
        let mut acc = vec![0.0; pairs.len()];
        for rep in 0..reps {
            if let FieldRealization::Exact { values, .. } = sampler.draw(5, rep as u64) {
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    acc[k] += values[i] * values[j];
                }
            }
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let est = acc[k] / reps as f64;
            let d2 = pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            let target = 0.5
                * (sa.eval_d(1.0).unwrap() + sa.eval_d(1.0).unwrap()
                    - sa.eval_d(d2 / n as f64).unwrap());
            let se3 = 3.0 * (2.0_f64 / reps as f64).sqrt();
            assert!(
                (est - target).abs() <= se3,
                "pair {:?}: est {est} vs {target}",
                (i, j)
            );
        }
    }

    #[test]
    fn series_route_linear_factorizes() {
        // p_max = 1 on the linear correlator: X(u) = N^{-1/2} sum g_i u_i and
        // p_N = (1/N) sum log(2 cosh(beta g_i)) - log 2 exactly
        let lin = validate_correlator(CorrelatorSpec::linear(1.0)).unwrap();
        let n = 8;
        let beta = 0.9;
        let real = sample_field_series(&lin, 1.0, n, 1, 1e-9, 31).unwrap();
        let p = log_partition_series(&real, beta, &hypercube(), n).unwrap();
        if let FieldRealization::Series { couplings, .. } = &real {
            let oracle: f64 = couplings[0]
                .iter()
                .map(|&g| (2.0 * (beta * g).cosh()).ln())
                .sum::<f64>()
                / n as f64
                - 2.0_f64.ln();
            assert!((p - oracle).abs() < 1e-12, "p {p} vs oracle {oracle}");
        } else {
            panic!("expected series realization");
        }
        // seed determinism
        let real2 = sample_field_series(&lin, 1.0, n, 1, 1e-9, 31).unwrap();
        let p2 = log_partition_series(&real2, beta, &hypercube(), n).unwrap();
        assert_eq!(p.to_bits(), p2.to_bits());
    }

    #[test]
    fn series_covariance_at_full_overlap() {
        let sa = validate_correlator(CorrelatorSpec::single_atom(1.0, 1.0)).unwrap();
        let n = 6;
        let p_max = 4;
        let series = sa.overlap_series(1.0, p_max).unwrap();
        let target: f64 = series.coefficients.iter().sum();
        let u = vec![1.0; n];
        let reps = 20_000;
        let mut acc = 0.0;
        for rep in 0..reps {
            let real = sample_field_series(&sa, 1.0, n, p_max, 1.0, 1000 + rep).unwrap();
            let v = real.value_at(0, &u);
            acc += v * v;
        }
        let est = acc / reps as f64;
        let se3 = 3.0 * target * (2.0_f64 / reps as f64).sqrt();
        assert!(
            (est - target).abs() <= se3,
            "Var at q=1: est {est} vs {target}"
        );
    }

    #[test]
    fn beta_zero_partition_is_exact_log_mass() {
        let lin = validate_correlator(CorrelatorSpec::linear(1.0)).unwrap();
        let n = 10;
        let pts = hypercube_points(n);
        let real = sample_field_exact(&lin, pts, 3).unwrap();
        let p = log_partition(&real, 0.0, &hypercube(), n).unwrap();
        assert_eq!(p, 0.0, "probability measure at beta=0 must give exactly 0");

        // non-probability measure: exactly log total mass
        let sp = StateSpace::Product {
            atoms: vec![(-1.0, 1.0), (1.0, 1.0)],
        }
        .validated()
        .unwrap();
        let pts = enumerate_product_points(&sp, 4).unwrap();
        let real = sample_field_exact(&lin, pts, 3).unwrap();
        let p = log_partition(&real, 0.0, &sp, 4).unwrap();
        assert!((p - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gray_code_sweep_covers_hypercube() {
        for n in 1..=10 {
            let mut seen = vec![false; 1 << n];
            let mut prev: Option<usize> = None;
            for (idx, flip) in gray_code_sweep(n) {
                assert!(!seen[idx]);
                seen[idx] = true;
                if let (Some(p), Some(f)) = (prev, flip) {
                    assert_eq!(p ^ idx, 1 << f, "single-bit flip");
                }
                prev = Some(idx);
            }
            assert!(seen.into_iter().all(|b| b), "n={n} missed points");
        }
    }

    #[test]
    fn field_sign_flip_symmetry() {
        // means over replicas of p_N for +X and -X agree within 3 se
        let sa = validate_correlator(CorrelatorSpec::single_atom(1.0, 1.0)).unwrap();
        let hc = hypercube();
        let n = 6;
        let beta = 1.0;
        let pts = hypercube_points(n);
        let sampler = ExactSampler::new(&sa, pts).unwrap();
        let reps = 400;
        let mut plus = Vec::with_capacity(reps);
        let mut minus = Vec::with_capacity(reps);
        for rep in 0..reps {
            let real = sampler.draw(17, rep as u64);
            plus.push(log_partition(&real, beta, &hc, n).unwrap());
            if let FieldRealization::Exact { points, values, ridge } = real {
                let flipped = FieldRealization::Exact {
                    points,
                    values: values.iter().map(|v| -v).collect(),
                    ridge,
                };
                minus.push(log_partition(&flipped, beta, &hc, n).unwrap());
            }
        }
        let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            let mu = m(v);
            (v.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let se = (sd(&plus).powi(2) / reps as f64 + sd(&minus).powi(2) / reps as f64).sqrt();
        assert!(
            (m(&plus) - m(&minus)).abs() <= 3.0 * se,
            "{} vs {}",
            m(&plus),
            m(&minus)
        );
    }

    #[test]
    fn partition_monotone_in_beta_on_average() {
        let sa = validate_correlator(CorrelatorSpec::single_atom(1.0, 1.0)).unwrap();
        let hc = hypercube();
        let n = 6;
        let betas = [0.0, 0.5, 1.0];
        let mut means = Vec::new();
        for &b in &betas {
            let ps = replica_log_partitions(&sa, &hc, b, n, 150, 23).unwrap();
            means.push(ps.iter().sum::<f64>() / ps.len() as f64);
        }
        assert!(means[1] >= means[0] - 3e-2 && means[2] >= means[1] - 3e-2, "{means:?}");
    }

    #[test]
    fn concentration_bound_holds_small_case() {
        let lin = validate_correlator(CorrelatorSpec::linear(1.0)).unwrap();
        let hc = hypercube();
        let t_grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let rep = concentration_check(&lin, 1.0, &hc, 8, 200, &t_grid, 29).unwrap();
        assert_eq!(rep.violations, 0, "{:?}", rep.rows);
        // frequencies are non-increasing in t (nested events)
        for w in rep.rows.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-15);
        }
    }

    #[test]
    fn guerra_gap_zero_at_beta_zero() {
        let lin = validate_correlator(CorrelatorSpec::linear(1.0)).unwrap();
        let hc = hypercube();
        let rep = guerra_gap(&lin, 0.0, &hc, 8, 50, 0.0, 5).unwrap();
        assert_eq!(rep.mc_mean, 0.0);
        assert_eq!(rep.gap, 0.0);
        assert_eq!(rep.stderr, 0.0);
    }
}
