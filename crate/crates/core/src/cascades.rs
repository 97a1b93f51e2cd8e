//! Ruelle probability cascades and hierarchical cavity fields: desk-scale
//! samplers for the structures the recursion solver relies on, with
//! covariance and averaging checks.
//!
//! Atoms of the level-k Poisson process with intensity `x_k t^{-x_k-1}` are
//! generated as `Gamma_j^{-1/x_k}` from unit-rate arrival times `Gamma_j`,
//! which yields them in decreasing order; each branch keeps the top `K`.
//!
//! The cavity field follows the covariance-matching convention: level `k`
//! carries variance `m_k - m_{k-1}` with `m_0 = 0`, and the leaf level
//! carries `M - m_n`, so that the covariance of two leaves at lexicographic
//! overlap `l >= 1` is exactly `m_l` and leaves in different subtrees are
//! independent.

use crate::correlator::Correlator;
use crate::error::{Error, Result};
use crate::model::DiscreteOrderParameter;
use crate::parisi::level_variances;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default cap on the truncated leaf count `K^n`.
pub const DEFAULT_LEAF_CAP: usize = 1_000_000;

/// A truncated cascade tree: `n` levels with exponents `x`, `K` atoms per
/// branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTree {
    pub x: Vec<f64>,
    pub k: usize,
    pub seed: u64,
}

impl CascadeTree {
    pub fn new(x: Vec<f64>, k: usize, seed: u64) -> Result<Self> {
        for pair in x.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::NotStrictlyIncreasing("x"));
            }
        }
        for &xk in &x {
            if !(xk > 0.0 && xk < 1.0) {
                return Err(Error::ExponentOutOfRange(xk));
            }
        }
        if k < 100 {
            return Err(Error::InvalidConfig(format!("K = {k} < 100")));
        }
        Ok(CascadeTree { x, k, seed })
    }

    pub fn depth(&self) -> usize {
        self.x.len()
    }

    pub fn leaf_count(&self) -> Option<usize> {
        self.k.checked_pow(self.depth() as u32)
    }
}

/// The `K` largest atoms of the Poisson process with intensity
/// `x t^{-x-1}`, in decreasing order.
pub fn sample_ppp_atoms(x: f64, k: usize, seed: u64) -> Result<Vec<f64>> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::ExponentOutOfRange(x));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ppp_atoms_with(&mut rng, x, k))
}

fn ppp_atoms_with(rng: &mut ChaCha8Rng, x: f64, k: usize) -> Vec<f64> {
    let mut gamma = 0.0_f64;
    let mut atoms = Vec::with_capacity(k);
    for _ in 0..k {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        gamma -= u.ln();
        atoms.push(gamma.powf(-1.0 / x));
    }
    atoms
}

/// Weights of the truncated cascade on its `K^n` leaves, leaf-major order
/// (the last path coordinate varies fastest).
pub fn sample_rpc(tree: &CascadeTree) -> Result<Vec<f64>> {
    sample_rpc_capped(tree, DEFAULT_LEAF_CAP)
}

pub fn sample_rpc_capped(tree: &CascadeTree, cap: usize) -> Result<Vec<f64>> {
    let leaves = tree.leaf_count().ok_or(Error::TreeTooLarge {
        leaves: usize::MAX,
        cap,
    })?;
    if leaves > cap {
        return Err(Error::TreeTooLarge { leaves, cap });
    }
    let mut weights = vec![1.0_f64; 1];
    let mut node_counter = 0u64;
    for level in 0..tree.depth() {
        let mut next = Vec::with_capacity(weights.len() * tree.k);
        for &parent_weight in &weights {
            let mut rng = ChaCha8Rng::seed_from_u64(tree.seed);
            rng.set_stream(node_counter);
            node_counter += 1;
            let atoms = ppp_atoms_with(&mut rng, tree.x[level], tree.k);
            next.extend(atoms.into_iter().map(|a| parent_weight * a));
        }
        weights = next;
    }
    Ok(weights)
}

/// Lexicographic overlap: 0 when the first coordinates differ, otherwise
/// the depth of the deepest common prefix.
pub fn lex_overlap(alpha1: &[usize], alpha2: &[usize]) -> Result<usize> {
    if alpha1.len() != alpha2.len() {
        return Err(Error::DepthMismatch(alpha1.len(), alpha2.len()));
    }
    let mut l = 0;
    for (a, b) in alpha1.iter().zip(alpha2) {
        if a == b {
            l += 1;
        } else {
            break;
        }
    }
    Ok(l)
}

/// One realization of the per-spin cavity fields on the truncated leaf set.
#[derive(Debug, Clone)]
pub struct CavitySample {
    /// `a_i(alpha)` indexed `[spin][leaf]`, leaf-major path order.
    pub fields: Vec<Vec<f64>>,
    pub depth: usize,
    pub branching: usize,
    pub m: f64,
}

impl CavitySample {
    /// `A(u, alpha) = N^{-1/2} sum_i a_i(alpha) u_i` for a configuration u.
    pub fn a_field(&self, u: &[f64], leaf: usize) -> f64 {
        let n = u.len() as f64;
        let s: f64 = self
            .fields
            .iter()
            .zip(u)
            .map(|(a, &ui)| a[leaf] * ui)
            .sum();
        s / n.sqrt()
    }
}

/// Empirical covariance per lexicographic level against its target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CavityCovarianceReport {
    /// `(level, empirical, target, standard error)` for levels `0..n`,
    /// followed by the same for the same-leaf variance (level `n`, target M).
    pub levels: Vec<(usize, f64, f64, f64)>,
    pub samples: usize,
}

/// Sample the cavity field and report its covariance structure.
///
/// The returned [`CavitySample`] is one full realization with `n_spins`
/// i.i.d. copies on every leaf of the tree; the report estimates the scalar
/// field's covariance at every lexicographic level from `samples`
/// independent pair draws.
pub fn sample_cavity(
    op: &DiscreteOrderParameter,
    c: &Correlator,
    m: f64,
    n_spins: usize,
    tree: &CascadeTree,
    samples: usize,
) -> Result<(CavitySample, CavityCovarianceReport)> {
    let variances = level_variances(c, op, m)?;
    let depth = tree.depth();
    if depth != op.n() {
        return Err(Error::DepthMismatch(depth, op.n()));
    }
    let leaves = tree
        .leaf_count()
        .filter(|&l| l <= DEFAULT_LEAF_CAP)
        .ok_or(Error::TreeTooLarge {
            leaves: usize::MAX,
            cap: DEFAULT_LEAF_CAP,
        })?;

    // one full realization: per spin, gaussians on every tree node
    let mut fields = Vec::with_capacity(n_spins);
    for spin in 0..n_spins {
        let mut rng = ChaCha8Rng::seed_from_u64(tree.seed ^ 0x5ca1ab1e);
        rng.set_stream(spin as u64);
        let mut values = vec![0.0_f64; 1];
        for (level, &var) in variances[..depth].iter().enumerate() {
            let mut next = Vec::with_capacity(values.len() * tree.k);
            for &parent in &values {
                for _ in 0..tree.k {
                    let g: f64 = rng.sample(StandardNormal);
                    next.push(parent + var.sqrt() * g);
                }
            }
            values = next;
            let _ = level;
        }
        // leaf level carries M - m_n
        let top = variances[depth];
        for v in values.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += top.sqrt() * g;
        }
        debug_assert_eq!(values.len(), leaves);
        fields.push(values);
        let _ = spin;
    }
    let sample = CavitySample {
        fields,
        depth,
        branching: tree.k,
        m,
    };

    // covariance report from cheap pair draws: leaf A shares exactly l
    // ancestor gaussians with leaf B_l
    let m_targets: Vec<f64> = {
        let mut acc = 0.0;
        let mut t = vec![0.0_f64];
        for &v in &variances[..depth] {
            acc += v;
            t.push(acc);
        }
        t // t[l] = m_l with m_0 = 0
    };
    let draws: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree.seed ^ 0xfeed);
            rng.set_stream(s as u64);
            let shared: Vec<f64> = (0..depth + 1).map(|_| rng.sample(StandardNormal)).collect();
            let mut row = Vec::with_capacity(depth + 2);
            // a(A)
            let a_a: f64 = variances
                .iter()
                .zip(&shared)
                .map(|(&v, &g)| v.sqrt() * g)
                .sum();
            row.push(a_a);
            // a(B_l), sharing levels 1..=l
            for l in 0..depth {
                let mut a_b = 0.0;
                for (k, &v) in variances.iter().enumerate() {
                    let g: f64 = if k < l {
                        shared[k]
                    } else {
                        rng.sample(StandardNormal)
                    };
                    a_b += v.sqrt() * g;
                }
                row.push(a_b);
            }
            row
        })
        .collect();
    let mean_a: f64 = draws.iter().map(|r| r[0]).sum::<f64>() / samples as f64;
    let mut levels = Vec::new();
    for l in 0..=depth {
        // l < depth: covariance of (A, B_l); l = depth: variance of A
        let pairs: Vec<f64> = if l < depth {
            let mean_b: f64 = draws.iter().map(|r| r[1 + l]).sum::<f64>() / samples as f64;
            draws
                .iter()
                .map(|r| (r[0] - mean_a) * (r[1 + l] - mean_b))
                .collect()
        } else {
            draws.iter().map(|r| (r[0] - mean_a) * (r[0] - mean_a)).collect()
        };
        let est = pairs.iter().sum::<f64>() / samples as f64;
        let var_of_pairs =
            pairs.iter().map(|&p| (p - est) * (p - est)).sum::<f64>() / samples as f64;
        let se = (var_of_pairs / samples as f64).sqrt();
        let target = if l < depth { m_targets[l] } else { m };
        levels.push((l, est, target, se));
    }
    Ok((
        sample,
        CavityCovarianceReport {
            levels,
            samples,
        },
    ))
}

/// Monte Carlo check of the cascade averaging identity
/// `E log <e^g>_PPP - E log <1>_PPP = x sigma^2 / 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AveragingReport {
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    /// Estimated effect of dropping all atoms beyond the top K.
    pub truncation_bound: f64,
}

pub fn check_averaging_identity(
    x: f64,
    sigma: f64,
    k: usize,
    reps: usize,
    seed: u64,
) -> Result<AveragingReport> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::ExponentOutOfRange(x));
    }
    let rows: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let atoms = ppp_atoms_with(&mut rng, x, k);
            let mut log_terms_g = Vec::with_capacity(k);
            let mut log_terms_1 = Vec::with_capacity(k);
            for &v in &atoms {
                let g: f64 = rng.sample(StandardNormal);
                log_terms_g.push(v.ln() + sigma * g);
                log_terms_1.push(v.ln());
            }
            let lhs_rep = crate::numerics::logsumexp(&log_terms_g)
                - crate::numerics::logsumexp(&log_terms_1);
            // truncation: remaining intensity mass below the K-th atom,
            // relative to the kept (unnormalized) partition sum
            let gamma_k = atoms.last().map(|a| a.powf(-x)).unwrap_or(f64::INFINITY);
            let tail_mass = gamma_k.powf(1.0 - 1.0 / x) * x / (1.0 - x);
            let kept: f64 = atoms.iter().sum();
            let trunc = tail_mass * (0.5 * sigma * sigma).exp() / kept;
            (lhs_rep, trunc)
        })
        .collect();
    let lhs = rows.iter().map(|r| r.0).sum::<f64>() / reps as f64;
    let var = rows.iter().map(|r| (r.0 - lhs) * (r.0 - lhs)).sum::<f64>() / reps as f64;
    let stderr = (var / reps as f64).sqrt();
    let truncation_bound = rows.iter().map(|r| r.1).sum::<f64>() / reps as f64;
    let rhs = 0.5 * x * sigma * sigma;
    if truncation_bound > 3.0 * stderr.max(1e-12) && sigma > 0.0 {
        return Err(Error::TruncationDominates {
            bound: truncation_bound,
            stderr,
        });
    }
    Ok(AveragingReport {
        lhs,
        rhs,
        stderr,
        truncation_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{validate_correlator, CorrelatorSpec};
    use crate::model::validate_order_param;

    #[test]
    fn ppp_atoms_decreasing_and_deterministic() {
        let a = sample_ppp_atoms(0.5, 1000, 42).unwrap();
        let b = sample_ppp_atoms(0.5, 1000, 42).unwrap();
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert!(w[1] < w[0] && w[1] > 0.0);
        }
        assert!(sample_ppp_atoms(1.2, 100, 0).is_err());
    }

    #[test]
    fn ppp_tail_exponent_matches_intensity() {
        // #atoms above u scales like u^{-x}: regress log N(u) on log u
        let x = 0.5;
        let atoms = sample_ppp_atoms(x, 10_000, 7).unwrap();
        let mut pts = Vec::new();
        for i in (100..10_000).step_by(200) {
            // count of atoms >= atoms[i] is i+1
            pts.push((atoms[i].ln(), ((i + 1) as f64).ln()));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts
            .iter()
            .map(|p| (p.0 - mx) * (p.1 - my))
            .sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
        assert!(
            (slope + x).abs() < 0.05,
            "tail regression slope {slope}, want {}",
            -x
        );
    }

    #[test]
    fn rpc_weights_positive_finite_and_sized() {
        let tree = CascadeTree::new(vec![0.3, 0.7], 100, 5).unwrap();
        let w = sample_rpc(&tree).unwrap();
        assert_eq!(w.len(), 100 * 100);
        let total: f64 = w.iter().sum();
        assert!(total.is_finite() && total > 0.0);
        for &wi in &w {
            assert!(wi > 0.0);
        }
        // n = 1: weights equal the level atoms
        let tree1 = CascadeTree::new(vec![0.5], 200, 9).unwrap();
        let w1 = sample_rpc(&tree1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        rng.set_stream(0);
        let atoms = super::ppp_atoms_with(&mut rng, 0.5, 200);
        assert_eq!(w1, atoms);

        let big = CascadeTree::new(vec![0.2, 0.5, 0.8], 200, 1).unwrap();
        assert!(matches!(
            sample_rpc(&big).unwrap_err(),
            Error::TreeTooLarge { .. }
        ));
    }

    #[test]
    fn lex_overlap_examples() {
        assert_eq!(lex_overlap(&[1, 2, 3], &[1, 2, 4]).unwrap(), 2);
        assert_eq!(lex_overlap(&[1, 2, 3], &[1, 2, 3]).unwrap(), 3);
        assert_eq!(lex_overlap(&[2, 1], &[3, 1]).unwrap(), 0);
        assert!(lex_overlap(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn rpc_top_weight_matches_stick_breaking_oracle() {
        // normalized top weight of PPP(x) atoms is the largest weight of a
        // Poisson-Dirichlet PD(x, 0); stick-breaking with Beta(1-x, k x)
        // sticks is an independent sampler for the same law
        use rand_distr::Beta;
        let x = 0.5;
        let reps = 4000;
        let k = 4000;
        let rpc_tops: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(1234);
                rng.set_stream(rep);
                let atoms = super::ppp_atoms_with(&mut rng, x, k);
                let total: f64 = atoms.iter().sum();
                atoms[0] / total
            })
            .collect();
        let stick_tops: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(4321);
                rng.set_stream(rep);
                let mut remaining = 1.0;
                let mut top: f64 = 0.0;
                for i in 1..200 {
                    let beta = Beta::new(1.0 - x, i as f64 * x).unwrap();
                    let v: f64 = rng.sample(beta);
                    let w = remaining * v;
                    top = top.max(w);
                    remaining *= 1.0 - v;
                    if remaining < 1e-12 {
                        break;
                    }
                }
                top
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let se = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|&t| (t - m) * (t - m)).sum::<f64>() / v.len() as f64
                / v.len() as f64)
                .sqrt()
        };
        let (m1, m2) = (mean(&rpc_tops), mean(&stick_tops));
        let s = (se(&rpc_tops).powi(2) + se(&stick_tops).powi(2)).sqrt();
        assert!(
            (m1 - m2).abs() <= 3.0 * s,
            "rpc top mean {m1} vs stick {m2} (3se = {})",
            3.0 * s
        );
    }

    #[test]
    fn cavity_covariance_matches_targets() {
        let c = validate_correlator(CorrelatorSpec::single_atom(1.0, 1.0)).unwrap();
        let op = validate_order_param(1.0, vec![0.3, 0.7], vec![0.2, 0.6]).unwrap();
        let tree = CascadeTree::new(vec![0.2, 0.6], 100, 77).unwrap();
        let m = 2.0;
        let (sample, report) = sample_cavity(&op, &c, m, 4, &tree, 100_000).unwrap();
        for &(l, est, target, se) in &report.levels {
            assert!(
                (est - target).abs() <= 4.0 * se.max(1e-4),
                "level {l}: est {est} vs target {target} (se {se})"
            );
        }
        // level-0 target is 0 under the m_0 = 0 convention
        assert_eq!(report.levels[0].2, 0.0);
        // A(u, .) with the all-ones configuration has Var = Var[a]
        let u = vec![1.0; 4];
        let vals: Vec<f64> = (0..sample.fields[0].len())
            .map(|leaf| sample.a_field(&u, leaf))
            .collect();
        assert!(vals.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn averaging_identity_closed_form() {
        // x = 0.5, sigma = 1: rhs = 0.25
        let rep = check_averaging_identity(0.5, 1.0, 2000, 2000, 99).unwrap();
        assert!((rep.rhs - 0.25).abs() < 1e-15);
        assert!(
            (rep.lhs - rep.rhs).abs() <= 3.0 * rep.stderr,
            "lhs {} rhs {} (3se {})",
            rep.lhs,
            rep.rhs,
            3.0 * rep.stderr
        );
        assert!(rep.truncation_bound <= rep.stderr);

        // sigma = 0 is exact
        let rep = check_averaging_identity(0.5, 0.0, 500, 50, 1).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);

        // rhs is x sigma^2/2, approaching sigma^2/2 as x -> 1
        let rep = check_averaging_identity(0.7, 1.0, 4000, 400, 1).unwrap();
        assert!((rep.rhs - 0.35).abs() < 1e-12);

        // near x = 1 the atoms decay like 1/j and no truncation is adequate:
        // the guard must fire instead of silently reporting a biased estimate
        assert!(matches!(
            check_averaging_identity(0.999, 1.0, 500, 50, 1).unwrap_err(),
            Error::TruncationDominates { .. }
        ));
    }

    #[test]
    fn nested_two_level_identity() {
        // E log sum_alpha RPC(alpha) e^{psi(alpha)} - E log sum RPC equals
        // the two-level recursion value x1 D1/2 + x2 D2/2 for hierarchical
        // gaussian psi = sqrt(D1) g_{a1} + sqrt(D2) g_{a1 a2}
        let x1 = 0.3;
        let x2 = 0.7;
        let d1: f64 = 0.8;
        let d2: f64 = 0.5;
        let k = 150;
        let reps = 600;
        let rows: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(31415);
                rng.set_stream(rep as u64);
                let top = ppp_atoms_with(&mut rng, x1, k);
                let mut log_num = Vec::with_capacity(k * k);
                let mut log_den = Vec::with_capacity(k * k);
                for &w1 in &top {
                    let g1: f64 = rng.sample(StandardNormal);
                    let sub = ppp_atoms_with(&mut rng, x2, k);
                    for &w2 in &sub {
                        let g2: f64 = rng.sample(StandardNormal);
                        let w = w1.ln() + w2.ln();
                        log_den.push(w);
                        log_num.push(w + d1.sqrt() * g1 + d2.sqrt() * g2);
                    }
                }
                crate::numerics::logsumexp(&log_num) - crate::numerics::logsumexp(&log_den)
            })
            .collect();
        let mean = rows.iter().sum::<f64>() / reps as f64;
        let var = rows.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / reps as f64;
        let se = (var / reps as f64).sqrt();
        let target = 0.5 * (x1 * d1 + x2 * d2);
        assert!(
            (mean - target).abs() <= 3.5 * se + 5e-3,
            "mc {mean} vs recursion {target} (se {se})"
        );
    }
}
