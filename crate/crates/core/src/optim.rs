//! Derivative-free optimization helpers: Nelder-Mead simplex search and
//! golden-section line search, plus the order-parameter coordinate
//! transforms that turn the ordering constraints into free coordinates.

use crate::model::DiscreteOrderParameter;

/// Options for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_iter: usize,
    /// Stop when the simplex value spread falls below this.
    pub tol_value: f64,
    /// Stop when the simplex diameter falls below this.
    pub tol_x: f64,
    /// Initial simplex step along each coordinate.
    pub step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            max_iter: 400,
            tol_value: 1e-9,
            tol_x: 1e-7,
            step: 0.8,
        }
    }
}

/// Result of a Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder-Mead with restart rounds: each round re-seeds the simplex around
/// the incumbent with a shrinking step, the standard cure for simplex
/// collapse on smooth objectives.
pub fn nelder_mead_restarted(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NmOptions,
    rounds: usize,
) -> NmResult {
    let mut best = nelder_mead(f, x0, opts);
    let mut step = opts.step;
    let mut iterations = best.iterations;
    for _ in 1..rounds {
        step *= 0.25;
        let o = NmOptions { step, ..*opts };
        let res = nelder_mead(f, &best.x, &o);
        iterations += res.iterations;
        if res.value < best.value {
            best = res;
        }
    }
    best.iterations = iterations;
    best
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2). Infinite objective values are allowed and pushed out.
pub fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], opts: &NmOptions) -> NmResult {
    let dim = x0.len();
    assert!(dim >= 1);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += opts.step;
        let v = f(&p);
        simplex.push((p, v));
    }
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let spread = worst - best;
        let diam = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max);
        if (spread.is_finite() && spread < opts.tol_value) || diam < opts.tol_x {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(p, _)| p[j]).sum::<f64>() / dim as f64)
            .collect();
        let mix = |t: f64| -> Vec<f64> {
            (0..dim)
                .map(|j| centroid[j] + t * (centroid[j] - simplex[dim].0[j]))
                .collect()
        };
        let xr = mix(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = mix(2.0);
            let fe = f(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[dim].1 {
                let xc = mix(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = mix(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                // shrink toward the best vertex
                let best_p = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for j in 0..dim {
                        entry.0[j] = 0.5 * (entry.0[j] + best_p[j]);
                    }
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NmResult {
        x: simplex[0].0.clone(),
        value: simplex[0].1,
        iterations,
    }
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
/// Returns `(x*, f*)`; `evals` collects every probed pair when provided.
pub fn golden_min(
    f: &mut dyn FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c1 = b - inv_phi * (b - a);
    let mut c2 = a + inv_phi * (b - a);
    let mut f1 = f(c1);
    let mut f2 = f(c2);
    let mut best = if f1 <= f2 { (c1, f1) } else { (c2, f2) };
    for _ in 0..max_iter {
        if b - a <= tol {
            break;
        }
        if f1 <= f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - inv_phi * (b - a);
            f1 = f(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + inv_phi * (b - a);
            f2 = f(c2);
        }
        let cand = if f1 <= f2 { (c1, f1) } else { (c2, f2) };
        if cand.1 < best.1 {
            best = cand;
        }
    }
    best
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Map 2n free coordinates to an ordered order parameter on `(0, r)`:
/// the first half encodes `q` as `r * sigmoid` of a strictly increasing
/// sequence built from exponential gaps, the second half encodes `x` the
/// same way on `(0, 1)`. Saturated coordinates produce degenerate levels,
/// which the evaluation machinery treats as no-ops.
pub fn decode_op(r: f64, coords: &[f64]) -> DiscreteOrderParameter {
    assert!(coords.len() % 2 == 0);
    let n = coords.len() / 2;
    let decode_half = |half: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut s = half[0].clamp(-36.0, 36.0);
        out.push(sigmoid(s));
        for &g in &half[1..] {
            s = (s + g.clamp(-36.0, 36.0).exp()).clamp(-36.0, 36.0);
            out.push(sigmoid(s));
        }
        out
    };
    let q: Vec<f64> = decode_half(&coords[..n]).into_iter().map(|v| r * v).collect();
    let x = decode_half(&coords[n..]);
    DiscreteOrderParameter::new_unchecked(r, q, x)
}

/// Inverse of [`decode_op`] for warm starts (requires strictly ordered input).
pub fn encode_op(op: &DiscreteOrderParameter) -> Vec<f64> {
    let n = op.n();
    let mut coords = Vec::with_capacity(2 * n);
    let encode_half = |vals: Vec<f64>, coords: &mut Vec<f64>| {
        let ts: Vec<f64> = vals.iter().map(|&v| logit(v.clamp(1e-12, 1.0 - 1e-12))).collect();
        coords.push(ts[0]);
        for w in ts.windows(2) {
            coords.push((w[1] - w[0]).max(1e-12).ln());
        }
    };
    encode_half(op.q().iter().map(|&q| q / op.r()).collect(), &mut coords);
    encode_half(op.x().to_vec(), &mut coords);
    coords
}

/// Clean a possibly-degenerate optimizer output into a strictly ordered,
/// validated order parameter: clamp into the open intervals, drop zero-width
/// levels (keeping the later x) and zero-jump levels (keeping the earlier q).
pub fn sanitize_op(op: &DiscreteOrderParameter) -> crate::error::Result<DiscreteOrderParameter> {
    let r = op.r();
    let eps_q = (r * 1e-9).max(1e-12);
    let eps_x = 1e-9;
    let mut pairs: Vec<(f64, f64)> = op
        .q()
        .iter()
        .zip(op.x())
        .map(|(&q, &x)| (q.clamp(eps_q, r - eps_q), x.clamp(eps_x, 1.0 - eps_x)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (q, x) in pairs {
        match merged.last_mut() {
            Some(last) if q - last.0 < 2.0 * eps_q => last.1 = last.1.max(x),
            _ => merged.push((q, x)),
        }
    }
    // drop zero jumps: keep the first q of any x-plateau
    let mut q = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    for (qk, xk) in merged {
        if let Some(&last) = x.last() {
            if xk - last < eps_x {
                continue;
            }
        }
        q.push(qk);
        x.push(xk);
    }
    crate::model::validate_order_param(r, q, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_quadratic_bowl() {
        let mut f = |p: &[f64]| (p[0] - 1.5).powi(2) + 3.0 * (p[1] + 0.5).powi(2);
        let res = nelder_mead(
            &mut f,
            &[0.0, 0.0],
            &NmOptions {
                max_iter: 500,
                tol_value: 1e-14,
                tol_x: 1e-9,
                step: 0.5,
            },
        );
        assert!((res.x[0] - 1.5).abs() < 1e-5, "{:?}", res.x);
        assert!((res.x[1] + 0.5).abs() < 1e-5);
        assert!(res.value < 1e-9);
    }

    #[test]
    fn golden_min_parabola() {
        let mut f = |t: f64| (t - 0.3).powi(2);
        let (x, v) = golden_min(&mut f, -2.0, 2.0, 1e-9, 200);
        assert!((x - 0.3).abs() < 1e-6);
        assert!(v < 1e-12);
    }

    #[test]
    fn op_encode_decode_roundtrip() {
        let op = crate::model::validate_order_param(2.0, vec![0.3, 0.9, 1.5], vec![0.1, 0.4, 0.8])
            .unwrap();
        let coords = encode_op(&op);
        let back = decode_op(2.0, &coords);
        for (a, b) in op.q().iter().zip(back.q()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in op.x().iter().zip(back.x()) {
            assert!((a - b).abs() < 1e-9);
        }
        // decoded coordinates are always ordered, wherever NM wanders
        let wild = decode_op(1.0, &[5.0, -3.0, 0.2, -50.0, 2.0, 80.0]);
        for w in wild.q().windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in wild.x().windows(2) {
            assert!(w[1] >= w[0] && w[1] < 1.0);
        }
    }

    #[test]
    fn sanitize_drops_degenerate_levels() {
        let degen =
            DiscreteOrderParameter::new_unchecked(1.0, vec![0.4, 0.4, 0.7], vec![0.2, 0.5, 0.5]);
        let clean = sanitize_op(&degen).unwrap();
        assert_eq!(clean.n(), 1);
        assert!((clean.q()[0] - 0.4).abs() < 1e-8);
        assert!((clean.x()[0] - 0.5).abs() < 1e-8);
    }
}
