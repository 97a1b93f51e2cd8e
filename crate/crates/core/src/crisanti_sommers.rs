//! Closed-form Crisanti-Sommers functional for the rotationally invariant
//! state space, with a quadrature cross-check and the max-min optimizer.
//!
//! For piecewise-constant order parameters every integral reduces to sums of
//! logarithms (the inner `int_q^r x` is piecewise affine) and of mixture
//! antiderivatives of `D'`. The additive normalization follows the Lebesgue
//! a priori convention; only internal-consistency and structure checks are
//! meaningful against simulation, not absolute values.

use crate::correlator::Correlator;
use crate::error::{Error, Result};
use crate::model::DiscreteOrderParameter;
use crate::optim::{decode_op, encode_op, golden_min, nelder_mead_restarted, sanitize_op, NmOptions};
use crate::saddle::{OptimTrace, SaddleResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A ball-state-space instance: correlator, temperature and external field.
#[derive(Debug, Clone)]
pub struct CsInstance {
    pub correlator: Correlator,
    pub beta: f64,
    pub h1: f64,
    pub h2: f64,
    pub l: f64,
}

impl CsInstance {
    pub fn new(correlator: Correlator, beta: f64, h1: f64, h2: f64, l: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidStateSpace(format!("ball radius L={l}")));
        }
        if !(h2 >= 0.0) || !h1.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidStateSpace(format!(
                "fields h1={h1}, h2={h2}, beta={beta}"
            )));
        }
        Ok(CsInstance {
            correlator,
            beta,
            h1,
            h2,
            l,
        })
    }

    /// Effective size `d = L^2`.
    pub fn d(&self) -> f64 {
        self.l * self.l
    }
}

/// `F(q_k) = int_{q_k}^r x(s) ds` at breakpoints `q_0 = 0, .., q_{n+1} = r`:
/// interval `[q_k, q_{k+1})` carries the constant `x_k` (with `x_0 = 0`).
fn f_at_breakpoints(op: &DiscreteOrderParameter) -> Vec<f64> {
    let n = op.n();
    let r = op.r();
    let q_at = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else if k == n + 1 {
            r
        } else {
            op.q()[k - 1]
        }
    };
    let x_at = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else {
            op.x()[k - 1]
        }
    };
    let mut f = vec![0.0; n + 2];
    for k in (0..=n).rev() {
        f[k] = f[k + 1] + x_at(k) * (q_at(k + 1) - q_at(k));
    }
    f
}

/// Closed-form evaluation of the functional at `(r, x)`.
pub fn eval_cs(inst: &CsInstance, r: f64, op: &DiscreteOrderParameter) -> Result<f64> {
    if (op.r() - r).abs() > 1e-12 * r.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "order parameter has r={}, expected {r}",
            op.r()
        )));
    }
    let n = op.n();
    let q_max = if n == 0 { 0.0 } else { op.q()[n - 1] };
    if q_max >= r {
        return Err(Error::QmaxAtBoundary { q_max, r });
    }
    if r - q_max <= 0.0 {
        return Err(Error::NonpositiveLogArgument(r - q_max));
    }
    let c = &inst.correlator;
    let f = f_at_breakpoints(op);
    let q_at = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else if k == n + 1 {
            r
        } else {
            op.q()[k - 1]
        }
    };

    let t1 = (r - q_max).ln();

    // T2 = int_0^{q_max} dq / F(q); F affine with slope -x_k per interval
    let mut t2 = 0.0;
    for k in 0..n {
        let (a, b) = (q_at(k), q_at(k + 1));
        if b <= a {
            continue;
        }
        let x_k = if k == 0 { 0.0 } else { op.x()[k - 1] };
        if f[k] <= 0.0 || f[k + 1] <= 0.0 {
            return Err(Error::NonpositiveLogArgument(f[k].min(f[k + 1])));
        }
        if x_k == 0.0 {
            t2 += (b - a) / f[k];
        } else {
            t2 += (f[k] / f[k + 1]).ln() / x_k;
        }
    }

    let t3 = inst.h1 * inst.h1 * f[0];
    let t4 = -inst.h2 * r;

    // T5 = (beta^2/2) [ D'(2(r - q_max)) + int_0^{q_max} D'(2(r-q)) x(q) dq ]
    let mut t5_int = 0.0;
    for k in 0..n {
        let (a, b) = (q_at(k), q_at(k + 1));
        let x_k = if k == 0 { 0.0 } else { op.x()[k - 1] };
        if x_k == 0.0 || b <= a {
            continue;
        }
        t5_int += x_k * 0.5 * (c.eval_d(2.0 * (r - a))? - c.eval_d(2.0 * (r - b))?);
    }
    let t5 = 0.5 * inst.beta * inst.beta * (c.eval_d_prime(2.0 * (r - q_max))? + t5_int);

    Ok(0.5 * (t1 + t2 + t3 + t4) + t5)
}

/// Quadrature cross-check: the same integrals evaluated by adaptive Simpson
/// on each smooth piece, with only pointwise evaluations of `x(.)`, `1/F(.)`
/// and `D'(.)` — independent of the antiderivative algebra above.
pub fn eval_cs_numeric(inst: &CsInstance, r: f64, op: &DiscreteOrderParameter) -> Result<f64> {
    let n = op.n();
    let q_max = if n == 0 { 0.0 } else { op.q()[n - 1] };
    if q_max >= r {
        return Err(Error::QmaxAtBoundary { q_max, r });
    }
    let c = &inst.correlator;
    let breakpoints: Vec<f64> = std::iter::once(0.0)
        .chain(op.q().iter().copied())
        .chain(std::iter::once(r))
        .collect();

    // F(q) by per-piece quadrature of the step function x
    let f_num = |q: f64| -> f64 {
        let mut acc = 0.0;
        for w in breakpoints.windows(2) {
            let (a, b) = (w[0].max(q), w[1]);
            if b <= a {
                continue;
            }
            // x constant on the piece: midpoint rule is exact
            acc += op.x_at(0.5 * (a + b)) * (b - a);
        }
        acc
    };

    let t1 = (r - q_max).ln();
    let mut t2 = 0.0;
    let mut t5_int = 0.0;
    for w in breakpoints.windows(2) {
        let (a, b) = (w[0], w[1].min(q_max));
        if b <= a {
            continue;
        }
        t2 += adaptive_simpson(&|q| 1.0 / f_num(q), a, b, 1e-11, 40);
        t5_int += adaptive_simpson(
            &|q| c.eval_d_prime(2.0 * (r - q)).unwrap_or(f64::NAN) * op.x_at(q),
            a,
            b,
            1e-11,
            40,
        );
    }
    let t3 = inst.h1 * inst.h1 * adaptive_simpson(&|q| op.x_at(q), 0.0, r, 1e-11, 40);
    let t4 = -inst.h2 * r;
    let t5 = 0.5 * inst.beta * inst.beta * (c.eval_d_prime(2.0 * (r - q_max))? + t5_int);
    let v = 0.5 * (t1 + t2 + t3 + t4) + t5;
    if !v.is_finite() {
        return Err(Error::NonfiniteValue("eval_cs_numeric"));
    }
    Ok(v)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(f, a, m, fa, flm, fm);
        let right = simpson(f, m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(f, a, b, fa, fm, fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Inner minimum over `(q, x)` at fixed `r`: a warm-started level ladder
/// (`n' = 0..n`) of multi-start Nelder-Mead runs in the same
/// ordering-preserving coordinates as the product-space optimizer. The
/// ladder keeps values monotone in the level count even when a stray
/// saturation basin traps individual starts.
pub fn optimize_cs_inner(
    inst: &CsInstance,
    r: f64,
    n: usize,
    seed: u64,
) -> Result<(DiscreteOrderParameter, f64, OptimTrace)> {
    let rs = DiscreteOrderParameter::new_unchecked(r, vec![], vec![]);
    let rs_value = eval_cs(inst, r, &rs)?;
    let mut best = (
        rs,
        rs_value,
        OptimTrace {
            start_values: vec![rs_value],
            multistart_spread: 0.0,
            no_descent: false,
            inner_iterations: 0,
            outer_evals: 0,
        },
    );
    for level in 1..=n {
        let mut starts: Vec<Vec<f64>> = Vec::new();
        let eq: Vec<f64> = (1..=level).map(|k| k as f64 / (level + 1) as f64).collect();
        starts.push(encode_op(&DiscreteOrderParameter::new_unchecked(
            r,
            eq.iter().map(|&v| v * r).collect(),
            eq.clone(),
        )));
        starts.push(encode_op(&refine_cs(&best.0, level)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (level as u64).wrapping_mul(0xc5));
        for _ in 0..3 {
            let mut qs: Vec<f64> = (0..level).map(|_| r * rng.gen_range(0.05..0.95)).collect();
            let mut xs: Vec<f64> = (0..level).map(|_| rng.gen_range(0.05..0.95)).collect();
            qs.sort_by(f64::total_cmp);
            xs.sort_by(f64::total_cmp);
            for i in 1..level {
                qs[i] = qs[i].max(qs[i - 1] + 1e-4 * r);
                xs[i] = xs[i].max(xs[i - 1] + 1e-4);
            }
            starts.push(encode_op(&DiscreteOrderParameter::new_unchecked(r, qs, xs)));
        }
        let opts = NmOptions {
            max_iter: 300 + 150 * level,
            tol_value: 1e-13,
            tol_x: 1e-9,
            step: 0.7,
        };
        let runs: Vec<crate::optim::NmResult> = starts
            .par_iter()
            .map(|x0| {
                let mut f = |coords: &[f64]| -> f64 {
                    let op = decode_op(r, coords);
                    eval_cs(inst, r, &op).unwrap_or(f64::INFINITY)
                };
                nelder_mead_restarted(&mut f, x0, &opts, 3)
            })
            .collect();
        let winner = runs
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .unwrap();
        if !winner.value.is_finite() {
            return Err(Error::NonfiniteValue("optimize_cs_inner"));
        }
        let finite_vals: Vec<f64> =
            runs.iter().map(|r| r.value).filter(|v| v.is_finite()).collect();
        let spread = finite_vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - finite_vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if winner.value < best.1 {
            let op =
                sanitize_op(&decode_op(r, &winner.x)).unwrap_or_else(|_| decode_op(r, &winner.x));
            let value = eval_cs(inst, r, &op)?.min(winner.value);
            best = (
                op,
                value,
                OptimTrace {
                    start_values: runs.iter().map(|r| r.value).collect(),
                    multistart_spread: spread,
                    no_descent: false,
                    inner_iterations: winner.iterations,
                    outer_evals: 0,
                },
            );
        } else {
            best.2.start_values = runs.iter().map(|r| r.value).collect();
            best.2.multistart_spread = spread;
            best.2.no_descent = true;
        }
    }
    Ok(best)
}

/// Grow an order parameter to `level` jumps by splitting the widest q-gap.
fn refine_cs(op: &DiscreteOrderParameter, level: usize) -> DiscreteOrderParameter {
    let r = op.r();
    let mut q = op.q().to_vec();
    let mut x = op.x().to_vec();
    while q.len() < level {
        let mut bounds = vec![0.0];
        bounds.extend_from_slice(&q);
        bounds.push(r);
        let (mut widest, mut at) = (0.0, 0);
        for (i, w) in bounds.windows(2).enumerate() {
            if w[1] - w[0] > widest {
                widest = w[1] - w[0];
                at = i;
            }
        }
        let x_lo = if at == 0 { 0.0 } else { x[at - 1] };
        let x_hi = if at == x.len() { 1.0 } else { x[at] };
        q.insert(at, 0.5 * (bounds[at] + bounds[at + 1]));
        x.insert(at, 0.5 * (x_lo + x_hi));
    }
    DiscreteOrderParameter::new_unchecked(r, q, x)
}

/// Max over `r in (0, d]` of the inner minimum (Fyodorov-Sommers max-min).
pub fn optimize_cs(inst: &CsInstance, n: usize, seed: u64) -> Result<SaddleResult> {
    let d = inst.d();
    let mut outer_evals = 0usize;
    let mut neg = |r: f64| -> f64 {
        outer_evals += 1;
        match optimize_cs_inner(inst, r, n, seed) {
            Ok((_, v, _)) => -v,
            Err(_) => f64::INFINITY,
        }
    };
    let lo = 1e-6 * d;
    let (r_star, neg_best) = golden_min(&mut neg, lo, d, 1e-8 * d.max(1.0), 300);
    if !neg_best.is_finite() {
        return Err(Error::AllRInfeasible { d });
    }
    // the boundary r = d is a candidate the golden bracket may not close on
    let (r_star, _) = {
        let at_d = -neg(d);
        if at_d > -neg_best {
            (d, at_d)
        } else {
            (r_star, -neg_best)
        }
    };
    let (op_star, value, mut trace) = optimize_cs_inner(inst, r_star, n, seed)?;
    trace.outer_evals = outer_evals;
    Ok(SaddleResult {
        r_star,
        n: op_star.n(),
        op_star,
        value,
        trace,
    })
}

/// Finite-difference Hessian of the functional in `x` at fixed `(r, q)`;
/// used by the convexity checks.
pub fn inner_hessian_x(
    inst: &CsInstance,
    r: f64,
    op: &DiscreteOrderParameter,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = op.n();
    let at = |x: &[f64]| -> Result<f64> {
        let trial = DiscreteOrderParameter::new_unchecked(r, op.q().to_vec(), x.to_vec());
        eval_cs(inst, r, &trial)
    };
    let x0 = op.x().to_vec();
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let mut xpp = x0.clone();
            let mut xpm = x0.clone();
            let mut xmp = x0.clone();
            let mut xmm = x0.clone();
            xpp[i] += step;
            xpp[j] += step;
            xpm[i] += step;
            xpm[j] -= step;
            xmp[i] -= step;
            xmp[j] += step;
            xmm[i] -= step;
            xmm[j] -= step;
            let v = (at(&xpp)? - at(&xpm)? - at(&xmp)? + at(&xmm)?) / (4.0 * step * step);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Ok(hess)
}

/// Sylvester check: all leading principal minors positive.
pub fn is_positive_definite(hess: &[Vec<f64>]) -> bool {
    let n = hess.len();
    for k in 1..=n {
        let mut minor = vec![vec![0.0; k]; k];
        for i in 0..k {
            minor[i][..k].copy_from_slice(&hess[i][..k]);
        }
        if determinant(&mut minor) <= 0.0 {
            return false;
        }
    }
    true
}

fn determinant(m: &mut [Vec<f64>]) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    det
}
