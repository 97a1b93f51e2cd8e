//! The variational principle: inner infimum over discrete order parameters,
//! outer supremum over the localization radius `r`.

use crate::correlator::Correlator;
use crate::error::{Error, Result};
use crate::model::{DiscreteOrderParameter, StateSpace};
use crate::optim::{decode_op, encode_op, golden_min, nelder_mead, sanitize_op, NmOptions};
use crate::parisi::{local_parisi, EvalConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Diagnostics of one optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimTrace {
    /// Best value found by each start, in start order.
    pub start_values: Vec<f64>,
    /// Spread `max - min` over converged start values.
    pub multistart_spread: f64,
    /// Set when no start improved on the (n-1)-level value by the tolerance;
    /// the returned value is then the (n-1)-level one.
    pub no_descent: bool,
    /// Inner iteration count of the winning start.
    pub inner_iterations: usize,
    /// Number of outer r-evaluations (1 when the radius is pinned).
    pub outer_evals: usize,
}

/// Result of the saddle-point optimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleResult {
    pub r_star: f64,
    pub op_star: DiscreteOrderParameter,
    pub value: f64,
    /// Level count actually used (may be below the requested `n` when extra
    /// levels bring no descent).
    pub n: usize,
    pub trace: OptimTrace,
}

/// Plateau diagnostics of the best order parameter, re-evaluated once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerValue {
    pub op: DiscreteOrderParameter,
    pub value: f64,
    pub trace: OptimTrace,
}

fn objective(
    c: &Correlator,
    beta: f64,
    s: &StateSpace,
    cfg: &EvalConfig,
    op: &DiscreteOrderParameter,
) -> Result<f64> {
    local_parisi(c, op, beta, s, cfg).map(|v| v.value)
}

/// Minimize the local functional over `(q, x)` at fixed level count `n`,
/// by Nelder-Mead in ordering-preserving coordinates with multi-start
/// (equispaced, a refinement of the `(n-1)`-level optimum, and seeded random
/// starts). Descends the level ladder internally so that extra levels can
/// never lose against fewer.
pub fn optimize_x(
    c: &Correlator,
    r: f64,
    beta: f64,
    s: &StateSpace,
    n: usize,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<InnerValue> {
    // probe feasibility at n = 0 first; divergence is op-independent
    let rs = DiscreteOrderParameter::new_unchecked(r, vec![], vec![]);
    let rs_value = objective(c, beta, s, cfg, &rs)?;
    let mut best = InnerValue {
        op: rs,
        value: rs_value,
        trace: OptimTrace {
            start_values: vec![rs_value],
            multistart_spread: 0.0,
            no_descent: false,
            inner_iterations: 0,
            outer_evals: 0,
        },
    };
    if n == 0 {
        return Ok(best);
    }

    for level in 1..=n {
        let mut starts: Vec<Vec<f64>> = Vec::new();
        // equispaced chain
        let eq: Vec<f64> = (1..=level).map(|k| k as f64 / (level + 1) as f64).collect();
        starts.push(encode_op(&DiscreteOrderParameter::new_unchecked(
            r,
            eq.iter().map(|&v| v * r).collect(),
            eq.clone(),
        )));
        // refinement of the previous best: split the widest q-gap
        starts.push(encode_op(&refine(&best.op, level)));
        // seeded random starts
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (level as u64).wrapping_mul(0x9e37));
        for _ in 0..3 {
            let mut qs: Vec<f64> = (0..level)
                .map(|_| r * rng.gen_range(0.02..0.98))
                .collect();
            let mut xs: Vec<f64> = (0..level).map(|_| rng.gen_range(0.02..0.98)).collect();
            qs.sort_by(f64::total_cmp);
            xs.sort_by(f64::total_cmp);
            spread_apart(&mut qs, r * 1e-4);
            spread_apart(&mut xs, 1e-4);
            starts.push(encode_op(&DiscreteOrderParameter::new_unchecked(r, qs, xs)));
        }

        let opts = NmOptions {
            max_iter: 120 + 60 * level,
            tol_value: (0.1 * cfg.tol_value).max(1e-10),
            tol_x: 1e-6,
            step: 0.8,
        };
        let runs: Vec<(crate::optim::NmResult, Option<Error>)> = starts
            .par_iter()
            .map(|x0| {
                let mut first_err: Option<Error> = None;
                let mut f = |coords: &[f64]| -> f64 {
                    let op = decode_op(r, coords);
                    match objective(c, beta, s, cfg, &op) {
                        Ok(v) => v,
                        Err(e) => {
                            if first_err.is_none() {
                                first_err = Some(e);
                            }
                            f64::INFINITY
                        }
                    }
                };
                let res = nelder_mead(&mut f, x0, &opts);
                (res, first_err)
            })
            .collect();

        let finite: Vec<&crate::optim::NmResult> =
            runs.iter().filter(|(r, _)| r.value.is_finite()).map(|(r, _)| r).collect();
        if finite.is_empty() {
            let err = runs
                .into_iter()
                .find_map(|(_, e)| e)
                .unwrap_or(Error::NonfiniteValue("optimize_x"));
            return Err(err);
        }
        let start_values: Vec<f64> = runs.iter().map(|(r, _)| r.value).collect();
        let spread = finite
            .iter()
            .map(|r| r.value)
            .fold(f64::NEG_INFINITY, f64::max)
            - finite.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
        // deterministic winner: best value, lexicographic coordinates on ties
        let winner = finite
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value).then_with(|| lex_cmp(&a.x, &b.x)))
            .unwrap();

        let no_descent = winner.value >= best.value - cfg.tol_value;
        if !no_descent {
            let op = match sanitize_op(&decode_op(r, &winner.x)) {
                Ok(op) => op,
                Err(_) => decode_op(r, &winner.x),
            };
            // re-evaluate the sanitized parameter so the reported (op, value)
            // pair is self-consistent
            let value = objective(c, beta, s, cfg, &op)?.min(winner.value);
            best = InnerValue {
                op,
                value,
                trace: OptimTrace {
                    start_values,
                    multistart_spread: spread,
                    no_descent: false,
                    inner_iterations: winner.iterations,
                    outer_evals: 0,
                },
            };
        } else {
            best.trace.start_values = start_values;
            best.trace.multistart_spread = spread;
            best.trace.no_descent = true;
        }
    }
    Ok(best)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn spread_apart(vals: &mut [f64], eps: f64) {
    for i in 1..vals.len() {
        if vals[i] <= vals[i - 1] + eps {
            vals[i] = vals[i - 1] + eps;
        }
    }
}

/// Grow an order parameter to `level` jumps by splitting the widest q-gap.
fn refine(op: &DiscreteOrderParameter, level: usize) -> DiscreteOrderParameter {
    let r = op.r();
    let mut q = op.q().to_vec();
    let mut x = op.x().to_vec();
    while q.len() < level {
        // widest gap over [0, q_1], .., [q_n, r]
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
        let q_new = 0.5 * (bounds[at] + bounds[at + 1]);
        let x_lo = if at == 0 { 0.0 } else { x[at - 1] };
        let x_hi = if at == x.len() { 1.0 } else { x[at] };
        let x_new = 0.5 * (x_lo + x_hi);
        q.insert(at, q_new);
        x.insert(at, x_new);
    }
    DiscreteOrderParameter::new_unchecked(r, q, x)
}

/// Outer supremum over `r in [0, d]` wrapped around [`optimize_x`].
///
/// Hypercube-like spaces (a single attainable squared coordinate) pin `r`
/// to `d` and skip the outer loop. Otherwise the feasible interval is the
/// attainable range of `u^2` intersected with `(0, d]`, searched by golden
/// section.
pub fn optimize_saddle(
    c: &Correlator,
    beta: f64,
    s: &StateSpace,
    n: usize,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SaddleResult> {
    let d = s.effective_size();
    let (u2_lo, u2_hi) = s.u_squared_range()?;
    let pinned = (u2_hi - u2_lo) < 1e-12;

    if pinned {
        let inner = optimize_x(c, d, beta, s, n, cfg, seed)?;
        let mut trace = inner.trace;
        trace.outer_evals = 1;
        return Ok(SaddleResult {
            r_star: d,
            n: inner.op.n(),
            op_star: inner.op,
            value: inner.value,
            trace,
        });
    }

    let lo = (u2_lo + 1e-6 * d).max(1e-6 * d);
    let hi = d;
    let mut outer_evals = 0usize;
    let mut failure: Option<Error> = None;
    let mut neg_value = |r: f64| -> f64 {
        outer_evals += 1;
        match optimize_x(c, r, beta, s, n, cfg, seed) {
            Ok(v) => -v.value,
            Err(e) => {
                if !matches!(e, Error::InfimumDiverges { .. }) && failure.is_none() {
                    failure = Some(e);
                }
                f64::INFINITY
            }
        }
    };
    let tol_r = (1e-4 * d).max(1e-9);
    let (r_star, neg_best) = golden_min(&mut neg_value, lo, hi, tol_r, 200);
    if let Some(e) = failure {
        return Err(e);
    }
    if !neg_best.is_finite() {
        return Err(Error::AllRInfeasible { d });
    }
    let inner = optimize_x(c, r_star, beta, s, n, cfg, seed)?;
    let mut trace = inner.trace;
    trace.outer_evals = outer_evals;
    Ok(SaddleResult {
        r_star,
        n: inner.op.n(),
        op_star: inner.op,
        value: inner.value,
        trace,
    })
}
