//! The terminal value problem for discrete order parameters, the lambda
//! infimum, and the regularized local functional.
//!
//! Two independent solvers compute `f(0,0)`:
//!
//! * [`solve_recursion`] — the exact discrete recursion. With
//!   `f_{n+1} = g_lambda`, iterate `f_k(y) = (1/x_k) log E exp(x_k
//!   f_{k+1}(y + sqrt(D_{k+1}) Z))` downward and finish with the plain
//!   expectation `f00 = E f_1(sqrt(D_1) Z)`. Per-level Gaussian variances
//!   `D_k = m_k - m_{k-1}` come from the cavity-field construction
//!   ([`level_variances`]). Each convolution is evaluated on a uniform
//!   y-grid with exact Gaussian-linear tail integrals outside it; the top
//!   level, whose variance is of order `M`, is dominated by those exact
//!   tails and would overflow any naive quadrature.
//!
//! * [`solve_pde_fd`] — a semi-implicit finite-difference march of the
//!   semilinear equation, reparameterized per constant-x interval by
//!   accumulated variance so that each interval contributes exactly `D_k`.
//!
//! [`local_parisi`] assembles `inf_lambda [f00 - lambda r] - (beta^2/2) *
//! int x d theta` on a grid of regularization levels `M` and verifies
//! numerically that the `O(M)` divergences of the two terms cancel.

use crate::correlator::Correlator;
use crate::error::{Error, Result};
use crate::model::{theta_stieltjes_sum, Boundary, DiscreteOrderParameter, StateSpace};
use crate::numerics::{ln_normal_tail, logsumexp, normal_pdf, normal_tail, GaussHermite, Grid, SQRT_2PI};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Discretization and tolerance settings for the evaluation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Increasing regularization levels; the value is reported at the last.
    pub m_grid: Vec<f64>,
    /// Half-width of the y-grid.
    pub y_halfwidth: f64,
    /// Number of y-grid points (>= 64).
    pub y_points: usize,
    /// Gauss-Hermite node count for small-variance convolutions (>= 16).
    pub quad_nodes: usize,
    /// Initial bracket for the lambda search.
    pub lambda_bracket: (f64, f64),
    /// Lambda bracket width at which the golden-section search stops.
    pub tol_lambda: f64,
    /// Value tolerance: plateau checks and search stopping.
    pub tol_value: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            m_grid: vec![1e2, 1e3, 1e4],
            y_halfwidth: 64.0,
            y_points: 4097,
            quad_nodes: 64,
            lambda_bracket: (-4.0, 4.0),
            tol_lambda: 1e-6,
            tol_value: 1e-4,
        }
    }
}

impl EvalConfig {
    /// Check structural invariants and that every M clears the correlator's
    /// admissibility threshold.
    pub fn validate(&self, c: &Correlator) -> Result<()> {
        if self.y_points < 64 {
            return Err(Error::InvalidConfig(format!(
                "y_points {} < 64",
                self.y_points
            )));
        }
        if self.quad_nodes < 16 {
            return Err(Error::InvalidConfig(format!(
                "quad_nodes {} < 16",
                self.quad_nodes
            )));
        }
        if !(self.y_halfwidth > 0.0) {
            return Err(Error::InvalidConfig("y_halfwidth must be positive".into()));
        }
        if self.m_grid.is_empty() {
            return Err(Error::InvalidConfig("m_grid is empty".into()));
        }
        for w in self.m_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig("m_grid must be increasing".into()));
            }
        }
        if !(self.lambda_bracket.0 < self.lambda_bracket.1) {
            return Err(Error::InvalidConfig("lambda_bracket must be ordered".into()));
        }
        if !(self.tol_lambda > 0.0 && self.tol_value > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        for &m in &self.m_grid {
            c.check_m(m)?;
        }
        Ok(())
    }
}

/// Result of one recursion or PDE solve.
#[derive(Debug, Clone)]
pub struct RecursionResult {
    /// The value f(0,0).
    pub f00: f64,
    pub lambda: f64,
    pub m: f64,
    /// Per-level grid profiles f_n .. f_1, kept only on request.
    pub profiles: Option<Vec<Vec<f64>>>,
}

/// Cavity variance increments `D_k = m_k - m_{k-1}`, `k = 1..n+1`, with
/// `m_k = D'^M(2(r - q_k))`, `m_0 = 0` and `m_{n+1} = M`.
pub fn level_variances(c: &Correlator, op: &DiscreteOrderParameter, m: f64) -> Result<Vec<f64>> {
    c.check_m(m)?;
    let r = op.r();
    let mut levels = Vec::with_capacity(op.n() + 1);
    let mut prev = 0.0;
    for &qk in op.q() {
        let mk = c.eval_d_prime_m(2.0 * (r - qk), m)?;
        let delta = mk - prev;
        if delta < -1e-9 {
            return Err(Error::MTooSmall {
                m,
                threshold: c.m_threshold(),
            });
        }
        levels.push(delta.max(0.0));
        prev = mk;
    }
    let top = m - prev;
    if top < -1e-9 {
        return Err(Error::MTooSmall {
            m,
            threshold: c.m_threshold(),
        });
    }
    levels.push(top.max(0.0));
    Ok(levels)
}

/// A level function on the y-grid together with its exact linear asymptotes.
#[derive(Debug, Clone)]
struct LevelFn {
    values: Vec<f64>,
    slope_plus: f64,
    intercept_plus: f64,
    slope_minus: f64,
    intercept_minus: f64,
}

impl LevelFn {
    fn from_boundary(grid: &Grid, b: &Boundary) -> Self {
        LevelFn {
            values: grid.nodes().map(|y| b.eval(y)).collect(),
            slope_plus: b.slope_plus,
            intercept_plus: b.intercept_plus,
            slope_minus: b.slope_minus,
            intercept_minus: b.intercept_minus,
        }
    }

    /// Evaluate anywhere: interpolation inside the grid, asymptote outside.
    fn eval(&self, grid: &Grid, y: f64) -> f64 {
        if y > grid.half_width {
            self.slope_plus * y + self.intercept_plus
        } else if y < -grid.half_width {
            self.slope_minus * y + self.intercept_minus
        } else {
            grid.interp(&self.values, y)
        }
    }
}

/// One backward level: `out(y) = (1/x) log E[exp(x f(y + sigma Z))]`.
///
/// Inside the grid the integral is a trapezoid sum against the tilted
/// Gaussian kernel (the reference slope `s0` is pulled out analytically to
/// keep the summand in range); the two half-lines beyond the grid use the
/// exact Gaussian-linear integrals built from the asymptotes.
fn apply_level(grid: &Grid, f: &LevelFn, x: f64, var: f64, gh: &GaussHermite) -> LevelFn {
    debug_assert!(x > 0.0);
    let (a_p, b_p) = (f.slope_plus, f.intercept_plus);
    let (a_m, b_m) = (f.slope_minus, f.intercept_minus);
    let out_tails = |lf: &mut LevelFn| {
        lf.slope_plus = a_p;
        lf.intercept_plus = b_p + 0.5 * x * a_p * a_p * var;
        lf.slope_minus = a_m;
        lf.intercept_minus = b_m + 0.5 * x * a_m * a_m * var;
    };

    if var == 0.0 {
        // zero-variance level: (1/x) log exp(x f) = f exactly
        let mut out = f.clone();
        out_tails(&mut out);
        return out;
    }
    let sigma = var.sqrt();
    let h = grid.h;
    let w = grid.half_width;

    let values: Vec<f64> = if sigma < 3.0 * h {
        // kernel narrower than the grid can resolve: z-space Gauss-Hermite
        // with interpolated integrand
        (0..grid.points)
            .into_par_iter()
            .map(|i| {
                let y = grid.node(i);
                let mut terms: Vec<f64> = Vec::with_capacity(gh.nodes.len());
                for (&z, &wt) in gh.nodes.iter().zip(&gh.weights) {
                    terms.push(wt.ln() + x * f.eval(grid, y + sigma * z));
                }
                logsumexp(&terms) / x
            })
            .collect()
    } else {
        // shared tilted kernel: u_j - (y_i + x s0 sigma^2) depends only on j - i
        let s0 = 0.5 * (a_p + a_m);
        let tilt = x * s0 * var;
        let rho_max = (0..grid.points)
            .map(|j| f.values[j] - s0 * grid.node(j))
            .fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = (0..grid.points)
            .map(|j| (x * (f.values[j] - s0 * grid.node(j) - rho_max)).exp())
            .collect();
        let band = (((12.0 * sigma + tilt.abs()) / h).ceil() as usize).min(grid.points - 1);
        let kernel: Vec<f64> = (-(band as isize)..=band as isize)
            .map(|d| {
                let u = d as f64 * h - tilt;
                (-0.5 * (u / sigma) * (u / sigma)).exp() / (sigma * SQRT_2PI)
            })
            .collect();
        let t_p = x * a_p * sigma;
        let t_m = x * a_m * sigma;
        (0..grid.points)
            .into_par_iter()
            .map(|i| {
                let y = grid.node(i);
                let lo = i.saturating_sub(band);
                let hi = (i + band).min(grid.points - 1);
                let mut core = 0.0;
                for j in lo..=hi {
                    core += kernel[j + band - i] * e[j];
                }
                // trapezoid with Euler-Maclaurin endpoint correction where the
                // integrand is still alive at the grid edge (the kernel decays
                // to ~1e-31 at an interior band cut, so only edges matter)
                core -= 0.5 * (kernel[lo + band - i] * e[lo] + kernel[hi + band - i] * e[hi]);
                let mut core_int = core * h;
                let fp_at = |j: usize, slope: f64| -> f64 {
                    let delta = (j as f64 - i as f64) * h - tilt;
                    let k = kernel[j + band - i];
                    k * e[j] * (x * (slope - s0) - delta / (sigma * sigma))
                };
                let mut corr = 0.0;
                if hi == grid.points - 1 {
                    corr += fp_at(hi, a_p);
                }
                if lo == 0 {
                    corr -= fp_at(lo, a_m);
                }
                core_int -= h * h / 12.0 * corr;
                let ln_core = if core_int > 0.0 {
                    core_int.ln()
                        + x * (s0 * y + rho_max)
                        + 0.5 * (x * s0 * sigma) * (x * s0 * sigma)
                } else {
                    f64::NEG_INFINITY
                };
                let ln_right = x * (a_p * y + b_p)
                    + 0.5 * t_p * t_p
                    + ln_normal_tail((w - y) / sigma - t_p);
                let ln_left = x * (a_m * y + b_m)
                    + 0.5 * t_m * t_m
                    + ln_normal_tail((w + y) / sigma + t_m);
                logsumexp(&[ln_core, ln_right, ln_left]) / x
            })
            .collect()
    };
    let mut out = LevelFn {
        values,
        slope_plus: 0.0,
        intercept_plus: 0.0,
        slope_minus: 0.0,
        intercept_minus: 0.0,
    };
    out_tails(&mut out);
    out
}

/// Plain Gaussian mean `E f(sqrt(var) Z)` with exact linear-tail moments.
fn gaussian_mean(grid: &Grid, f: &LevelFn, var: f64, gh: &GaussHermite) -> f64 {
    if var == 0.0 {
        return f.eval(grid, 0.0);
    }
    let sigma = var.sqrt();
    let h = grid.h;
    let w = grid.half_width;
    if sigma < 3.0 * h {
        return gh.expect(|z| f.eval(grid, sigma * z));
    }
    let band = ((12.0 * sigma / h).ceil() as usize).min(grid.points - 1);
    let mid = (grid.points - 1) / 2;
    let lo = mid.saturating_sub(band);
    let hi = (mid + band).min(grid.points - 1);
    let dens = |u: f64| normal_pdf(u / sigma) / sigma;
    let mut core = 0.0;
    for j in lo..=hi {
        let wt = if j == lo || j == hi { 0.5 } else { 1.0 };
        core += wt * dens(grid.node(j)) * f.values[j];
    }
    core *= h;
    // Euler-Maclaurin endpoint correction at live grid edges
    let fp = |u: f64, slope: f64, v: f64| dens(u) * (slope - u / (sigma * sigma) * v);
    let mut corr = 0.0;
    if hi == grid.points - 1 {
        corr += fp(w, f.slope_plus, f.values[hi]);
    }
    if lo == 0 {
        corr -= fp(-w, f.slope_minus, f.values[lo]);
    }
    core -= h * h / 12.0 * corr;
    // int_{W}^{inf} N(u;0,s^2)(a u + b) du = b Phibar(W/s) + a s phi(W/s)
    let c = w / sigma;
    let right = f.intercept_plus * normal_tail(c) + f.slope_plus * sigma * normal_pdf(c);
    let left = f.intercept_minus * normal_tail(c) - f.slope_minus * sigma * normal_pdf(c);
    core + right + left
}

/// Grid half-width needed so that the boundary's nonlinear core and every
/// interior convolution stay clear of the tail-model region.
fn required_halfwidth(b: &Boundary, variances: &[f64]) -> f64 {
    let y_star = b.tail_threshold(1e-13);
    let a_max = b.slope_plus.abs().max(b.slope_minus.abs());
    // interior levels: everything except the top one
    let mut pad = 0.0;
    for &v in &variances[..variances.len().saturating_sub(1)] {
        pad += 10.0 * v.sqrt() + a_max * v;
    }
    y_star + pad + 2.0
}

/// Solve the recursion; optionally retain per-level grid profiles.
pub fn solve_recursion_with(
    c: &Correlator,
    op: &DiscreteOrderParameter,
    m: f64,
    beta: f64,
    lambda: f64,
    s: &StateSpace,
    cfg: &EvalConfig,
    keep_profiles: bool,
) -> Result<RecursionResult> {
    let variances = level_variances(c, op, m)?;
    let boundary = Boundary::new(s, beta, lambda)?;
    let needed = required_halfwidth(&boundary, &variances);
    if cfg.y_halfwidth < needed {
        return Err(Error::GridTooNarrow {
            needed,
            have: cfg.y_halfwidth,
        });
    }
    let grid = Grid::new(cfg.y_halfwidth, cfg.y_points);
    let gh = GaussHermite::new(cfg.quad_nodes);

    let n = op.n();
    let mut f = LevelFn::from_boundary(&grid, &boundary);
    let mut profiles = if keep_profiles { Some(Vec::new()) } else { None };
    // levels k = n .. 1 consume variances D_{k+1} .. D_2
    for k in (1..=n).rev() {
        f = apply_level(&grid, &f, op.x()[k - 1], variances[k], &gh);
        if let Some(p) = profiles.as_mut() {
            p.push(f.values.clone());
        }
    }
    let f00 = gaussian_mean(&grid, &f, variances[0], &gh);
    if !f00.is_finite() {
        return Err(Error::NonfiniteValue("solve_recursion"));
    }
    Ok(RecursionResult {
        f00,
        lambda,
        m,
        profiles,
    })
}

/// Solve the terminal value problem by the discrete recursion.
pub fn solve_recursion(
    c: &Correlator,
    op: &DiscreteOrderParameter,
    m: f64,
    beta: f64,
    lambda: f64,
    s: &StateSpace,
    cfg: &EvalConfig,
) -> Result<RecursionResult> {
    solve_recursion_with(c, op, m, beta, lambda, s, cfg, false)
}

/// Independent cross-check: march the semilinear terminal value problem
/// backward with an implicit-explicit (Crank-Nicolson diffusion, Heun
/// source) scheme. Each constant-x interval is reparameterized by its
/// accumulated cavity variance `D_k`, which also absorbs the jump of the
/// regularized derivative exactly.
pub fn solve_pde_fd(
    c: &Correlator,
    op: &DiscreteOrderParameter,
    m: f64,
    beta: f64,
    lambda: f64,
    s: &StateSpace,
    _cfg: &EvalConfig,
) -> Result<f64> {
    let variances = level_variances(c, op, m)?;
    let boundary = Boundary::new(s, beta, lambda)?;
    let total_var: f64 = variances.iter().sum();
    let y_star = boundary.tail_threshold(1e-13);
    let half_width = y_star + 12.0 * total_var.sqrt() + 2.0;
    let h = 0.02_f64;
    let points = (2.0 * half_width / h).ceil() as usize + 1;
    let grid = Grid::new(half_width, points);
    let h = grid.h;

    let a_p = boundary.slope_plus;
    let a_m = boundary.slope_minus;
    let mut u: Vec<f64> = grid.nodes().map(|y| boundary.eval(y)).collect();
    let mut b_p = boundary.intercept_plus;
    let mut b_m = boundary.intercept_minus;

    let npts = grid.points;
    let n = op.n();
    // intervals top-down: exponent x_k, duration D_{k+1} (x_0 = 0)
    for k in (0..=n).rev() {
        let x = if k == 0 { 0.0 } else { op.x()[k - 1] };
        let duration = variances[k];
        if duration == 0.0 {
            continue;
        }
        let dt = 0.01_f64.min(duration);
        let a_abs = a_p.abs().max(a_m.abs());
        let limit = if x > 0.0 { h / (x * a_abs.max(1e-9)) } else { f64::INFINITY };
        if dt > limit {
            return Err(Error::CflViolation { dt, limit });
        }
        let steps = (duration / dt).ceil() as usize;
        let dt = duration / steps as f64;
        let r_coef = dt / (4.0 * h * h); // CN with diffusion coefficient 1/2

        // constant tridiagonal factors (Thomas algorithm preprocessing)
        let diag = 1.0 + 2.0 * r_coef;
        let off = -r_coef;
        let mut cp = vec![0.0_f64; npts];
        cp[1] = off / diag;
        for i in 2..npts - 1 {
            cp[i] = off / (diag - off * cp[i - 1]);
        }

        let source = |v: &[f64], out: &mut [f64]| {
            for i in 1..npts - 1 {
                let dy = (v[i + 1] - v[i - 1]) / (2.0 * h);
                out[i] = 0.5 * x * dy * dy;
            }
        };
        let mut s0 = vec![0.0_f64; npts];
        let mut s1 = vec![0.0_f64; npts];
        let mut rhs = vec![0.0_f64; npts];
        let mut star = vec![0.0_f64; npts];

        let solve_tridiag = |rhs: &mut [f64], cp: &[f64], star: &mut [f64], bl: f64, br: f64| {
            // Dirichlet values bl, br at the ends
            star[0] = bl;
            let mut prev = bl;
            let mut dp = vec![0.0_f64; rhs.len()];
            dp[1] = (rhs[1] - off * prev) / diag;
            for i in 2..rhs.len() - 1 {
                dp[i] = (rhs[i] - off * dp[i - 1]) / (diag - off * cp[i - 1]);
            }
            star[rhs.len() - 1] = br;
            prev = br;
            for i in (1..rhs.len() - 1).rev() {
                star[i] = dp[i] - cp[i] * prev;
                prev = star[i];
            }
        };

        for step in 0..steps {
            let t_next = (step + 1) as f64 * dt;
            let bl_next = a_m * -half_width + b_m + 0.5 * x * a_m * a_m * t_next;
            let br_next = a_p * half_width + b_p + 0.5 * x * a_p * a_p * t_next;
            source(&u, &mut s0);
            // predictor
            for i in 1..npts - 1 {
                rhs[i] = u[i] + r_coef * (u[i + 1] - 2.0 * u[i] + u[i - 1]) + dt * s0[i];
            }
            solve_tridiag(&mut rhs, &cp, &mut star, bl_next, br_next);
            // corrector with averaged source
            source(&star, &mut s1);
            for i in 1..npts - 1 {
                rhs[i] = u[i]
                    + r_coef * (u[i + 1] - 2.0 * u[i] + u[i - 1])
                    + 0.5 * dt * (s0[i] + s1[i]);
            }
            solve_tridiag(&mut rhs, &cp, &mut star, bl_next, br_next);
            u.copy_from_slice(&star);
        }
        b_p += 0.5 * x * a_p * a_p * duration;
        b_m += 0.5 * x * a_m * a_m * duration;
    }
    let mid = (npts - 1) / 2;
    let f00 = u[mid];
    if !f00.is_finite() {
        return Err(Error::NonfiniteValue("solve_pde_fd"));
    }
    Ok(f00)
}

/// Result of the lambda infimum.
#[derive(Debug, Clone, Copy)]
pub struct LambdaInfimum {
    pub lambda_star: f64,
    pub value: f64,
}

/// Minimize the convex map `lambda -> f00(lambda) - lambda r` by golden
/// section, expanding the bracket geometrically (up to 2^10 of its initial
/// width) while an edge keeps improving by more than `tol_value`.
///
/// `r` strictly outside the attainable range of squared coordinates makes
/// the map affine-decreasing in one direction; that is detected up front
/// and reported as divergence.
pub fn lambda_infimum(
    c: &Correlator,
    op: &DiscreteOrderParameter,
    m: f64,
    beta: f64,
    s: &StateSpace,
    cfg: &EvalConfig,
) -> Result<LambdaInfimum> {
    let r = op.r();
    let (u2_lo, u2_hi) = s.u_squared_range()?;
    if r < u2_lo - 1e-9 || r > u2_hi + 1e-9 {
        return Err(Error::InfimumDiverges {
            r,
            lo: u2_lo,
            hi: u2_hi,
        });
    }
    let phi = |lambda: f64| -> Result<f64> {
        Ok(solve_recursion(c, op, m, beta, lambda, s, cfg)?.f00 - lambda * r)
    };

    let (mut lo, mut hi) = cfg.lambda_bracket;
    let mut f_lo = phi(lo)?;
    let mut f_hi = phi(hi)?;
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = phi(mid)?;
    // convexity makes equality at three spanning points mean affine, and
    // equal ends mean flat: any lambda attains the infimum (hypercube case)
    let scale = 1.0 + f_mid.abs();
    if (f_lo - f_mid).abs() < 1e-12 * scale && (f_hi - f_mid).abs() < 1e-12 * scale {
        return Ok(LambdaInfimum {
            lambda_star: mid,
            value: f_mid,
        });
    }
    let initial_width = hi - lo;
    let mut expansions = 0usize;
    while f_mid > f_lo.min(f_hi) + 1e-15 {
        if expansions >= 10 || (hi - lo) > 1024.0 * initial_width {
            return Err(Error::InfimumDiverges {
                r,
                lo: u2_lo,
                hi: u2_hi,
            });
        }
        expansions += 1;
        let width = hi - lo;
        if f_lo < f_hi {
            let new_lo = lo - width;
            match phi(new_lo) {
                Ok(v) if f_lo - v > cfg.tol_value => {
                    mid = lo;
                    f_mid = f_lo;
                    lo = new_lo;
                    f_lo = v;
                }
                Ok(v) => {
                    // asymptote: edge stopped improving meaningfully
                    if v < f_lo {
                        lo = new_lo;
                        f_lo = v;
                    }
                    break;
                }
                Err(Error::GridTooNarrow { .. }) => break, // unreachable lambda; keep best bracket
                Err(e) => return Err(e),
            }
        } else {
            let new_hi = hi + width;
            match phi(new_hi) {
                Ok(v) if f_hi - v > cfg.tol_value => {
                    mid = hi;
                    f_mid = f_hi;
                    hi = new_hi;
                    f_hi = v;
                }
                Ok(v) => {
                    if v < f_hi {
                        hi = new_hi;
                        f_hi = v;
                    }
                    break;
                }
                Err(Error::GridTooNarrow { .. }) => break,
                Err(e) => return Err(e),
            }
        }
    }
    let _ = (f_mid, mid);

    // golden section on [lo, hi]
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut a = lo;
    let mut b = hi;
    let mut c1 = b - inv_phi * (b - a);
    let mut c2 = a + inv_phi * (b - a);
    let mut f1 = phi(c1)?;
    let mut f2 = phi(c2)?;
    while b - a > cfg.tol_lambda {
        if f1 <= f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - inv_phi * (b - a);
            f1 = phi(c1)?;
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + inv_phi * (b - a);
            f2 = phi(c2)?;
        }
    }
    let (lambda_star, value) = {
        let mut best = (0.5 * (a + b), phi(0.5 * (a + b))?);
        for (l, v) in [(c1, f1), (c2, f2), (lo, f_lo), (hi, f_hi)] {
            if v < best.1 {
                best = (l, v);
            }
        }
        best
    };
    Ok(LambdaInfimum { lambda_star, value })
}

/// Per-M diagnostics of [`local_parisi`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalValue {
    /// Value at the largest M of the grid.
    pub value: f64,
    pub lambda_star: f64,
    /// `(M, value(M))` along the grid.
    pub per_m: Vec<(f64, f64)>,
    /// `max |value(M_i) - value(M_last)|` over the top half of the grid.
    pub plateau_dev: f64,
}

/// The local functional at a discrete order parameter:
/// `value(M) = inf_lambda [f00 - lambda r] - (beta^2/2) * sum_k x_k
/// (theta(q_{k+1}) - theta(q_k))`, evaluated along `m_grid`. The unbounded
/// in `M` parts of the two terms cancel; the plateau deviation measures how
/// completely.
pub fn local_parisi(
    c: &Correlator,
    op: &DiscreteOrderParameter,
    beta: f64,
    s: &StateSpace,
    cfg: &EvalConfig,
) -> Result<LocalValue> {
    cfg.validate(c)?;
    let mut per_m = Vec::with_capacity(cfg.m_grid.len());
    let mut lambda_star = 0.0;
    for &m in &cfg.m_grid {
        let inf = lambda_infimum(c, op, m, beta, s, cfg)?;
        let theta = theta_stieltjes_sum(op, c, m)?;
        let v = inf.value - 0.5 * beta * beta * theta;
        if !v.is_finite() {
            return Err(Error::NonfiniteValue("local_parisi"));
        }
        per_m.push((m, v));
        lambda_star = inf.lambda_star;
    }
    let last = per_m.last().unwrap().1;
    let top_half = per_m.len() / 2;
    let plateau_dev = per_m[top_half.min(per_m.len() - 1)..]
        .iter()
        .map(|&(_, v)| (v - last).abs())
        .fold(0.0_f64, f64::max);
    if plateau_dev > 10.0 * cfg.tol_value {
        return Err(Error::PlateauNotReached {
            dev: plateau_dev,
            limit: 10.0 * cfg.tol_value,
        });
    }
    Ok(LocalValue {
        value: last,
        lambda_star,
        per_m,
        plateau_dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{validate_correlator, CorrelatorSpec};
    use crate::model::validate_order_param;

    fn linear() -> Correlator {
        validate_correlator(CorrelatorSpec::linear(1.0)).unwrap()
    }

    fn single_atom() -> Correlator {
        validate_correlator(CorrelatorSpec::single_atom(1.0, 1.0)).unwrap()
    }

    fn hypercube() -> StateSpace {
        StateSpace::hypercube().validated().unwrap()
    }

    // Frozen from a 30-digit quadrature of E[log cosh(beta Z)].
    const ELOGCOSH_1: f64 = 0.3745672074914379741;

    #[test]
    fn level_variance_examples() {
        let lin = linear();
        let op = validate_order_param(1.0, vec![0.5], vec![0.5]).unwrap();
        let d = level_variances(&lin, &op, 100.0).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert!((d[1] - 99.0).abs() < 1e-12);

        let sa = single_atom();
        let rs = validate_order_param(1.0, vec![], vec![]).unwrap();
        let d = level_variances(&sa, &rs, 100.0).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0] - 100.0).abs() < 1e-12);

        // degenerate interior level contributes a zero increment
        let lin_op2 =
            DiscreteOrderParameter::new_unchecked(1.0, vec![0.3, 0.5], vec![0.2, 0.6]);
        let d = level_variances(&lin, &lin_op2, 100.0).unwrap();
        assert!((d[1] - 0.0).abs() < 1e-12, "interior increment {d:?}");
    }

    #[test]
    fn beta_zero_recursion_is_boundary_constant() {
        let lin = linear();
        let cfg = EvalConfig::default();
        let hc = hypercube();
        for n in [0usize, 1] {
            let op = if n == 0 {
                validate_order_param(1.0, vec![], vec![]).unwrap()
            } else {
                validate_order_param(1.0, vec![0.4], vec![0.3]).unwrap()
            };
            let res = solve_recursion(&lin, &op, 1e3, 0.0, 0.0, &hc, &cfg).unwrap();
            assert!(res.f00.abs() < 1e-12, "n={n}: f00 = {}", res.f00);
            // with lambda: constant shift by lambda (u^2 = 1)
            let res = solve_recursion(&lin, &op, 1e3, 0.0, 0.7, &hc, &cfg).unwrap();
            assert!((res.f00 - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_shift_identity_on_hypercube() {
        let sa = single_atom();
        let cfg = EvalConfig::default();
        let hc = hypercube();
        let op = validate_order_param(1.0, vec![0.4], vec![0.6]).unwrap();
        let base = solve_recursion(&sa, &op, 100.0, 1.0, 0.0, &hc, &cfg)
            .unwrap()
            .f00;
        for lam in [-1.0, 0.5, 2.0] {
            let shifted = solve_recursion(&sa, &op, 100.0, 1.0, lam, &hc, &cfg)
                .unwrap()
                .f00;
            assert!(
                (shifted - (base + lam)).abs() < 1e-10,
                "lambda {lam}: {shifted} vs {}",
                base + lam
            );
        }
    }

    #[test]
    fn recursion_value_independent_of_q1_for_linear_d() {
        // linear D has D' = 1 everywhere, so the variance split does not see q1
        let lin = linear();
        let cfg = EvalConfig::default();
        let hc = hypercube();
        let m = 1e3;
        let mut vals = Vec::new();
        for q1 in [0.2, 0.5, 0.8] {
            let op = validate_order_param(1.0, vec![q1], vec![0.7]).unwrap();
            vals.push(solve_recursion(&lin, &op, m, 1.0, 0.0, &hc, &cfg).unwrap().f00);
        }
        for v in &vals {
            assert!((v - vals[0]).abs() < 1e-6, "{vals:?}");
        }
    }

    #[test]
    fn rs_value_matches_direct_gaussian_mean() {
        // n=0: f00 = E[g_lambda(sqrt(M) Z)]; for the hypercube this is
        // E log cosh(beta sqrt(M) Z) + lambda, computed here by fine Simpson.
        let sa = single_atom();
        let cfg = EvalConfig::default();
        let hc = hypercube();
        let m = 100.0;
        let beta = 1.0;
        let op = validate_order_param(1.0, vec![], vec![]).unwrap();
        let got = solve_recursion(&sa, &op, m, beta, 0.3, &hc, &cfg).unwrap().f00;

        let sig = m.sqrt();
        let f = |z: f64| (beta * sig * z).cosh().ln() * normal_pdf(z);
        let mut oracle = 0.0;
        let (a, b, steps) = (0.0, 12.0, 24_000);
        let h = (b - a) / steps as f64;
        for i in 0..steps {
            let z0 = a + i as f64 * h;
            oracle += h / 6.0 * (f(z0) + 4.0 * f(z0 + 0.5 * h) + f(z0 + h));
        }
        oracle *= 2.0; // symmetric integrand
        assert!(
            (got - (oracle + 0.3)).abs() < 1e-7,
            "got {got}, oracle {}",
            oracle + 0.3
        );
    }

    #[test]
    fn local_parisi_beta_zero_and_linear_oracle() {
        let lin = linear();
        let hc = hypercube();
        let cfg = EvalConfig {
            m_grid: vec![1e3, 1e4],
            ..EvalConfig::default()
        };
        let op = validate_order_param(1.0, vec![0.5], vec![0.5]).unwrap();
        let v0 = local_parisi(&lin, &op, 0.0, &hc, &cfg).unwrap();
        assert!(v0.value.abs() < 1e-12, "beta=0 value {}", v0.value);

        // near the x -> 1 end the value approaches E log cosh(beta Z)
        let op = validate_order_param(1.0, vec![0.5], vec![0.999]).unwrap();
        let v = local_parisi(&lin, &op, 1.0, &hc, &cfg).unwrap();
        assert!(
            (v.value - ELOGCOSH_1).abs() < 1e-2,
            "value {} vs oracle {ELOGCOSH_1}",
            v.value
        );
        // M-plateau: the O(M) terms cancel
        assert!(
            v.plateau_dev <= 5e-3,
            "plateau deviation {}",
            v.plateau_dev
        );
    }

    #[test]
    fn refinement_invariance_zero_jump_level() {
        // a repeated x splits one convolution in two that compose back (the
        // step function x(q) is unchanged when the insert comes after q_1)
        let sa = single_atom();
        let hc = hypercube();
        let cfg = EvalConfig::default();
        let m = 1e3;
        let base = DiscreteOrderParameter::new_unchecked(1.0, vec![0.4], vec![0.6]);
        let refined =
            DiscreteOrderParameter::new_unchecked(1.0, vec![0.4, 0.7], vec![0.6, 0.6]);
        let v0 = solve_recursion(&sa, &base, m, 1.0, 0.1, &hc, &cfg).unwrap().f00;
        let v1 = solve_recursion(&sa, &refined, m, 1.0, 0.1, &hc, &cfg)
            .unwrap()
            .f00;
        assert!((v0 - v1).abs() < 1e-8, "{v0} vs {v1}");

        // a repeated q makes the extra level carry zero width: it drops out
        let base = DiscreteOrderParameter::new_unchecked(1.0, vec![0.4], vec![0.6]);
        let degenerate =
            DiscreteOrderParameter::new_unchecked(1.0, vec![0.4, 0.4], vec![0.3, 0.6]);
        let v0 = local_parisi(&sa, &base, 1.0, &hc, &cfg).unwrap().value;
        let v1 = local_parisi(&sa, &degenerate, 1.0, &hc, &cfg).unwrap().value;
        assert!((v0 - v1).abs() < 1e-8, "{v0} vs {v1}");
    }

    #[test]
    fn recursion_profiles_convex_with_bounded_slopes() {
        let sa = single_atom();
        let hc = hypercube();
        let cfg = EvalConfig::default();
        let beta = 1.0;
        let op = validate_order_param(1.0, vec![0.3, 0.6], vec![0.25, 0.7]).unwrap();
        let res =
            solve_recursion_with(&sa, &op, 100.0, beta, 0.2, &hc, &cfg, true).unwrap();
        let grid = Grid::new(cfg.y_halfwidth, cfg.y_points);
        // check the working interior; the outermost edge values only feed
        // tail-dominated integrals
        let margin = (0.05 * grid.points as f64) as usize;
        for prof in res.profiles.unwrap() {
            for i in margin..prof.len() - margin {
                let d2 = prof[i + 1] - 2.0 * prof[i] + prof[i - 1];
                assert!(d2 >= -1e-8, "second difference {d2} at {i}");
                let slope = (prof[i + 1] - prof[i - 1]) / (2.0 * grid.h);
                assert!(
                    slope >= -beta - 1e-8 && slope <= beta + 1e-8,
                    "slope {slope}"
                );
            }
        }
    }

    #[test]
    fn fd_agrees_with_recursion() {
        let sa = single_atom();
        let hc = hypercube();
        let cfg = EvalConfig::default();
        let op = validate_order_param(1.0, vec![0.5], vec![0.4]).unwrap();
        let rec = solve_recursion(&sa, &op, 100.0, 1.0, 0.0, &hc, &cfg)
            .unwrap()
            .f00;
        let fd = solve_pde_fd(&sa, &op, 100.0, 1.0, 0.0, &hc, &cfg).unwrap();
        assert!((rec - fd).abs() < 5e-3, "recursion {rec} vs fd {fd}");

        // lambda shift holds for the FD solver too
        let fd_shift = solve_pde_fd(&sa, &op, 100.0, 1.0, 1.0, &hc, &cfg).unwrap();
        assert!((fd_shift - (fd + 1.0)).abs() < 1e-8);

        // beta = 0: both exactly zero
        let fd0 = solve_pde_fd(&sa, &op, 100.0, 0.0, 0.0, &hc, &cfg).unwrap();
        assert!(fd0.abs() < 1e-10);
    }

    #[test]
    fn lambda_infimum_hypercube_degeneracy() {
        let sa = single_atom();
        let hc = hypercube();
        let cfg = EvalConfig::default();
        // r = 1: value independent of lambda; infimum equals f00(0)
        let op = validate_order_param(1.0, vec![0.4], vec![0.6]).unwrap();
        let inf = lambda_infimum(&sa, &op, 100.0, 1.0, &hc, &cfg).unwrap();
        let f0 = solve_recursion(&sa, &op, 100.0, 1.0, 0.0, &hc, &cfg)
            .unwrap()
            .f00;
        assert!((inf.value - f0).abs() < 1e-9, "{} vs {f0}", inf.value);

        // r = 0.5 < min u^2 = 1: diverges
        let op_bad = validate_order_param(0.5, vec![0.2], vec![0.6]).unwrap();
        assert!(matches!(
            lambda_infimum(&sa, &op_bad, 100.0, 1.0, &hc, &cfg).unwrap_err(),
            Error::InfimumDiverges { .. }
        ));
    }

    #[test]
    fn lambda_infimum_three_atom_interior_minimum() {
        // u in {-1, 0, 1}: any r in (0,1) is attainable; verify the golden
        // search against a brute-force lambda scan
        let sa = single_atom();
        let sp = StateSpace::Product {
            atoms: vec![(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)],
        }
        .validated()
        .unwrap();
        let cfg = EvalConfig::default();
        let op = validate_order_param(0.5, vec![], vec![]).unwrap();
        let m = 50.0;
        let inf = lambda_infimum(&sa, &op, m, 1.0, &sp, &cfg).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            let lam = -4.0 + 8.0 * i as f64 / 400.0;
            let v = solve_recursion(&sa, &op, m, 1.0, lam, &sp, &cfg).unwrap().f00
                - lam * 0.5;
            best = best.min(v);
        }
        assert!(
            (inf.value - best).abs() < 1e-5,
            "golden {} vs scan {best}",
            inf.value
        );
    }
}
