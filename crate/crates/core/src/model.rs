//! State spaces, a priori measures, discrete order parameters, and the
//! boundary-condition family of the terminal value problem.

use crate::correlator::Correlator;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Particle state space per coordinate, with its a priori measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateSpace {
    /// Product space `S^N` with finite-support measure `mu = sum p_i delta_{u_i}`.
    /// The total mass need not be 1; its log shifts the value additively.
    Product { atoms: Vec<(f64, f64)> },
    /// Rotationally invariant ball of radius `L sqrt(N)` with external-field
    /// density `exp(sum h1 u_i - h2 u_i^2)`. Handled by the closed-form
    /// Crisanti-Sommers route only.
    Ball { l: f64, h1: f64, h2: f64 },
}

impl StateSpace {
    /// The discrete hypercube `{-1, +1}` with uniform probability weights.
    pub fn hypercube() -> Self {
        StateSpace::Product {
            atoms: vec![(-1.0, 0.5), (1.0, 0.5)],
        }
    }

    /// Validate atom positivity and the interior-origin condition; sorts
    /// product atoms by position and merges duplicates.
    pub fn validated(self) -> Result<StateSpace> {
        match self {
            StateSpace::Product { mut atoms } => {
                if atoms.len() < 2 {
                    return Err(Error::InvalidStateSpace(
                        "product space needs at least two atoms".into(),
                    ));
                }
                for &(u, p) in &atoms {
                    if !u.is_finite() || !p.is_finite() {
                        return Err(Error::InvalidStateSpace("non-finite atom".into()));
                    }
                    if p <= 0.0 {
                        return Err(Error::InvalidStateSpace(format!(
                            "atom weight {p} must be positive"
                        )));
                    }
                }
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
                for (u, p) in atoms {
                    match merged.last_mut() {
                        Some(last) if last.0 == u => last.1 += p,
                        _ => merged.push((u, p)),
                    }
                }
                if merged.len() < 2 {
                    return Err(Error::InvalidStateSpace(
                        "product space needs at least two distinct atoms".into(),
                    ));
                }
                let (u_min, u_max) = (merged[0].0, merged[merged.len() - 1].0);
                if !(u_min < 0.0 && u_max > 0.0) {
                    return Err(Error::InvalidStateSpace(
                        "origin must lie in the interior of the convex hull of the support".into(),
                    ));
                }
                Ok(StateSpace::Product { atoms: merged })
            }
            StateSpace::Ball { l, h1, h2 } => {
                if !(l > 0.0) || !l.is_finite() {
                    return Err(Error::InvalidStateSpace(format!("ball radius L={l}")));
                }
                if !h1.is_finite() || !(h2 >= 0.0) || !h2.is_finite() {
                    return Err(Error::InvalidStateSpace(format!(
                        "external field h1={h1}, h2={h2}"
                    )));
                }
                Ok(StateSpace::Ball { l, h1, h2 })
            }
        }
    }

    /// Effective size `d`: `max u_i^2` for product spaces, `L^2` for balls.
    pub fn effective_size(&self) -> f64 {
        match self {
            StateSpace::Product { atoms } => atoms
                .iter()
                .map(|&(u, _)| u * u)
                .fold(0.0_f64, f64::max),
            StateSpace::Ball { l, .. } => l * l,
        }
    }

    /// Range of attainable squared coordinates `[min u_i^2, max u_i^2]`
    /// (product spaces only).
    pub fn u_squared_range(&self) -> Result<(f64, f64)> {
        match self {
            StateSpace::Product { atoms } => {
                let mut lo = f64::INFINITY;
                let mut hi = 0.0_f64;
                for &(u, _) in atoms {
                    lo = lo.min(u * u);
                    hi = hi.max(u * u);
                }
                Ok((lo, hi))
            }
            StateSpace::Ball { .. } => Err(Error::BallVariantUnsupported),
        }
    }

    /// Total mass of the per-coordinate measure (product spaces only).
    pub fn total_mass(&self) -> Result<f64> {
        match self {
            StateSpace::Product { atoms } => Ok(atoms.iter().map(|&(_, p)| p).sum()),
            StateSpace::Ball { .. } => Err(Error::BallVariantUnsupported),
        }
    }

    pub fn product_atoms(&self) -> Result<&[(f64, f64)]> {
        match self {
            StateSpace::Product { atoms } => Ok(atoms),
            StateSpace::Ball { .. } => Err(Error::BallVariantUnsupported),
        }
    }
}

/// Effective size `d` of the state space.
pub fn effective_size(s: &StateSpace) -> f64 {
    s.effective_size()
}

/// Piecewise-constant replica-symmetry-breaking scheme: the chain
/// `0 < q_1 < .. < q_n < r`, `0 < x_1 < .. < x_n < 1`, with `x(q) = x_k`
/// on `[q_k, q_{k+1})`, `q_0 = x_0 = 0`, `q_{n+1} = r`, `x_{n+1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOrderParameter {
    r: f64,
    q: Vec<f64>,
    x: Vec<f64>,
}

impl DiscreteOrderParameter {
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Interior jump locations `q_1 .. q_n`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Interior values `x_1 .. x_n`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Number of interior jumps.
    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// `x(q)` as a cadlag step function (`x(r) = 1`).
    pub fn x_at(&self, q: f64) -> f64 {
        if q >= self.r {
            return 1.0;
        }
        let mut v = 0.0;
        for (qk, xk) in self.q.iter().zip(&self.x) {
            if q >= *qk {
                v = *xk;
            } else {
                break;
            }
        }
        v
    }

    /// Construct without the strict-ordering checks. Degenerate sequences
    /// (repeated q or x) are meaningful to the evaluation machinery as
    /// zero-variance or zero-jump levels; only validated parameters cross
    /// the public API boundary.
    pub fn new_unchecked(r: f64, q: Vec<f64>, x: Vec<f64>) -> Self {
        assert_eq!(q.len(), x.len());
        DiscreteOrderParameter { r, q, x }
    }
}

/// Validate an order parameter chain.
pub fn validate_order_param(r: f64, q: Vec<f64>, x: Vec<f64>) -> Result<DiscreteOrderParameter> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::OutOfRange {
            what: "r",
            value: r,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    if q.len() != x.len() {
        return Err(Error::InvalidConfig(format!(
            "q and x must have equal length ({} vs {})",
            q.len(),
            x.len()
        )));
    }
    for pair in q.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::NotStrictlyIncreasing("q"));
        }
    }
    for pair in x.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::NotStrictlyIncreasing("x"));
        }
    }
    for &qk in &q {
        if !(qk > 0.0 && qk < r) {
            return Err(Error::OutOfRange {
                what: "q",
                value: qk,
                lo: 0.0,
                hi: r,
            });
        }
    }
    for &xk in &x {
        if !(xk > 0.0 && xk < 1.0) {
            return Err(Error::OutOfRange {
                what: "x",
                value: xk,
                lo: 0.0,
                hi: 1.0,
            });
        }
    }
    Ok(DiscreteOrderParameter { r, q, x })
}

/// Boundary condition `g_lambda(y) = log sum_i p_i exp(beta u_i y + lambda u_i^2)`
/// with its exact asymptotic tails, precomputed for a fixed `(beta, lambda)`.
#[derive(Debug, Clone)]
pub struct Boundary {
    /// `(beta * u_i, lambda * u_i^2 + log p_i)` per atom: exponent is an
    /// affine function of y.
    terms: Vec<(f64, f64)>,
    /// Slope and intercept of the exact linear asymptote as y -> +inf.
    pub slope_plus: f64,
    pub intercept_plus: f64,
    /// Same as y -> -inf.
    pub slope_minus: f64,
    pub intercept_minus: f64,
}

impl Boundary {
    /// Build the boundary family member for a product state space.
    pub fn new(s: &StateSpace, beta: f64, lambda: f64) -> Result<Boundary> {
        let atoms = s.product_atoms()?;
        let terms: Vec<(f64, f64)> = atoms
            .iter()
            .map(|&(u, p)| (beta * u, lambda * u * u + p.ln()))
            .collect();
        // As y -> +inf the atoms maximizing beta*u dominate; ties combine.
        let a_plus = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        let a_minus = terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let gather = |slope: f64| -> f64 {
            let mut acc = f64::NEG_INFINITY;
            for &(a, b) in &terms {
                if a == slope {
                    acc = logaddexp(acc, b);
                }
            }
            acc
        };
        Ok(Boundary {
            intercept_plus: gather(a_plus),
            intercept_minus: gather(a_minus),
            slope_plus: a_plus,
            slope_minus: a_minus,
            terms,
        })
    }

    /// Exact overflow-safe evaluation at any y.
    pub fn eval(&self, y: f64) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for &(a, b) in &self.terms {
            m = m.max(a * y + b);
        }
        let mut s = 0.0;
        for &(a, b) in &self.terms {
            s += (a * y + b - m).exp();
        }
        m + s.ln()
    }

    /// Smallest `y* >= 0` such that for `|y| >= y*` the linear asymptotes
    /// approximate `g` within `tol`: `|g(y) - (a y + b)| <= tol`. Computed
    /// from the exponential gaps between atoms.
    pub fn tail_threshold(&self, tol: f64) -> f64 {
        let mut y_star = 0.0_f64;
        for (side_slope, side_b, sign) in [
            (self.slope_plus, self.intercept_plus, 1.0),
            (self.slope_minus, self.intercept_minus, -1.0),
        ] {
            for &(a, b) in &self.terms {
                let gap = (side_slope - a) * sign;
                if gap <= 0.0 {
                    continue; // dominant-side atom
                }
                // residual term (relative): exp(-gap*|y| + (b - side_b))
                let need = (b - side_b - tol.ln()) / gap;
                y_star = y_star.max(need);
            }
        }
        y_star.max(0.0)
    }
}

#[inline]
pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `g_lambda(y)` for a product state space (overflow-safe log-sum-exp).
pub fn boundary_g(s: &StateSpace, beta: f64, lambda: f64, y: f64) -> Result<f64> {
    Ok(Boundary::new(s, beta, lambda)?.eval(y))
}

/// Lebesgue-Stieltjes sum `sum_k x_k (theta_r^M(q_{k+1}) - theta_r^M(q_k))`
/// with `q_{n+1} = r`. Endpoint evaluation handles the jump of `theta` at
/// `2(r-q) = 1/M` exactly.
pub fn theta_stieltjes_sum(
    op: &DiscreteOrderParameter,
    c: &Correlator,
    m: f64,
) -> Result<f64> {
    let r = op.r();
    let n = op.n();
    if n == 0 {
        return Ok(0.0);
    }
    c.check_m(m)?;
    let mut acc = 0.0;
    for k in 0..n {
        let q_hi = if k + 1 < n { op.q()[k + 1] } else { r };
        let th_hi = c.eval_theta(r, m, q_hi)?;
        let th_lo = c.eval_theta(r, m, op.q()[k])?;
        acc += op.x()[k] * (th_hi - th_lo);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{validate_correlator, CorrelatorSpec};

    #[test]
    fn order_param_validation() {
        assert!(validate_order_param(1.0, vec![0.4], vec![0.6]).is_ok());
        assert!(validate_order_param(1.0, vec![], vec![]).is_ok());
        assert_eq!(
            validate_order_param(1.0, vec![0.4, 0.3], vec![0.2, 0.5]).unwrap_err(),
            Error::NotStrictlyIncreasing("q")
        );
        assert!(matches!(
            validate_order_param(1.0, vec![1.2], vec![0.5]).unwrap_err(),
            Error::OutOfRange { what: "q", .. }
        ));
        assert!(matches!(
            validate_order_param(1.0, vec![0.4], vec![1.0]).unwrap_err(),
            Error::OutOfRange { what: "x", .. }
        ));
    }

    #[test]
    fn x_at_step_function() {
        let op = validate_order_param(1.0, vec![0.3, 0.6], vec![0.2, 0.7]).unwrap();
        assert_eq!(op.x_at(0.0), 0.0);
        assert_eq!(op.x_at(0.3), 0.2);
        assert_eq!(op.x_at(0.45), 0.2);
        assert_eq!(op.x_at(0.6), 0.7);
        assert_eq!(op.x_at(1.0), 1.0);
    }

    #[test]
    fn state_space_validation_and_size() {
        let hc = StateSpace::hypercube().validated().unwrap();
        assert_eq!(hc.effective_size(), 1.0);
        let three = StateSpace::Product {
            atoms: vec![(-2.0, 0.3), (0.0, 0.4), (1.0, 0.3)],
        }
        .validated()
        .unwrap();
        assert_eq!(three.effective_size(), 4.0);
        let ball = StateSpace::Ball {
            l: 1.5,
            h1: 0.0,
            h2: 0.0,
        }
        .validated()
        .unwrap();
        assert_eq!(ball.effective_size(), 2.25);
        // origin outside hull rejected
        assert!(StateSpace::Product {
            atoms: vec![(0.5, 0.5), (1.0, 0.5)]
        }
        .validated()
        .is_err());
    }

    #[test]
    fn boundary_hypercube_closed_form() {
        let hc = StateSpace::hypercube();
        // lambda=0, y=0: log cosh(0) = 0
        assert!(boundary_g(&hc, 1.0, 0.0, 0.0).unwrap().abs() < 1e-15);
        // g_lambda(y) = lambda + log cosh(beta y) pointwise
        let beta = 0.7;
        for &y in &[-3.0, -0.4, 0.0, 1.3, 8.0] {
            for &lam in &[-1.0, 0.0, 0.7] {
                let g = boundary_g(&hc, beta, lam, y).unwrap();
                let expect = lam + (beta * y).cosh().ln();
                assert!((g - expect).abs() < 1e-12, "y={y} lam={lam}");
            }
        }
        // beta = 0: constant lambda (u^2 = 1)
        assert!((boundary_g(&hc, 0.0, 0.7, 5.0).unwrap() - 0.7).abs() < 1e-15);
        let ball = StateSpace::Ball {
            l: 1.0,
            h1: 0.0,
            h2: 0.0,
        };
        assert_eq!(
            boundary_g(&ball, 1.0, 0.0, 0.0).unwrap_err(),
            Error::BallVariantUnsupported
        );
    }

    #[test]
    fn boundary_convex_in_y_and_lambda() {
        let sp = StateSpace::Product {
            atoms: vec![(-1.0, 0.25), (0.0, 0.5), (2.0, 0.25)],
        }
        .validated()
        .unwrap();
        let beta = 0.9;
        let h = 1e-3;
        for i in -50..=50 {
            let y = i as f64 * 0.2;
            let d2y = boundary_g(&sp, beta, 0.3, y + h).unwrap()
                + boundary_g(&sp, beta, 0.3, y - h).unwrap()
                - 2.0 * boundary_g(&sp, beta, 0.3, y).unwrap();
            assert!(d2y >= -1e-9, "second y-difference {d2y} at y={y}");
            let lam = i as f64 * 0.05;
            let d2l = boundary_g(&sp, beta, lam + h, 1.0).unwrap()
                + boundary_g(&sp, beta, lam - h, 1.0).unwrap()
                - 2.0 * boundary_g(&sp, beta, lam, 1.0).unwrap();
            assert!(d2l >= -1e-9, "second lambda-difference {d2l} at lam={lam}");
        }
    }

    #[test]
    fn boundary_tail_threshold() {
        let hc = StateSpace::hypercube();
        let b = Boundary::new(&hc, 1.0, 0.3).unwrap();
        let y_star = b.tail_threshold(1e-8);
        for &y in &[y_star, y_star + 2.0, y_star + 10.0] {
            let lin = b.slope_plus * y + b.intercept_plus;
            assert!((b.eval(y) - lin).abs() <= 1e-8, "y={y}");
            let lin_m = b.slope_minus * -y + b.intercept_minus;
            assert!((b.eval(-y) - lin_m).abs() <= 1e-8);
        }
    }

    #[test]
    fn stieltjes_sum_examples() {
        let lin = validate_correlator(CorrelatorSpec::linear(1.0)).unwrap();
        let none = validate_order_param(1.0, vec![], vec![]).unwrap();
        assert_eq!(theta_stieltjes_sum(&none, &lin, 100.0).unwrap(), 0.0);

        // n=1, q1=0.5, x1=0.5, M=100: theta(1)=100, theta(0.5)=1 -> 49.5
        let op = validate_order_param(1.0, vec![0.5], vec![0.5]).unwrap();
        let v = theta_stieltjes_sum(&op, &lin, 100.0).unwrap();
        assert!((v - 49.5).abs() < 1e-12, "{v}");

        // linear in x: scaling x1 -> 0 sends the sum to 0
        let small = validate_order_param(1.0, vec![0.5], vec![1e-9]).unwrap();
        assert!(theta_stieltjes_sum(&small, &lin, 100.0).unwrap() < 1e-7);
    }

    #[test]
    fn theta_nondecreasing_and_sum_monotone_in_x() {
        let sa = validate_correlator(CorrelatorSpec::single_atom(1.0, 1.0)).unwrap();
        let r = 1.0;
        let m = 50.0;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let q = r * i as f64 / 1000.0;
            let th = sa.eval_theta(r, m, q).unwrap();
            assert!(th >= prev - 1e-12, "theta decreasing at q={q}");
            prev = th;
        }
        let lo = validate_order_param(r, vec![0.3, 0.6], vec![0.2, 0.5]).unwrap();
        let hi = validate_order_param(r, vec![0.3, 0.6], vec![0.4, 0.9]).unwrap();
        assert!(
            theta_stieltjes_sum(&hi, &sa, m).unwrap()
                >= theta_stieltjes_sum(&lo, &sa, m).unwrap()
        );
    }
}
