//! Admissible correlators for Gaussian fields with isotropic increments.
//!
//! An admissible increment-variance function is represented by a finite
//! exponential mixture plus an optional linear slope,
//!
//! ```text
//!   D(r) = sum_i w_i (1 - exp(-t_i^2 r)) + A r,      w_i, t_i > 0, A >= 0,
//! ```
//!
//! which is the finite-atom instance of the Yaglom representation. Short-range
//! (isotropic) specifications given through a correlation function
//! `B(r) = c0 + sum_i w_i exp(-t_i^2 r)` are converted on validation via
//! `D(r) = 2 (B(0) - B(r))` and treated uniformly afterwards.
//!
//! Every derived quantity (`D'`, the regularized derivative, the restricted
//! correlation `G_r`, the `theta` function, overlap-series coefficients and
//! Bregman convexity gaps) is evaluated in closed form — no quadrature.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One mixture atom `(w, t)`: weight `w > 0` attached to rate `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub w: f64,
    pub t: f64,
}

/// Which of the two Yaglom classes the spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelatorKind {
    /// Non-isotropic field with isotropic increments; `D` given directly,
    /// with optional linear slope `A`.
    LongRange,
    /// Isotropic (stationary) field; correlation function `B` given, with
    /// constant offset `c0`. Converted to `D` on validation.
    Isotropic,
}

/// Unvalidated correlator description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSpec {
    pub kind: CorrelatorKind,
    /// Linear slope `A >= 0` (LongRange only).
    pub slope_a: f64,
    /// Constant `c0 >= 0` of the correlation function (Isotropic only).
    pub const_c0: f64,
    /// Mixture atoms, rates strictly increasing.
    pub atoms: Vec<Atom>,
}

impl CorrelatorSpec {
    /// Long-range spec with slope `a` and the given atoms.
    pub fn long_range(a: f64, atoms: Vec<Atom>) -> Self {
        CorrelatorSpec {
            kind: CorrelatorKind::LongRange,
            slope_a: a,
            const_c0: 0.0,
            atoms,
        }
    }

    /// Isotropic spec with correlation-function constant `c0` and atoms.
    pub fn isotropic(c0: f64, atoms: Vec<Atom>) -> Self {
        CorrelatorSpec {
            kind: CorrelatorKind::Isotropic,
            slope_a: 0.0,
            const_c0: c0,
            atoms,
        }
    }

    /// The pure linear correlator `D(r) = A r`.
    pub fn linear(a: f64) -> Self {
        Self::long_range(a, Vec::new())
    }

    /// Single-atom long-range correlator `D(r) = w (1 - exp(-t^2 r))`.
    pub fn single_atom(w: f64, t: f64) -> Self {
        Self::long_range(0.0, vec![Atom { w, t }])
    }
}

/// Validated correlator with cached closed forms.
///
/// Immutable after validation; all methods are pure and safe to call from any
/// number of threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlator {
    spec: CorrelatorSpec,
    /// Effective mixture after short-range conversion: `D(r) = sum w~_i (1 - e^{-t_i^2 r}) + A r`.
    weights: Vec<f64>,
    rates_sq: Vec<f64>,
    slope: f64,
    /// Smallest admissible regularization level: the root of `D'(1/M) = M`.
    m_threshold: f64,
}

/// Output of [`Correlator::overlap_series`].
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSeries {
    /// Taylor coefficients `gamma_0 .. gamma_p_max` of `G_r` about `q = 0`;
    /// all nonnegative by complete monotonicity of `D'`.
    pub coefficients: Vec<f64>,
    /// Uniform bound on the truncation error over `|q| <= r`.
    pub tail_bound: f64,
}

/// Validate a correlator spec and cache its closed forms.
pub fn validate_correlator(spec: CorrelatorSpec) -> Result<Correlator> {
    let all = [spec.slope_a, spec.const_c0]
        .into_iter()
        .chain(spec.atoms.iter().flat_map(|a| [a.w, a.t]));
    for v in all {
        if !v.is_finite() {
            return Err(Error::NonfiniteValue("correlator spec"));
        }
    }
    for a in &spec.atoms {
        if a.w <= 0.0 {
            return Err(Error::NonpositiveWeight(a.w));
        }
        if a.t <= 0.0 {
            return Err(Error::NonpositiveRate(a.t));
        }
    }
    for pair in spec.atoms.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(Error::DuplicateRate(pair[1].t));
        }
    }
    match spec.kind {
        CorrelatorKind::LongRange => {
            if spec.slope_a < 0.0 {
                return Err(Error::NegativeSlope(spec.slope_a));
            }
            // Integrability sum w t^2/(t^2+1): finite atom lists satisfy it
            // trivially, but a non-finite sum would signal absurd inputs.
            let integ: f64 = spec.atoms.iter().map(|a| a.w * a.t * a.t / (a.t * a.t + 1.0)).sum();
            if !integ.is_finite() {
                return Err(Error::NonfiniteValue("integrability sum"));
            }
        }
        CorrelatorKind::Isotropic => {
            if spec.const_c0 < 0.0 {
                return Err(Error::NegativeSlope(spec.const_c0));
            }
        }
    }

    // Short-range conversion D(r) = 2(B(0) - B(r)) doubles the weights.
    let factor = match spec.kind {
        CorrelatorKind::LongRange => 1.0,
        CorrelatorKind::Isotropic => 2.0,
    };
    let weights: Vec<f64> = spec.atoms.iter().map(|a| factor * a.w).collect();
    let rates_sq: Vec<f64> = spec.atoms.iter().map(|a| a.t * a.t).collect();
    let slope = match spec.kind {
        CorrelatorKind::LongRange => spec.slope_a,
        CorrelatorKind::Isotropic => 0.0,
    };

    let mut c = Correlator {
        spec,
        weights,
        rates_sq,
        slope,
        m_threshold: 0.0,
    };
    c.m_threshold = c.solve_m_threshold();
    Ok(c)
}

impl Correlator {
    /// The validated spec this correlator was built from.
    pub fn spec(&self) -> &CorrelatorSpec {
        &self.spec
    }

    /// Smallest `M` with `D'(1/M) <= M`, found by bisection at validation
    /// time. All regularized evaluations require `M >= m_threshold`.
    pub fn m_threshold(&self) -> f64 {
        self.m_threshold
    }

    fn solve_m_threshold(&self) -> f64 {
        // Admissible M satisfy h(M) = M - D'(1/M) >= 0. Since D' <= D'(0+),
        // h >= 0 for every M >= D'(0+); h need not be monotone below, so scan
        // a log grid for the largest violation and bisect the crossing above it.
        let d0 = self.slope
            + self
                .weights
                .iter()
                .zip(&self.rates_sq)
                .map(|(w, t2)| w * t2)
                .sum::<f64>();
        if d0 <= 0.0 {
            return 0.0; // identically zero correlator
        }
        let h = |m: f64| m - self.eval_d_prime_raw(1.0 / m);
        let hi = d0;
        let lo = 1e-12 * d0.min(1.0);
        let n = 4000;
        let ratio = (hi / lo).ln() / n as f64;
        let mut worst = None;
        for i in (0..n).rev() {
            let m = lo * (ratio * i as f64).exp();
            if h(m) < 0.0 {
                worst = Some((m, lo * (ratio * (i + 1) as f64).exp()));
                break;
            }
        }
        let (mut a, mut b) = match worst {
            None => return 0.0,
            Some(pair) => pair,
        };
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if h(mid) >= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        b
    }

    /// `D(r)`, exact closed form.
    pub fn eval_d(&self, r: f64) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::NegativeArgument(r));
        }
        Ok(self.eval_d_raw(r))
    }

    #[inline]
    fn eval_d_raw(&self, r: f64) -> f64 {
        let mut s = self.slope * r;
        for (w, t2) in self.weights.iter().zip(&self.rates_sq) {
            // 1 - exp(-t^2 r) via exp_m1 for accuracy at small r
            s += w * (-(-t2 * r).exp_m1());
        }
        s
    }

    /// `D'(r)`, unregularized. Finite at `r = 0` for finite mixtures.
    pub fn eval_d_prime(&self, r: f64) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::NegativeArgument(r));
        }
        Ok(self.eval_d_prime_raw(r))
    }

    #[inline]
    fn eval_d_prime_raw(&self, r: f64) -> f64 {
        let mut s = self.slope;
        for (w, t2) in self.weights.iter().zip(&self.rates_sq) {
            s += w * t2 * (-t2 * r).exp();
        }
        s
    }

    /// `D''(r)` (nonpositive: `D` is concave).
    pub fn eval_d_second(&self, r: f64) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::NegativeArgument(r));
        }
        let mut s = 0.0;
        for (w, t2) in self.weights.iter().zip(&self.rates_sq) {
            s -= w * t2 * t2 * (-t2 * r).exp();
        }
        Ok(s)
    }

    /// p-th derivative of `D` for `p >= 1`, exact.
    fn eval_d_deriv(&self, p: u32, r: f64) -> f64 {
        debug_assert!(p >= 1);
        let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
        let mut s = if p == 1 { self.slope } else { 0.0 };
        for (w, t2) in self.weights.iter().zip(&self.rates_sq) {
            s += sign * w * t2.powi(p as i32) * (-t2 * r).exp();
        }
        s
    }

    /// Regularized derivative: `M` on `[0, 1/M)`, `D'(r)` on `[1/M, inf)`.
    ///
    /// Requires `M >= m_threshold` so that the result is non-increasing in
    /// `r` and the cascade variance sequence stays ordered.
    pub fn eval_d_prime_m(&self, r: f64, m: f64) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::NegativeArgument(r));
        }
        self.check_m(m)?;
        if r < 1.0 / m {
            Ok(m)
        } else {
            Ok(self.eval_d_prime_raw(r))
        }
    }

    /// Errors with `MTooSmall` unless `M` is admissible.
    pub fn check_m(&self, m: f64) -> Result<()> {
        if !(m > 0.0) || m < self.m_threshold {
            return Err(Error::MTooSmall {
                m,
                threshold: self.m_threshold,
            });
        }
        Ok(())
    }

    /// Restriction correlation `G_r(q) = D(r) - D(2(r-q))/2` for `|q| <= r`.
    pub fn eval_g(&self, r: f64, q: f64) -> Result<f64> {
        self.check_overlap(r, q)?;
        Ok(self.eval_d_raw(r) - 0.5 * self.eval_d_raw(2.0 * (r - q)))
    }

    /// `G_r'(q) = D'(2(r-q))`.
    pub fn eval_g_prime(&self, r: f64, q: f64) -> Result<f64> {
        self.check_overlap(r, q)?;
        Ok(self.eval_d_prime_raw(2.0 * (r - q)))
    }

    /// `theta_r^M(q) = q D'^M(2(r-q)) + D(2(r-q))/2` on `[-r, r]`.
    pub fn eval_theta(&self, r: f64, m: f64, q: f64) -> Result<f64> {
        self.check_overlap(r, q)?;
        let s = 2.0 * (r - q);
        let dpm = self.eval_d_prime_m(s, m)?;
        Ok(q * dpm + 0.5 * self.eval_d_raw(s))
    }

    fn check_overlap(&self, r: f64, q: f64) -> Result<()> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::NegativeArgument(r));
        }
        if !q.is_finite() || q.abs() > r * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::OverlapOutOfRange { q, r });
        }
        Ok(())
    }

    /// Taylor coefficients of `G_r` about `q = 0`:
    /// `gamma_0 = G_r(0)`, `gamma_p = 2^{p-1} (-1)^{p+1} D^{(p)}(2r) / p!`.
    ///
    /// The tail bound `G_r(r) - sum_{p<=p_max} gamma_p r^p` dominates the
    /// truncation error uniformly over `|q| <= r` because all coefficients
    /// are nonnegative.
    pub fn overlap_series(&self, r: f64, p_max: usize) -> Result<OverlapSeries> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::NegativeArgument(r));
        }
        assert!(p_max >= 1, "p_max must be >= 1");
        let mut coefficients = Vec::with_capacity(p_max + 1);
        coefficients.push(self.eval_d_raw(r) - 0.5 * self.eval_d_raw(2.0 * r));
        let mut pow2 = 1.0; // 2^{p-1}
        let mut fact = 1.0; // p!
        for p in 1..=p_max {
            fact *= p as f64;
            let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
            let coef = pow2 * sign * self.eval_d_deriv(p as u32, 2.0 * r) / fact;
            coefficients.push(coef.max(0.0));
            pow2 *= 2.0;
        }
        let mut partial = 0.0;
        let mut rp = 1.0;
        for &g in &coefficients {
            partial += g * rp;
            rp *= r;
        }
        let g_rr = self.eval_d_raw(r); // G_r(r) = D(r) since D(0) = 0
        let tail_bound = (g_rr - partial).max(0.0);
        Ok(OverlapSeries {
            coefficients,
            tail_bound,
        })
    }

    /// Bregman gap `G_r(s) - G_r(q) - G_r'(q)(s - q)`, nonnegative since
    /// `G_r` is convex on `[-r, r]`.
    pub fn convexity_gap(&self, r: f64, q: f64, s: f64) -> Result<f64> {
        self.check_overlap(r, q)?;
        self.check_overlap(r, s)?;
        let gq = self.eval_d_raw(r) - 0.5 * self.eval_d_raw(2.0 * (r - q));
        let gs = self.eval_d_raw(r) - 0.5 * self.eval_d_raw(2.0 * (r - s));
        let gpq = self.eval_d_prime_raw(2.0 * (r - q));
        Ok(gs - gq - gpq * (s - q))
    }
}
