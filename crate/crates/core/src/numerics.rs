//! Shared numerical primitives: normal tail logarithms, Gauss-Hermite rules,
//! polynomial interpolation on uniform grids, and log-sum-exp folding.

use libm::erfc;

pub(crate) const SQRT_2PI: f64 = 2.506628274631000502;

/// `log P(Z > t)` for standard normal `Z`, accurate over the whole line.
///
/// Uses `erfc` up to `t = 12` and the asymptotic expansion beyond, where
/// `erfc` would lose relative precision on its way into the subnormals.
pub fn ln_normal_tail(t: f64) -> f64 {
    if t < 0.0 {
        // reflect: erfc loses relative precision for negative arguments
        return (-ln_normal_tail(-t).exp()).ln_1p();
    }
    if t <= 12.0 {
        return (0.5 * erfc(t / std::f64::consts::SQRT_2)).ln();
    }
    ln_normal_tail_upper(t)
}

/// Asymptotic series `Phibar(t) = phi(t)/t (1 - 1/t^2 + 3/t^4 - ...)`, t >= 12.
fn ln_normal_tail_upper(t: f64) -> f64 {
    let t2 = t * t;
    let mut term = 1.0;
    let mut series = 1.0;
    let mut k = 1.0;
    for _ in 0..10 {
        term *= -(2.0 * k - 1.0) / t2;
        series += term;
        k += 1.0;
        if term.abs() < 1e-17 * series.abs() {
            break;
        }
    }
    -0.5 * t2 - (t * SQRT_2PI).ln() + series.ln()
}

/// `P(Z > t)`; underflows to 0 near `t ~ 38`, use [`ln_normal_tail`] beyond.
pub fn normal_tail(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / SQRT_2PI
}

/// Numerically stable `log(exp(a) + exp(b))`.
#[inline]
pub fn logaddexp(a: f64, b: f64) -> f64 {
    crate::model::logaddexp(a, b)
}

/// Gauss-Hermite rule adapted to standard normal expectations:
/// `E[f(Z)] ~ sum_j w_j f(z_j)` with `Z ~ N(0,1)`.
///
/// Nodes and weights come from Newton iteration on the physicists' Hermite
/// polynomials (Golub-Welsch is overkill for the node counts used here),
/// then rescaled by `sqrt(2)` and `1/sqrt(pi)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        // the Newton iteration below is validated up to 180 nodes; weights
        // underflow beyond that
        assert!(n <= 180, "node count {n} > 180 unsupported");
        let mut nodes = vec![0.0_f64; n];
        let mut weights = vec![0.0_f64; n];
        let m = n.div_ceil(2);
        // Initial guesses per Numerical Recipes, refined by Newton.
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                // recurrence for orthonormal Hermite H~_k
                let mut p1 = std::f64::consts::PI.powf(-0.25);
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                        - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // physicists' -> probabilists': z_std = sqrt(2) z, w_std = w / sqrt(pi)
        let spi = std::f64::consts::PI.sqrt();
        for i in 0..n {
            nodes[i] *= std::f64::consts::SQRT_2;
            weights[i] /= spi;
        }
        // ascending order, symmetric
        nodes.reverse();
        weights.reverse();
        GaussHermite { nodes, weights }
    }

    /// `E[f(Z)]`, `Z ~ N(0,1)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Uniform grid `[-half_width, half_width]` with `points` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub half_width: f64,
    pub points: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(half_width: f64, points: usize) -> Self {
        assert!(points >= 8 && half_width > 0.0);
        Grid {
            half_width,
            points,
            h: 2.0 * half_width / (points - 1) as f64,
        }
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|i| self.node(i))
    }

    /// 6-point Lagrange interpolation of grid values at `y` strictly inside
    /// the grid; caller handles the outside via tail models.
    pub fn interp(&self, values: &[f64], y: f64) -> f64 {
        debug_assert_eq!(values.len(), self.points);
        let pos = (y + self.half_width) / self.h;
        let i = (pos.floor() as isize).clamp(2, self.points as isize - 4) as usize;
        let base = i - 2;
        let t = pos - base as f64; // in [2,3] for interior points
        let mut out = 0.0;
        for (j, &v) in values[base..base + 6].iter().enumerate() {
            let mut lj = 1.0;
            for k in 0..6 {
                if k != j {
                    lj *= (t - k as f64) / (j as f64 - k as f64);
                }
            }
            out += lj * v;
        }
        out
    }
}

/// Log-sum-exp over a slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_normal_tail_reference_values() {
        // frozen from 30-digit mpmath evaluations of log ncdf(-t)
        let cases: [(f64, f64); 10] = [
            (-30.0, 0.0),
            (-8.0, -6.2209605742717858094e-16),
            (-2.0, -0.023012909328963488465),
            (0.0, -0.69314718055994530942),
            (1.0, -1.8410216450092635058),
            (5.0, -15.064998393988725736),
            (8.0, -35.013437159914549896),
            (12.0, -75.410673001568795939),
            (20.0, -203.91715537109726394),
            (35.0, -616.97510126192251347),
        ];
        for (t, expect) in cases {
            let got = ln_normal_tail(t);
            let tol = 1e-12 * expect.abs().max(1.0);
            assert!(
                (got - expect).abs() <= tol,
                "ln_normal_tail({t}) = {got}, want {expect}"
            );
        }
    }

    #[test]
    fn gauss_hermite_moments() {
        let gh = GaussHermite::new(64);
        assert!((gh.expect(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!(gh.expect(|z| z).abs() < 1e-14);
        assert!((gh.expect(|z| z * z) - 1.0).abs() < 1e-13);
        assert!((gh.expect(|z| z.powi(4)) - 3.0).abs() < 1e-12);
        // E[e^Z] = e^{1/2}
        assert!((gh.expect(|z| z.exp()) - 0.5_f64.exp()).abs() < 1e-12);
        // E[log cosh(Z)] against the frozen high-precision value
        assert!((gh.expect(|z| z.cosh().ln()) - 0.3745672074914379741).abs() < 1e-10);
    }

    #[test]
    fn grid_interp_exact_on_quintics() {
        let g = Grid::new(4.0, 257);
        let f = |y: f64| 0.3 * y.powi(5) - y.powi(3) + 2.0 * y - 0.7;
        let vals: Vec<f64> = g.nodes().map(f).collect();
        for &y in &[-3.7, -1.2, 0.01, 2.9, 3.9] {
            assert!((g.interp(&vals, y) - f(y)).abs() < 1e-9, "y={y}");
        }
        // smooth non-polynomial: error ~ h^6
        let vals: Vec<f64> = g.nodes().map(|y| (0.9 * y).cosh().ln()).collect();
        for &y in &[-2.45, 0.33, 1.87] {
            let err = (g.interp(&vals, y) - (0.9 * y as f64).cosh().ln()).abs();
            assert!(err < 1e-9, "y={y} err={err}");
        }
    }
}
