//! Imhof inversion of the characteristic function of `sum g_i chi2_1(l_i)`.
//!
//! The Gil-Pelaez integral is taken along the ray `u = t e^{-i a}` in the
//! lower half plane instead of the real axis. On that ray `e^{-iux}` decays
//! like `e^{-x t sin a}`, so the integrand is absolutely integrable and a
//! finite truncation point can be bounded. Rotating past the pole of `1/u`
//! at the origin contributes the constant `a`:
//!
//! `F(x) = 1/2 - (1/pi) * (int_0^inf Im(e^{-iux} phi(u)) / t dt - a)`.
//!
//! The non-central factor of `phi` grows along the ray by at most
//! `exp(sum(l) (sec a - 1) / 2)`, so the angle shrinks as the total
//! non-centrality grows. Points deep in either tail are settled by a
//! Chernoff bound before any quadrature is attempted.

use num_complex::Complex64;

use super::quadrature;
use super::WeightedChiSquareSpec;
use crate::error::{Error, Result};

/// Panel budget of the adaptive quadrature.
pub const MAX_PANELS: usize = 50_000;

/// CDF and survival function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPair {
    pub cdf: f64,
    pub sf: f64,
}

/// Evaluates `P(S <= x)` and `P(S > x)` to absolute accuracy `tol`.
pub fn imhof(spec: &WeightedChiSquareSpec, x: f64, tol: f64) -> Result<TailPair> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!(
            "CDF argument must be non-negative, got {x}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if x == 0.0 {
        return Ok(TailPair { cdf: 0.0, sf: 1.0 });
    }
    if x == f64::INFINITY {
        return Ok(TailPair { cdf: 1.0, sf: 0.0 });
    }
    if chernoff_lower(spec, x) < 0.1 * tol {
        return Ok(TailPair { cdf: 0.0, sf: 1.0 });
    }
    if chernoff_upper(spec, x) < 0.1 * tol {
        return Ok(TailPair { cdf: 1.0, sf: 0.0 });
    }

    let g = spec.weights();
    let l = spec.noncentrality();
    let lam_total: f64 = l.iter().sum();
    let angle = if lam_total > 0.0 {
        (4.0 / lam_total.sqrt()).min(0.25)
    } else {
        0.25
    };
    let (sin_a, cos_a) = angle.sin_cos();
    let rot = Complex64::new(cos_a, -sin_a);

    // Envelope of |integrand| * t: growth of the non-central factor times
    // the modulus bound of the central factors.
    let growth = 0.5 * lam_total * (1.0 / cos_a - 1.0) - 0.5 * g.len() as f64 * cos_a.ln();
    let c = x * sin_a;
    // Tail of the exponential envelope: G e^{-cT} / (cT) < pi tol / 20.
    let target = (std::f64::consts::PI * tol / 20.0).ln() - growth;
    let mut t_max = (-target / c).max(1.0 / c);
    for _ in 0..4 {
        t_max = ((-target - (c * t_max).ln()) / c).max(1.0 / c);
    }
    // Algebraic decay of the central factors gives a second bound when the
    // weights dominate x.
    let half_l = 0.5 * g.len() as f64;
    if half_l > 1.0 {
        let log_coef: f64 = g
            .iter()
            .map(|gi| -0.5 * (2.0 * gi * cos_a).ln())
            .sum::<f64>()
            + growth
            + 0.5 * g.len() as f64 * cos_a.ln()
            - half_l.ln();
        let t_poly = ((log_coef - (std::f64::consts::PI * tol / 20.0).ln()) / half_l).exp();
        t_max = t_max.min(t_poly.max(1.0 / c));
    }

    let integrand = |t: f64| -> f64 {
        let u = rot * t;
        let mut z = Complex64::new(0.0, -x) * u;
        for (gi, li) in g.iter().zip(l) {
            let w = Complex64::new(1.0, 0.0) - Complex64::new(0.0, 2.0 * gi) * u;
            z -= 0.5 * w.ln();
            if *li != 0.0 {
                z += Complex64::new(0.0, li * gi) * u / w;
            }
        }
        z.re.exp() * z.im.sin() / t
    };

    let breaks = panel_breaks(g, x, cos_a, t_max);
    let abs_tol = 0.5 * std::f64::consts::PI * tol;
    let r = quadrature::integrate(integrand, &breaks, abs_tol, MAX_PANELS);
    if !r.converged || !r.value.is_finite() {
        return Err(Error::numerical(
            "cdf_imhof",
            format!(
                "quadrature did not converge: x = {x}, weights = {:?}, noncentrality = {:?}, \
                 angle = {angle}, truncation = {t_max:.3e}, panels = {}, error estimate = {:.3e}, tol = {tol:e}",
                g, l, r.panels, r.error
            ),
        ));
    }
    let s = (r.value - angle) / std::f64::consts::PI;
    Ok(TailPair {
        cdf: (0.5 - s).clamp(0.0, 1.0),
        sf: (0.5 + s).clamp(0.0, 1.0),
    })
}

// Initial panels: geometric refinement near the origin, where each weight
// sets its own scale 1/(2 g_i), and panels no wider than two oscillation
// periods of e^{-iux} further out.
fn panel_breaks(g: &[f64], x: f64, cos_a: f64, t_max: f64) -> Vec<f64> {
    let g_max = g.iter().cloned().fold(0.0, f64::max);
    let t0 = (0.05 / (2.0 * g_max + x)).min(0.5 * t_max);
    let period = 2.0 * std::f64::consts::PI / (x * cos_a);
    let mut breaks = vec![0.0, t0];
    let mut t = t0;
    while t < t_max {
        let next = (2.0 * t).min(t + 2.0 * period).min(t_max);
        breaks.push(next);
        t = next;
    }
    breaks
}

/// Chernoff bound on `P(S <= x)`.
pub fn chernoff_lower(spec: &WeightedChiSquareSpec, x: f64) -> f64 {
    let g = spec.weights();
    let l = spec.noncentrality();
    if x >= spec.mean() {
        return 1.0;
    }
    let deriv = |s: f64| -> f64 {
        x - g
            .iter()
            .zip(l)
            .map(|(gi, li)| {
                let d = 1.0 + 2.0 * gi * s;
                gi / d + li * gi / (d * d)
            })
            .sum::<f64>()
    };
    let mut hi = 1.0 / spec.mean();
    let mut n = 0;
    while deriv(hi) < 0.0 && n < 2000 {
        hi *= 2.0;
        n += 1;
    }
    let s = bisect(deriv, 0.0, hi);
    let log_bound = s * x
        + g.iter()
            .zip(l)
            .map(|(gi, li)| {
                let d = 2.0 * gi * s;
                -0.5 * d.ln_1p() - li * gi * s / (1.0 + d)
            })
            .sum::<f64>();
    log_bound.exp().min(1.0)
}

/// Chernoff bound on `P(S > x)`.
pub fn chernoff_upper(spec: &WeightedChiSquareSpec, x: f64) -> f64 {
    let g = spec.weights();
    let l = spec.noncentrality();
    if x <= spec.mean() {
        return 1.0;
    }
    let g_max = g.iter().cloned().fold(0.0, f64::max);
    let s_max = 0.5 / g_max;
    let deriv = |s: f64| -> f64 {
        -x + g
            .iter()
            .zip(l)
            .map(|(gi, li)| {
                let d = 1.0 - 2.0 * gi * s;
                gi / d + li * gi / (d * d)
            })
            .sum::<f64>()
    };
    let s = bisect(deriv, 0.0, s_max * (1.0 - 1e-15));
    let log_bound = -s * x
        + g.iter()
            .zip(l)
            .map(|(gi, li)| {
                let d = -2.0 * gi * s;
                -0.5 * d.ln_1p() + li * gi * s / (1.0 + d)
            })
            .sum::<f64>();
    log_bound.exp().min(1.0)
}

// Root of an increasing function with f(lo) < 0 <= f(hi).
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
