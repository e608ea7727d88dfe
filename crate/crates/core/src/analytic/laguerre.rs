//! Laguerre-series expansion of the CDF of `sum g_i chi2_1(l_i)`.
//!
//! With `p = L/2` the CDF is expanded as
//!
//! `F(y) = e^{-y/(2b)} (y/(2b))^p / Gamma(p+1) * sum_k k! c_k / (p+1)_k * L_k^(p)(a y)`
//!
//! with `a = (p+1) / (2 b m)`, scale `b > 0` and shape `m > 0`. The
//! coefficients follow from `c_0` and the recursion
//! `c_k = (1/k) sum_{j<k} c_j xi_{k-j}` where, with
//! `D_i = b m + g_i (p+1-m)`, `r_i = m (b - g_i) / D_i`, `q = -m / (p+1-m)`,
//!
//! `xi_j = 1/2 sum_i r_i^j + q^j - j sum_i l_i g_i m b (p+1) / (2 D_i^2) r_i^(j-1)`,
//!
//! `c_0 = (p+1)^(p+1) b^p / (p+1-m) * prod_i D_i^(-1/2) * exp(-sum_i l_i g_i (p+1-m) / (2 D_i))`.
//!
//! The series converges when `max(|q|, |r_i|) < 1`, which requires
//! `m < (p+1)/2`.

use statrs::function::gamma::ln_gamma;

use super::WeightedChiSquareSpec;
use crate::error::{Error, Result};

/// Parameters of the Laguerre expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaguerreSeriesParams {
    pub beta: f64,
    pub mu0: f64,
    pub max_terms: usize,
    pub tolerance: f64,
}

// Envelope constant of the automatic parameter choice. Larger values trade
// more terms for less cancellation in the alternating Laguerre sum.
const AUTO_C: f64 = 8.0;

impl LaguerreSeriesParams {
    pub fn new(beta: f64, mu0: f64, max_terms: usize, tolerance: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) || !(mu0 > 0.0 && mu0.is_finite()) {
            return Err(Error::domain(format!(
                "Laguerre parameters need beta > 0 and mu0 > 0, got {beta}, {mu0}"
            )));
        }
        if max_terms == 0 || !(tolerance > 0.0) {
            return Err(Error::domain(
                "Laguerre series needs max_terms >= 1 and tolerance > 0",
            ));
        }
        Ok(LaguerreSeriesParams {
            beta,
            mu0,
            max_terms,
            tolerance,
        })
    }

    /// Parameters tuned to evaluation point `x`.
    ///
    /// The Laguerre argument `a x` is held near `2C / eta` with
    /// `eta = min(1/2, sqrt(2 C g_min / x))`; the smallest weight sets how
    /// slowly the coefficients decay, the argument sets how much the
    /// alternating sum cancels.
    pub fn auto(spec: &WeightedChiSquareSpec, x: f64, tolerance: f64) -> Self {
        let p = 0.5 * spec.len() as f64;
        let g_min = spec.weights().iter().cloned().fold(f64::INFINITY, f64::min);
        let x = if x > 0.0 { x } else { spec.mean() };
        let eta = (2.0 * AUTO_C * g_min / x).sqrt().min(0.5);
        let beta = eta * x / (2.0 * AUTO_C);
        let mu0 = (p + 1.0) * (1.0 - eta) / 2.0;
        let rho = convergence_ratio(spec, beta, mu0);
        let arg = 2.0 * AUTO_C / (eta * (1.0 - eta));
        let decay = if rho < 1.0 { 45.0 / -rho.ln() } else { 1e9 };
        let predicted = 1.5 * (arg + decay) + 100.0;
        let max_terms = predicted.clamp(500.0, 100_000.0) as usize;
        LaguerreSeriesParams {
            beta,
            mu0,
            max_terms,
            tolerance,
        }
    }
}

/// `max(|q|, |r_i|)`, the geometric decay ratio of the coefficients.
pub fn convergence_ratio(spec: &WeightedChiSquareSpec, beta: f64, mu0: f64) -> f64 {
    let p1 = 0.5 * spec.len() as f64 + 1.0;
    if mu0 >= p1 {
        return f64::INFINITY;
    }
    let q = (mu0 / (p1 - mu0)).abs();
    spec.weights()
        .iter()
        .map(|g| (mu0 * (beta - g) / (beta * mu0 + g * (p1 - mu0))).abs())
        .fold(q, f64::max)
}

/// `P(S <= x)` from the Laguerre series.
pub fn cdf_laguerre(
    spec: &WeightedChiSquareSpec,
    x: f64,
    series: &LaguerreSeriesParams,
) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!(
            "CDF argument must be non-negative, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let LaguerreSeriesParams {
        beta,
        mu0,
        max_terms,
        tolerance,
    } = *series;
    let g = spec.weights();
    let lam = spec.noncentrality();
    let n = g.len();
    let p = 0.5 * n as f64;
    let p1 = p + 1.0;

    let rho = convergence_ratio(spec, beta, mu0);
    if !(rho < 1.0) {
        return Err(Error::numerical(
            "cdf_laguerre",
            format!(
                "beta = {beta}, mu0 = {mu0} lie outside the convergence region (ratio {rho:.4}); \
                 use mu0 < (L/2+1)/2 or evaluate with cdf_imhof"
            ),
        ));
    }

    let d: Vec<f64> = g.iter().map(|gi| beta * mu0 + gi * (p1 - mu0)).collect();
    let r: Vec<f64> = g
        .iter()
        .zip(&d)
        .map(|(gi, di)| mu0 * (beta - gi) / di)
        .collect();
    let q = -mu0 / (p1 - mu0);
    let nc: Vec<f64> = g
        .iter()
        .zip(lam)
        .zip(&d)
        .map(|((gi, li), di)| li * gi * mu0 * beta * p1 / (2.0 * di * di))
        .collect();

    let log_c0 = p1 * p1.ln() + p * beta.ln()
        - (p1 - mu0).ln()
        - 0.5 * d.iter().map(|di| di.ln()).sum::<f64>()
        - g.iter()
            .zip(lam)
            .zip(&d)
            .map(|((gi, li), di)| li * gi * (p1 - mu0) / (2.0 * di))
            .sum::<f64>();
    let a = p1 / (2.0 * beta * mu0);
    let arg = a * x;
    let log_pref = -x / (2.0 * beta) + p * (x / (2.0 * beta)).ln() - ln_gamma(p1);
    // Laguerre values are carried as L_k e^{-arg/2} times e^{log_scale_l}.
    let log_scale = log_c0 + log_pref + 0.5 * arg;

    let mut c: Vec<f64> = Vec::with_capacity(max_terms.min(4096));
    let mut xi: Vec<f64> = Vec::with_capacity(max_terms.min(4096));
    c.push(1.0);
    xi.push(0.0);
    let mut r_pow = vec![1.0; n]; // r_i^(k-1)
    let mut q_pow = 1.0;
    let mut fact_ratio = 1.0; // k! / (p+1)_k
    let (mut l_prev, mut l_cur) = (0.0, 1.0);
    let mut log_scale_l = -0.5 * arg;

    let mut sum: f64 = 0.0;
    let mut small = 0;
    let mut growing = 0;
    let mut last_abs = f64::INFINITY;
    for k in 0..max_terms {
        if k > 0 {
            let kf = k as f64;
            let mut xk = 0.0;
            for i in 0..n {
                xk += 0.5 * r_pow[i] * r[i] - kf * nc[i] * r_pow[i];
                r_pow[i] *= r[i];
            }
            q_pow *= q;
            xi.push(xk + q_pow);
            let mut ck = 0.0;
            for j in 0..k {
                ck += c[j] * xi[k - j];
            }
            c.push(ck / kf);

            fact_ratio *= kf / (p + kf);
            let l_next =
                ((2.0 * (kf - 1.0) + 1.0 + p - arg) * l_cur - (kf - 1.0 + p) * l_prev) / kf;
            l_prev = l_cur;
            l_cur = l_next;
            let mag = l_cur.abs();
            if mag > 1e100 || (mag < 1e-100 && mag > 0.0) {
                let shift = mag.ln();
                l_cur /= mag;
                l_prev /= mag;
                log_scale_l += shift;
            }
        }
        let e = log_scale_l + log_scale;
        let term = if e > -745.0 {
            fact_ratio * c[k] * l_cur * e.exp()
        } else {
            0.0
        };
        if !term.is_finite() || !sum.is_finite() {
            return Err(divergence(k, "non-finite term", beta, mu0));
        }
        sum += term;

        let kf = k as f64;
        if kf > arg {
            if term.abs() < tolerance {
                small += 1;
                if small >= 5 {
                    return Ok(clamp_probability(sum));
                }
            } else {
                small = 0;
            }
        }
        if kf > arg + 10.0 {
            if term.abs() > last_abs && term.abs() >= tolerance {
                growing += 1;
                if growing >= 10 {
                    return Err(divergence(
                        k,
                        "terms grew for 10 consecutive orders",
                        beta,
                        mu0,
                    ));
                }
            } else {
                growing = 0;
            }
        }
        last_abs = term.abs();
    }
    Err(divergence(
        max_terms,
        "max_terms reached before the tolerance was met",
        beta,
        mu0,
    ))
}

/// [`cdf_laguerre`] with parameters chosen by [`LaguerreSeriesParams::auto`].
pub fn cdf_laguerre_auto(spec: &WeightedChiSquareSpec, x: f64, tolerance: f64) -> Result<f64> {
    cdf_laguerre(spec, x, &LaguerreSeriesParams::auto(spec, x, tolerance))
}

fn divergence(k: usize, what: &str, beta: f64, mu0: f64) -> Error {
    Error::numerical(
        "cdf_laguerre",
        format!("series failed at term {k} ({what}; beta = {beta}, mu0 = {mu0}); evaluate with cdf_imhof instead"),
    )
}

fn clamp_probability(v: f64) -> f64 {
    let c = v.clamp(0.0, 1.0);
    if (c - v).abs() > 1e-6 {
        log::warn!("Laguerre series value {v} clamped to [0, 1]");
    }
    c
}
