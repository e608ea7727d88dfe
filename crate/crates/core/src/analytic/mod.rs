//! Distribution of the test statistic in the linearized (high-SNR) model and
//! the resulting false-alarm and missed-detection probabilities.
//!
//! To first order in the range noise, `b - b_A = Delta + 2 d o n` with
//! `Delta_i = d_i^2 - (d_i^A)^2` and `n ~ N(0, diag(sigma^2))`, and the
//! statistic equals `|| P (b - b_A) ||^2` where `P` is the rank-2 projector
//! of [`LocalizationSystem::projector`]. Two models of its law are offered:
//!
//! * [`AnalyticModel::Projected`] keeps `P`: the statistic is a weighted sum
//!   of two non-central chi-square variates whose weights are the non-zero
//!   eigenvalues of `S^(1/2) P S^(1/2)`, `S = diag(4 d_i^2 sigma_i^2)`.
//! * [`AnalyticModel::PerAnchor`] drops `P` and treats every anchor as one
//!   independent term, `sum_i 4 d_i^2 sigma_i^2 chi2_1(Delta_i^2 / (4 d_i^2 sigma_i^2))`.

pub mod imhof;
pub mod laguerre;
pub mod quadrature;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use imhof::{chernoff_lower, chernoff_upper, imhof, TailPair};
pub use laguerre::{cdf_laguerre, cdf_laguerre_auto, convergence_ratio, LaguerreSeriesParams};

use crate::authenticator::LegitimateProfile;
use crate::channel::{distance_noise_sigma, ChannelParams};
use crate::error::{Error, Result};
use crate::localization::{LocalizationSystem, Point};
use crate::simulator::{RocCurve, RocPoint, RocProvenance};

/// Absolute accuracy used by the rate functions.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Law of `sum_i weights_i * chi2_1(noncentrality_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedChiSquareSpec {
    weights: Vec<f64>,
    noncentrality: Vec<f64>,
}

impl WeightedChiSquareSpec {
    pub fn new(weights: Vec<f64>, noncentrality: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != noncentrality.len() {
            return Err(Error::domain(format!(
                "weights ({}) and non-centralities ({}) must be non-empty and of equal length",
                weights.len(),
                noncentrality.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::domain(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        if let Some(l) = noncentrality
            .iter()
            .find(|l| !(**l >= 0.0 && l.is_finite()))
        {
            return Err(Error::domain(format!(
                "non-centralities must be finite and non-negative, got {l}"
            )));
        }
        Ok(WeightedChiSquareSpec {
            weights,
            noncentrality,
        })
    }

    pub fn central(weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        Self::new(weights, vec![0.0; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn noncentrality(&self) -> &[f64] {
        &self.noncentrality
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `sum g_i (1 + l_i)`.
    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.noncentrality)
            .map(|(g, l)| g * (1.0 + l))
            .sum()
    }

    /// `sum 2 g_i^2 (1 + 2 l_i)`.
    pub fn variance(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.noncentrality)
            .map(|(g, l)| 2.0 * g * g * (1.0 + 2.0 * l))
            .sum()
    }

    /// Stable digest input for fingerprints.
    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        self.weights
            .iter()
            .chain(&self.noncentrality)
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }
}

/// Which linearized law of the statistic to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticModel {
    /// Rank-2 law that keeps the projection of the least-squares operator.
    #[default]
    Projected,
    /// One independent term per anchor.
    PerAnchor,
}

impl AnalyticModel {
    pub fn name(&self) -> &'static str {
        match self {
            AnalyticModel::Projected => "projected",
            AnalyticModel::PerAnchor => "per_anchor",
        }
    }
}

fn range_terms(
    system: &LocalizationSystem,
    params: &ChannelParams,
    pos: &Point,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = system.distances(pos)?;
    let gamma = d
        .iter()
        .map(|di| {
            let s = distance_noise_sigma(params, *di)?;
            Ok(4.0 * di * di * s * s)
        })
        .collect::<Result<Vec<_>>>()?;
    if gamma.contains(&0.0) {
        return Err(Error::domain(
            "noiseless channel: the statistic has a degenerate law",
        ));
    }
    Ok((d, gamma))
}

/// Per-anchor law under H0: weights `4 d_i^2 sigma_i^2`, central.
pub fn spec_under_h0(
    system: &LocalizationSystem,
    profile: &LegitimateProfile,
    params: &ChannelParams,
) -> Result<WeightedChiSquareSpec> {
    let (_, gamma) = range_terms(system, params, &profile.position())?;
    WeightedChiSquareSpec::central(gamma)
}

/// Per-anchor law under H1 for an attacker at `attacker_pos`.
pub fn spec_under_h1(
    system: &LocalizationSystem,
    profile: &LegitimateProfile,
    attacker_pos: &Point,
    params: &ChannelParams,
) -> Result<WeightedChiSquareSpec> {
    let (d, gamma) = range_terms(system, params, attacker_pos)?;
    let lambda = d
        .iter()
        .zip(profile.distances())
        .zip(&gamma)
        .map(|((de, da), g)| {
            let delta = de * de - da * da;
            delta * delta / g
        })
        .collect();
    WeightedChiSquareSpec::new(gamma, lambda)
}

/// Projected law for a transmitter at `pos` (H0 when `pos` is the enrolled
/// position).
pub fn projected_spec(
    system: &LocalizationSystem,
    profile: &LegitimateProfile,
    pos: &Point,
    params: &ChannelParams,
) -> Result<WeightedChiSquareSpec> {
    let (d, gamma) = range_terms(system, params, pos)?;
    let l = system.len();
    let sqrt_g: Vec<f64> = gamma.iter().map(|g| g.sqrt()).collect();
    let p = system.projector();
    let m = DMatrix::from_fn(l, l, |i, j| sqrt_g[i] * p[(i, j)] * sqrt_g[j]);
    let m = 0.5 * (&m + m.transpose());
    let eig = SymmetricEigen::new(m);
    let scaled_delta = DVector::from_iterator(
        l,
        d.iter()
            .zip(profile.distances())
            .zip(&sqrt_g)
            .map(|((de, da), s)| (de * de - da * da) / s),
    );

    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let top = eig.eigenvalues[order[0]];
    let mut weights = Vec::with_capacity(2);
    let mut lambda = Vec::with_capacity(2);
    for &k in order.iter().take(2) {
        let w = eig.eigenvalues[k];
        if !(w > 1e-12 * top) {
            return Err(Error::numerical(
                "projected_spec",
                format!("projected covariance has rank < 2 (eigenvalue {w:e})"),
            ));
        }
        let proj = eig.eigenvectors.column(k).dot(&scaled_delta);
        weights.push(w);
        lambda.push(proj * proj);
    }
    WeightedChiSquareSpec::new(weights, lambda)
}

/// Law of the statistic for a transmitter at `pos` under `model`.
pub fn ts_spec(
    model: AnalyticModel,
    system: &LocalizationSystem,
    profile: &LegitimateProfile,
    pos: &Point,
    params: &ChannelParams,
) -> Result<WeightedChiSquareSpec> {
    match model {
        AnalyticModel::Projected => projected_spec(system, profile, pos, params),
        AnalyticModel::PerAnchor => {
            if *pos == profile.position() {
                spec_under_h0(system, profile, params)
            } else {
                spec_under_h1(system, profile, pos, params)
            }
        }
    }
}

/// `P(S <= x)` to absolute accuracy `tol`.
pub fn cdf_imhof(spec: &WeightedChiSquareSpec, x: f64, tol: f64) -> Result<f64> {
    Ok(imhof(spec, x, tol)?.cdf)
}

/// `P(S > x)` to absolute accuracy `tol`.
pub fn sf_imhof(spec: &WeightedChiSquareSpec, x: f64, tol: f64) -> Result<f64> {
    Ok(imhof(spec, x, tol)?.sf)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "threshold must be non-negative, got {threshold}"
        )))
    }
}

/// `P(TS > threshold | H0)`.
pub fn analytic_far(spec_h0: &WeightedChiSquareSpec, threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    sf_imhof(spec_h0, threshold, DEFAULT_TOL)
}

/// `P(TS <= threshold | H1)`.
pub fn analytic_mdr(spec_h1: &WeightedChiSquareSpec, threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    cdf_imhof(spec_h1, threshold, DEFAULT_TOL)
}

/// Analytic ROC over a strictly increasing, non-negative threshold grid.
pub fn analytic_roc(
    spec_h0: &WeightedChiSquareSpec,
    spec_h1: &WeightedChiSquareSpec,
    threshold_grid: &[f64],
) -> Result<RocCurve> {
    crate::simulator::check_grid(threshold_grid)?;
    let points = threshold_grid
        .par_iter()
        .map(|&t| {
            let pfa = analytic_far(spec_h0, t)?;
            let pd = 1.0 - analytic_mdr(spec_h1, t)?;
            Ok(RocPoint {
                threshold: t,
                pfa,
                pd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bytes = spec_h0.to_bytes();
    bytes.extend(spec_h1.to_bytes());
    Ok(RocCurve {
        points,
        provenance: RocProvenance::Analytic,
        fingerprint: crate::simulator::fingerprint(&bytes),
    })
}

/// Threshold at which `P(TS > threshold)` equals `far` under `spec`.
pub fn threshold_for_far(spec: &WeightedChiSquareSpec, far: f64) -> Result<f64> {
    if !(far > 0.0 && far < 1.0) {
        return Err(Error::domain(format!(
            "FAR target must lie in (0, 1), got {far}"
        )));
    }
    let sf = |x: f64| sf_imhof(spec, x, 1e-12);
    let mut hi = spec.mean().max(f64::MIN_POSITIVE);
    let mut guard = 0;
    while sf(hi)? > far {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::numerical(
                "threshold_for_far",
                "could not bracket the quantile",
            ));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if sf(mid)? > far {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
