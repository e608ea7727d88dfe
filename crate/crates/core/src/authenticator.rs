//! Position-fingerprint test statistic, the threshold decision, and the
//! per-anchor distance-fingerprint baseline.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::channel::{distance_noise_sigma, ChannelParams};
use crate::error::{Error, Result};
use crate::localization::{DistanceMeasurement, LocalizationSystem, Point};

/// Hypothesis selected by the threshold test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    /// H0: the transmission came from the enrolled node.
    Legitimate,
    /// H1: the transmission came from somewhere else.
    Malicious,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuthDecision {
    pub statistic: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Enrolled position of the legitimate node and its true anchor ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct LegitimateProfile {
    position: Point,
    distances: Vec<f64>,
}

impl LegitimateProfile {
    pub fn new(system: &LocalizationSystem, position: Point) -> Result<Self> {
        let distances = system.distances(&position)?;
        Ok(LegitimateProfile {
            position,
            distances,
        })
    }

    pub fn position(&self) -> Point {
        self.position
    }

    /// True range from the enrolled position to each anchor.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }
}

/// `||T (x_est - x_A)||^2` where `T` is the pseudo-inverse of the coordinate
/// rows of the least-squares operator.
pub fn test_statistic(
    system: &LocalizationSystem,
    profile: &LegitimateProfile,
    est_pos: &Point,
) -> f64 {
    let delta = est_pos - profile.position;
    let v = system.ts_operator() * nalgebra::DVector::from_column_slice(delta.as_slice());
    v.norm_squared()
}

/// Same value as [`test_statistic`] through the 2 x 2 Gram matrix.
#[inline]
pub fn test_statistic_fast(
    system: &LocalizationSystem,
    profile: &LegitimateProfile,
    est_pos: &Point,
) -> f64 {
    let d = est_pos - profile.position;
    let g = system.ts_gram();
    g[(0, 0)] * d.x * d.x + (g[(0, 1)] + g[(1, 0)]) * d.x * d.y + g[(1, 1)] * d.y * d.y
}

/// Malicious iff `statistic > threshold`; ties go to the legitimate side.
pub fn decide(statistic: f64, threshold: f64) -> Result<AuthDecision> {
    if !(threshold >= 0.0) {
        return Err(Error::domain(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let verdict = if statistic > threshold {
        Verdict::Malicious
    } else {
        Verdict::Legitimate
    };
    Ok(AuthDecision {
        statistic,
        threshold,
        verdict,
    })
}

/// `|d_est_i - d_A_i|` for one anchor.
pub fn distance_baseline_statistic(
    profile: &LegitimateProfile,
    meas: &DistanceMeasurement,
    anchor_index: usize,
) -> Result<f64> {
    let (Some(est), Some(true_d)) = (
        meas.estimates.get(anchor_index),
        profile.distances.get(anchor_index),
    ) else {
        return Err(Error::domain(format!(
            "anchor index {anchor_index} out of range for {} anchors",
            profile.distances.len()
        )));
    };
    Ok((est - true_d).abs())
}

/// Per-anchor range test `|d_est_i - d_A_i| > tau_i`.
///
/// Each `tau_i` is placed at the two-sided Gaussian quantile for a target
/// false-alarm rate at a reference link quality, so the baseline and the
/// position test share the same operating point there.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineDetector {
    pub thresholds: Vec<f64>,
}

impl BaselineDetector {
    pub fn calibrate(
        profile: &LegitimateProfile,
        params: &ChannelParams,
        far_target: f64,
        reference_lq_db: f64,
    ) -> Result<Self> {
        if !(far_target > 0.0 && far_target < 1.0) {
            return Err(Error::domain(format!(
                "FAR target must lie in (0, 1), got {far_target}"
            )));
        }
        let z = std_normal().inverse_cdf(1.0 - far_target / 2.0);
        let p = params.with_link_quality(reference_lq_db);
        let thresholds = profile
            .distances
            .iter()
            .map(|d| Ok(z * distance_noise_sigma(&p, *d)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(BaselineDetector { thresholds })
    }

    /// Per-anchor probability that a range with mean offset `offsets[i]` and
    /// noise `sigmas[i]` stays inside the acceptance band.
    pub fn accept_probabilities(&self, offsets: &[f64], sigmas: &[f64]) -> Vec<f64> {
        (0..self.thresholds.len())
            .map(|i| self.accept_probability(i, offsets[i], sigmas[i]))
            .collect()
    }

    /// Folded-normal acceptance `P(|N(offset, sigma^2)| <= tau_i)`.
    pub fn accept_probability(&self, i: usize, offset: f64, sigma: f64) -> f64 {
        let tau = self.thresholds[i];
        if sigma == 0.0 {
            return if offset.abs() <= tau { 1.0 } else { 0.0 };
        }
        let n = std_normal();
        (n.cdf((tau - offset) / sigma) - n.cdf((-tau - offset) / sigma)).clamp(0.0, 1.0)
    }
}

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}
