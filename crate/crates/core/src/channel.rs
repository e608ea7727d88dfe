//! Underwater acoustic channel: Thorp absorption, spreading pathloss and the
//! resulting standard deviation of a ToA range estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Processing gain of a 127-chip pseudo-random probe occupying a flat 10 kHz
/// band. The estimator's Fisher information per unit SNR is
/// `N * (2*pi*B_rms)^2` with `B_rms = B / sqrt(12)` for a flat spectrum.
pub const PROBE_PROCESSING_GAIN: f64 =
    127.0 * (2.0 * std::f64::consts::PI * 1.0e4) * (2.0 * std::f64::consts::PI * 1.0e4) / 12.0;

/// Acoustic environment and transceiver constants.
///
/// Keys missing from a configuration file take the evaluation setup's values
/// (see [`crate::experiment::default_channel`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default = "crate::experiment::default_channel")]
pub struct ChannelParams {
    /// Carrier frequency in kHz.
    pub freq_khz: f64,
    /// Spreading factor (1 = cylindrical, 2 = spherical).
    pub spreading: f64,
    /// Speed of sound in m/s.
    pub sound_speed: f64,
    /// Transmit power in W. Only the ratio to the noise power enters the
    /// range noise, through `link_quality_db`.
    pub tx_power: f64,
    /// Link quality P/Pn in dB. `+inf` gives noiseless ranging.
    pub link_quality_db: f64,
    /// Processing gain of the ToA estimator (dimensionless).
    pub processing_gain: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            freq_khz: 22.0,
            spreading: 1.5,
            sound_speed: 1500.0,
            tx_power: 100.0,
            link_quality_db: 10.0,
            processing_gain: 1.0,
        }
    }
}

impl ChannelParams {
    /// Checks the parameter invariants. A spreading factor outside `[1, 2]`
    /// is accepted with a warning.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("freq_khz", self.freq_khz),
            ("sound_speed", self.sound_speed),
            ("tx_power", self.tx_power),
            ("processing_gain", self.processing_gain),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.spreading.is_finite() {
            return Err(Error::domain(format!(
                "spreading must be finite, got {}",
                self.spreading
            )));
        }
        if !(1.0..=2.0).contains(&self.spreading) {
            log::warn!("spreading factor {} outside [1, 2]", self.spreading);
        }
        if self.link_quality_db.is_nan() || self.link_quality_db == f64::NEG_INFINITY {
            return Err(Error::domain(format!(
                "link_quality_db must be a number or +inf, got {}",
                self.link_quality_db
            )));
        }
        Ok(())
    }

    /// Same parameters at another link quality.
    pub fn with_link_quality(mut self, lq_db: f64) -> Self {
        self.link_quality_db = lq_db;
        self
    }

    /// Link quality as a linear power ratio.
    pub fn link_quality_linear(&self) -> f64 {
        10f64.powf(self.link_quality_db / 10.0)
    }
}

/// Thorp absorption coefficient in dB/km for a frequency in kHz.
pub fn thorp_absorption(freq_khz: f64) -> Result<f64> {
    if !(freq_khz > 0.0 && freq_khz.is_finite()) {
        return Err(Error::domain(format!(
            "frequency must be positive, got {freq_khz} kHz"
        )));
    }
    let f2 = freq_khz * freq_khz;
    Ok(0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2 + 0.003)
}

/// Pathloss in dB over `dist_m` meters: spreading plus absorption, with the
/// absorption coefficient applied per kilometer.
pub fn pathloss_db(params: &ChannelParams, dist_m: f64) -> Result<f64> {
    if !(dist_m > 0.0 && dist_m.is_finite()) {
        return Err(Error::domain(format!(
            "distance must be positive, got {dist_m} m"
        )));
    }
    let alpha = thorp_absorption(params.freq_khz)?;
    Ok(params.spreading * 10.0 * dist_m.log10() + dist_m / 1000.0 * alpha)
}

/// Standard deviation in meters of the ToA range estimate at distance
/// `dist_m`.
pub fn distance_noise_sigma(params: &ChannelParams, dist_m: f64) -> Result<f64> {
    let pl_db = pathloss_db(params, dist_m)?;
    if params.link_quality_db == f64::INFINITY {
        return Ok(0.0);
    }
    let pl_lin = 10f64.powf(pl_db / 10.0);
    let lq_lin = params.link_quality_linear();
    Ok(params.sound_speed * (pl_lin / (4.0 * lq_lin * params.processing_gain)).sqrt())
}
