//! Position-based physical-layer authentication for underwater acoustic
//! networks.
//!
//! A transmitter is localized by ToA multilateration against a set of
//! reference nodes; the squared, operator-weighted distance between the
//! estimate and the enrolled position of the legitimate node is thresholded
//! to decide between the legitimate hypothesis (H0) and an impersonating
//! attacker (H1).
//!
//! The crate is organized as
//!
//! * [`channel`]: Thorp absorption, pathloss and the ToA range-noise model,
//! * [`localization`]: anchor geometry and the linear least-squares solver,
//! * [`authenticator`]: the test statistic, the threshold test and the
//!   per-anchor distance baseline,
//! * [`analytic`]: weighted non-central chi-square laws of the statistic and
//!   their CDFs (Imhof inversion and a Laguerre series),
//! * [`simulator`]: the seeded, parallel Monte Carlo engine,
//! * [`experiment`]: configuration files, figure recipes and CSV output.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod authenticator;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod localization;
pub mod simulator;

pub use analytic::{
    analytic_far, analytic_mdr, analytic_roc, cdf_imhof, cdf_laguerre, AnalyticModel,
    LaguerreSeriesParams, WeightedChiSquareSpec,
};
pub use authenticator::{decide, AuthDecision, BaselineDetector, LegitimateProfile, Verdict};
pub use channel::ChannelParams;
pub use error::{Error, Result};
pub use experiment::{default_paper_config, ExperimentConfig};
pub use localization::{DistanceMeasurement, LocalizationSystem, Point, ReferenceNodeSet};
pub use simulator::{AttackerModel, ErrorRates, RocCurve, Scenario};
