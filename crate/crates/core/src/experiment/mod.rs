//! Experiment configuration files, figure recipes and CSV output.
//!
//! A configuration is a TOML document; every key is optional and unknown keys
//! are rejected. Missing keys take the values of [`default_paper_config`]:
//!
//! ```toml
//! mode = "both"                 # analytic | montecarlo | both
//! figure = "fig2"               # optional: fig2 | fig3 | fig4 | fig5
//! out = "out"
//! seed = 20240611
//! trials = 1000000              # per hypothesis
//! analytic_model = "projected"  # projected | per_anchor
//!
//! [channel]
//! freq_khz = 22.0
//! spreading = 1.5
//! sound_speed = 1500.0
//! tx_power = 100.0
//! link_quality_db = 10.0
//! processing_gain = 4.178e10
//!
//! [geometry]
//! anchors = [[0.0, 500.0], [-500.0, -500.0], [500.0, -500.0]]
//! legitimate = [0.0, 0.0]
//!
//! [attacker]
//! kind = "box"                  # fixed (position) | box (extent) | circle (radius)
//! extent = 500.0
//!
//! [threshold]
//! far_target = 0.05             # or: value = 517132.57
//! reference_lq_db = 10.0
//!
//! [sweep]
//! axis = "link_quality_db"      # link_quality_db | radius_R | threshold
//! values = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
//!
//! [roc]
//! points = 41                   # or: grid = [...]
//! ```

mod output;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use output::{
    format_number, gnuplot_stub, write_baseline_csv, write_roc_csv, write_sweep_csv,
    BASELINE_HEADER, ROC_HEADER, SWEEP_HEADER,
};
pub use run::{
    baseline_path, build_scenario, resolve_threshold, run_analytic, run_experiment, run_figure,
    run_roc, run_sweep, BaselineRow, ExperimentOutput, SweepRow, SweepTable, FIG4_LQ_DB,
    FIG4_RADII,
};

use crate::analytic::AnalyticModel;
use crate::channel::{ChannelParams, PROBE_PROCESSING_GAIN};
use crate::error::{Error, Result};
use crate::simulator::SweepAxis;

/// Reference-node layout of the evaluation setup; the first three are used
/// for `L = 3`.
pub const REFERENCE_ANCHORS: [[f64; 2]; 5] = [
    [0.0, 500.0],
    [-500.0, -500.0],
    [500.0, -500.0],
    [-500.0, 500.0],
    [0.0, -500.0],
];

/// Link qualities of the evaluation sweeps, dB.
pub const LQ_SWEEP_DB: [f64; 7] = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Analytic,
    Montecarlo,
    #[default]
    Both,
}

impl Mode {
    pub fn analytic(&self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    pub fn montecarlo(&self) -> bool {
        matches!(self, Mode::Montecarlo | Mode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl FigureId {
    pub fn name(&self) -> &'static str {
        match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
        }
    }
}

impl std::str::FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(FigureId::Fig2),
            "fig3" => Ok(FigureId::Fig3),
            "fig4" => Ok(FigureId::Fig4),
            "fig5" => Ok(FigureId::Fig5),
            other => Err(Error::Config(format!(
                "unknown figure `{other}` (expected fig2, fig3, fig4 or fig5)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_anchors")]
    pub anchors: Vec<[f64; 2]>,
    #[serde(default)]
    pub legitimate: [f64; 2],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            anchors: default_anchors(),
            legitimate: [0.0, 0.0],
        }
    }
}

fn default_anchors() -> Vec<[f64; 2]> {
    REFERENCE_ANCHORS[..3].to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackerConfig {
    Fixed { position: [f64; 2] },
    Box { extent: f64 },
    Circle { radius: f64 },
}

impl Default for AttackerConfig {
    fn default() -> Self {
        AttackerConfig::Box { extent: 500.0 }
    }
}

/// Either a fixed threshold or a false-alarm target at a reference link
/// quality from which the threshold is computed analytically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_lq_db: Option<f64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            value: None,
            far_target: Some(0.05),
            reference_lq_db: Some(10.0),
        }
    }
}

impl ThresholdConfig {
    /// FAR target used to calibrate the distance baseline.
    pub fn baseline_far(&self) -> f64 {
        self.far_target.unwrap_or(0.05)
    }

    pub fn reference_lq(&self) -> f64 {
        self.reference_lq_db.unwrap_or(10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RocConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<FigureId>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub analytic_model: AnalyticModel,
    #[serde(default = "default_channel")]
    pub channel: ChannelParams,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub attacker: AttackerConfig,
    #[serde(default)]
    pub threshold: ThresholdConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc: Option<RocConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    20240611
}

fn default_trials() -> u64 {
    1_000_000
}

/// Channel of the evaluation setup with the probe processing gain.
pub fn default_channel() -> ChannelParams {
    ChannelParams {
        processing_gain: PROBE_PROCESSING_GAIN,
        ..ChannelParams::default()
    }
}

/// Evaluation setup with `L = 3` reference nodes.
pub fn default_paper_config() -> ExperimentConfig {
    ExperimentConfig {
        mode: Mode::Both,
        figure: None,
        out: default_out(),
        seed: default_seed(),
        trials: default_trials(),
        analytic_model: AnalyticModel::Projected,
        channel: default_channel(),
        geometry: GeometryConfig::default(),
        attacker: AttackerConfig::default(),
        threshold: ThresholdConfig::default(),
        sweep: None,
        roc: None,
    }
}

/// Evaluation setup using the first `l` (3 to 5) reference nodes.
pub fn default_config_with_anchors(l: usize) -> Result<ExperimentConfig> {
    if !(3..=REFERENCE_ANCHORS.len()).contains(&l) {
        return Err(Error::Config(format!(
            "the evaluation layout has 3 to 5 reference nodes, got {l}"
        )));
    }
    let mut c = default_paper_config();
    c.geometry.anchors = REFERENCE_ANCHORS[..l].to_vec();
    Ok(c)
}

/// Dotted key of the `key = value` line containing byte `offset`, with the
/// enclosing table header as prefix.
fn offending_key(text: &str, offset: usize) -> Option<String> {
    let start = text[..offset.min(text.len())]
        .rfind('\n')
        .map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let (key, _) = line.split_once('=')?;
    let key = key.trim();
    if key.is_empty() || key.starts_with('[') {
        return None;
    }
    let table = text[..start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    Some(match table {
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    })
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            match e.span().and_then(|sp| offending_key(text, sp.start)) {
                Some(key) => Error::Config(format!("{key}: {e}")),
                None => Error::Config(e.to_string()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks value ranges; messages name the offending key.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.trials == 0 {
            return bad("trials", "must be a positive integer".into());
        }
        if let Err(Error::Domain(msg)) = self.channel.validate() {
            return bad("channel", msg);
        }
        if self.geometry.anchors.len() < 3 {
            return bad(
                "geometry.anchors",
                format!(
                    "need at least 3 reference nodes, got {}",
                    self.geometry.anchors.len()
                ),
            );
        }
        if self
            .geometry
            .anchors
            .iter()
            .flatten()
            .chain(&self.geometry.legitimate)
            .any(|v| !v.is_finite())
        {
            return bad("geometry", "coordinates must be finite".into());
        }
        match self.attacker {
            AttackerConfig::Fixed { position } if !position.iter().all(|v| v.is_finite()) => {
                return bad("attacker.position", "must be finite".into())
            }
            AttackerConfig::Box { extent } if !(extent > 0.0 && extent.is_finite()) => {
                return bad("attacker.extent", format!("must be positive, got {extent}"))
            }
            AttackerConfig::Circle { radius } if !(radius > 0.0 && radius.is_finite()) => {
                return bad("attacker.radius", format!("must be positive, got {radius}"))
            }
            _ => {}
        }
        let t = &self.threshold;
        match (t.value, t.far_target) {
            (Some(_), Some(_)) => {
                return bad(
                    "threshold",
                    "set either `value` or `far_target`, not both".into(),
                )
            }
            (None, None) => return bad("threshold", "set `value` or `far_target`".into()),
            (Some(v), None) if !(v >= 0.0 && v.is_finite()) => {
                return bad("threshold.value", format!("must be non-negative, got {v}"))
            }
            (None, Some(f)) if !(f > 0.0 && f < 1.0) => {
                return bad(
                    "threshold.far_target",
                    format!("must lie in (0, 1), got {f}"),
                )
            }
            _ => {}
        }
        if let Some(r) = t.reference_lq_db {
            if !r.is_finite() {
                return bad(
                    "threshold.reference_lq_db",
                    format!("must be finite, got {r}"),
                );
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return bad("sweep.values", "must not be empty".into());
            }
            if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
                return bad("sweep.values", format!("must be finite, got {v}"));
            }
            if s.axis == SweepAxis::RadiusR && s.values.iter().any(|v| *v <= 0.0) {
                return bad("sweep.values", "radii must be positive".into());
            }
            if s.axis == SweepAxis::Threshold && s.values.iter().any(|v| *v < 0.0) {
                return bad("sweep.values", "thresholds must be non-negative".into());
            }
        }
        if let Some(r) = &self.roc {
            if let Some(g) = &r.grid {
                if g.is_empty()
                    || g.iter().any(|v| !(*v >= 0.0 && v.is_finite()))
                    || g.windows(2).any(|w| w[1] <= w[0])
                {
                    return bad(
                        "roc.grid",
                        "must be non-empty, non-negative and strictly increasing".into(),
                    );
                }
            }
            if r.points == Some(0) {
                return bad("roc.points", "must be positive".into());
            }
        }
        Ok(())
    }

    /// Fingerprint of the full configuration.
    pub fn fingerprint(&self) -> String {
        crate::simulator::fingerprint(self.to_toml_string().unwrap_or_default().as_bytes())
    }
}
