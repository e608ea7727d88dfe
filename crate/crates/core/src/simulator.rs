//! Seeded Monte Carlo engine for the full nonlinear pipeline.
//!
//! Trials run in chunks of [`CHUNK`]. Chunk `k` of hypothesis `h` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `(h << 32) | k`, so every
//! trial's random numbers are fixed by the seed alone and per-chunk integer
//! counts can be reduced in any order. Results are bit-identical for any
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analytic::{self, imhof, AnalyticModel, DEFAULT_TOL};
use crate::authenticator::{test_statistic_fast, BaselineDetector, LegitimateProfile};
use crate::channel::{distance_noise_sigma, ChannelParams};
use crate::error::{Error, Result};
use crate::localization::{LocalizationSystem, Point};

/// Trials per random stream.
pub const CHUNK: u64 = 4096;

/// Angles used to average over a circle of attacker positions.
pub const CIRCLE_ANGLES: usize = 64;

const PHASE_H0: u64 = 0;
const PHASE_H1: u64 = 1;

/// Where the attacker transmits from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackerModel {
    Fixed(Point),
    /// Uniform over the square `X_A +- extent` in both coordinates.
    UniformBox {
        extent: f64,
    },
    /// Uniform on the circle of radius `radius` around `X_A`.
    Circle {
        radius: f64,
    },
}

impl AttackerModel {
    fn validate(&self) -> Result<()> {
        match *self {
            AttackerModel::Fixed(p) if !(p.x.is_finite() && p.y.is_finite()) => {
                Err(Error::domain("attacker position must be finite"))
            }
            AttackerModel::UniformBox { extent } if !(extent > 0.0 && extent.is_finite()) => {
                Err(Error::domain(format!(
                    "attacker box extent must be positive, got {extent}"
                )))
            }
            AttackerModel::Circle { radius } if !(radius > 0.0 && radius.is_finite()) => Err(
                Error::domain(format!("attacker radius must be positive, got {radius}")),
            ),
            _ => Ok(()),
        }
    }

    fn draw<R: Rng>(&self, center: &Point, rng: &mut R) -> Point {
        match *self {
            AttackerModel::Fixed(p) => p,
            AttackerModel::UniformBox { extent } => {
                center
                    + Point::new(
                        rng.gen_range(-extent..extent),
                        rng.gen_range(-extent..extent),
                    )
            }
            AttackerModel::Circle { radius } => {
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                center + radius * Point::new(theta.cos(), theta.sin())
            }
        }
    }
}

/// One experiment point.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub channel: ChannelParams,
    pub system: LocalizationSystem,
    pub legitimate: LegitimateProfile,
    pub attacker: AttackerModel,
    pub threshold: f64,
    /// Trials per hypothesis.
    pub trials: u64,
    pub seed: u64,
    /// Distance baseline evaluated on the same draws, if any.
    pub baseline: Option<BaselineDetector>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.attacker.validate()?;
        if self.trials == 0 {
            return Err(Error::domain("trials must be at least 1"));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::domain(format!(
                "threshold must be non-negative, got {}",
                self.threshold
            )));
        }
        if let Some(b) = &self.baseline {
            if b.thresholds.len() != self.system.len() {
                return Err(Error::domain(
                    "baseline thresholds do not match the anchor count",
                ));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the scenario's full parameter set.
    pub fn fingerprint(&self) -> String {
        fingerprint(format!("{self:?}").as_bytes())
    }
}

/// Empirical rates of one distance-baseline run.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRates {
    /// Smallest per-anchor false-alarm rate.
    pub far: f64,
    /// Smallest per-anchor missed-detection rate.
    pub mdr: f64,
    pub ci_far: f64,
    pub ci_mdr: f64,
    pub anchor_far: Vec<f64>,
    pub anchor_mdr: Vec<f64>,
}

/// Empirical FAR and MDR with 95% binomial half-widths.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRates {
    pub empirical_far: f64,
    pub empirical_mdr: f64,
    pub trials_h0: u64,
    pub trials_h1: u64,
    pub ci_far: f64,
    pub ci_mdr: f64,
    pub seed: u64,
    pub baseline: Option<BaselineRates>,
}

/// `1.96 sqrt(p (1 - p) / n)`.
pub fn binomial_halfwidth(p: f64, n: u64) -> f64 {
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RocProvenance {
    Analytic,
    Empirical,
    Baseline,
}

impl RocProvenance {
    pub fn name(&self) -> &'static str {
        match self {
            RocProvenance::Analytic => "analytic",
            RocProvenance::Empirical => "empirical",
            RocProvenance::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub pfa: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Points in strictly increasing threshold order.
    pub points: Vec<RocPoint>,
    pub provenance: RocProvenance,
    pub fingerprint: String,
}

impl RocCurve {
    /// Detection probability at false-alarm rate `pfa`, interpolated
    /// linearly between neighbouring points.
    pub fn pd_at_pfa(&self, pfa: f64) -> Option<f64> {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.pfa, p.pd)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        if pts.is_empty() || pfa < pts[0].0 || pfa > pts[pts.len() - 1].0 {
            return None;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if pfa >= x0 && pfa <= x1 {
                if x1 == x0 {
                    return Some(y0.max(y1));
                }
                return Some(y0 + (y1 - y0) * (pfa - x0) / (x1 - x0));
            }
        }
        Some(pts[0].1)
    }
}

pub(crate) fn fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("threshold grid is empty"));
    }
    if grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::domain(
            "threshold grid values must be finite and non-negative",
        ));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("threshold grid must be strictly increasing"));
    }
    Ok(())
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sweep point `index` derived from `master`.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

struct Engine<'a> {
    s: &'a Scenario,
    legit_sigmas: Vec<f64>,
    fixed_attacker: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Default)]
struct Counts {
    errors: u64,
    baseline: Vec<u64>,
}

impl Counts {
    fn merge(mut self, other: Counts) -> Counts {
        self.errors += other.errors;
        if self.baseline.is_empty() {
            self.baseline = other.baseline;
        } else {
            for (a, b) in self.baseline.iter_mut().zip(other.baseline) {
                *a += b;
            }
        }
        self
    }
}

impl<'a> Engine<'a> {
    fn new(s: &'a Scenario) -> Result<Self> {
        s.validate()?;
        let legit_sigmas = sigmas(&s.channel, s.legitimate.distances())?;
        let fixed_attacker = match s.attacker {
            AttackerModel::Fixed(p) => {
                let d = s.system.distances(&p)?;
                let sg = sigmas(&s.channel, &d)?;
                Some((d, sg))
            }
            _ => None,
        };
        Ok(Engine {
            s,
            legit_sigmas,
            fixed_attacker,
        })
    }

    fn rng(&self, phase: u64, chunk: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.s.seed);
        rng.set_stream((phase << 32) | chunk);
        rng
    }

    fn chunks(&self) -> Vec<(u64, u64)> {
        let n = self.s.trials;
        (0..n.div_ceil(CHUNK))
            .map(|k| (k, CHUNK.min(n - k * CHUNK)))
            .collect()
    }

    /// Runs one chunk and hands `(statistic, ranges)` of every trial to `visit`.
    fn run_chunk<F: FnMut(f64, &[f64])>(
        &self,
        phase: u64,
        chunk: u64,
        n: u64,
        mut visit: F,
    ) -> Result<()> {
        let sys = &self.s.system;
        let l = sys.len();
        let mut rng = self.rng(phase, chunk);
        let mut ranges = vec![0.0; l];
        let mut b = vec![0.0; l];
        let mut dist = vec![0.0; l];
        let mut sig = vec![0.0; l];
        let center = self.s.legitimate.position();
        for _ in 0..n {
            let (d, sg): (&[f64], &[f64]) = if phase == PHASE_H0 {
                (self.s.legitimate.distances(), &self.legit_sigmas)
            } else if let Some((d, sg)) = &self.fixed_attacker {
                (d, sg)
            } else {
                loop {
                    let p = self.s.attacker.draw(&center, &mut rng);
                    let mut ok = true;
                    for (i, a) in sys.anchors().iter().enumerate() {
                        dist[i] = (p - a).norm();
                        ok &= dist[i] > 0.0;
                    }
                    if ok {
                        break;
                    }
                }
                for i in 0..l {
                    sig[i] = distance_noise_sigma(&self.s.channel, dist[i])?;
                }
                (&dist, &sig)
            };
            for i in 0..l {
                let z: f64 = rng.sample(StandardNormal);
                ranges[i] = d[i] + sg[i] * z;
            }
            sys.fill_b(&ranges, &mut b);
            let est = sys.solve_slice(&b);
            visit(test_statistic_fast(sys, &self.s.legitimate, &est), &ranges);
        }
        Ok(())
    }

    fn count(&self, phase: u64) -> Result<Counts> {
        let eps = self.s.threshold;
        let base = self.s.baseline.as_ref();
        let legit_d = self.s.legitimate.distances();
        let h0 = phase == PHASE_H0;
        let parts = self
            .chunks()
            .into_par_iter()
            .map(|(k, n)| {
                let mut c = Counts {
                    errors: 0,
                    baseline: vec![0; if base.is_some() { legit_d.len() } else { 0 }],
                };
                self.run_chunk(phase, k, n, |ts, ranges| {
                    // H0 errs on rejection, H1 on acceptance; ties accept.
                    if (ts > eps) == h0 {
                        c.errors += 1;
                    }
                    if let Some(bd) = base {
                        for i in 0..ranges.len() {
                            if ((ranges[i] - legit_d[i]).abs() > bd.thresholds[i]) == h0 {
                                c.baseline[i] += 1;
                            }
                        }
                    }
                })?;
                Ok(c)
            })
            .collect::<Result<Vec<Counts>>>()?;
        Ok(parts.into_iter().fold(Counts::default(), Counts::merge))
    }

    fn samples(&self, phase: u64) -> Result<Vec<f64>> {
        let parts = self
            .chunks()
            .into_par_iter()
            .map(|(k, n)| {
                let mut v = Vec::with_capacity(n as usize);
                self.run_chunk(phase, k, n, |ts, _| v.push(ts))?;
                Ok(v)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(parts.concat())
    }
}

fn sigmas(params: &ChannelParams, d: &[f64]) -> Result<Vec<f64>> {
    d.iter()
        .map(|di| distance_noise_sigma(params, *di))
        .collect()
}

/// Empirical FAR and MDR of the scenario.
pub fn run_trials(scenario: &Scenario) -> Result<ErrorRates> {
    let engine = Engine::new(scenario)?;
    let h0 = engine.count(PHASE_H0)?;
    let h1 = engine.count(PHASE_H1)?;
    let n = scenario.trials;
    let far = h0.errors as f64 / n as f64;
    let mdr = h1.errors as f64 / n as f64;
    let baseline = scenario.baseline.as_ref().map(|_| {
        let anchor_far: Vec<f64> = h0.baseline.iter().map(|c| *c as f64 / n as f64).collect();
        let anchor_mdr: Vec<f64> = h1.baseline.iter().map(|c| *c as f64 / n as f64).collect();
        let bfar = anchor_far.iter().cloned().fold(1.0, f64::min);
        let bmdr = anchor_mdr.iter().cloned().fold(1.0, f64::min);
        BaselineRates {
            far: bfar,
            mdr: bmdr,
            ci_far: binomial_halfwidth(bfar, n),
            ci_mdr: binomial_halfwidth(bmdr, n),
            anchor_far,
            anchor_mdr,
        }
    });
    Ok(ErrorRates {
        empirical_far: far,
        empirical_mdr: mdr,
        trials_h0: n,
        trials_h1: n,
        ci_far: binomial_halfwidth(far, n),
        ci_mdr: binomial_halfwidth(mdr, n),
        seed: scenario.seed,
        baseline,
    })
}

/// Test statistics of every trial under H0 and H1, in trial order.
pub fn sample_statistics(scenario: &Scenario) -> Result<(Vec<f64>, Vec<f64>)> {
    let engine = Engine::new(scenario)?;
    Ok((engine.samples(PHASE_H0)?, engine.samples(PHASE_H1)?))
}

/// Empirical ROC from one shared sample set per hypothesis.
pub fn empirical_roc(scenario: &Scenario, threshold_grid: &[f64]) -> Result<RocCurve> {
    check_grid(threshold_grid)?;
    let (mut h0, mut h1) = sample_statistics(scenario)?;
    h0.sort_by(f64::total_cmp);
    h1.sort_by(f64::total_cmp);
    let above =
        |v: &[f64], t: f64| (v.len() - v.partition_point(|x| *x <= t)) as f64 / v.len() as f64;
    let points = threshold_grid
        .iter()
        .map(|&t| RocPoint {
            threshold: t,
            pfa: above(&h0, t),
            pd: above(&h1, t),
        })
        .collect();
    Ok(RocCurve {
        points,
        provenance: RocProvenance::Empirical,
        fingerprint: scenario.fingerprint(),
    })
}

/// Quantity varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    LinkQualityDb,
    #[serde(rename = "radius_R", alias = "radius")]
    RadiusR,
    Threshold,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::LinkQualityDb => "link_quality_db",
            SweepAxis::RadiusR => "radius_R",
            SweepAxis::Threshold => "threshold",
        }
    }
}

/// `template` with the sweep value at `index` applied and its sub-seed set.
pub fn sweep_point(
    template: &Scenario,
    axis: SweepAxis,
    value: f64,
    index: usize,
) -> Result<Scenario> {
    if !value.is_finite() {
        return Err(Error::domain(format!("sweep value {value} is not finite")));
    }
    let mut s = template.clone();
    match axis {
        SweepAxis::LinkQualityDb => s.channel.link_quality_db = value,
        SweepAxis::RadiusR => s.attacker = AttackerModel::Circle { radius: value },
        SweepAxis::Threshold => s.threshold = value,
    }
    s.seed = sub_seed(template.seed, index as u64);
    s.validate()?;
    Ok(s)
}

/// One [`ErrorRates`] per sweep value.
pub fn sweep(template: &Scenario, axis: SweepAxis, values: &[f64]) -> Result<Vec<ErrorRates>> {
    if values.is_empty() {
        return Err(Error::domain("sweep needs at least one value"));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, v)| run_trials(&sweep_point(template, axis, *v, i)?))
        .collect()
}

/// Attacker positions and weights (summing to one) that integrate a
/// function of the attacker position against the attacker model.
fn circle_nodes(center: &Point, radius: f64, n: usize) -> Vec<(Point, f64)> {
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
            (
                center + radius * Point::new(theta.cos(), theta.sin()),
                1.0 / n as f64,
            )
        })
        .collect()
}

/// Analytic FAR of the scenario under `model`.
pub fn analytic_far_for(scenario: &Scenario, model: AnalyticModel) -> Result<f64> {
    let s = scenario;
    let spec = analytic::ts_spec(
        model,
        &s.system,
        &s.legitimate,
        &s.legitimate.position(),
        &s.channel,
    )?;
    analytic::analytic_far(&spec, s.threshold)
}

/// Analytic MDR of the scenario under `model`, averaged over the attacker
/// model.
pub fn analytic_mdr_for(scenario: &Scenario, model: AnalyticModel) -> Result<f64> {
    let s = scenario;
    let center = s.legitimate.position();
    let mdr_at = |p: &Point| -> Result<f64> {
        let spec = analytic::ts_spec(model, &s.system, &s.legitimate, p, &s.channel)?;
        analytic::analytic_mdr(&spec, s.threshold)
    };
    match s.attacker {
        AttackerModel::Fixed(p) => mdr_at(&p),
        AttackerModel::Circle { radius } => {
            let nodes = circle_nodes(&center, radius, CIRCLE_ANGLES);
            let vals = nodes
                .par_iter()
                .map(|(p, w)| Ok(w * mdr_at(p)?))
                .collect::<Result<Vec<f64>>>()?;
            Ok(vals.iter().sum())
        }
        AttackerModel::UniformBox { extent } => box_average(s, model, extent),
    }
}

// The missed-detection probability is negligible unless the attacker sits
// within a few noise lengths of X_A, so the box average is integrated in
// polar coordinates around X_A out to the radius where a Chernoff bound
// shows the integrand is below DEFAULT_TOL.
fn box_average(s: &Scenario, model: AnalyticModel, extent: f64) -> Result<f64> {
    let center = s.legitimate.position();
    let area = 4.0 * extent * extent;
    let n_theta = CIRCLE_ANGLES;
    let spec_at = |p: &Point| analytic::ts_spec(model, &s.system, &s.legitimate, p, &s.channel);
    let ring_bound = |r: f64| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (p, _) in circle_nodes(&center, r, n_theta) {
            worst = worst.max(imhof::chernoff_lower(&spec_at(&p)?, s.threshold));
        }
        Ok(worst)
    };
    let mut r_cut = 1e-3;
    let r_max = extent * std::f64::consts::SQRT_2;
    while r_cut < r_max && ring_bound(r_cut)? > 0.1 * DEFAULT_TOL {
        r_cut *= 1.5;
    }
    let r_cut = r_cut.min(r_max);

    let inside = |p: &Point| (p.x - center.x).abs() <= extent && (p.y - center.y).abs() <= extent;
    let mut err: Option<Error> = None;
    let integrand = |r: f64| -> f64 {
        if err.is_some() || r == 0.0 {
            return 0.0;
        }
        let nodes = circle_nodes(&center, r, n_theta);
        let vals: Result<Vec<f64>> = nodes
            .par_iter()
            .map(|(p, w)| {
                if !inside(p) {
                    return Ok(0.0);
                }
                let spec = spec_at(p)?;
                Ok(w * analytic::analytic_mdr(&spec, s.threshold)?)
            })
            .collect();
        match vals {
            Ok(v) => std::f64::consts::TAU * r * v.iter().sum::<f64>(),
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    };
    let breaks: Vec<f64> = (0..=8).map(|k| r_cut * k as f64 / 8.0).collect();
    let res = crate::analytic::quadrature::integrate(integrand, &breaks, 1e-9 * area, 400);
    if let Some(e) = err {
        return Err(e);
    }
    if !res.converged {
        return Err(Error::numerical(
            "analytic_mdr_for",
            format!(
                "box average did not converge (error {:.3e}, {} panels)",
                res.error, res.panels
            ),
        ));
    }
    Ok((res.value / area).clamp(0.0, 1.0))
}

/// Analytic FAR and MDR of the distance baseline (smallest over anchors).
pub fn baseline_analytic(scenario: &Scenario) -> Result<(f64, f64)> {
    let s = scenario;
    let Some(bd) = &s.baseline else {
        return Err(Error::domain("scenario has no distance baseline"));
    };
    let legit_d = s.legitimate.distances();
    let legit_sig = sigmas(&s.channel, legit_d)?;
    let far = bd
        .accept_probabilities(&vec![0.0; legit_d.len()], &legit_sig)
        .iter()
        .map(|a| 1.0 - a)
        .fold(1.0, f64::min);

    let l = legit_d.len();
    let center = s.legitimate.position();
    let mdr_per_anchor: Vec<f64> = match s.attacker {
        AttackerModel::Fixed(p) => {
            let d = s.system.distances(&p)?;
            let off: Vec<f64> = d.iter().zip(legit_d).map(|(a, b)| a - b).collect();
            bd.accept_probabilities(&off, &sigmas(&s.channel, &d)?)
        }
        AttackerModel::Circle { radius } => {
            // The acceptance band of one anchor can cut the circle in short
            // arcs, so the angular grid is much finer than for the position test.
            let nodes = circle_nodes(&center, radius, 4096);
            let mut acc = vec![0.0; l];
            for (p, w) in nodes {
                let d = s.system.distances(&p)?;
                let off: Vec<f64> = d.iter().zip(legit_d).map(|(a, b)| a - b).collect();
                for (a, v) in acc
                    .iter_mut()
                    .zip(bd.accept_probabilities(&off, &sigmas(&s.channel, &d)?))
                {
                    *a += w * v;
                }
            }
            acc
        }
        AttackerModel::UniformBox { extent } => (0..l)
            .map(|i| baseline_box_mdr(s, bd, i, extent))
            .collect::<Result<Vec<f64>>>()?,
    };
    Ok((far, mdr_per_anchor.iter().cloned().fold(1.0, f64::min)))
}

// Anchor i accepts an attacker whose range to anchor i lies within the
// acceptance band around d_i^A. Acceptance depends only on that range r,
// so the box average reduces to a radial integral weighted by the angular
// measure of the circle of radius r around the anchor inside the box.
fn baseline_box_mdr(s: &Scenario, bd: &BaselineDetector, i: usize, extent: f64) -> Result<f64> {
    let anchor = s.system.anchors()[i];
    let da = s.legitimate.distances()[i];
    let tau = bd.thresholds[i];
    let center = s.legitimate.position();
    let (x0, x1, y0, y1) = (
        center.x - extent,
        center.x + extent,
        center.y - extent,
        center.y + extent,
    );
    let area = 4.0 * extent * extent;
    let sig_far = distance_noise_sigma(&s.channel, da + tau + 1.0)?;
    let half = tau + 12.0 * sig_far.max(1e-9) + 1e-6;
    let lo = (da - half).max(1e-9);
    let hi = da + half;
    let mut err: Option<Error> = None;
    let integrand = |r: f64| -> f64 {
        let sig = match distance_noise_sigma(&s.channel, r) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                return 0.0;
            }
        };
        let acc = bd.accept_probability(i, r - da, sig);
        acc * r * arc_inside(&anchor, r, x0, x1, y0, y1)
    };
    let breaks: Vec<f64> = (0..=16).map(|k| lo + (hi - lo) * k as f64 / 16.0).collect();
    let res = crate::analytic::quadrature::integrate(integrand, &breaks, 1e-12 * area, 2000);
    if let Some(e) = err {
        return Err(e);
    }
    Ok((res.value / area).clamp(0.0, 1.0))
}

/// Angular measure (radians) of the circle of radius `r` around `c` that lies
/// inside the rectangle `[x0, x1] x [y0, y1]`.
pub fn arc_inside(c: &Point, r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let mut cuts = vec![0.0, std::f64::consts::TAU];
    let mut add = |v: f64| {
        let t = v.rem_euclid(std::f64::consts::TAU);
        cuts.push(t);
    };
    for x in [x0, x1] {
        let u = (x - c.x) / r;
        if u.abs() <= 1.0 {
            let a = u.acos();
            add(a);
            add(-a);
        }
    }
    for y in [y0, y1] {
        let u = (y - c.y) / r;
        if u.abs() <= 1.0 {
            let a = u.asin();
            add(a);
            add(std::f64::consts::PI - a);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let p = c + r * Point::new(mid.cos(), mid.sin());
        if p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1 {
            total += w[1] - w[0];
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PROBE_PROCESSING_GAIN;

    const ANCHORS3: [[f64; 2]; 3] = [[0.0, 500.0], [-500.0, -500.0], [500.0, -500.0]];

    fn scenario(lq: f64, attacker: AttackerModel, threshold: f64, trials: u64) -> Scenario {
        let system = LocalizationSystem::from_pairs(&ANCHORS3).unwrap();
        let legitimate = LegitimateProfile::new(&system, Point::zeros()).unwrap();
        let channel = ChannelParams {
            processing_gain: PROBE_PROCESSING_GAIN,
            link_quality_db: lq,
            ..Default::default()
        };
        Scenario {
            channel,
            system,
            legitimate,
            attacker,
            threshold,
            trials,
            seed: 17,
            baseline: None,
        }
    }

    #[test]
    fn noiseless_h0_never_alarms() {
        let s = scenario(
            f64::INFINITY,
            AttackerModel::Fixed(Point::new(1.0, 1.0)),
            1e-9,
            10_000,
        );
        let r = run_trials(&s).unwrap();
        assert_eq!(r.empirical_far, 0.0);
        assert_eq!(r.empirical_mdr, 0.0);
    }

    #[test]
    fn attacker_at_legitimate_position_mirrors_far() {
        let s = scenario(
            0.0,
            AttackerModel::Fixed(Point::new(1e-7, 0.0)),
            500_000.0,
            200_000,
        );
        let r = run_trials(&s).unwrap();
        let tol = 4.0 * (r.ci_far + r.ci_mdr);
        assert!((r.empirical_mdr - (1.0 - r.empirical_far)).abs() < tol);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let s = scenario(
            0.0,
            AttackerModel::UniformBox { extent: 5.0 },
            400_000.0,
            50_000,
        );
        let a = run_trials(&s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| run_trials(&s)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c = pool.install(|| run_trials(&s)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn common_random_numbers_are_monotone() {
        let s = scenario(0.0, AttackerModel::Circle { radius: 1.0 }, 0.0, 20_000);
        let h0 = analytic::ts_spec(
            AnalyticModel::Projected,
            &s.system,
            &s.legitimate,
            &Point::zeros(),
            &s.channel,
        )
        .unwrap();
        let top = analytic::threshold_for_far(&h0, 1e-4).unwrap();
        let grid: Vec<f64> = (0..60).map(|k| k as f64 * top / 59.0).collect();
        let roc = empirical_roc(&s, &grid).unwrap();
        assert_eq!(roc.points[0].pfa, 1.0);
        for w in roc.points.windows(2) {
            assert!(w[1].pfa <= w[0].pfa);
            assert!(w[1].pd <= w[0].pd);
        }
        let last = roc.points.last().unwrap();
        assert!(last.pfa < 1e-3);
    }

    #[test]
    fn roc_extremes() {
        let s = scenario(10.0, AttackerModel::Fixed(Point::new(1.0, 1.0)), 0.0, 5_000);
        let roc = empirical_roc(&s, &[0.0, 1e12]).unwrap();
        assert_eq!((roc.points[0].pfa, roc.points[0].pd), (1.0, 1.0));
        assert_eq!((roc.points[1].pfa, roc.points[1].pd), (0.0, 0.0));
        assert!(empirical_roc(&s, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn far_at_analytic_five_percent_point() {
        let mut s = scenario(
            10.0,
            AttackerModel::Fixed(Point::new(300.0, 300.0)),
            0.0,
            1_000_000,
        );
        let h0 = analytic::ts_spec(
            AnalyticModel::Projected,
            &s.system,
            &s.legitimate,
            &Point::zeros(),
            &s.channel,
        )
        .unwrap();
        s.threshold = analytic::threshold_for_far(&h0, 0.05).unwrap();
        let r = run_trials(&s).unwrap();
        assert!(
            (0.04..=0.06).contains(&r.empirical_far),
            "{}",
            r.empirical_far
        );
        assert_eq!(r.empirical_mdr, 0.0);
    }

    #[test]
    fn sweep_uses_distinct_subseeds() {
        let s = scenario(0.0, AttackerModel::Circle { radius: 1.0 }, 400_000.0, 1_000);
        let rates = sweep(&s, SweepAxis::LinkQualityDb, &[0.0, 0.0]).unwrap();
        assert_ne!(rates[0].seed, rates[1].seed);
        assert_eq!(rates[0].seed, sub_seed(17, 0));
        assert!(sweep(&s, SweepAxis::Threshold, &[]).is_err());
        assert!(sweep(&s, SweepAxis::RadiusR, &[-1.0]).is_err());
    }

    #[test]
    fn box_attacker_analytic_matches_simulation() {
        // Small box so that the missed detections are frequent enough to
        // measure.
        let mut s = scenario(0.0, AttackerModel::UniformBox { extent: 4.0 }, 0.0, 400_000);
        let h0 = analytic::ts_spec(
            AnalyticModel::Projected,
            &s.system,
            &s.legitimate,
            &Point::zeros(),
            &s.channel,
        )
        .unwrap();
        s.threshold = analytic::threshold_for_far(&h0, 0.05).unwrap();
        let analytic = analytic_mdr_for(&s, AnalyticModel::Projected).unwrap();
        let r = run_trials(&s).unwrap();
        let sd = (analytic * (1.0 - analytic) / s.trials as f64).sqrt();
        assert!(
            (r.empirical_mdr - analytic).abs() < 4.0 * sd + 2e-3,
            "{} vs {analytic}",
            r.empirical_mdr
        );
    }

    #[test]
    fn baseline_analytic_matches_simulation() {
        let system = LocalizationSystem::from_pairs(&ANCHORS3).unwrap();
        let legitimate = LegitimateProfile::new(&system, Point::zeros()).unwrap();
        let channel = ChannelParams {
            processing_gain: PROBE_PROCESSING_GAIN,
            link_quality_db: 0.0,
            ..Default::default()
        };
        let bd = BaselineDetector::calibrate(&legitimate, &channel, 0.05, 10.0).unwrap();
        for attacker in [
            AttackerModel::UniformBox { extent: 500.0 },
            AttackerModel::Circle { radius: 3.0 },
        ] {
            let s = Scenario {
                channel,
                system: system.clone(),
                legitimate: legitimate.clone(),
                attacker,
                threshold: 1.0,
                trials: 1_000_000,
                seed: 5,
                baseline: Some(bd.clone()),
            };
            let (far, mdr) = baseline_analytic(&s).unwrap();
            let r = run_trials(&s).unwrap();
            let b = r.baseline.unwrap();
            assert!(
                (b.far - far).abs() < 4.0 * b.ci_far / 1.96 + 1e-4,
                "far {} vs {far}",
                b.far
            );
            let sd = (mdr * (1.0 - mdr) / 1e6).sqrt();
            assert!(
                (b.mdr - mdr).abs() < 4.0 * sd + 2e-5,
                "mdr {} vs {mdr}",
                b.mdr
            );
        }
    }

    #[test]
    fn arc_measure() {
        let c = Point::zeros();
        assert!((arc_inside(&c, 1.0, -2.0, 2.0, -2.0, 2.0) - std::f64::consts::TAU).abs() < 1e-12);
        assert!((arc_inside(&c, 1.0, 0.0, 2.0, -2.0, 2.0) - std::f64::consts::PI).abs() < 1e-12);
        assert!(
            (arc_inside(&c, 1.0, 0.0, 2.0, 0.0, 2.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-12
        );
        assert_eq!(arc_inside(&c, 5.0, -1.0, 1.0, -1.0, 1.0), 0.0);
    }

    #[test]
    fn pd_interpolation() {
        let roc = RocCurve {
            points: vec![
                RocPoint {
                    threshold: 0.0,
                    pfa: 1.0,
                    pd: 1.0,
                },
                RocPoint {
                    threshold: 1.0,
                    pfa: 0.2,
                    pd: 0.9,
                },
                RocPoint {
                    threshold: 2.0,
                    pfa: 0.0,
                    pd: 0.5,
                },
            ],
            provenance: RocProvenance::Empirical,
            fingerprint: String::new(),
        };
        assert!((roc.pd_at_pfa(0.1).unwrap() - 0.7).abs() < 1e-12);
        assert!((roc.pd_at_pfa(0.6).unwrap() - 0.95).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]

            #[test]
            fn rates_are_monotone_in_threshold(t1 in 0.0f64..2e6, t2 in 0.0f64..2e6, seed in any::<u64>()) {
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let mut s = scenario(0.0, AttackerModel::Circle { radius: 1.0 }, lo, 4_000);
                s.seed = seed;
                let a = run_trials(&s).unwrap();
                s.threshold = hi;
                let b = run_trials(&s).unwrap();
                prop_assert!(b.empirical_far <= a.empirical_far);
                prop_assert!(b.empirical_mdr >= a.empirical_mdr);
            }
        }
    }
}
