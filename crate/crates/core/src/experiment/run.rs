//! Experiment runners and the figure recipes.

use std::path::{Path, PathBuf};

use super::{
    output, AttackerConfig, ExperimentConfig, FigureId, Mode, RocConfig, SweepConfig,
    ThresholdConfig,
};
use crate::analytic;
use crate::authenticator::{BaselineDetector, LegitimateProfile};
use crate::error::{Error, Result};
use crate::localization::{LocalizationSystem, Point};
use crate::simulator::{
    self, analytic_far_for, analytic_mdr_for, baseline_analytic, run_trials, sub_seed, sweep_point,
    AttackerModel, RocCurve, RocPoint, RocProvenance, Scenario, SweepAxis,
};

/// Attacker radii of the near-attacker recipe, meters.
pub const FIG4_RADII: [f64; 9] = [0.01, 0.03, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 5.0];

/// Link qualities of the near-attacker recipe, dB.
pub const FIG4_LQ_DB: [f64; 3] = [0.0, 10.0, 20.0];

/// False-alarm levels always included in an automatic ROC grid.
const ROC_ANCHOR_PFA: [f64; 4] = [0.2, 0.1, 0.05, 0.01];

/// One row of the sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub eps_th: f64,
    pub far_analytic: Option<f64>,
    pub mdr_analytic: Option<f64>,
    pub far_empirical: Option<f64>,
    pub mdr_empirical: Option<f64>,
    pub ci_far: Option<f64>,
    pub ci_mdr: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

impl SweepRow {
    pub fn summary(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
        format!(
            "{}={} eps_th={:.6e} far[analytic={} empirical={}] mdr[analytic={} empirical={}]",
            self.axis,
            output::format_number(self.value),
            self.eps_th,
            f(self.far_analytic),
            f(self.far_empirical),
            f(self.mdr_analytic),
            f(self.mdr_empirical)
        )
    }
}

/// One row of the distance-baseline companion CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub axis: &'static str,
    pub value: f64,
    pub far_analytic: Option<f64>,
    pub mdr_analytic: Option<f64>,
    pub far_empirical: Option<f64>,
    pub mdr_empirical: Option<f64>,
    pub ci_far: Option<f64>,
    pub ci_mdr: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub baseline: Vec<BaselineRow>,
}

/// Files written and one summary line per computed point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

fn config_err(field: &str, e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::Config(format!("{field}: {msg}")),
        other => other,
    }
}

/// Threshold of the configuration: the fixed value, or the analytic quantile
/// for the FAR target at the reference link quality.
pub fn resolve_threshold(
    cfg: &ExperimentConfig,
    system: &LocalizationSystem,
    profile: &LegitimateProfile,
) -> Result<f64> {
    let t: &ThresholdConfig = &cfg.threshold;
    if let Some(v) = t.value {
        return Ok(v);
    }
    let far = t
        .far_target
        .ok_or_else(|| Error::Config("threshold: set `value` or `far_target`".into()))?;
    let params = cfg.channel.with_link_quality(t.reference_lq());
    let spec = analytic::ts_spec(
        cfg.analytic_model,
        system,
        profile,
        &profile.position(),
        &params,
    )
    .map_err(|e| config_err("threshold.reference_lq_db", e))?;
    analytic::threshold_for_far(&spec, far)
}

/// Scenario described by the configuration (before any sweep is applied).
pub fn build_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    cfg.validate()?;
    let system = LocalizationSystem::from_pairs(&cfg.geometry.anchors)
        .map_err(|e| config_err("geometry.anchors", e))?;
    let legit = Point::new(cfg.geometry.legitimate[0], cfg.geometry.legitimate[1]);
    let legitimate =
        LegitimateProfile::new(&system, legit).map_err(|e| config_err("geometry.legitimate", e))?;
    let attacker = match cfg.attacker {
        AttackerConfig::Fixed { position } => {
            AttackerModel::Fixed(Point::new(position[0], position[1]))
        }
        AttackerConfig::Box { extent } => AttackerModel::UniformBox { extent },
        AttackerConfig::Circle { radius } => AttackerModel::Circle { radius },
    };
    if let AttackerModel::Fixed(p) = attacker {
        system
            .distances(&p)
            .map_err(|e| config_err("attacker.position", e))?;
    }
    let threshold = resolve_threshold(cfg, &system, &legitimate)?;
    let baseline = BaselineDetector::calibrate(
        &legitimate,
        &cfg.channel,
        cfg.threshold.baseline_far(),
        cfg.threshold.reference_lq(),
    )
    .map_err(|e| config_err("threshold", e))?;
    Ok(Scenario {
        channel: cfg.channel,
        system,
        legitimate,
        attacker,
        threshold,
        trials: cfg.trials,
        seed: cfg.seed,
        baseline: Some(baseline),
    })
}

/// Runs the configured sweep (or the single configured point) in `mode`.
pub fn run_sweep(cfg: &ExperimentConfig, mode: Mode) -> Result<SweepTable> {
    let template = build_scenario(cfg)?;
    let (axis, values) = match &cfg.sweep {
        Some(SweepConfig { axis, values }) => (*axis, values.clone()),
        None => (SweepAxis::LinkQualityDb, vec![cfg.channel.link_quality_db]),
    };
    let model = cfg.analytic_model;
    let mut table = SweepTable::default();
    for (i, v) in values.iter().enumerate() {
        let s = sweep_point(&template, axis, *v, i).map_err(|e| config_err("sweep.values", e))?;
        let mut row = SweepRow {
            axis: axis.name(),
            value: *v,
            eps_th: s.threshold,
            far_analytic: None,
            mdr_analytic: None,
            far_empirical: None,
            mdr_empirical: None,
            ci_far: None,
            ci_mdr: None,
            trials: None,
            seed: None,
        };
        let mut brow = BaselineRow {
            axis: axis.name(),
            value: *v,
            far_analytic: None,
            mdr_analytic: None,
            far_empirical: None,
            mdr_empirical: None,
            ci_far: None,
            ci_mdr: None,
            trials: None,
            seed: None,
        };
        if mode.analytic() {
            row.far_analytic = Some(analytic_far_for(&s, model)?);
            row.mdr_analytic = Some(analytic_mdr_for(&s, model)?);
            let (bf, bm) = baseline_analytic(&s)?;
            brow.far_analytic = Some(bf);
            brow.mdr_analytic = Some(bm);
        }
        if mode.montecarlo() {
            let r = run_trials(&s)?;
            row.far_empirical = Some(r.empirical_far);
            row.mdr_empirical = Some(r.empirical_mdr);
            row.ci_far = Some(r.ci_far);
            row.ci_mdr = Some(r.ci_mdr);
            row.trials = Some(r.trials_h0);
            row.seed = Some(r.seed);
            if let Some(b) = r.baseline {
                brow.far_empirical = Some(b.far);
                brow.mdr_empirical = Some(b.mdr);
                brow.ci_far = Some(b.ci_far);
                brow.ci_mdr = Some(b.ci_mdr);
                brow.trials = Some(r.trials_h0);
                brow.seed = Some(r.seed);
            }
        }
        log::info!("{}", row.summary());
        table.rows.push(row);
        table.baseline.push(brow);
    }
    Ok(table)
}

/// [`run_sweep`] restricted to the analytic evaluators.
pub fn run_analytic(cfg: &ExperimentConfig) -> Result<SweepTable> {
    run_sweep(cfg, Mode::Analytic)
}

fn auto_grid(spec_h0: &analytic::WeightedChiSquareSpec, points: usize) -> Result<Vec<f64>> {
    let points = points.max(2);
    let (hi, lo) = (0.999f64.ln(), 1e-4f64.ln());
    let mut targets: Vec<f64> = (0..points)
        .map(|k| (hi + (lo - hi) * k as f64 / (points - 1) as f64).exp())
        .collect();
    targets.extend(ROC_ANCHOR_PFA);
    let mut grid = vec![0.0];
    for t in targets {
        grid.push(analytic::threshold_for_far(spec_h0, t)?);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| *a <= *b);
    Ok(grid)
}

/// ROC curves of the configured scenario: analytic first, then empirical.
pub fn run_roc(cfg: &ExperimentConfig, mode: Mode) -> Result<Vec<RocCurve>> {
    let s = build_scenario(cfg)?;
    let model = cfg.analytic_model;
    let h0 = analytic::ts_spec(
        model,
        &s.system,
        &s.legitimate,
        &s.legitimate.position(),
        &s.channel,
    )?;
    let roc_cfg = cfg.roc.clone().unwrap_or_default();
    let grid = match roc_cfg.grid {
        Some(g) => g,
        None => auto_grid(&h0, roc_cfg.points.unwrap_or(41))?,
    };
    let mut curves = Vec::new();
    if mode.analytic() {
        let curve = match s.attacker {
            AttackerModel::Fixed(p) => {
                let h1 = analytic::ts_spec(model, &s.system, &s.legitimate, &p, &s.channel)?;
                analytic::analytic_roc(&h0, &h1, &grid)?
            }
            _ => {
                let mut points = Vec::with_capacity(grid.len());
                for &t in &grid {
                    let mut st = s.clone();
                    st.threshold = t;
                    points.push(RocPoint {
                        threshold: t,
                        pfa: analytic::analytic_far(&h0, t)?,
                        pd: 1.0 - analytic_mdr_for(&st, model)?,
                    });
                }
                RocCurve {
                    points,
                    provenance: RocProvenance::Analytic,
                    fingerprint: s.fingerprint(),
                }
            }
        };
        curves.push(curve);
    }
    if mode.montecarlo() {
        curves.push(simulator::empirical_roc(&s, &grid)?);
    }
    Ok(curves)
}

fn recipe_base(base: &ExperimentConfig, anchors: usize) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    c.figure = None;
    c.geometry.anchors = super::REFERENCE_ANCHORS[..anchors].to_vec();
    c.geometry.legitimate = [0.0, 0.0];
    c.threshold = ThresholdConfig::default();
    c.sweep = None;
    c.roc = None;
    c.validate()?;
    Ok(c)
}

fn lq_tag(lq: f64) -> String {
    format!("lq{}", output::format_number(lq))
}

fn write_sweep_pair(
    dir: &Path,
    stem: &str,
    table: &SweepTable,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let main = dir.join(format!("{stem}.csv"));
    let base = dir.join(format!("{stem}_baseline.csv"));
    output::write_sweep_csv(&main, &table.rows)?;
    output::write_baseline_csv(&base, &table.baseline)?;
    out.summary.extend(
        table
            .rows
            .iter()
            .map(|r| format!("{stem}: {}", r.summary())),
    );
    out.files.push(main);
    out.files.push(base);
    Ok(())
}

/// Runs a figure recipe, writing its data files and a gnuplot stub into
/// `out_dir`. Channel constants, seed, trial count, mode and analytic model
/// come from `base`; geometry, attacker and threshold are fixed by the recipe.
pub fn run_figure(
    id: FigureId,
    base: &ExperimentConfig,
    out_dir: &Path,
) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let mode = base.mode;
    match id {
        FigureId::Fig2 | FigureId::Fig3 => {
            let mut c = recipe_base(base, 3)?;
            c.attacker = AttackerConfig::Box { extent: 500.0 };
            c.sweep = Some(SweepConfig {
                axis: SweepAxis::LinkQualityDb,
                values: super::LQ_SWEEP_DB.to_vec(),
            });
            let table = run_sweep(&c, mode)?;
            let stem = id.name();
            write_sweep_pair(out_dir, stem, &table, &mut out)?;
            let (ylabel, a, e) = if id == FigureId::Fig2 {
                ("P_fa", 4, 6)
            } else {
                ("P_md", 5, 7)
            };
            let file = format!("{stem}.csv");
            let bfile = format!("{stem}_baseline.csv");
            let plots = vec![
                format!("\"{file}\" using 2:{a} with linespoints title \"position, analytic\""),
                format!("\"{file}\" using 2:{e} with points title \"position, empirical\""),
                format!(
                    "\"{bfile}\" using 2:{} with linespoints title \"distance, analytic\"",
                    a - 1
                ),
                format!(
                    "\"{bfile}\" using 2:{} with points title \"distance, empirical\"",
                    e - 1
                ),
            ];
            let gp = out_dir.join(format!("{stem}.gp"));
            output::gnuplot_stub(
                &gp,
                &format!("{ylabel} against link quality"),
                "LQ (dB)",
                ylabel,
                false,
                &plots,
            )?;
            out.files.push(gp);
        }
        FigureId::Fig4 => {
            let mut plots = Vec::new();
            for (k, lq) in FIG4_LQ_DB.iter().enumerate() {
                let mut c = recipe_base(base, 3)?;
                c.channel.link_quality_db = *lq;
                c.attacker = AttackerConfig::Circle {
                    radius: FIG4_RADII[0],
                };
                c.sweep = Some(SweepConfig {
                    axis: SweepAxis::RadiusR,
                    values: FIG4_RADII.to_vec(),
                });
                c.seed = sub_seed(base.seed, 100 + k as u64);
                let table = run_sweep(&c, mode)?;
                let stem = format!("fig4_{}", lq_tag(*lq));
                write_sweep_pair(out_dir, &stem, &table, &mut out)?;
                plots.push(format!(
                    "\"{stem}.csv\" using 2:5 with linespoints title \"LQ {lq} dB, analytic\""
                ));
                plots.push(format!(
                    "\"{stem}.csv\" using 2:7 with points title \"LQ {lq} dB, empirical\""
                ));
            }
            let gp = out_dir.join("fig4.gp");
            output::gnuplot_stub(
                &gp,
                "P_md against attacker distance",
                "R (m)",
                "P_md",
                true,
                &plots,
            )?;
            out.files.push(gp);
        }
        FigureId::Fig5 => {
            let mut plots = Vec::new();
            let mut k = 0u64;
            for (loc_name, loc) in [("loc1", [1.0, 1.0]), ("loc2", [2.0, 2.0])] {
                for anchors in [3usize, 5] {
                    for lq in [0.0, 10.0] {
                        let mut c = recipe_base(base, anchors)?;
                        c.channel.link_quality_db = lq;
                        c.attacker = AttackerConfig::Fixed { position: loc };
                        c.roc = Some(RocConfig {
                            grid: None,
                            points: Some(41),
                        });
                        c.seed = sub_seed(base.seed, 200 + k);
                        k += 1;
                        let curves = run_roc(&c, mode)?;
                        let stem = format!("fig5_{loc_name}_l{anchors}_{}", lq_tag(lq));
                        let path = out_dir.join(format!("{stem}.csv"));
                        output::write_roc_csv(&path, &curves, c.seed)?;
                        for curve in &curves {
                            if let Some(pd) = curve.pd_at_pfa(0.1) {
                                out.summary.push(format!(
                                    "{stem}: {} P_d at P_fa 0.1 = {pd:.6}",
                                    curve.provenance.name()
                                ));
                            }
                        }
                        out.files.push(path);
                        plots.push(format!(
                            "\"{stem}.csv\" using 2:3 with lines title \"{loc_name} L={anchors} LQ={lq} dB\""
                        ));
                    }
                }
            }
            let gp = out_dir.join("fig5.gp");
            output::gnuplot_stub(&gp, "ROC", "P_fa", "P_d", true, &plots)?;
            out.files.push(gp);
        }
    }
    Ok(out)
}

/// Runs whatever the configuration describes: its figure recipe, its ROC
/// section, or its sweep. `out` is a directory for figures and a file path
/// otherwise.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if let Some(id) = cfg.figure {
        return run_figure(id, cfg, &cfg.out);
    }
    let mut out = ExperimentOutput::default();
    if cfg.roc.is_some() {
        let curves = run_roc(cfg, cfg.mode)?;
        output::write_roc_csv(&cfg.out, &curves, cfg.seed)?;
        for c in &curves {
            if let Some(pd) = c.pd_at_pfa(0.1) {
                out.summary
                    .push(format!("{} P_d at P_fa 0.1 = {pd:.6}", c.provenance.name()));
            }
        }
        out.files.push(cfg.out.clone());
        return Ok(out);
    }
    let table = run_sweep(cfg, cfg.mode)?;
    output::write_sweep_csv(&cfg.out, &table.rows)?;
    let bpath = baseline_path(&cfg.out);
    output::write_baseline_csv(&bpath, &table.baseline)?;
    out.summary.extend(table.rows.iter().map(SweepRow::summary));
    out.files.push(cfg.out.clone());
    out.files.push(bpath);
    Ok(out)
}

/// `dir/name_baseline.csv` next to `dir/name.csv`.
pub fn baseline_path(main: &Path) -> PathBuf {
    let stem = main
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    main.with_file_name(format!("{stem}_baseline.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::default_paper_config;

    fn small(mode: Mode) -> ExperimentConfig {
        let mut c = default_paper_config();
        c.trials = 20_000;
        c.mode = mode;
        c.attacker = AttackerConfig::Circle { radius: 1.0 };
        c.sweep = Some(SweepConfig {
            axis: SweepAxis::LinkQualityDb,
            values: vec![0.0, 10.0],
        });
        c
    }

    #[test]
    fn analytic_mode_leaves_empirical_columns_empty() {
        let t = run_sweep(&small(Mode::Analytic), Mode::Analytic).unwrap();
        assert_eq!(t.rows.len(), 2);
        for r in &t.rows {
            assert!(r.far_analytic.is_some() && r.far_empirical.is_none() && r.seed.is_none());
        }
    }

    #[test]
    fn threshold_is_shared_across_the_sweep() {
        let t = run_sweep(&small(Mode::Both), Mode::Both).unwrap();
        assert_eq!(t.rows[0].eps_th, t.rows[1].eps_th);
        assert!((t.rows[1].far_analytic.unwrap() - 0.05).abs() < 1e-9);
        assert!(t.rows[0].far_analytic.unwrap() > t.rows[1].far_analytic.unwrap());
        assert_ne!(t.rows[0].seed, t.rows[1].seed);
    }

    #[test]
    fn degenerate_geometry_is_a_config_error() {
        let mut c = default_paper_config();
        c.geometry.anchors = vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert!(matches!(build_scenario(&c), Err(Error::Config(_))));
    }

    #[test]
    fn baseline_path_naming() {
        assert_eq!(
            baseline_path(Path::new("out/fig.csv")),
            PathBuf::from("out/fig_baseline.csv")
        );
    }

    #[test]
    fn roc_auto_grid_contains_anchor_levels() {
        let mut c = small(Mode::Analytic);
        c.attacker = AttackerConfig::Fixed {
            position: [1.0, 1.0],
        };
        c.roc = Some(RocConfig {
            grid: None,
            points: Some(5),
        });
        let curves = run_roc(&c, Mode::Analytic).unwrap();
        let pfas: Vec<f64> = curves[0].points.iter().map(|p| p.pfa).collect();
        for target in ROC_ANCHOR_PFA {
            assert!(
                pfas.iter().any(|p| (p - target).abs() < 1e-8),
                "{target} missing from {pfas:?}"
            );
        }
        assert_eq!(curves[0].points[0].threshold, 0.0);
    }
}
