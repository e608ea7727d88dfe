//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma};
use uwpla::analytic::{self, cdf_imhof, cdf_laguerre_auto, AnalyticModel, WeightedChiSquareSpec};
use uwpla::experiment::{
    self, default_config_with_anchors, default_paper_config, run_roc, run_sweep, AttackerConfig,
    ExperimentConfig, FigureId, Mode, RocConfig, SweepConfig, ThresholdConfig,
};
use uwpla::localization::{build_b_vector, measure_distances, solve_position};
use uwpla::simulator::{analytic_far_for, analytic_mdr_for, run_trials, sub_seed, SweepAxis};
use uwpla::{LocalizationSystem, Point, ReferenceNodeSet, Scenario};

const SEED: u64 = 0x5eed_2024;
const TRIALS: u64 = 1_000_000;
const FAR_TARGETS: [f64; 4] = [0.2, 0.1, 0.05, 0.01];
const LQS: [f64; 3] = [0.0, 10.0, 20.0];

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }
}

fn tolerance(p: f64, n: u64) -> f64 {
    (3.0 * (p * (1.0 - p) / n as f64).sqrt()).max(0.005)
}

fn scenario_at(cfg: &ExperimentConfig) -> Scenario {
    experiment::build_scenario(cfg).expect("scenario")
}

fn c1_exact_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let noiseless = uwpla::ChannelParams {
        link_quality_db: f64::INFINITY,
        ..experiment::default_channel()
    };
    let (mut cases, mut worst) = (0usize, 0.0f64);
    while cases < 1000 {
        let l = 3 + cases % 3;
        let anchors: Vec<Point> = (0..l)
            .map(|_| {
                Point::new(
                    rng.gen_range(-1000.0..1000.0),
                    rng.gen_range(-1000.0..1000.0),
                )
            })
            .collect();
        let Ok(system) = ReferenceNodeSet::new(anchors).and_then(LocalizationSystem::new) else {
            continue;
        };
        let tx = Point::new(rng.gen_range(-800.0..800.0), rng.gen_range(-800.0..800.0));
        let Ok(meas) = measure_distances(&system, &noiseless, &tx, &mut rng) else {
            continue;
        };
        let b = build_b_vector(&system, &meas).unwrap();
        let est = solve_position(&system, &b).unwrap();
        worst = worst.max((est - tx).norm());
        cases += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-6 && secs < 1.0,
        format!("{cases} geometries, max position error {worst:.2e} m, {secs:.3} s"),
    )
}

/// Thresholds at the analytic FAR targets, per link quality.
fn targets_at(lq: f64) -> Vec<(f64, f64)> {
    let cfg = default_paper_config();
    let s = scenario_at(&cfg);
    let params = s.channel.with_link_quality(lq);
    let h0 = analytic::ts_spec(
        AnalyticModel::Projected,
        &s.system,
        &s.legitimate,
        &s.legitimate.position(),
        &params,
    )
    .unwrap();
    FAR_TARGETS
        .iter()
        .map(|f| (*f, analytic::threshold_for_far(&h0, *f).unwrap()))
        .collect()
}

fn c2_far_agreement() -> Outcome {
    let mut out = Outcome::new(true, "");
    let mut worst = 0.0f64;
    let mut k = 0;
    for lq in LQS {
        for (far, eps) in targets_at(lq) {
            let mut cfg = default_paper_config();
            cfg.channel.link_quality_db = lq;
            cfg.attacker = AttackerConfig::Fixed {
                position: [300.0, 300.0],
            };
            cfg.threshold = ThresholdConfig {
                value: Some(eps),
                far_target: None,
                reference_lq_db: None,
            };
            cfg.trials = TRIALS;
            cfg.seed = sub_seed(SEED, 200 + k);
            k += 1;
            let s = scenario_at(&cfg);
            let r = run_trials(&s).unwrap();
            let per_anchor = analytic_far_for(&s, AnalyticModel::PerAnchor).unwrap();
            let tol = tolerance(far, TRIALS);
            let gap = r.empirical_far - far;
            let ok = gap.abs() <= tol;
            worst = worst.max(gap.abs() / tol);
            out.pass &= ok;
            out.details.push(format!(
                "LQ {lq:>4} dB target {far:<5} empirical {:.5} gap {gap:+.5} tol {tol:.5}{} | per-anchor model FAR {per_anchor:.5} (gap {:+.5})",
                r.empirical_far,
                if ok { "" } else { "  <-- outside" },
                per_anchor - far
            ));
        }
    }
    out.summary = format!("12 points at 1e6 trials, worst |gap|/tol = {worst:.2}");
    out
}

fn c3_mdr_agreement() -> Outcome {
    let mut out = Outcome::new(true, "");
    let mut excess_low_lq = 0;
    let mut k = 0;
    for pos in [[1.0, 1.0], [2.0, 2.0], [300.0, 300.0]] {
        for lq in LQS {
            for (far, eps) in targets_at(lq) {
                let mut cfg = default_paper_config();
                cfg.channel.link_quality_db = lq;
                cfg.attacker = AttackerConfig::Fixed { position: pos };
                cfg.threshold = ThresholdConfig {
                    value: Some(eps),
                    far_target: None,
                    reference_lq_db: None,
                };
                cfg.trials = TRIALS;
                cfg.seed = sub_seed(SEED, 300 + k);
                k += 1;
                let s = scenario_at(&cfg);
                let r = run_trials(&s).unwrap();
                let proj = analytic_mdr_for(&s, AnalyticModel::Projected).unwrap();
                let per_anchor = analytic_mdr_for(&s, AnalyticModel::PerAnchor).unwrap();
                let tol = tolerance(proj, TRIALS);
                let gap = r.empirical_mdr - proj;
                let ok = gap.abs() <= tol;
                if lq >= 10.0 {
                    out.pass &= ok;
                } else if !ok {
                    excess_low_lq += 1;
                }
                let flag = match (ok, lq >= 10.0) {
                    (true, _) => "",
                    (false, true) => "  <-- outside",
                    (false, false) => "  <-- excess at LQ 0 (reported)",
                };
                out.details.push(format!(
                    "({:>3},{:>3}) LQ {lq:>4} dB far {far:<5} analytic {proj:.5} empirical {:.5} linearization gap {gap:+.5} tol {tol:.5}{flag} | per-anchor model {per_anchor:.5}",
                    pos[0], pos[1], r.empirical_mdr
                ));
            }
        }
    }
    out.summary = format!("36 points at 1e6 trials; LQ >= 10 dB asserted, {excess_low_lq} LQ 0 dB points outside tolerance");
    out
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn c4_cdf_cross_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 4);
    let mut worst_pair = 0.0f64;
    let mut failures = Vec::new();
    for case in 0..200 {
        let l = rng.gen_range(1..=6);
        let weights: Vec<f64> = (0..l).map(|_| log_uniform(&mut rng, 1e-2, 1e2)).collect();
        let nc: Vec<f64> = (0..l)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    0.0
                } else {
                    log_uniform(&mut rng, 1e-2, 20.0)
                }
            })
            .collect();
        let spec = WeightedChiSquareSpec::new(weights, nc).unwrap();
        let x = spec.mean() * log_uniform(&mut rng, 0.05, 4.0);
        match (
            cdf_imhof(&spec, x, 1e-10),
            cdf_laguerre_auto(&spec, x, 1e-10),
        ) {
            (Ok(a), Ok(b)) => {
                worst_pair = worst_pair.max((a - b).abs());
                if (a - b).abs() > 1e-6 {
                    failures.push(format!("case {case}: imhof {a} laguerre {b}"));
                }
            }
            (a, b) => failures.push(format!("case {case}: {a:?} / {b:?}")),
        }
    }
    let mut worst_gamma = 0.0f64;
    for case in 0..50 {
        let l = 1 + case % 6;
        let g = log_uniform(&mut rng, 1e-3, 1e3);
        let spec = WeightedChiSquareSpec::central(vec![g; l]).unwrap();
        let exact = Gamma::new(l as f64 / 2.0, 1.0 / (2.0 * g)).unwrap();
        for m in [0.02, 0.3, 1.0, 2.0, 4.0] {
            let x = m * l as f64 * g;
            let reference = exact.cdf(x);
            let a = cdf_imhof(&spec, x, 1e-12).unwrap();
            let b = cdf_laguerre_auto(&spec, x, 1e-12).unwrap();
            worst_gamma = worst_gamma
                .max((a - reference).abs())
                .max((b - reference).abs());
        }
    }
    let mut out = Outcome::new(
        failures.is_empty() && worst_gamma < 1e-8,
        format!("200 cases max |imhof - laguerre| {worst_pair:.2e}; gamma closed form max error {worst_gamma:.2e}"),
    );
    out.details = failures;
    out
}

/// Box-attacker LQ sweep shared by the FAR-trend and box-MDR criteria.
fn box_sweep() -> experiment::SweepTable {
    let mut cfg = default_paper_config();
    cfg.trials = TRIALS;
    cfg.seed = SEED;
    cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::LinkQualityDb,
        values: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
    });
    run_sweep(&cfg, Mode::Both).unwrap()
}

fn c5_far_trend(table: &experiment::SweepTable) -> Outcome {
    let rows = &table.rows;
    let mut pass = true;
    let mut out = Outcome::new(true, "");
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let analytic_ok = b.far_analytic.unwrap() < a.far_analytic.unwrap();
        let (ea, eb) = (a.far_empirical.unwrap(), b.far_empirical.unwrap());
        let empirical_ok = eb < ea || eb - ea <= a.ci_far.unwrap() + b.ci_far.unwrap();
        pass &= analytic_ok && empirical_ok;
        out.details.push(format!(
            "LQ {} -> {}: analytic {:.4e} -> {:.4e}, empirical {ea:.4e} -> {eb:.4e}",
            a.value,
            b.value,
            a.far_analytic.unwrap(),
            b.far_analytic.unwrap()
        ));
    }
    out.pass = pass;
    out.summary = format!("fixed threshold {:.1}, LQ -10..20 dB", rows[0].eps_th);
    out
}

fn c6_box_mdr(table: &experiment::SweepTable) -> Outcome {
    let mut out = Outcome::new(true, "");
    for (row, base) in table.rows.iter().zip(&table.baseline) {
        let mdr = row.mdr_empirical.unwrap();
        let bmdr = base.mdr_empirical.unwrap();
        let level_ok = row.value < 10.0 || mdr < 1e-2;
        let below_baseline = mdr < bmdr;
        out.pass &= level_ok && below_baseline;
        out.details.push(format!(
            "LQ {:>4} dB position MDR {mdr:.2e} (analytic {:.2e}) vs distance baseline {bmdr:.2e} (analytic {:.2e})",
            row.value,
            row.mdr_analytic.unwrap(),
            base.mdr_analytic.unwrap()
        ));
    }
    out.summary = "uniform box attacker, position vs distance baseline".into();
    out
}

fn circle_mdr(lq: f64, radius: f64) -> f64 {
    let mut cfg = default_paper_config();
    cfg.channel.link_quality_db = lq;
    cfg.attacker = AttackerConfig::Circle { radius };
    analytic_mdr_for(&scenario_at(&cfg), AnalyticModel::Projected).unwrap()
}

fn c7_near_anomaly() -> Outcome {
    let mut out = Outcome::new(true, "");
    let radii = experiment::FIG4_RADII;
    let mut emp = [Vec::new(), Vec::new()];
    for (j, lq) in [0.0, 20.0].into_iter().enumerate() {
        let mut cfg = default_paper_config();
        cfg.channel.link_quality_db = lq;
        cfg.attacker = AttackerConfig::Circle { radius: radii[0] };
        cfg.trials = TRIALS;
        cfg.seed = sub_seed(SEED, 700 + j as u64);
        cfg.sweep = Some(SweepConfig {
            axis: SweepAxis::RadiusR,
            values: radii.to_vec(),
        });
        emp[j] = run_sweep(&cfg, Mode::Both).unwrap().rows;
    }
    for (i, r) in radii.iter().enumerate() {
        let (lo, hi) = (&emp[0][i], &emp[1][i]);
        let (a0, a20) = (lo.mdr_analytic.unwrap(), hi.mdr_analytic.unwrap());
        let (e0, e20) = (lo.mdr_empirical.unwrap(), hi.mdr_empirical.unwrap());
        if *r <= 0.3 {
            out.pass &= a20 > a0 && e20 > e0;
        }
        if (1.0..=2.0).contains(r) {
            out.pass &= a20 < a0 && e20 < e0;
        }
        out.details.push(format!(
            "R {r:<5} MDR at LQ 0: {a0:.4e} / {e0:.4e}   at LQ 20: {a20:.4e} / {e20:.4e}  (analytic / empirical)"
        ));
    }
    let (mut lo, mut hi) = (0.3, 1.0);
    let f = |r: f64| circle_mdr(20.0, r) - circle_mdr(0.0, r);
    out.pass &= f(lo) > 0.0 && f(hi) < 0.0;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.summary = format!(
        "LQ 20 dB MDR exceeds LQ 0 dB below R = {:.4} m (analytic crossover), reversed above",
        0.5 * (lo + hi)
    );
    out
}

fn roc_for(anchors: usize, lq: f64, pos: [f64; 2], seed: u64) -> Vec<uwpla::RocCurve> {
    let mut cfg = default_config_with_anchors(anchors).unwrap();
    cfg.channel.link_quality_db = lq;
    cfg.attacker = AttackerConfig::Fixed { position: pos };
    cfg.trials = TRIALS;
    cfg.seed = seed;
    cfg.roc = Some(RocConfig {
        grid: None,
        points: Some(41),
    });
    run_roc(&cfg, Mode::Both).unwrap()
}

fn c8_roc_headline() -> Outcome {
    let mut out = Outcome::new(true, "");
    let l3 = roc_for(3, 10.0, [1.0, 1.0], sub_seed(SEED, 800));
    let headline = l3[1].pd_at_pfa(0.1).unwrap();
    out.pass &= headline >= 0.99;
    out.details.push(format!(
        "L 3, LQ 10 dB, attacker (1,1): empirical P_d {headline:.6} at P_fa 0.10"
    ));
    let mut k = 801;
    for lq in [0.0, 10.0] {
        for pos in [[1.0, 1.0], [2.0, 2.0]] {
            let a = roc_for(3, lq, pos, sub_seed(SEED, k));
            let b = roc_for(5, lq, pos, sub_seed(SEED, k + 1));
            k += 2;
            let mut worst = f64::INFINITY;
            for pfa in [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.9] {
                let (Some(p3), Some(p5)) = (a[1].pd_at_pfa(pfa), b[1].pd_at_pfa(pfa)) else {
                    continue;
                };
                let noise = 3.0 * ((p3 * (1.0 - p3) + p5 * (1.0 - p5)) / TRIALS as f64).sqrt();
                worst = worst.min(p5 - p3 + noise);
            }
            out.pass &= worst >= 0.0;
            out.details.push(format!(
                "LQ {lq:>4} dB attacker ({},{}): min over P_fa of (P_d[L5] - P_d[L3] + 3 sigma) = {worst:.2e}",
                pos[0], pos[1]
            ));
        }
    }
    out.summary = format!("P_d {headline:.6} at P_fa 0.10; L 5 dominates L 3");
    out
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn c9_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = default_paper_config();
    cfg.trials = 200_000;
    cfg.seed = SEED;
    let runs = [("a", None), ("b", Some(1)), ("c", Some(4))];
    for (name, threads) in runs {
        let dir = root.path().join(name);
        let go = || {
            for id in [
                FigureId::Fig2,
                FigureId::Fig3,
                FigureId::Fig4,
                FigureId::Fig5,
            ] {
                experiment::run_figure(id, &cfg, &dir).unwrap();
            }
        };
        match threads {
            None => go(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(go),
        }
    }
    let a = read_dir_sorted(&root.path().join("a"));
    let b = read_dir_sorted(&root.path().join("b"));
    let c = read_dir_sorted(&root.path().join("c"));
    let csvs = a.iter().filter(|(n, _)| n.ends_with(".csv")).count();
    Outcome::new(
        a == b && a == c && csvs > 0,
        format!("{csvs} CSV files identical across 3 runs (default, 1 and 4 worker threads)"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let mut o = f();
        o.summary = format!("{} [{:.1} s]", o.summary, start.elapsed().as_secs_f64());
        for d in &o.details {
            println!("    C{id} {d}");
        }
        println!(
            "{} C{id} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.summary
        );
        results.push((id, name, o));
    };
    run(1, "exact recovery", &c1_exact_recovery);
    run(2, "analytic vs Monte Carlo FAR", &c2_far_agreement);
    run(3, "analytic vs Monte Carlo MDR", &c3_mdr_agreement);
    run(4, "CDF evaluator cross-check", &c4_cdf_cross_check);
    let table = box_sweep();
    run(5, "FAR decreases with link quality", &|| {
        c5_far_trend(&table)
    });
    run(6, "box attacker MDR", &|| c6_box_mdr(&table));
    run(7, "near-attacker MDR anomaly", &c7_near_anomaly);
    run(
        8,
        "ROC headline and anchor-count dominance",
        &c8_roc_headline,
    );
    run(9, "determinism", &c9_determinism);

    println!();
    println!("acceptance summary");
    for (id, name, o) in &results {
        println!("{} C{id} {name}", if o.pass { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
