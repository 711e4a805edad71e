//! The `srde` subcommands.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use srde_core::analysis::stats::{wilson_interval, Z95};
use srde_core::analysis::{
    admissibility, blowup_stats, dissipation_check, estimate_holder_ensemble, holder_prediction, Axis, BlowupStats,
    BudgetReport, FieldSeries, HolderEstimate, HolderPrediction, MIN_BLOWUP_MEMBERS,
};
use srde_core::coefficients::{validation_report, SampleSet, OUTSIDE_THEOREM};
use srde_core::noise::DalangReport;
use srde_core::solver::{run_global_capped, write_path_record, RecordHeader, RunError, RunOptions, StopReason, StoppingInfo};
use srde_core::{ModelSpec, PathRecord};

use crate::config::{Format, Prepared, MIN_CELL_SEEDS};
use crate::output::{heatmap_svg, phase_svg, write_file, write_json, Csv, PhaseCell};
use crate::{CliError, Outcome};

/// Command-line switches shared by the subcommands.
#[derive(Debug, Clone, Copy, Default)]
pub struct Flags {
    /// Run specs that fail the admissibility check.
    pub force: bool,
    /// Treat explosion as the expected outcome.
    pub expect_explosion: bool,
}

/// Share of seeds that must finish without a runtime error before any
/// ensemble verdict is computed.
pub const MIN_SURVIVAL: f64 = 0.9;

/// Worker count: `SRDE_THREADS`, then the configuration, then the cores.
pub fn thread_width(configured: Option<usize>) -> Result<usize, CliError> {
    if let Ok(v) = std::env::var("SRDE_THREADS") {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("SRDE_THREADS must be a positive integer, got `{v}`"))),
        };
    }
    Ok(configured.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

fn pool(width: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

fn out_dir(p: &Prepared) -> Result<&Path, CliError> {
    let dir = p.config.outputs.directory.as_path();
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn run_options(p: &Prepared) -> RunOptions {
    RunOptions {
        series_every: p.config.outputs.series_every,
        snapshot_every: p.config.outputs.snapshot_every,
    }
}

fn run_path(p: &Prepared, spec: &ModelSpec, seed: u64, opts: &RunOptions) -> Result<PathRecord, RunError> {
    let s = &p.config.stopping;
    run_global_capped(
        spec,
        p.dt,
        p.grid,
        seed,
        &s.m_schedule,
        s.dissipation_cap.unwrap_or(f64::INFINITY),
        opts,
    )
}

/// Runs every seed on a pool of `width` workers; results come back in
/// seed order whatever the width.
fn run_seeds(
    p: &Prepared,
    spec: &ModelSpec,
    seeds: &[u64],
    opts: &RunOptions,
    width: usize,
) -> Result<Vec<Result<PathRecord, RunError>>, CliError> {
    Ok(pool(width)?.install(|| seeds.par_iter().map(|&s| run_path(p, spec, s, opts)).collect()))
}

/// A path counts as exploded if the schedule ran out or its sup passed `R`.
pub fn exploded_at(path: &PathRecord, threshold: f64) -> bool {
    path.exploded || path.max_sup > threshold
}

fn theorem_admissible(p: &Prepared) -> Result<bool, CliError> {
    let m = &p.config.model;
    let window = admissibility(m.beta, m.gamma, m.dim, m.kappa).map_err(|e| CliError::Config(format!("model: {e}")))?;
    let dalang = DalangReport::analyze(&p.spec.kernel, m.kappa).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(window.nonempty && dalang.admissible && !p.spec.coeffs.outside_theorem())
}

// ---- check ----

#[derive(Debug, Serialize)]
pub struct WindowReport {
    pub p_min: f64,
    pub p_max: f64,
    pub nonempty: bool,
    /// Largest admissible `γ` for the given `β`, `κ`, `d`.
    pub gamma_frontier: f64,
}

#[derive(Debug, Serialize)]
pub struct MarginReport {
    pub inequality: String,
    pub margin: f64,
    pub skipped: bool,
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub kernel: String,
    pub kappa: f64,
    pub kappa_max: f64,
    /// `None` when the defining integral diverges.
    pub nu_kappa: Option<f64>,
    pub kappa_ok: bool,
    pub window: WindowReport,
    /// Nonempty window, `κ` below `κ_max` and dissipative coefficients.
    pub admissible: bool,
    pub prediction: Option<HolderPrediction>,
    pub prediction_note: Option<String>,
    pub coefficients: String,
    pub validation_passed: bool,
    pub banner: Option<String>,
    pub margins: Vec<MarginReport>,
    pub dt: f64,
    pub step_bound: f64,
}

pub fn check_report(p: &Prepared) -> Result<CheckReport, CliError> {
    let m = &p.config.model;
    let runtime = |e: srde_core::Error| CliError::Runtime(e.to_string());
    let dalang = DalangReport::analyze(&p.spec.kernel, m.kappa).map_err(runtime)?;
    let window = admissibility(m.beta, m.gamma, m.dim, m.kappa).map_err(|e| CliError::Config(format!("model: {e}")))?;
    let outside = p.spec.coeffs.outside_theorem();
    let admissible = window.nonempty && dalang.admissible && !outside;
    let (prediction, prediction_note) = if !dalang.admissible {
        (None, Some(format!("kappa = {} is not below kappa_max = {}", m.kappa, dalang.kappa_max)))
    } else {
        match holder_prediction(m.beta, m.gamma, m.dim, m.kappa, p.config.holder.epsilon) {
            Ok(pred) => (Some(pred), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let samples = SampleSet::standard(m.dim, p.grid.period, m.horizon);
    let validation = validation_report(&p.spec.coeffs, &samples).map_err(runtime)?;
    Ok(CheckReport {
        kernel: p.spec.kernel.describe(),
        kappa: m.kappa,
        kappa_max: dalang.kappa_max,
        nu_kappa: dalang.nu_kappa.is_finite().then(|| dalang.nu_kappa.value()),
        kappa_ok: dalang.admissible,
        window: WindowReport {
            p_min: window.p_min_f64(),
            p_max: window.p_max_f64(),
            nonempty: window.nonempty,
            gamma_frontier: frontier_gamma(m.beta, m.kappa, m.dim),
        },
        admissible,
        prediction,
        prediction_note,
        coefficients: p.spec.coeffs.name.clone(),
        validation_passed: validation.passed,
        banner: validation.banner().map(str::to_string),
        margins: validation
            .checks
            .iter()
            .map(|c| MarginReport {
                inequality: c.inequality.to_string(),
                margin: c.margin,
                skipped: c.skipped,
            })
            .collect(),
        dt: p.dt,
        step_bound: p.step_bound,
    })
}

pub fn check(p: &Prepared) -> Result<Outcome, CliError> {
    let r = check_report(p)?;
    println!("kernel        {}", r.kernel);
    println!("kappa         {} (kappa_max {})", r.kappa, r.kappa_max);
    match r.nu_kappa {
        Some(v) => println!("nu_kappa      {v}"),
        None => println!("nu_kappa      diverges"),
    }
    println!(
        "p window      ({}, {}) {}",
        r.window.p_min,
        r.window.p_max,
        if r.window.nonempty { "nonempty" } else { "empty" }
    );
    println!("gamma bound   {}", r.window.gamma_frontier);
    match (&r.prediction, &r.prediction_note) {
        (Some(pred), _) => println!(
            "holder        space {} time {} (epsilon {})",
            pred.space_exponent, pred.time_exponent, pred.epsilon
        ),
        (None, Some(note)) => println!("holder        none: {note}"),
        (None, None) => {}
    }
    if let Some(b) = &r.banner {
        println!("{b}");
    }
    println!("dt            {} (bound {})", r.dt, r.step_bound);
    println!("admissible    {}", r.admissible);
    if p.config.outputs.wants(Format::Json) {
        write_json(&out_dir(p)?.join("check.json"), &p.hash_hex, &r)?;
    }
    Ok(if r.admissible { Outcome::Pass } else { Outcome::Fail })
}

// ---- simulate ----

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub seed: u64,
    pub admissible: bool,
    pub banner: Option<&'static str>,
    pub steps: u64,
    pub dt: f64,
    pub stopping: StoppingInfo,
    pub threshold: f64,
    /// Schedule exhausted or sup above the threshold.
    pub exploded: bool,
    pub schedule_exhausted: bool,
    pub final_level: f64,
    pub max_sup: f64,
    pub min_u: f64,
    pub max_comparison_gap: f64,
    pub budget: f64,
    pub initial_l1: f64,
    pub samples: usize,
    pub snapshots: usize,
}

pub const SERIES_COLUMNS: [&str; 9] = ["t", "step", "sup", "l1", "l_beta", "budget", "min_u", "comparison_gap", "level"];

pub fn series_csv(hash: &str, path: &PathRecord) -> Csv {
    let mut csv = Csv::new(hash, &SERIES_COLUMNS);
    for s in &path.samples {
        csv.row([
            s.t.to_string(),
            s.step.to_string(),
            s.sup.to_string(),
            s.l1.to_string(),
            s.l_beta.to_string(),
            s.budget.to_string(),
            s.min_u.to_string(),
            s.comparison_gap.to_string(),
            s.level.to_string(),
        ]);
    }
    csv
}

pub fn simulate(p: &Prepared, flags: Flags) -> Result<Outcome, CliError> {
    let admissible = theorem_admissible(p)?;
    if !admissible && !flags.force {
        eprintln!("configuration is not admissible; pass --force to run it anyway");
        return Ok(Outcome::Fail);
    }
    let seed = p.config.ensemble.first_seed;
    let path = run_path(p, &p.spec, seed, &run_options(p)).map_err(|e| CliError::Runtime(format!("seed {seed}: {e}")))?;
    let dir = out_dir(p)?;
    let outputs = &p.config.outputs;
    if outputs.wants(Format::Record) {
        let header = RecordHeader {
            config_hash: p.hash,
            grid: p.grid,
            dt: p.dt,
        };
        let bytes = write_path_record(Vec::new(), &header, &path.snapshots)
            .map_err(|e| CliError::Runtime(format!("path record: {e}")))?;
        write_file(&dir.join("path.srdr"), &bytes)?;
    }
    if outputs.wants(Format::Csv) {
        series_csv(&p.hash_hex, &path).write(&dir.join("series.csv"))?;
    }
    let threshold = p.config.stopping.threshold;
    let exploded = exploded_at(&path, threshold);
    if outputs.wants(Format::Json) {
        let summary = SimulateSummary {
            seed,
            admissible,
            banner: p.spec.coeffs.outside_theorem().then_some(OUTSIDE_THEOREM),
            steps: p.steps,
            dt: p.dt,
            stopping: path.stopping,
            threshold,
            exploded,
            schedule_exhausted: path.exploded,
            final_level: path.final_level,
            max_sup: path.max_sup,
            min_u: path.min_u,
            max_comparison_gap: path.max_comparison_gap,
            budget: path.budget,
            initial_l1: path.initial_l1,
            samples: path.samples.len(),
            snapshots: path.snapshots.len(),
        };
        write_json(&dir.join("summary.json"), &p.hash_hex, &summary)?;
    }
    if outputs.wants(Format::Svg) && path.snapshots.len() >= 2 {
        let svg = if p.grid.dim == 1 {
            let rows: Vec<Vec<f64>> = path.snapshots.iter().map(|s| s.field.clone()).collect();
            heatmap_svg(&p.hash_hex, &format!("u(t, x), seed {seed}"), "x", "t", &rows)
        } else {
            let last = path.snapshots.last().unwrap();
            let n = p.grid.points;
            let rows: Vec<Vec<f64>> = last.field.chunks(n).map(<[f64]>::to_vec).collect();
            heatmap_svg(&p.hash_hex, &format!("u(t = {}, x), seed {seed}", last.stats.t), "x2", "x1", &rows)
        };
        write_file(&dir.join("heatmap.svg"), svg.as_bytes())?;
    }
    println!(
        "seed {seed}: {:?} at t = {}, max sup {}, final level {}, budget {}{}",
        path.stopping.reason,
        path.stopping.time,
        path.max_sup,
        path.final_level,
        path.budget,
        if exploded { ", EXPLODED" } else { "" }
    );
    Ok(if exploded && !flags.expect_explosion { Outcome::Fail } else { Outcome::Pass })
}

// ---- ensemble and holder ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "LOW-POWER")]
    LowPower,
    #[serde(rename = "SKIPPED")]
    Skipped,
    #[serde(rename = "NOT-COMPUTED")]
    NotComputed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    fn new(status: Status, detail: impl Into<String>) -> Self {
        Self {
            status,
            detail: detail.into(),
        }
    }

    /// Below the member threshold a decided verdict is only indicative.
    fn powered(self, low_power: bool) -> Self {
        match self.status {
            Status::Pass | Status::Fail if low_power => Self {
                status: Status::LowPower,
                detail: format!("{} (would be {:?})", self.detail, self.status),
            },
            _ => self,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FailedSeed {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct ExplosionSummary {
    pub threshold: f64,
    pub members: usize,
    pub count: usize,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub tolerance: f64,
    pub expected: bool,
}

#[derive(Debug, Serialize)]
pub struct HolderSection {
    pub epsilon: f64,
    pub prediction: Option<HolderPrediction>,
    pub space_window: [f64; 2],
    pub time_window: [f64; 2],
    /// Members that reached the horizon and fed the estimates.
    pub members: usize,
    pub space: Option<HolderEstimate>,
    pub time: Option<HolderEstimate>,
    pub space_verdict: Verdict,
    pub time_verdict: Verdict,
}

#[derive(Debug, Serialize)]
pub struct Verdicts {
    pub dissipation: Verdict,
    pub non_explosion: Verdict,
    pub holder_space: Verdict,
    pub holder_time: Verdict,
}

impl Verdicts {
    fn any_fail(&self) -> bool {
        [&self.dissipation, &self.non_explosion, &self.holder_space, &self.holder_time]
            .iter()
            .any(|v| v.status == Status::Fail)
    }
}

#[derive(Debug, Serialize)]
pub struct EnsembleReport {
    pub seeds: u64,
    pub first_seed: u64,
    pub survivors: usize,
    pub failed: Vec<FailedSeed>,
    pub low_power: bool,
    pub banner: Option<&'static str>,
    pub verdicts: Verdicts,
    pub dissipation: Option<BudgetReport>,
    pub explosion: Option<ExplosionSummary>,
    pub exceedance: Option<BlowupStats>,
    pub exceedance_note: Option<String>,
    pub holder: Option<HolderSection>,
}

fn seed_list(p: &Prepared) -> Vec<u64> {
    let e = &p.config.ensemble;
    (e.first_seed..e.first_seed + e.seeds).collect()
}

fn split(seeds: &[u64], results: Vec<Result<PathRecord, RunError>>) -> (Vec<PathRecord>, Vec<FailedSeed>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (&seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(path) => ok.push(path),
            Err(e) => failed.push(FailedSeed {
                seed,
                error: e.to_string(),
            }),
        }
    }
    (ok, failed)
}

fn enough_survivors(survivors: usize, total: usize) -> bool {
    survivors as f64 >= MIN_SURVIVAL * total as f64 && survivors > 0
}

fn holder_windows(p: &Prepared) -> ([f64; 2], [f64; 2]) {
    let h = &p.config.holder;
    let dx = p.grid.spacing();
    let dt = p.dt * p.config.outputs.snapshot_every.max(1) as f64;
    (h.space_window.unwrap_or([dx, 8.0 * dx]), h.time_window.unwrap_or([dt, 8.0 * dt]))
}

fn holder_section(p: &Prepared, paths: &[PathRecord], low_power: bool) -> HolderSection {
    let m = &p.config.model;
    let h = &p.config.holder;
    let (space_window, time_window) = holder_windows(p);
    let prediction = holder_prediction(m.beta, m.gamma, m.dim, m.kappa, h.epsilon).ok();
    let series: Vec<FieldSeries> = paths
        .iter()
        .filter(|q| q.stopping.reason == StopReason::Horizon)
        .filter_map(|q| FieldSeries::from_path(q).ok())
        .collect();
    let estimate = |axis: Axis, w: [f64; 2]| -> Result<HolderEstimate, String> {
        if p.config.outputs.snapshot_every == 0 {
            return Err("no snapshots kept (outputs.snapshot_every = 0)".into());
        }
        estimate_holder_ensemble(&series, axis, (w[0], w[1])).map_err(|e| e.to_string())
    };
    let verdict = |est: &Result<HolderEstimate, String>, predicted: Option<f64>| -> Verdict {
        match (est, predicted) {
            (Err(e), _) => Verdict::new(Status::NotComputed, e.clone()),
            (Ok(_), None) => Verdict::new(Status::NotComputed, "no prediction: the admissibility window is empty"),
            (Ok(e), Some(pred)) => {
                let dist = (e.exponent - pred).abs();
                let status = if dist <= h.tolerance { Status::Pass } else { Status::Fail };
                Verdict::new(
                    status,
                    format!(
                        "estimate {:.4} ± {:.4} vs predicted {:.4}, tolerance {}",
                        e.exponent, e.standard_error, pred, h.tolerance
                    ),
                )
                .powered(low_power)
            }
        }
    };
    let space = estimate(Axis::Space, space_window);
    let time = estimate(Axis::Time, time_window);
    let space_verdict = verdict(&space, prediction.as_ref().map(|q| q.space_exponent));
    let time_verdict = verdict(&time, prediction.as_ref().map(|q| q.time_exponent));
    HolderSection {
        epsilon: h.epsilon,
        prediction,
        space_window,
        time_window,
        members: series.len(),
        space: space.ok(),
        time: time.ok(),
        space_verdict,
        time_verdict,
    }
}

/// Runs the seeds of `p` and assembles the verdict report.
pub fn ensemble_report(p: &Prepared, flags: Flags, width: usize) -> Result<(EnsembleReport, Vec<PathRecord>), CliError> {
    let seeds = seed_list(p);
    let results = run_seeds(p, &p.spec, &seeds, &run_options(p), width)?;
    let (paths, failed) = split(&seeds, results);
    let banner = p.spec.coeffs.outside_theorem().then_some(OUTSIDE_THEOREM);
    let base = EnsembleReport {
        seeds: p.config.ensemble.seeds,
        first_seed: p.config.ensemble.first_seed,
        survivors: paths.len(),
        failed,
        low_power: paths.len() < MIN_BLOWUP_MEMBERS,
        banner,
        verdicts: Verdicts {
            dissipation: Verdict::new(Status::NotComputed, ""),
            non_explosion: Verdict::new(Status::NotComputed, ""),
            holder_space: Verdict::new(Status::NotComputed, ""),
            holder_time: Verdict::new(Status::NotComputed, ""),
        },
        dissipation: None,
        explosion: None,
        exceedance: None,
        exceedance_note: None,
        holder: None,
    };
    if !enough_survivors(paths.len(), seeds.len()) {
        let why = format!(
            "only {} of {} seeds finished; verdicts need {}%",
            paths.len(),
            seeds.len(),
            MIN_SURVIVAL * 100.0
        );
        let v = || Verdict::new(Status::NotComputed, why.clone());
        let report = EnsembleReport {
            verdicts: Verdicts {
                dissipation: v(),
                non_explosion: v(),
                holder_space: v(),
                holder_time: v(),
            },
            ..base
        };
        return Ok((report, paths));
    }
    let low_power = base.low_power;

    let (dissipation, dissipation_verdict) = match dissipation_check(&paths, &p.spec.coeffs, p.spec.horizon) {
        Ok(r) if r.skipped => (Some(r), Verdict::new(Status::Skipped, OUTSIDE_THEOREM)),
        Ok(r) => {
            let detail = match (r.plain, r.weighted) {
                (Some(a), Some(b)) => format!(
                    "plain {:.6} vs bound {:.6}; weighted {:.6} vs bound {:.6}",
                    a.estimate, a.bound, b.estimate, b.bound
                ),
                _ => String::new(),
            };
            let status = if r.pass { Status::Pass } else { Status::Fail };
            (Some(r), Verdict::new(status, detail).powered(low_power))
        }
        Err(e) => (None, Verdict::new(Status::NotComputed, e.to_string())),
    };

    let threshold = p.config.stopping.threshold;
    let count = paths.iter().filter(|q| exploded_at(q, threshold)).count();
    let (wilson_low, wilson_high) = wilson_interval(count, paths.len(), Z95);
    let tolerance = p.config.ensemble.explosion_tolerance;
    let explosion = ExplosionSummary {
        threshold,
        members: paths.len(),
        count,
        fraction: count as f64 / paths.len() as f64,
        wilson_low,
        wilson_high,
        tolerance,
        expected: flags.expect_explosion,
    };
    let non_explosion = if flags.expect_explosion {
        let status = if count > 0 { Status::Pass } else { Status::Fail };
        Verdict::new(status, format!("{count} of {} paths exploded; at least one expected", paths.len()))
    } else {
        let status = if explosion.fraction <= tolerance { Status::Pass } else { Status::Fail };
        Verdict::new(
            status,
            format!("{count} of {} paths exploded, fraction {} (tolerance {tolerance})", paths.len(), explosion.fraction),
        )
    }
    .powered(low_power);

    let (exceedance, exceedance_note) = match blowup_stats(&paths, &p.config.blowup.thresholds) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let holder = holder_section(p, &paths, low_power);
    let report = EnsembleReport {
        verdicts: Verdicts {
            dissipation: dissipation_verdict,
            non_explosion,
            holder_space: holder.space_verdict.clone(),
            holder_time: holder.time_verdict.clone(),
        },
        dissipation,
        explosion: Some(explosion),
        exceedance,
        exceedance_note,
        holder: Some(holder),
        ..base
    };
    Ok((report, paths))
}

pub const PATH_COLUMNS: [&str; 11] = [
    "seed",
    "stop_reason",
    "stop_time",
    "exploded",
    "final_level",
    "max_sup",
    "min_u",
    "max_comparison_gap",
    "budget",
    "initial_l1",
    "error",
];

fn reason_name(r: StopReason) -> &'static str {
    match r {
        StopReason::Horizon => "horizon",
        StopReason::DissipationCap => "dissipation_cap",
        StopReason::SupCap => "sup_cap",
        StopReason::Explosion => "explosion",
    }
}

fn paths_csv(p: &Prepared, paths: &[PathRecord], failed: &[FailedSeed]) -> Csv {
    let mut csv = Csv::new(&p.hash_hex, &PATH_COLUMNS);
    let threshold = p.config.stopping.threshold;
    let mut rows: Vec<(u64, Vec<String>)> = paths
        .iter()
        .map(|q| {
            (
                q.seed,
                vec![
                    q.seed.to_string(),
                    reason_name(q.stopping.reason).into(),
                    q.stopping.time.to_string(),
                    exploded_at(q, threshold).to_string(),
                    q.final_level.to_string(),
                    q.max_sup.to_string(),
                    q.min_u.to_string(),
                    q.max_comparison_gap.to_string(),
                    q.budget.to_string(),
                    q.initial_l1.to_string(),
                    String::new(),
                ],
            )
        })
        .collect();
    for f in failed {
        let mut row = vec![String::new(); PATH_COLUMNS.len()];
        row[0] = f.seed.to_string();
        row[1] = "error".into();
        row[10] = format!("\"{}\"", f.error.replace('"', "'"));
        rows.push((f.seed, row));
    }
    rows.sort_by_key(|r| r.0);
    for (_, r) in rows {
        csv.row(r);
    }
    csv
}

fn exceedance_csv(hash: &str, t: &BlowupStats) -> Csv {
    let mut csv = Csv::new(hash, &["level", "threshold", "count", "probability", "wilson_low", "wilson_high"]);
    for row in &t.rows {
        for e in row.cells.iter().flatten() {
            csv.row([
                row.level.to_string(),
                e.threshold.to_string(),
                e.count.to_string(),
                e.probability.to_string(),
                e.wilson_low.to_string(),
                e.wilson_high.to_string(),
            ]);
        }
    }
    for e in &t.sup_over_levels {
        csv.row([
            "sup".to_string(),
            e.threshold.to_string(),
            e.count.to_string(),
            e.probability.to_string(),
            e.wilson_low.to_string(),
            e.wilson_high.to_string(),
        ]);
    }
    csv
}

fn holder_csv(hash: &str, h: &HolderSection) -> Csv {
    let mut csv = Csv::new(hash, &["axis", "lag", "structure"]);
    for (name, est) in [("space", &h.space), ("time", &h.time)] {
        if let Some(e) = est {
            for (l, s) in e.lags.iter().zip(&e.structure) {
                csv.row([name.to_string(), l.to_string(), s.to_string()]);
            }
        }
    }
    csv
}

fn print_verdicts(v: &Verdicts) {
    for (name, x) in [
        ("dissipation", &v.dissipation),
        ("non_explosion", &v.non_explosion),
        ("holder_space", &v.holder_space),
        ("holder_time", &v.holder_time),
    ] {
        println!("{name:<14} {:<12} {}", format!("{:?}", x.status), x.detail);
    }
}

pub fn ensemble(p: &Prepared, flags: Flags) -> Result<Outcome, CliError> {
    if p.config.ensemble.seeds < 2 {
        return Err(CliError::Config("ensemble.seeds: an ensemble needs at least 2 seeds".into()));
    }
    let width = thread_width(p.config.ensemble.parallelism)?;
    let (report, paths) = ensemble_report(p, flags, width)?;
    let dir = out_dir(p)?;
    let outputs = &p.config.outputs;
    if outputs.wants(Format::Json) {
        write_json(&dir.join("ensemble.json"), &p.hash_hex, &report)?;
    }
    if outputs.wants(Format::Csv) {
        paths_csv(p, &paths, &report.failed).write(&dir.join("paths.csv"))?;
        if let Some(t) = &report.exceedance {
            exceedance_csv(&p.hash_hex, t).write(&dir.join("exceedance.csv"))?;
        }
        if let Some(h) = &report.holder {
            holder_csv(&p.hash_hex, h).write(&dir.join("holder.csv"))?;
        }
    }
    if let Some(b) = report.banner {
        println!("{b}");
    }
    println!("{} of {} seeds finished", report.survivors, report.seeds);
    for f in &report.failed {
        println!("seed {} failed: {}", f.seed, f.error);
    }
    print_verdicts(&report.verdicts);
    if !enough_survivors(report.survivors, report.seeds as usize) {
        return Err(CliError::Runtime(format!(
            "{} of {} seeds failed",
            report.failed.len(),
            report.seeds
        )));
    }
    Ok(if report.verdicts.any_fail() { Outcome::Fail } else { Outcome::Pass })
}

#[derive(Debug, Serialize)]
pub struct HolderReport {
    pub seeds: u64,
    pub first_seed: u64,
    pub survivors: usize,
    pub failed: Vec<FailedSeed>,
    pub low_power: bool,
    pub holder: HolderSection,
}

pub fn holder(p: &Prepared) -> Result<Outcome, CliError> {
    if p.config.outputs.snapshot_every == 0 {
        return Err(CliError::Config("outputs.snapshot_every: Hölder estimates need snapshots".into()));
    }
    let width = thread_width(p.config.ensemble.parallelism)?;
    let seeds = seed_list(p);
    let results = run_seeds(p, &p.spec, &seeds, &run_options(p), width)?;
    let (paths, failed) = split(&seeds, results);
    if !enough_survivors(paths.len(), seeds.len()) {
        for f in &failed {
            println!("seed {} failed: {}", f.seed, f.error);
        }
        return Err(CliError::Runtime(format!("{} of {} seeds failed", failed.len(), seeds.len())));
    }
    let low_power = paths.len() < MIN_BLOWUP_MEMBERS;
    let report = HolderReport {
        seeds: p.config.ensemble.seeds,
        first_seed: p.config.ensemble.first_seed,
        survivors: paths.len(),
        failed,
        low_power,
        holder: holder_section(p, &paths, low_power),
    };
    let dir = out_dir(p)?;
    if p.config.outputs.wants(Format::Json) {
        write_json(&dir.join("holder.json"), &p.hash_hex, &report)?;
    }
    if p.config.outputs.wants(Format::Csv) {
        holder_csv(&p.hash_hex, &report.holder).write(&dir.join("holder.csv"))?;
    }
    let h = &report.holder;
    for (name, v) in [("space", &h.space_verdict), ("time", &h.time_verdict)] {
        println!("{name:<6} {:<12} {}", format!("{:?}", v.status), v.detail);
    }
    let fail = h.space_verdict.status == Status::Fail || h.time_verdict.status == Status::Fail;
    Ok(if fail { Outcome::Fail } else { Outcome::Pass })
}

// ---- phase ----

/// `γ = κ(1+β)/(d+2)`, the edge of the admissible region.
pub fn frontier_gamma(beta: f64, kappa: f64, dim: usize) -> f64 {
    kappa * (1.0 + beta) / (dim as f64 + 2.0)
}

#[derive(Debug, Serialize)]
pub struct PhaseRow {
    pub beta: f64,
    pub gamma: f64,
    pub admissible: bool,
    pub seeds: u64,
    pub failed: usize,
    pub exploded: usize,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Debug, Serialize)]
pub struct PhaseReport {
    pub kappa: f64,
    pub dim: usize,
    pub horizon: f64,
    pub threshold: f64,
    pub seeds_per_cell: u64,
    pub banner: Option<&'static str>,
    pub cells: Vec<PhaseRow>,
    pub admissible_cells: usize,
    /// Admissible cells in which no path exploded.
    pub quiet_admissible_cells: usize,
    pub verdict: Verdict,
}

fn sorted_lattice(name: &str, values: &[f64]) -> Result<Vec<f64>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config(format!("phase.{name}: lattice is empty")));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(CliError::Config(format!("phase.{name}: values must be positive")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config(format!("phase.{name}: duplicate values")));
    }
    Ok(v)
}

/// Share of admissible cells that must show no explosion.
pub const QUIET_SHARE: f64 = 0.95;

pub fn phase_report(p: &Prepared, width: usize) -> Result<PhaseReport, CliError> {
    let cfg = p
        .config
        .phase
        .as_ref()
        .ok_or_else(|| CliError::Config("phase: section missing".into()))?;
    let betas = sorted_lattice("betas", &cfg.betas)?;
    let gammas = sorted_lattice("gammas", &cfg.gammas)?;
    if cfg.seeds_per_cell < MIN_CELL_SEEDS {
        return Err(CliError::Config(format!(
            "phase.seeds_per_cell: need at least {MIN_CELL_SEEDS}, got {}",
            cfg.seeds_per_cell
        )));
    }
    let m = &p.config.model;
    let kappa_ok = DalangReport::analyze(&p.spec.kernel, m.kappa)
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .admissible;
    let first = p.config.ensemble.first_seed;
    let jobs: Vec<(usize, usize, u64)> = (0..betas.len())
        .flat_map(|i| (0..gammas.len()).flat_map(move |j| (0..cfg.seeds_per_cell).map(move |s| (i, j, first + s))))
        .collect();
    let opts = RunOptions {
        series_every: p.steps,
        snapshot_every: 0,
    };
    let threshold = p.config.stopping.threshold;
    // Only the outcome of each job is kept: Some(exploded) or None on error.
    let outcomes: Vec<Option<bool>> = pool(width)?.install(|| {
        jobs.par_iter()
            .map(|&(i, j, seed)| {
                let mut spec = p.spec.clone();
                spec.beta = betas[i];
                spec.gamma = gammas[j];
                run_path(p, &spec, seed, &opts).ok().map(|q| exploded_at(&q, threshold))
            })
            .collect()
    });
    let per = cfg.seeds_per_cell as usize;
    let mut cells = Vec::with_capacity(betas.len() * gammas.len());
    for (c, chunk) in outcomes.chunks(per).enumerate() {
        let (i, j) = (c / gammas.len(), c % gammas.len());
        let finished: Vec<bool> = chunk.iter().flatten().copied().collect();
        let exploded = finished.iter().filter(|e| **e).count();
        let (wilson_low, wilson_high) = if finished.is_empty() {
            (0.0, 1.0)
        } else {
            wilson_interval(exploded, finished.len(), Z95)
        };
        let admissible = kappa_ok
            && admissibility(betas[i], gammas[j], m.dim, m.kappa)
                .map_err(|e| CliError::Config(format!("phase: {e}")))?
                .nonempty;
        cells.push(PhaseRow {
            beta: betas[i],
            gamma: gammas[j],
            admissible,
            seeds: cfg.seeds_per_cell,
            failed: per - finished.len(),
            exploded,
            fraction: if finished.is_empty() { f64::NAN } else { exploded as f64 / finished.len() as f64 },
            wilson_low,
            wilson_high,
        });
    }
    let admissible_cells = cells.iter().filter(|c| c.admissible).count();
    let quiet_admissible_cells = cells.iter().filter(|c| c.admissible && c.exploded == 0).count();
    let outside = p.spec.coeffs.outside_theorem();
    let verdict = if outside {
        Verdict::new(Status::Skipped, OUTSIDE_THEOREM)
    } else if admissible_cells == 0 {
        Verdict::new(Status::NotComputed, "no admissible cells in the lattice")
    } else {
        let share = quiet_admissible_cells as f64 / admissible_cells as f64;
        let status = if share >= QUIET_SHARE { Status::Pass } else { Status::Fail };
        Verdict::new(
            status,
            format!("{quiet_admissible_cells} of {admissible_cells} admissible cells without explosion (need {QUIET_SHARE})"),
        )
    };
    Ok(PhaseReport {
        kappa: m.kappa,
        dim: m.dim,
        horizon: m.horizon,
        threshold,
        seeds_per_cell: cfg.seeds_per_cell,
        banner: outside.then_some(OUTSIDE_THEOREM),
        cells,
        admissible_cells,
        quiet_admissible_cells,
        verdict,
    })
}

pub fn phase(p: &Prepared) -> Result<Outcome, CliError> {
    let width = thread_width(p.config.ensemble.parallelism)?;
    let report = phase_report(p, width)?;
    let dir = out_dir(p)?;
    let outputs = &p.config.outputs;
    if outputs.wants(Format::Csv) {
        let mut csv = Csv::new(
            &p.hash_hex,
            &["beta", "gamma", "admissible", "seeds", "failed", "exploded", "fraction", "wilson_low", "wilson_high"],
        );
        for c in &report.cells {
            csv.row([
                c.beta.to_string(),
                c.gamma.to_string(),
                c.admissible.to_string(),
                c.seeds.to_string(),
                c.failed.to_string(),
                c.exploded.to_string(),
                c.fraction.to_string(),
                c.wilson_low.to_string(),
                c.wilson_high.to_string(),
            ]);
        }
        csv.write(&dir.join("phase.csv"))?;
    }
    if outputs.wants(Format::Json) {
        write_json(&dir.join("phase.json"), &p.hash_hex, &report)?;
    }
    if outputs.wants(Format::Svg) {
        let mut betas: Vec<f64> = report.cells.iter().map(|c| c.beta).collect();
        let mut gammas: Vec<f64> = report.cells.iter().map(|c| c.gamma).collect();
        for v in [&mut betas, &mut gammas] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let cells: Vec<PhaseCell> = report
            .cells
            .iter()
            .map(|c| PhaseCell {
                beta: c.beta,
                gamma: c.gamma,
                fraction: c.fraction,
            })
            .collect();
        let (kappa, dim) = (report.kappa, report.dim);
        let svg = phase_svg(&p.hash_hex, &betas, &gammas, &cells, |b| frontier_gamma(b, kappa, dim));
        write_file(&dir.join("phase.svg"), svg.as_bytes())?;
    }
    if let Some(b) = report.banner {
        println!("{b}");
    }
    for c in &report.cells {
        println!(
            "beta {:<8} gamma {:<8} {:<12} exploded {}/{}",
            c.beta,
            c.gamma,
            if c.admissible { "admissible" } else { "outside" },
            c.exploded,
            c.seeds as usize - c.failed
        );
    }
    println!("verdict {:?}: {}", report.verdict.status, report.verdict.detail);
    if report.cells.iter().any(|c| !enough_survivors(c.seeds as usize - c.failed, c.seeds as usize)) {
        return Err(CliError::Runtime("too many failed runs in some cells".into()));
    }
    Ok(if report.verdict.status == Status::Fail { Outcome::Fail } else { Outcome::Pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontier_passes_through_beta_two_in_one_dimension() {
        for kappa in [0.1, 0.49, 1.0] {
            assert!((frontier_gamma(2.0, kappa, 1) - kappa).abs() < 1e-15);
        }
        assert_eq!(frontier_gamma(3.0, 0.5, 2), 0.5);
    }

    #[test]
    fn low_power_masks_decided_verdicts_only() {
        let v = Verdict::new(Status::Pass, "x").powered(true);
        assert_eq!(v.status, Status::LowPower);
        let v = Verdict::new(Status::Skipped, "x").powered(true);
        assert_eq!(v.status, Status::Skipped);
        let v = Verdict::new(Status::Fail, "x").powered(false);
        assert_eq!(v.status, Status::Fail);
    }

    #[test]
    fn survival_rule() {
        assert!(enough_survivors(180, 200));
        assert!(!enough_survivors(179, 200));
        assert!(!enough_survivors(0, 0));
    }
}
