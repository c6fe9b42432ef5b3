//! Batch comparison of classical LQ and gLQ on the pendulum.
//!
//! Every run writes `runs/<scenario>_<controller>_<mode>_seed<k>.csv` (the
//! trajectory) and a matching `.summary`. The metrics below are computed
//! from exactly the rows written to the CSV, so `summary.txt` can be
//! recomputed from the run files alone.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::Config;
use crate::control::PredictorMethod;
use crate::error::{Error, Result};
use crate::noise::{fmt_f64, fnv1a, NoiseModel};
use crate::pendulum::reported_angle_deg;
use crate::simulate::{generate_drivers, integrate, ControllerKind, Designs, SimConfig, Trajectory};

/// Fraction of the horizon, at the end, used for final-window metrics.
pub const FINAL_WINDOW: f64 = 0.2;
/// Index of the pendulum angle in the state vector.
pub const ANGLE_INDEX: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// fBm with `H = 0.35` in every state channel.
    FBm035,
    /// Symmetric α-stable noise with `α = 1.5`.
    Stable15,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::FBm035 => "fbm035",
            Scenario::Stable15 => "stable15",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fbm035" => Ok(Scenario::FBm035),
            "stable15" => Ok(Scenario::Stable15),
            _ => Err(Error::Config(format!("unknown scenario `{s}` (fbm035, stable15)"))),
        }
    }

    /// Intensities put classical LQ into its saturation-driven failure
    /// regime at `Δt = 1e-3`, `T = 10`, saturation 1000.
    pub fn process_noise(&self) -> NoiseModel {
        match self {
            Scenario::FBm035 => NoiseModel::FBm { hurst: 0.35, sigma: 75.0 },
            Scenario::Stable15 => NoiseModel::StableLevy { alpha: 1.5, beta: 0.0, gamma: 30.0, delta: 0.0 },
        }
    }

    pub fn measurement_noise(&self) -> NoiseModel {
        match self {
            Scenario::FBm035 => NoiseModel::FBm { hurst: 0.35, sigma: 1.0 },
            Scenario::Stable15 => NoiseModel::StableLevy { alpha: 1.5, beta: 0.0, gamma: 1.0, delta: 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerLabel {
    Lq,
    GlqConditional,
    GlqPathwise,
}

impl ControllerLabel {
    pub const ALL: [ControllerLabel; 3] =
        [ControllerLabel::Lq, ControllerLabel::GlqConditional, ControllerLabel::GlqPathwise];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerLabel::Lq => "lq",
            ControllerLabel::GlqConditional => "glq-conditional",
            ControllerLabel::GlqPathwise => "glq-pathwise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lq" => Ok(ControllerLabel::Lq),
            "glq-conditional" => Ok(ControllerLabel::GlqConditional),
            "glq-pathwise" => Ok(ControllerLabel::GlqPathwise),
            _ => Err(Error::Config(format!(
                "unknown controller `{s}` (lq, glq-conditional, glq-pathwise)"
            ))),
        }
    }

    pub fn apply(&self, cfg: &mut SimConfig) {
        match self {
            ControllerLabel::Lq => cfg.controller = ControllerKind::ClassicalLq,
            ControllerLabel::GlqConditional => {
                cfg.controller = ControllerKind::Glq;
                cfg.predictor = PredictorMethod::GaussianConditioning;
            }
            ControllerLabel::GlqPathwise => {
                cfg.controller = ControllerKind::Glq;
                cfg.predictor = PredictorMethod::PathwiseKnown;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FullState,
    Observer,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::FullState => "fullstate",
            Mode::Observer => "observer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fullstate" => Ok(Mode::FullState),
            "observer" => Ok(Mode::Observer),
            _ => Err(Error::Config(format!("unknown mode `{s}` (fullstate, observer)"))),
        }
    }
}

/// Rows kept for plotting: every `stride`-th step plus the last.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotSeries {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub xhat: Option<Vec<DVector<f64>>>,
    pub u_raw: Vec<DVector<f64>>,
    pub u_sat: Vec<DVector<f64>>,
    pub cost: Vec<f64>,
}

pub fn recorded_indices(len: usize, stride: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    (0..len).filter(|k| k % stride.max(1) == 0 || *k == len - 1).collect()
}

impl PlotSeries {
    pub fn from_trajectory(traj: &Trajectory, stride: usize) -> Self {
        let idx = recorded_indices(traj.times.len(), stride);
        PlotSeries {
            times: idx.iter().map(|&k| traj.times[k]).collect(),
            x: idx.iter().map(|&k| traj.x[k].clone()).collect(),
            xhat: traj.xhat.as_ref().map(|xh| idx.iter().map(|&k| xh[k].clone()).collect()),
            u_raw: idx.iter().map(|&k| traj.u_raw[k].clone()).collect(),
            u_sat: idx.iter().map(|&k| traj.u_sat[k].clone()).collect(),
            cost: idx.iter().map(|&k| traj.cost[k]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub controller: ControllerLabel,
    pub mode: Mode,
    pub seed: u64,
    pub diverged_at: Option<f64>,
    /// Largest `‖x‖` over the final window; infinite if diverged.
    pub final_norm: f64,
    /// Largest `|θ|` in degrees over the final window; infinite if diverged.
    pub final_angle_deg: f64,
    /// Running cost over elapsed time; infinite if diverged.
    pub average_cost: f64,
    pub final_cost: f64,
    /// Share of rows with clipped input from the first clipped row onward.
    pub saturation_duty: f64,
    /// Set when the run failed with an error or panic instead of a trajectory.
    pub error: Option<String>,
    pub file_stem: String,
    pub series: PlotSeries,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Metrics of one run from its recorded rows.
pub struct RowMetrics {
    pub final_norm: f64,
    pub final_angle_deg: f64,
    pub average_cost: f64,
    pub final_cost: f64,
    pub saturation_duty: f64,
}

pub fn row_metrics(series: &PlotSeries, horizon: f64, diverged: bool) -> RowMetrics {
    let start = (1.0 - FINAL_WINDOW) * horizon;
    let mut final_norm: f64 = 0.0;
    let mut final_angle: f64 = 0.0;
    for (t, x) in series.times.iter().zip(&series.x) {
        if *t >= start - 1e-9 {
            final_norm = final_norm.max(x.norm());
            final_angle = final_angle.max(x[ANGLE_INDEX].to_degrees().abs());
        }
    }
    let clipped: Vec<bool> = series.u_raw.iter().zip(&series.u_sat).map(|(r, s)| r != s).collect();
    let saturation_duty = match clipped.iter().position(|c| *c) {
        Some(onset) => {
            let tail = &clipped[onset..];
            tail.iter().filter(|c| **c).count() as f64 / tail.len() as f64
        }
        None => 0.0,
    };
    let final_cost = series.cost.last().copied().unwrap_or(0.0);
    let t_last = series.times.last().copied().unwrap_or(0.0);
    if diverged {
        RowMetrics {
            final_norm: f64::INFINITY,
            final_angle_deg: f64::INFINITY,
            average_cost: f64::INFINITY,
            final_cost,
            saturation_duty,
        }
    } else {
        RowMetrics {
            final_norm,
            final_angle_deg: final_angle,
            average_cost: if t_last > 0.0 { final_cost / t_last } else { 0.0 },
            final_cost,
            saturation_duty,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub controller: ControllerLabel,
    pub mode: Mode,
    pub runs: usize,
    pub divergences: usize,
    pub divergence_rate: f64,
    pub median_divergence_time: Option<f64>,
    /// Over non-diverged runs; `None` when every run diverged.
    pub max_final_norm: Option<f64>,
    pub max_final_angle_deg: Option<f64>,
    pub mean_average_cost: Option<f64>,
    pub mean_saturation_duty: f64,
    /// Mean post-onset duty over diverged runs.
    pub mean_saturation_duty_diverged: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(records: &[RunRecord], controller: ControllerLabel, mode: Mode) -> SummaryRow {
    let group: Vec<&RunRecord> = records.iter().filter(|r| r.controller == controller && r.mode == mode).collect();
    let runs = group.len();
    let div: Vec<&RunRecord> = group.iter().copied().filter(|r| r.diverged()).collect();
    let ok: Vec<&RunRecord> = group.iter().copied().filter(|r| !r.diverged()).collect();
    let max_of = |f: fn(&RunRecord) -> f64| ok.iter().map(|r| f(r)).reduce(f64::max);
    SummaryRow {
        controller,
        mode,
        runs,
        divergences: div.len(),
        divergence_rate: if runs == 0 { 0.0 } else { div.len() as f64 / runs as f64 },
        median_divergence_time: median(div.iter().filter_map(|r| r.diverged_at).collect()),
        max_final_norm: max_of(|r| r.final_norm),
        max_final_angle_deg: max_of(|r| r.final_angle_deg),
        mean_average_cost: if ok.is_empty() {
            None
        } else {
            Some(ok.iter().map(|r| r.average_cost).sum::<f64>() / ok.len() as f64)
        },
        mean_saturation_duty: if runs == 0 {
            0.0
        } else {
            group.iter().map(|r| r.saturation_duty).sum::<f64>() / runs as f64
        },
        mean_saturation_duty_diverged: if div.is_empty() {
            None
        } else {
            Some(div.iter().map(|r| r.saturation_duty).sum::<f64>() / div.len() as f64)
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub config_echo: String,
    pub horizon: f64,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn empty(scenario: Scenario, config: &Config) -> Self {
        ExperimentReport {
            scenario,
            config_echo: config.to_text(),
            horizon: config.horizon,
            records: Vec::new(),
            summaries: Vec::new(),
        }
    }

    pub fn summary(&self, controller: ControllerLabel, mode: Mode) -> Option<&SummaryRow> {
        self.summaries.iter().find(|s| s.controller == controller && s.mode == mode)
    }

    /// Flat `summary.txt` content.
    pub fn summary_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), fmt_f64);
        let mut out = format!("scenario = {}\nruns = {}\n", self.scenario.name(), self.records.len());
        for s in &self.summaries {
            let p = format!("{}.{}", s.controller.name(), s.mode.name());
            let _ = writeln!(out, "{p}.runs = {}", s.runs);
            let _ = writeln!(out, "{p}.divergences = {}", s.divergences);
            let _ = writeln!(out, "{p}.divergence_rate = {}", fmt_f64(s.divergence_rate));
            let _ = writeln!(out, "{p}.median_divergence_time = {}", opt(s.median_divergence_time));
            let _ = writeln!(out, "{p}.max_final_norm = {}", opt(s.max_final_norm));
            let _ = writeln!(out, "{p}.max_final_angle_deg = {}", opt(s.max_final_angle_deg));
            let _ = writeln!(out, "{p}.mean_average_cost = {}", opt(s.mean_average_cost));
            let _ = writeln!(out, "{p}.mean_saturation_duty = {}", fmt_f64(s.mean_saturation_duty));
            let _ = writeln!(out, "{p}.mean_saturation_duty_diverged = {}", opt(s.mean_saturation_duty_diverged));
        }
        out
    }
}

fn run_summary_text(rec: &RunRecord, scenario: Scenario, config_echo: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario = {}", scenario.name());
    let _ = writeln!(out, "controller = {}", rec.controller.name());
    let _ = writeln!(out, "mode = {}", rec.mode.name());
    let _ = writeln!(out, "seed = {}", rec.seed);
    let _ = writeln!(out, "diverged = {}", rec.diverged());
    let _ = writeln!(out, "divergence_time = {}", rec.diverged_at.map_or("none".to_string(), fmt_f64));
    let _ = writeln!(out, "final_cost = {}", fmt_f64(rec.final_cost));
    let _ = writeln!(out, "average_cost = {}", fmt_f64(rec.average_cost));
    let _ = writeln!(out, "final_norm = {}", fmt_f64(rec.final_norm));
    let _ = writeln!(out, "final_angle_deg = {}", fmt_f64(rec.final_angle_deg));
    let _ = writeln!(out, "saturation_duty = {}", fmt_f64(rec.saturation_duty));
    let _ = writeln!(out, "error = {}", rec.error.as_deref().unwrap_or("none").replace('\n', " "));
    let _ = writeln!(out, "\n# configuration\n{config_echo}");
    out
}

fn failed_record(controller: ControllerLabel, mode: Mode, seed: u64, stem: String, msg: String) -> RunRecord {
    RunRecord {
        controller,
        mode,
        seed,
        diverged_at: Some(0.0),
        final_norm: f64::INFINITY,
        final_angle_deg: f64::INFINITY,
        average_cost: f64::INFINITY,
        final_cost: 0.0,
        saturation_duty: 0.0,
        error: Some(msg),
        file_stem: stem,
        series: PlotSeries::default(),
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

fn run_one(cfg: &SimConfig, designs: &Designs, stride: usize) -> Result<(Trajectory, PlotSeries)> {
    let drivers = generate_drivers(cfg, designs, 0)?;
    let traj = integrate(cfg, designs, &drivers)?;
    let series = PlotSeries::from_trajectory(&traj, stride);
    Ok((traj, series))
}

/// Runs every (controller, mode, seed) combination. Drivers depend only on
/// the seed, so runs with the same seed see the same noise. Failed runs are
/// recorded as divergence at `t = 0` with the error message. When `out_dir`
/// is given, per-run CSVs and summaries plus `summary.txt` and
/// `config.txt` are written there.
pub fn run_comparison(
    scenario: Scenario,
    controllers: &[ControllerLabel],
    modes: &[Mode],
    seeds: &[u64],
    overrides: &Config,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    if seeds.len() < 10 {
        log::warn!("{} seeds is too few for stable rate estimates", seeds.len());
    }
    let mut config = overrides.clone();
    config.scenario = scenario;
    let runs_dir = out_dir.map(|d| d.join("runs"));
    if let Some(dir) = &runs_dir {
        fs::create_dir_all(dir)?;
    }
    let mut report = ExperimentReport::empty(scenario, &config);
    for &controller in controllers {
        for &mode in modes {
            let mut base = config.sim_config()?;
            controller.apply(&mut base);
            base.observer_enabled = mode == Mode::Observer;
            let designs = Designs::prepare(&base).map_err(|e| e.to_string());
            if let Err(e) = &designs {
                log::error!("{} {}: design failed: {e}", controller.name(), mode.name());
            }
            let records: Vec<RunRecord> = seeds
                .par_iter()
                .map(|&seed| {
                    let stem = format!("{}_{}_{}_seed{}", scenario.name(), controller.name(), mode.name(), seed);
                    let designs = match &designs {
                        Ok(d) => d,
                        Err(e) => return failed_record(controller, mode, seed, stem, e.clone()),
                    };
                    let mut cfg = base.clone();
                    cfg.seed = seed;
                    let outcome = catch_unwind(AssertUnwindSafe(|| run_one(&cfg, designs, config.stride)));
                    let (traj, series) = match outcome {
                        Ok(Ok(v)) => v,
                        Ok(Err(e)) => return failed_record(controller, mode, seed, stem, e.to_string()),
                        Err(p) => return failed_record(controller, mode, seed, stem, panic_message(p)),
                    };
                    let m = row_metrics(&series, cfg.horizon, traj.diverged.is_some());
                    RunRecord {
                        controller,
                        mode,
                        seed,
                        diverged_at: traj.diverged,
                        final_norm: m.final_norm,
                        final_angle_deg: m.final_angle_deg,
                        average_cost: m.average_cost,
                        final_cost: m.final_cost,
                        saturation_duty: m.saturation_duty,
                        error: None,
                        file_stem: stem,
                        series,
                    }
                })
                .collect();
            if let Some(dir) = &runs_dir {
                for rec in &records {
                    write_series_csv(&rec.series, fs::File::create(dir.join(format!("{}.csv", rec.file_stem)))?)?;
                    fs::write(
                        dir.join(format!("{}.summary", rec.file_stem)),
                        run_summary_text(rec, scenario, &report.config_echo),
                    )?;
                }
            }
            report.records.extend(records);
            report.summaries.push(summarize(&report.records, controller, mode));
        }
    }
    if let Some(dir) = out_dir {
        fs::write(dir.join("summary.txt"), report.summary_text())?;
        fs::write(dir.join("config.txt"), &report.config_echo)?;
    }
    Ok(report)
}

/// Trajectory CSV `t,x1..xn,xhat1..xhatn,u_raw,u_sat,cost` from recorded rows.
/// Without an observer the estimate columns repeat the state.
fn write_series_csv<W: std::io::Write>(s: &PlotSeries, out: W) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(out);
    let n = s.x.first().map_or(0, |x| x.len());
    let mut header = String::from("t");
    for i in 1..=n {
        let _ = write!(header, ",x{i}");
    }
    for i in 1..=n {
        let _ = write!(header, ",xhat{i}");
    }
    writeln!(out, "{header},u_raw,u_sat,cost")?;
    for k in 0..s.times.len() {
        let mut row = fmt_f64(s.times[k]);
        let est = s.xhat.as_ref().map_or(&s.x[k], |xh| &xh[k]);
        for v in s.x[k].iter().chain(est.iter()) {
            row.push(',');
            row.push_str(&fmt_f64(*v));
        }
        for v in s.u_raw[k].iter().chain(s.u_sat[k].iter()) {
            row.push(',');
            row.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{row},{}", fmt_f64(s.cost[k]))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub checksum: u64,
}

/// Writes `<stem>_state.csv` (`t,x1..x4,angle_deg`) and `<stem>_control.csv`
/// (`t,u_raw,u_sat`) for every run with data, then `manifest.txt` listing
/// each file with its size and FNV-1a checksum, followed by the config.
pub fn emit_plot_data(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    let mut emit = |name: String, body: String| -> Result<()> {
        fs::write(out_dir.join(&name), body.as_bytes())?;
        entries.push(ManifestEntry { file: name, bytes: body.len(), checksum: fnv1a(body.as_bytes()) });
        Ok(())
    };
    for rec in report.records.iter().filter(|r| !r.series.times.is_empty()) {
        let s = &rec.series;
        let n = s.x[0].len();
        let mut state = String::from("t");
        for i in 1..=n {
            let _ = write!(state, ",x{i}");
        }
        state.push_str(",angle_deg\n");
        let mut control = String::from("t,u_raw,u_sat\n");
        for k in 0..s.times.len() {
            state.push_str(&fmt_f64(s.times[k]));
            for v in s.x[k].iter() {
                state.push(',');
                state.push_str(&fmt_f64(*v));
            }
            let _ = writeln!(state, ",{}", fmt_f64(reported_angle_deg(s.x[k][ANGLE_INDEX])));
            let _ = writeln!(
                control,
                "{},{},{}",
                fmt_f64(s.times[k]),
                fmt_f64(s.u_raw[k][0]),
                fmt_f64(s.u_sat[k][0])
            );
        }
        emit(format!("{}_state.csv", rec.file_stem), state)?;
        emit(format!("{}_control.csv", rec.file_stem), control)?;
    }
    let mut manifest = format!("scenario = {}\nfiles = {}\n", report.scenario.name(), entries.len());
    for e in &entries {
        let _ = writeln!(manifest, "{} {} {:016x}", e.file, e.bytes, e.checksum);
    }
    let _ = write!(manifest, "\n# configuration\n{}", report.config_echo);
    fs::write(out_dir.join("manifest.txt"), manifest)?;
    Ok(entries)
}
