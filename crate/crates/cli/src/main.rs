//! `roughlq`: command-line front end for the rough-noise LQ experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure
//! (including a diverged single run).

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use roughlq::config::Config;
use roughlq::experiment::{emit_plot_data, run_comparison, ControllerLabel, Mode, Scenario};
use roughlq::linalg::eigenvalues;
use roughlq::noise::{fmt_f64, NoiseModel, NoiseSampler, TimeGrid};
use roughlq::observer::{gain_stationarity_check, moments_from_models, solve_observer_steady_state};
use roughlq::pendulum::build_pendulum;
use roughlq::riccati::solve_care;
use roughlq::rough::{holder_estimate, lift_piecewise_linear, p_variation, refinement_study};
use roughlq::simulate::{generate_drivers, integrate, Designs};
use roughlq::Error;

#[derive(Parser)]
#[command(name = "roughlq", version, about = "LQ and gLQ control of a pendulum under rough noise")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Time step in seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulated time in seconds.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Configuration file (sectioned key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; commands print to stdout when it is absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// State weights, comma separated (4 entries).
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    q_diag: Option<Vec<f64>>,
    /// Input weight.
    #[arg(long, global = true)]
    r: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the control Riccati equation for the pendulum.
    Care,
    /// Sample a noise path and write it as CSV.
    NoiseGen(NoiseArgs),
    /// Lift a sampled path and report Chen defects, regularity and refinement.
    LiftCheck(NoiseArgs),
    /// Estimate noise moments and solve the steady-state observer.
    Observer,
    /// Run one closed-loop simulation.
    Simulate,
    /// Compare controllers over several seeds.
    Compare(CompareArgs),
    /// Run a comparison and write per-figure CSVs with a manifest.
    PlotData(CompareArgs),
}

#[derive(Args)]
struct NoiseArgs {
    /// fbm, stable or brownian; defaults to the configured process noise.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Path dimension.
    #[arg(long, default_value_t = 1)]
    dim: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// fbm035 or stable15.
    #[arg(long)]
    scenario: Option<String>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated subset of lq, glq-conditional, glq-pathwise.
    #[arg(long, value_delimiter = ',')]
    controllers: Option<Vec<String>>,
    /// Comma-separated subset of fullstate, observer.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    /// Row stride of written trajectories.
    #[arg(long)]
    stride: Option<usize>,
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter { .. } | Error::Predictor(_) | Error::Regularity { .. } => {
                Failure::Config(e.to_string())
            }
            Error::Io(_) => Failure::Config(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(g: &Global) -> CliResult<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if let Some(v) = g.dt {
        cfg.dt = v;
    }
    if let Some(v) = g.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = &g.q_diag {
        cfg.q_diag = v.clone();
    }
    if let Some(v) = g.r {
        cfg.r = v;
    }
    // Round trip through the parser so flag overrides get the same checks.
    Ok(Config::parse(&cfg.to_text())?)
}

/// Writes `body` to `out/name`, or stdout when no directory is set.
fn emit(out: Option<&Path>, name: &str, body: &str) -> CliResult<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
        }
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn matrix_lines(out: &mut String, name: &str, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{name}[{i}] = {}", row.join(","));
    }
}

fn noise_from_args(a: &NoiseArgs, cfg: &Config) -> CliResult<NoiseModel> {
    let Some(kind) = &a.kind else {
        return Ok(cfg.process_noise());
    };
    let model = match kind.as_str() {
        "fbm" => NoiseModel::fbm(a.hurst.unwrap_or(0.35), a.sigma.unwrap_or(1.0)),
        "stable" => NoiseModel::stable(
            a.alpha.unwrap_or(1.5),
            a.beta.unwrap_or(0.0),
            a.gamma.unwrap_or(1.0),
            a.delta.unwrap_or(0.0),
        ),
        "brownian" => NoiseModel::brownian(a.sigma.unwrap_or(1.0)),
        other => return Err(Failure::Config(format!("unknown noise kind `{other}`"))),
    };
    Ok(model?)
}

fn cmd_care(cfg: &Config, out: Option<&Path>) -> CliResult<()> {
    let m = build_pendulum().state_space(&cfg.q_diag, cfg.r)?;
    let d = solve_care(&m.a, &m.b, &m.q, &m.r)?;
    let mut s = String::new();
    matrix_lines(&mut s, "P", &d.p);
    matrix_lines(&mut s, "K", &d.k);
    let eig: Vec<String> = eigenvalues(&d.a_cl).iter().map(|z| format!("{}{}{}i", fmt_f64(z.re), if z.im < 0.0 { "" } else { "+" }, fmt_f64(z.im))).collect();
    let _ = writeln!(s, "closed_loop_eigenvalues = {}", eig.join(","));
    let _ = writeln!(s, "residual = {}", fmt_f64(d.care_residual));
    let _ = writeln!(s, "iterations = {}", d.iterations);
    emit(out, "care.txt", &s)
}

fn cmd_noise_gen(a: &NoiseArgs, cfg: &Config, out: Option<&Path>) -> CliResult<()> {
    let model = noise_from_args(a, cfg)?;
    let grid = TimeGrid::covering(cfg.dt, cfg.horizon)?;
    let path = NoiseSampler::new(&model, grid)?.sample(a.dim, cfg.seed, 0)?;
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    emit(out, "noise.csv", &String::from_utf8_lossy(&buf))
}

fn cmd_lift_check(a: &NoiseArgs, cfg: &Config, out: Option<&Path>) -> CliResult<()> {
    let model = noise_from_args(a, cfg)?;
    let grid = TimeGrid::covering(cfg.dt, cfg.horizon)?;
    let path = NoiseSampler::new(&model, grid)?.sample(a.dim.max(2), cfg.seed, 0)?;
    let lift = lift_piecewise_linear(&path)?;
    let n = lift.steps();
    let mut chen: f64 = 0.0;
    let mut sym: f64 = 0.0;
    // Deterministic spread of triples over the grid.
    for i in 0..200usize {
        let j = (i * 7919) % n;
        let k = j + 1 + (i * 104_729) % (n - j);
        let m = j + (k - j) / 2;
        chen = chen.max(lift.chen_defect_index(j, m, k)?);
        sym = sym.max(lift.sym_defect_index(j, k)?);
    }
    let mut s = String::new();
    let _ = writeln!(s, "steps = {n}");
    let _ = writeln!(s, "max_chen_defect = {}", fmt_f64(chen));
    let _ = writeln!(s, "max_symmetric_defect = {}", fmt_f64(sym));
    let _ = writeln!(s, "holder_estimate = {}", fmt_f64(holder_estimate(&path)?));
    let p = (1.0 / model.regularity()).max(1.0) + 0.5;
    let _ = writeln!(s, "p = {}", fmt_f64(p));
    let _ = writeln!(s, "p_variation = {}", fmt_f64(p_variation(&path, p)?));
    match refinement_study(&path, 4) {
        Ok(r) => {
            let _ = writeln!(s, "refinement_rate = {}", fmt_f64(r.rate));
        }
        Err(e) => log::warn!("refinement study skipped: {e}"),
    }
    emit(out, "lift_check.txt", &s)
}

fn cmd_observer(cfg: &Config, out: Option<&Path>) -> CliResult<()> {
    let m = build_pendulum().state_space(&cfg.q_diag, cfg.r)?;
    let moments = moments_from_models(
        &cfg.process_noise(),
        &cfg.measurement_noise(),
        m.n(),
        m.p(),
        cfg.dt,
        cfg.moment_steps,
        cfg.moment_replications,
        cfg.seed,
    )?;
    let obs = solve_observer_steady_state(&m.a, &m.c, &moments)?;
    let mut s = String::new();
    matrix_lines(&mut s, "Sigma_v", &moments.sigma_v);
    matrix_lines(&mut s, "Sigma_w", &moments.sigma_w);
    matrix_lines(&mut s, "R_vw", &moments.r_vw);
    matrix_lines(&mut s, "S", &obs.s);
    matrix_lines(&mut s, "L", &obs.l);
    let _ = writeln!(s, "residual = {}", fmt_f64(obs.residual));
    let _ = writeln!(s, "stationarity = {}", fmt_f64(gain_stationarity_check(&obs.s, &obs.l, &m.c, &moments)));
    emit(out, "observer.txt", &s)
}

fn cmd_simulate(cfg: &Config, out: Option<&Path>) -> CliResult<()> {
    let sim = cfg.sim_config()?;
    let designs = Designs::prepare(&sim)?;
    let drivers = generate_drivers(&sim, &designs, 0)?;
    let traj = integrate(&sim, &designs, &drivers)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv, cfg.stride)?;
    let avg = roughlq::simulate::average_cost(&traj, &sim.model.q, &sim.model.r);
    let mut s = String::new();
    let _ = writeln!(s, "final_cost = {}", fmt_f64(traj.final_cost()));
    let _ = writeln!(s, "average_cost = {}", fmt_f64(avg.value));
    let _ = writeln!(s, "diverged = {}", traj.diverged.is_some());
    let _ = writeln!(s, "divergence_time = {}", traj.diverged.map_or("none".into(), fmt_f64));
    let _ = writeln!(s, "driver_fingerprint = {:016x}", traj.driver_fingerprint);
    let _ = write!(s, "\n# configuration\n{}", cfg.to_text());
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("trajectory.csv"), &csv)?;
            let mut corr = Vec::new();
            traj.write_correction_csv(&mut corr, cfg.stride)?;
            fs::write(dir.join("correction.csv"), &corr)?;
            fs::write(dir.join("summary.txt"), &s)?;
        }
        None => {
            std::io::stdout().write_all(&csv)?;
            eprint!("{s}");
        }
    }
    if let Some(t) = traj.diverged {
        return Err(Failure::Numeric(format!("trajectory diverged at t = {t}")));
    }
    Ok(())
}

fn compare_config(a: &CompareArgs, cfg: &mut Config) -> CliResult<()> {
    if let Some(s) = &a.scenario {
        cfg.scenario = Scenario::parse(s)?;
    }
    if let Some(n) = a.seeds {
        cfg.seeds = n;
    }
    if let Some(list) = &a.controllers {
        cfg.controllers = list.iter().map(|s| ControllerLabel::parse(s)).collect::<roughlq::Result<_>>()?;
    }
    if let Some(list) = &a.modes {
        cfg.modes = list.iter().map(|s| Mode::parse(s)).collect::<roughlq::Result<_>>()?;
    }
    if let Some(s) = a.stride {
        cfg.stride = s;
    }
    *cfg = Config::parse(&cfg.to_text())?;
    Ok(())
}

fn cmd_compare(a: &CompareArgs, mut cfg: Config, out: Option<&Path>, plots: bool) -> CliResult<()> {
    compare_config(a, &mut cfg)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.seed + i).collect();
    let out = out.unwrap_or(Path::new("out"));
    let report = run_comparison(
        cfg.scenario,
        &cfg.controllers,
        &cfg.modes,
        &seeds,
        &cfg,
        if plots { None } else { Some(out) },
    )?;
    if plots {
        let entries = emit_plot_data(&report, out)?;
        log::info!("wrote {} plot files to {}", entries.len(), out.display());
    } else {
        print!("{}", report.summary_text());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli.global)?;
    let out = cli.global.out.as_deref();
    match &cli.command {
        Command::Care => cmd_care(&cfg, out),
        Command::NoiseGen(a) => cmd_noise_gen(a, &cfg, out),
        Command::LiftCheck(a) => cmd_lift_check(a, &cfg, out),
        Command::Observer => cmd_observer(&cfg, out),
        Command::Simulate => cmd_simulate(&cfg, out),
        Command::Compare(a) => cmd_compare(a, cfg, out, false),
        Command::PlotData(a) => cmd_compare(a, cfg, out, true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}
