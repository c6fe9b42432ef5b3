//! Flat sectioned `key = value` configuration shared by the CLI and the
//! experiment harness.
//!
//! ```text
//! [run]
//! seed = 7
//! dt = 0.001
//!
//! [noise.v]
//! kind = fbm
//! hurst = 0.35
//! sigma = 75
//! ```
//!
//! Unknown sections and keys are errors. [`Config::to_text`] writes every
//! field, and parsing that echo gives back an identical `Config`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::control::{FeedforwardScaling, PredictorMethod, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::experiment::{ControllerLabel, Mode, Scenario};
use crate::noise::NoiseModel;
use crate::pendulum::build_pendulum;
use crate::simulate::{ControllerKind, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // [run]
    pub seed: u64,
    /// Number of consecutive seeds `seed, seed+1, …` used by `compare`.
    pub seeds: usize,
    pub dt: f64,
    pub horizon: f64,
    pub saturation: f64,
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    /// Row stride of trajectory CSVs.
    pub stride: usize,
    pub replications: usize,
    // [model]
    pub q_diag: Vec<f64>,
    pub r: f64,
    // [noise.v], [noise.w]; absent sections fall back to the scenario
    pub noise_v: Option<NoiseModel>,
    pub noise_w: Option<NoiseModel>,
    // [controller]
    pub controller: ControllerKind,
    pub predictor: PredictorMethod,
    pub scaling: FeedforwardScaling,
    pub window: usize,
    pub correction_horizon: Option<f64>,
    // [observer]
    pub observer: bool,
    pub moment_replications: usize,
    pub moment_steps: usize,
    // [compare]
    pub scenario: Scenario,
    pub controllers: Vec<ControllerLabel>,
    pub modes: Vec<Mode>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            seeds: 20,
            dt: 1e-3,
            horizon: 10.0,
            saturation: 1000.0,
            x0: vec![0.0, 0.05, 0.0, 0.0],
            xhat0: vec![0.0; 4],
            stride: 10,
            replications: 1,
            q_diag: vec![1.0; 4],
            r: 1.0,
            noise_v: None,
            noise_w: None,
            controller: ControllerKind::Glq,
            predictor: PredictorMethod::GaussianConditioning,
            scaling: FeedforwardScaling::Consistent,
            window: DEFAULT_WINDOW,
            correction_horizon: None,
            observer: false,
            moment_replications: 200,
            moment_steps: 200,
            scenario: Scenario::FBm035,
            controllers: ControllerLabel::ALL.to_vec(),
            modes: vec![Mode::FullState, Mode::Observer],
        }
    }
}

fn cfg_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| cfg_err(line, format!("`{key}` expects a number, got `{v}`")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| cfg_err(line, format!("`{key}` expects a non-negative integer, got `{v}`")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(line, key, s.trim())).collect()
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(cfg_err(line, format!("`{key}` expects true/false, got `{v}`"))),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Accumulates `[noise.*]` keys until the section is complete.
#[derive(Default)]
struct NoiseSpec {
    kind: Option<String>,
    hurst: Option<f64>,
    sigma: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    delta: Option<f64>,
    line: usize,
}

impl NoiseSpec {
    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let slot = match key {
            "kind" => {
                self.kind = Some(v.to_string());
                return Ok(());
            }
            "hurst" => &mut self.hurst,
            "sigma" => &mut self.sigma,
            "alpha" => &mut self.alpha,
            "beta" => &mut self.beta,
            "gamma" => &mut self.gamma,
            "delta" => &mut self.delta,
            _ => return Err(cfg_err(line, format!("unknown noise key `{key}`"))),
        };
        *slot = Some(parse_f64(line, key, v)?);
        Ok(())
    }

    fn build(&self) -> Result<NoiseModel> {
        let line = self.line;
        let need = |v: Option<f64>, k: &str| v.ok_or_else(|| cfg_err(line, format!("noise section needs `{k}`")));
        let reject = |v: Option<f64>, k: &str, kind: &str| match v {
            Some(_) => Err(cfg_err(line, format!("`{k}` does not apply to {kind} noise"))),
            None => Ok(()),
        };
        let model = match self.kind.as_deref() {
            Some("fbm") => {
                for (v, k) in [(self.alpha, "alpha"), (self.beta, "beta"), (self.gamma, "gamma"), (self.delta, "delta")] {
                    reject(v, k, "fbm")?;
                }
                NoiseModel::fbm(need(self.hurst, "hurst")?, self.sigma.unwrap_or(1.0))
            }
            Some("stable") => {
                reject(self.hurst, "hurst", "stable")?;
                reject(self.sigma, "sigma", "stable")?;
                NoiseModel::stable(
                    need(self.alpha, "alpha")?,
                    self.beta.unwrap_or(0.0),
                    self.gamma.unwrap_or(1.0),
                    self.delta.unwrap_or(0.0),
                )
            }
            Some("brownian") => {
                for (v, k) in [
                    (self.hurst, "hurst"),
                    (self.alpha, "alpha"),
                    (self.beta, "beta"),
                    (self.gamma, "gamma"),
                    (self.delta, "delta"),
                ] {
                    reject(v, k, "brownian")?;
                }
                NoiseModel::brownian(self.sigma.unwrap_or(1.0))
            }
            Some(other) => return Err(cfg_err(line, format!("unknown noise kind `{other}`"))),
            None => return Err(cfg_err(line, "noise section needs `kind`")),
        };
        model.map_err(|e| cfg_err(line, e))
    }
}

fn write_noise(out: &mut String, section: &str, model: &NoiseModel) {
    let _ = writeln!(out, "\n[{section}]");
    let _ = match *model {
        NoiseModel::FBm { hurst, sigma } => writeln!(out, "kind = fbm\nhurst = {hurst}\nsigma = {sigma}"),
        NoiseModel::StableLevy { alpha, beta, gamma, delta } => writeln!(
            out,
            "kind = stable\nalpha = {alpha}\nbeta = {beta}\ngamma = {gamma}\ndelta = {delta}"
        ),
        NoiseModel::Brownian { sigma } => writeln!(out, "kind = brownian\nsigma = {sigma}"),
    };
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut section: Option<String> = None;
        let mut seen = std::collections::HashSet::new();
        let mut noise_v: Option<NoiseSpec> = None;
        let mut noise_w: Option<NoiseSpec> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                match name {
                    "run" | "model" | "controller" | "observer" | "compare" => {}
                    "noise.v" => noise_v = Some(NoiseSpec { line, ..Default::default() }),
                    "noise.w" => noise_w = Some(NoiseSpec { line, ..Default::default() }),
                    _ => return Err(cfg_err(line, format!("unknown section `[{name}]`"))),
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected `key = value`, got `{content}`")))?;
            let (key, v) = (key.trim(), value.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| cfg_err(line, format!("`{key}` appears before any section")))?;
            if !seen.insert(format!("{sec}.{key}")) {
                return Err(cfg_err(line, format!("duplicate key `{key}` in [{sec}]")));
            }
            match (sec, key) {
                ("run", "seed") => {
                    cfg.seed = v.parse().map_err(|_| cfg_err(line, format!("bad seed `{v}`")))?
                }
                ("run", "seeds") => cfg.seeds = parse_usize(line, key, v)?,
                ("run", "dt") => cfg.dt = parse_f64(line, key, v)?,
                ("run", "horizon") => cfg.horizon = parse_f64(line, key, v)?,
                ("run", "saturation") => cfg.saturation = parse_f64(line, key, v)?,
                ("run", "x0") => cfg.x0 = parse_list(line, key, v)?,
                ("run", "xhat0") => cfg.xhat0 = parse_list(line, key, v)?,
                ("run", "stride") => cfg.stride = parse_usize(line, key, v)?,
                ("run", "replications") => cfg.replications = parse_usize(line, key, v)?,
                ("model", "q_diag") => cfg.q_diag = parse_list(line, key, v)?,
                ("model", "r") => cfg.r = parse_f64(line, key, v)?,
                ("noise.v", _) => noise_v.as_mut().expect("section opened").set(line, key, v)?,
                ("noise.w", _) => noise_w.as_mut().expect("section opened").set(line, key, v)?,
                ("controller", "kind") => cfg.controller = ControllerKind::parse(v).map_err(|e| cfg_err(line, e))?,
                ("controller", "predictor") => {
                    cfg.predictor = PredictorMethod::parse(v).map_err(|e| cfg_err(line, e))?
                }
                ("controller", "scaling") => {
                    cfg.scaling = FeedforwardScaling::parse(v).map_err(|e| cfg_err(line, e))?
                }
                ("controller", "window") => cfg.window = parse_usize(line, key, v)?,
                ("controller", "correction_horizon") => {
                    cfg.correction_horizon = if v == "auto" { None } else { Some(parse_f64(line, key, v)?) }
                }
                ("observer", "enabled") => cfg.observer = parse_bool(line, key, v)?,
                ("observer", "moment_replications") => cfg.moment_replications = parse_usize(line, key, v)?,
                ("observer", "moment_steps") => cfg.moment_steps = parse_usize(line, key, v)?,
                ("compare", "scenario") => cfg.scenario = Scenario::parse(v).map_err(|e| cfg_err(line, e))?,
                ("compare", "controllers") => {
                    cfg.controllers = v
                        .split(',')
                        .map(|s| ControllerLabel::parse(s.trim()).map_err(|e| cfg_err(line, e)))
                        .collect::<Result<_>>()?
                }
                ("compare", "modes") => {
                    cfg.modes = v
                        .split(',')
                        .map(|s| Mode::parse(s.trim()).map_err(|e| cfg_err(line, e)))
                        .collect::<Result<_>>()?
                }
                _ => return Err(cfg_err(line, format!("unknown key `{key}` in [{sec}]"))),
            }
        }
        cfg.noise_v = noise_v.map(|s| s.build()).transpose()?;
        cfg.noise_w = noise_w.map(|s| s.build()).transpose()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.x0.len() != 4 || self.xhat0.len() != 4 || self.q_diag.len() != 4 {
            return bad("x0, xhat0 and q_diag need 4 entries".into());
        }
        if !(self.dt > 0.0) || !(self.horizon >= 10.0 * self.dt) {
            return bad(format!("need dt > 0 and horizon >= 10 dt, got dt = {}, horizon = {}", self.dt, self.horizon));
        }
        if !(self.saturation > 0.0) {
            return bad(format!("saturation must be positive, got {}", self.saturation));
        }
        if !(self.r > 0.0) || self.q_diag.iter().any(|q| !(*q >= 0.0)) {
            return bad("need r > 0 and nonnegative q_diag".into());
        }
        if self.stride == 0 || self.replications == 0 || self.seeds == 0 || self.window == 0 {
            return bad("stride, replications, seeds and window must be positive".into());
        }
        if self.controllers.is_empty() || self.modes.is_empty() {
            return bad("compare needs at least one controller and one mode".into());
        }
        Ok(())
    }

    /// Canonical text form; parses back to an identical value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "[run]\nseed = {}\nseeds = {}\ndt = {}\nhorizon = {}\nsaturation = {}\nx0 = {}\nxhat0 = {}\nstride = {}\nreplications = {}",
            self.seed,
            self.seeds,
            self.dt,
            self.horizon,
            self.saturation,
            join(&self.x0),
            join(&self.xhat0),
            self.stride,
            self.replications
        );
        let _ = writeln!(out, "\n[model]\nq_diag = {}\nr = {}", join(&self.q_diag), self.r);
        if let Some(m) = &self.noise_v {
            write_noise(&mut out, "noise.v", m);
        }
        if let Some(m) = &self.noise_w {
            write_noise(&mut out, "noise.w", m);
        }
        let _ = writeln!(
            out,
            "\n[controller]\nkind = {}\npredictor = {}\nscaling = {}\nwindow = {}\ncorrection_horizon = {}",
            self.controller.name(),
            self.predictor.name(),
            self.scaling.name(),
            self.window,
            self.correction_horizon.map_or("auto".to_string(), |t| t.to_string())
        );
        let _ = writeln!(
            out,
            "\n[observer]\nenabled = {}\nmoment_replications = {}\nmoment_steps = {}",
            self.observer, self.moment_replications, self.moment_steps
        );
        let _ = writeln!(
            out,
            "\n[compare]\nscenario = {}\ncontrollers = {}\nmodes = {}",
            self.scenario.name(),
            self.controllers.iter().map(|c| c.name()).collect::<Vec<_>>().join(","),
            self.modes.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
        );
        out
    }

    pub fn process_noise(&self) -> NoiseModel {
        self.noise_v.unwrap_or_else(|| self.scenario.process_noise())
    }

    pub fn measurement_noise(&self) -> NoiseModel {
        self.noise_w.unwrap_or_else(|| self.scenario.measurement_noise())
    }

    /// Pendulum simulation settings described by this configuration.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let model = build_pendulum().state_space(&self.q_diag, self.r)?;
        let mut sim = SimConfig::new(model, self.process_noise());
        sim.noise_w = self.measurement_noise();
        sim.controller = self.controller;
        sim.predictor = self.predictor;
        sim.scaling = self.scaling;
        sim.window = self.window;
        sim.correction_horizon = self.correction_horizon;
        sim.observer_enabled = self.observer;
        sim.dt = self.dt;
        sim.horizon = self.horizon;
        sim.saturation = self.saturation;
        sim.x0 = DVector::from_vec(self.x0.clone());
        sim.xhat0 = DVector::from_vec(self.xhat0.clone());
        sim.seed = self.seed;
        sim.replications = self.replications;
        sim.moment_replications = self.moment_replications;
        sim.moment_steps = self.moment_steps;
        sim.validate()?;
        Ok(sim)
    }
}
