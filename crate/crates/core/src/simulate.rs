//! Closed-loop simulation of `dx = (Ax + Bu)dt + dv`, `dY = Cx dt + dw`
//! with saturated input and optional observer.
//!
//! The noise is additive, so the diffusion coefficient is constant and the
//! second level of the driver drops out of the state update: a first-order
//! step `x + (Ax + Bu)Δt + Δv` converges to the rough solution.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::control::{
    default_horizon, glq_control_law, pathwise_cost, pathwise_schedule, ConditionalKernel,
    FeedforwardScaling, Predictor, PredictorMethod, DEFAULT_HORIZON_TOL, DEFAULT_WINDOW,
};
use crate::error::{invalid, Error, Result};
use crate::noise::{fmt_f64, NoiseModel, NoiseSampler, SamplePath, TimeGrid};
use crate::observer::{moments_from_models, solve_observer_steady_state, NoiseSecondMoments, ObserverDesign};
use crate::riccati::{solve_care, ControlDesign};
use crate::rough::subsample;

/// States beyond this norm count as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if !a.is_square()
            || b.nrows() != n
            || c.ncols() != n
            || q.shape() != (n, n)
            || r.shape() != (m, m)
        {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, C {:?}, Q {:?}, R {:?} do not conform",
                a.shape(),
                b.shape(),
                c.shape(),
                q.shape(),
                r.shape()
            )));
        }
        Ok(StateSpaceModel { a, b, c, q, r })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    ClassicalLq,
    Glq,
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::ClassicalLq => "lq",
            ControllerKind::Glq => "glq",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lq" => Ok(ControllerKind::ClassicalLq),
            "glq" => Ok(ControllerKind::Glq),
            _ => Err(Error::Config(format!("unknown controller `{s}`"))),
        }
    }
}

/// Deterministic signal added to every input channel before saturation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Perturbation {
    #[default]
    None,
    Constant { value: f64, until: f64 },
    Sinusoid { amplitude: f64, frequency: f64, until: f64 },
    Decaying { amplitude: f64, rate: f64 },
    /// Level `levels[i]` on `[i·segment, (i+1)·segment)`, zero afterwards.
    Piecewise { levels: Vec<f64>, segment: f64 },
}

impl Perturbation {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Constant { value, until } => {
                if t < *until {
                    *value
                } else {
                    0.0
                }
            }
            Perturbation::Sinusoid { amplitude, frequency, until } => {
                if t < *until {
                    amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
                } else {
                    0.0
                }
            }
            Perturbation::Decaying { amplitude, rate } => amplitude * (-rate * t).exp(),
            Perturbation::Piecewise { levels, segment } => {
                let i = (t / segment).floor();
                if i >= 0.0 && (i as usize) < levels.len() {
                    levels[i as usize]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn scaled(&self, eps: f64) -> Perturbation {
        match self.clone() {
            Perturbation::None => Perturbation::None,
            Perturbation::Constant { value, until } => Perturbation::Constant { value: eps * value, until },
            Perturbation::Sinusoid { amplitude, frequency, until } => {
                Perturbation::Sinusoid { amplitude: eps * amplitude, frequency, until }
            }
            Perturbation::Decaying { amplitude, rate } => Perturbation::Decaying { amplitude: eps * amplitude, rate },
            Perturbation::Piecewise { levels, segment } => Perturbation::Piecewise {
                levels: levels.iter().map(|v| eps * v).collect(),
                segment,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: StateSpaceModel,
    pub noise_v: NoiseModel,
    pub noise_w: NoiseModel,
    pub controller: ControllerKind,
    pub predictor: PredictorMethod,
    pub scaling: FeedforwardScaling,
    /// History window of the conditional predictor, in steps.
    pub window: usize,
    /// Truncation horizon of the correction; `None` picks one from the closed loop.
    pub correction_horizon: Option<f64>,
    pub observer_enabled: bool,
    pub dt: f64,
    pub horizon: f64,
    pub saturation: f64,
    pub x0: DVector<f64>,
    pub xhat0: DVector<f64>,
    pub seed: u64,
    pub replications: usize,
    /// Replications and path length used to estimate observer noise moments.
    pub moment_replications: usize,
    pub moment_steps: usize,
    pub perturbation: Perturbation,
}

impl SimConfig {
    /// Defaults: `Δt = 1e-3`, `T = 10`, saturation 1000, GLQ with the
    /// conditional predictor, full-state feedback, `x̂₀ = 0`.
    pub fn new(model: StateSpaceModel, noise: NoiseModel) -> Self {
        let n = model.n();
        SimConfig {
            model,
            noise_v: noise,
            noise_w: noise,
            controller: ControllerKind::Glq,
            predictor: PredictorMethod::GaussianConditioning,
            scaling: FeedforwardScaling::Consistent,
            window: DEFAULT_WINDOW,
            correction_horizon: None,
            observer_enabled: false,
            dt: 1e-3,
            horizon: 10.0,
            saturation: 1000.0,
            x0: DVector::zeros(n),
            xhat0: DVector::zeros(n),
            seed: 0,
            replications: 1,
            moment_replications: 200,
            moment_steps: 200,
            perturbation: Perturbation::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.horizon >= 10.0 * self.dt) || !self.horizon.is_finite() {
            return Err(invalid("horizon", format!("T = {} must be at least 10 steps", self.horizon)));
        }
        if !(self.saturation > 0.0) {
            return Err(invalid("saturation", format!("{} must be positive", self.saturation)));
        }
        let n = self.model.n();
        if self.x0.len() != n || self.xhat0.len() != n {
            return Err(Error::Dimension(format!("initial states must have {n} entries")));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "need at least one"));
        }
        self.noise_v.validate()?;
        self.noise_w.validate()
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid { dt: self.dt, steps: self.steps() }
    }
}

/// Everything computed once per configuration.
#[derive(Debug, Clone)]
pub struct Designs {
    pub control: ControlDesign,
    pub p_inv: DMatrix<f64>,
    /// `T_h / Δt`.
    pub horizon_steps: usize,
    pub kernel: Option<ConditionalKernel>,
    pub observer: Option<ObserverDesign>,
    pub moments: Option<NoiseSecondMoments>,
}

impl Designs {
    pub fn prepare(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let m = &cfg.model;
        let control = solve_care(&m.a, &m.b, &m.q, &m.r)?;
        let p_inv = control.p_inverse();
        let t_h = match cfg.correction_horizon {
            Some(t) => t,
            None => default_horizon(&control.a_cl, DEFAULT_HORIZON_TOL)?,
        };
        let horizon_steps = (t_h / cfg.dt).round().max(1.0) as usize;
        let kernel = if cfg.controller == ControllerKind::Glq && cfg.predictor != PredictorMethod::PathwiseKnown {
            let pred = Predictor::new(cfg.noise_v, cfg.window, horizon_steps as f64 * cfg.dt, cfg.predictor)?;
            Some(ConditionalKernel::new(&control, &pred, cfg.dt)?)
        } else {
            None
        };
        let (observer, moments) = if cfg.observer_enabled {
            let moments = moments_from_models(
                &cfg.noise_v,
                &cfg.noise_w,
                m.n(),
                m.p(),
                cfg.dt,
                cfg.moment_steps,
                cfg.moment_replications,
                cfg.seed ^ 0x6d6f_6d65_6e74_7321,
            )?;
            let obs = solve_observer_steady_state(&m.a, &m.c, &moments)?;
            (Some(obs), Some(moments))
        } else {
            (None, None)
        };
        log::debug!(
            "designs ready: CARE residual {:.3e}, correction horizon {} steps",
            control.care_residual,
            horizon_steps
        );
        Ok(Designs { control, p_inv, horizon_steps, kernel, observer, moments })
    }
}

/// Noise realizations for one replication. `v` extends `horizon_steps`
/// beyond the simulation so pathwise corrections see a full horizon.
#[derive(Debug, Clone)]
pub struct Drivers {
    pub v: SamplePath,
    pub w: Option<SamplePath>,
}

/// Draws the drivers of replication `replication` (streams `2r` and `2r + 1`).
pub fn generate_drivers(cfg: &SimConfig, designs: &Designs, replication: u64) -> Result<Drivers> {
    let grid = cfg.grid();
    let v = NoiseSampler::new(&cfg.noise_v, grid.extended(designs.horizon_steps))?.sample(
        cfg.model.n(),
        cfg.seed,
        2 * replication,
    )?;
    let w = if cfg.observer_enabled {
        Some(NoiseSampler::new(&cfg.noise_w, grid)?.sample(cfg.model.p(), cfg.seed, 2 * replication + 1)?)
    } else {
        None
    };
    Ok(Drivers { v, w })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub xhat: Option<Vec<DVector<f64>>>,
    /// Commanded input before saturation.
    pub u_raw: Vec<DVector<f64>>,
    /// Applied input.
    pub u_sat: Vec<DVector<f64>>,
    /// Configured law evaluated on the true state, without perturbation.
    pub u_nominal: Vec<DVector<f64>>,
    /// Costate-form correction `V(t)` used at each step (zero for LQ).
    pub correction: Vec<DVector<f64>>,
    /// Running cost `∫_0^t (xᵀQx + uᵀRu)`.
    pub cost: Vec<f64>,
    /// Time of the first step whose state left the finite range.
    pub diverged: Option<f64>,
    pub driver_fingerprint: u64,
    /// Intended simulation length.
    pub horizon: f64,
}

impl Trajectory {
    pub fn final_cost(&self) -> f64 {
        *self.cost.last().unwrap_or(&0.0)
    }

    /// Fraction of recorded steps with `t ≥ after` whose input was clipped.
    pub fn saturation_duty(&self, after: f64) -> f64 {
        let hits: Vec<bool> = self
            .times
            .iter()
            .zip(self.u_raw.iter().zip(&self.u_sat))
            .filter(|(t, _)| **t >= after)
            .map(|(_, (r, s))| r != s)
            .collect();
        if hits.is_empty() {
            0.0
        } else {
            hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64
        }
    }

    /// Rows `t,x1..xn,xhat1..xhatn,u_raw,u_sat,cost`, every `stride`-th step
    /// plus the last. Without an observer the estimate columns repeat `x`.
    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> Result<()> {
        let n = self.x[0].len();
        let m = self.u_raw[0].len();
        write!(out, "t")?;
        for i in 1..=n {
            write!(out, ",x{i}")?;
        }
        for i in 1..=n {
            write!(out, ",xhat{i}")?;
        }
        if m == 1 {
            write!(out, ",u_raw,u_sat")?;
        } else {
            for i in 1..=m {
                write!(out, ",u_raw{i}")?;
            }
            for i in 1..=m {
                write!(out, ",u_sat{i}")?;
            }
        }
        writeln!(out, ",cost")?;
        let last = self.times.len() - 1;
        for k in (0..=last).filter(|k| k % stride.max(1) == 0 || *k == last) {
            write!(out, "{}", fmt_f64(self.times[k]))?;
            let est = self.xhat.as_ref().map_or(&self.x[k], |xh| &xh[k]);
            for v in self.x[k].iter().chain(est.iter()) {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            for v in self.u_raw[k].iter().chain(self.u_sat[k].iter()) {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            writeln!(out, ",{}", fmt_f64(self.cost[k]))?;
        }
        Ok(())
    }

    /// Rows `t,V1..Vn` of the costate-form correction.
    pub fn write_correction_csv<W: Write>(&self, mut out: W, stride: usize) -> Result<()> {
        let n = self.correction[0].len();
        write!(out, "t")?;
        for i in 1..=n {
            write!(out, ",V{i}")?;
        }
        writeln!(out)?;
        let last = self.times.len() - 1;
        for k in (0..=last).filter(|k| k % stride.max(1) == 0 || *k == last) {
            write!(out, "{}", fmt_f64(self.times[k]))?;
            for v in self.correction[k].iter() {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn is_bad(x: &DVector<f64>) -> bool {
    !x.iter().all(|v| v.is_finite()) || x.norm() > DIVERGENCE_THRESHOLD
}

/// Runs one closed-loop trajectory on the configured grid.
pub fn integrate(cfg: &SimConfig, designs: &Designs, drivers: &Drivers) -> Result<Trajectory> {
    cfg.validate()?;
    let n = cfg.model.n();
    let steps = cfg.steps();
    let dt = cfg.dt;
    let v = &drivers.v;
    if v.dim() != n || v.steps() < steps {
        return Err(Error::Dimension(format!(
            "process noise must be {n}-dimensional with >= {steps} steps, got {} and {}",
            v.dim(),
            v.steps()
        )));
    }
    if ((v.dt() - dt) / dt).abs() > 1e-9 {
        return Err(Error::Mismatch(format!("driver step {} differs from dt {dt}", v.dt())));
    }
    let observer = if cfg.observer_enabled {
        let obs = designs
            .observer
            .as_ref()
            .ok_or_else(|| Error::Config("observer enabled but no observer design".into()))?;
        let w = drivers
            .w
            .as_ref()
            .ok_or_else(|| Error::Config("observer enabled but no measurement noise".into()))?;
        if w.steps() < steps || w.dim() != cfg.model.p() {
            return Err(Error::Dimension("measurement noise does not cover the horizon".into()));
        }
        Some((obs, w))
    } else {
        None
    };

    let schedule = match (cfg.controller, cfg.predictor) {
        (ControllerKind::Glq, PredictorMethod::PathwiseKnown) => Some(pathwise_schedule(
            &designs.control,
            v,
            steps,
            designs.horizon_steps,
            cfg.noise_v.regularity(),
        )?),
        _ => None,
    };
    let kernel = match (cfg.controller, &schedule) {
        (ControllerKind::Glq, None) => Some(
            designs
                .kernel
                .as_ref()
                .ok_or_else(|| Error::Config("conditional predictor needs a kernel".into()))?,
        ),
        _ => None,
    };

    let (a, b, c, q, r) = (&cfg.model.a, &cfg.model.b, &cfg.model.c, &cfg.model.q, &cfg.model.r);
    let sat = cfg.saturation;
    let zero = DVector::zeros(n);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        xhat: observer.map(|_| Vec::with_capacity(steps + 1)),
        u_raw: Vec::with_capacity(steps + 1),
        u_sat: Vec::with_capacity(steps + 1),
        u_nominal: Vec::with_capacity(steps + 1),
        correction: Vec::with_capacity(steps + 1),
        cost: Vec::with_capacity(steps + 1),
        diverged: None,
        driver_fingerprint: v.fingerprint(),
        horizon: cfg.horizon,
    };
    let mut x = cfg.x0.clone();
    let mut xhat = cfg.xhat0.clone();
    let mut prev_stage = 0.0;
    let mut cost = 0.0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let value = match (&schedule, kernel) {
            (Some(s), _) => s[k].clone(),
            (None, Some(kern)) => kern.value(&v.values, k),
            _ => zero.clone(),
        };
        let offset = if cfg.controller == ControllerKind::Glq {
            cfg.scaling.offset(&designs.p_inv, &value)
        } else {
            zero.clone()
        };
        let feedback_state = if observer.is_some() { &xhat } else { &x };
        let delta = cfg.perturbation.value(t);
        let u_raw = glq_control_law(&designs.control, feedback_state, &offset).add_scalar(delta);
        let u_sat = u_raw.map(|u| u.clamp(-sat, sat));
        let u_nominal = glq_control_law(&designs.control, &x, &offset);

        let stage = x.dot(&(q * &x)) + u_sat.dot(&(r * &u_sat));
        if k > 0 {
            cost += 0.5 * dt * (prev_stage + stage);
        }
        prev_stage = stage;

        traj.times.push(t);
        traj.x.push(x.clone());
        if let Some(xh) = traj.xhat.as_mut() {
            xh.push(xhat.clone());
        }
        traj.u_raw.push(u_raw);
        traj.u_nominal.push(u_nominal);
        traj.correction.push(value);
        traj.cost.push(cost);
        if k == steps {
            traj.u_sat.push(u_sat);
            break;
        }

        let dv = &v.values[k + 1] - &v.values[k];
        let x_next = &x + (a * &x + b * &u_sat) * dt + dv;
        if let Some((obs, w)) = observer {
            let dw = &w.values[k + 1] - &w.values[k];
            let dy = c * &x * dt + dw;
            xhat = &xhat + (a * &xhat + b * &u_sat) * dt + &obs.l * (dy - c * &xhat * dt);
        }
        traj.u_sat.push(u_sat);
        x = x_next;
        if is_bad(&x) || (observer.is_some() && is_bad(&xhat)) {
            traj.diverged = Some((k + 1) as f64 * dt);
            break;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageCost {
    /// `(1/T)∫(xᵀQx + uᵀRu)`, infinite for a diverged run.
    pub value: f64,
    pub diverged_at: Option<f64>,
}

pub fn average_cost(traj: &Trajectory, q: &DMatrix<f64>, r: &DMatrix<f64>) -> AverageCost {
    if let Some(t) = traj.diverged {
        return AverageCost { value: f64::INFINITY, diverged_at: Some(t) };
    }
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    if t_end <= 0.0 {
        return AverageCost { value: 0.0, diverged_at: None };
    }
    AverageCost {
        value: pathwise_cost(&traj.times, &traj.x, &traj.u_sat, q, r) / t_end,
        diverged_at: None,
    }
}

/// Smooth driver perturbation `η·sin(πt/T)` in every coordinate, on `steps` steps.
pub fn smooth_perturbation(dt: f64, steps: usize, d: usize, eta: f64) -> SamplePath {
    let t_end = steps as f64 * dt;
    let values = (0..=steps)
        .map(|k| DVector::from_element(d, eta * (std::f64::consts::PI * k as f64 * dt / t_end).sin()))
        .collect();
    SamplePath { grid: (0..=steps).map(|k| k as f64 * dt).collect(), values, seed: 0 }
}

/// Triangle wave of amplitude `η` with `teeth` periods, starting at zero.
pub fn sawtooth_perturbation(dt: f64, steps: usize, d: usize, eta: f64, teeth: usize) -> SamplePath {
    let period = steps as f64 / teeth.max(1) as f64;
    let values = (0..=steps)
        .map(|k| {
            let phase = (k as f64 / period).fract();
            let tri = if phase < 0.25 {
                4.0 * phase
            } else if phase < 0.75 {
                2.0 - 4.0 * phase
            } else {
                4.0 * phase - 4.0
            };
            DVector::from_element(d, eta * tri)
        })
        .collect();
    SamplePath { grid: (0..=steps).map(|k| k as f64 * dt).collect(), values, seed: 0 }
}

fn add_paths(base: &SamplePath, pert: &SamplePath) -> SamplePath {
    let last = pert.values.last().cloned().unwrap_or_else(|| DVector::zeros(base.dim()));
    let values = base
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| v + pert.values.get(k).unwrap_or(&last))
        .collect();
    SamplePath { grid: base.grid.clone(), values, seed: base.seed }
}

fn sup_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    if a.diverged.is_some() || b.diverged.is_some() {
        return f64::INFINITY;
    }
    a.x.iter().zip(&b.x).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// Sup-norm state deviation caused by adding each perturbation to the base
/// process-noise driver. Perturbations shorter than the driver are held at
/// their last value.
pub fn continuity_probe(
    cfg: &SimConfig,
    designs: &Designs,
    base: &Drivers,
    perturbations: &[(f64, SamplePath)],
) -> Result<Vec<(f64, f64)>> {
    let reference = integrate(cfg, designs, base)?;
    perturbations
        .iter()
        .map(|(eta, pert)| {
            if pert.dim() != base.v.dim() {
                return Err(Error::Dimension("perturbation dimension differs from driver".into()));
            }
            let drivers = Drivers { v: add_paths(&base.v, pert), w: base.w.clone() };
            let traj = integrate(cfg, designs, &drivers)?;
            Ok((*eta, sup_deviation(&reference, &traj)))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RefinementReport {
    pub dts: Vec<f64>,
    /// `sup_t ‖x^{h_j}(t) − x^{h_{j+1}}(t)‖` on the coarsest grid.
    pub differences: Vec<f64>,
    pub order: f64,
    pub monotone: bool,
}

/// Runs the configuration at `Δt, Δt/2, …, Δt/2^{levels−1}` on one noise
/// realization sampled at the finest level and subsampled for the coarser
/// ones, and fits the convergence order of successive differences.
pub fn refinement_convergence(cfg: &SimConfig, levels: usize, replication: u64) -> Result<RefinementReport> {
    if levels < 3 {
        return Err(invalid("levels", "need at least three step sizes"));
    }
    if cfg.observer_enabled {
        return Err(invalid("observer_enabled", "refinement study runs full-state feedback"));
    }
    let finest = 1usize << (levels - 1);
    let coarse_designs = Designs::prepare(cfg)?;
    let fine_steps = (cfg.steps() + coarse_designs.horizon_steps + 1) * finest;
    let fine_grid = TimeGrid::new(cfg.dt / finest as f64, fine_steps)?;
    let fine = NoiseSampler::new(&cfg.noise_v, fine_grid)?.sample(cfg.model.n(), cfg.seed, 2 * replication)?;

    let mut trajs = Vec::with_capacity(levels);
    let mut dts = Vec::with_capacity(levels);
    for j in 0..levels {
        let factor = finest >> j;
        let mut c = cfg.clone();
        c.dt = cfg.dt / (1usize << j) as f64;
        let designs = if j == 0 { coarse_designs.clone() } else { Designs::prepare(&c)? };
        let drivers = Drivers { v: subsample(&fine, factor)?, w: None };
        let traj = integrate(&c, &designs, &drivers)?;
        if traj.diverged.is_some() {
            return Err(Error::Mismatch(format!("refinement level {j} diverged")));
        }
        trajs.push(traj);
        dts.push(c.dt);
    }
    let coarse_len = trajs[0].x.len();
    let differences: Vec<f64> = (0..levels - 1)
        .map(|j| {
            let (s1, s2) = (1usize << j, 1usize << (j + 1));
            (0..coarse_len)
                .map(|k| (&trajs[j].x[k * s1] - &trajs[j + 1].x[k * s2]).norm())
                .fold(0.0, f64::max)
        })
        .collect();
    let monotone = differences.windows(2).all(|w| w[1] <= w[0]);
    if !monotone {
        log::warn!("refinement differences are not monotone: {differences:?}");
    }
    let order = differences
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .sum::<f64>()
        / (differences.len() - 1) as f64;
    Ok(RefinementReport { dts, differences, order, monotone })
}
