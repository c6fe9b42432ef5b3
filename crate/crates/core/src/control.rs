//! The gLQ control law: state feedback plus a feed-forward term built from
//! the closed-loop-weighted future noise `∫_t^∞ Φ(s,t)ᵀ P dv(s)`.
//!
//! Three predictors of the future noise are available. `ZeroMean` assumes
//! independent centered increments (the classical LQ law). `GaussianConditioning`
//! conditions fBm increments on a finite window of observed history.
//! `PathwiseKnown` integrates against the realized future driver, which is
//! the pathwise-optimal law when the whole realization is known.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_with_jitter, expm};
use crate::noise::{fgn_autocovariance, NoiseModel, SamplePath};
use crate::riccati::ControlDesign;
use crate::rough::{controlled_integral_admissible, RoughPath};
use crate::simulate::Trajectory;

pub const DEFAULT_WINDOW: usize = 256;
/// Default truncation target for `‖exp(A_cl T_h)‖`.
pub const DEFAULT_HORIZON_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorMethod {
    ZeroMean,
    GaussianConditioning,
    PathwiseKnown,
}

impl PredictorMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorMethod::ZeroMean => "zero-mean",
            PredictorMethod::GaussianConditioning => "gaussian-conditioning",
            PredictorMethod::PathwiseKnown => "pathwise-known",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero-mean" => Ok(PredictorMethod::ZeroMean),
            "gaussian-conditioning" => Ok(PredictorMethod::GaussianConditioning),
            "pathwise-known" => Ok(PredictorMethod::PathwiseKnown),
            _ => Err(Error::Config(format!("unknown predictor method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictor {
    pub model: NoiseModel,
    /// History window in steps.
    pub window: usize,
    /// Truncation `T_h` of the infinite upper limit, in seconds.
    pub horizon: f64,
    pub method: PredictorMethod,
}

impl Predictor {
    pub fn new(model: NoiseModel, window: usize, horizon: f64, method: PredictorMethod) -> Result<Self> {
        model.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", format!("{horizon} must be positive")));
        }
        if window == 0 {
            return Err(invalid("window", "history window must be at least one step"));
        }
        match (method, model) {
            (PredictorMethod::ZeroMean, NoiseModel::FBm { hurst, .. }) if hurst != 0.5 => {
                return Err(Error::Predictor(format!(
                    "zero-mean prediction ignores the memory of fBm with H = {hurst}"
                )));
            }
            (PredictorMethod::PathwiseKnown, _) => {}
            (_, NoiseModel::StableLevy { alpha, beta, delta, .. }) => {
                if alpha <= 1.0 {
                    return Err(Error::Predictor(format!(
                        "stable increments with alpha = {alpha} have no mean"
                    )));
                }
                if method == PredictorMethod::ZeroMean && (beta != 0.0 || delta != 0.0) {
                    return Err(Error::Predictor(
                        "zero-mean prediction needs a symmetric centered stable law".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(Predictor { model, window, horizon, method })
    }

    pub fn horizon_steps(&self, dt: f64) -> usize {
        (self.horizon / dt).round().max(1.0) as usize
    }

    /// Hurst index when history carries information about the future.
    fn memory_hurst(&self) -> Option<f64> {
        match (self.method, self.model) {
            (PredictorMethod::GaussianConditioning, NoiseModel::FBm { hurst, .. })
                if hurst != 0.5 =>
            {
                Some(hurst)
            }
            _ => None,
        }
    }

    /// Mean of each coordinate's increment over a step, for models with
    /// independent increments.
    fn unconditional_step_mean(&self, dt: f64) -> f64 {
        match self.model {
            NoiseModel::StableLevy { alpha, beta, gamma, delta } if alpha > 1.0 => {
                dt * (delta - beta * gamma * (std::f64::consts::PI * alpha / 2.0).tan())
            }
            _ => 0.0,
        }
    }
}

/// Weights `E[f, ℓ]` of the conditional mean of future increment `f` given
/// history increments ordered newest first (`ℓ = 0` ends at the present).
pub fn fgn_conditional_weights(hurst: f64, history: usize, future: usize) -> Result<DMatrix<f64>> {
    let cov = DMatrix::from_fn(history, history, |i, j| fgn_autocovariance(i.abs_diff(j), hurst));
    let cross_t = DMatrix::from_fn(history, future, |l, k| fgn_autocovariance(k + l + 1, hurst));
    let chol = cholesky_with_jitter(&cov)?;
    Ok(chol.solve(&cross_t).transpose())
}

fn check_spacing(path: &SamplePath, now: usize) -> Result<()> {
    if now > path.steps() {
        return Err(invalid("now", format!("index {now} beyond path of {} steps", path.steps())));
    }
    Ok(())
}

/// Conditional means `E[Δv(s_k) | F_t]` for `k < future`, where `t` is the
/// grid time with index `now`. Conditional methods read only
/// `path.values[..=now]`; `PathwiseKnown` returns the realized increments.
pub fn predict_increments(
    pred: &Predictor,
    path: &SamplePath,
    now: usize,
    future: usize,
) -> Result<Vec<DVector<f64>>> {
    check_spacing(path, now)?;
    let d = path.dim();
    if pred.method == PredictorMethod::PathwiseKnown {
        if now + future > path.steps() {
            return Err(Error::Predictor(format!(
                "pathwise prediction needs {future} future steps, path has {}",
                path.steps() - now
            )));
        }
        return Ok((now..now + future)
            .map(|k| &path.values[k + 1] - &path.values[k])
            .collect());
    }
    if let Some(hurst) = pred.memory_hurst() {
        let h = now.min(pred.window);
        if h == 0 {
            return Ok(vec![DVector::zeros(d); future]);
        }
        let w = fgn_conditional_weights(hurst, h, future)?;
        let hist: Vec<DVector<f64>> = (1..=h)
            .map(|l| &path.values[now - l + 1] - &path.values[now - l])
            .collect();
        return Ok((0..future)
            .map(|k| {
                hist.iter()
                    .enumerate()
                    .fold(DVector::zeros(d), |acc, (l, x)| acc + x * w[(k, l)])
            })
            .collect());
    }
    let m = pred.unconditional_step_mean(path.dt());
    Ok(vec![DVector::from_element(d, m); future])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTerm {
    pub t: f64,
    /// `Σ_k Φ(s_k, t)ᵀ P E[Δv(s_k)]`, the costate-form correction.
    pub value: DVector<f64>,
    /// `‖Φ(t + T_h, t)‖·‖P‖·‖predicted mass‖`, a size estimate of the truncated tail.
    pub tail_bound: f64,
    /// Set when the tail estimate exceeds 10% of `‖value‖`.
    pub horizon_warning: bool,
}

impl CorrectionTerm {
    fn new(t: f64, value: DVector<f64>, tail_bound: f64) -> Self {
        let horizon_warning = tail_bound > 0.1 * value.norm() && tail_bound > 0.0;
        CorrectionTerm { t, value, tail_bound, horizon_warning }
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Reference evaluation of the predicted correction at grid index `now`.
pub fn correction_term(
    design: &ControlDesign,
    pred: &Predictor,
    path: &SamplePath,
    now: usize,
) -> Result<CorrectionTerm> {
    let dt = path.dt();
    let m = pred.horizon_steps(dt);
    let increments = predict_increments(pred, path, now, m)?;
    let step = expm(&(design.a_cl.transpose() * dt));
    let mut g = design.p.clone();
    let n = design.state_dim();
    let mut value = DVector::zeros(n);
    let mut mass = DVector::zeros(n);
    for inc in &increments {
        value += &g * inc;
        mass += inc;
        g = &step * g;
    }
    let tail = spectral_norm(&expm(&(&design.a_cl * (m as f64 * dt))))
        * spectral_norm(&design.p)
        * mass.norm();
    let term = CorrectionTerm::new(path.grid[now], value, tail);
    if term.horizon_warning {
        log::warn!(
            "correction tail estimate {:.3e} exceeds 10% of |V| = {:.3e}; lengthen the horizon",
            term.tail_bound,
            term.value.norm()
        );
    }
    Ok(term)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationScheme {
    /// Left-point sum `Σ F(s_k) ΔX_k`; kept as a comparator only.
    Riemann,
    /// Adds `F′(s_k)·∫(r − s_k) dX_r` from the time-extended second level.
    Compensated,
}

/// Rough integral `∫_t^{t+T_h} Φ(s,t)ᵀ P dv(s)` against the realized driver.
///
/// `driver_regularity` is the Hölder exponent of the driver; the integrand is
/// smooth in `s` (regularity 1).
pub fn pathwise_correction(
    design: &ControlDesign,
    driver: &RoughPath,
    now: usize,
    horizon_steps: usize,
    scheme: IntegrationScheme,
    driver_regularity: f64,
) -> Result<CorrectionTerm> {
    controlled_integral_admissible(1.0, driver_regularity)?;
    if driver.dim() != design.state_dim() {
        return Err(Error::Dimension(format!(
            "driver has dimension {}, state has {}",
            driver.dim(),
            design.state_dim()
        )));
    }
    if now + horizon_steps > driver.steps() {
        return Err(Error::Predictor(format!(
            "pathwise correction needs {horizon_steps} future steps, driver has {}",
            driver.steps().saturating_sub(now)
        )));
    }
    let dt = driver.dt();
    let step = expm(&(design.a_cl.transpose() * dt));
    let at = design.a_cl.transpose();
    let mut g = design.p.clone();
    let mut value = DVector::zeros(design.state_dim());
    for k in now..now + horizon_steps {
        value += &g * &driver.level1[k];
        if scheme == IntegrationScheme::Compensated {
            value += &at * &g * driver.time_cross(k);
        }
        g = &step * g;
    }
    let tail = spectral_norm(&g) * driver.level1[now..now + horizon_steps]
        .iter()
        .fold(DVector::zeros(design.state_dim()), |a, x| a + x)
        .norm();
    Ok(CorrectionTerm::new(driver.grid[now], value, tail))
}

/// Compensated pathwise corrections at every index `0..=steps` by the
/// backward recursion `R_j = C ΔX_j + E R_{j+1}`, `V_j = R_j − E^M R_{j+M}`,
/// with `E = exp(A_clᵀ Δt)` and `C = (I + ½Δt A_clᵀ) P`.
pub fn pathwise_schedule(
    design: &ControlDesign,
    driver: &SamplePath,
    steps: usize,
    horizon_steps: usize,
    driver_regularity: f64,
) -> Result<Vec<DVector<f64>>> {
    controlled_integral_admissible(1.0, driver_regularity)?;
    let n = design.state_dim();
    if driver.dim() != n {
        return Err(Error::Dimension(format!(
            "driver has dimension {}, state has {n}",
            driver.dim()
        )));
    }
    let total = steps + horizon_steps;
    if driver.steps() < total {
        return Err(Error::Predictor(format!(
            "pathwise schedule needs a driver of {total} steps, got {}",
            driver.steps()
        )));
    }
    let dt = driver.dt();
    let at = design.a_cl.transpose();
    let e = expm(&(&at * dt));
    let c = (DMatrix::identity(n, n) + &at * (0.5 * dt)) * &design.p;
    let e_m = expm(&(&at * (horizon_steps as f64 * dt)));
    let mut r = vec![DVector::zeros(n); total + 1];
    for j in (0..total).rev() {
        let dx = &driver.values[j + 1] - &driver.values[j];
        r[j] = &c * dx + &e * &r[j + 1];
    }
    Ok((0..=steps).map(|j| &r[j] - &e_m * &r[j + horizon_steps]).collect())
}

/// Precomputed conditional-mean correction for a fixed design, predictor and step.
///
/// For fBm with memory, `V = Σ_ℓ K^{(h)}_ℓ ΔX_{now−ℓ}` where `h` is the available
/// history length and `K^{(h)} = D Σ_hh^{−1}` with
/// `D_ℓ = Σ_{k<M} γ(k + ℓ) exp(A_clᵀ kΔt) P`. One Cholesky factor of the full
/// window serves every `h` through its leading blocks.
#[derive(Debug, Clone)]
pub struct ConditionalKernel {
    n: usize,
    /// `kernels[h - 1]` is `n² × h`, column `ℓ − 1` holding `K^{(h)}_ℓ` column-major.
    kernels: Vec<DMatrix<f64>>,
    /// Constant correction for independent-increment models.
    bias: DVector<f64>,
}

impl ConditionalKernel {
    pub fn new(design: &ControlDesign, pred: &Predictor, dt: f64) -> Result<Self> {
        if pred.method == PredictorMethod::PathwiseKnown {
            return Err(Error::Predictor(
                "pathwise prediction has no conditional kernel".into(),
            ));
        }
        let n = design.state_dim();
        let m = pred.horizon_steps(dt);
        let step = expm(&(design.a_cl.transpose() * dt));
        let Some(hurst) = pred.memory_hurst() else {
            let mean = pred.unconditional_step_mean(dt);
            let mut bias = DVector::zeros(n);
            if mean != 0.0 {
                let ones = DVector::from_element(n, mean);
                let mut g = design.p.clone();
                for _ in 0..m {
                    bias += &g * &ones;
                    g = &step * g;
                }
            }
            return Ok(ConditionalKernel { n, kernels: Vec::new(), bias });
        };

        let w = pred.window;
        let n2 = n * n;
        let gamma: Vec<f64> = (0..=m + w).map(|k| fgn_autocovariance(k, hurst)).collect();
        // d[ℓ - 1] accumulates D_ℓ column-major.
        let mut d = vec![0.0; w * n2];
        let mut g = design.p.clone();
        for k in 0..m {
            let gs = g.as_slice();
            for l in 1..=w {
                let c = gamma[k + l];
                let row = &mut d[(l - 1) * n2..l * n2];
                for (r, v) in row.iter_mut().zip(gs) {
                    *r += c * v;
                }
            }
            g = &step * g;
        }
        let dmat = DMatrix::from_column_slice(n2, w, &d);
        let cov = DMatrix::from_fn(w, w, |i, j| gamma[i.abs_diff(j)]);
        let l_full = cholesky_with_jitter(&cov)?.l();
        let mut kernels = Vec::with_capacity(w);
        for h in 1..=w {
            let lh = l_full.view((0, 0), (h, h)).clone_owned();
            let rhs = dmat.columns(0, h).transpose();
            let y = lh
                .solve_lower_triangular(&rhs)
                .ok_or_else(|| Error::Singular("history covariance factor".into()))?;
            let x = lh
                .tr_solve_lower_triangular(&y)
                .ok_or_else(|| Error::Singular("history covariance factor".into()))?;
            kernels.push(x.transpose());
        }
        Ok(ConditionalKernel { n, kernels, bias: DVector::zeros(n) })
    }

    /// Correction at grid index `now` from the driver values observed so far.
    pub fn value(&self, observed: &[DVector<f64>], now: usize) -> DVector<f64> {
        let mut v = self.bias.clone();
        let h = now.min(self.kernels.len());
        if h == 0 {
            return v;
        }
        let k = &self.kernels[h - 1];
        let n = self.n;
        for l in 1..=h {
            let (hi, lo) = (&observed[now - l + 1], &observed[now - l]);
            let col = k.column(l - 1);
            for j in 0..n {
                let x = hi[j] - lo[j];
                if x == 0.0 {
                    continue;
                }
                for i in 0..n {
                    v[i] += col[i + n * j] * x;
                }
            }
        }
        v
    }
}

/// How the costate-form correction enters the feedback law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedforwardScaling {
    /// Offset `P⁻¹ V`, so that `u = −Kx − R⁻¹Bᵀ V`.
    #[default]
    Consistent,
    /// Offset `V` itself, `u = −K(x + V)`.
    Literal,
}

impl FeedforwardScaling {
    pub fn name(&self) -> &'static str {
        match self {
            FeedforwardScaling::Consistent => "consistent",
            FeedforwardScaling::Literal => "literal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(FeedforwardScaling::Consistent),
            "literal" => Ok(FeedforwardScaling::Literal),
            _ => Err(Error::Config(format!("unknown feed-forward scaling `{s}`"))),
        }
    }

    /// State-space offset to add to `x` in the feedback law.
    pub fn offset(&self, p_inv: &DMatrix<f64>, value: &DVector<f64>) -> DVector<f64> {
        match self {
            FeedforwardScaling::Consistent => p_inv * value,
            FeedforwardScaling::Literal => value.clone(),
        }
    }
}

/// `u = −K (x + offset)`; with a zero offset this is the LQR law.
pub fn glq_control_law(design: &ControlDesign, x: &DVector<f64>, offset: &DVector<f64>) -> DVector<f64> {
    -(&design.k * (x + offset))
}

/// Shortest `T_h` (to bisection accuracy) with `‖exp(A_cl T_h)‖₂ < tol`.
pub fn default_horizon(a_cl: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let norm_at = |t: f64| spectral_norm(&expm(&(a_cl * t)));
    let mut hi = 1.0;
    let mut tries = 0;
    while norm_at(hi) >= tol {
        hi *= 2.0;
        tries += 1;
        if tries > 40 {
            return Err(Error::NoConvergence {
                what: "horizon search (closed loop not decaying)",
                iterations: tries,
                trace: vec![],
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) < tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Trapezoidal `∫ (xᵀQx + uᵀRu) dt` over a sampled trajectory.
pub fn pathwise_cost(
    times: &[f64],
    x: &[DVector<f64>],
    u: &[DVector<f64>],
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> f64 {
    let stage = |k: usize| x[k].dot(&(q * &x[k])) + u[k].dot(&(r * &u[k]));
    (1..times.len().min(x.len()).min(u.len()))
        .map(|k| 0.5 * (times[k] - times[k - 1]) * (stage(k - 1) + stage(k)))
        .sum()
}

/// `(J(u) − J(u*), ∫ ‖u − u*‖²_R dt)` where `u*` is the optimal law evaluated
/// along the trajectory of `u`.
pub fn completion_of_squares_gap(
    traj_u: &Trajectory,
    traj_opt: &Trajectory,
    r: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    if traj_u.driver_fingerprint != traj_opt.driver_fingerprint {
        return Err(Error::Mismatch("trajectories were driven by different noise realizations".into()));
    }
    if traj_u.x.first() != traj_opt.x.first() {
        return Err(Error::Mismatch("trajectories start from different initial states".into()));
    }
    if traj_u.times != traj_opt.times {
        return Err(Error::Mismatch("trajectories use different time grids".into()));
    }
    if traj_u.diverged.is_some() || traj_opt.diverged.is_some() {
        return Err(Error::Mismatch("diverged trajectories have no finite cost".into()));
    }
    let lhs = traj_u.final_cost() - traj_opt.final_cost();
    let diff: Vec<DVector<f64>> = traj_u
        .u_sat
        .iter()
        .zip(&traj_u.u_nominal)
        .map(|(a, b)| a - b)
        .collect();
    let zero_state = vec![DVector::zeros(0); diff.len()];
    let rhs = pathwise_cost(&traj_u.times, &zero_state, &diff, &DMatrix::zeros(0, 0), r);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::TimeGrid;
    use crate::riccati::solve_care;
    use approx::assert_relative_eq;

    fn scalar_design(p: f64) -> ControlDesign {
        ControlDesign {
            p: DMatrix::from_element(1, 1, p),
            k: DMatrix::from_element(1, 1, p),
            a_cl: DMatrix::from_element(1, 1, -p),
            care_residual: 0.0,
            iterations: 0,
        }
    }

    fn path_1d(dt: f64, incs: &[f64]) -> SamplePath {
        let g = TimeGrid::new(dt, incs.len()).unwrap();
        let v: Vec<DVector<f64>> = incs.iter().map(|x| DVector::from_element(1, *x)).collect();
        SamplePath::from_increments(&g, &v, 0)
    }

    #[test]
    fn brownian_prediction_is_zero() {
        let pred = Predictor::new(NoiseModel::brownian(1.0).unwrap(), 16, 1.0, PredictorMethod::GaussianConditioning)
            .unwrap();
        let p = path_1d(0.1, &[0.3, -0.2, 0.9]);
        assert!(predict_increments(&pred, &p, 3, 5).unwrap().iter().all(|v| v[0] == 0.0));
        let half = Predictor::new(NoiseModel::fbm(0.5, 1.0).unwrap(), 16, 1.0, PredictorMethod::GaussianConditioning)
            .unwrap();
        assert!(predict_increments(&half, &p, 3, 5).unwrap().iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn single_increment_conditioning() {
        let h: f64 = 0.35;
        let delta = 0.8;
        let rho = (2f64.powf(2.0 * h) - 2.0) / 2.0;
        let pred = Predictor::new(NoiseModel::fbm(h, 1.0).unwrap(), 256, 0.1, PredictorMethod::GaussianConditioning)
            .unwrap();
        let p = path_1d(0.1, &[delta]);
        let mu = predict_increments(&pred, &p, 1, 1).unwrap();
        assert_relative_eq!(mu[0][0], rho * delta, epsilon = 1e-14);
        assert!(rho < 0.0);

        // One-step horizon: V = Φ(t,t)ᵀ P ρδ = P ρδ.
        let design = scalar_design(1.7);
        let v = correction_term(&design, &pred, &p, 1).unwrap();
        assert_relative_eq!(v.value[0], 1.7 * rho * delta, epsilon = 1e-14);
    }

    #[test]
    fn zero_mean_rejected_for_long_memory() {
        let fbm = NoiseModel::fbm(0.35, 1.0).unwrap();
        assert!(matches!(
            Predictor::new(fbm, 16, 1.0, PredictorMethod::ZeroMean),
            Err(Error::Predictor(_))
        ));
        let skewed = NoiseModel::stable(1.5, 0.5, 1.0, 0.0).unwrap();
        assert!(Predictor::new(skewed, 16, 1.0, PredictorMethod::ZeroMean).is_err());
        let cauchy = NoiseModel::stable(1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(Predictor::new(cauchy, 16, 1.0, PredictorMethod::GaussianConditioning).is_err());
        let sym = NoiseModel::stable(1.5, 0.0, 1.0, 0.0).unwrap();
        assert!(Predictor::new(sym, 16, 1.0, PredictorMethod::ZeroMean).is_ok());
    }

    #[test]
    fn control_law_examples() {
        let d = scalar_design(1.0);
        let u = glq_control_law(&d, &DVector::from_element(1, 2.0), &DVector::from_element(1, 0.5));
        assert_eq!(u[0], -2.5);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 3.0, -0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let design = solve_care(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.2]);
        assert_eq!(glq_control_law(&design, &x, &DVector::zeros(2)), -(&design.k * &x));
        let v0 = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(glq_control_law(&design, &DVector::zeros(2), &v0), -(&design.k * &v0));
    }

    #[test]
    fn cost_examples() {
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let zero = vec![DVector::zeros(2); 21];
        let u0 = vec![DVector::zeros(1); 21];
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        assert_eq!(pathwise_cost(&times, &zero, &u0, &q, &r), 0.0);
        let e1 = vec![DVector::from_vec(vec![1.0, 0.0]); 21];
        assert_relative_eq!(pathwise_cost(&times, &e1, &u0, &q, &r), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn pathwise_riemann_and_compensated_differ_by_time_cross() {
        let design = scalar_design(2.0);
        let p = path_1d(0.01, &[0.1, -0.2, 0.05, 0.3]);
        let rp = crate::rough::lift_piecewise_linear(&p).unwrap();
        let a = pathwise_correction(&design, &rp, 0, 4, IntegrationScheme::Riemann, 0.5).unwrap();
        let b = pathwise_correction(&design, &rp, 0, 4, IntegrationScheme::Compensated, 0.5).unwrap();
        assert!((a.value[0] - b.value[0]).abs() > 0.0);
        assert!(matches!(
            pathwise_correction(&design, &rp, 0, 4, IntegrationScheme::Compensated, 0.3),
            Err(Error::Regularity { .. })
        ));
    }

    #[test]
    fn schedule_matches_single_time_evaluation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let design = solve_care(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
        let grid = TimeGrid::new(0.01, 300).unwrap();
        let path = crate::noise::sample(&NoiseModel::fbm(0.4, 1.0).unwrap(), &grid, 2, 3, 0).unwrap();
        let rp = crate::rough::lift_piecewise_linear(&path).unwrap();
        let sched = pathwise_schedule(&design, &path, 100, 200, 0.4).unwrap();
        for now in [0, 37, 100] {
            let v = pathwise_correction(&design, &rp, now, 200, IntegrationScheme::Compensated, 0.4).unwrap();
            assert!((&sched[now] - &v.value).norm() < 1e-10 * (1.0 + v.value.norm()));
        }
    }

    #[test]
    fn kernel_matches_reference_conditioning() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let design = solve_care(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
        let grid = TimeGrid::new(0.01, 120).unwrap();
        let path = crate::noise::sample(&NoiseModel::fbm(0.35, 1.0).unwrap(), &grid, 2, 8, 0).unwrap();
        let pred = Predictor::new(NoiseModel::fbm(0.35, 1.0).unwrap(), 32, 2.0, PredictorMethod::GaussianConditioning)
            .unwrap();
        let kernel = ConditionalKernel::new(&design, &pred, 0.01).unwrap();
        for now in [0, 1, 5, 31, 32, 90] {
            let slow = correction_term(&design, &pred, &path, now).unwrap().value;
            let fast = kernel.value(&path.values, now);
            assert!((&slow - &fast).norm() < 1e-10 * (1.0 + slow.norm()), "now={now}");
        }
    }

    #[test]
    fn horizon_meets_tolerance() {
        let a_cl = DMatrix::from_row_slice(2, 2, &[-0.5, 3.0, 0.0, -2.0]);
        let t = default_horizon(&a_cl, 1e-6).unwrap();
        assert!(spectral_norm(&expm(&(&a_cl * t))) < 1e-6);
        assert!(spectral_norm(&expm(&(&a_cl * (0.95 * t)))) >= 1e-6);
    }
}
