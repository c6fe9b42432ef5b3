//! Noise sample paths on a uniform grid: fractional Brownian motion,
//! α-stable Lévy motion and Brownian motion.
//!
//! Every sampler takes an explicit seed. A seed plus a stream id selects a
//! ChaCha20 stream, so independent drivers of one simulation never share
//! random numbers.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rand_distr::{Exp1, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::linalg::cholesky_with_jitter;

/// Grids at or below this size use the exact Cholesky factor in `FbmMethod::Auto`.
pub const AUTO_CHOLESKY_MAX: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    FBm { hurst: f64, sigma: f64 },
    /// Unit-time law `S(α, β, γ, δ)` in the zero-location-shift
    /// parameterization (continuous in α).
    StableLevy { alpha: f64, beta: f64, gamma: f64, delta: f64 },
    Brownian { sigma: f64 },
}

impl NoiseModel {
    pub fn fbm(hurst: f64, sigma: f64) -> Result<Self> {
        let m = NoiseModel::FBm { hurst, sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn stable(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let m = NoiseModel::StableLevy { alpha, beta, gamma, delta };
        m.validate()?;
        Ok(m)
    }

    pub fn brownian(sigma: f64) -> Result<Self> {
        let m = NoiseModel::Brownian { sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::FBm { hurst, sigma } => {
                if !(hurst > 1.0 / 3.0 && hurst < 1.0) {
                    return Err(invalid(
                        "hurst",
                        format!("{hurst} outside (1/3, 1); level-2 lifts need H > 1/3"),
                    ));
                }
                check_scale("sigma", sigma)
            }
            NoiseModel::StableLevy { alpha, beta, gamma, delta } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(invalid("alpha", format!("{alpha} outside (0, 2]")));
                }
                if !(-1.0..=1.0).contains(&beta) {
                    return Err(invalid("beta", format!("{beta} outside [-1, 1]")));
                }
                if !delta.is_finite() {
                    return Err(invalid("delta", "must be finite"));
                }
                check_scale("gamma", gamma)
            }
            NoiseModel::Brownian { sigma } => check_scale("sigma", sigma),
        }
    }

    /// Hölder exponent of the sample paths (stable paths are treated as 1/α).
    pub fn regularity(&self) -> f64 {
        match *self {
            NoiseModel::FBm { hurst, .. } => hurst,
            NoiseModel::StableLevy { alpha, .. } => 1.0 / alpha,
            NoiseModel::Brownian { .. } => 0.5,
        }
    }
}

fn check_scale(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be positive and finite")))
    }
}

/// Uniform grid `t_k = k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("{dt} must be positive")));
        }
        if steps == 0 {
            return Err(invalid("steps", "grid needs at least one step"));
        }
        Ok(TimeGrid { dt, steps })
    }

    /// Grid covering `[0, horizon]` with the step rounded to fit exactly.
    pub fn covering(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(invalid("horizon", format!("{horizon} must be positive")));
        }
        TimeGrid::new(dt, (horizon / dt).round().max(1.0) as usize)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn extended(&self, extra: usize) -> TimeGrid {
        TimeGrid { dt: self.dt, steps: self.steps + extra }
    }
}

/// A sampled path `values[k] = X(t_k)` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub seed: u64,
}

impl SamplePath {
    /// Wraps externally built values; the grid must be strictly increasing and uniform.
    pub fn new(grid: Vec<f64>, values: Vec<DVector<f64>>, seed: u64) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::Dimension(format!(
                "path needs >= 2 points with matching values, got {} times and {} values",
                grid.len(),
                values.len()
            )));
        }
        let d = values[0].len();
        if values.iter().any(|v| v.len() != d) {
            return Err(Error::Dimension("path values have mixed dimensions".into()));
        }
        let dt = grid[1] - grid[0];
        if !(dt > 0.0) {
            return Err(invalid("grid", "must be strictly increasing"));
        }
        for w in grid.windows(2) {
            let h = w[1] - w[0];
            if !(h > 0.0) || ((h - dt) / dt).abs() > 1e-9 {
                return Err(invalid("grid", "must be uniform"));
            }
        }
        Ok(SamplePath { grid, values, seed })
    }

    pub fn from_increments(grid: &TimeGrid, increments: &[DVector<f64>], seed: u64) -> Self {
        assert_eq!(increments.len(), grid.steps);
        let d = increments.first().map_or(0, |v| v.len());
        let mut values = Vec::with_capacity(grid.steps + 1);
        let mut acc = DVector::zeros(d);
        values.push(acc.clone());
        for inc in increments {
            acc += inc;
            values.push(acc.clone());
        }
        SamplePath { grid: grid.times(), values, seed }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dt(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / self.steps() as f64
    }

    pub fn increments(&self) -> Vec<DVector<f64>> {
        self.values.windows(2).map(|w| &w[1] - &w[0]).collect()
    }

    /// Increments of one coordinate.
    pub fn coordinate_increments(&self, i: usize) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1][i] - w[0][i]).collect()
    }

    pub fn scaled(&self, c: f64) -> SamplePath {
        SamplePath {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            seed: self.seed,
        }
    }

    /// CSV with header `t,v1,...,vd`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "t")?;
        for i in 1..=self.dim() {
            write!(out, ",v{i}")?;
        }
        writeln!(out)?;
        for (t, v) in self.grid.iter().zip(&self.values) {
            write!(out, "{}", fmt_f64(*t))?;
            for x in v.iter() {
                write!(out, ",{}", fmt_f64(*x))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// 64-bit FNV-1a hash, used for driver fingerprints and file checksums.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SamplePath {
    /// Hash of the exact bit patterns of all values.
    pub fn fingerprint(&self) -> u64 {
        let bytes: Vec<u8> = self
            .values
            .iter()
            .flat_map(|v| v.iter().flat_map(|x| x.to_bits().to_le_bytes()))
            .collect();
        fnv1a(&bytes)
    }
}

/// RNG for `(seed, stream)`. Different streams of one seed are independent.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `½(t^{2H} + s^{2H} − |t − s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(invalid("hurst", format!("{hurst} outside (0, 1)")));
    }
    if !(s >= 0.0 && t >= 0.0) {
        return Err(invalid("time", format!("covariance needs s, t >= 0, got ({s}, {t})")));
    }
    let h2 = 2.0 * hurst;
    Ok(0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2)))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `m`.
pub fn fgn_autocovariance(m: usize, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    if m <= 64 {
        let m = m as f64;
        return 0.5 * ((m + 1.0).powf(h2) - 2.0 * m.powf(h2) + (m - 1.0).abs().powf(h2));
    }
    // The second difference cancels badly at long lags; expand
    // (1 + x)^{2H} + (1 − x)^{2H} − 2 in even powers of x = 1/m instead.
    let m = m as f64;
    let x2 = 1.0 / (m * m);
    let mut coef = 1.0; // binom(2H, 2j), built incrementally
    let mut pow = 1.0;
    let mut sum = 0.0;
    for j in 1..=6 {
        let k = 2 * j;
        coef *= (h2 - (k - 2) as f64) * (h2 - (k - 1) as f64) / ((k - 1) * k) as f64;
        pow *= x2;
        sum += coef * pow;
    }
    m.powf(h2) * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FbmMethod {
    /// Exact Cholesky factor of the increment covariance.
    Cholesky,
    /// Davies–Harte circulant embedding.
    Circulant,
    #[default]
    Auto,
}

#[derive(Debug, Clone)]
enum Factor {
    White,
    Cholesky(DMatrix<f64>),
    Circulant(Vec<f64>),
}

/// fBm sampler for one grid; the factorization is computed once and reused.
#[derive(Debug, Clone)]
pub struct FbmGenerator {
    hurst: f64,
    sigma: f64,
    grid: TimeGrid,
    factor: Factor,
}

impl FbmGenerator {
    pub fn new(hurst: f64, sigma: f64, grid: TimeGrid, method: FbmMethod) -> Result<Self> {
        NoiseModel::fbm(hurst, sigma)?;
        let n = grid.steps;
        let factor = if hurst == 0.5 {
            Factor::White
        } else {
            let use_cholesky = match method {
                FbmMethod::Cholesky => true,
                FbmMethod::Circulant => false,
                FbmMethod::Auto => n <= AUTO_CHOLESKY_MAX,
            };
            if use_cholesky {
                let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocovariance(i.abs_diff(j), hurst));
                Factor::Cholesky(cholesky_with_jitter(&cov)?.l())
            } else {
                Factor::Circulant(circulant_sqrt_eigenvalues(n, hurst)?)
            }
        };
        Ok(FbmGenerator { hurst, sigma, grid, factor })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Increments of one scalar fBm coordinate.
    pub fn increments_1d<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.grid.steps;
        let scale = self.sigma * self.grid.dt.powf(self.hurst);
        match &self.factor {
            Factor::White => (0..n)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Factor::Cholesky(l) => {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (l * z).iter().map(|v| v * scale).collect()
            }
            Factor::Circulant(sqrt_eig) => circulant_draw(sqrt_eig, n, rng)
                .into_iter()
                .map(|v| v * scale)
                .collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R, seed: u64) -> SamplePath {
        let coords: Vec<Vec<f64>> = (0..d).map(|_| self.increments_1d(rng)).collect();
        let incs: Vec<DVector<f64>> = (0..self.grid.steps)
            .map(|k| DVector::from_fn(d, |i, _| coords[i][k]))
            .collect();
        SamplePath::from_increments(&self.grid, &incs, seed)
    }
}

/// `sqrt(λ_j / 2N)` for the circulant embedding of `n` fGn values.
fn circulant_sqrt_eigenvalues(n: usize, hurst: f64) -> Result<Vec<f64>> {
    let m = 2 * n;
    let mut row: Vec<Complex64> = (0..m)
        .map(|k| {
            let lag = if k <= n { k } else { m - k };
            Complex64::new(fgn_autocovariance(lag, hurst), 0.0)
        })
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut row);
    let max = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    row.iter()
        .map(|c| {
            if c.re < -1e-10 * max {
                Err(Error::NotPositiveDefinite { size: m, jitter: 0.0 })
            } else {
                Ok((c.re.max(0.0) / m as f64).sqrt())
            }
        })
        .collect()
}

fn circulant_draw<R: Rng + ?Sized>(sqrt_eig: &[f64], n: usize, rng: &mut R) -> Vec<f64> {
    let m = sqrt_eig.len();
    let mut w = vec![Complex64::new(0.0, 0.0); m];
    w[0] = Complex64::new(sqrt_eig[0] * rng.sample::<f64, _>(StandardNormal), 0.0);
    w[n] = Complex64::new(sqrt_eig[n] * rng.sample::<f64, _>(StandardNormal), 0.0);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for k in 1..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        w[k] = Complex64::new(a, b) * (sqrt_eig[k] * half);
        w[m - k] = w[k].conj();
    }
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut w);
    w.into_iter().take(n).map(|c| c.re).collect()
}

/// Draws `d` independent fBm coordinates on `grid`.
pub fn sample_fbm(
    model: &NoiseModel,
    grid: &TimeGrid,
    d: usize,
    seed: u64,
    stream: u64,
    method: FbmMethod,
) -> Result<SamplePath> {
    let (hurst, sigma) = match *model {
        NoiseModel::FBm { hurst, sigma } => (hurst, sigma),
        NoiseModel::Brownian { sigma } => (0.5, sigma),
        _ => return Err(invalid("model", "sample_fbm needs an FBm or Brownian model")),
    };
    model.validate()?;
    check_dim(d)?;
    let gen = FbmGenerator::new(hurst, sigma, *grid, method)?;
    Ok(gen.sample(d, &mut rng_for(seed, stream), seed))
}

/// One draw from the standard `S1(α, β, 1, 0)` law by Chambers–Mallows–Stuck.
pub fn cms_standard<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    // V uniform on the open interval (−π/2, π/2).
    let v = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break PI * (u - 0.5);
        }
    };
    let w: f64 = rng.sample(Exp1);
    if (alpha - 1.0).abs() < 1e-12 {
        let a = FRAC_PI_2 + beta * v;
        (2.0 / PI) * (a * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / a).ln())
    } else {
        let t = beta * (PI * alpha / 2.0).tan();
        let b = t.atan() / alpha;
        let s = (1.0 + t * t).powf(1.0 / (2.0 * alpha));
        let ab = alpha * (v + b);
        s * ab.sin() / v.cos().powf(1.0 / alpha)
            * ((v - ab).cos() / w).powf((1.0 - alpha) / alpha)
    }
}

/// Stable increments over a step `dt` of the Lévy motion whose unit-time law
/// is `S0(α, β, γ, δ)`.
pub fn stable_increment<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    dt: f64,
    rng: &mut R,
) -> f64 {
    let z = cms_standard(alpha, beta, rng);
    if (alpha - 1.0).abs() < 1e-12 {
        gamma * dt * z + dt * (delta + (2.0 / PI) * beta * gamma * dt.ln())
    } else {
        let delta1 = delta - beta * gamma * (PI * alpha / 2.0).tan();
        gamma * dt.powf(1.0 / alpha) * z + dt * delta1
    }
}

pub fn sample_stable(
    model: &NoiseModel,
    grid: &TimeGrid,
    d: usize,
    seed: u64,
    stream: u64,
) -> Result<SamplePath> {
    let NoiseModel::StableLevy { alpha, beta, gamma, delta } = *model else {
        return Err(invalid("model", "sample_stable needs a StableLevy model"));
    };
    model.validate()?;
    check_dim(d)?;
    let mut rng = rng_for(seed, stream);
    let coords: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..grid.steps)
                .map(|_| stable_increment(alpha, beta, gamma, delta, grid.dt, &mut rng))
                .collect()
        })
        .collect();
    let incs: Vec<DVector<f64>> = (0..grid.steps)
        .map(|k| DVector::from_fn(d, |i, _| coords[i][k]))
        .collect();
    Ok(SamplePath::from_increments(grid, &incs, seed))
}

/// Samples any noise model; fBm uses [`FbmMethod::Auto`].
pub fn sample(
    model: &NoiseModel,
    grid: &TimeGrid,
    d: usize,
    seed: u64,
    stream: u64,
) -> Result<SamplePath> {
    match model {
        NoiseModel::StableLevy { .. } => sample_stable(model, grid, d, seed, stream),
        _ => sample_fbm(model, grid, d, seed, stream, FbmMethod::Auto),
    }
}

/// Sampler bound to one model and grid, reusing the fBm factorization
/// across many draws. Output is identical to [`sample`].
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    model: NoiseModel,
    grid: TimeGrid,
    fbm: Option<FbmGenerator>,
}

impl NoiseSampler {
    pub fn new(model: &NoiseModel, grid: TimeGrid) -> Result<Self> {
        model.validate()?;
        let fbm = match *model {
            NoiseModel::FBm { hurst, sigma } => {
                Some(FbmGenerator::new(hurst, sigma, grid, FbmMethod::Auto)?)
            }
            NoiseModel::Brownian { sigma } => {
                Some(FbmGenerator::new(0.5, sigma, grid, FbmMethod::Auto)?)
            }
            NoiseModel::StableLevy { .. } => None,
        };
        Ok(NoiseSampler { model: *model, grid, fbm })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn sample(&self, d: usize, seed: u64, stream: u64) -> Result<SamplePath> {
        check_dim(d)?;
        match &self.fbm {
            Some(gen) => Ok(gen.sample(d, &mut rng_for(seed, stream), seed)),
            None => sample_stable(&self.model, &self.grid, d, seed, stream),
        }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(invalid("d", "dimension must be at least 1"))
    } else {
        Ok(())
    }
}

/// `(1/n) Σ exp(i u x_k)`.
pub fn empirical_char_fn(samples: &[f64], u: f64) -> Complex64 {
    if samples.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    let (c, s) = samples
        .iter()
        .fold((0.0, 0.0), |(c, s), x| (c + (u * x).cos(), s + (u * x).sin()));
    Complex64::new(c, s) / samples.len() as f64
}

/// Characteristic function of `S0(α, β, γ, δ)` at `u`.
pub fn stable_char_fn(alpha: f64, beta: f64, gamma: f64, delta: f64, u: f64) -> Complex64 {
    if u == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let gu = (gamma * u).abs();
    let skew = if (alpha - 1.0).abs() < 1e-12 {
        beta * u.signum() * (2.0 / PI) * gu.ln()
    } else {
        beta * u.signum() * (PI * alpha / 2.0).tan() * (gu.powf(1.0 - alpha) - 1.0)
    };
    let log = Complex64::new(-gu.powf(alpha), -gu.powf(alpha) * skew + delta * u);
    log.exp()
}

/// The unit-time `S0` law of one step of length `dt`, as `(γ_dt, δ_dt)`.
pub fn stable_step_parameters(alpha: f64, beta: f64, gamma: f64, delta: f64, dt: f64) -> (f64, f64) {
    if (alpha - 1.0).abs() < 1e-12 {
        let g = gamma * dt;
        // S1 location of the step, then back to S0.
        let d1 = dt * (delta - (2.0 / PI) * beta * gamma * gamma.ln());
        (g, d1 + (2.0 / PI) * beta * g * g.ln())
    } else {
        let tan = (PI * alpha / 2.0).tan();
        let g = gamma * dt.powf(1.0 / alpha);
        let d1 = dt * (delta - beta * gamma * tan);
        (g, d1 + beta * g * tan)
    }
}
