//! Level-2 rough-path lifts of sampled paths.
//!
//! A lift stores per-step increments `ΔX_k` and per-step second-level tensors
//! `𝕏_{t_k, t_{k+1}}`. Values over longer intervals are assembled by Chen's
//! relation, accumulated left to right.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::noise::{fmt_f64, SamplePath};

#[derive(Debug, Clone)]
pub struct RoughPath {
    pub grid: Vec<f64>,
    /// `level1[k] = X_{t_k, t_{k+1}}`.
    pub level1: Vec<DVector<f64>>,
    /// `level2[k] = 𝕏_{t_k, t_{k+1}}`.
    pub level2: Vec<DMatrix<f64>>,
    /// Explicit second-level values for whole intervals `(j, k)`, taking
    /// precedence over Chen assembly. Only used to build inconsistent lifts.
    overrides: BTreeMap<(usize, usize), DMatrix<f64>>,
}

/// Iterated integral of the straight segment with increment `dx`.
pub fn segment_level2(dx: &DVector<f64>) -> DMatrix<f64> {
    dx * dx.transpose() * 0.5
}

/// Geometric lift of the piecewise-linear interpolant of `path`.
pub fn lift_piecewise_linear(path: &SamplePath) -> Result<RoughPath> {
    if path.values.len() < 2 {
        return Err(invalid("path", "lift needs at least two points"));
    }
    let level1 = path.increments();
    let level2 = level1.iter().map(segment_level2).collect();
    Ok(RoughPath {
        grid: path.grid.clone(),
        level1,
        level2,
        overrides: BTreeMap::new(),
    })
}

impl RoughPath {
    pub fn from_parts(
        grid: Vec<f64>,
        level1: Vec<DVector<f64>>,
        level2: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if grid.len() != level1.len() + 1 || level1.len() != level2.len() || level1.is_empty() {
            return Err(Error::Dimension(format!(
                "{} grid points need {} level-1 and level-2 entries, got {} and {}",
                grid.len(),
                grid.len().saturating_sub(1),
                level1.len(),
                level2.len()
            )));
        }
        let d = level1[0].len();
        if level1.iter().any(|x| x.len() != d) || level2.iter().any(|m| m.shape() != (d, d)) {
            return Err(Error::Dimension("inconsistent lift dimensions".into()));
        }
        Ok(RoughPath { grid, level1, level2, overrides: BTreeMap::new() })
    }

    /// Replaces the second level over `[t_j, t_k]` by `tensor`.
    pub fn with_interval_override(mut self, j: usize, k: usize, tensor: DMatrix<f64>) -> Self {
        self.overrides.insert((j, k), tensor);
        self
    }

    pub fn dim(&self) -> usize {
        self.level1[0].len()
    }

    pub fn steps(&self) -> usize {
        self.level1.len()
    }

    pub fn dt(&self) -> f64 {
        (self.grid[self.steps()] - self.grid[0]) / self.steps() as f64
    }

    /// Grid index of time `t`, rejecting off-grid times.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let x = (t - self.grid[0]) / dt;
        let k = x.round();
        if k < 0.0 || k as usize > self.steps() || (x - k).abs() > 1e-9 {
            return Err(Error::OffGrid(t));
        }
        Ok(k as usize)
    }

    /// `(X_{t_j,t_k}, 𝕏_{t_j,t_k})` by Chen accumulation.
    pub fn reconstruct_index(&self, j: usize, k: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if j > k || k > self.steps() {
            return Err(invalid("interval", format!("need j <= k <= {}, got ({j}, {k})", self.steps())));
        }
        let d = self.dim();
        let mut x = DVector::zeros(d);
        let mut xx = DMatrix::zeros(d, d);
        for m in j..k {
            let dx = &self.level1[m];
            xx += &self.level2[m] + &x * dx.transpose();
            x += dx;
        }
        if let Some(o) = self.overrides.get(&(j, k)) {
            xx = o.clone();
        }
        Ok((x, xx))
    }

    pub fn reconstruct(&self, s: f64, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let j = self.index_of(s)?;
        let k = self.index_of(t)?;
        self.reconstruct_index(j, k)
    }

    /// Frobenius norm of `𝕏_{s,t} − 𝕏_{s,u} − 𝕏_{u,t} − X_{s,u} ⊗ X_{u,t}`.
    pub fn chen_defect_index(&self, j: usize, m: usize, k: usize) -> Result<f64> {
        if !(j <= m && m <= k) {
            return Err(invalid("triple", format!("need s <= u <= t, got ({j}, {m}, {k})")));
        }
        let (_, st) = self.reconstruct_index(j, k)?;
        let (xsu, su) = self.reconstruct_index(j, m)?;
        let (xut, ut) = self.reconstruct_index(m, k)?;
        Ok((st - su - ut - xsu * xut.transpose()).norm())
    }

    pub fn chen_defect(&self, s: f64, u: f64, t: f64) -> Result<f64> {
        self.chen_defect_index(self.index_of(s)?, self.index_of(u)?, self.index_of(t)?)
    }

    /// `‖Sym(𝕏_{s,t}) − ½ X_{s,t} ⊗ X_{s,t}‖`.
    pub fn sym_defect_index(&self, j: usize, k: usize) -> Result<f64> {
        let (x, xx) = self.reconstruct_index(j, k)?;
        let sym = (&xx + xx.transpose()) * 0.5;
        Ok((sym - segment_level2(&x)).norm())
    }

    /// `∫_{t_k}^{t_{k+1}} (r − t_k) dX_r` along the linear interpolant, `½ Δt ΔX_k`.
    pub fn time_cross(&self, k: usize) -> DVector<f64> {
        &self.level1[k] * (0.5 * (self.grid[k + 1] - self.grid[k]))
    }

    /// Rows `k, ΔX components, 𝕏 components (row-major)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.dim();
        write!(out, "k")?;
        for i in 1..=d {
            write!(out, ",dx{i}")?;
        }
        for i in 1..=d {
            for j in 1..=d {
                write!(out, ",xx{i}_{j}")?;
            }
        }
        writeln!(out)?;
        for k in 0..self.steps() {
            write!(out, "{k}")?;
            for v in self.level1[k].iter() {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            for i in 0..d {
                for j in 0..d {
                    write!(out, ",{}", fmt_f64(self.level2[k][(i, j)]))?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Path sampled every `factor`-th point.
pub fn subsample(path: &SamplePath, factor: usize) -> Result<SamplePath> {
    if factor == 0 || path.steps() % factor != 0 {
        return Err(invalid(
            "factor",
            format!("{factor} must divide the step count {}", path.steps()),
        ));
    }
    Ok(SamplePath {
        grid: path.grid.iter().step_by(factor).copied().collect(),
        values: path.values.iter().step_by(factor).cloned().collect(),
        seed: path.seed,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Hölder exponent estimate: LS slope of `log max_k |X_{k+ℓ} − X_k|` against
/// `log ℓ` over dyadic lags `ℓ ≤ max(N/16, min(8, N/2))`.
///
/// The maximum of `N/ℓ` Gaussian increments carries a `√(2 ln(N/ℓ))` factor
/// that biases the raw slope low. Dividing by its square root (a quarter
/// power) centres the estimate for H in [0.35, 0.5] over 100-seed
/// calibration runs; the full correction overshoots.
pub fn holder_estimate(path: &SamplePath) -> Result<f64> {
    let n = path.steps();
    if n < 64 {
        return Err(invalid("path", format!("holder estimate needs N >= 64, got {n}")));
    }
    let cap = (n / 16).max(8.min(n / 2));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1;
    while lag <= cap {
        let m = (0..=n - lag)
            .map(|k| (&path.values[k + lag] - &path.values[k]).norm())
            .fold(0.0, f64::max);
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::DegeneratePath(format!(
                "no variation at lag {lag}; Hölder exponent undefined"
            )));
        }
        xs.push((lag as f64).ln());
        ys.push(m.ln() - 0.25 * (2.0 * (n as f64 / lag as f64).ln()).ln());
        lag *= 2;
    }
    Ok(least_squares_slope(&xs, &ys))
}

/// p-variation over partitions drawn from the sampled grid (a lower bound on
/// the continuous-time value).
pub fn p_variation(path: &SamplePath, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("{p} must be >= 1")));
    }
    let n = path.values.len();
    let mut best = vec![0.0f64; n];
    for k in 1..n {
        let mut b = f64::NEG_INFINITY;
        for j in 0..k {
            let v = best[j] + (&path.values[k] - &path.values[j]).norm().powf(p);
            if v > b {
                b = v;
            }
        }
        best[k] = b;
    }
    Ok(best[n - 1].powf(1.0 / p))
}

/// Rough integrals of a controlled integrand with regularity `integrand`
/// against a driver with regularity `driver` are well defined when
/// `(2 + integrand)·driver > 1`.
pub fn controlled_integral_admissible(integrand: f64, driver: f64) -> Result<()> {
    if (2.0 + integrand) * driver > 1.0 {
        Ok(())
    } else {
        Err(Error::Regularity { integrand, driver })
    }
}

/// Second-level discrepancy between successive dyadic refinements.
#[derive(Debug, Clone)]
pub struct RefinementStudy {
    /// Coarse step sizes `h`.
    pub steps: Vec<f64>,
    /// Mean over coarse steps of `‖𝕏^{h}_{t,t+h} − 𝕏^{h/2}_{t,t+h}‖`.
    pub level2_gap: Vec<f64>,
    /// Largest level-1 mismatch seen at common times (exactly zero by construction).
    pub level1_gap: f64,
    /// Fitted exponent of `level2_gap ~ h^rate`.
    pub rate: f64,
}

/// Compares lifts of `path` subsampled by `2^j` and `2^{j+1}` for `j` in
/// `0..levels`, per coarse step.
pub fn refinement_study(path: &SamplePath, levels: usize) -> Result<RefinementStudy> {
    if levels < 2 {
        return Err(invalid("levels", "need at least two refinements for a rate"));
    }
    let mut steps = Vec::new();
    let mut gaps = Vec::new();
    let mut level1_gap: f64 = 0.0;
    for j in 0..levels {
        let fine = lift_piecewise_linear(&subsample(path, 1 << j)?)?;
        let coarse = lift_piecewise_linear(&subsample(path, 1 << (j + 1))?)?;
        let mut total = 0.0;
        for k in 0..coarse.steps() {
            let (xf, xxf) = fine.reconstruct_index(2 * k, 2 * k + 2)?;
            level1_gap = level1_gap.max((&xf - &coarse.level1[k]).amax());
            total += (xxf - &coarse.level2[k]).norm();
        }
        steps.push(coarse.dt());
        gaps.push(total / coarse.steps() as f64);
    }
    if gaps.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::DegeneratePath(
            "second level does not change under refinement (scalar or linear path)".into(),
        ));
    }
    let lx: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    Ok(RefinementStudy {
        rate: least_squares_slope(&lx, &ly),
        steps,
        level2_gap: gaps,
        level1_gap,
    })
}
