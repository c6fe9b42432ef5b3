//! Steady-state observer for correlated process and measurement noise.
//!
//! With `N = ½(R_vw + R_wvᵀ)` the gain is `L = (SCᵀ + N)Σ_w⁻¹` and `S` solves
//! the modified algebraic equation obtained by substituting that gain into
//! the error second-moment dynamics
//! `Ṡ = (A − LC)S + S(A − LC)ᵀ + Σ_v + LΣ_wLᵀ − LR_wv − R_vwLᵀ`.
//! The stationary point is found by Newton iteration on `L`: each step
//! freezes the gain, solves the resulting Lyapunov equation for `S`, and
//! updates the gain from `S`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    check_square, is_hurwitz, lyapunov, min_symmetric_eigenvalue, symmetrize,
    unreachable_unstable_mode,
};
use crate::noise::{NoiseModel, NoiseSampler, SamplePath, TimeGrid};
use crate::riccati::{initial_stabilizing_gain, solve_care};

pub const MIN_REPLICATIONS: usize = 100;
const MAX_ITERS: usize = 100;
/// Quantile of `|increment|` at which heavy-tailed increments are clamped.
pub const TRUNCATION_QUANTILE: f64 = 0.999;

/// Per-step increment second moments divided by `Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSecondMoments {
    pub sigma_v: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    /// `E[Δv Δwᵀ]/Δt`, `n × p`.
    pub r_vw: DMatrix<f64>,
    /// `E[Δw Δvᵀ]/Δt`, `p × n`.
    pub r_wv: DMatrix<f64>,
    pub replications: usize,
    pub dt: f64,
    /// Clamp levels applied to `(v, w)` increments, when truncation was used.
    pub truncation: Option<(f64, f64)>,
}

impl NoiseSecondMoments {
    /// Moments given directly (no estimation metadata).
    pub fn new(
        sigma_v: DMatrix<f64>,
        sigma_w: DMatrix<f64>,
        r_vw: DMatrix<f64>,
        r_wv: DMatrix<f64>,
    ) -> Result<Self> {
        let n = sigma_v.nrows();
        let p = sigma_w.nrows();
        check_square("Sigma_v", &sigma_v, n)?;
        check_square("Sigma_w", &sigma_w, p)?;
        if r_vw.shape() != (n, p) || r_wv.shape() != (p, n) {
            return Err(Error::Dimension(format!(
                "cross moments must be {n}x{p} and {p}x{n}, got {:?} and {:?}",
                r_vw.shape(),
                r_wv.shape()
            )));
        }
        Ok(NoiseSecondMoments {
            sigma_v,
            sigma_w,
            r_vw,
            r_wv,
            replications: 0,
            dt: f64::NAN,
            truncation: None,
        })
    }

    pub fn uncorrelated(sigma_v: DMatrix<f64>, sigma_w: DMatrix<f64>) -> Result<Self> {
        let (n, p) = (sigma_v.nrows(), sigma_w.nrows());
        Self::new(sigma_v, sigma_w, DMatrix::zeros(n, p), DMatrix::zeros(p, n))
    }

    fn sigma_w_inverse(&self) -> Result<DMatrix<f64>> {
        self.sigma_w
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::Singular("Sigma_w (measurement-noise block) is not positive definite".into()))
    }
}

fn quantile_abs(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    let (_, v, _) = values.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *v
}

/// Sample moments of jointly drawn `(v, w)` increments, one path pair per
/// replication. With `truncate`, increments are clamped symmetrically at the
/// 99.9% quantile of their magnitude (needed for α-stable noise, whose raw
/// second moments are infinite).
pub fn estimate_second_moments(
    v_paths: &[SamplePath],
    w_paths: &[SamplePath],
    truncate: bool,
) -> Result<NoiseSecondMoments> {
    if v_paths.len() != w_paths.len() {
        return Err(Error::Mismatch(format!(
            "{} process paths but {} measurement paths",
            v_paths.len(),
            w_paths.len()
        )));
    }
    if v_paths.len() < MIN_REPLICATIONS {
        return Err(invalid(
            "replications",
            format!("need at least {MIN_REPLICATIONS}, got {}", v_paths.len()),
        ));
    }
    let dt = v_paths[0].dt();
    let n = v_paths[0].dim();
    let p = w_paths[0].dim();
    for (v, w) in v_paths.iter().zip(w_paths) {
        if v.dim() != n || w.dim() != p || v.steps() != w.steps() {
            return Err(Error::Dimension("replications differ in shape".into()));
        }
        if ((v.dt() - dt) / dt).abs() > 1e-9 || ((w.dt() - dt) / dt).abs() > 1e-9 {
            return Err(Error::Mismatch("replications use different grids".into()));
        }
    }

    let truncation = if truncate {
        let mut va: Vec<f64> = v_paths
            .iter()
            .flat_map(|p| p.increments().into_iter().flat_map(|x| x.iter().map(|c| c.abs()).collect::<Vec<_>>()))
            .collect();
        let mut wa: Vec<f64> = w_paths
            .iter()
            .flat_map(|p| p.increments().into_iter().flat_map(|x| x.iter().map(|c| c.abs()).collect::<Vec<_>>()))
            .collect();
        let levels = (
            quantile_abs(&mut va, TRUNCATION_QUANTILE),
            quantile_abs(&mut wa, TRUNCATION_QUANTILE),
        );
        log::info!("second moments: increments clamped at |v| <= {:.4e}, |w| <= {:.4e}", levels.0, levels.1);
        Some(levels)
    } else {
        None
    };
    let clamp = |x: &DVector<f64>, level: Option<f64>| match level {
        Some(c) => x.map(|v| v.clamp(-c, c)),
        None => x.clone(),
    };

    // Per-replication sums in parallel; the reduction below runs in
    // replication order so results do not depend on thread scheduling.
    let partial: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, usize)> = v_paths
        .par_iter()
        .zip(w_paths.par_iter())
        .map(|(v, w)| {
            let mut svv = DMatrix::zeros(n, n);
            let mut sww = DMatrix::zeros(p, p);
            let mut svw = DMatrix::zeros(n, p);
            let dv = v.increments();
            let dw = w.increments();
            for (a, b) in dv.iter().zip(&dw) {
                let a = clamp(a, truncation.map(|t| t.0));
                let b = clamp(b, truncation.map(|t| t.1));
                svv += &a * a.transpose();
                sww += &b * b.transpose();
                svw += &a * b.transpose();
            }
            (svv, sww, svw, dv.len())
        })
        .collect();
    let mut svv = DMatrix::zeros(n, n);
    let mut sww = DMatrix::zeros(p, p);
    let mut svw = DMatrix::zeros(n, p);
    let mut count = 0;
    for (a, b, c, k) in partial {
        svv += a;
        sww += b;
        svw += c;
        count += k;
    }
    let scale = 1.0 / (count as f64 * dt);
    let r_vw = svw * scale;
    log::debug!(
        "second moments from {} replications ({count} increments), dt = {dt}",
        v_paths.len()
    );
    Ok(NoiseSecondMoments {
        sigma_v: symmetrize(&(svv * scale)),
        sigma_w: symmetrize(&(sww * scale)),
        r_wv: r_vw.transpose(),
        r_vw,
        replications: v_paths.len(),
        dt,
        truncation,
    })
}

/// Draws `replications` independent `(v, w)` path pairs of `steps` steps and
/// estimates their moments. Heavy-tailed models are truncated automatically.
#[allow(clippy::too_many_arguments)]
pub fn moments_from_models(
    v_model: &NoiseModel,
    w_model: &NoiseModel,
    n: usize,
    p: usize,
    dt: f64,
    steps: usize,
    replications: usize,
    seed: u64,
) -> Result<NoiseSecondMoments> {
    let grid = TimeGrid::new(dt, steps)?;
    let vs = NoiseSampler::new(v_model, grid)?;
    let ws = NoiseSampler::new(w_model, grid)?;
    let pairs: Vec<Result<(SamplePath, SamplePath)>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| Ok((vs.sample(n, seed, 2 * r)?, ws.sample(p, seed, 2 * r + 1)?)))
        .collect();
    let mut v_paths = Vec::with_capacity(replications);
    let mut w_paths = Vec::with_capacity(replications);
    for pair in pairs {
        let (v, w) = pair?;
        v_paths.push(v);
        w_paths.push(w);
    }
    let heavy = |m: &NoiseModel| matches!(m, NoiseModel::StableLevy { alpha, .. } if *alpha < 2.0);
    estimate_second_moments(&v_paths, &w_paths, heavy(v_model) || heavy(w_model))
}

/// `L = ½(2SCᵀ + R_vw + R_wvᵀ) Σ_w⁻¹`.
pub fn observer_gain(s: &DMatrix<f64>, c: &DMatrix<f64>, moments: &NoiseSecondMoments) -> Result<DMatrix<f64>> {
    let w_inv = moments.sigma_w_inverse()?;
    Ok((s * c.transpose() * 2.0 + &moments.r_vw + moments.r_wv.transpose()) * 0.5 * w_inv)
}

/// Frobenius norm of the modified steady-state expression at `S`.
pub fn modified_are_residual(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    moments: &NoiseSecondMoments,
    s: &DMatrix<f64>,
) -> Result<f64> {
    let wi = moments.sigma_w_inverse()?;
    let rvw = &moments.r_vw;
    let rwv = &moments.r_wv;
    let cross = (rvw * &wi * rvw.transpose() - rwv.transpose() * &wi * rvw.transpose()
        + rvw * &wi * rwv * 3.0
        + rwv.transpose() * &wi * rwv)
        * 0.25;
    let f = a * s + s * a.transpose() + &moments.sigma_v
        - s * c.transpose() * &wi * c * s
        - cross
        - rvw * &wi * c * s
        - s * c.transpose() * &wi * rwv;
    Ok(f.norm())
}

/// Right-hand side of the error second-moment dynamics for a fixed gain.
pub fn covariance_rate(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    l: &DMatrix<f64>,
    moments: &NoiseSecondMoments,
    s: &DMatrix<f64>,
) -> DMatrix<f64> {
    let ae = a - l * c;
    &ae * s + s * ae.transpose() + &moments.sigma_v + l * &moments.sigma_w * l.transpose()
        - l * &moments.r_wv
        - &moments.r_vw * l.transpose()
}

#[derive(Debug, Clone)]
pub struct ObserverDesign {
    pub s: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// `A − LC`.
    pub a_err: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

pub fn solve_observer_steady_state(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    moments: &NoiseSecondMoments,
) -> Result<ObserverDesign> {
    let n = a.nrows();
    check_square("A", a, n)?;
    let p = c.nrows();
    if c.ncols() != n || moments.sigma_v.nrows() != n || moments.sigma_w.nrows() != p {
        return Err(Error::Dimension(format!(
            "A is {n}x{n}, C is {:?}, Sigma_v is {:?}, Sigma_w is {:?}",
            c.shape(),
            moments.sigma_v.shape(),
            moments.sigma_w.shape()
        )));
    }
    if (&moments.r_vw - moments.r_wv.transpose()).norm() > 1e-8 * (1.0 + moments.r_vw.norm()) {
        return Err(Error::Mismatch(
            "R_wv must equal R_vw transposed for a symmetric steady state".into(),
        ));
    }
    if let Some(mode) = unreachable_unstable_mode(&a.transpose(), &c.transpose()) {
        return Err(Error::NotDetectable { eigenvalue: mode });
    }
    moments.sigma_w_inverse()?;

    let k0 = initial_stabilizing_gain(
        &a.transpose(),
        &c.transpose(),
        &DMatrix::identity(n, n),
        &moments.sigma_w,
    )?;
    let mut l = k0.transpose();
    let mut trace = Vec::new();
    let mut s_prev: Option<DMatrix<f64>> = None;
    for it in 1..=MAX_ITERS {
        let a_err = a - &l * c;
        let q = symmetrize(
            &(&moments.sigma_v + &l * &moments.sigma_w * l.transpose()
                - &l * &moments.r_wv
                - &moments.r_vw * l.transpose()),
        );
        let s = lyapunov(&a_err.transpose(), &q)?;
        l = observer_gain(&s, c, moments)?;
        let residual = modified_are_residual(a, c, moments, &s)?;
        trace.push(residual);
        let scale = 1.0 + s.norm().powi(2);
        let stalled = s_prev
            .as_ref()
            .is_some_and(|sp| (&s - sp).norm() < 1e-13 * (1.0 + s.norm()));
        if residual < 1e-12 * scale || (stalled && residual < 1e-8 * scale) {
            let a_err = a - &l * c;
            if !is_hurwitz(&a_err) {
                return Err(Error::NoConvergence {
                    what: "observer iteration (error dynamics not stable)",
                    iterations: it,
                    trace,
                });
            }
            if min_symmetric_eigenvalue(&s) < -1e-9 * (1.0 + s.norm()) {
                return Err(Error::NoConvergence {
                    what: "observer iteration (S not positive semidefinite)",
                    iterations: it,
                    trace,
                });
            }
            return Ok(ObserverDesign { s, l, a_err, residual, iterations: it });
        }
        s_prev = Some(s);
    }
    Err(Error::NoConvergence {
        what: "observer steady-state iteration",
        iterations: MAX_ITERS,
        trace,
    })
}

/// Stabilizing solution of the classical filter equation
/// `AS + SAᵀ + Σ_v − SCᵀΣ_w⁻¹CS = 0`, via the dual control problem.
pub fn solve_filter_are(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma_v: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(solve_care(&a.transpose(), &c.transpose(), sigma_v, sigma_w)?.p)
}

/// `e + (A − LC)e Δt + Δv − L Δw`.
pub fn error_dynamics_step(
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    c: &DMatrix<f64>,
    e: &DVector<f64>,
    dv: &DVector<f64>,
    dw: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    e + (a - l * c) * e * dt + dv - l * dw
}

/// `‖−2SCᵀ + 2LΣ_w − R_vw − R_wvᵀ‖`, the first-order condition in `L`.
pub fn gain_stationarity_check(
    s: &DMatrix<f64>,
    l: &DMatrix<f64>,
    c: &DMatrix<f64>,
    moments: &NoiseSecondMoments,
) -> f64 {
    (s * c.transpose() * -2.0 + l * &moments.sigma_w * 2.0 - &moments.r_vw - moments.r_wv.transpose()).norm()
}
