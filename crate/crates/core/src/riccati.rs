//! Continuous algebraic Riccati equation and the closed-loop transition matrix.
//!
//! The CARE `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` is solved by Kleinman–Newton
//! iteration: each step fixes a stabilizing gain `K`, solves the Lyapunov
//! equation `(A − BK)ᵀP + P(A − BK) + Q + KᵀRK = 0`, and updates
//! `K ← R⁻¹BᵀP`. The initial stabilizing gain is found by a shift
//! continuation: `A − βI` is Hurwitz for large `β`, so `K = 0` starts the
//! iteration there, and `β` is walked down to zero while the previous gain
//! keeps the shifted closed loop stable.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    check_square, expm, is_hurwitz, lyapunov, min_symmetric_eigenvalue, spectral_abscissa,
    symmetrize, unreachable_unstable_mode,
};

const MAX_NEWTON_ITERS: usize = 200;
const MAX_CONTINUATION_STEPS: usize = 400;

/// Stabilizing CARE solution and the objects derived from it.
#[derive(Debug, Clone)]
pub struct ControlDesign {
    pub p: DMatrix<f64>,
    /// Feedback gain `R⁻¹BᵀP`.
    pub k: DMatrix<f64>,
    /// Closed-loop matrix `A − BK`.
    pub a_cl: DMatrix<f64>,
    pub care_residual: f64,
    pub iterations: usize,
}

impl ControlDesign {
    pub fn state_dim(&self) -> usize {
        self.p.nrows()
    }

    /// `P⁻¹`, used to map costate-form corrections back to state units.
    pub fn p_inverse(&self) -> DMatrix<f64> {
        self.p
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| self.p.clone().try_inverse().expect("P is positive definite"))
    }
}

fn check_shapes(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<()> {
    let n = a.nrows();
    check_square("A", a, n)?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "B must have {n} rows, got {}",
            b.nrows()
        )));
    }
    check_square("Q", q, n)?;
    check_square("R", r, b.ncols())?;
    Ok(())
}

fn r_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if (r - r.transpose()).norm() > 1e-12 * (1.0 + r.norm()) {
        return Err(invalid("R", "must be symmetric"));
    }
    r.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("R is not positive definite".into()))
}

/// Frobenius norm of `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> f64 {
    let r_inv = r
        .clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(r.nrows(), r.ncols(), f64::NAN));
    (a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q).norm()
}

/// Runs Kleinman–Newton from a user-supplied stabilizing gain `k0`.
pub fn solve_care_from_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k0: &DMatrix<f64>,
) -> Result<ControlDesign> {
    check_shapes(a, b, q, r)?;
    if k0.shape() != (b.ncols(), a.nrows()) {
        return Err(Error::Dimension(format!(
            "initial gain must be {}x{}, got {:?}",
            b.ncols(),
            a.nrows(),
            k0.shape()
        )));
    }
    let r_inv = r_inverse(r)?;
    if !is_hurwitz(&(a - b * k0)) {
        return Err(invalid("k0", "initial gain does not stabilize A - B K0"));
    }
    kleinman(a, b, q, r, &r_inv, k0.clone())
}

fn kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    mut k: DMatrix<f64>,
) -> Result<ControlDesign> {
    let mut p_prev: Option<DMatrix<f64>> = None;
    let mut trace = Vec::new();
    for it in 1..=MAX_NEWTON_ITERS {
        let a_k = a - b * &k;
        let rhs = q + k.transpose() * r * &k;
        let p = symmetrize(&lyapunov(&a_k, &rhs)?);
        k = r_inv * b.transpose() * &p;
        let res = care_residual(&p, a, b, q, r);
        trace.push(res);
        let step = p_prev.as_ref().map(|pp| (&p - pp).norm()).unwrap_or(f64::INFINITY);
        let scale = 1.0 + p.norm();
        if res < 1e-12 * (1.0 + p.norm().powi(2)) || step < 1e-14 * scale {
            let a_cl = a - b * &k;
            return Ok(ControlDesign {
                care_residual: res,
                p,
                k,
                a_cl,
                iterations: it,
            });
        }
        p_prev = Some(p);
    }
    Err(Error::NoConvergence {
        what: "Kleinman iteration",
        iterations: MAX_NEWTON_ITERS,
        trace,
    })
}

/// Finds a stabilizing gain for `(A, B)` by continuation in the shift `β`.
pub fn initial_stabilizing_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_shapes(a, b, q, r)?;
    let n = a.nrows();
    let m = b.ncols();
    if is_hurwitz(a) {
        return Ok(DMatrix::zeros(m, n));
    }
    if let Some(mode) = unreachable_unstable_mode(a, b) {
        return Err(Error::NotStabilizable { eigenvalue: mode });
    }
    let r_inv = r_inverse(r)?;
    let id = DMatrix::<f64>::identity(n, n);
    let mut beta = spectral_abscissa(a).max(0.0) + 1.0;
    let mut k = DMatrix::zeros(m, n);
    let mut target = 0.0;
    for _ in 0..MAX_CONTINUATION_STEPS {
        let shifted = a - &id * beta;
        k = kleinman(&shifted, b, q, r, &r_inv, k)?.k;
        if is_hurwitz(&(a - b * &k)) {
            return Ok(k);
        }
        // Walk β down while the current gain still stabilizes the next shift.
        loop {
            let trial = a - &id * target - b * &k;
            if is_hurwitz(&trial) {
                beta = target;
                target = 0.0;
                break;
            }
            target = 0.5 * (target + beta);
            if beta - target < 1e-10 {
                return Err(Error::NotStabilizable {
                    eigenvalue: num_complex::Complex64::new(spectral_abscissa(a), 0.0),
                });
            }
        }
    }
    Err(Error::NoConvergence {
        what: "stabilizing-gain continuation",
        iterations: MAX_CONTINUATION_STEPS,
        trace: vec![],
    })
}

/// Stabilizing solution of the CARE together with gain and closed loop.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<ControlDesign> {
    check_shapes(a, b, q, r)?;
    if (q - q.transpose()).norm() > 1e-12 * (1.0 + q.norm()) {
        return Err(invalid("Q", "must be symmetric"));
    }
    if min_symmetric_eigenvalue(q) < -1e-12 * (1.0 + q.norm()) {
        return Err(invalid("Q", "must be positive semidefinite"));
    }
    let k0 = initial_stabilizing_gain(a, b, q, r)?;
    let design = solve_care_from_gain(a, b, q, r, &k0)?;
    log::debug!(
        "CARE solved in {} Newton steps, residual {:.3e}",
        design.iterations,
        design.care_residual
    );
    Ok(design)
}

/// `Φ(s, t) = exp(A_cl (s − t))`, the solution of `dΦ/ds = A_cl Φ`, `Φ(t, t) = I`.
pub fn fundamental_solution(a_cl: &DMatrix<f64>, s: f64, t: f64) -> DMatrix<f64> {
    expm(&(a_cl * (s - t)))
}
