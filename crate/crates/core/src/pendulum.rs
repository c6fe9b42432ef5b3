//! Linearized cart–pendulum driven by a DC motor.
//!
//! State is `[cart position, pendulum angle deviation, cart velocity,
//! angular velocity]`; the input is motor voltage. The angle is a deviation
//! from the balancing equilibrium, reported as `180° + θ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::simulate::StateSpaceModel;

/// Physical constants of the rig (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Pendulum mass.
    pub m: f64,
    /// Cart mass.
    pub m_cart: f64,
    /// Pendulum length to the centre of mass.
    pub l: f64,
    /// Motor rotor inertia.
    pub j_m: f64,
    /// Motor armature resistance.
    pub r_m: f64,
    /// Back-EMF constant.
    pub k_b: f64,
    /// Torque constant.
    pub k_t: f64,
    /// Motor pinion radius.
    pub r: f64,
    /// Pendulum pivot damping.
    pub b: f64,
    /// Cart friction coefficient.
    pub c: f64,
    /// Pendulum inertia about its centre of mass.
    pub i: f64,
    /// Effective cart mass including the reflected motor inertia.
    pub m_eff: f64,
    pub g: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            m: 0.1,
            m_cart: 0.135,
            l: 0.2,
            j_m: 3.26e-8,
            r_m: 12.5,
            k_b: 0.031,
            k_t: 0.031,
            r: 0.006,
            b: 0.000078,
            c: 0.63,
            i: 0.00072,
            m_eff: 0.136,
            g: 9.81,
        }
    }
}

/// Matrices as printed for the rig (two decimals).
pub fn printed_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            0.0, 5.51, -18.29, -0.002, //
            0.0, 64.9, -77.53, -0.026,
        ],
    )
}

pub fn printed_b() -> DMatrix<f64> {
    DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 2.73, 11.59])
}

/// Output map: unit diagonal with 0.1 cross-talk.
pub fn printed_c() -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.1 })
}

#[derive(Debug, Clone)]
pub struct PendulumModel {
    pub params: PendulumParams,
    pub derived_a: DMatrix<f64>,
    pub derived_b: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl PendulumParams {
    /// Common denominator `I(M + m) + M m l²`.
    pub fn denominator(&self) -> f64 {
        self.i * (self.m_eff + self.m) + self.m_eff * self.m * self.l * self.l
    }

    /// Linearization of the cart–pendulum–motor equations.
    pub fn derive(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let PendulumParams { m, l, r_m, k_b, k_t, r, b, c, i, m_eff, g, .. } = *self;
        let al = self.denominator();
        let friction = c + k_t * k_b / (r_m * r * r);
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, m * m * l * l * g / al, -(i + m * l * l) / al * friction, -b * m * l / al, //
                0.0, m * g * l * (m_eff + m) / al, -m * l / al * friction, -b * (m_eff + m) / al,
            ],
        );
        let bm = DMatrix::from_column_slice(
            4,
            1,
            &[
                0.0,
                0.0,
                (i + m * l * l) * k_t / (al * r_m * r),
                m * l * k_t / (al * r_m * r),
            ],
        );
        (a, bm)
    }
}

/// Rig model with both the derived and the printed matrices; `a`, `b`, `c`
/// are the printed ones, which drive all simulations.
pub fn build_pendulum() -> PendulumModel {
    let params = PendulumParams::default();
    let (derived_a, derived_b) = params.derive();
    PendulumModel {
        params,
        derived_a,
        derived_b,
        a: printed_a(),
        b: printed_b(),
        c: printed_c(),
    }
}

impl PendulumModel {
    /// Plant with cost weights `Q = diag(q_diag)`, `R = r·I`.
    pub fn state_space(&self, q_diag: &[f64], r: f64) -> Result<StateSpaceModel> {
        if q_diag.len() != 4 {
            return Err(invalid("q_diag", format!("need 4 entries, got {}", q_diag.len())));
        }
        StateSpaceModel::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            DMatrix::from_diagonal(&DVector::from_column_slice(q_diag)),
            DMatrix::from_element(1, 1, r),
        )
    }
}

/// Reported pendulum angle in degrees for a deviation `theta` in radians.
pub fn reported_angle_deg(theta: f64) -> f64 {
    180.0 + theta.to_degrees()
}
