//! Lexicographic least-squares over `x = (u_y_dot, F_C, tau_a)`.

mod active_set;
pub mod debug;
mod solver;

use nalgebra::{DMatrix, DVector, SVector};
use thiserror::Error;

use crate::dynamics::ClosedLoopDynamics;
use crate::robot_model::MINIMAL_DOF;

pub use solver::{solve_hierarchy, solve_level, HqpConfig, HqpSolution, HqpSolver, LevelSolution};

pub const ACCEL_DIM: usize = MINIMAL_DOF;
pub const FORCE_DIM: usize = 4;
pub const TORQUE_DIM: usize = 6;
pub const DECISION_DIM: usize = ACCEL_DIM + FORCE_DIM + TORQUE_DIM;
/// Offset of `F_C` inside `x`.
pub const FORCE_OFFSET: usize = ACCEL_DIM;
/// Offset of `tau_a` inside `x`.
pub const TORQUE_OFFSET: usize = ACCEL_DIM + FORCE_DIM;

pub type DecisionVector = SVector<f64, DECISION_DIM>;

/// One least-squares objective `min 1/2 |A x - b|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpLevel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpLevel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        Self { a, b }
    }

    pub fn validate(&self) -> Result<(), LevelError> {
        let ok = self.a.nrows() >= 1
            && self.a.ncols() == DECISION_DIM
            && self.b.len() == self.a.nrows()
            && self.a.iter().chain(self.b.iter()).all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(LevelError::Malformed)
        }
    }

    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).norm()
    }
}

/// Dynamics equalities and one-sided torque rows `A_ineq x <= b_ineq`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
}

impl ConstraintSet {
    pub fn equality_residual(&self, x: &DVector<f64>) -> f64 {
        (&self.a_eq * x - &self.b_eq).amax()
    }

    /// Largest violation of the inequality rows (<= 0 when satisfied).
    pub fn inequality_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.a_ineq * x - &self.b_ineq).max()
    }
}

/// `tau_k <= tau_max_k` and `-tau_k <= tau_max_k`, rows `2k` and `2k + 1`.
pub fn torque_bounds(limits: &[f64; TORQUE_DIM]) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::zeros(2 * TORQUE_DIM, DECISION_DIM);
    let mut b = DVector::zeros(2 * TORQUE_DIM);
    for (k, &lim) in limits.iter().enumerate() {
        a[(2 * k, TORQUE_OFFSET + k)] = 1.0;
        a[(2 * k + 1, TORQUE_OFFSET + k)] = -1.0;
        b[2 * k] = lim;
        b[2 * k + 1] = lim;
    }
    (a, b)
}

/// ```text
/// [ H_y   -G'J_gc  -G'S' ] x = [ -C_y          ]
/// [ J_xz   0        0    ]     [ -Jdot_xz u_y  ]
/// ```
pub fn dynamics_constraints(d: &ClosedLoopDynamics, torque_limits: &[f64; TORQUE_DIM]) -> ConstraintSet {
    let mut a_eq = DMatrix::zeros(ACCEL_DIM + FORCE_DIM, DECISION_DIM);
    a_eq.view_mut((0, 0), (ACCEL_DIM, ACCEL_DIM)).copy_from(&d.h);
    a_eq.view_mut((0, FORCE_OFFSET), (ACCEL_DIM, FORCE_DIM)).copy_from(&(-d.contact_map()));
    a_eq.view_mut((0, TORQUE_OFFSET), (ACCEL_DIM, TORQUE_DIM)).copy_from(&(-d.actuation_map()));
    a_eq.view_mut((ACCEL_DIM, 0), (FORCE_DIM, ACCEL_DIM)).copy_from(&d.j_xz());
    let mut b_eq = DVector::zeros(ACCEL_DIM + FORCE_DIM);
    b_eq.rows_mut(0, ACCEL_DIM).copy_from(&(-d.c));
    b_eq.rows_mut(ACCEL_DIM, FORCE_DIM).copy_from(&(-d.jdot_xz));
    let (a_ineq, b_ineq) = torque_bounds(torque_limits);
    ConstraintSet { a_eq, b_eq, a_ineq, b_ineq }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelError {
    #[error("level matrix is empty, has the wrong width, or contains non-finite entries")]
    Malformed,
    /// `certificate` is `A_eq x_ls - b_eq` at the minimum-norm least-squares point.
    #[error("equality constraints are inconsistent (least-squares residual {residual:e})")]
    InfeasibleEqualities { residual: f64, certificate: DVector<f64> },
    #[error("inequality constraints are infeasible on the equality manifold (constraint {constraint})")]
    InfeasibleInequalities { constraint: usize },
    #[error("active-set iteration hit the cycle limit ({0})")]
    CycleLimit(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("priority level {level}: {source}")]
pub struct HqpError {
    /// 1-based priority index of the failing level.
    pub level: usize,
    #[source]
    pub source: LevelError,
}
