//! Desired task accelerations: PD pose control, LQR balance, prioritized stack.

pub mod lqr;
pub mod pd;
pub mod stack;

use thiserror::Error;

pub use lqr::{
    balance_accel, balance_constraints_residual, balance_model, lqr_gain, solve_care, BalanceController,
    BalanceState, LqrSolution, LqrWeights,
};
pub use pd::{default_gains, pd_accel, pose_error, PoseGains, DEFAULT_KP};
pub use stack::{assemble_task_stack, TaskLevel, TaskStack};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("gains must be positive and finite")]
    InvalidGains,
    #[error("CoM height must be positive (got {0})")]
    InvalidHeight(f64),
    #[error("control weight R must be positive definite")]
    SingularWeight,
    #[error("(A, B) is not controllable")]
    Uncontrollable,
    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { residual: f64, iterations: usize },
}
