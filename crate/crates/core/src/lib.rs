//! Whole-body control for a six-actuator wheeled biped with parallelogram legs.
//!
//! Most numerical code is generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64` for everyday use.

pub mod dynamics;
pub mod hqp;
pub mod robot_model;
pub mod terrain;
pub mod scalar;
pub mod task_control;

pub use robot_model::Robot;

pub type Model = robot_model::RobotModel<f64>;
pub type State = robot_model::MinimalState<f64>;
pub type Config = robot_model::Configuration<f64>;
