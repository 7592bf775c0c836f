//! Closed-loop simulation of the wheeled biped: contact dynamics, synthetic
//! terrain and LiDAR, scenario files and the run loop.

pub mod bench;
pub mod controller;
pub mod lidar;
pub mod physics;
pub mod runner;
pub mod scenario;
pub mod stance;
pub mod terrain;

pub use controller::{ControlFailure, WholeBodyController};
pub use physics::{SimConfig, SimError, SimState, Simulator};
pub use runner::{run_scenario, LogRecord, Metrics, RunError, RunOptions, RunOutput};
pub use scenario::{EstimationMode, Scenario, ScenarioError};
pub use terrain::{Terrain, TerrainKind};
