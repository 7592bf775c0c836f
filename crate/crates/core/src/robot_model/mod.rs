//! Robot description, configuration spaces and kinematic task maps.

pub mod description;
pub mod kinematics;
pub mod stance;
pub mod state;
pub mod tasks;

use num_dual::{Dual2_64, Dual64};

pub use description::{Body, Joint, ModelError, RobotDescription, RobotModel, DEFAULT_ROBOT_TOML};
pub use kinematics::{contact_points, forward_kinematics, forward_kinematics_tree, Kinematics, KinematicsError};
pub use stance::flat_stance;
pub use state::*;
pub use tasks::{com_state, task_jacobians, task_state, ComState, Task, TaskJacobians, TaskState, TASK_PRIORITY};

/// An `f64` model together with its first- and second-order dual copies
/// used for differentiating kinematic maps.
#[derive(Debug, Clone)]
pub struct Robot {
    pub description: RobotDescription,
    pub model: RobotModel<f64>,
    pub(crate) first: RobotModel<Dual64>,
    pub(crate) second: RobotModel<Dual2_64>,
}

impl Robot {
    pub fn new(description: RobotDescription) -> Result<Self, ModelError> {
        let model = RobotModel::from_description(&description)?;
        Ok(Self {
            first: model.cast(),
            second: model.cast(),
            model,
            description,
        })
    }

    pub fn default_diablo() -> Self {
        Self::new(RobotDescription::default_diablo()).expect("bundled description is valid")
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self, ModelError> {
        Self::new(RobotDescription::from_file(path)?)
    }

    pub fn gravity(&self) -> f64 {
        self.model.gravity
    }

    pub fn total_mass(&self) -> f64 {
        self.model.total_mass()
    }
}
