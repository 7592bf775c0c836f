//! Prioritized task levels over `x = (u_y_dot, F_C, tau_a)`.

use nalgebra::{DMatrix, DVector, Vector5};

use crate::hqp::{QpLevel, DECISION_DIM};
use crate::robot_model::tasks::{Task, TaskJacobians, TASK_PRIORITY};

/// One task level with the inputs it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLevel {
    pub task: Task,
    pub desired: f64,
    pub bias: f64,
    pub level: QpLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStack {
    pub levels: Vec<TaskLevel>,
}

impl TaskStack {
    pub fn qp_levels(&self) -> Vec<QpLevel> {
        self.levels.iter().map(|l| l.level.clone()).collect()
    }

    /// Recovers `(pose accelerations, balance acceleration)`.
    pub fn unstack(&self) -> (Vector5<f64>, f64) {
        let get = |t: Task| self.levels.iter().find(|l| l.task == t).map(|l| l.desired).unwrap_or(f64::NAN);
        (
            Vector5::new(get(Task::Split), get(Task::Height), get(Task::Roll), get(Task::Pitch), get(Task::Yaw)),
            get(Task::Balance),
        )
    }
}

/// Orders the desired accelerations by priority and builds
/// `A_i = [J_i 0 0]`, `b_i = a_i - Jdot_i u_y`. `pose` is
/// `(phi, h, alpha, beta, gamma)`.
pub fn assemble_task_stack(pose: &Vector5<f64>, balance: f64, jac: &TaskJacobians) -> TaskStack {
    let levels = TASK_PRIORITY
        .iter()
        .map(|&task| {
            let desired = match task {
                Task::Split => pose[0],
                Task::Height => pose[1],
                Task::Roll => pose[2],
                Task::Pitch => pose[3],
                Task::Yaw => pose[4],
                Task::Balance => balance,
            };
            let row = jac.row(task);
            let bias = jac.bias_of(task);
            let mut a = DMatrix::zeros(1, DECISION_DIM);
            a.view_mut((0, 0), (1, 12)).copy_from(row);
            TaskLevel {
                task,
                desired,
                bias,
                level: QpLevel::new(a, DVector::from_element(1, desired - bias)),
            }
        })
        .collect();
    TaskStack { levels }
}
