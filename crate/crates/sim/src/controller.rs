//! Whole-body controller: task state -> desired accelerations -> HQP -> torques.

use nalgebra::{Vector2, Vector3, Vector4, Vector5};
use thiserror::Error;
use wbc_core::dynamics::{closed_loop_dynamics, DynamicsError};
use wbc_core::hqp::{dynamics_constraints, HqpConfig, HqpError, HqpSolution, HqpSolver};
use wbc_core::robot_model::kinematics::KinematicsError;
use wbc_core::robot_model::tasks::{com_state, task_jacobians, task_state, ComState, TaskState};
use wbc_core::robot_model::MinimalState;
use wbc_core::task_control::{
    assemble_task_stack, pd_accel, BalanceController, BalanceState, ControlError, LqrWeights, PoseGains,
};
use wbc_core::Robot;

use crate::scenario::{ControllerSettings, InitialPose, Setpoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlFailure {
    #[error("kinematics: {0}")]
    Kinematics(#[from] KinematicsError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("balance design: {0}")]
    Balance(#[from] ControlError),
    #[error("hierarchy: {0}")]
    Hqp(#[from] HqpError),
}

impl ControlFailure {
    /// Priority level of a failed solve, if that is the cause.
    pub fn level(&self) -> Option<usize> {
        match self {
            Self::Hqp(e) => Some(e.level),
            _ => None,
        }
    }
}

/// Pose reference `(phi, h, alpha, beta, gamma)` with rates and forward speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub pose: Vector5<f64>,
    pub pose_rate: Vector5<f64>,
    pub speed: f64,
}

fn setpoint_pose(s: &Setpoint) -> Vector5<f64> {
    Vector5::new(s.split, s.height, s.roll, s.pitch, s.yaw)
}

/// Linear interpolation between setpoints, held outside their span.
pub fn sample_reference(setpoints: &[Setpoint], initial: &InitialPose, t: f64) -> Reference {
    let hold = |pose: Vector5<f64>, speed: f64| Reference { pose, pose_rate: Vector5::zeros(), speed };
    let Some(first) = setpoints.first() else {
        return hold(Vector5::new(0.0, initial.height, 0.0, 0.0, initial.yaw), 0.0);
    };
    if t <= first.t {
        return hold(setpoint_pose(first), first.speed);
    }
    for w in setpoints.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if t < b.t {
            let span = b.t - a.t;
            let f = (t - a.t) / span;
            let (pa, pb) = (setpoint_pose(a), setpoint_pose(b));
            return Reference {
                pose: pa + (pb - pa) * f,
                pose_rate: (pb - pa) / span,
                speed: a.speed + (b.speed - a.speed) * f,
            };
        }
    }
    let last = setpoints.last().expect("non-empty");
    hold(setpoint_pose(last), last.speed)
}

#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub tau: [f64; 6],
    pub task: TaskState,
    pub com: ComState,
    pub balance_state: BalanceState,
    pub balance_reference: BalanceState,
    pub solution: HqpSolution,
}

#[derive(Debug, Clone)]
pub struct WholeBodyController {
    pub robot: Robot,
    pub gains: PoseGains,
    pub balance: BalanceController,
    pub solver: HqpSolver,
    /// World point the absolute CoM position is regulated to; advanced by
    /// the speed reference along the heading.
    anchor: Option<Vector2<f64>>,
}

impl WholeBodyController {
    pub fn new(robot: &Robot, settings: &ControllerSettings) -> Result<Self, ControlError> {
        let kp = Vector5::from(settings.kp);
        let gains = match settings.kd {
            Some(kd) => PoseGains::new(kp, Vector5::from(kd))?,
            None => wbc_core::task_control::default_gains(kp)?,
        };
        let weights = LqrWeights::diagonal(settings.lqr_q, settings.lqr_r);
        let config = HqpConfig { epsilon: settings.hqp_epsilon, ..HqpConfig::default() };
        Ok(Self {
            robot: robot.clone(),
            gains,
            balance: BalanceController::new(weights, robot.gravity()),
            solver: HqpSolver::new(config),
            anchor: None,
        })
    }

    pub fn anchor(&self) -> Option<Vector2<f64>> {
        self.anchor
    }

    /// One control update using the controller's view of the ground normals.
    pub fn update(
        &mut self,
        state: &MinimalState<f64>,
        normals: &[Vector3<f64>; 2],
        reference: &Reference,
        dt: f64,
    ) -> Result<ControlOutput, ControlFailure> {
        let robot = &self.robot;
        let task = task_state(robot, state, normals)?;
        let com = com_state(robot, state, normals)?;
        let jac = task_jacobians(robot, state, normals)?;

        let pose_acc = pd_accel(&reference.pose, &reference.pose_rate, &task.pose, &task.pose_rate, &self.gains);

        let heading = Vector2::new(com.heading.x, com.heading.y);
        let anchor = self.anchor.get_or_insert(com.com.xy());
        *anchor += heading * (reference.speed * dt);
        let balance_state = Vector4::new(com.r.x, com.r_dot.x, com.s, com.s_dot);
        let balance_reference = Vector4::new(0.0, 0.0, anchor.dot(&heading), reference.speed);
        let bal_acc = self.balance.accel(com.r.y, &balance_reference, &balance_state)?;

        let stack = assemble_task_stack(&pose_acc, bal_acc, &jac);
        let dynamics = closed_loop_dynamics(robot, state, normals)?;
        let constraints = dynamics_constraints(&dynamics, &robot.model.torque_limits);
        let solution = self.solver.solve(&stack.qp_levels(), &constraints)?;
        Ok(ControlOutput { tau: solution.tau, task, com, balance_state, balance_reference, solution })
    }
}
