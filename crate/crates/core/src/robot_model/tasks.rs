//! Task-space quantities in the local control frame N and their Jacobians.
//!
//! Frame N: origin at the midpoint of the two contact points, x along the
//! base heading projected onto the horizontal plane, z world-vertical.
//! Contact points live on the ground: for rates and Jacobians each contact
//! point is projected onto its local ground plane, so it follows the wheel
//! tangentially and never moves along the normal. Derivatives come from
//! forward-mode differentiation of the generic task map.

use nalgebra::{RowSVector, Vector2, Vector3, Vector5};
use num_dual::{Dual2_64, Dual64};

use super::description::RobotModel;
use super::kinematics::{check_normal, contact_points_from_centers, forward_kinematics_tree, unit_z, KinematicsError};
use super::state::{expand_coordinates, Configuration, MinimalState, MinimalVector, TreeConfiguration, TreeVector};
use super::Robot;
use crate::scalar::Real;

/// Below this `|cos(pitch)|` the ZYX extraction is flagged as near gimbal lock.
pub const GIMBAL_COS_THRESHOLD: f64 = 1e-6;

/// Whole-body tasks in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Height,
    Pitch,
    Balance,
    Roll,
    Split,
    Yaw,
}

/// Height, pitch, balance (relative CoM x), roll, split, yaw.
pub const TASK_PRIORITY: [Task; 6] = [
    Task::Height,
    Task::Pitch,
    Task::Balance,
    Task::Roll,
    Task::Split,
    Task::Yaw,
];

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Height => "height",
            Task::Pitch => "pitch",
            Task::Balance => "balance",
            Task::Roll => "roll",
            Task::Split => "split",
            Task::Yaw => "yaw",
        }
    }
}

/// Scalar task map evaluated at one configuration.
#[derive(Debug, Clone)]
pub struct TaskCoordinates<T: Real> {
    pub split: T,
    pub height: T,
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
    /// CoM relative to the N origin along x_N.
    pub com_rel_x: T,
    /// CoM height above the N origin.
    pub com_rel_z: T,
    pub com: Vector3<T>,
    pub heading: Vector3<T>,
    pub origin: Vector3<T>,
    pub contacts: [Vector3<T>; 2],
    pub wheel_separation: T,
    pub cos_pitch: T,
}

impl<T: Real> TaskCoordinates<T> {
    pub fn pose(&self) -> Vector5<T> {
        Vector5::new(self.split, self.height, self.roll, self.pitch, self.yaw)
    }

    pub fn value(&self, task: Task) -> T {
        match task {
            Task::Height => self.height,
            Task::Pitch => self.pitch,
            Task::Balance => self.com_rel_x,
            Task::Roll => self.roll,
            Task::Split => self.split,
            Task::Yaw => self.yaw,
        }
    }
}

/// Task map with the contact points taken directly from the wheel geometry.
pub fn task_coordinates<T: Real>(
    model: &RobotModel<T>,
    q: &TreeConfiguration<T>,
    normals: &[Vector3<T>; 2],
) -> TaskCoordinates<T> {
    task_coordinates_on_ground(model, q, normals, None)
}

/// Task map with each contact point projected onto the plane through
/// `ground[i]` with normal `normals[i]` (when given).
pub fn task_coordinates_on_ground<T: Real>(
    model: &RobotModel<T>,
    q: &TreeConfiguration<T>,
    normals: &[Vector3<T>; 2],
    ground: Option<[Vector3<T>; 2]>,
) -> TaskCoordinates<T> {
    let kin = forward_kinematics_tree(model, q);
    let centers = kin.wheel_centers(model);
    let hips = kin.hips(model);
    let mut contacts = contact_points_from_centers(model, &centers, normals);
    if let Some(g) = ground {
        for i in 0..2 {
            let off = normals[i].dot(&(contacts[i] - g[i]));
            contacts[i] -= normals[i] * off;
        }
    }
    let half: T = nalgebra::convert(0.5);
    let origin = (contacts[0] + contacts[1]) * half;

    let r = q.rotation.matrix();
    let horiz = (r[(0, 0)] * r[(0, 0)] + r[(1, 0)] * r[(1, 0)]).sqrt();
    let pitch = (-r[(2, 0)]).atan2(horiz);
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let heading = Vector3::new(r[(0, 0)] / horiz, r[(1, 0)] / horiz, T::zero());
    let ez = unit_z::<T>();

    let pendulum = |side: usize| {
        let d = hips[side] - centers[side];
        d.dot(&heading).atan2(d.dot(&ez))
    };
    let com = kin.center_of_mass(model);
    TaskCoordinates {
        split: pendulum(0) - pendulum(1),
        height: (q.position - origin).dot(&ez),
        roll,
        pitch,
        yaw,
        com_rel_x: (com - origin).dot(&heading),
        com_rel_z: (com - origin).dot(&ez),
        com,
        heading,
        origin,
        contacts,
        wheel_separation: (contacts[0] - contacts[1]).dot(&heading),
        cos_pitch: horiz,
    }
}

/// Pose task state `(phi, h, alpha, beta, gamma)` with rates.
#[derive(Debug, Clone)]
pub struct TaskState {
    pub pose: Vector5<f64>,
    pub pose_rate: Vector5<f64>,
    /// Contact separation along x_N (diagnostic, never clamped).
    pub wheel_separation: f64,
    pub contacts: [Vector3<f64>; 2],
    pub gimbal_warning: bool,
}

impl TaskState {
    pub fn split(&self) -> f64 {
        self.pose[0]
    }
    pub fn height(&self) -> f64 {
        self.pose[1]
    }
    pub fn roll(&self) -> f64 {
        self.pose[2]
    }
    pub fn pitch(&self) -> f64 {
        self.pose[3]
    }
    pub fn yaw(&self) -> f64 {
        self.pose[4]
    }
}

/// Centroidal quantities in the sagittal plane of frame N.
#[derive(Debug, Clone)]
pub struct ComState {
    /// `(r_x, r_z)`: CoM relative to the N origin.
    pub r: Vector2<f64>,
    pub r_dot: Vector2<f64>,
    /// Absolute CoM position along the heading.
    pub s: f64,
    /// CoM velocity along the heading.
    pub s_dot: f64,
    pub com: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
    pub heading: Vector3<f64>,
    pub total_mass: f64,
}

/// Task Jacobian rows (1x12 each, priority order) and `Jdot * u_y` terms.
#[derive(Debug, Clone)]
pub struct TaskJacobians {
    pub rows: [RowSVector<f64, 12>; 6],
    pub bias: [f64; 6],
    pub gimbal_warning: bool,
}

impl TaskJacobians {
    pub fn row(&self, task: Task) -> &RowSVector<f64, 12> {
        &self.rows[priority_index(task)]
    }
    pub fn bias_of(&self, task: Task) -> f64 {
        self.bias[priority_index(task)]
    }
}

pub fn priority_index(task: Task) -> usize {
    TASK_PRIORITY.iter().position(|&t| t == task).expect("all tasks ranked")
}

fn lift_normals<D: Real>(n: &[Vector3<f64>; 2]) -> [Vector3<D>; 2] {
    n.map(|v| v.map(nalgebra::convert::<f64, D>))
}

/// Contact points of the given configuration; these anchor the ground
/// planes used when differentiating.
pub fn ground_points(robot: &Robot, y: &Configuration<f64>, normals: &[Vector3<f64>; 2]) -> [Vector3<f64>; 2] {
    task_coordinates(&robot.model, &expand_coordinates(y), normals).contacts
}

fn lift_points<D: Real>(p: [Vector3<f64>; 2]) -> [Vector3<D>; 2] {
    p.map(|v| v.map(nalgebra::convert::<f64, D>))
}

/// Task map evaluated along `y(t) = retract(y, dir, t)` with second-order
/// dual time, giving value, first and second derivative at `t = 0`.
fn along2(
    robot: &Robot,
    state: &MinimalState<f64>,
    dir: &MinimalVector<f64>,
    normals: &[Vector3<f64>; 2],
) -> TaskCoordinates<Dual2_64> {
    let t = Dual2_64::from(0.0).derivative();
    let y = state.config.retract(dir, t);
    let g = lift_points(ground_points(robot, &state.config, normals));
    task_coordinates_on_ground(&robot.second, &expand_coordinates(&y), &lift_normals(normals), Some(g))
}

fn along1(
    robot: &Robot,
    state: &MinimalState<f64>,
    dir: &MinimalVector<f64>,
    normals: &[Vector3<f64>; 2],
) -> TaskCoordinates<Dual64> {
    let t = Dual64::from(0.0).derivative();
    let y = state.config.retract(dir, t);
    let g = lift_points(ground_points(robot, &state.config, normals));
    task_coordinates_on_ground(&robot.first, &expand_coordinates(&y), &lift_normals(normals), Some(g))
}

pub fn task_state(
    robot: &Robot,
    state: &MinimalState<f64>,
    normals: &[Vector3<f64>; 2],
) -> Result<TaskState, KinematicsError> {
    normals.iter().try_for_each(check_normal)?;
    let c = along2(robot, state, &state.velocity, normals);
    Ok(TaskState {
        pose: c.pose().map(|d| d.re),
        pose_rate: c.pose().map(|d| d.v1),
        wheel_separation: c.wheel_separation.re,
        contacts: c.contacts.map(|p| p.map(|d| d.re)),
        gimbal_warning: c.cos_pitch.re.abs() < GIMBAL_COS_THRESHOLD,
    })
}

pub fn com_state(
    robot: &Robot,
    state: &MinimalState<f64>,
    normals: &[Vector3<f64>; 2],
) -> Result<ComState, KinematicsError> {
    normals.iter().try_for_each(check_normal)?;
    let c = along2(robot, state, &state.velocity, normals);
    let heading = c.heading.map(|d| d.re);
    let com = c.com.map(|d| d.re);
    let com_velocity = c.com.map(|d| d.v1);
    Ok(ComState {
        r: Vector2::new(c.com_rel_x.re, c.com_rel_z.re),
        r_dot: Vector2::new(c.com_rel_x.v1, c.com_rel_z.v1),
        s: com.dot(&heading),
        s_dot: com_velocity.dot(&heading),
        com,
        com_velocity,
        heading,
        total_mass: robot.model.total_mass(),
    })
}

pub fn task_jacobians(
    robot: &Robot,
    state: &MinimalState<f64>,
    normals: &[Vector3<f64>; 2],
) -> Result<TaskJacobians, KinematicsError> {
    normals.iter().try_for_each(check_normal)?;
    let mut rows = [RowSVector::<f64, 12>::zeros(); 6];
    for k in 0..12 {
        let c = along1(robot, state, &MinimalVector::from_fn(|i, _| f64::from(i == k)), normals);
        for (i, task) in TASK_PRIORITY.iter().enumerate() {
            rows[i][k] = c.value(*task).eps;
        }
    }
    let c = along2(robot, state, &state.velocity, normals);
    let bias = TASK_PRIORITY.map(|t| c.value(t).v2);
    Ok(TaskJacobians {
        rows,
        bias,
        gimbal_warning: c.cos_pitch.re.abs() < GIMBAL_COS_THRESHOLD,
    })
}

/// Task row over the 16 spanning-tree velocities (before projection by `G`).
pub fn tree_task_row(
    robot: &Robot,
    state: &MinimalState<f64>,
    normals: &[Vector3<f64>; 2],
    task: Task,
) -> RowSVector<f64, 16> {
    let q = expand_coordinates(&state.config);
    let g = lift_points(ground_points(robot, &state.config, normals));
    let mut row = RowSVector::<f64, 16>::zeros();
    for k in 0..16 {
        let dir = TreeVector::from_fn(|i, _| f64::from(i == k));
        let t = Dual64::from(0.0).derivative();
        let c = task_coordinates_on_ground(&robot.first, &q.retract(&dir, t), &lift_normals(normals), Some(g));
        row[k] = c.value(task).eps;
    }
    row
}
