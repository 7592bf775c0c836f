//! Rolling contact: contact frames, friction coefficients and the
//! closed-loop equations of motion with the contact force map.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector4};
use num_dual::Dual2_64;
use thiserror::Error;

use super::rigid::{point_jacobian, spanning_tree_dynamics, SpanningTreeDynamics};
use crate::robot_model::kinematics::{
    check_normal, contact_points_from_centers, forward_kinematics_tree, KinematicsError,
};
use crate::robot_model::state::{
    constant_loop_jacobian, expand_coordinates, selection_matrix, LoopJacobian, MinimalState,
    SelectionMatrix, TreeVector, MINIMAL_DOF, TREE_DOF,
};
use crate::robot_model::{Joint, Robot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("contact heading is parallel to the ground normal (residual {0:e})")]
    DegenerateHeading(f64),
}

/// Orthonormal triad `[x y z]` (columns) with `z = n` and `x` the heading
/// projected onto the contact plane.
pub fn contact_frame(n: &Vector3<f64>, heading: &Vector3<f64>) -> Result<Matrix3<f64>, DynamicsError> {
    check_normal(n)?;
    let proj = heading - n * heading.dot(n);
    let len = proj.norm();
    if len < 1e-8 {
        return Err(DynamicsError::DegenerateHeading(len));
    }
    let x = proj / len;
    let y = n.cross(&x);
    Ok(Matrix3::from_columns(&[x, y, *n]))
}

/// Saturated-linear lateral friction coefficients `C_F` (2x4). Columns
/// follow `F_C = (Fx_l, Fx_r, Fz_l, Fz_r)`.
pub fn friction_matrix(lateral_velocity: [f64; 2], mu: f64, v_ref: f64) -> SMatrix<f64, 2, 4> {
    let mut cf = SMatrix::<f64, 2, 4>::zeros();
    for (i, v) in lateral_velocity.iter().enumerate() {
        cf[(i, 2 + i)] = -mu * (v / v_ref).clamp(-1.0, 1.0);
    }
    cf
}

pub type Matrix12<T> = SMatrix<T, MINIMAL_DOF, MINIMAL_DOF>;
pub type Vector12<T> = SVector<T, MINIMAL_DOF>;
pub type ContactRows = SMatrix<f64, 2, MINIMAL_DOF>;

/// Closed-loop equations of motion with the contact model at one state.
#[derive(Debug, Clone)]
pub struct ClosedLoopDynamics {
    pub h: Matrix12<f64>,
    pub c: Vector12<f64>,
    pub g: LoopJacobian<f64>,
    pub tree: SpanningTreeDynamics<f64>,
    pub selection: SelectionMatrix<f64>,
    /// Contact Jacobians in contact-frame axes; row 0 left, row 1 right.
    pub jx: ContactRows,
    pub jy: ContactRows,
    pub jz: ContactRows,
    /// Spanning-tree contact force map `J_xz^T + J_y^T C_F` (16x4).
    pub j_gc: SMatrix<f64, TREE_DOF, 4>,
    /// `Jdot * u_y` for the `(x_l, x_r, z_l, z_r)` rows.
    pub jdot_xz: Vector4<f64>,
    pub friction: SMatrix<f64, 2, 4>,
    /// Contact frames (columns x, y, z), left then right.
    pub frames: [Matrix3<f64>; 2],
    pub contacts: [Vector3<f64>; 2],
    /// Lateral slip velocity of each contact.
    pub lateral_velocity: [f64; 2],
}

impl ClosedLoopDynamics {
    /// Rows `(x_l, x_r, z_l, z_r)` of the rolling constraint (4x12).
    pub fn j_xz(&self) -> SMatrix<f64, 4, MINIMAL_DOF> {
        let mut m = SMatrix::<f64, 4, MINIMAL_DOF>::zeros();
        m.fixed_rows_mut::<2>(0).copy_from(&self.jx);
        m.fixed_rows_mut::<2>(2).copy_from(&self.jz);
        m
    }

    /// `G^T J_gc` (12x4).
    pub fn contact_map(&self) -> SMatrix<f64, MINIMAL_DOF, 4> {
        self.g.transpose() * self.j_gc
    }

    /// `G^T S^T` (12x6).
    pub fn actuation_map(&self) -> SMatrix<f64, MINIMAL_DOF, 6> {
        self.g.transpose() * self.selection.transpose()
    }
}

pub fn closed_loop_dynamics(
    robot: &Robot,
    state: &MinimalState<f64>,
    normals: &[Vector3<f64>; 2],
) -> Result<ClosedLoopDynamics, DynamicsError> {
    normals.iter().try_for_each(check_normal)?;
    let model = &robot.model;
    let g = constant_loop_jacobian::<f64>();
    let q = expand_coordinates(&state.config);
    let u: TreeVector<f64> = g * state.velocity;
    let tree = spanning_tree_dynamics(model, &q, &u);

    let kin = forward_kinematics_tree(model, &q);
    let centers = kin.wheel_centers(model);
    let contacts = contact_points_from_centers(model, &centers, normals);

    // Second-order pass along the motion for Jdot * u.
    let t = Dual2_64::from(0.0).derivative();
    let qd = q.retract(&u, t);
    let kd = forward_kinematics_tree(&robot.second, &qd);

    let mut frames = [Matrix3::zeros(); 2];
    let mut rows = [[SMatrix::<f64, 1, TREE_DOF>::zeros(); 2]; 3];
    let mut jdot = [[0.0; 2]; 3];
    let mut lateral_velocity = [0.0; 2];
    for side in 0..2 {
        let w = model.wheels[side];
        let axis = match &model.bodies[w].joint {
            Joint::Revolute { axis, .. } => kin.frames[w].rotation * axis.as_ref(),
            Joint::Floating => unreachable!("wheels are revolute"),
        };
        let frame = contact_frame(&normals[side], &axis.cross(&normals[side]))?;
        let jp = point_jacobian(model, &q, w, &contacts[side]);

        let fd = &kd.frames[w];
        let c_acc = fd.position.map(|x| x.v2);
        let r = fd.rotation.map(|x| x.re);
        let r2 = fd.rotation.map(|x| x.v2);
        let m = r2 * r.transpose();
        let omega_dot = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5;
        let offset = -normals[side] * model.wheel_radius;
        let acc = c_acc + omega_dot.cross(&offset);

        for axis_idx in 0..3 {
            let e = frame.column(axis_idx);
            rows[axis_idx][side] = e.transpose() * jp;
            jdot[axis_idx][side] = e.dot(&acc);
        }
        lateral_velocity[side] = (rows[1][side] * u)[0];
        frames[side] = frame;
    }
    let friction = friction_matrix(lateral_velocity, model.friction_mu, model.friction_v_ref);

    let stack2 = |r: &[SMatrix<f64, 1, TREE_DOF>; 2]| {
        let mut m = SMatrix::<f64, 2, TREE_DOF>::zeros();
        m.set_row(0, &r[0]);
        m.set_row(1, &r[1]);
        m
    };
    let (tx, ty, tz) = (stack2(&rows[0]), stack2(&rows[1]), stack2(&rows[2]));
    let mut txz = SMatrix::<f64, 4, TREE_DOF>::zeros();
    txz.fixed_rows_mut::<2>(0).copy_from(&tx);
    txz.fixed_rows_mut::<2>(2).copy_from(&tz);
    let j_gc = txz.transpose() + ty.transpose() * friction;

    Ok(ClosedLoopDynamics {
        h: g.transpose() * tree.h * g,
        c: g.transpose() * tree.c,
        g,
        selection: selection_matrix(&model.actuated),
        jx: tx * g,
        jy: ty * g,
        jz: tz * g,
        j_gc,
        jdot_xz: Vector4::new(jdot[0][0], jdot[0][1], jdot[2][0], jdot[2][1]),
        friction,
        frames,
        contacts,
        lateral_velocity,
        tree,
    })
}
