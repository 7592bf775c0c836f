//! Spanning-tree inverse dynamics and mass matrix.

use nalgebra::{Matrix6, SMatrix, Vector3, Vector6};

use super::spatial::{cross_force, cross_motion, join, revolute_column, spatial_inertia};
use crate::robot_model::kinematics::forward_kinematics_tree;
use crate::robot_model::state::{tree_index, TreeConfiguration, TreeVector, TREE_DOF};
use crate::robot_model::{Joint, RobotModel};
use crate::scalar::Real;

pub type TreeMatrix<T> = SMatrix<T, TREE_DOF, TREE_DOF>;

/// `H` and `C` of the spanning tree for one state.
#[derive(Debug, Clone)]
pub struct SpanningTreeDynamics<T: Real> {
    pub h: TreeMatrix<T>,
    pub c: TreeVector<T>,
}

/// Per-body world quantities shared by the recursions.
struct Prepared<T: Real> {
    parent: Vec<Option<usize>>,
    /// Velocity columns of each body's joint, with their index in `u`.
    columns: Vec<Vec<(usize, Vector6<T>)>>,
    inertia: Vec<Matrix6<T>>,
}

fn prepare<T: Real>(model: &RobotModel<T>, q: &TreeConfiguration<T>) -> Prepared<T> {
    let kin = forward_kinematics_tree(model, q);
    let mut columns = Vec::with_capacity(model.bodies.len());
    let mut inertia = Vec::with_capacity(model.bodies.len());
    for (body, frame) in model.bodies.iter().zip(&kin.frames) {
        let cols = match &body.joint {
            Joint::Floating => {
                let p = frame.position;
                let mut cols = Vec::with_capacity(6);
                for i in 0..3 {
                    let e = Vector3::ith(i, T::one());
                    cols.push((i, join(&Vector3::zeros(), &e)));
                }
                for i in 0..3 {
                    let e = Vector3::ith(i, T::one());
                    cols.push((3 + i, join(&e, &p.cross(&e))));
                }
                cols
            }
            Joint::Revolute { coordinate, axis, .. } => {
                let a = frame.rotation * axis.as_ref();
                vec![(tree_index(*coordinate), revolute_column(&a, &frame.position))]
            }
        };
        columns.push(cols);
        let r = frame.rotation;
        inertia.push(spatial_inertia(
            body.mass,
            &frame.transform_point(&body.com),
            &(r * body.inertia * r.transpose()),
        ));
    }
    Prepared {
        parent: model.bodies.iter().map(|b| b.parent).collect(),
        columns,
        inertia,
    }
}

fn joint_velocity<T: Real>(cols: &[(usize, Vector6<T>)], u: &TreeVector<T>) -> Vector6<T> {
    cols.iter().fold(Vector6::zeros(), |acc, (i, s)| acc + s * u[*i])
}

/// Recursive Newton-Euler: generalized forces `H udot + C` for the given
/// state and acceleration. `with_gravity = false` drops the gravity term.
pub fn inverse_dynamics<T: Real>(
    model: &RobotModel<T>,
    q: &TreeConfiguration<T>,
    u: &TreeVector<T>,
    udot: &TreeVector<T>,
    with_gravity: bool,
) -> TreeVector<T> {
    let p = prepare(model, q);
    let n = model.bodies.len();
    let gravity_acc = if with_gravity {
        join(&Vector3::zeros(), &Vector3::new(T::zero(), T::zero(), model.gravity))
    } else {
        Vector6::zeros()
    };
    let mut vel = vec![Vector6::<T>::zeros(); n];
    let mut acc = vec![Vector6::<T>::zeros(); n];
    let mut force = vec![Vector6::<T>::zeros(); n];
    for i in 0..n {
        let (vp, ap) = match p.parent[i] {
            Some(j) => (vel[j], acc[j]),
            None => (Vector6::zeros(), gravity_acc),
        };
        let vj = joint_velocity(&p.columns[i], u);
        let v = vp + vj;
        let bias = match p.parent[i] {
            // d/dt of the base columns: only the p_B x omega block moves.
            None => {
                let vb = Vector3::new(u[0], u[1], u[2]);
                let w = Vector3::new(u[3], u[4], u[5]);
                join(&Vector3::zeros(), &vb.cross(&w))
            }
            Some(_) => cross_motion(&v, &vj),
        };
        let a = ap + joint_velocity(&p.columns[i], udot) + bias;
        force[i] = p.inertia[i] * a + cross_force(&v, &(p.inertia[i] * v));
        vel[i] = v;
        acc[i] = a;
    }
    let mut tau = TreeVector::<T>::zeros();
    for i in (0..n).rev() {
        for (k, s) in &p.columns[i] {
            tau[*k] = s.dot(&force[i]);
        }
        if let Some(j) = p.parent[i] {
            let f = force[i];
            force[j] += f;
        }
    }
    tau
}

/// Composite-rigid-body mass matrix.
pub fn mass_matrix<T: Real>(model: &RobotModel<T>, q: &TreeConfiguration<T>) -> TreeMatrix<T> {
    let p = prepare(model, q);
    let n = model.bodies.len();
    let mut composite = p.inertia.clone();
    for i in (0..n).rev() {
        if let Some(j) = p.parent[i] {
            let c = composite[i];
            composite[j] += c;
        }
    }
    let mut h = TreeMatrix::<T>::zeros();
    for i in 0..n {
        for (ki, si) in &p.columns[i] {
            let f = composite[i] * si;
            let mut j = Some(i);
            while let Some(b) = j {
                for (kj, sj) in &p.columns[b] {
                    let v = f.dot(sj);
                    h[(*ki, *kj)] = v;
                    h[(*kj, *ki)] = v;
                }
                j = p.parent[b];
            }
        }
    }
    h
}

pub fn spanning_tree_dynamics<T: Real>(
    model: &RobotModel<T>,
    q: &TreeConfiguration<T>,
    u: &TreeVector<T>,
) -> SpanningTreeDynamics<T> {
    SpanningTreeDynamics {
        h: mass_matrix(model, q),
        c: inverse_dynamics(model, q, u, &TreeVector::zeros(), true),
    }
}

/// Generalized gravity force `-C(q, 0)`.
pub fn generalized_gravity<T: Real>(model: &RobotModel<T>, q: &TreeConfiguration<T>) -> TreeVector<T> {
    -inverse_dynamics(model, q, &TreeVector::zeros(), &TreeVector::zeros(), true)
}

pub fn kinetic_energy<T: Real>(model: &RobotModel<T>, q: &TreeConfiguration<T>, u: &TreeVector<T>) -> T {
    let h = mass_matrix(model, q);
    (u.transpose() * h * u)[0] * nalgebra::convert::<f64, T>(0.5)
}

/// Gravitational potential `m g z_com` relative to `z = 0`.
pub fn potential_energy<T: Real>(model: &RobotModel<T>, q: &TreeConfiguration<T>) -> T {
    let kin = forward_kinematics_tree(model, q);
    kin.center_of_mass(model).z * model.total_mass() * model.gravity
}

/// Linear-velocity Jacobian (3x16) of the material point of `body` located
/// at world position `p`.
pub fn point_jacobian<T: Real>(
    model: &RobotModel<T>,
    q: &TreeConfiguration<T>,
    body: usize,
    p: &Vector3<T>,
) -> SMatrix<T, 3, TREE_DOF> {
    let prep = prepare(model, q);
    let mut jac = SMatrix::<T, 3, TREE_DOF>::zeros();
    let mut b = Some(body);
    while let Some(i) = b {
        for (k, s) in &prep.columns[i] {
            let w = Vector3::new(s[0], s[1], s[2]);
            let v = Vector3::new(s[3], s[4], s[5]);
            jac.set_column(*k, &(v + w.cross(p)));
        }
        b = prep.parent[i];
    }
    jac
}
