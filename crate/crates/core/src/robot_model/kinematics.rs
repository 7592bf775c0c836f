use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use super::description::{Joint, RobotModel};
use super::state::{expand_coordinates, Configuration, TreeConfiguration};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("ground normal must be unit length (|n| = {0})")]
    NonUnitNormal(f64),
    #[error("ground normal must point upward (n_z = {0})")]
    DownwardNormal(f64),
}

/// World pose of one body frame.
#[derive(Debug, Clone)]
pub struct BodyFrame<T: Real> {
    pub rotation: Matrix3<T>,
    pub position: Vector3<T>,
}

impl<T: Real> BodyFrame<T> {
    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.position + self.rotation * p
    }
}

/// Body poses for one configuration, indexed like `RobotModel::bodies`.
#[derive(Debug, Clone)]
pub struct Kinematics<T: Real> {
    pub frames: Vec<BodyFrame<T>>,
}

impl<T: Real> Kinematics<T> {
    pub fn wheel_centers(&self, model: &RobotModel<T>) -> [Vector3<T>; 2] {
        model.wheels.map(|i| self.frames[i].position)
    }

    /// Hip joint locations (origins of the hip links).
    pub fn hips(&self, model: &RobotModel<T>) -> [Vector3<T>; 2] {
        model.hips.map(|i| self.frames[i].position)
    }

    /// World positions of every body's centre of mass.
    pub fn body_coms(&self, model: &RobotModel<T>) -> Vec<Vector3<T>> {
        self.frames
            .iter()
            .zip(&model.bodies)
            .map(|(f, b)| f.transform_point(&b.com))
            .collect()
    }

    pub fn center_of_mass(&self, model: &RobotModel<T>) -> Vector3<T> {
        let mut acc = Vector3::zeros();
        for (c, b) in self.body_coms(model).iter().zip(&model.bodies) {
            acc += c * b.mass;
        }
        acc / model.total_mass()
    }
}

/// Chain composition over the spanning tree.
pub fn forward_kinematics_tree<T: Real>(
    model: &RobotModel<T>,
    q: &TreeConfiguration<T>,
) -> Kinematics<T> {
    let mut frames: Vec<BodyFrame<T>> = Vec::with_capacity(model.bodies.len());
    for body in &model.bodies {
        let frame = match (&body.joint, body.parent) {
            (Joint::Floating, _) => BodyFrame {
                rotation: *q.rotation.matrix(),
                position: q.position,
            },
            (
                Joint::Revolute {
                    coordinate,
                    axis,
                    origin,
                    rotation,
                },
                Some(p),
            ) => {
                let parent = &frames[p];
                let angle = q.joints[coordinate - 1];
                let joint_rot = nalgebra::Rotation3::from_axis_angle(axis, angle);
                BodyFrame {
                    rotation: parent.rotation * rotation.matrix() * joint_rot.matrix(),
                    position: parent.transform_point(origin),
                }
            }
            (Joint::Revolute { .. }, None) => unreachable!("validated: revolute bodies have parents"),
        };
        frames.push(frame);
    }
    Kinematics { frames }
}

/// Poses of all bodies for an independent configuration `y`.
pub fn forward_kinematics<T: Real>(model: &RobotModel<T>, y: &Configuration<T>) -> Kinematics<T> {
    forward_kinematics_tree(model, &expand_coordinates(y))
}

pub(crate) fn check_normal(n: &Vector3<f64>) -> Result<(), KinematicsError> {
    let norm = n.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(KinematicsError::NonUnitNormal(norm));
    }
    if n.z <= 0.0 {
        return Err(KinematicsError::DownwardNormal(n.z));
    }
    Ok(())
}

/// Contact point of each wheel: `wheel_center - r * n`.
pub fn contact_points_from_centers<T: Real>(
    model: &RobotModel<T>,
    centers: &[Vector3<T>; 2],
    normals: &[Vector3<T>; 2],
) -> [Vector3<T>; 2] {
    [
        centers[0] - normals[0] * model.wheel_radius,
        centers[1] - normals[1] * model.wheel_radius,
    ]
}

pub fn contact_points(
    model: &RobotModel<f64>,
    y: &Configuration<f64>,
    normals: &[Vector3<f64>; 2],
) -> Result<[Vector3<f64>; 2], KinematicsError> {
    normals.iter().try_for_each(check_normal)?;
    let kin = forward_kinematics(model, y);
    Ok(contact_points_from_centers(model, &kin.wheel_centers(model), normals))
}

/// Unit vector helper used by several modules.
pub(crate) fn unit_z<T: Real>() -> Vector3<T> {
    Vector3::new(T::zero(), T::zero(), T::one())
}
