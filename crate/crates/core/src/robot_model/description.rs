//! Parameter file schema and validation.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Real};

/// Built-in parameter set shipped with the crate.
pub const DEFAULT_ROBOT_TOML: &str = include_str!("../../data/robot.toml");

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read robot file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("robot file parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("body `{body}`: {reason}")]
    InvalidBody { body: String, reason: String },
    #[error("invalid robot description: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Floating,
    Revolute,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDescription {
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
    pub joint: JointKind,
    /// Spanning-tree coordinate number `k` of `q_k` (1..=10) for revolute joints.
    #[serde(default)]
    pub coordinate: Option<usize>,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
    pub mass: f64,
    #[serde(default)]
    pub com: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]` about the CoM.
    pub inertia: [f64; 6],
}

fn default_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// Lateral friction coefficient assumed by the controller.
    pub mu: f64,
    /// Lateral slip speed at which friction saturates, m/s.
    pub v_ref: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDescription {
    pub gravity: f64,
    pub wheel_radius: f64,
    /// Coordinate numbers actuated by `tau_1..tau_6`.
    pub actuated: [usize; 6],
    pub torque_limits: [f64; 6],
    pub contact: ContactParams,
    #[serde(rename = "body")]
    pub bodies: Vec<BodyDescription>,
}

impl RobotDescription {
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let desc: Self = toml::from_str(text)?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The shipped default parameter set.
    pub fn default_diablo() -> Self {
        Self::from_toml_str(DEFAULT_ROBOT_TOML).expect("bundled robot description is valid")
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |body: &str, reason: String| ModelError::InvalidBody {
            body: body.to_string(),
            reason,
        };
        if self.bodies.len() != 11 {
            return Err(ModelError::Invalid(format!(
                "expected 11 bodies (floating base + 10 revolute), found {}",
                self.bodies.len()
            )));
        }
        if !(self.wheel_radius > 0.0) {
            return Err(ModelError::Invalid("wheel_radius must be positive".into()));
        }
        if !(self.contact.mu >= 0.0) || !(self.contact.v_ref > 0.0) {
            return Err(ModelError::Invalid(
                "contact.mu must be >= 0 and contact.v_ref > 0".into(),
            ));
        }
        if self.torque_limits.iter().any(|&t| !(t > 0.0)) {
            return Err(ModelError::Invalid("torque_limits must be positive".into()));
        }
        let mut floating = 0;
        let mut seen = [false; 11];
        for (i, body) in self.bodies.iter().enumerate() {
            if !(body.mass > 0.0) {
                return Err(invalid(&body.name, "mass must be positive".into()));
            }
            if !inertia_matrix(&body.inertia).cholesky().is_some() {
                return Err(invalid(
                    &body.name,
                    "inertia tensor must be symmetric positive definite".into(),
                ));
            }
            match body.joint {
                JointKind::Floating => {
                    floating += 1;
                    if i != 0 || body.parent.is_some() {
                        return Err(invalid(
                            &body.name,
                            "the floating base must be the first body and have no parent".into(),
                        ));
                    }
                }
                JointKind::Revolute => {
                    let parent = body
                        .parent
                        .as_ref()
                        .ok_or_else(|| invalid(&body.name, "revolute joint needs a parent".into()))?;
                    let pidx = self.bodies.iter().position(|b| &b.name == parent).ok_or_else(
                        || invalid(&body.name, format!("unknown parent `{parent}`")),
                    )?;
                    if pidx >= i {
                        return Err(invalid(
                            &body.name,
                            "bodies must be listed parents-first".into(),
                        ));
                    }
                    let k = body
                        .coordinate
                        .ok_or_else(|| invalid(&body.name, "missing `coordinate`".into()))?;
                    if !(1..=10).contains(&k) || seen[k] {
                        return Err(invalid(
                            &body.name,
                            format!("coordinate {k} is out of range or used twice"),
                        ));
                    }
                    seen[k] = true;
                    let axis = Vector3::from(body.axis);
                    if (axis.norm() - 1.0).abs() > 1e-9 {
                        return Err(invalid(&body.name, "axis must be a unit vector".into()));
                    }
                }
            }
        }
        if floating != 1 {
            return Err(ModelError::Invalid("exactly one floating base required".into()));
        }
        let mut act = self.actuated;
        act.sort_unstable();
        if act != [1, 4, 5, 6, 9, 10] {
            return Err(ModelError::Invalid(
                "actuated joints must be hip, knee drive and wheel of each leg (1,5,4,6,10,9)"
                    .into(),
            ));
        }
        // Loop-closure structure: q3's body hangs off q5's body (coupler on
        // crank) and q2's body is the knee on the hip link.
        let parent_coord = |k: usize| -> Option<usize> {
            let body = self.bodies.iter().find(|b| b.coordinate == Some(k))?;
            let parent = body.parent.as_ref()?;
            let p = self.bodies.iter().find(|b| &b.name == parent)?;
            Some(p.coordinate.unwrap_or(0))
        };
        let expected = [
            (1, 0),
            (2, 1),
            (3, 5),
            (4, 2),
            (5, 1),
            (6, 0),
            (7, 6),
            (8, 10),
            (9, 7),
            (10, 6),
        ];
        for (k, p) in expected {
            if parent_coord(k) != Some(p) {
                return Err(ModelError::Invalid(format!(
                    "coordinate q{k} must be attached to the body of {}",
                    if p == 0 { "the base".to_string() } else { format!("q{p}") }
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn inertia_matrix(v: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2])
}

/// Rigid body with the joint connecting it to its parent.
#[derive(Debug, Clone)]
pub struct Body<T: Real> {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: Joint<T>,
    pub mass: T,
    pub com: Vector3<T>,
    pub inertia: Matrix3<T>,
}

#[derive(Debug, Clone)]
pub enum Joint<T: Real> {
    Floating,
    Revolute {
        /// Coordinate number `k` of `q_k`.
        coordinate: usize,
        axis: Unit<Vector3<T>>,
        origin: Vector3<T>,
        rotation: Rotation3<T>,
    },
}

/// Kinematic and inertial model, generic over the scalar.
#[derive(Debug, Clone)]
pub struct RobotModel<T: Real> {
    pub bodies: Vec<Body<T>>,
    pub gravity: T,
    pub wheel_radius: T,
    pub torque_limits: [T; 6],
    pub actuated: [usize; 6],
    pub friction_mu: T,
    pub friction_v_ref: T,
    /// Body indices of the hip links (left, right).
    pub hips: [usize; 2],
    /// Body indices of the wheels (left, right).
    pub wheels: [usize; 2],
}

impl RobotModel<f64> {
    pub fn from_description(desc: &RobotDescription) -> Result<Self, ModelError> {
        desc.validate()?;
        let index_of = |name: &str| desc.bodies.iter().position(|b| b.name == name);
        let bodies = desc
            .bodies
            .iter()
            .map(|b| {
                let joint = match b.joint {
                    JointKind::Floating => Joint::Floating,
                    JointKind::Revolute => Joint::Revolute {
                        coordinate: b.coordinate.unwrap_or_default(),
                        axis: Unit::new_normalize(Vector3::from(b.axis)),
                        origin: Vector3::from(b.origin),
                        rotation: Rotation3::from_euler_angles(b.rpy[0], b.rpy[1], b.rpy[2]),
                    },
                };
                Body {
                    name: b.name.clone(),
                    parent: b.parent.as_deref().and_then(index_of),
                    joint,
                    mass: b.mass,
                    com: Vector3::from(b.com),
                    inertia: inertia_matrix(&b.inertia),
                }
            })
            .collect::<Vec<_>>();
        let by_coord = |k: usize| {
            bodies
                .iter()
                .position(|b| matches!(b.joint, Joint::Revolute { coordinate, .. } if coordinate == k))
                .expect("validated coordinate")
        };
        Ok(Self {
            hips: [by_coord(1), by_coord(6)],
            wheels: [by_coord(4), by_coord(9)],
            bodies,
            gravity: desc.gravity,
            wheel_radius: desc.wheel_radius,
            torque_limits: desc.torque_limits,
            actuated: desc.actuated,
            friction_mu: desc.contact.mu,
            friction_v_ref: desc.contact.v_ref,
        })
    }

    pub fn default_diablo() -> Self {
        Self::from_description(&RobotDescription::default_diablo()).expect("valid default")
    }

    /// Re-expresses the model in another scalar type (e.g. dual numbers).
    pub fn cast<U: Real>(&self) -> RobotModel<U> {
        let c = |x: f64| -> U { lit(x) };
        let v = |x: &Vector3<f64>| x.map(c);
        RobotModel {
            bodies: self
                .bodies
                .iter()
                .map(|b| Body {
                    name: b.name.clone(),
                    parent: b.parent,
                    joint: match &b.joint {
                        Joint::Floating => Joint::Floating,
                        Joint::Revolute {
                            coordinate,
                            axis,
                            origin,
                            rotation,
                        } => Joint::Revolute {
                            coordinate: *coordinate,
                            axis: Unit::new_unchecked(v(axis.as_ref())),
                            origin: v(origin),
                            rotation: Rotation3::from_matrix_unchecked(rotation.matrix().map(c)),
                        },
                    },
                    mass: c(b.mass),
                    com: v(&b.com),
                    inertia: b.inertia.map(c),
                })
                .collect(),
            gravity: c(self.gravity),
            wheel_radius: c(self.wheel_radius),
            torque_limits: self.torque_limits.map(c),
            actuated: self.actuated,
            friction_mu: c(self.friction_mu),
            friction_v_ref: c(self.friction_v_ref),
            hips: self.hips,
            wheels: self.wheels,
        }
    }
}

impl<T: Real> RobotModel<T> {
    pub fn total_mass(&self) -> T {
        self.bodies.iter().fold(T::zero(), |acc, b| acc + b.mass)
    }

    pub fn with_gravity(mut self, g: f64) -> Self {
        self.gravity = lit(g);
        self
    }
}
