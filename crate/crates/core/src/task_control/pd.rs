//! PD law for the five pose tasks `(phi, h, alpha, beta, gamma)`.

use nalgebra::Vector5;

use super::ControlError;
use crate::scalar::wrap_angle;

/// Indices of angular entries in the pose vector.
const ANGULAR: [usize; 4] = [0, 2, 3, 4];

/// Default proportional gains for `(phi, h, alpha, beta, gamma)`, 1/s^2.
pub const DEFAULT_KP: [f64; 5] = [100.0, 400.0, 400.0, 400.0, 50.0];

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGains {
    pub kp: Vector5<f64>,
    pub kd: Vector5<f64>,
}

impl PoseGains {
    pub fn new(kp: Vector5<f64>, kd: Vector5<f64>) -> Result<Self, ControlError> {
        if kp.iter().chain(kd.iter()).any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(ControlError::InvalidGains);
        }
        Ok(Self { kp, kd })
    }
}

impl Default for PoseGains {
    fn default() -> Self {
        default_gains(Vector5::from(DEFAULT_KP)).expect("positive defaults")
    }
}

/// `K_d = sqrt(K_p)` elementwise.
pub fn default_gains(kp: Vector5<f64>) -> Result<PoseGains, ControlError> {
    PoseGains::new(kp, kp.map(f64::sqrt))
}

/// Pose tracking error with angles wrapped to `(-pi, pi]`.
pub fn pose_error(reference: &Vector5<f64>, actual: &Vector5<f64>) -> Vector5<f64> {
    let mut e = reference - actual;
    for i in ANGULAR {
        e[i] = wrap_angle(e[i]);
    }
    e
}

pub fn pd_accel(
    reference: &Vector5<f64>,
    reference_rate: &Vector5<f64>,
    pose: &Vector5<f64>,
    rate: &Vector5<f64>,
    gains: &PoseGains,
) -> Vector5<f64> {
    gains.kp.component_mul(&pose_error(reference, pose)) + gains.kd.component_mul(&(reference_rate - rate))
}
