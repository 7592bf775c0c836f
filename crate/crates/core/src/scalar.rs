//! Scalar abstraction shared by every numerical module.
//!
//! All kinematics, dynamics and solver code is written against [`Real`], so
//! the same routines run on `f64`, `f32`, and the forward-mode dual numbers
//! used to differentiate the kinematic maps.

use nalgebra::RealField;

/// A copyable real field. Implemented for `f32`, `f64` and the `num-dual`
/// number types.
pub trait Real: RealField + Copy {}

impl<T: RealField + Copy> Real for T {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Lossy conversion back to `f64` (drops dual parts).
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_subset().unwrap_or(f64::NAN)
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut w = a % two_pi;
    if w > T::pi() {
        w -= two_pi;
    } else if w <= -T::pi() {
        w += two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_half_open() {
        assert!((wrap_angle(std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-15);
        assert!((wrap_angle(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-15);
        assert!((wrap_angle(6.2_f64) - (6.2 - 2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!((wrap_angle(0.3_f32) - 0.3).abs() < 1e-7);
    }
}
