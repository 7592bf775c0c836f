//! Standing configurations on level ground.

use nalgebra::{Matrix2, Rotation3, Vector2, Vector3, Vector6};

use super::state::{expand_coordinates, Configuration};
use super::tasks::task_coordinates;
use super::{ModelError, Robot};

/// Symmetric, level-base stance on the plane `z = 0` with base height
/// `height` above the contact midpoint and the CoM directly above it.
///
/// Solves for the common hip and knee-drive angles with Newton iterations
/// starting from a bent-knee guess.
pub fn flat_stance(robot: &Robot, height: f64) -> Result<Configuration<f64>, ModelError> {
    let up = [Vector3::z(); 2];
    let build = |x: &Vector2<f64>| {
        let joints = Vector6::new(x[0], x[1], 0.0, x[0], x[1], 0.0);
        let mut y = Configuration::new(Vector3::zeros(), Rotation3::identity(), joints);
        let c = task_coordinates(&robot.model, &expand_coordinates(&y), &up);
        y.position.z -= c.origin.z;
        y
    };
    let residual = |x: &Vector2<f64>| {
        let y = build(x);
        let c = task_coordinates(&robot.model, &expand_coordinates(&y), &up);
        Vector2::new(c.height - height, c.com_rel_x)
    };
    let mut x = Vector2::new(-0.9, 1.8);
    for _ in 0..50 {
        let r = residual(&x);
        if r.norm() < 1e-13 {
            return Ok(build(&x));
        }
        let h = 1e-7;
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            jac.set_column(k, &((residual(&xp) - residual(&xm)) / (2.0 * h)));
        }
        let step = jac
            .lu()
            .solve(&r)
            .ok_or_else(|| ModelError::Invalid(format!("no stance at height {height}")))?;
        x -= step;
    }
    if residual(&x).norm() < 1e-9 {
        Ok(build(&x))
    } else {
        Err(ModelError::Invalid(format!("stance solve did not converge for height {height}")))
    }
}
