//! Initial poses standing on arbitrary terrain.

use nalgebra::{Rotation3, SMatrix, SVector, Vector3};
use wbc_core::robot_model::stance::flat_stance;
use wbc_core::robot_model::tasks::task_coordinates;
use wbc_core::robot_model::{expand_coordinates, Configuration, MinimalState, MinimalVector};
use wbc_core::Robot;

use crate::scenario::InitialPose;
use crate::terrain::Terrain;

/// Level base at `(x, y, yaw)`, both wheels on the ground, CoM above the
/// contact midpoint, equal leg angles and the requested task height.
pub fn terrain_stance(robot: &Robot, terrain: &Terrain, pose: &InitialPose) -> Result<MinimalState<f64>, String> {
    let flat = flat_stance(robot, pose.height).map_err(|e| e.to_string())?;
    let r = robot.model.wheel_radius;
    let ground = terrain.height(pose.x, pose.y);
    let mut cfg = Configuration::new(
        Vector3::new(pose.x, pose.y, flat.position.z + ground),
        Rotation3::from_euler_angles(0.0, 0.0, pose.yaw),
        flat.joints,
    );
    let residual = |c: &Configuration<f64>| -> SVector<f64, 5> {
        let kin = wbc_core::robot_model::kinematics::forward_kinematics(&robot.model, c);
        let contacts = kin.wheel_centers(&robot.model).map(|w| terrain.wheel_contact(&w, r));
        let normals = contacts.map(|k| k.normal);
        let tc = task_coordinates(&robot.model, &expand_coordinates(c), &normals);
        SVector::<f64, 5>::new(contacts[0].gap, contacts[1].gap, tc.height - pose.height, tc.com_rel_x, tc.split)
    };
    let apply = |c: &Configuration<f64>, d: &SVector<f64, 5>| {
        let mut n = c.clone();
        n.position.z += d[0];
        n.joints[0] += d[1];
        n.joints[1] += d[2];
        n.joints[3] += d[3];
        n.joints[4] += d[4];
        n
    };
    for _ in 0..100 {
        let f = residual(&cfg);
        if f.amax() < 1e-12 {
            return Ok(MinimalState { config: cfg, velocity: MinimalVector::zeros() });
        }
        let mut jac = SMatrix::<f64, 5, 5>::zeros();
        let h = 1e-7;
        for k in 0..5 {
            let mut d = SVector::<f64, 5>::zeros();
            d[k] = h;
            let fp = residual(&apply(&cfg, &d));
            d[k] = -h;
            let fm = residual(&apply(&cfg, &d));
            jac.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        let step = jac.lu().solve(&(-f)).ok_or("stance Jacobian is singular")?;
        // Damp large steps so the legs stay in their working range.
        let scale = (0.2 / step.amax()).min(1.0);
        cfg = apply(&cfg, &(step * scale));
    }
    let f = residual(&cfg);
    if f.amax() < 1e-9 {
        Ok(MinimalState { config: cfg, velocity: MinimalVector::zeros() })
    } else {
        Err(format!("no stance found at height {} (residual {:.3e})", pose.height, f.amax()))
    }
}
