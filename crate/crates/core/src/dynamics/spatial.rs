//! Spatial vectors in the world frame, referred to the world origin and
//! ordered `(angular; linear)`.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::scalar::Real;

pub fn angular<T: Real>(v: &Vector6<T>) -> Vector3<T> {
    v.fixed_rows::<3>(0).into_owned()
}

pub fn linear<T: Real>(v: &Vector6<T>) -> Vector3<T> {
    v.fixed_rows::<3>(3).into_owned()
}

pub fn join<T: Real>(ang: &Vector3<T>, lin: &Vector3<T>) -> Vector6<T> {
    Vector6::new(ang.x, ang.y, ang.z, lin.x, lin.y, lin.z)
}

/// Motion cross product `v x m`.
pub fn cross_motion<T: Real>(v: &Vector6<T>, m: &Vector6<T>) -> Vector6<T> {
    let (w, vo) = (angular(v), linear(v));
    let (mw, mv) = (angular(m), linear(m));
    join(&w.cross(&mw), &(w.cross(&mv) + vo.cross(&mw)))
}

/// Force cross product `v x* f`.
pub fn cross_force<T: Real>(v: &Vector6<T>, f: &Vector6<T>) -> Vector6<T> {
    let (w, vo) = (angular(v), linear(v));
    let (n, fl) = (angular(f), linear(f));
    join(&(w.cross(&n) + vo.cross(&fl)), &w.cross(&fl))
}

/// Spatial inertia about the world origin of a body with mass `m`, world
/// CoM `c` and world-frame rotational inertia `ic` about the CoM.
pub fn spatial_inertia<T: Real>(m: T, c: &Vector3<T>, ic: &Matrix3<T>) -> Matrix6<T> {
    let cx = c.cross_matrix();
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(ic - cx * cx * m));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(cx * m));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-cx * m));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * m));
    out
}

/// Motion subspace column of a revolute joint with world axis `a` through
/// the world point `p`.
pub fn revolute_column<T: Real>(a: &Vector3<T>, p: &Vector3<T>) -> Vector6<T> {
    join(a, &p.cross(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inertia_gives_kinetic_energy_of_point_mass() {
        let c = Vector3::new(0.3, -0.2, 0.5);
        let i = spatial_inertia(2.0_f64, &c, &Matrix3::zeros());
        let w = Vector3::new(0.1, 0.7, -0.4);
        let vo = Vector3::new(1.0, 0.0, 2.0);
        let v = join(&w, &vo);
        let vc = vo + w.cross(&c);
        let ke = 0.5 * (v.transpose() * i * v)[0];
        assert!((ke - 0.5 * 2.0 * vc.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn cross_products_are_dual() {
        let v = Vector6::new(0.1_f64, 0.2, -0.3, 0.5, -0.1, 0.4);
        let m = Vector6::new(-0.7, 0.3, 0.2, 0.1, 0.9, -0.5);
        let f = Vector6::new(0.4, -0.6, 0.8, -0.2, 0.3, 0.1);
        let lhs = f.dot(&cross_motion(&v, &m));
        let rhs = -cross_force(&v, &f).dot(&m);
        assert!((lhs - rhs).abs() < 1e-15);
    }
}
