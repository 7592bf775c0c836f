//! Configuration types and the parallelogram loop-closure map.
//!
//! Velocity layout of the spanning tree (16): base linear velocity (world),
//! base angular velocity (world), then `q1..q10` rates. The closed-loop
//! layout (12) keeps the base and the independent joints
//! `(q1, q5, q4, q6, q10, q9)`.

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, Vector3, Vector6};

use crate::scalar::{lit, Real};

pub const TREE_DOF: usize = 16;
pub const MINIMAL_DOF: usize = 12;
pub const ACTUATED: usize = 6;

pub type TreeVector<T> = SVector<T, TREE_DOF>;
pub type MinimalVector<T> = SVector<T, MINIMAL_DOF>;
pub type LoopJacobian<T> = SMatrix<T, TREE_DOF, MINIMAL_DOF>;
pub type SelectionMatrix<T> = SMatrix<T, ACTUATED, TREE_DOF>;

/// Independent joint coordinates in closed-loop order, as `q` numbers.
pub const INDEPENDENT_JOINTS: [usize; 6] = [1, 5, 4, 6, 10, 9];

/// Velocity index of `q_k` in the spanning-tree vector.
#[inline]
pub const fn tree_index(k: usize) -> usize {
    5 + k
}

/// Velocity index of `q_k` in the closed-loop vector, if `q_k` is independent.
pub fn minimal_index(k: usize) -> Option<usize> {
    INDEPENDENT_JOINTS.iter().position(|&j| j == k).map(|i| 6 + i)
}

/// Spanning-tree configuration `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfiguration<T: Real> {
    pub position: Vector3<T>,
    pub rotation: Rotation3<T>,
    /// `q1..q10` (index `k - 1`).
    pub joints: SVector<T, 10>,
}

/// Independent closed-loop configuration `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration<T: Real> {
    pub position: Vector3<T>,
    pub rotation: Rotation3<T>,
    /// `(q1, q5, q4, q6, q10, q9)`.
    pub joints: Vector6<T>,
}

/// Closed-loop state `(y, u_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalState<T: Real> {
    pub config: Configuration<T>,
    pub velocity: MinimalVector<T>,
}

/// Spanning-tree state `(q, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTreeState<T: Real> {
    pub config: TreeConfiguration<T>,
    pub velocity: TreeVector<T>,
}

/// `exp(t * [omega]x)` with a real rotation rate and a (possibly dual) time.
pub(crate) fn exp_so3<T: Real>(omega: &Vector3<f64>, t: T) -> Matrix3<T> {
    let theta = omega.norm();
    if theta == 0.0 {
        return Matrix3::identity();
    }
    let k = omega.cross_matrix().map(lit::<T>);
    let th: T = lit(theta);
    let a = (th * t).sin() / th;
    let b = (T::one() - (th * t).cos()) / (th * th);
    Matrix3::identity() + k * a + k * k * b
}

impl<T: Real> Configuration<T> {
    pub fn new(position: Vector3<T>, rotation: Rotation3<T>, joints: Vector6<T>) -> Self {
        Self {
            position,
            rotation,
            joints,
        }
    }

    /// Joint value of `q_k` after loop-closure expansion.
    pub fn joint(&self, k: usize) -> T {
        expand_joints(&self.joints)[k - 1]
    }
}

impl Configuration<f64> {
    /// Moves along constant velocity `u` for time `t`: base position and
    /// joints linearly, base rotation by the world-frame exponential map.
    pub fn retract<D: Real>(&self, u: &MinimalVector<f64>, t: D) -> Configuration<D> {
        let omega = Vector3::new(u[3], u[4], u[5]);
        let rot = exp_so3(&omega, t) * self.rotation.matrix().map(lit::<D>);
        Configuration {
            position: Vector3::from_fn(|i, _| lit::<D>(self.position[i]) + lit::<D>(u[i]) * t),
            rotation: Rotation3::from_matrix_unchecked(rot),
            joints: Vector6::from_fn(|i, _| lit::<D>(self.joints[i]) + lit::<D>(u[6 + i]) * t),
        }
    }

    /// Identity-typed copy in another scalar.
    pub fn lift<D: Real>(&self) -> Configuration<D> {
        self.retract(&MinimalVector::zeros(), D::zero())
    }
}

impl TreeConfiguration<f64> {
    pub fn retract<D: Real>(&self, u: &TreeVector<f64>, t: D) -> TreeConfiguration<D> {
        let omega = Vector3::new(u[3], u[4], u[5]);
        let rot = exp_so3(&omega, t) * self.rotation.matrix().map(lit::<D>);
        TreeConfiguration {
            position: Vector3::from_fn(|i, _| lit::<D>(self.position[i]) + lit::<D>(u[i]) * t),
            rotation: Rotation3::from_matrix_unchecked(rot),
            joints: SVector::from_fn(|i, _| lit::<D>(self.joints[i]) + lit::<D>(u[6 + i]) * t),
        }
    }

    pub fn lift<D: Real>(&self) -> TreeConfiguration<D> {
        self.retract(&TreeVector::zeros(), D::zero())
    }
}

fn expand_joints<T: Real>(y: &Vector6<T>) -> SVector<T, 10> {
    let (q1, q5, q4, q6, q10, q9) = (y[0], y[1], y[2], y[3], y[4], y[5]);
    SVector::from([q1, q5, -q5, q4, q5, q6, q10, -q10, q9, q10])
}

/// Loop-closure function `q = gamma(y)`: copies the base pose and applies
/// `q2 = q5, q3 = -q5, q7 = q10, q8 = -q10`.
pub fn expand_coordinates<T: Real>(y: &Configuration<T>) -> TreeConfiguration<T> {
    TreeConfiguration {
        position: y.position,
        rotation: y.rotation,
        joints: expand_joints(&y.joints),
    }
}

/// Picks the independent coordinates out of a spanning-tree configuration.
pub fn extract_independent<T: Real>(q: &TreeConfiguration<T>) -> Configuration<T> {
    let j = &q.joints;
    Configuration {
        position: q.position,
        rotation: q.rotation,
        joints: Vector6::new(j[0], j[4], j[3], j[5], j[9], j[8]),
    }
}

/// `G = d gamma / d y`. Constant for the parallelogram closure; the
/// configuration argument is kept for interface symmetry.
pub fn loop_jacobian<T: Real>(_y: &Configuration<T>) -> LoopJacobian<T> {
    constant_loop_jacobian()
}

pub fn constant_loop_jacobian<T: Real>() -> LoopJacobian<T> {
    let mut g = LoopJacobian::<T>::zeros();
    for i in 0..6 {
        g[(i, i)] = T::one();
    }
    let rows: [(usize, usize, f64); 10] = [
        (1, 1, 1.0),
        (2, 5, 1.0),
        (3, 5, -1.0),
        (4, 4, 1.0),
        (5, 5, 1.0),
        (6, 6, 1.0),
        (7, 10, 1.0),
        (8, 10, -1.0),
        (9, 9, 1.0),
        (10, 10, 1.0),
    ];
    for (k, independent, sign) in rows {
        let col = minimal_index(independent).expect("independent joint");
        g[(tree_index(k), col)] = lit(sign);
    }
    g
}

/// Spanning-tree state consistent with a closed-loop state.
pub fn expand_state<T: Real>(s: &MinimalState<T>) -> SpanningTreeState<T> {
    SpanningTreeState {
        config: expand_coordinates(&s.config),
        velocity: constant_loop_jacobian::<T>() * s.velocity,
    }
}

/// Selection matrix `S` (6x16): row `i` has a single one at the velocity
/// index of the joint driven by `tau_{i+1}`.
pub fn selection_matrix<T: Real>(actuated: &[usize; 6]) -> SelectionMatrix<T> {
    let mut s = SelectionMatrix::<T>::zeros();
    for (row, &k) in actuated.iter().enumerate() {
        s[(row, tree_index(k))] = T::one();
    }
    s
}

/// Re-orthonormalises a rotation matrix (polar projection via SVD).
pub fn orthonormalize(r: &Matrix3<f64>) -> Rotation3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut m = u * vt;
    if m.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        m = u2 * vt;
    }
    Rotation3::from_matrix_unchecked(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> Configuration<f64> {
        Configuration::new(
            Vector3::new(0.1, -0.2, 0.3),
            Rotation3::from_euler_angles(0.1, -0.2, 0.7),
            Vector6::new(-0.9, 1.7, 0.4, -1.0, 1.9, -0.3),
        )
    }

    #[test]
    fn zero_joints_expand_to_zero() {
        let y = Configuration::new(Vector3::zeros(), Rotation3::identity(), Vector6::zeros());
        assert_eq!(expand_coordinates(&y).joints, SVector::<f64, 10>::zeros());
    }

    #[test]
    fn parallelogram_identities() {
        let mut y = sample_config();
        y.joints[1] = 0.3;
        let q = expand_coordinates(&y);
        assert_eq!(q.joints[1], 0.3);
        assert_eq!(q.joints[2], -0.3);
        assert_eq!(q.joints[4], 0.3);
        assert_eq!(q.joints[6], q.joints[9]);
        assert_eq!(q.joints[7], -q.joints[9]);
        assert_eq!(extract_independent(&q), y);
        assert_eq!(q.position, y.position);
        assert_eq!(q.rotation, y.rotation);
    }

    #[test]
    fn loop_jacobian_structure() {
        let g = loop_jacobian(&sample_config());
        assert_eq!(g.fixed_view::<6, 6>(0, 0).into_owned(), SMatrix::<f64, 6, 6>::identity());
        // column of q5
        let c = minimal_index(5).unwrap();
        for k in 1..=10 {
            let expected = match k {
                2 | 5 => 1.0,
                3 => -1.0,
                _ => 0.0,
            };
            assert_eq!(g[(tree_index(k), c)], expected, "row q{k}");
        }
        for k in 1..=10 {
            let row = g.row(tree_index(k));
            assert_eq!(row.iter().filter(|v| **v != 0.0).count(), 1);
            assert_eq!(row.iter().map(|v| v.abs()).sum::<f64>(), 1.0);
        }
        assert_eq!(g.rank(1e-12), 12);
    }

    #[test]
    fn loop_jacobian_matches_central_differences() {
        let y = sample_config();
        let g = loop_jacobian(&y);
        let u = MinimalVector::from_fn(|i, _| 0.3 * (i as f64 + 1.0).sin());
        let h = 1e-6;
        let qp = expand_coordinates(&y.retract(&u, h));
        let qm = expand_coordinates(&y.retract(&u, -h));
        let du = g * u;
        for i in 0..10 {
            let fd = (qp.joints[i] - qm.joints[i]) / (2.0 * h);
            assert!((fd - du[6 + i]).abs() < 1e-6);
        }
        let fdp = (qp.position - qm.position) / (2.0 * h);
        assert!((fdp - du.fixed_rows::<3>(0)).norm() < 1e-6);
    }

    #[test]
    fn constraint_forces_are_annihilated() {
        // Cut-joint constraint rows: q2 - q5, q3 + q5, q7 - q10, q8 + q10.
        let g = constant_loop_jacobian::<f64>();
        let pairs = [(2, 5, -1.0), (3, 5, 1.0), (7, 10, -1.0), (8, 10, 1.0)];
        for (a, b, s) in pairs {
            let mut tau = TreeVector::<f64>::zeros();
            tau[tree_index(a)] = 2.5;
            tau[tree_index(b)] = 2.5 * s;
            assert!((g.transpose() * tau).norm() < 1e-15);
        }
    }

    #[test]
    fn selection_has_one_entry_per_row() {
        let s = selection_matrix::<f64>(&[1, 5, 4, 6, 10, 9]);
        for r in 0..6 {
            assert_eq!(s.row(r).sum(), 1.0);
        }
        assert_eq!(s[(1, tree_index(5))], 1.0);
    }

    #[test]
    fn orthonormalize_restores_rotation() {
        let r = Rotation3::from_euler_angles(0.3, 0.2, -1.0).into_inner();
        let noisy = r + Matrix3::from_fn(|i, j| 1e-6 * ((i * 3 + j) as f64).cos());
        let fixed = orthonormalize(&noisy);
        let m = fixed.matrix();
        assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-14);
        assert!((m.determinant() - 1.0).abs() < 1e-14);
        assert!((m - r).norm() < 1e-5);
    }
}
