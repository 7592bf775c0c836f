mod common;

use nalgebra::{DMatrix, Matrix4, Vector2, Vector4, Vector5};
use proptest::prelude::*;
use rand::Rng;
use wbc_core::robot_model::tasks::{task_jacobians, Task, TASK_PRIORITY};
use wbc_core::robot_model::{stance::flat_stance, MinimalState, MinimalVector};
use wbc_core::task_control::*;
use wbc_core::Robot;

const G: f64 = 9.81;

fn to_dyn(m: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(4, 4, m.as_slice())
}

/// Stabilizing CARE solution from the stable invariant subspace of the
/// Hamiltonian, extracted with the Newton iteration for the matrix sign.
fn care_by_sign_function(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-(b * b.transpose()) / r));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let mut w = h;
    for _ in 0..100 {
        let inv = w.clone().try_inverse().unwrap();
        let c = (inv.determinant().abs() / w.determinant().abs()).powf(1.0 / (4 * n) as f64);
        let next = (&w * c + inv / c) * 0.5;
        let done = (&next - &w).norm() < 1e-13 * next.norm();
        w = next;
        if done {
            break;
        }
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let p = lhs.svd(true, true).solve(&rhs, 1e-14).unwrap();
    (&p + p.transpose()) * 0.5
}

fn closed_loop(rz: f64, k: &nalgebra::RowVector4<f64>) -> Matrix4<f64> {
    let (a, b) = balance_model(rz, G);
    a - b * k
}

fn spectral_abscissa(m: &Matrix4<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn pd_examples() {
    let g = default_gains(Vector5::repeat(100.0)).unwrap();
    let z = Vector5::zeros();
    assert_eq!(pd_accel(&z, &z, &z, &z, &g), z);

    let reference = Vector5::new(0.0, 0.30, 0.0, 0.0, 0.0);
    let pose = Vector5::new(0.0, 0.25, 0.0, 0.0, 0.0);
    let a = pd_accel(&reference, &z, &pose, &z, &g);
    assert!((a[1] - 5.0).abs() < 1e-12);

    let e = pose_error(&Vector5::new(0.0, 0.0, 0.0, 0.0, 3.1), &Vector5::new(0.0, 0.0, 0.0, 0.0, -3.1));
    assert!((e[4] + (2.0 * std::f64::consts::PI - 6.2)).abs() < 1e-12);
    // Height is not an angle and must not wrap.
    let e = pose_error(&Vector5::new(0.0, 7.0, 0.0, 0.0, 0.0), &z);
    assert_eq!(e[1], 7.0);
}

#[test]
fn default_gain_rule() {
    let g = default_gains(Vector5::new(100.0, 1.0, 25.0, 400.0, 50.0)).unwrap();
    assert_eq!(g.kd[0], 10.0);
    assert_eq!(g.kd[1], 1.0);
    assert_eq!(g.kd[2], 5.0);
    assert_eq!(g.kd[3], 20.0);
    assert!(default_gains(Vector5::new(1.0, 0.0, 1.0, 1.0, 1.0)).is_err());
    assert_eq!(PoseGains::default().kp, Vector5::from(DEFAULT_KP));
}

#[test]
fn nominal_care_residual_and_hamiltonian_oracle() {
    let w = LqrWeights::default();
    let sol = lqr_gain(0.25, &w, G).unwrap();
    assert!(sol.residual < 1e-8, "residual {}", sol.residual);
    assert!((sol.p - sol.p.transpose()).norm() < 1e-12);
    assert!(sol.p.symmetric_eigenvalues().min() > 0.0);

    let (a, b) = balance_model(0.25, G);
    let p = care_by_sign_function(&to_dyn(&a), &DMatrix::from_column_slice(4, 1, b.as_slice()), &to_dyn(&w.q), w.r);
    let k_oracle = DMatrix::from_column_slice(1, 4, b.as_slice()) * &p / w.r;
    for i in 0..4 {
        assert!((sol.k[i] - k_oracle[i]).abs() < 1e-6 * (1.0 + k_oracle[i].abs()), "{} vs {}", sol.k, k_oracle);
    }
}

#[test]
fn care_on_random_systems_matches_oracle() {
    let mut rng = common::rng(11);
    for _ in 0..20 {
        let n = 3;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let r = DMatrix::from_element(1, 1, 0.5);
        let sol = solve_care(&a, &b, &q, &r).unwrap();
        let oracle = care_by_sign_function(&a, &b, &q, 0.5);
        assert!((&sol.p - &oracle).norm() < 1e-6 * (1.0 + oracle.norm()));
    }
}

#[test]
fn literal_error_sign_is_unstable() {
    let sol = lqr_gain(0.25, &LqrWeights::default(), G).unwrap();
    assert!(spectral_abscissa(&closed_loop(0.25, &sol.k)) < 0.0);
    // des r_ddot = -K(ref - state) = +K(state - ref).
    assert!(spectral_abscissa(&closed_loop(0.25, &(-sol.k))) > 0.0);
}

/// Exact zero-order discretization of the closed loop.
fn simulate(rz: f64, k: &nalgebra::RowVector4<f64>, x0: Vector4<f64>, dt: f64, steps: usize) -> Vec<Vector4<f64>> {
    let phi = (closed_loop(rz, k) * dt).exp();
    let mut xs = vec![x0];
    for _ in 0..steps {
        let x = phi * xs.last().unwrap();
        xs.push(x);
    }
    xs
}

#[test]
fn offset_settles_within_three_seconds_from_five_centimetres() {
    let sol = lqr_gain(0.25, &LqrWeights::default(), G).unwrap();
    let dt = 1e-3;
    let reference = Vector4::zeros();
    // Drive the law itself rather than the closed-form matrix.
    let (a, b) = balance_model(0.25, G);
    let mut x = Vector4::new(0.05, 0.0, 0.0, 0.0);
    let band = 0.02 * 0.05;
    let mut last_outside = 0.0;
    for i in 0..10_000 {
        let u = balance_accel(&sol.k, &reference, &x);
        // RK4 with the control held over the step.
        let f = |x: &Vector4<f64>| a * x + b * u;
        let k1 = f(&x);
        let k2 = f(&(x + k1 * (dt / 2.0)));
        let k3 = f(&(x + k2 * (dt / 2.0)));
        let k4 = f(&(x + k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if x[0].abs() > band {
            last_outside = (i + 1) as f64 * dt;
        }
    }
    assert!(x.norm() < 1e-6);
    assert!(last_outside < 3.0, "settling time {last_outside}");
}

#[test]
fn balance_law_examples() {
    let k = lqr_gain(0.25, &LqrWeights::default(), G).unwrap().k;
    let r = Vector4::new(0.01, 0.0, 0.3, 0.0);
    assert_eq!(balance_accel(&k, &r, &r), 0.0);
    let e = Vector4::new(0.02, -0.1, 0.05, 0.3);
    let a1 = balance_accel(&k, &Vector4::zeros(), &e);
    let a2 = balance_accel(&k, &Vector4::zeros(), &(e * 2.0));
    assert!((a2 - 2.0 * a1).abs() < 1e-12);
}

#[test]
fn invalid_design_inputs() {
    let w = LqrWeights::default();
    assert!(matches!(lqr_gain(0.0, &w, G), Err(ControlError::InvalidHeight(_))));
    assert!(matches!(lqr_gain(0.25, &LqrWeights::diagonal([1.0; 4], 0.0), G), Err(ControlError::SingularWeight)));
}

#[test]
fn gain_schedule_resolves_only_beyond_threshold() {
    let mut c = BalanceController::new(LqrWeights::default(), G);
    let k0 = c.gain(0.25).unwrap().k;
    c.gain(0.259).unwrap();
    assert_eq!(c.solves(), 1);
    let k1 = c.gain(0.2611).unwrap().k;
    assert_eq!(c.solves(), 2);
    assert_ne!(k0, k1);
}

#[test]
fn centroidal_residual_examples() {
    let m = 12.0;
    let r0 = balance_constraints_residual(&Vector2::new(0.0, -m * G), &Vector2::new(0.0, 0.25), m, G);
    assert_eq!(r0, Vector2::zeros());
    let a = balance_constraints_residual(&Vector2::new(3.0, -m * G), &Vector2::new(0.0, 0.25), m, G);
    let b = balance_constraints_residual(&Vector2::new(6.0, -m * G), &Vector2::new(0.0, 0.25), m, G);
    assert!((b[1] - 2.0 * a[1]).abs() < 1e-12);
}

#[test]
fn task_stack_layout_and_round_trip() {
    let robot = Robot::default_diablo();
    let cfg = flat_stance(&robot, 0.25).unwrap();
    let state = MinimalState { config: cfg, velocity: MinimalVector::from_fn(|i, _| 0.05 * i as f64) };
    let n = [nalgebra::Vector3::z(); 2];
    let jac = task_jacobians(&robot, &state, &n).unwrap();
    let pose = Vector5::new(0.1, -0.2, 0.3, -0.4, 0.5);
    let stack = assemble_task_stack(&pose, 0.7, &jac);
    let order: Vec<Task> = stack.levels.iter().map(|l| l.task).collect();
    assert_eq!(order, vec![Task::Height, Task::Pitch, Task::Balance, Task::Roll, Task::Split, Task::Yaw]);
    assert_eq!(order, TASK_PRIORITY.to_vec());
    for l in &stack.levels {
        assert_eq!(l.level.a.ncols(), 22);
        assert!(l.level.a.columns(12, 10).iter().all(|&v| v == 0.0));
        assert_eq!(l.level.a.columns(0, 12), DMatrix::from_row_slice(1, 12, jac.row(l.task).as_slice()));
        assert_eq!(l.level.b[0], l.desired - jac.bias_of(l.task));
    }
    let (p, b) = stack.unstack();
    assert_eq!(p, pose);
    assert_eq!(b, 0.7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lqr_is_stabilizing(rz in 0.1..0.4f64, q in prop::array::uniform4(0.01..1000.0f64), r in 0.01..100.0f64) {
        let sol = lqr_gain(rz, &LqrWeights::diagonal(q, r), G).unwrap();
        prop_assert!(sol.residual < 1e-8 * (1.0 + sol.p.norm()));
        prop_assert!(spectral_abscissa(&closed_loop(rz, &sol.k)) < 0.0);
        prop_assert!(sol.p.symmetric_eigenvalues().min() >= -1e-9);
    }

    #[test]
    fn pd_is_homogeneous(e in prop::array::uniform5(-1.0..1.0f64), de in prop::array::uniform5(-1.0..1.0f64), c in -1.5..1.5f64) {
        let g = PoseGains::default();
        let z = Vector5::zeros();
        let e = Vector5::from(e);
        let de = Vector5::from(de);
        let a = pd_accel(&e, &de, &z, &z, &g);
        let b = pd_accel(&(e * c), &(de * c), &z, &z, &g);
        prop_assert!((b - a * c).norm() < 1e-9);
    }

    #[test]
    fn lyapunov_decreases(x0 in prop::array::uniform4(-1.0..1.0f64), scale in 0.0..0.1f64) {
        let sol = lqr_gain(0.25, &LqrWeights::default(), G).unwrap();
        let x0 = Vector4::from(x0);
        prop_assume!(x0.norm() > 1e-9);
        let x0 = x0.normalize() * scale;
        let xs = simulate(0.25, &sol.k, x0, 1e-3, 3000);
        let v = |x: &Vector4<f64>| (x.transpose() * sol.p * x)[0];
        for w in xs.windows(2) {
            prop_assert!(v(&w[1]) <= v(&w[0]) + 1e-18);
        }
    }
}
