use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3, Vector6};
use proptest::prelude::*;
use wbc_core::robot_model::description::JointKind;
use wbc_core::robot_model::kinematics::KinematicsError;
use wbc_core::robot_model::tasks::{ground_points, task_coordinates_on_ground, tree_task_row, Task, TASK_PRIORITY};
use wbc_core::robot_model::*;

fn robot() -> Robot {
    Robot::default_diablo()
}

fn config(p: [f64; 3], rpy: [f64; 3], j: [f64; 6]) -> Configuration<f64> {
    Configuration::new(
        Vector3::from(p),
        Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]),
        Vector6::from(j),
    )
}

fn sample() -> MinimalState<f64> {
    MinimalState {
        config: config([0.1, -0.05, 0.27], [0.08, -0.12, 0.6], [-1.0, 1.8, 0.4, -0.8, 2.0, -0.7]),
        velocity: MinimalVector::from_fn(|i, _| 0.4 * ((i as f64) * 1.7 + 0.3).sin()),
    }
}

fn tilted(a: f64, b: f64) -> Vector3<f64> {
    Vector3::new(a, b, 1.0).normalize()
}

/// Homogeneous transform built directly from the parameter file values.
fn homogeneous(rot: &Matrix3<f64>, p: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(p);
    m
}

fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.cross_matrix();
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

fn rpy_matrix(r: [f64; 3]) -> Matrix3<f64> {
    rodrigues(&Vector3::z(), r[2]) * rodrigues(&Vector3::y(), r[1]) * rodrigues(&Vector3::x(), r[0])
}

fn reference_body_positions(desc: &RobotDescription, y: &Configuration<f64>) -> Vec<Vector3<f64>> {
    let q = expand_coordinates(y);
    let mut world: Vec<Matrix4<f64>> = Vec::new();
    for b in &desc.bodies {
        let t = match b.joint {
            JointKind::Floating => homogeneous(y.rotation.matrix(), &y.position),
            JointKind::Revolute => {
                let parent = desc.bodies.iter().position(|p| Some(&p.name) == b.parent.as_ref()).unwrap();
                let place = homogeneous(&rpy_matrix(b.rpy), &Vector3::from(b.origin));
                let angle = q.joints[b.coordinate.unwrap() - 1];
                let joint = homogeneous(&rodrigues(&Vector3::from(b.axis), angle), &Vector3::zeros());
                world[parent] * place * joint
            }
        };
        world.push(t);
    }
    world.iter().map(|t| t.fixed_view::<3, 1>(0, 3).into_owned()).collect()
}

#[test]
fn default_description_is_valid() {
    let d = RobotDescription::default_diablo();
    assert_eq!(d.bodies.len(), 11);
    assert!((d.total_mass() - 12.0).abs() < 1e-12);
    assert!((d.wheel_radius - 0.09).abs() < 1e-12);
}

#[test]
fn invalid_descriptions_are_rejected() {
    let bad_mass = DEFAULT_ROBOT_TOML.replacen("mass = 7.0", "mass = -7.0", 1);
    assert!(RobotDescription::from_toml_str(&bad_mass).is_err());
    let bad_inertia = DEFAULT_ROBOT_TOML.replacen(
        "inertia = [0.106, 0.066, 0.146, 0.0, 0.0, 0.0]",
        "inertia = [0.106, -0.066, 0.146, 0.0, 0.0, 0.0]",
        1,
    );
    assert!(RobotDescription::from_toml_str(&bad_inertia).is_err());
    let bad_act = DEFAULT_ROBOT_TOML.replacen("actuated = [1, 5, 4, 6, 10, 9]", "actuated = [1, 2, 4, 6, 10, 9]", 1);
    assert!(RobotDescription::from_toml_str(&bad_act).is_err());
}

#[test]
fn zero_pose_is_symmetric() {
    let r = robot();
    let y = config([0.0, 0.0, 0.5], [0.0; 3], [0.0; 6]);
    let kin = forward_kinematics(&r.model, &y);
    let [l, rr] = kin.wheel_centers(&r.model);
    assert!((l.x - rr.x).abs() < 1e-15 && (l.z - rr.z).abs() < 1e-15);
    assert!((l.y + rr.y).abs() < 1e-15);
    assert!((l.y - 0.2).abs() < 1e-12);
}

#[test]
fn base_translation_moves_every_body() {
    let r = robot();
    let y = sample().config;
    let mut moved = y.clone();
    let d = Vector3::new(0.3, -1.2, 0.05);
    moved.position += d;
    let a = forward_kinematics(&r.model, &y);
    let b = forward_kinematics(&r.model, &moved);
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        assert!((fb.position - fa.position - d).norm() < 1e-14);
    }
}

#[test]
fn contact_point_examples() {
    let r = robot();
    let flat = [Vector3::z(); 2];
    let y = config([0.0, 0.0, 0.0], [0.0; 3], [0.0; 6]);
    let kin = forward_kinematics(&r.model, &y);
    let centers = kin.wheel_centers(&r.model);
    let p = contact_points(&r.model, &y, &flat).unwrap();
    assert!((p[0] - (centers[0] - Vector3::new(0.0, 0.0, 0.09))).norm() < 1e-15);

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let n = Vector3::new(s, 0.0, s);
    let p = contact_points(&r.model, &y, &[n, n]).unwrap();
    assert!((p[1] - centers[1] + Vector3::new(0.09 * s, 0.0, 0.09 * s)).norm() < 1e-15);

    assert!(matches!(
        contact_points(&r.model, &y, &[Vector3::new(0.0, 0.0, 2.0), Vector3::z()]),
        Err(KinematicsError::NonUnitNormal(_))
    ));
    assert!(matches!(
        contact_points(&r.model, &y, &[Vector3::z(), -Vector3::z()]),
        Err(KinematicsError::DownwardNormal(_))
    ));
}

#[test]
fn stance_at_operating_height() {
    let r = robot();
    let y = flat_stance(&r, 0.25).unwrap();
    let state = MinimalState { config: y, velocity: MinimalVector::zeros() };
    let flat = [Vector3::z(); 2];
    let ts = task_state(&r, &state, &flat).unwrap();
    assert!((ts.height() - 0.25).abs() < 1e-12);
    assert!(ts.split().abs() < 1e-12);
    assert!(ts.roll().abs() < 1e-15 && ts.pitch().abs() < 1e-15);
    assert!(ts.wheel_separation.abs() < 1e-12);
    let cs = com_state(&r, &state, &flat).unwrap();
    assert!(cs.r.x.abs() < 1e-12);
    assert_eq!(cs.total_mass, r.description.bodies.iter().map(|b| b.mass).sum::<f64>());
    for p in ts.contacts {
        assert!(p.z.abs() < 1e-12);
    }
}

#[test]
fn height_row_is_dominated_by_base_vertical_velocity() {
    let r = robot();
    let state = MinimalState { config: flat_stance(&r, 0.25).unwrap(), velocity: MinimalVector::zeros() };
    let jac = task_jacobians(&r, &state, &[Vector3::z(); 2]).unwrap();
    let row = jac.row(Task::Height);
    assert!((row[2] - 1.0).abs() < 1e-12);
    assert!(row[0].abs() < 1e-12 && row[1].abs() < 1e-12);
}

fn pose_at(r: &Robot, y: &Configuration<f64>, n: &[Vector3<f64>; 2]) -> nalgebra::Vector5<f64> {
    task_state(r, &MinimalState { config: y.clone(), velocity: MinimalVector::zeros() }, n)
        .unwrap()
        .pose
}

/// Task pose with the contact points kept on the ground planes through `o`.
fn anchored_pose(r: &Robot, y: &Configuration<f64>, n: &[Vector3<f64>; 2], o: [Vector3<f64>; 2]) -> nalgebra::Vector5<f64> {
    task_coordinates_on_ground(&r.model, &expand_coordinates(y), n, Some(o)).pose()
}

#[test]
fn task_rates_match_finite_differences() {
    let r = robot();
    let s = sample();
    let n = [tilted(0.2, -0.1), tilted(-0.05, 0.15)];
    let ts = task_state(&r, &s, &n).unwrap();
    let h = 1e-6;
    let o = ground_points(&r, &s.config, &n);
    let fd = (anchored_pose(&r, &s.config.retract(&s.velocity, h), &n, o)
        - anchored_pose(&r, &s.config.retract(&s.velocity, -h), &n, o))
        / (2.0 * h);
    assert!((fd - ts.pose_rate).amax() < 1e-6, "{fd} vs {}", ts.pose_rate);
}

fn coords_at(r: &Robot, y: &Configuration<f64>, n: &[Vector3<f64>; 2], o: [Vector3<f64>; 2]) -> [f64; 6] {
    let c = task_coordinates_on_ground(&r.model, &expand_coordinates(y), n, Some(o));
    TASK_PRIORITY.map(|t| c.value(t))
}

#[test]
fn task_jacobians_match_finite_differences() {
    let r = robot();
    let s = sample();
    let n = [tilted(0.2, -0.1), tilted(-0.05, 0.15)];
    let jac = task_jacobians(&r, &s, &n).unwrap();
    let o = ground_points(&r, &s.config, &n);
    let h = 1e-6;
    let plus = coords_at(&r, &s.config.retract(&s.velocity, h), &n, o);
    let minus = coords_at(&r, &s.config.retract(&s.velocity, -h), &n, o);
    let h2 = 1e-4;
    let p2 = coords_at(&r, &s.config.retract(&s.velocity, h2), &n, o);
    let m2 = coords_at(&r, &s.config.retract(&s.velocity, -h2), &n, o);
    let c0 = coords_at(&r, &s.config, &n, o);
    for i in 0..6 {
        let rate = (jac.rows[i] * s.velocity)[0];
        let fd = (plus[i] - minus[i]) / (2.0 * h);
        assert!((rate - fd).abs() < 1e-5, "task {i}: {rate} vs {fd}");
        let acc = (p2[i] - 2.0 * c0[i] + m2[i]) / (h2 * h2);
        assert!((jac.bias[i] - acc).abs() < 1e-4, "task {i}: {} vs {acc}", jac.bias[i]);
    }
}

#[test]
fn closed_loop_rows_are_tree_rows_times_g() {
    let r = robot();
    let s = sample();
    let n = [Vector3::z(); 2];
    let jac = task_jacobians(&r, &s, &n).unwrap();
    let g = loop_jacobian(&s.config);
    for t in TASK_PRIORITY {
        let projected = tree_task_row(&r, &s, &n, t) * g;
        assert!((projected - jac.row(t)).amax() < 1e-12);
    }
}

#[test]
fn com_matches_brute_force_sum() {
    let r = robot();
    let s = sample();
    let cs = com_state(&r, &s, &[Vector3::z(); 2]).unwrap();
    let desc = &r.description;
    let kin = forward_kinematics(&r.model, &s.config);
    let mut acc = Vector3::zeros();
    let mut m = 0.0;
    for (b, frame) in desc.bodies.iter().zip(&kin.frames) {
        acc += b.mass * frame.transform_point(&Vector3::from(b.com));
        m += b.mass;
    }
    assert!((cs.com - acc / m).norm() < 1e-12);
}

fn arb_config() -> impl Strategy<Value = Configuration<f64>> {
    (
        prop::array::uniform3(-1.0..1.0f64),
        (-0.4..0.4f64, -0.4..0.4f64, -3.0..3.0f64),
        (-1.4..-0.4f64, 0.8..2.6f64, -3.0..3.0f64),
        (-1.4..-0.4f64, 0.8..2.6f64, -3.0..3.0f64),
    )
        .prop_map(|(p, (a, b, c), (q1, q5, q4), (q6, q10, q9))| {
            config(p, [a, b, c], [q1, q5, q4, q6, q10, q9])
        })
}

proptest! {
    #[test]
    fn fk_matches_homogeneous_chain(y in arb_config()) {
        let r = robot();
        let kin = forward_kinematics(&r.model, &y);
        let reference = reference_body_positions(&r.description, &y);
        for (f, p) in kin.frames.iter().zip(&reference) {
            prop_assert!((f.position - p).norm() < 1e-9);
        }
    }

    #[test]
    fn expand_then_extract_is_identity(y in arb_config()) {
        prop_assert_eq!(extract_independent(&expand_coordinates(&y)), y);
    }

    #[test]
    fn loop_jacobian_has_full_rank(y in arb_config()) {
        prop_assert_eq!(loop_jacobian(&y).rank(1e-10), 12);
    }

    #[test]
    fn yaw_rotation_only_shifts_yaw(y in arb_config(), psi in -1.0..1.0f64, a in -0.3..0.3f64, b in -0.3..0.3f64) {
        let r = robot();
        let n = [tilted(a, b), tilted(b, -a)];
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), psi);
        let mut turned = y.clone();
        turned.position = rz * y.position;
        turned.rotation = rz * y.rotation;
        let nt = [rz * n[0], rz * n[1]];
        let p0 = pose_at(&r, &y, &n);
        let p1 = pose_at(&r, &turned, &nt);
        for i in 0..4 {
            prop_assert!((p0[i] - p1[i]).abs() < 1e-9);
        }
        let dyaw = wbc_core::scalar::wrap_angle(p1[4] - p0[4] - psi);
        prop_assert!(dyaw.abs() < 1e-9);
    }

    #[test]
    fn contact_distance_is_wheel_radius(y in arb_config(), a in -0.5..0.5f64, b in -0.5..0.5f64) {
        let r = robot();
        let n = [tilted(a, b), tilted(-b, a)];
        let p = contact_points(&r.model, &y, &n).unwrap();
        let c = forward_kinematics(&r.model, &y).wheel_centers(&r.model);
        for i in 0..2 {
            prop_assert!(((c[i] - p[i]).norm() - 0.09).abs() < 1e-12);
        }
    }
}

#[test]
fn gimbal_proximity_is_flagged() {
    let r = robot();
    let mut s = sample();
    s.config.rotation = Rotation3::from_euler_angles(0.0, std::f64::consts::FRAC_PI_2, 0.0);
    let jac = task_jacobians(&r, &s, &[Vector3::z(); 2]).unwrap();
    assert!(jac.gimbal_warning);
}
