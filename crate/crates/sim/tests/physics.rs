use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use wbc_core::dynamics::closed_loop_dynamics;
use wbc_core::robot_model::kinematics::forward_kinematics;
use wbc_core::robot_model::{MinimalState, MinimalVector, RobotDescription};
use wbc_core::Robot;
use wbc_sim::physics::{apply_block_impact, block_impulse, ContactMode, SimConfig};
use wbc_sim::scenario::InitialPose;
use wbc_sim::stance::terrain_stance;
use wbc_sim::{Simulator, Terrain};

fn stance(robot: &Robot, terrain: &Terrain, x: f64) -> MinimalState<f64> {
    let pose = InitialPose { x, y: 0.0, yaw: 0.0, height: 0.25 };
    terrain_stance(robot, terrain, &pose).unwrap()
}

fn frictionless_flat() -> Terrain {
    let mut t = Terrain::flat();
    t.friction = 0.0;
    t
}

/// Torques and contact forces with `A tau + W F = C` at rest, least squares.
fn holding_torques(sim: &Simulator, state: &MinimalState<f64>) -> ([f64; 6], Vec<f64>, f64) {
    let normals = sim.true_normals(state);
    let d = closed_loop_dynamics(&sim.robot, state, &normals).unwrap();
    let a = d.actuation_map();
    let w = d.contact_map();
    let m = DMatrix::from_fn(12, 10, |i, j| if j < 6 { a[(i, j)] } else { w[(i, j - 6)] });
    let b = DVector::from_iterator(12, d.c.iter().copied());
    let x = m.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    let residual = (&m * &x - &b).amax();
    let tau = [x[0], x[1], x[2], x[3], x[4], x[5]];
    (tau, x.iter().skip(6).copied().collect(), residual)
}

#[test]
fn holding_torques_give_zero_acceleration() {
    let robot = Robot::default_diablo();
    for terrain in [Terrain::flat(), Terrain::slope(15.0, -5.0)] {
        let sim = Simulator::new(&robot, terrain.clone(), SimConfig::default());
        let state = stance(&robot, &terrain, 0.0);
        let (tau, _, residual) = holding_torques(&sim, &state);
        assert!(residual < 1e-9, "no static solution: {residual:e}");
        let acc = sim.forward_dynamics(&state, &tau, &[], 0.0).unwrap();
        assert!(acc.udot.norm() < 1e-6, "|udot| = {:e}", acc.udot.norm());
    }
}

#[test]
fn static_normal_forces_carry_the_weight() {
    let robot = Robot::default_diablo();
    let sim = Simulator::new(&robot, Terrain::flat(), SimConfig::default());
    let state = stance(&robot, &Terrain::flat(), 0.0);
    let (tau, _, _) = holding_torques(&sim, &state);
    let acc = sim.forward_dynamics(&state, &tau, &[], 0.0).unwrap();
    let weight = robot.total_mass() * robot.gravity();
    let fz = acc.forces[2] + acc.forces[3];
    assert!((fz - weight).abs() < 0.5, "Fz = {fz}, mg = {weight}");
}

/// Standing on frictionless flat ground with `w` projected onto the rolling
/// constraints as initial velocity.
fn run_stance(robot: &Robot, w: &MinimalVector<f64>, dt: f64) -> (Simulator, MinimalState<f64>) {
    let terrain = frictionless_flat();
    let sim = Simulator::new(robot, terrain.clone(), SimConfig { dt, ..SimConfig::default() });
    let mut state = stance(robot, &terrain, 0.0);
    let d = closed_loop_dynamics(robot, &state, &sim.true_normals(&state)).unwrap();
    let j = d.j_xz();
    state.velocity = w - j.transpose() * ((j * j.transpose()).try_inverse().unwrap() * (j * w));
    (sim, state)
}

fn energy_drift(sim: &Simulator, state: MinimalState<f64>, duration: f64) -> (f64, f64) {
    let mut s = sim.initial(state);
    let e0 = s.audit.initial;
    let mut worst = 0.0f64;
    for _ in 0..(duration / sim.config.dt).round() as usize {
        sim.step(&mut s, &[0.0; 6], &[]).unwrap();
        worst = worst.max((sim.mechanical_energy(&s.state) - e0).abs());
    }
    (worst, e0)
}

fn weightless() -> Robot {
    let mut desc = RobotDescription::default_diablo();
    desc.gravity = 0.0;
    Robot::new(desc).unwrap()
}

#[test]
fn zero_torque_frictionless_energy_is_conserved() {
    // Without gravity the unactuated robot coasts instead of collapsing:
    // rolling, yawing and swinging its legs for the full second.
    let robot = weightless();
    let w = MinimalVector::from_column_slice(&[0.24, 0.06, 0.0, 0.15, -0.21, 0.36, 0.45, -0.6, 0.9, -0.3, 0.75, -0.9]);
    let (sim, state) = run_stance(&robot, &w, 1e-3);
    let (drift, e0) = energy_drift(&sim, state, 1.0);
    assert!(drift / e0 < 1e-3, "drift {drift:e} of {e0}");
}

#[test]
fn gravity_collapse_energy_error_is_first_order_in_dt() {
    // Semi-implicit Euler carries an O(dt) shadow-energy offset; the
    // dynamics themselves add nothing on top of it.
    let robot = Robot::default_diablo();
    let zero = MinimalVector::zeros();
    let drift = |dt: f64| {
        let (sim, state) = run_stance(&robot, &zero, dt);
        energy_drift(&sim, state, 0.15).0
    };
    let (a, b) = (drift(1e-3), drift(5e-4));
    assert!((a / b - 2.0).abs() < 0.05, "ratio {}", a / b);
}

#[test]
fn free_fall_follows_the_discrete_ballistic_law() {
    let robot = Robot::default_diablo();
    let g = robot.gravity();
    let state = stance(&robot, &Terrain::flat(), 0.0);
    let z0 = state.config.position.z;
    let run = |dt: f64| {
        let config = SimConfig { dt, contact: ContactMode::Free, ..SimConfig::default() };
        let sim = Simulator::new(&robot, Terrain::flat(), config);
        let mut s = sim.initial(state.clone());
        let n = (0.5 / dt).round() as usize;
        for _ in 0..n {
            sim.step(&mut s, &[0.0; 6], &[]).unwrap();
        }
        (s.state.config.position.z, n)
    };
    let (z, n) = run(1e-3);
    let t = n as f64 * 1e-3;
    // Semi-implicit Euler: z_n = z0 - g dt^2 n (n + 1) / 2.
    let discrete = z0 - 0.5 * g * t * (t + 1e-3);
    assert!((z - discrete).abs() < 1e-9, "{z} vs {discrete}");
    // First order against the continuous solution.
    let exact = z0 - 0.5 * g * t * t;
    let (z_half, _) = run(5e-4);
    let ratio = (z - exact).abs() / (z_half - exact).abs();
    assert!((ratio - 2.0).abs() < 0.01, "error ratio {ratio}");
}

#[test]
fn half_steps_agree_to_second_order() {
    let robot = Robot::default_diablo();
    let terrain = Terrain::flat();
    let state = stance(&robot, &terrain, 0.0);
    let tau = [0.3, -4.0, 0.5, 0.3, -4.0, 0.5];
    let gap = |dt: f64| {
        let full = Simulator::new(&robot, terrain.clone(), SimConfig { dt, projection: false, ..SimConfig::default() });
        let half = Simulator::new(&robot, terrain.clone(), SimConfig { dt: dt / 2.0, projection: false, ..SimConfig::default() });
        let mut a = full.initial(state.clone());
        let mut b = half.initial(state.clone());
        full.step(&mut a, &tau, &[]).unwrap();
        half.step(&mut b, &tau, &[]).unwrap();
        half.step(&mut b, &tau, &[]).unwrap();
        let (p, q) = (&a.state.config, &b.state.config);
        (p.position - q.position).norm() + (p.joints - q.joints).norm()
    };
    let (e1, e2) = (gap(1e-3), gap(5e-4));
    // From rest one step moves a dt^2 and two half steps 3/4 a dt^2.
    assert!(e1 < 1e-4, "{e1}");
    assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
}

#[test]
fn identical_inputs_give_bit_identical_trajectories() {
    let robot = Robot::default_diablo();
    let terrain = Terrain::slope(15.0, 0.3);
    let sim = Simulator::new(&robot, terrain.clone(), SimConfig::default());
    let run = || {
        let mut s = sim.initial(stance(&robot, &terrain, 0.0));
        let mut out = Vec::new();
        for k in 0..200 {
            let w = 0.3 * (k as f64 * 0.05).sin();
            sim.step(&mut s, &[w, -4.5, 1.0, -w, -4.5, 1.0], &[]).unwrap();
            out.extend(s.state.velocity.iter().map(|v| v.to_bits()));
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn rotation_stays_orthonormal() {
    let robot = Robot::default_diablo();
    let terrain = Terrain::flat();
    let sim = Simulator::new(&robot, terrain.clone(), SimConfig::default());
    let mut s = sim.initial(stance(&robot, &terrain, 0.0));
    s.state.velocity[3] = 0.3;
    s.state.velocity[5] = 1.5;
    for _ in 0..300 {
        sim.step(&mut s, &[0.5, -4.0, 2.0, -0.5, -4.0, -2.0], &[]).unwrap();
        let r = s.state.config.rotation.matrix();
        assert!((r.transpose() * r - nalgebra::Matrix3::identity()).amax() < 1e-9);
    }
}

#[test]
fn contact_drift_stays_below_a_millimetre_over_a_slope_foot() {
    let robot = Robot::default_diablo();
    let terrain = Terrain::slope(15.0, 0.3);
    let sim = Simulator::new(&robot, terrain.clone(), SimConfig::default());
    let mut s = sim.initial(stance(&robot, &terrain, 0.0));
    s.state.velocity[0] = 1.0;
    let mut worst = 0.0f64;
    for _ in 0..400 {
        let acc = sim.step(&mut s, &[0.0, -4.5, 0.0, 0.0, -4.5, 0.0], &[]).unwrap();
        worst = worst.max(acc.contacts.iter().map(|c| c.gap.abs()).fold(0.0, f64::max));
    }
    assert!(worst < 1e-3, "drift {worst}");
}

#[test]
fn nan_torque_leaves_state_untouched() {
    let robot = Robot::default_diablo();
    let terrain = Terrain::flat();
    let sim = Simulator::new(&robot, terrain.clone(), SimConfig::default());
    let mut s = sim.initial(stance(&robot, &terrain, 0.0));
    let before = s.state.clone();
    assert!(sim.step(&mut s, &[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0], &[]).is_err());
    assert_eq!(s.state.config.position, before.config.position);
    assert_eq!(s.state.velocity, before.velocity);
    assert_eq!(s.time, 0.0);
}

#[test]
fn block_impulse_of_nine_kilograms_from_055_metres() {
    let j = block_impulse(9.0, 0.55, 9.81);
    assert!((j / 9.0 - 3.285).abs() < 1e-3);
    assert!((j - 29.57).abs() < 0.01, "{j}");
    assert_eq!(block_impulse(9.0, 0.0, 9.81), 0.0);
}

#[test]
fn block_impact_transfers_the_impulse_over_one_step() {
    let dir = Vector3::new(-1.0, 0.0, -1.0);
    let f = apply_block_impact(9.0, 0.55, 9.81, &dir, Vector3::zeros(), 1e-3);
    assert!((f.force.norm() * 1e-3 - block_impulse(9.0, 0.55, 9.81)).abs() < 1e-9);
    assert!((f.force.normalize() - dir.normalize()).norm() < 1e-12);
}

#[test]
fn block_impact_moves_the_base() {
    let robot = Robot::default_diablo();
    let terrain = Terrain::flat();
    let sim = Simulator::new(&robot, terrain.clone(), SimConfig::default());
    let state = stance(&robot, &terrain, 0.0);
    let mut s = sim.initial(state.clone());
    let (tau, _, _) = holding_torques(&sim, &state);
    let hit = apply_block_impact(9.0, 0.55, robot.gravity(), &Vector3::new(-1.0, 0.0, 0.0), Vector3::zeros(), 1e-3);
    let com = |st: &MinimalState<f64>| forward_kinematics(&sim.robot.model, &st.config).center_of_mass(&sim.robot.model);
    let c0 = com(&s.state);
    sim.step(&mut s, &tau, &[hit]).unwrap();
    sim.step(&mut s, &tau, &[]).unwrap();
    assert!(com(&s.state).x < c0.x);
}

proptest! {
    #[test]
    fn impulse_is_linear_in_mass(m in 0.1f64..50.0, k in 0.1f64..10.0, h in 0.01f64..2.0) {
        let a = block_impulse(m, h, 9.81);
        let b = block_impulse(k * m, h, 9.81);
        prop_assert!((b - k * a).abs() <= 1e-9 * b.abs().max(1.0));
    }

    #[test]
    fn terrain_normals_match_the_height_gradient(x in -2.0f64..4.0, y in -0.5f64..0.5, angle in -30.0f64..30.0) {
        let t = Terrain::slope(angle, 0.5);
        let e = 1e-6;
        let hx = (t.height(x + e, y) - t.height(x - e, y)) / (2.0 * e);
        let hy = (t.height(x, y + e) - t.height(x, y - e)) / (2.0 * e);
        let n = Vector3::new(-hx, -hy, 1.0).normalize();
        prop_assert!((t.normal(x, y) - n).norm() < 1e-6);
    }

    #[test]
    fn wheel_contact_gap_on_a_plane_is_the_lift(x in 1.0f64..3.0, lift in -0.01f64..0.05) {
        let t = Terrain::slope(20.0, 0.5);
        let r = 0.09;
        let n0 = t.normal(x, 0.0);
        let center = Vector3::new(x, 0.0, t.height(x, 0.0)) + n0 * (r + lift);
        let c = t.wheel_contact(&center, r);
        prop_assert!((c.gap - lift).abs() < 1e-9, "gap {} lift {}", c.gap, lift);
        prop_assert!((c.normal - n0).norm() < 1e-9);
    }
}
