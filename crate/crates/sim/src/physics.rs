//! Forward dynamics with bilateral rolling contact and a semi-implicit
//! Euler integrator.

use nalgebra::{SMatrix, SVector, Vector3, Vector4};
use thiserror::Error;
use wbc_core::dynamics::{closed_loop_dynamics, point_jacobian, potential_energy, ClosedLoopDynamics, DynamicsError};
use wbc_core::robot_model::kinematics::forward_kinematics;
use wbc_core::robot_model::{expand_coordinates, orthonormalize, MinimalState, MinimalVector};
use wbc_core::Robot;

use crate::terrain::{Terrain, WheelContact};

const KKT_DIM: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("contact model: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("contact KKT matrix is singular at t = {time:.4} s")]
    SingularKkt { time: f64 },
    #[error("non-finite state after step at t = {time:.4} s")]
    NonFinite { time: f64 },
    #[error("time step must be positive")]
    InvalidStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactMode {
    /// Both wheels held on the terrain by rolling constraints.
    Bilateral,
    /// No ground at all (ballistic test hook).
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub baumgarte_omega: f64,
    pub baumgarte_zeta: f64,
    pub contact: ContactMode,
    /// Project position and velocity back onto the rolling constraints
    /// after every step.
    pub projection: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1e-3, baumgarte_omega: 50.0, baumgarte_zeta: 1.0, contact: ContactMode::Bilateral, projection: true }
    }
}

/// World-frame force applied at a point fixed on the base, given in base
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalForce {
    pub base_point: Vector3<f64>,
    pub force: Vector3<f64>,
}

/// Running energy bookkeeping (J).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyAudit {
    pub initial: f64,
    pub actuation_work: f64,
    pub external_work: f64,
    /// Work of contact forces: lateral friction plus constraint drift correction.
    pub contact_work: f64,
    /// Sum of absolute step works, used to scale the residual.
    pub throughput: f64,
}

impl EnergyAudit {
    /// `E_now - E_0 - W_in`.
    pub fn residual(&self, energy_now: f64) -> f64 {
        energy_now - self.initial - self.actuation_work - self.external_work - self.contact_work
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub state: MinimalState<f64>,
    /// Contact forces `(Fx_l, Fx_r, Fz_l, Fz_r)` of the last step, contact frames.
    pub forces: Vector4<f64>,
    pub time: f64,
    pub audit: EnergyAudit,
}

#[derive(Debug, Clone)]
pub struct Acceleration {
    pub udot: MinimalVector<f64>,
    pub forces: Vector4<f64>,
    pub contacts: [WheelContact; 2],
    /// Generalized actuation and external forces (12).
    pub actuation: MinimalVector<f64>,
    pub external: MinimalVector<f64>,
    pub contact_force: MinimalVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub robot: Robot,
    pub terrain: Terrain,
    pub config: SimConfig,
}

impl Simulator {
    /// Uses the terrain friction for the lateral friction law.
    pub fn new(robot: &Robot, terrain: Terrain, config: SimConfig) -> Self {
        let mut desc = robot.description.clone();
        desc.contact.mu = terrain.friction;
        let robot = Robot::new(desc).expect("only friction changed");
        Self { robot, terrain, config }
    }

    pub fn wheel_contacts(&self, state: &MinimalState<f64>) -> [WheelContact; 2] {
        let kin = forward_kinematics(&self.robot.model, &state.config);
        let centers = kin.wheel_centers(&self.robot.model);
        centers.map(|c| self.terrain.wheel_contact(&c, self.robot.model.wheel_radius))
    }

    pub fn true_normals(&self, state: &MinimalState<f64>) -> [Vector3<f64>; 2] {
        self.wheel_contacts(state).map(|c| c.normal)
    }

    pub fn mechanical_energy(&self, state: &MinimalState<f64>) -> f64 {
        let d = self.dynamics_at(state).map(|(d, _)| d);
        let kinetic = match d {
            Ok(d) => 0.5 * (state.velocity.transpose() * d.h * state.velocity)[0],
            Err(_) => f64::NAN,
        };
        kinetic + potential_energy(&self.robot.model, &expand_coordinates(&state.config))
    }

    fn dynamics_at(&self, state: &MinimalState<f64>) -> Result<(ClosedLoopDynamics, [WheelContact; 2]), SimError> {
        let contacts = self.wheel_contacts(state);
        let normals = contacts.map(|c| c.normal);
        Ok((closed_loop_dynamics(&self.robot, state, &normals)?, contacts))
    }

    /// Generalized (12) force of external point forces on the base.
    pub fn external_generalized(&self, state: &MinimalState<f64>, forces: &[ExternalForce]) -> MinimalVector<f64> {
        let q = expand_coordinates(&state.config);
        let g = wbc_core::robot_model::constant_loop_jacobian::<f64>();
        let mut out = MinimalVector::zeros();
        for f in forces {
            let p = state.config.position + state.config.rotation * f.base_point;
            let j = point_jacobian(&self.robot.model, &q, 0, &p);
            out += g.transpose() * (j.transpose() * f.force);
        }
        out
    }

    /// Normal acceleration each wheel centre needs to follow a curved
    /// surface, `kappa v_t^2 / (1 - r kappa)`, on the z rows. The contact
    /// Jacobian treats the ground as locally planar, so without this term
    /// the wheels cut through concave bends.
    fn curvature_terms(&self, state: &MinimalState<f64>, contacts: &[WheelContact; 2]) -> Vector4<f64> {
        let model = &self.robot.model;
        let q = expand_coordinates(&state.config);
        let g = wbc_core::robot_model::constant_loop_jacobian::<f64>();
        let kin = forward_kinematics(model, &state.config);
        let centers = kin.wheel_centers(model);
        let r = model.wheel_radius;
        let mut out = Vector4::zeros();
        for i in 0..2 {
            let j = point_jacobian(model, &q, model.wheels[i], &centers[i]);
            let v = j * (g * state.velocity);
            let n = contacts[i].normal;
            let vt = v - n * n.dot(&v);
            let p = contacts[i].point;
            let speed2 = vt.norm_squared();
            if speed2 == 0.0 {
                continue;
            }
            let unit = vt / speed2.sqrt();
            let kappa = self.terrain.normal_curvature(p.x, p.y, &unit.xy()).min(0.99 / r);
            out[2 + i] = kappa * speed2 / (1.0 - r * kappa);
        }
        out
    }

    /// Solves
    /// `[H_y, -G'J_gc; J_xz, 0] (u_dot, F_C) = (G'S'tau - C_y + f_ext; -Jdot u - baumgarte)`.
    pub fn forward_dynamics(
        &self,
        state: &MinimalState<f64>,
        tau: &[f64; 6],
        external: &[ExternalForce],
        time: f64,
    ) -> Result<Acceleration, SimError> {
        let (d, contacts) = self.dynamics_at(state)?;
        let tau_v = SVector::<f64, 6>::from(*tau);
        let actuation = d.actuation_map() * tau_v;
        let ext = self.external_generalized(state, external);
        let rhs_dyn = actuation - d.c + ext;
        if self.config.contact == ContactMode::Free {
            let udot = d.h.lu().solve(&rhs_dyn).ok_or(SimError::SingularKkt { time })?;
            return Ok(Acceleration {
                udot,
                forces: Vector4::zeros(),
                contacts,
                actuation,
                external: ext,
                contact_force: MinimalVector::zeros(),
            });
        }
        let jxz = d.j_xz();
        let wc = d.contact_map();
        let mut kkt = SMatrix::<f64, KKT_DIM, KKT_DIM>::zeros();
        kkt.fixed_view_mut::<12, 12>(0, 0).copy_from(&d.h);
        kkt.fixed_view_mut::<12, 4>(0, 12).copy_from(&(-wc));
        kkt.fixed_view_mut::<4, 12>(12, 0).copy_from(&jxz);
        let (w, z) = (self.config.baumgarte_omega, self.config.baumgarte_zeta);
        let vel = jxz * state.velocity;
        let gap = Vector4::new(0.0, 0.0, contacts[0].gap, contacts[1].gap);
        let stab = vel * (2.0 * z * w) - self.curvature_terms(state, &contacts) + gap * (w * w);
        let mut rhs = SVector::<f64, KKT_DIM>::zeros();
        rhs.fixed_rows_mut::<12>(0).copy_from(&rhs_dyn);
        rhs.fixed_rows_mut::<4>(12).copy_from(&(-d.jdot_xz - stab));
        let sol = kkt.lu().solve(&rhs).ok_or(SimError::SingularKkt { time })?;
        let udot: MinimalVector<f64> = sol.fixed_rows::<12>(0).into_owned();
        let forces: Vector4<f64> = sol.fixed_rows::<4>(12).into_owned();
        if !udot.iter().chain(forces.iter()).all(|v| v.is_finite()) {
            return Err(SimError::SingularKkt { time });
        }
        Ok(Acceleration { udot, forces, contacts, actuation, external: ext, contact_force: wc * forces })
    }

    /// Semi-implicit Euler advances positions with the end-of-step velocity,
    /// which leaves an `O(dt^2 Jdot u)` gap error per step that Baumgarte
    /// alone cannot keep below a millimetre under violent motion. Closes the
    /// gaps along the constraint normals, then removes the constraint-
    /// violating velocity in the kinetic-energy metric. Returns the energy
    /// change, booked as constraint work.
    fn project(&self, state: &mut MinimalState<f64>, time: f64) -> Result<f64, SimError> {
        let energy = |d: &ClosedLoopDynamics, st: &MinimalState<f64>| {
            0.5 * (st.velocity.transpose() * d.h * st.velocity)[0]
                + potential_energy(&self.robot.model, &expand_coordinates(&st.config))
        };
        let (mut d, mut contacts) = self.dynamics_at(state)?;
        let energy_before = energy(&d, state);
        for _ in 0..3 {
            let gap = nalgebra::Vector2::new(contacts[0].gap, contacts[1].gap);
            if gap.amax() < 1e-12 {
                break;
            }
            let jz: SMatrix<f64, 2, 12> = d.j_xz().fixed_rows::<2>(2).into_owned();
            let gram = (jz * jz.transpose()).try_inverse().ok_or(SimError::SingularKkt { time })?;
            let delta: MinimalVector<f64> = -(jz.transpose() * (gram * gap));
            state.config = state.config.retract::<f64>(&delta, 1.0);
            (d, contacts) = self.dynamics_at(state)?;
        }
        let j = d.j_xz();
        let w = d.h.lu().solve(&j.transpose()).ok_or(SimError::SingularKkt { time })?;
        let s = (j * w).try_inverse().ok_or(SimError::SingularKkt { time })?;
        state.velocity -= w * (s * (j * state.velocity));
        Ok(energy(&d, state) - energy_before)
    }

    pub fn initial(&self, state: MinimalState<f64>) -> SimState {
        let e = self.mechanical_energy(&state);
        SimState {
            state,
            forces: Vector4::zeros(),
            time: 0.0,
            audit: EnergyAudit { initial: e, ..Default::default() },
        }
    }

    /// One semi-implicit Euler step. On failure `sim` keeps its last valid state.
    pub fn step(&self, sim: &mut SimState, tau: &[f64; 6], external: &[ExternalForce]) -> Result<Acceleration, SimError> {
        let dt = self.config.dt;
        if !(dt > 0.0) {
            return Err(SimError::InvalidStep);
        }
        let acc = self.forward_dynamics(&sim.state, tau, external, sim.time)?;
        let u0 = sim.state.velocity;
        let u1 = u0 + acc.udot * dt;
        let moved = sim.state.config.retract::<f64>(&u1, dt);
        let config = wbc_core::robot_model::Configuration::new(
            moved.position,
            orthonormalize(moved.rotation.matrix()),
            moved.joints,
        );
        let finite = u1.iter().all(|v| v.is_finite())
            && config.position.iter().chain(config.joints.iter()).chain(config.rotation.matrix().iter()).all(|v| v.is_finite());
        if !finite {
            return Err(SimError::NonFinite { time: sim.time });
        }
        let mut next = MinimalState { config, velocity: u1 };
        let mut correction = 0.0;
        if self.config.projection && self.config.contact == ContactMode::Bilateral {
            correction = self.project(&mut next, sim.time)?;
        }
        let u1 = next.velocity;
        let mid = (u0 + u1) * 0.5;
        let wa = acc.actuation.dot(&mid) * dt;
        let we = acc.external.dot(&mid) * dt;
        let wc = acc.contact_force.dot(&mid) * dt;
        sim.audit.actuation_work += wa;
        sim.audit.external_work += we;
        sim.audit.contact_work += wc + correction;
        sim.audit.throughput += wa.abs() + we.abs() + wc.abs() + correction.abs();
        sim.state = next;
        sim.forces = acc.forces;
        sim.time += dt;
        Ok(acc)
    }
}

/// Impulse of a block of `mass` dropped from `drop_height`:
/// `m sqrt(2 g h)` (restitution 0).
pub fn block_impulse(mass: f64, drop_height: f64, gravity: f64) -> f64 {
    if drop_height <= 0.0 || mass <= 0.0 {
        return 0.0;
    }
    mass * (2.0 * gravity * drop_height).sqrt()
}

/// The block's impulse as a force held for one step of `dt` along `direction`.
pub fn apply_block_impact(mass: f64, drop_height: f64, gravity: f64, direction: &Vector3<f64>, base_point: Vector3<f64>, dt: f64) -> ExternalForce {
    let j = block_impulse(mass, drop_height, gravity);
    let d = if direction.norm() > 0.0 { direction.normalize() } else { Vector3::zeros() };
    ExternalForce { base_point, force: d * (j / dt) }
}
