//! Scenario execution: estimation -> control -> simulation, plus metrics.

use std::io::{self, Write};

use nalgebra::{Vector2, Vector3, Vector4, Vector5};
use serde::Serialize;
use thiserror::Error;
use wbc_core::hqp::debug::{write_debug_rows, DEBUG_HEADER};
use wbc_core::robot_model::tasks::{com_state, task_state};
use wbc_core::robot_model::kinematics::forward_kinematics;
use wbc_core::terrain::{incline_angle, query_normal, MapConfig, NormalFilter, NormalMap};
use wbc_core::Robot;

use crate::controller::{sample_reference, WholeBodyController};
use crate::lidar::{frame_seed, synth_pointcloud};
use crate::physics::{apply_block_impact, ExternalForce, SimConfig, Simulator};
use crate::scenario::{Disturbance, EstimationMode, Scenario};
use crate::stance::terrain_stance;
use crate::terrain::TerrainKind;

/// Roll or pitch magnitude beyond which the robot counts as fallen, rad.
pub const FALL_ANGLE: f64 = 1.0;

/// Column order of the log CSV.
pub const LOG_COLUMNS: [&str; 24] = [
    "t", "phi", "h", "alpha", "beta", "gamma", "r_com_x", "r_com_x_dot", "s_com_x", "s_com_x_dot", "tau1", "tau2",
    "tau3", "tau4", "tau5", "tau6", "fc_xl", "fc_xr", "fc_zl", "fc_zr", "psi_hat", "psi_true", "com_x", "com_y",
];

/// One control step, measured with the true ground geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    /// `(phi, h, alpha, beta, gamma)`.
    pub pose: Vector5<f64>,
    /// `(r_x, r_x_dot, s_x, s_x_dot)`.
    pub balance: Vector4<f64>,
    pub tau: [f64; 6],
    /// `(Fx_l, Fx_r, Fz_l, Fz_r)` from the last simulation step.
    pub forces: Vector4<f64>,
    /// Incline of the normals the controller used, deg.
    pub psi_hat: f64,
    pub psi_true: f64,
    pub com: Vector2<f64>,
    pub height_reference: f64,
}

impl LogRecord {
    pub fn values(&self) -> [f64; 24] {
        let p = &self.pose;
        let b = &self.balance;
        let f = &self.forces;
        let t = &self.tau;
        [
            self.t, p[0], p[1], p[2], p[3], p[4], b[0], b[1], b[2], b[3], t[0], t[1], t[2], t[3], t[4], t[5], f[0], f[1],
            f[2], f[3], self.psi_hat, self.psi_true, self.com.x, self.com.y,
        ]
    }
}

pub fn write_log_csv<W: Write>(records: &[LogRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{}", LOG_COLUMNS.join(","))?;
    for r in records {
        let v = r.values();
        let cells: Vec<String> = std::iter::once(format!("{:.4}", v[0])).chain(v[1..].iter().map(|x| format!("{x:.6e}"))).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// `t, psi_hat, psi_true` for incline plots.
pub fn write_psi_trace<W: Write>(records: &[LogRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "t,psi_hat,psi_true")?;
    for r in records {
        writeln!(out, "{:.4},{:.4},{:.4}", r.t, r.psi_hat, r.psi_true)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub t: f64,
    pub message: String,
    /// Failing priority level for hierarchy errors.
    pub level: Option<usize>,
}

/// Summary metrics. The key set is fixed; absent values serialize as null.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub estimation_mode: String,
    pub seed: u64,
    pub duration: f64,
    pub simulated_time: f64,
    pub control_steps: usize,
    pub completed: bool,
    pub failure: Option<Failure>,
    pub fell: bool,
    pub fell_time: Option<f64>,
    pub max_abs_delta_pitch: f64,
    pub max_abs_r_com_x: f64,
    pub release_time: Option<f64>,
    pub s_peak_excursion: Option<f64>,
    pub settle_time: Option<f64>,
    pub height_mean: f64,
    pub height_sd: f64,
    pub max_abs_height_error: f64,
    pub roll_mean: f64,
    pub roll_sd: f64,
    pub max_abs_roll: f64,
    pub psi_hat_mean: Option<f64>,
    pub psi_true_mean: Option<f64>,
    pub psi_error_mean: Option<f64>,
    pub com_dev_enter: Option<f64>,
    pub com_dev_exit: Option<f64>,
    pub max_contact_drift: f64,
    pub energy_residual: f64,
    pub energy_residual_rel: f64,
    pub max_abs_tau: [f64; 6],
}

/// Closed set of metric keys, in output order.
pub const METRIC_KEYS: [&str; 30] = [
    "scenario", "estimation_mode", "seed", "duration", "simulated_time", "control_steps", "completed", "failure", "fell",
    "fell_time", "max_abs_delta_pitch", "max_abs_r_com_x", "release_time", "s_peak_excursion", "settle_time",
    "height_mean", "height_sd", "max_abs_height_error", "roll_mean", "roll_sd", "max_abs_roll", "psi_hat_mean",
    "psi_true_mean", "psi_error_mean", "com_dev_enter", "com_dev_exit", "max_contact_drift", "energy_residual",
    "energy_residual_rel", "max_abs_tau",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("robot file: {0}")]
    Robot(#[from] wbc_core::robot_model::description::ModelError),
    #[error("initial stance: {0}")]
    Stance(String),
    #[error("controller setup: {0}")]
    Controller(#[from] wbc_core::task_control::ControlError),
    #[error("I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Collect the per-solve HQP CSV (also enabled by the scenario).
    pub hqp_debug: bool,
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<LogRecord>,
    pub metrics: Metrics,
    pub hqp_debug: Option<Vec<u8>>,
    pub normal_map: Option<NormalMap>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn downhill(n: &Vector3<f64>) -> Vector3<f64> {
    let down = Vector3::new(0.0, 0.0, -1.0);
    let t = down - n * n.dot(&down);
    if t.norm() > 1e-9 {
        t.normalize()
    } else {
        down
    }
}

pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput, RunError> {
    let robot = match &scenario.robot {
        Some(p) => Robot::from_file(p)?,
        None => Robot::default_diablo(),
    };
    let dt = scenario.sim_dt();
    let sim = Simulator::new(&robot, scenario.terrain.clone(), SimConfig { dt, ..SimConfig::default() });
    let initial = terrain_stance(&robot, &scenario.terrain, &scenario.initial).map_err(RunError::Stance)?;
    let mut ss = sim.initial(initial);
    let mut ctrl = WholeBodyController::new(&robot, &scenario.controller)?;

    let decimation = scenario.control_decimation().max(1);
    let control_dt = decimation as f64 * dt;
    let lidar_every = ((1.0 / scenario.sensor.rate_hz) / dt).round().max(1.0) as usize;
    let steps = (scenario.duration / dt).round() as usize;
    let mode = scenario.estimation_mode;
    let estimated = mode == EstimationMode::EstimatedNormal;
    let mut map = NormalMap::new(MapConfig::default());
    let mut filters = [NormalFilter::new(scenario.controller.filter_smoothing), NormalFilter::new(scenario.controller.filter_smoothing)];
    let mut frame = 0u64;
    let debug = options.hqp_debug || scenario.controller.hqp_debug;
    let mut debug_buf = debug.then(|| format!("{DEBUG_HEADER}\n").into_bytes());

    let block_steps: Vec<(usize, &Disturbance)> = scenario
        .disturbance
        .iter()
        .filter(|d| matches!(d, Disturbance::Block { .. }))
        .map(|d| ((d.start() / dt).round() as usize, d))
        .collect();

    let mut records = Vec::new();
    let mut tau = [0.0; 6];
    let mut failure = None;
    let mut fell_time = None;
    let mut max_drift: f64 = 0.0;
    let mut control_steps = 0;

    for step in 0..steps {
        let t = step as f64 * dt;
        if estimated && step % lidar_every == 0 {
            let center = ss.state.config.position.xy();
            let cloud = synth_pointcloud(&scenario.terrain, &center, &scenario.sensor, frame_seed(scenario.seed, frame));
            map.update(&cloud.with_timestamp(t)).ok();
            frame += 1;
        }
        if step % decimation == 0 {
            let true_normals = sim.true_normals(&ss.state);
            let normals = match mode {
                EstimationMode::TrueNormal => true_normals,
                EstimationMode::HorizontalNormal => [Vector3::z(); 2],
                EstimationMode::EstimatedNormal => {
                    let kin = forward_kinematics(&robot.model, &ss.state.config);
                    let centers = kin.wheel_centers(&robot.model);
                    let r = ss.state.config.rotation.matrix();
                    let heading = Vector2::new(r[(0, 0)], r[(1, 0)]);
                    let mut out = [Vector3::z(); 2];
                    for i in 0..2 {
                        let pos = centers[i].xy();
                        out[i] = query_normal(&map, &pos, &heading, scenario.controller.lookahead, &mut filters[i]);
                    }
                    out
                }
            };
            let reference = sample_reference(&scenario.reference, &scenario.initial, t);
            match ctrl.update(&ss.state, &normals, &reference, control_dt) {
                Ok(out) => {
                    tau = out.tau;
                    if let Some(buf) = debug_buf.as_mut() {
                        write_debug_rows(buf, control_steps, t, &out.solution)?;
                    }
                }
                Err(e) => {
                    failure = Some(Failure { t, message: e.to_string(), level: e.level() });
                    break;
                }
            }
            control_steps += 1;
            let (Ok(ts), Ok(cs)) = (task_state(&robot, &ss.state, &true_normals), com_state(&robot, &ss.state, &true_normals)) else {
                failure = Some(Failure { t, message: "true task state unavailable".into(), level: None });
                break;
            };
            let avg = |n: &[Vector3<f64>; 2]| (n[0] + n[1]).normalize();
            records.push(LogRecord {
                t,
                pose: ts.pose,
                balance: Vector4::new(cs.r.x, cs.r_dot.x, cs.s, cs.s_dot),
                tau,
                forces: ss.forces,
                psi_hat: incline_angle(&avg(&normals)),
                psi_true: incline_angle(&avg(&true_normals)),
                com: cs.com.xy(),
                height_reference: reference.pose[1],
            });
            if ts.pose[2].abs() > FALL_ANGLE || ts.pose[3].abs() > FALL_ANGLE {
                fell_time = Some(t);
                break;
            }
        }

        let mut external = Vec::new();
        for d in &scenario.disturbance {
            if let Disturbance::Push { t_start, duration, force, direction, point } = d {
                if t >= *t_start && t < t_start + duration {
                    let dir = Vector3::from(*direction);
                    let dir = if dir.norm() > 0.0 { dir.normalize() } else { dir };
                    external.push(ExternalForce { base_point: Vector3::from(*point), force: dir * (force * (t - t_start) / duration) });
                }
            }
        }
        for (s, d) in &block_steps {
            if let (true, Disturbance::Block { mass, drop_height, direction, point, .. }) = (*s == step, d) {
                let p = ss.state.config.position;
                let dir = direction.map(Vector3::from).unwrap_or_else(|| downhill(&scenario.terrain.normal(p.x, p.y)));
                external.push(apply_block_impact(*mass, *drop_height, robot.gravity(), &dir, Vector3::from(*point), dt));
            }
        }
        match sim.step(&mut ss, &tau, &external) {
            Ok(acc) => {
                for c in &acc.contacts {
                    max_drift = max_drift.max(c.gap.abs());
                }
            }
            Err(e) => {
                failure = Some(Failure { t, message: e.to_string(), level: None });
                break;
            }
        }
    }

    let energy_now = sim.mechanical_energy(&ss.state);
    let residual = ss.audit.residual(energy_now);
    let metrics = summarize(scenario, &records, failure, fell_time, max_drift, residual, ss.audit.throughput, control_steps, ss.time);
    Ok(RunOutput { records, metrics, hqp_debug: debug_buf, normal_map: estimated.then_some(map) })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    scenario: &Scenario,
    records: &[LogRecord],
    failure: Option<Failure>,
    fell_time: Option<f64>,
    max_drift: f64,
    energy_residual: f64,
    throughput: f64,
    control_steps: usize,
    simulated: f64,
) -> Metrics {
    let start = scenario.metrics.start;
    let window: Vec<&LogRecord> = records.iter().filter(|r| r.t >= start).collect();
    let beta0 = records.first().map_or(0.0, |r| r.pose[3]);
    let heights: Vec<f64> = window.iter().map(|r| r.pose[1]).collect();
    let rolls: Vec<f64> = window.iter().map(|r| r.pose[2]).collect();
    let (height_mean, height_sd) = mean_sd(&heights);
    let (roll_mean, roll_sd) = mean_sd(&rolls);
    let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0_f64, |a, b| a.max(b.abs()));

    // Disturbance recovery.
    let (release_time, s_peak_excursion, settle_time) = if scenario.disturbance.is_empty() || records.is_empty() {
        (None, None, None)
    } else {
        let onset = scenario.disturbance.iter().map(|d| d.start()).fold(f64::INFINITY, f64::min);
        let release = scenario.disturbance.iter().map(|d| d.release()).fold(f64::NEG_INFINITY, f64::max);
        let s0 = records.iter().take_while(|r| r.t <= onset).last().unwrap_or(&records[0]).balance[2];
        let peak = max_abs(&mut records.iter().filter(|r| r.t >= onset).map(|r| r.balance[2] - s0));
        let band = 0.02 * peak;
        let after: Vec<&LogRecord> = records.iter().filter(|r| r.t >= release).collect();
        let last_out = after.iter().rposition(|r| (r.balance[2] - s0).abs() > band);
        let settle = match last_out {
            None => Some(0.0),
            Some(i) if i + 1 < after.len() => Some(after[i + 1].t - release),
            Some(_) => None,
        };
        (Some(release), Some(peak), settle)
    };

    // Incline estimate over the sloped part of the run.
    let sloped: Vec<&&LogRecord> = window.iter().filter(|r| r.psi_true > 1.0).collect();
    let (psi_hat_mean, psi_true_mean, psi_error_mean) = if sloped.is_empty() {
        (None, None, None)
    } else {
        let n = sloped.len() as f64;
        (
            Some(sloped.iter().map(|r| r.psi_hat).sum::<f64>() / n),
            Some(sloped.iter().map(|r| r.psi_true).sum::<f64>() / n),
            Some(sloped.iter().map(|r| (r.psi_hat - r.psi_true).abs()).sum::<f64>() / n),
        )
    };

    // CoM deviation around the entry and exit crossings of the transition line.
    let line = scenario.metrics.transition_x.or(match &scenario.terrain.kind {
        TerrainKind::Slope { start_x, .. } => Some(*start_x),
        _ => None,
    });
    let span = scenario.metrics.transition_window.unwrap_or(1.5);
    let deviation_after = |i: usize| {
        let tc = records[i].t;
        max_abs(&mut records.iter().filter(|r| r.t >= tc - 0.2 && r.t <= tc + span).map(|r| r.balance[0]))
    };
    let (com_dev_enter, com_dev_exit) = match line {
        Some(x) if records.len() > 1 => {
            let enter = (1..records.len()).find(|&i| records[i - 1].com.x < x && records[i].com.x >= x);
            let exit = (1..records.len()).rev().find(|&i| records[i - 1].com.x >= x && records[i].com.x < x);
            (enter.map(deviation_after), exit.map(deviation_after))
        }
        _ => (None, None),
    };

    let mut max_abs_tau = [0.0_f64; 6];
    for r in records {
        for k in 0..6 {
            max_abs_tau[k] = max_abs_tau[k].max(r.tau[k].abs());
        }
    }
    let completed = failure.is_none() && fell_time.is_none();
    Metrics {
        scenario: scenario.name.clone(),
        estimation_mode: scenario.estimation_mode.as_str().to_string(),
        seed: scenario.seed,
        duration: scenario.duration,
        simulated_time: simulated,
        control_steps,
        completed,
        failure,
        fell: fell_time.is_some(),
        fell_time,
        max_abs_delta_pitch: max_abs(&mut records.iter().map(|r| r.pose[3] - beta0)),
        max_abs_r_com_x: max_abs(&mut records.iter().map(|r| r.balance[0])),
        release_time,
        s_peak_excursion,
        settle_time,
        height_mean,
        height_sd,
        max_abs_height_error: max_abs(&mut window.iter().map(|r| r.pose[1] - r.height_reference)),
        roll_mean,
        roll_sd,
        max_abs_roll: max_abs(&mut rolls.iter().copied()),
        psi_hat_mean,
        psi_true_mean,
        psi_error_mean,
        com_dev_enter,
        com_dev_exit,
        max_contact_drift: max_drift,
        energy_residual,
        energy_residual_rel: energy_residual.abs() / throughput.max(1e-9),
        max_abs_tau,
    }
}
