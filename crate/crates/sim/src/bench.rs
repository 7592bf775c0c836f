//! End-to-end accuracy of the estimation chain on a synthetic ramp:
//! LiDAR frames, normal map, lookahead query and filter.

use nalgebra::Vector2;
use wbc_core::terrain::{incline_angle, query_normal, MapConfig, NormalFilter, NormalMap};

use crate::lidar::{frame_seed, synth_pointcloud, SensorConfig};
use crate::terrain::Terrain;

#[derive(Debug, Clone, PartialEq)]
pub struct RampSetup {
    pub angle_deg: f64,
    pub sensor: SensorConfig,
    /// Drive speed up the ramp, m/s.
    pub speed: f64,
    pub control_hz: f64,
    pub lookahead: f64,
    pub smoothing: f64,
    /// Half the wheel track, m.
    pub half_track: f64,
    pub map: MapConfig,
}

impl RampSetup {
    /// Scenario defaults with noise `sigma`.
    pub fn new(angle_deg: f64, sigma: f64) -> Self {
        Self {
            angle_deg,
            sensor: SensorConfig { noise: sigma, ..SensorConfig::default() },
            speed: 1.0,
            control_hz: 500.0,
            lookahead: 0.1,
            smoothing: 0.05,
            half_track: 0.2,
            map: MapConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RampReport {
    pub angle_deg: f64,
    pub sigma: f64,
    /// Filtered wheel queries taken on the planar part of the ramp.
    pub samples: usize,
    pub psi_hat_mean: f64,
    pub mean_error_deg: f64,
    pub max_error_deg: f64,
}

/// Drives a point robot from 0.5 m before the ramp foot to 3.5 m past it,
/// mapping at the sensor rate and querying both wheels at the control rate.
/// Errors are `|psi_hat - psi|` for queries where the true incline under
/// the wheel is the nominal angle.
pub fn ramp_pipeline(setup: &RampSetup, seed: u64) -> RampReport {
    let terrain = Terrain::slope(setup.angle_deg, 0.0);
    let dt = 1.0 / setup.control_hz;
    let lidar_every = (setup.control_hz / setup.sensor.rate_hz).round().max(1.0) as usize;
    let (start, end) = (-0.5, 3.5);
    let steps = ((end - start) / (setup.speed * dt)).round() as usize;
    let heading = Vector2::x();
    let mut map = NormalMap::new(setup.map.clone());
    let mut filters = [NormalFilter::new(setup.smoothing), NormalFilter::new(setup.smoothing)];
    let mut errors = Vec::new();
    let mut psi_sum = 0.0;
    let mut frame = 0;
    for k in 0..steps {
        let x = start + setup.speed * dt * k as f64;
        if k % lidar_every == 0 {
            let cloud = synth_pointcloud(&terrain, &Vector2::new(x, 0.0), &setup.sensor, frame_seed(seed, frame));
            map.update(&cloud).ok();
            frame += 1;
        }
        for (i, y) in [setup.half_track, -setup.half_track].into_iter().enumerate() {
            let n = query_normal(&map, &Vector2::new(x, y), &heading, setup.lookahead, &mut filters[i]);
            let psi = terrain.incline_deg(x, y);
            if (psi - setup.angle_deg.abs()).abs() < 1e-6 {
                let psi_hat = incline_angle(&n);
                psi_sum += psi_hat;
                errors.push((psi_hat - psi).abs());
            }
        }
    }
    let n = errors.len().max(1) as f64;
    RampReport {
        angle_deg: setup.angle_deg,
        sigma: setup.sensor.noise,
        samples: errors.len(),
        psi_hat_mean: psi_sum / n,
        mean_error_deg: errors.iter().sum::<f64>() / n,
        max_error_deg: errors.iter().cloned().fold(0.0, f64::max),
    }
}
