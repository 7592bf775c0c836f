//! Synthetic LiDAR: terrain surface samples around the robot.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use wbc_core::terrain::PointCloud;

use crate::terrain::Terrain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Horizontal radius around the robot, m.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Returns per square metre of ground.
    #[serde(default = "default_density")]
    pub density: f64,
    /// Isotropic Gaussian noise, m.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

fn default_radius() -> f64 {
    1.5
}
fn default_density() -> f64 {
    500.0
}
fn default_noise() -> f64 {
    0.01
}
fn default_rate() -> f64 {
    10.0
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { radius: default_radius(), density: default_density(), noise: default_noise(), rate_hz: default_rate() }
    }
}

impl SensorConfig {
    pub fn points_per_frame(&self) -> usize {
        (self.density * std::f64::consts::PI * self.radius * self.radius).round() as usize
    }
}

/// Uniform samples over the disk of `config.radius` around `center`, lifted
/// onto the terrain and perturbed by isotropic noise; world frame.
pub fn synth_pointcloud(terrain: &Terrain, center: &Vector2<f64>, config: &SensorConfig, seed: u64) -> PointCloud {
    assert!(config.radius > 0.0, "sensor radius must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.noise.max(0.0)).expect("finite sigma");
    let n = config.points_per_frame();
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let r = config.radius * rng.random::<f64>().sqrt();
        let a = std::f64::consts::TAU * rng.random::<f64>();
        let x = center.x + r * a.cos();
        let y = center.y + r * a.sin();
        let mut p = Vector3::new(x, y, terrain.height(x, y));
        if config.noise > 0.0 {
            p += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
        }
        points.push(p);
    }
    PointCloud::new(points).expect("terrain samples are finite")
}

/// Per-frame seed derived from the run seed and frame index.
pub fn frame_seed(seed: u64, frame: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(frame.wrapping_mul(0xBF58_476D_1CE4_E5B9)) ^ 0x94D0_49BB_1331_11EB
}
