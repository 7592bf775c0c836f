//! Monte-Carlo accuracy suites for planar normal estimation.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::knn::KnnIndex;
use super::pca::{estimate_adaptive, estimate_indexed};
use super::PointCloud;

/// Neighbourhood rule used in a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighborhood {
    Fixed(usize),
    Adaptive { k_min: usize, k_max: usize },
}

impl std::fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Neighborhood::Fixed(k) => write!(f, "k={k}"),
            Neighborhood::Adaptive { k_min, k_max } => write!(f, "k=[{k_min},{k_max}]"),
        }
    }
}

/// Points per trial and in-plane patch side length (m).
pub const PLANE_POINTS: usize = 250;
pub const PLANE_PATCH: f64 = 1.0;

/// Unit normal of a plane inclined by `angle_deg` about the y axis.
pub fn plane_normal(angle_deg: f64) -> Vector3<f64> {
    let a = angle_deg.to_radians();
    Vector3::new(-a.sin(), 0.0, a.cos())
}

/// Uniform samples on a square patch of the inclined plane through the
/// origin, with isotropic Gaussian noise.
pub fn sample_plane(angle_deg: f64, n: usize, patch: f64, sigma: f64, rng: &mut impl Rng) -> PointCloud {
    let a = angle_deg.to_radians();
    let along = Vector3::new(a.cos(), 0.0, a.sin());
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let half = patch / 2.0;
    let pts = (0..n)
        .map(|_| {
            let u = rng.random_range(-half..half);
            let v = rng.random_range(-half..half);
            let mut p = along * u + Vector3::new(0.0, v, 0.0);
            if sigma > 0.0 {
                p += Vector3::from_fn(|_, _| noise.sample(rng));
            }
            p
        })
        .collect();
    PointCloud::new(pts).expect("finite samples")
}

/// Angle between two directions in degrees (robust near zero).
pub fn angular_error_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub angle_deg: f64,
    pub sigma: f64,
    pub neighborhood: Neighborhood,
    pub trials: usize,
    pub mean_error_deg: f64,
    pub max_error_deg: f64,
    pub failures: usize,
}

/// Error of the normal estimated at the patch centre, per trial.
pub fn plane_errors(angle_deg: f64, sigma: f64, nb: Neighborhood, trials: usize, seed: u64) -> (Vec<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = plane_normal(angle_deg);
    let mut errors = Vec::with_capacity(trials);
    let mut failures = 0;
    for _ in 0..trials {
        let cloud = sample_plane(angle_deg, PLANE_POINTS, PLANE_PATCH, sigma, &mut rng);
        let index = KnnIndex::new(cloud.points(), 0.1);
        let q = Vector3::zeros();
        let est = match nb {
            Neighborhood::Fixed(k) => estimate_indexed(&index, &q, k),
            Neighborhood::Adaptive { k_min, k_max } => estimate_adaptive(&index, &q, k_min, k_max),
        };
        match est {
            Ok(e) => errors.push(angular_error_deg(&e.normal, &truth)),
            Err(_) => failures += 1,
        }
    }
    (errors, failures)
}

/// Runs every (angle, noise, neighbourhood) combination.
pub fn plane_suite(angles: &[f64], sigmas: &[f64], neighborhoods: &[Neighborhood], trials: usize, seed: u64) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &angle_deg in angles {
        for &sigma in sigmas {
            for &nb in neighborhoods {
                let (errors, failures) = plane_errors(angle_deg, sigma, nb, trials, seed);
                let n = errors.len().max(1) as f64;
                rows.push(BenchRow {
                    angle_deg,
                    sigma,
                    neighborhood: nb,
                    trials,
                    mean_error_deg: errors.iter().sum::<f64>() / n,
                    max_error_deg: errors.iter().cloned().fold(0.0, f64::max),
                    failures,
                });
            }
        }
    }
    rows
}
