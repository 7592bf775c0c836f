#![allow(dead_code)]

use nalgebra::{Rotation3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wbc_core::robot_model::{Configuration, MinimalState, MinimalVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_state(rng: &mut impl Rng) -> MinimalState<f64> {
    let mut u = |a: f64, b: f64| rng.random_range(a..b);
    let config = Configuration::new(
        Vector3::new(u(-1.0, 1.0), u(-1.0, 1.0), u(0.1, 0.5)),
        Rotation3::from_euler_angles(u(-0.4, 0.4), u(-0.4, 0.4), u(-3.0, 3.0)),
        Vector6::new(u(-1.4, -0.4), u(0.8, 2.6), u(-3.0, 3.0), u(-1.4, -0.4), u(0.8, 2.6), u(-3.0, 3.0)),
    );
    let velocity = MinimalVector::from_fn(|_, _| u(-1.0, 1.0));
    MinimalState { config, velocity }
}

pub fn tilted(a: f64, b: f64) -> Vector3<f64> {
    Vector3::new(a, b, 1.0).normalize()
}
