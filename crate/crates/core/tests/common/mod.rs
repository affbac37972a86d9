#![allow(dead_code)]

use dfa_esn::numerics::{rng_matrix, scale_to_radius, SeededRng, WeightDist};
use dfa_esn::reservoir::{Activation, ReservoirLayer};
use rand::Rng;

/// Drives one reservoir from two random initial states with the same input
/// sequence and returns the final Euclidean distance between the states.
pub fn echo_distance(seed: u64, n: usize, rho: f64, activation: Activation, leak: f64, steps: usize) -> f64 {
    let rng = SeededRng::new(seed);
    let w = rng_matrix(&rng, "esp/w_rec", n, n, WeightDist::uniform(-1.0, 1.0)).unwrap();
    let w_rec = scale_to_radius(&w, rho).unwrap();
    let w_in = rng_matrix(&rng, "esp/w_in", n, 1, WeightDist::uniform(-0.5, 0.5)).unwrap();
    let mut a = ReservoirLayer::from_parts_unconstrained(w_in, w_rec, leak, activation).unwrap();
    let mut b = a.clone();
    let mut s = rng.stream("esp/states");
    let lo = if activation == Activation::Sigmoid { 0.0 } else { -1.0 };
    let xa: Vec<f64> = (0..n).map(|_| s.random_range(lo..1.0)).collect();
    let xb: Vec<f64> = (0..n).map(|_| s.random_range(lo..1.0)).collect();
    a.set_state(&xa).unwrap();
    b.set_state(&xb).unwrap();
    let mut u = rng.stream("esp/input");
    for _ in 0..steps {
        let x = [u.random_range(-1.0..1.0)];
        a.step(&x).unwrap();
        b.step(&x).unwrap();
    }
    a.state()
        .iter()
        .zip(b.state())
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}
