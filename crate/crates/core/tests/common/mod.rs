#![allow(dead_code)]

use hcg_core::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 25 Walker sample points with `x, x̃ ∈ [−1, 1]` and `y ∈ [0.5, 2]`.
pub fn walker_points(seed: u64) -> Vec<Point> {
    let mut r = rng(seed);
    (0..25)
        .map(|_| {
            Point::from([
                r.random_range(-1.0..1.0),
                r.random_range(0.5..2.0),
                r.random_range(-1.0..1.0),
            ])
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
