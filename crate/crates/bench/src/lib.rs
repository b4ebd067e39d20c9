//! Shared inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyquery::SkyPosition;

/// `n` positions spread over a one-degree box around (185, -0.5).
pub fn cap(n: usize, seed: u64) -> Vec<SkyPosition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SkyPosition::from_radec(184.5 + rng.gen::<f64>(), -1.0 + rng.gen::<f64>()).unwrap())
        .collect()
}
