//! Benchmark fixtures.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srb_core::{Lattice, LatticeState};

/// Seeded random state on V_N.
pub fn state(d: usize, n: usize, seed: u64) -> LatticeState {
    let lat = Lattice::new(d, n).expect("valid lattice");
    LatticeState::random(lat, &mut ChaCha8Rng::seed_from_u64(seed))
}
