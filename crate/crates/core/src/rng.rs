//! Reproducible random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), seeded
//! with `ChaCha8Rng::seed_from_u64(seed)` and then moved to a dedicated stream
//! with `set_stream`. The stream id is `purpose << 48 | index`, so e.g. trial
//! 7's engine draws never overlap trial 7's data draws, and adding trials
//! never perturbs earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Label selection inside the engine.
    Engine = 0,
    TrainData = 1,
    TestData = 2,
    /// Monte Carlo integration in diagnostics.
    Integration = 3,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}
