//! Named random streams derived from one master seed, so that enabling a
//! feature that consumes randomness never shifts another feature's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Env = 2,
    Warmup = 3,
    Noise = 4,
    Projection = 5,
    Sampling = 6,
    Eval = 7,
    Diagnostics = 8,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
