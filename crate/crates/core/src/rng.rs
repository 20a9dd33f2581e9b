//! Seeded random streams.
//!
//! Every run draws from a ChaCha8 generator keyed by the run seed, with a
//! separate stream id per consumer so that, for example, changing how many
//! minibatch shuffles happen never perturbs environment randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent random streams within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Env = 0,
    Agent = 1,
    Minibatch = 2,
    Init = 3,
    Eval = 4,
    Data = 5,
}

pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
