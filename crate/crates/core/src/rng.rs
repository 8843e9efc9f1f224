//! Seeded random streams.
//!
//! Every random decision in a run derives from one user seed. Each consumer
//! draws from its own ChaCha stream so that, for example, changing the batch
//! order never perturbs the weight initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Corruption = 3,
    CvSplit = 4,
    Data = 5,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
