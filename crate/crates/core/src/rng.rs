//! Independent random streams derived from one experiment seed.
//!
//! Every consumer draws from its own ChaCha stream so that, for example,
//! changing the number of collocation points never perturbs the noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Noise = 1,
    Subsample = 2,
    Collocation = 3,
    Extraction = 4,
    InitU = 5,
    InitN = 6,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
