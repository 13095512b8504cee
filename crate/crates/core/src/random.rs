//! Seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random source every stochastic operation draws from.
pub type RandomStream = ChaCha8Rng;

/// Independent stream `id` under `seed`. Streams with different ids never overlap.
pub fn stream(seed: u64, id: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
