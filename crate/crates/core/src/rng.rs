//! Seeded, splittable random streams.
//!
//! Every stochastic routine in this crate draws from a `ChaCha8` generator
//! addressed by `(seed, stream index)`. Batches (walks, quadrature blocks,
//! trajectories) assign one stream per work item, so results are identical
//! regardless of thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Algorithm identifier echoed into run reports for provenance.
pub const RNG_ALGORITHM: &str = "ChaCha8 (64-bit seed, 64-bit stream index)";

/// Independent substream for work item `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
