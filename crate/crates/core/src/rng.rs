use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used by every seeded routine in the crate.
pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the `index`-th independent replicate of a seeded routine.
pub fn derived(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}
