//! Seeded RNG used everywhere randomness appears.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as LabRng;

pub fn seeded(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

/// Independent stream `stream` of `seed`; lets per-item work be reproduced
/// regardless of processing order.
pub fn stream(seed: u64, stream: u64) -> LabRng {
    let mut rng = LabRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
