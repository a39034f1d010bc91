//! Seeded random streams. Every stochastic routine derives its generator from
//! a master seed plus a label, so results never depend on call order or on
//! how many threads ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Generator for substream `(label, index)` of `seed`.
pub fn stream(seed: u64, label: &str, index: u64) -> Rng {
    let h = fnv1a(label.bytes(), 0xcbf2_9ce4_8422_2325);
    let h = fnv1a(index.to_le_bytes(), h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}
