//! Seed derivation for reproducible, schedule-independent random streams.
//!
//! Every randomized stage draws from a private ChaCha stream derived from
//! (master seed, stream index), so parallel builds produce identical output
//! regardless of worker count or evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby (seed, index) pairs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a generator for stream `index` of master seed `seed`.
pub fn derive(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let a = mix(seed);
    let b = mix(a ^ mix(index));
    let c = mix(b ^ 0x5851_f42d_4c95_7f2d);
    let d = mix(c ^ index);
    key[0..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..32].copy_from_slice(&d.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
