//! Deterministic randomness.
//!
//! Every random choice in the crate draws from ChaCha8 (the 8-round ChaCha
//! stream cipher used as a counter-based generator), seeded through
//! `rand_core::SeedableRng::seed_from_u64`. Uniform `f64` draws take the
//! top 53 bits of a `u64` output, giving values in `[0, 1)`.
//!
//! Sub-streams (per instance, per repetition) are keyed with
//! [`derive_seed`], a SplitMix64 finalizer over `master ^ stream * golden`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
