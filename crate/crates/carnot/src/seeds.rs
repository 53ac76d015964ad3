//! Deterministic seed derivation.
//!
//! Every source of randomness in the crate is a `ChaCha8Rng` derived from a
//! master seed plus a small number of stream labels. Child streams are
//! independent of evaluation order, so parallel and sequential runs of the
//! same seed produce identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; dispersal step for seed mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a master seed and two stream labels.
pub fn child_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut s = splitmix64(master);
    s = splitmix64(s ^ a);
    splitmix64(s ^ b)
}

/// A seeded generator for the given stream.
pub fn child_rng(master: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, a, b))
}
