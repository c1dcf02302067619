//! Stable derivation of per-task RNG seeds from one master seed.
//!
//! Every randomized stage (partition sampling, classifier init, slice
//! sampling, synthetic generation) owns an RNG seeded through this mixer,
//! so results are identical regardless of how many workers execute the
//! stages or in what order.

/// SplitMix64 finalizer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a master seed with two stream coordinates (e.g. phase index and
/// partition index) into an independent 64-bit seed.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ a) ^ b)
}
