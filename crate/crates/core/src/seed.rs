//! Seed derivation for independent deterministic random streams.

/// Derives a sub-stream seed from a base seed and a stream tag.
///
/// One splitmix64 scramble of `base + tag`. Every component that needs its
/// own random stream (per-restart optimizer draws, per-fold shuffles,
/// per-grid-point sensor noise) derives its seed through this so outputs do
/// not depend on scheduling or evaluation order.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
