//! Deterministic seed derivation.
//!
//! All seeds are produced with the SplitMix64 finaliser:
//!
//! ```text
//! mix(z) = z + 0x9E3779B97F4A7C15
//!          z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!          z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!          z ^ (z >> 31)
//! derive_seed(master, n, r) = mix(mix(mix(master) ^ n) ^ r)
//! derive_stream(seed, k)    = mix(seed ^ mix(k ^ 0x5EED))
//! ```
//!
//! `mix` is a bijection on u64, so for fixed `(master, n)` distinct
//! replication indices always give distinct seeds.

pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `replication` at sample size `n`.
pub fn derive_seed(master_seed: u64, n: u64, replication: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ n) ^ replication)
}

/// Independent sub-stream `k` of `seed`.
pub fn derive_stream(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64(k ^ 0x5EED))
}
