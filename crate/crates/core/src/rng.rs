//! Deterministic derivation of independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Generator for work unit `unit` (a particle or a chain) under `seed`.
pub fn unit_rng(seed: u64, unit: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, unit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: HashSet<u64> = (0..100)
            .flat_map(|s| (0..100).map(move |u| derive_seed(s, u)))
            .collect();
        assert_eq!(seeds.len(), 10_000);
    }
}
