//! Seed derivation. Every random choice in a run descends from one base seed
//! through these mixers, so runs are reproducible under any scheduling.

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed `index` of `base`.
pub fn derive(base: u64, index: u64) -> u64 {
    mix(mix(base) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for b in 0..50 {
            for i in 0..50 {
                assert!(seen.insert(derive(b, i)));
            }
        }
    }
}
