//! Seed derivation. Every job carries one seed; sub-tasks derive their own
//! stream from it so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type JobRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of sub-task `index` in stream `tag`.
pub fn sub_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let tag_hash = tag
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix(mix(seed ^ tag_hash).wrapping_add(index))
}

pub fn rng_from(seed: u64) -> JobRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sub_rng(seed: u64, tag: &str, index: u64) -> JobRng {
    rng_from(sub_seed(seed, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_by_tag_and_index() {
        let a = sub_seed(7, "transfer", 0);
        assert_eq!(a, sub_seed(7, "transfer", 0));
        assert_ne!(a, sub_seed(7, "transfer", 1));
        assert_ne!(a, sub_seed(7, "train", 0));
        assert_ne!(a, sub_seed(8, "transfer", 0));
    }
}
