//! Deterministic seed streams.
//!
//! Every randomized routine takes a `u64` seed and derives sub-seeds with
//! [`derive_seed`], so replications, restarts, segments, and slices each get
//! an independent stream while the whole pipeline stays reproducible from a
//! single master seed, independent of worker count or evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; good avalanche behavior for combining tags.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a base seed and a path of integer tags.
///
/// `derive_seed(s, &[a, b])` differs from `derive_seed(s, &[b, a])` and from
/// `derive_seed(s, &[a])`, so hierarchical derivations do not collide.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = mix(base ^ 0x7465_6e73_6567_5f73); // constant domain separator
    for (depth, &t) in tags.iter().enumerate() {
        state = mix(state ^ mix(t.wrapping_add(depth as u64 + 1)));
    }
    state
}

/// Seeded generator for a derived stream.
pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_deterministic_and_order_sensitive() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(1, &[2, 0]));
        assert_ne!(derive_seed(1, &[]), derive_seed(2, &[]));
    }

    #[test]
    fn streams_do_not_visibly_collide() {
        use std::collections::HashSet;
        let mut seen = HashSet::new();
        for base in 0..8u64 {
            for a in 0..32u64 {
                for b in 0..32u64 {
                    seen.insert(derive_seed(base, &[a, b]));
                }
            }
        }
        assert_eq!(seen.len(), 8 * 32 * 32);
    }
}
