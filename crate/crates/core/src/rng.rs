//! Seeding conventions used throughout the crate.
//!
//! Every randomized routine takes a `u64` seed and runs on [`ChaCha8Rng`], a
//! portable counter-based generator whose output is identical on every
//! platform and architecture. Sub-seeds (per restart, per repetition, per
//! algorithm) are derived with [`derive_seed`], a pure function of the master
//! seed and an index path, so results never depend on execution order or
//! thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Builds the stream generator for a given seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a child seed from `master` and an index path.
///
/// The path encodes position in the experiment hierarchy, e.g.
/// `[SWEEP_POINT, scenario, repetition]`. Mixing is a SplitMix64 chain, so
/// distinct paths give statistically independent streams and the same path
/// always gives the same seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &index in path {
        state = splitmix64(state ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    state
}

/// SplitMix64 finalizer (Steele, Lea & Flood, 2014). Bijective on `u64`.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_path_same_seed() {
        assert_eq!(derive_seed(42, &[1, 2, 3]), derive_seed(42, &[1, 2, 3]));
    }

    #[test]
    fn distinct_paths_distinct_seeds() {
        // Not a collision-freeness proof, just a guard against accidental
        // path-flattening bugs like [1, 23] colliding with [12, 3].
        let seeds = [
            derive_seed(42, &[]),
            derive_seed(42, &[0]),
            derive_seed(42, &[1]),
            derive_seed(42, &[0, 0]),
            derive_seed(42, &[0, 1]),
            derive_seed(42, &[1, 0]),
            derive_seed(42, &[1, 23]),
            derive_seed(42, &[12, 3]),
        ];
        for (a, &sa) in seeds.iter().enumerate() {
            for &sb in seeds.iter().skip(a + 1) {
                assert_ne!(sa, sb);
            }
        }
    }

    #[test]
    fn generator_streams_are_reproducible() {
        let mut a = seeded(7);
        let mut b = seeded(7);
        for _ in 0..100 {
            let x: f64 = a.random_range(0.0..1.0);
            let y: f64 = b.random_range(0.0..1.0);
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
