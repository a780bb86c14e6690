//! Deterministic RNG plumbing.
//!
//! Everything random in this crate flows through [`ChaCha8Rng`] so results
//! are identical across platforms and across reruns with the same seed.
//! [`substream`] derives independent child seeds from a root seed plus
//! labels, so e.g. run 3 / task 17 always sees the same stream regardless
//! of how many draws other runs consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a root seed with up to two labels into a child seed.
/// Splitmix64-style finalizer, applied per component.
pub fn mix_seed(root: u64, a: u64, b: u64) -> u64 {
    let mut z = root;
    for x in [a.wrapping_add(0x9e37_79b9_7f4a_7c15), b.wrapping_add(0xbf58_476d_1ce4_e5b9)] {
        z = z.wrapping_add(x);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// A seeded generator for the `(a, b)` substream of `root`.
pub fn substream(root: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(root, a, b))
}
