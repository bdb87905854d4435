//! Seeded pseudo-random number generation.
//!
//! Every random draw in the toolkit goes through [`seeded`], which expands a
//! 64-bit seed with splitmix64 into xoshiro256** state, so runs are
//! reproducible across machines.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type Rng = Xoshiro256StarStar;

/// Creates the generator for `seed` (splitmix64 seeding of xoshiro256**).
pub fn seeded(seed: u64) -> Rng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Derives an independent stream for a named sub-task so that adding a new
/// consumer of randomness does not perturb existing ones.
pub fn derive(seed: u64, stream: u64) -> Rng {
    let mixed = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    Xoshiro256StarStar::seed_from_u64(mixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded(7);
        let mut b = seeded(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let mut a = derive(7, 1);
        let mut b = derive(7, 2);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn splitmix_seeding_matches_reference() {
        // splitmix64(0) first outputs, used as xoshiro256** state; the first
        // xoshiro256** output for seed 0 computed by the reference C code.
        let mut r = seeded(0);
        assert_eq!(r.next_u64(), 0x99EC_5F36_CB75_F2B4);
    }
}
