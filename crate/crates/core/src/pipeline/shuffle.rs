use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Fisher–Yates shuffle driven by SplitMix64 seeded with `seed`.
///
/// For `i` from `n - 1` down to 1, swap element `i` with element
/// `next_u64() % (i + 1)`. The modulo form is kept so the permutation can
/// be reproduced exactly by other implementations.
pub fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = SplitMix64::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // Reference sequence of the published splitmix64 for state 1234567.
        let mut rng = SplitMix64::seed_from_u64(1234567);
        let expected = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn permutation_is_deterministic() {
        let mut a: Vec<u32> = (0..100).collect();
        let mut b = a.clone();
        shuffle(&mut a, 42);
        shuffle(&mut b, 42);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        let mut c: Vec<u32> = (0..100).collect();
        shuffle(&mut c, 43);
        assert_ne!(a, c);
    }
}
