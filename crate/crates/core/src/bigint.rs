//! Big-integer helpers: uniform sampling and Miller–Rabin primality.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Uniform integer with at most `bits` bits.
pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    if bits == 0 {
        return BigUint::zero();
    }
    let nbytes = bits.div_ceil(8) as usize;
    let mut bytes = vec![0u8; nbytes];
    rng.fill_bytes(&mut bytes);
    let excess = (nbytes as u64 * 8 - bits) as u32;
    bytes[0] &= 0xffu8 >> excess;
    BigUint::from_bytes_be(&bytes)
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub fn random_below<R: Rng + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "empty sampling range");
    let bits = bound.bits();
    loop {
        let candidate = random_bits(rng, bits);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Miller–Rabin with `rounds` random bases; error probability at most `4^-rounds`.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let range = n - 3u32;
    'witness: for _ in 0..rounds {
        let a = random_below(rng, &range) + 2u32;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random prime with exactly `bits` bits and its top two bits set, so that the
/// product of two such primes has exactly `2 * bits` bits.
pub fn random_prime<R: Rng + ?Sized>(rng: &mut R, bits: u64, rounds: usize) -> BigUint {
    assert!(bits >= 8);
    let top = (BigUint::one() << (bits - 1)) | (BigUint::one() << (bits - 2));
    loop {
        let candidate = random_bits(rng, bits) | &top | BigUint::one();
        if is_probable_prime(&candidate, rounds, rng) {
            return candidate;
        }
    }
}

pub fn lcm(a: &BigUint, b: &BigUint) -> BigUint {
    a.lcm(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn classifies_small_integers() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let primes: Vec<u32> = (0u32..2000)
            .filter(|&n| is_probable_prime(&BigUint::from(n), 20, &mut rng))
            .collect();
        let sieve: Vec<u32> = (0u32..2000)
            .filter(|&n| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
            .collect();
        assert_eq!(primes, sieve);
    }

    #[test]
    fn rejects_carmichael_numbers() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for c in [561u32, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265] {
            assert!(!is_probable_prime(&BigUint::from(c), 40, &mut rng), "{c}");
        }
    }

    #[test]
    fn random_prime_has_requested_width() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = random_prime(&mut rng, 128, 40);
        assert_eq!(p.bits(), 128);
        assert!(p.bit(126));
    }

    #[test]
    fn random_below_respects_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let bound = BigUint::from(1000u32);
        assert!((0..1000).all(|_| random_below(&mut rng, &bound) < bound));
    }
}
