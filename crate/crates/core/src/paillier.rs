//! Paillier additively homomorphic encryption with the `g = N + 1` simplification.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bigint::{random_below, random_prime};

pub const DEFAULT_KEY_BITS: u64 = 2048;
pub const TEST_KEY_BITS: u64 = 512;
const MILLER_RABIN_ROUNDS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("key size {0} bits is invalid: must be even and at least 512")]
    InvalidKeySize(u64),
    #[error("plaintext is outside [0, N)")]
    PlaintextOutOfRange,
    #[error("ciphertext was produced under a different public key")]
    KeyMismatch,
    #[error("ciphertext is outside [0, N^2)")]
    MalformedCiphertext,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaillierPublicKey {
    n: BigUint,
    n_squared: BigUint,
    tag: [u8; 8],
}

#[derive(Clone, PartialEq, Eq)]
pub struct PaillierSecretKey {
    lambda: BigUint,
    mu: BigUint,
    public: PaillierPublicKey,
}

impl std::fmt::Debug for PaillierSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PaillierSecretKey").finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct PaillierKeypair {
    pub public: PaillierPublicKey,
    pub secret: PaillierSecretKey,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaillierCiphertext {
    value: BigUint,
    key_tag: [u8; 8],
}

impl PaillierCiphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.value.to_bytes_be()
    }
}

/// Generates a keypair whose modulus `N` has exactly `bits` bits.
pub fn keygen<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<PaillierKeypair, PaillierError> {
    if bits < 512 || bits % 2 != 0 {
        return Err(PaillierError::InvalidKeySize(bits));
    }
    loop {
        let q1 = random_prime(rng, bits / 2, MILLER_RABIN_ROUNDS);
        let q2 = random_prime(rng, bits / 2, MILLER_RABIN_ROUNDS);
        if q1 == q2 {
            continue;
        }
        let n = &q1 * &q2;
        let phi = (&q1 - 1u32) * (&q2 - 1u32);
        if !n.gcd(&phi).is_one() {
            continue;
        }
        let lambda = (&q1 - 1u32).lcm(&(&q2 - 1u32));
        let Some(mu) = lambda.modinv(&n) else {
            continue;
        };
        let public = PaillierPublicKey::from_modulus(n);
        return Ok(PaillierKeypair {
            secret: PaillierSecretKey {
                lambda,
                mu,
                public: public.clone(),
            },
            public,
        });
    }
}

impl PaillierPublicKey {
    pub fn from_modulus(n: BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut tag = [0u8; 8];
        tag.copy_from_slice(&digest[..8]);
        PaillierPublicKey {
            n_squared: &n * &n,
            n,
            tag,
        }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// `N` as big-endian bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.n.to_bytes_be()
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self::from_modulus(BigUint::from_bytes_be(bytes))
    }

    /// `c = (1 + m N) * r^N mod N^2` with fresh `r` coprime to `N`.
    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<PaillierCiphertext, PaillierError> {
        if m >= &self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        let r = loop {
            let r = random_below(rng, &self.n);
            if r > BigUint::one() && r.gcd(&self.n).is_one() {
                break r;
            }
        };
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(PaillierCiphertext {
            value: (gm * rn) % &self.n_squared,
            key_tag: self.tag,
        })
    }

    fn check(&self, c: &PaillierCiphertext) -> Result<(), PaillierError> {
        if c.key_tag != self.tag {
            Err(PaillierError::KeyMismatch)
        } else {
            Ok(())
        }
    }

    /// Ciphertext whose plaintext is `(m1 + m2) mod N`.
    pub fn add(
        &self,
        a: &PaillierCiphertext,
        b: &PaillierCiphertext,
    ) -> Result<PaillierCiphertext, PaillierError> {
        self.check(a)?;
        self.check(b)?;
        Ok(PaillierCiphertext {
            value: (&a.value * &b.value) % &self.n_squared,
            key_tag: self.tag,
        })
    }

    /// Ciphertext whose plaintext is `(m * l) mod N`.
    pub fn scalar_mul(
        &self,
        c: &PaillierCiphertext,
        l: &BigUint,
    ) -> Result<PaillierCiphertext, PaillierError> {
        self.check(c)?;
        Ok(PaillierCiphertext {
            value: c.value.modpow(l, &self.n_squared),
            key_tag: self.tag,
        })
    }

    /// Rebuilds a ciphertext received over the wire under this key.
    pub fn ciphertext_from_bytes(&self, bytes: &[u8]) -> Result<PaillierCiphertext, PaillierError> {
        let value = BigUint::from_bytes_be(bytes);
        if value >= self.n_squared {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(PaillierCiphertext {
            value,
            key_tag: self.tag,
        })
    }
}

impl PaillierSecretKey {
    pub fn public(&self) -> &PaillierPublicKey {
        &self.public
    }

    /// `lambda` and `mu`, each behind a 4-byte big-endian length.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [&self.lambda, &self.mu] {
            let b = v.to_bytes_be();
            out.extend_from_slice(&(b.len() as u32).to_be_bytes());
            out.extend_from_slice(&b);
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes); `None` on malformed input or
    /// when `mu` is not the inverse of `lambda` modulo `N`.
    pub fn from_bytes(public: &PaillierPublicKey, bytes: &[u8]) -> Option<Self> {
        let mut rest = bytes;
        let mut take = || -> Option<BigUint> {
            let len = u32::from_be_bytes(rest.get(..4)?.try_into().ok()?) as usize;
            let v = BigUint::from_bytes_be(rest.get(4..4 + len)?);
            rest = &rest[4 + len..];
            Some(v)
        };
        let lambda = take()?;
        let mu = take()?;
        if !rest.is_empty() || (&lambda * &mu) % &public.n != BigUint::one() {
            return None;
        }
        Some(PaillierSecretKey {
            lambda,
            mu,
            public: public.clone(),
        })
    }

    /// `m = L(c^lambda mod N^2) * mu mod N` with `L(x) = (x - 1) / N`.
    pub fn decrypt(&self, c: &PaillierCiphertext) -> Result<BigUint, PaillierError> {
        self.public.check(c)?;
        let pk = &self.public;
        let x = c.value.modpow(&self.lambda, &pk.n_squared);
        let l = (x - 1u32) / &pk.n;
        Ok((l * &self.mu) % &pk.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigint::random_below;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keys(seed: u64) -> PaillierKeypair {
        keygen(TEST_KEY_BITS, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn roundtrip_random_plaintexts() {
        let kp = keys(1);
        assert_eq!(kp.public.bits(), 512);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..100 {
            let m = random_below(&mut rng, kp.public.modulus());
            let c = kp.public.encrypt(&m, &mut rng).unwrap();
            assert_eq!(kp.secret.decrypt(&c).unwrap(), m);
        }
    }

    #[test]
    fn distinct_randomness_gives_distinct_moduli() {
        assert_ne!(keys(3).public.modulus(), keys(4).public.modulus());
    }

    #[test]
    fn rejects_small_or_odd_key_sizes() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        assert_eq!(keygen(100, &mut rng).unwrap_err(), PaillierError::InvalidKeySize(100));
        assert_eq!(keygen(513, &mut rng).unwrap_err(), PaillierError::InvalidKeySize(513));
    }

    #[test]
    fn encrypt_examples() {
        let kp = keys(6);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let c = kp.public.encrypt(&big(42), &mut rng).unwrap();
        assert_eq!(kp.secret.decrypt(&c).unwrap(), big(42));
        let z = kp.public.encrypt(&big(0), &mut rng).unwrap();
        assert_eq!(kp.secret.decrypt(&z).unwrap(), big(0));
        assert_eq!(
            kp.public.encrypt(kp.public.modulus(), &mut rng).unwrap_err(),
            PaillierError::PlaintextOutOfRange
        );
    }

    #[test]
    fn homomorphic_addition_examples() {
        let kp = keys(8);
        let pk = &kp.public;
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let enc = |m: BigUint, rng: &mut ChaCha20Rng| pk.encrypt(&m, rng).unwrap();
        let sum = pk.add(&enc(big(3), &mut rng), &enc(big(4), &mut rng)).unwrap();
        assert_eq!(kp.secret.decrypt(&sum).unwrap(), big(7));
        let m = big(123_456_789);
        let id = pk.add(&enc(m.clone(), &mut rng), &enc(big(0), &mut rng)).unwrap();
        assert_eq!(kp.secret.decrypt(&id).unwrap(), m);
        let wrap = pk
            .add(&enc(pk.modulus() - 1u32, &mut rng), &enc(big(1), &mut rng))
            .unwrap();
        assert_eq!(kp.secret.decrypt(&wrap).unwrap(), big(0));
    }

    #[test]
    fn scalar_multiplication_examples() {
        let kp = keys(10);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let c = kp.public.encrypt(&big(5), &mut rng).unwrap();
        for (l, want) in [(3u64, 15u64), (0, 0), (1, 5)] {
            let r = kp.public.scalar_mul(&c, &big(l)).unwrap();
            assert_eq!(kp.secret.decrypt(&r).unwrap(), big(want));
        }
    }

    #[test]
    fn mixing_keys_is_rejected() {
        let (a, b) = (keys(12), keys(13));
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let ca = a.public.encrypt(&big(1), &mut rng).unwrap();
        let cb = b.public.encrypt(&big(1), &mut rng).unwrap();
        assert_eq!(a.public.add(&ca, &cb).unwrap_err(), PaillierError::KeyMismatch);
        assert_eq!(b.secret.decrypt(&ca).unwrap_err(), PaillierError::KeyMismatch);
        assert_eq!(a.public.scalar_mul(&cb, &big(2)).unwrap_err(), PaillierError::KeyMismatch);
    }

    #[test]
    fn key_bytes_roundtrip() {
        let kp = keys(17);
        let pk = PaillierPublicKey::from_bytes(&kp.public.to_bytes());
        assert_eq!(pk, kp.public);
        let sk = PaillierSecretKey::from_bytes(&pk, &kp.secret.to_bytes()).unwrap();
        assert!(sk == kp.secret);
        assert!(PaillierSecretKey::from_bytes(&pk, &[0, 0, 0, 1, 5]).is_none());
        let other = keys(18);
        assert!(PaillierSecretKey::from_bytes(&other.public, &kp.secret.to_bytes()).is_none());
    }

    #[test]
    fn wire_bytes_roundtrip() {
        let kp = keys(15);
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let c = kp.public.encrypt(&big(99), &mut rng).unwrap();
        let back = kp.public.ciphertext_from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        let too_big = (kp.public.modulus() * kp.public.modulus()).to_bytes_be();
        assert_eq!(
            kp.public.ciphertext_from_bytes(&too_big).unwrap_err(),
            PaillierError::MalformedCiphertext
        );
    }
}
