//! Mask negotiation: clients agree on a secret seed through encrypted
//! aggregation at the server, then expand it into the shared mask vector.
//!
//! Every client holds the same decryption key, so any client could decrypt
//! another's share; only the server is kept blind.

use num_bigint::BigUint;
use rand::Rng;
use thiserror::Error;

use crate::bigint::random_bits;
use crate::circuit::hash::{algebraic_hash, AlgebraicHashParams};
use crate::field::PrimeField;
use crate::paillier::{PaillierCiphertext, PaillierError, PaillierPublicKey};

/// Seeds are drawn from `[0, 2^SEED_BITS)`.
pub const SEED_BITS: u64 = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("no seed shares to aggregate")]
    NoShares,
    #[error("mask dimension must be at least 1")]
    EmptyMask,
    #[error(transparent)]
    Paillier(#[from] PaillierError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedShare {
    pub client: u32,
    pub ciphertext: PaillierCiphertext,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskVector<F: PrimeField> {
    pub r: Vec<F>,
    pub seed: BigUint,
}

/// Draws a fresh seed and encrypts it; returns the seed alongside the share.
pub fn client_share<R: Rng + ?Sized>(
    client: u32,
    pk: &PaillierPublicKey,
    rng: &mut R,
) -> Result<(BigUint, SeedShare), MaskError> {
    let seed = random_bits(rng, SEED_BITS);
    let ciphertext = pk.encrypt(&seed, rng)?;
    Ok((seed, SeedShare { client, ciphertext }))
}

/// Homomorphic sum of all shares. Runs without any secret key.
pub fn server_aggregate_seeds(
    pk: &PaillierPublicKey,
    shares: &[SeedShare],
) -> Result<PaillierCiphertext, MaskError> {
    let (first, rest) = shares.split_first().ok_or(MaskError::NoShares)?;
    rest.iter()
        .try_fold(first.ciphertext.clone(), |acc, s| pk.add(&acc, &s.ciphertext))
        .map_err(MaskError::from)
}

/// `r_j = hash([s mod p, j])` for `j` in `0..d`.
pub fn expand_mask<F: PrimeField>(
    seed: &BigUint,
    d: usize,
    hash: &AlgebraicHashParams<F>,
) -> Result<MaskVector<F>, MaskError> {
    if d == 0 {
        return Err(MaskError::EmptyMask);
    }
    let s = F::from_biguint(seed);
    let r = (0..d)
        .map(|j| algebraic_hash(&[s, F::from_u64(j as u64)], hash))
        .collect();
    Ok(MaskVector {
        r,
        seed: seed.clone(),
    })
}
