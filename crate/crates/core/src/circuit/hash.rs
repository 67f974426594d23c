//! Arithmetization-friendly hash used both to commit to the mask vector and
//! to expand the negotiated seed into it.
//!
//! The permutation applies `R` rounds of `y <- (y + c_t)^e`; the sponge
//! absorbs one element at a time with `state <- Perm(state + x)`.
//!
//! WARNING: the default round count (11) is sized for a desk-scale prover,
//! not for cryptographic security.

use sha2::{Digest, Sha256};

use super::gadgets::pow_gadget;
use super::r1cs::{ConstraintSystem, LinearCombination};
use crate::field::PrimeField;

pub const DEFAULT_HASH_ROUNDS: usize = 11;
pub const DEFAULT_CONSTANT_SEED: &str = "bpfl/algebraic-hash/round-constants/v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlgebraicHashParams<F: PrimeField> {
    constants: Vec<F>,
    exponent: u64,
}

impl<F: PrimeField> Default for AlgebraicHashParams<F> {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_ROUNDS)
    }
}

impl<F: PrimeField> AlgebraicHashParams<F> {
    pub fn new(rounds: usize) -> Self {
        Self::from_seed(rounds, DEFAULT_CONSTANT_SEED)
    }

    /// Round constants drawn by rejection sampling from SHA-256 in counter mode
    /// over `seed`, so they are reproducible from the seed string alone.
    pub fn from_seed(rounds: usize, seed: &str) -> Self {
        let bits = F::NUM_BITS as usize;
        let mut constants = Vec::with_capacity(rounds);
        let mut counter = 0u64;
        while constants.len() < rounds {
            let mut hasher = Sha256::new();
            hasher.update(seed.as_bytes());
            hasher.update(counter.to_be_bytes());
            counter += 1;
            let mut bytes: [u8; 32] = hasher.finalize().into();
            // keep the low `bits` bits of the big-endian integer
            for (i, b) in bytes.iter_mut().enumerate() {
                let bit_hi = 256 - 8 * i;
                if bit_hi <= bits {
                    continue;
                }
                let keep = bits.saturating_sub(256 - 8 * (i + 1));
                *b &= ((1u16 << keep) - 1) as u8;
            }
            if let Some(c) = F::from_bytes_be(&bytes) {
                constants.push(c);
            }
        }
        AlgebraicHashParams {
            constants,
            exponent: F::HASH_EXPONENT,
        }
    }

    pub fn rounds(&self) -> usize {
        self.constants.len()
    }

    pub fn constants(&self) -> &[F] {
        &self.constants
    }

    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    pub fn permute(&self, mut y: F) -> F {
        for c in &self.constants {
            y = (y + *c).pow(self.exponent);
        }
        y
    }
}

/// Sponge hash of `elements`; the empty input hashes to zero.
pub fn algebraic_hash<F: PrimeField>(elements: &[F], params: &AlgebraicHashParams<F>) -> F {
    elements
        .iter()
        .fold(F::ZERO, |state, x| params.permute(state + *x))
}

/// In-circuit counterpart of [`algebraic_hash`].
pub fn hash_gadget<F: PrimeField>(
    cs: &mut ConstraintSystem<F>,
    elements: &[LinearCombination<F>],
    params: &AlgebraicHashParams<F>,
) -> LinearCombination<F> {
    let mut state = LinearCombination::zero();
    for x in elements {
        let mut y = state + x.clone();
        for c in params.constants() {
            y = pow_gadget(cs, y + LinearCombination::constant(*c), params.exponent());
        }
        state = y;
    }
    state
}
