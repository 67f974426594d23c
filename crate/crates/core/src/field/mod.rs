//! Prime-field arithmetic.
//!
//! Every field in this crate is an instance of [`Fp`], a four-limb Montgomery
//! representation parameterised by a [`FieldConfig`]. Three configurations
//! ship with the crate:
//!
//! * [`Bn254Scalar`]: the default ~254-bit modulus used by circuits and
//!   proofs (two-adicity 28, hash exponent 5).
//! * [`Mersenne61`]: `2^61 - 1`, used by statistical tests where a field
//!   small enough to bucket is convenient.
//! * [`Toy251`]: `p = 251`, small enough for exhaustive enumeration.

mod fp;
mod params;

pub use fp::{Bn254Scalar, FieldConfig, Fp, Mersenne61, Toy251};
pub use params::{FieldError, FieldParams};

use std::fmt::{Debug, Display};
use std::hash::Hash;
use std::iter::{Product, Sum};
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::{BigInt, BigUint, Sign};
use rand::Rng;

/// The default circuit field.
pub type Fr = Fp<Bn254Scalar>;
/// `GF(2^61 - 1)`.
pub type F61 = Fp<Mersenne61>;
/// `GF(251)`.
pub type F251 = Fp<Toy251>;

/// Arithmetic interface shared by all prime fields used in the crate.
pub trait PrimeField:
    Copy
    + Clone
    + Debug
    + Display
    + Default
    + Eq
    + Ord
    + Hash
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Product
{
    const ZERO: Self;
    const ONE: Self;
    /// Bit length of the modulus.
    const NUM_BITS: u32;
    /// Largest `a` with `2^a | p - 1`.
    const TWO_ADICITY: u32;
    /// Exponent `e` of the algebraic hash S-box; `gcd(e, p - 1) = 1`.
    const HASH_EXPONENT: u64;

    fn modulus() -> BigUint;
    fn from_u64(v: u64) -> Self;
    /// Reduces an arbitrary non-negative integer modulo `p`.
    fn from_biguint(v: &BigUint) -> Self;
    fn to_biguint(&self) -> BigUint;
    /// Canonical little-endian limbs of the residue in `[0, p)`.
    fn to_canonical_limbs(&self) -> [u64; 4];
    /// Inverse of [`to_canonical_limbs`](Self::to_canonical_limbs); `None` if `>= p`.
    fn from_canonical_limbs(limbs: [u64; 4]) -> Option<Self>;
    fn inverse(&self) -> Option<Self>;
    fn square(&self) -> Self;
    /// Exponentiation by a little-endian multi-limb exponent.
    fn pow_limbs(&self, exp: &[u64]) -> Self;
    /// Generator of the full multiplicative group.
    fn multiplicative_generator() -> Self;
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    fn pow(&self, exp: u64) -> Self {
        self.pow_limbs(&[exp])
    }

    fn double(&self) -> Self {
        *self + *self
    }

    fn from_i64(v: i64) -> Self {
        let mag = Self::from_u64(v.unsigned_abs());
        if v < 0 {
            -mag
        } else {
            mag
        }
    }

    fn from_i128(v: i128) -> Self {
        let abs = v.unsigned_abs();
        let lo = Self::from_u64(abs as u64);
        let hi = Self::from_u64((abs >> 64) as u64);
        let two64 = Self::from_u64(1 << 32) * Self::from_u64(1 << 32);
        let mag = hi * two64 + lo;
        if v < 0 {
            -mag
        } else {
            mag
        }
    }

    fn from_bigint(v: &BigInt) -> Self {
        let mag = Self::from_biguint(v.magnitude());
        if v.sign() == Sign::Minus {
            -mag
        } else {
            mag
        }
    }

    /// Signed representative in `(-p/2, p/2]`.
    fn signed_lift(&self) -> BigInt {
        let v = self.to_biguint();
        let p = Self::modulus();
        if &v > &(&p >> 1u32) {
            -BigInt::from(p - v)
        } else {
            BigInt::from(v)
        }
    }

    /// Primitive `2^log_n`-th root of unity, if the two-adic subgroup is large enough.
    fn root_of_unity(log_n: u32) -> Option<Self> {
        if log_n > Self::TWO_ADICITY {
            return None;
        }
        let exp = (Self::modulus() - 1u32) >> log_n;
        Some(Self::multiplicative_generator().pow_limbs(&exp.to_u64_digits()))
    }

    /// 32-byte big-endian encoding of the canonical residue.
    fn to_bytes_be(&self) -> [u8; 32] {
        let limbs = self.to_canonical_limbs();
        let mut out = [0u8; 32];
        for (i, limb) in limbs.iter().enumerate() {
            out[24 - 8 * i..32 - 8 * i].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    /// Rejects non-canonical encodings (values `>= p`).
    fn from_bytes_be(bytes: &[u8; 32]) -> Option<Self> {
        let mut limbs = [0u64; 4];
        for (i, limb) in limbs.iter_mut().enumerate() {
            let mut word = [0u8; 8];
            word.copy_from_slice(&bytes[24 - 8 * i..32 - 8 * i]);
            *limb = u64::from_be_bytes(word);
        }
        Self::from_canonical_limbs(limbs)
    }
}

/// Inverts every nonzero element of `values` in place with one field inversion.
/// Zero entries are left as zero.
pub fn batch_inverse<F: PrimeField>(values: &mut [F]) {
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = F::ONE;
    for v in values.iter() {
        prefix.push(acc);
        if !v.is_zero() {
            acc *= *v;
        }
    }
    let mut inv = acc.inverse().expect("product of nonzero elements is nonzero");
    for (v, pre) in values.iter_mut().zip(prefix).rev() {
        if v.is_zero() {
            continue;
        }
        let next = inv * *v;
        *v = inv * pre;
        inv = next;
    }
}
