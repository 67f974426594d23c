use std::cmp::Ordering;
use std::fmt;
use std::hash::Hash;
use std::iter::{Product, Sum};
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::BigUint;
use rand::Rng;

use super::PrimeField;

/// Static description of a prime modulus below `2^256`.
pub trait FieldConfig:
    'static + Copy + Clone + fmt::Debug + Default + PartialEq + Eq + Hash + Send + Sync
{
    /// Little-endian limbs of the (odd, prime) modulus.
    const MODULUS: [u64; 4];
    /// A generator of the multiplicative group.
    const GENERATOR: u64;
    const HASH_EXPONENT: u64;
}

/// Scalar field of BN254.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Bn254Scalar;

impl FieldConfig for Bn254Scalar {
    const MODULUS: [u64; 4] = [
        0x43e1f593f0000001,
        0x2833e84879b97091,
        0xb85045b68181585d,
        0x30644e72e131a029,
    ];
    const GENERATOR: u64 = 5;
    const HASH_EXPONENT: u64 = 5;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Mersenne61;

impl FieldConfig for Mersenne61 {
    const MODULUS: [u64; 4] = [(1 << 61) - 1, 0, 0, 0];
    const GENERATOR: u64 = 37;
    const HASH_EXPONENT: u64 = 17;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Toy251;

impl FieldConfig for Toy251 {
    const MODULUS: [u64; 4] = [251, 0, 0, 0];
    const GENERATOR: u64 = 6;
    const HASH_EXPONENT: u64 = 3;
}

#[inline(always)]
const fn adc(a: u64, b: u64, carry: u64) -> (u64, u64) {
    let t = a as u128 + b as u128 + carry as u128;
    (t as u64, (t >> 64) as u64)
}

#[inline(always)]
const fn sbb(a: u64, b: u64, borrow: u64) -> (u64, u64) {
    let t = (a as u128).wrapping_sub(b as u128 + borrow as u128);
    (t as u64, (t >> 127) as u64)
}

/// `a + b*c + carry`, returning (low, high).
#[inline(always)]
const fn mac(a: u64, b: u64, c: u64, carry: u64) -> (u64, u64) {
    let t = a as u128 + (b as u128) * (c as u128) + carry as u128;
    (t as u64, (t >> 64) as u64)
}

const fn geq(a: &[u64; 4], b: &[u64; 4]) -> bool {
    let mut i = 4;
    while i > 0 {
        i -= 1;
        if a[i] > b[i] {
            return true;
        }
        if a[i] < b[i] {
            return false;
        }
    }
    true
}

const fn sub_limbs(a: &[u64; 4], b: &[u64; 4]) -> ([u64; 4], u64) {
    let mut out = [0u64; 4];
    let mut borrow = 0;
    let mut i = 0;
    while i < 4 {
        let (d, br) = sbb(a[i], b[i], borrow);
        out[i] = d;
        borrow = br;
        i += 1;
    }
    (out, borrow)
}

const fn add_limbs(a: &[u64; 4], b: &[u64; 4]) -> ([u64; 4], u64) {
    let mut out = [0u64; 4];
    let mut carry = 0;
    let mut i = 0;
    while i < 4 {
        let (s, c) = adc(a[i], b[i], carry);
        out[i] = s;
        carry = c;
        i += 1;
    }
    (out, carry)
}

/// `(a + b) mod m` for `a, b < m`.
const fn add_mod(a: &[u64; 4], b: &[u64; 4], m: &[u64; 4]) -> [u64; 4] {
    let (s, carry) = add_limbs(a, b);
    if carry != 0 || geq(&s, m) {
        sub_limbs(&s, m).0
    } else {
        s
    }
}

/// `2^bits mod m`.
const fn pow2_mod(bits: u32, m: &[u64; 4]) -> [u64; 4] {
    let mut acc = [1u64, 0, 0, 0];
    if geq(&acc, m) {
        acc = sub_limbs(&acc, m).0;
    }
    let mut i = 0;
    while i < bits {
        acc = add_mod(&acc, &acc, m);
        i += 1;
    }
    acc
}

const fn neg_inv_u64(p0: u64) -> u64 {
    let mut inv = 1u64;
    let mut i = 0;
    while i < 63 {
        inv = inv.wrapping_mul(inv);
        inv = inv.wrapping_mul(p0);
        i += 1;
    }
    inv.wrapping_neg()
}

const fn num_bits(m: &[u64; 4]) -> u32 {
    let mut i = 4;
    while i > 0 {
        i -= 1;
        if m[i] != 0 {
            return 64 * i as u32 + 64 - m[i].leading_zeros();
        }
    }
    0
}

const fn two_adicity(m: &[u64; 4]) -> u32 {
    // p is odd, so p - 1 just clears bit 0.
    let mut pm1 = *m;
    pm1[0] &= !1;
    let mut count = 0;
    let mut i = 0;
    while i < 4 {
        if pm1[i] == 0 {
            count += 64;
        } else {
            return count + pm1[i].trailing_zeros();
        }
        i += 1;
    }
    count
}

/// Element of `GF(p)` for `p = C::MODULUS`, held in Montgomery form.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Fp<C: FieldConfig> {
    limbs: [u64; 4],
    _config: PhantomData<C>,
}

impl<C: FieldConfig> Fp<C> {
    const INV: u64 = neg_inv_u64(C::MODULUS[0]);
    const R: [u64; 4] = pow2_mod(256, &C::MODULUS);
    const R2: [u64; 4] = pow2_mod(512, &C::MODULUS);
    const MODULUS_MINUS_TWO: [u64; 4] = sub_limbs(&C::MODULUS, &[2, 0, 0, 0]).0;

    const fn from_mont(limbs: [u64; 4]) -> Self {
        Fp {
            limbs,
            _config: PhantomData,
        }
    }

    #[inline]
    fn mont_mul(a: &[u64; 4], b: &[u64; 4]) -> [u64; 4] {
        let p = &C::MODULUS;
        let mut t = [0u64; 6];
        for &bi in b.iter() {
            let mut carry = 0;
            for j in 0..4 {
                let (lo, hi) = mac(t[j], a[j], bi, carry);
                t[j] = lo;
                carry = hi;
            }
            let (s, c) = adc(t[4], carry, 0);
            t[4] = s;
            t[5] = c;

            let m = t[0].wrapping_mul(Self::INV);
            let (_, mut carry) = mac(t[0], m, p[0], 0);
            for j in 1..4 {
                let (lo, hi) = mac(t[j], m, p[j], carry);
                t[j - 1] = lo;
                carry = hi;
            }
            let (s, c) = adc(t[4], carry, 0);
            t[3] = s;
            t[4] = t[5] + c;
        }
        let res = [t[0], t[1], t[2], t[3]];
        if t[4] != 0 || geq(&res, p) {
            sub_limbs(&res, p).0
        } else {
            res
        }
    }

    fn small_modulus() -> bool {
        C::MODULUS[1] == 0 && C::MODULUS[2] == 0 && C::MODULUS[3] == 0
    }
}

impl<C: FieldConfig> PrimeField for Fp<C> {
    const ZERO: Self = Self::from_mont([0; 4]);
    const ONE: Self = Self::from_mont(Self::R);
    const NUM_BITS: u32 = num_bits(&C::MODULUS);
    const TWO_ADICITY: u32 = two_adicity(&C::MODULUS);
    const HASH_EXPONENT: u64 = C::HASH_EXPONENT;

    fn modulus() -> BigUint {
        BigUint::from_slice(
            &C::MODULUS
                .iter()
                .flat_map(|l| [*l as u32, (*l >> 32) as u32])
                .collect::<Vec<_>>(),
        )
    }

    fn from_u64(v: u64) -> Self {
        let v = if Self::small_modulus() {
            v % C::MODULUS[0]
        } else {
            v
        };
        Self::from_mont(Self::mont_mul(&[v, 0, 0, 0], &Self::R2))
    }

    fn from_biguint(v: &BigUint) -> Self {
        let reduced = v % Self::modulus();
        let mut limbs = [0u64; 4];
        for (dst, src) in limbs.iter_mut().zip(reduced.to_u64_digits()) {
            *dst = src;
        }
        Self::from_canonical_limbs(limbs).expect("reduced value is canonical")
    }

    fn to_biguint(&self) -> BigUint {
        let limbs = self.to_canonical_limbs();
        BigUint::from_slice(
            &limbs
                .iter()
                .flat_map(|l| [*l as u32, (*l >> 32) as u32])
                .collect::<Vec<_>>(),
        )
    }

    fn to_canonical_limbs(&self) -> [u64; 4] {
        Self::mont_mul(&self.limbs, &[1, 0, 0, 0])
    }

    fn from_canonical_limbs(limbs: [u64; 4]) -> Option<Self> {
        if geq(&limbs, &C::MODULUS) {
            return None;
        }
        Some(Self::from_mont(Self::mont_mul(&limbs, &Self::R2)))
    }

    fn inverse(&self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(self.pow_limbs(&Self::MODULUS_MINUS_TWO))
        }
    }

    fn square(&self) -> Self {
        *self * *self
    }

    fn pow_limbs(&self, exp: &[u64]) -> Self {
        let mut acc = Self::ONE;
        for limb in exp.iter().rev() {
            for bit in (0..64).rev() {
                acc = acc.square();
                if (limb >> bit) & 1 == 1 {
                    acc *= *self;
                }
            }
        }
        acc
    }

    fn multiplicative_generator() -> Self {
        Self::from_u64(C::GENERATOR)
    }

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let bits = Self::NUM_BITS;
        loop {
            let mut limbs = [0u64; 4];
            for (i, limb) in limbs.iter_mut().enumerate() {
                let lo = 64 * i as u32;
                if lo >= bits {
                    break;
                }
                *limb = rng.random();
                if bits - lo < 64 {
                    *limb &= (1u64 << (bits - lo)) - 1;
                }
            }
            if let Some(v) = Self::from_canonical_limbs(limbs) {
                return v;
            }
        }
    }
}

impl<C: FieldConfig> Add for Fp<C> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::from_mont(add_mod(&self.limbs, &rhs.limbs, &C::MODULUS))
    }
}

impl<C: FieldConfig> Sub for Fp<C> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let (d, borrow) = sub_limbs(&self.limbs, &rhs.limbs);
        if borrow != 0 {
            Self::from_mont(add_limbs(&d, &C::MODULUS).0)
        } else {
            Self::from_mont(d)
        }
    }
}

impl<C: FieldConfig> Mul for Fp<C> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::from_mont(Self::mont_mul(&self.limbs, &rhs.limbs))
    }
}

impl<C: FieldConfig> Neg for Fp<C> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::ZERO - self
    }
}

impl<C: FieldConfig> AddAssign for Fp<C> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<C: FieldConfig> SubAssign for Fp<C> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<C: FieldConfig> MulAssign for Fp<C> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<C: FieldConfig> Sum for Fp<C> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

impl<'a, C: FieldConfig> Sum<&'a Fp<C>> for Fp<C> {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + *b)
    }
}

impl<C: FieldConfig> Product for Fp<C> {
    fn product<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ONE, |a, b| a * b)
    }
}

impl<C: FieldConfig> Ord for Fp<C> {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.to_canonical_limbs(), other.to_canonical_limbs());
        a.iter().rev().cmp(b.iter().rev())
    }
}

impl<C: FieldConfig> PartialOrd for Fp<C> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<C: FieldConfig> fmt::Display for Fp<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_biguint())
    }
}

impl<C: FieldConfig> fmt::Debug for Fp<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.to_biguint())
    }
}
