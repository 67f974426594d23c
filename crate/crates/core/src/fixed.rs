//! Signed fixed-point embedding of real numbers into a prime field.
//!
//! A real `x` with `|x| <= W_max` is mapped to `trunc(k * x)`, truncating
//! toward zero; negative integers are embedded as `p - |trunc(k * x)|`.

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::PrimeField;

pub const DEFAULT_SCALE_BITS: u32 = 16;
pub const DEFAULT_WEIGHT_BOUND: f64 = 8.0;
/// Largest model dimension the default codec is sized for.
pub const DEFAULT_MAX_DIMENSION: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedPointError {
    #[error("value {value} is outside the encodable range [-{bound}, {bound}]")]
    OutOfRange { value: f64, bound: f64 },
    #[error("value is not finite")]
    NotFinite,
    #[error("field element is not a valid fixed-point encoding (|lift| exceeds 2^{sum_bits})")]
    InvalidEncoding { sum_bits: u32 },
    #[error("circuit intermediates need {needed} bits, but the field only allows {available}")]
    FieldTooSmall { needed: u32, available: u32 },
    #[error("invalid codec parameters: {0}")]
    InvalidParameters(String),
}

/// Fixed-point codec with scale `k = 2^scale_bits`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    scale_bits: u32,
    weight_bound: f64,
    sum_bits: u32,
}

impl FixedPointCodec {
    /// Builds a codec whose `sum_bits` covers every intermediate of the
    /// validity circuit for models of dimension `d`.
    pub fn for_dimension<F: PrimeField>(
        d: usize,
        scale_bits: u32,
        weight_bound: f64,
    ) -> Result<Self, FixedPointError> {
        if d == 0 {
            return Err(FixedPointError::InvalidParameters("dimension must be >= 1".into()));
        }
        if scale_bits == 0 || scale_bits > 40 {
            return Err(FixedPointError::InvalidParameters(format!(
                "scale bits {scale_bits} outside 1..=40"
            )));
        }
        if !(weight_bound.is_finite() && weight_bound > 0.0) {
            return Err(FixedPointError::InvalidParameters(format!(
                "weight bound {weight_bound} must be positive"
            )));
        }
        let k = BigUint::from(1u32) << scale_bits;
        let kw = BigUint::from((weight_bound * 2f64.powi(scale_bits as i32)).floor() as u64);
        let d = BigUint::from(d);
        let euclid = &d * (&kw * 2u32).pow(2);
        let cosine = (&k * &d * kw.pow(2) * &k).pow(2);
        let bound = euclid.max(cosine);
        let sum_bits = bound.bits() as u32;
        let codec = FixedPointCodec {
            scale_bits,
            weight_bound,
            sum_bits,
        };
        codec.check_field::<F>()?;
        Ok(codec)
    }

    /// Codec with an explicit `sum_bits`, checked against the field size.
    pub fn with_sum_bits<F: PrimeField>(
        scale_bits: u32,
        weight_bound: f64,
        sum_bits: u32,
    ) -> Result<Self, FixedPointError> {
        let codec = FixedPointCodec {
            scale_bits,
            weight_bound,
            sum_bits,
        };
        codec.check_field::<F>()?;
        Ok(codec)
    }

    fn check_field<F: PrimeField>(&self) -> Result<(), FixedPointError> {
        // 2^B < p / 2  <=>  2^(B+1) < p
        let limit = BigUint::from(1u32) << (self.sum_bits + 1);
        if limit >= F::modulus() {
            return Err(FixedPointError::FieldTooSmall {
                needed: self.sum_bits + 1,
                available: F::NUM_BITS,
            });
        }
        Ok(())
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    /// `k` as a float.
    pub fn scale(&self) -> f64 {
        2f64.powi(self.scale_bits as i32)
    }

    pub fn weight_bound(&self) -> f64 {
        self.weight_bound
    }

    pub fn sum_bits(&self) -> u32 {
        self.sum_bits
    }

    /// Largest encoded magnitude, `floor(k * W_max)`.
    pub fn max_encoded_weight(&self) -> u64 {
        (self.weight_bound * self.scale()).floor() as u64
    }

    /// Bits needed to range-check `trunc(k*x) + floor(k*W_max)`, which lies in `[0, 2 k W_max]`.
    pub fn weight_bits(&self) -> u32 {
        64 - (2 * self.max_encoded_weight()).leading_zeros()
    }

    /// `trunc(k * x)` as a signed integer.
    pub fn encode_int(&self, x: f64) -> Result<i64, FixedPointError> {
        if !x.is_finite() {
            return Err(FixedPointError::NotFinite);
        }
        if x.abs() > self.weight_bound {
            return Err(FixedPointError::OutOfRange {
                value: x,
                bound: self.weight_bound,
            });
        }
        Ok((x * self.scale()).trunc() as i64)
    }

    pub fn encode<F: PrimeField>(&self, x: f64) -> Result<F, FixedPointError> {
        self.encode_int(x).map(F::from_i64)
    }

    pub fn encode_vec<F: PrimeField>(&self, xs: &[f64]) -> Result<Vec<F>, FixedPointError> {
        xs.iter().map(|&x| self.encode(x)).collect()
    }

    /// Signed lift of `v` divided by `k`.
    pub fn decode<F: PrimeField>(&self, v: F) -> Result<f64, FixedPointError> {
        let lift = v.signed_lift();
        if lift.abs() > (BigInt::from(1) << self.sum_bits) {
            return Err(FixedPointError::InvalidEncoding {
                sum_bits: self.sum_bits,
            });
        }
        Ok(lift.to_f64().expect("bounded integer converts") / self.scale())
    }

    /// The integer `(trunc(k * tau))^2` published for a threshold `tau >= 0`.
    pub fn threshold_square(&self, tau: f64) -> Result<BigUint, FixedPointError> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(FixedPointError::InvalidParameters(format!(
                "threshold {tau} must be finite and non-negative"
            )));
        }
        let scaled = (tau * self.scale()).trunc();
        if scaled >= 2f64.powi(self.sum_bits as i32 / 2) {
            return Err(FixedPointError::OutOfRange {
                value: tau,
                bound: 2f64.powi(self.sum_bits as i32 / 2) / self.scale(),
            });
        }
        Ok(BigUint::from(scaled as u128).pow(2))
    }
}
