use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PrimeField;
use crate::bigint::is_probable_prime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("modulus is not prime")]
    NotPrime,
    #[error("modulus has {bits} bits; at least 193 are required")]
    TooSmall { bits: u64 },
    #[error("two-adicity {actual} does not match declared {declared}")]
    TwoAdicityMismatch { declared: u32, actual: u32 },
    #[error("two-adicity {0} is below the minimum of 20")]
    TwoAdicityTooLow(u32),
    #[error("hash exponent {0} is not coprime to p - 1")]
    BadHashExponent(u64),
    #[error("modulus {0} is not a field compiled into this build")]
    Unsupported(String),
}

/// Public description of the circuit field, as recorded in experiment configs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldParams {
    #[serde(with = "decimal")]
    pub modulus: BigUint,
    pub two_adicity: u32,
    pub hash_exponent: u64,
}

impl FieldParams {
    pub fn of<F: PrimeField>() -> Self {
        FieldParams {
            modulus: F::modulus(),
            two_adicity: F::TWO_ADICITY,
            hash_exponent: F::HASH_EXPONENT,
        }
    }

    /// Checks every invariant required of a circuit field.
    pub fn validate(&self) -> Result<(), FieldError> {
        let p = &self.modulus;
        if p.bits() <= 192 {
            return Err(FieldError::TooSmall { bits: p.bits() });
        }
        let mut rng = ChaCha20Rng::seed_from_u64(0x6669_656c_64);
        if !is_probable_prime(p, 40, &mut rng) {
            return Err(FieldError::NotPrime);
        }
        let pm1 = p - 1u32;
        let actual = pm1.trailing_zeros().unwrap_or(0) as u32;
        if actual != self.two_adicity {
            return Err(FieldError::TwoAdicityMismatch {
                declared: self.two_adicity,
                actual,
            });
        }
        if actual < 20 {
            return Err(FieldError::TwoAdicityTooLow(actual));
        }
        if !BigUint::from(self.hash_exponent).gcd(&pm1).is_one() {
            return Err(FieldError::BadHashExponent(self.hash_exponent));
        }
        Ok(())
    }

    /// Confirms these parameters describe the compiled field `F`.
    pub fn ensure_matches<F: PrimeField>(&self) -> Result<(), FieldError> {
        if *self == Self::of::<F>() {
            Ok(())
        } else {
            Err(FieldError::Unsupported(self.modulus.to_string()))
        }
    }
}

mod decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.trim().as_bytes(), 10)
            .ok_or_else(|| D::Error::custom(format!("invalid decimal integer {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Fr, F61};

    #[test]
    fn default_field_satisfies_invariants() {
        FieldParams::of::<Fr>().validate().unwrap();
    }

    #[test]
    fn small_fields_are_not_circuit_fields() {
        assert!(matches!(
            FieldParams::of::<F61>().validate(),
            Err(FieldError::TooSmall { .. })
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut p = FieldParams::of::<Fr>();
        p.hash_exponent = 3;
        assert_eq!(p.validate(), Err(FieldError::BadHashExponent(3)));
        let mut p = FieldParams::of::<Fr>();
        p.two_adicity = 27;
        assert!(matches!(p.validate(), Err(FieldError::TwoAdicityMismatch { .. })));
        let mut p = FieldParams::of::<Fr>();
        p.modulus += 2u32;
        assert_eq!(p.validate(), Err(FieldError::NotPrime));
    }

    #[test]
    fn serializes_modulus_as_decimal_string() {
        let json = serde_json::to_string(&FieldParams::of::<Fr>()).unwrap();
        assert!(json.contains(
            "\"21888242871839275222246405745257275088548364400416034343698204186575808495617\""
        ));
        let back: FieldParams = serde_json::from_str(&json).unwrap();
        back.ensure_matches::<Fr>().unwrap();
        assert!(back.ensure_matches::<F61>().is_err());
    }
}
