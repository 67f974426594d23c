//! Rank-1 constraint systems and the model-validity circuit.

pub mod gadgets;
pub mod hash;
pub mod r1cs;
pub mod validity;

use thiserror::Error;

pub use hash::{algebraic_hash, AlgebraicHashParams};
pub use validity::{
    assign_witness, build_validity_circuit, build_validity_circuit_with, encode_thresholds,
    ComparisonMode, PublicStatement, ValidityCircuitLayout, ValidityConfig, ValidityInputs,
};
pub use r1cs::{check_satisfied, ConstraintSystem, LinearCombination, Variable, Witness, R1CS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("witness shape {actual:?} does not match circuit shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("malformed r1cs text: {0}")]
    Parse(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("circuit needs {needed}-bit slack but the codec provides {available}")]
    BitWidth { needed: u32, available: u32 },
    #[error("threshold {0} is outside the supported range")]
    Threshold(f64),
    #[error(transparent)]
    FixedPoint(#[from] crate::fixed::FixedPointError),
}
