pub mod adversary;
pub mod bigint;
pub mod circuit;
pub mod field;
pub mod fixed;
pub mod fl;
pub mod groth16;
pub mod mask;
pub mod paillier;
pub mod poly;
pub mod protocol;
