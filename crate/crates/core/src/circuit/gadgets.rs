//! Reusable constraint gadgets.

use super::r1cs::{ConstraintSystem, LinearCombination, Variable};
use crate::field::PrimeField;

/// Constrains `value` to lie in `[0, 2^bits)` via a boolean bit decomposition:
/// `bits` constraints `b_j * (b_j - 1) = 0` plus one recomposition
/// `sum_j 2^j b_j = value`.
///
/// In assignment mode the low `bits` bits of the canonical residue are used,
/// so an out-of-range value yields a witness that fails recomposition.
pub fn range_check_gadget<F: PrimeField>(
    cs: &mut ConstraintSystem<F>,
    value: LinearCombination<F>,
    bits: u32,
) -> Vec<Variable> {
    let limbs = cs.eval(&value).map(|v| v.to_canonical_limbs());
    let mut recomposed = LinearCombination::zero();
    let mut coeff = F::ONE;
    let mut out = Vec::with_capacity(bits as usize);
    for j in 0..bits as usize {
        let bit_value = limbs.map(|l| {
            if j < 256 && (l[j / 64] >> (j % 64)) & 1 == 1 {
                F::ONE
            } else {
                F::ZERO
            }
        });
        let b = cs.alloc_aux(bit_value);
        cs.enforce(b, LinearCombination::from(b) - Variable::One, LinearCombination::zero());
        recomposed = recomposed + LinearCombination::from(b) * coeff;
        coeff = coeff.double();
        out.push(b);
    }
    cs.enforce(recomposed - value, LinearCombination::one(), LinearCombination::zero());
    out
}

/// `base^exp` by left-to-right square-and-multiply, one constraint per
/// multiplication.
pub fn pow_gadget<F: PrimeField>(
    cs: &mut ConstraintSystem<F>,
    base: LinearCombination<F>,
    exp: u64,
) -> LinearCombination<F> {
    assert!(exp >= 1, "exponent must be positive");
    let top = 63 - exp.leading_zeros();
    let mut acc = base.clone();
    for bit in (0..top).rev() {
        acc = cs.mul(acc.clone(), acc).into();
        if (exp >> bit) & 1 == 1 {
            acc = cs.mul(acc, base.clone()).into();
        }
    }
    acc
}
