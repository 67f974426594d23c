//! Bilinear group abstraction and the insecure mock instantiation.

use std::fmt::Debug;
use std::marker::PhantomData;

use crate::field::PrimeField;

/// An element of a prime-order group written additively, with scalars in `F`.
pub trait GroupElement<F: PrimeField>: Copy + Debug + PartialEq + Eq + Send + Sync + 'static {
    fn identity() -> Self;
    fn generator() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn mul(&self, scalar: F) -> Self;
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(bytes: &[u8]) -> Option<Self>;

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// `[a]` for the fixed generator.
    fn embed(a: F) -> Self {
        Self::generator().mul(a)
    }
}

/// Groups `G1`, `G2`, `GT` of order `p` with a bilinear map `e: G1 x G2 -> GT`.
pub trait PairingEngine: Clone + Debug + PartialEq + Eq + Send + Sync + 'static {
    type Scalar: PrimeField;
    type G1: GroupElement<Self::Scalar>;
    type G2: GroupElement<Self::Scalar>;
    type Gt: Copy + Debug + PartialEq + Eq;

    fn pairing(a: &Self::G1, b: &Self::G2) -> Self::Gt;
    /// The group operation of `GT` (written multiplicatively).
    fn gt_mul(a: &Self::Gt, b: &Self::Gt) -> Self::Gt;
}

/// Every group is `Z_p` itself and the pairing is field multiplication, so
/// discrete logs are trivial.
///
/// WARNING: this offers no security at all. It keeps every algebraic identity
/// of the proof system intact, which is what testing needs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MockEngine<F>(PhantomData<F>);

macro_rules! mock_group {
    ($name:ident) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq)]
        pub struct $name<F>(pub F);

        impl<F: PrimeField> GroupElement<F> for $name<F> {
            fn identity() -> Self {
                $name(F::ZERO)
            }
            fn generator() -> Self {
                $name(F::ONE)
            }
            fn add(&self, other: &Self) -> Self {
                $name(self.0 + other.0)
            }
            fn neg(&self) -> Self {
                $name(-self.0)
            }
            fn mul(&self, scalar: F) -> Self {
                $name(self.0 * scalar)
            }
            fn to_bytes(&self) -> Vec<u8> {
                self.0.to_bytes_be().to_vec()
            }
            fn from_bytes(bytes: &[u8]) -> Option<Self> {
                let arr: &[u8; 32] = bytes.try_into().ok()?;
                F::from_bytes_be(arr).map($name)
            }
        }
    };
}

mock_group!(MockG1);
mock_group!(MockG2);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MockGt<F>(pub F);

impl<F: PrimeField> PairingEngine for MockEngine<F> {
    type Scalar = F;
    type G1 = MockG1<F>;
    type G2 = MockG2<F>;
    type Gt = MockGt<F>;

    fn pairing(a: &MockG1<F>, b: &MockG2<F>) -> MockGt<F> {
        MockGt(a.0 * b.0)
    }

    // GT is written multiplicatively; its exponents add.
    fn gt_mul(a: &MockGt<F>, b: &MockGt<F>) -> MockGt<F> {
        MockGt(a.0 + b.0)
    }
}

/// `sum_i scalars[i] * bases[i]` over the shorter of the two slices.
pub fn msm<F: PrimeField, G: GroupElement<F>>(bases: &[G], scalars: &[F]) -> G {
    bases
        .iter()
        .zip(scalars)
        .filter(|(_, s)| !s.is_zero())
        .fold(G::identity(), |acc, (b, s)| acc.add(&b.mul(*s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Fr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type E = MockEngine<Fr>;

    #[test]
    fn mock_pairing_is_bilinear() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (a, b, c) = (Fr::random(&mut rng), Fr::random(&mut rng), Fr::random(&mut rng));
            let lhs = E::pairing(&MockG1::embed(a), &MockG2::embed(b));
            assert_eq!(lhs, MockGt(a * b));
            // e([a+c], [b]) = e([a],[b]) * e([c],[b])
            let sum = E::pairing(&MockG1::embed(a + c), &MockG2::embed(b));
            let prod = E::gt_mul(&lhs, &E::pairing(&MockG1::embed(c), &MockG2::embed(b)));
            assert_eq!(sum, prod);
        }
    }

    #[test]
    fn element_bytes_roundtrip() {
        let g = MockG1::embed(Fr::from_u64(77));
        assert_eq!(MockG1::<Fr>::from_bytes(&g.to_bytes()), Some(g));
        assert_eq!(MockG1::<Fr>::from_bytes(&[0u8; 31]), None);
        assert_eq!(MockG2::<Fr>::from_bytes(&[0xff; 32]), None);
    }

    #[test]
    fn msm_matches_direct_sum() {
        let bases: Vec<MockG1<Fr>> = (1..=4).map(|i| MockG1::embed(Fr::from_u64(i))).collect();
        let scalars: Vec<Fr> = (5..=8).map(Fr::from_u64).collect();
        assert_eq!(msm(&bases, &scalars), MockG1(Fr::from_u64(5 + 12 + 21 + 32)));
    }
}
