//! Dense univariate polynomials and radix-2 evaluation domains.

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

use crate::field::{batch_inverse, PrimeField};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("division by the zero polynomial")]
    DivisionByZero,
    #[error("domain of size 2^{log_size} exceeds the field's two-adic capacity 2^{capacity}")]
    DomainTooLarge { log_size: u32, capacity: u32 },
    #[error("interpolation points must have distinct x-coordinates")]
    DuplicatePoints,
}

/// Polynomial with coefficients in ascending degree; never carries trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Polynomial<F: PrimeField> {
    coeffs: Vec<F>,
}

impl<F: PrimeField> Polynomial<F> {
    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn from_coefficients(mut coeffs: Vec<F>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn constant(c: F) -> Self {
        Self::from_coefficients(vec![c])
    }

    /// `z^n - 1`.
    pub fn vanishing(n: usize) -> Self {
        let mut coeffs = vec![F::ZERO; n + 1];
        coeffs[0] = -F::ONE;
        coeffs[n] = F::ONE;
        Self::from_coefficients(coeffs)
    }

    pub fn coefficients(&self) -> &[F] {
        &self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<F> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn evaluate(&self, x: F) -> F {
        self.coeffs.iter().rev().fold(F::ZERO, |acc, c| acc * x + *c)
    }

    pub fn scale(&self, s: F) -> Self {
        Self::from_coefficients(self.coeffs.iter().map(|c| *c * s).collect())
    }

    /// Long division: `self = q * den + r` with `deg r < deg den`.
    pub fn div_rem(&self, den: &Self) -> Result<(Self, Self), PolyError> {
        let den_deg = den.degree().ok_or(PolyError::DivisionByZero)?;
        let Some(num_deg) = self.degree() else {
            return Ok((Self::zero(), Self::zero()));
        };
        if num_deg < den_deg {
            return Ok((Self::zero(), self.clone()));
        }
        let lead_inv = den.coeffs[den_deg].inverse().expect("leading coefficient is nonzero");
        let mut rem = self.coeffs.clone();
        let mut quot = vec![F::ZERO; num_deg - den_deg + 1];
        for i in (0..quot.len()).rev() {
            let factor = rem[i + den_deg] * lead_inv;
            if factor.is_zero() {
                continue;
            }
            quot[i] = factor;
            for (j, d) in den.coeffs.iter().enumerate() {
                rem[i + j] -= factor * *d;
            }
        }
        rem.truncate(den_deg);
        Ok((Self::from_coefficients(quot), Self::from_coefficients(rem)))
    }

    /// Naive Lagrange interpolation through `points`.
    pub fn interpolate(points: &[(F, F)]) -> Result<Self, PolyError> {
        let mut result = vec![F::ZERO; points.len()];
        for (i, &(xi, yi)) in points.iter().enumerate() {
            // basis numerator prod_{j != i} (z - x_j), built incrementally
            let mut basis = vec![F::ONE];
            let mut denom = F::ONE;
            for (j, &(xj, _)) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let mut next = vec![F::ZERO; basis.len() + 1];
                for (k, b) in basis.iter().enumerate() {
                    next[k + 1] += *b;
                    next[k] -= *b * xj;
                }
                basis = next;
                denom *= xi - xj;
            }
            let scale = yi * denom.inverse().ok_or(PolyError::DuplicatePoints)?;
            for (r, b) in result.iter_mut().zip(basis) {
                *r += b * scale;
            }
        }
        Ok(Self::from_coefficients(result))
    }
}

impl<F: PrimeField> Add for &Polynomial<F> {
    type Output = Polynomial<F>;
    fn add(self, rhs: Self) -> Polynomial<F> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..n)
            .map(|i| {
                self.coeffs.get(i).copied().unwrap_or(F::ZERO)
                    + rhs.coeffs.get(i).copied().unwrap_or(F::ZERO)
            })
            .collect();
        Polynomial::from_coefficients(coeffs)
    }
}

impl<F: PrimeField> Sub for &Polynomial<F> {
    type Output = Polynomial<F>;
    fn sub(self, rhs: Self) -> Polynomial<F> {
        self + &rhs.scale(-F::ONE)
    }
}

impl<F: PrimeField> Mul for &Polynomial<F> {
    type Output = Polynomial<F>;
    fn mul(self, rhs: Self) -> Polynomial<F> {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![F::ZERO; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += *a * *b;
            }
        }
        Polynomial::from_coefficients(out)
    }
}

/// Multiplicative subgroup `{1, w, ..., w^(n-1)}` of size `n = 2^k`.
#[derive(Clone, Debug)]
pub struct Radix2Domain<F: PrimeField> {
    size: usize,
    log_size: u32,
    generator: F,
    generator_inv: F,
    size_inv: F,
    coset_shift: F,
    coset_shift_inv: F,
}

impl<F: PrimeField> Radix2Domain<F> {
    /// Smallest power-of-two domain holding at least `min_size` points.
    pub fn new(min_size: usize) -> Result<Self, PolyError> {
        let size = min_size.max(1).next_power_of_two();
        let log_size = size.trailing_zeros();
        let generator = F::root_of_unity(log_size).ok_or(PolyError::DomainTooLarge {
            log_size,
            capacity: F::TWO_ADICITY,
        })?;
        let coset_shift = F::multiplicative_generator();
        Ok(Radix2Domain {
            size,
            log_size,
            generator,
            generator_inv: generator.inverse().expect("root of unity is nonzero"),
            size_inv: F::from_u64(size as u64).inverse().expect("size is below p"),
            coset_shift,
            coset_shift_inv: coset_shift.inverse().expect("generator is nonzero"),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn generator(&self) -> F {
        self.generator
    }

    pub fn coset_shift(&self) -> F {
        self.coset_shift
    }

    pub fn elements(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.size);
        let mut x = F::ONE;
        for _ in 0..self.size {
            out.push(x);
            x *= self.generator;
        }
        out
    }

    /// `t(x) = x^n - 1`.
    pub fn vanishing_at(&self, x: F) -> F {
        x.pow(self.size as u64) - F::ONE
    }

    /// Evaluations on the domain from coefficients (padded with zeros to `n`).
    pub fn fft(&self, values: &mut Vec<F>) {
        assert!(values.len() <= self.size, "too many coefficients for domain");
        values.resize(self.size, F::ZERO);
        fft_in_place(values, self.generator, self.log_size);
    }

    /// Coefficients from evaluations on the domain.
    pub fn ifft(&self, values: &mut Vec<F>) {
        assert!(values.len() <= self.size, "too many evaluations for domain");
        values.resize(self.size, F::ZERO);
        fft_in_place(values, self.generator_inv, self.log_size);
        for v in values.iter_mut() {
            *v *= self.size_inv;
        }
    }

    /// Evaluations on the coset `g * H` from coefficients.
    pub fn coset_fft(&self, values: &mut Vec<F>) {
        distribute_powers(values, self.coset_shift);
        self.fft(values);
    }

    /// Coefficients from evaluations on the coset `g * H`.
    pub fn coset_ifft(&self, values: &mut Vec<F>) {
        self.ifft(values);
        distribute_powers(values, self.coset_shift_inv);
    }

    /// All Lagrange basis polynomials of the domain evaluated at `x`.
    pub fn lagrange_basis_at(&self, x: F) -> Vec<F> {
        let t_x = self.vanishing_at(x);
        if t_x.is_zero() {
            let mut out = vec![F::ZERO; self.size];
            let mut w = F::ONE;
            for slot in out.iter_mut() {
                if w == x {
                    *slot = F::ONE;
                    break;
                }
                w *= self.generator;
            }
            return out;
        }
        // L_i(x) = t(x) / n * w^i / (x - w^i)
        let mut denoms: Vec<F> = self.elements().into_iter().map(|w| x - w).collect();
        batch_inverse(&mut denoms);
        let common = t_x * self.size_inv;
        let mut w = F::ONE;
        denoms
            .into_iter()
            .map(|inv| {
                let v = common * w * inv;
                w *= self.generator;
                v
            })
            .collect()
    }
}

fn distribute_powers<F: PrimeField>(values: &mut [F], g: F) {
    let mut power = F::ONE;
    for v in values.iter_mut() {
        *v *= power;
        power *= g;
    }
}

fn bit_reverse(n: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        n.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Iterative Cooley–Tukey over a domain generated by `omega` of order `2^log_n`.
fn fft_in_place<F: PrimeField>(a: &mut [F], omega: F, log_n: u32) {
    let n = a.len();
    for i in 0..n {
        let j = bit_reverse(i, log_n);
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let w_len = omega.pow((n / len) as u64);
        let half = len / 2;
        let mut twiddles = Vec::with_capacity(half);
        let mut w = F::ONE;
        for _ in 0..half {
            twiddles.push(w);
            w *= w_len;
        }
        for chunk in a.chunks_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((u, v), w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *v * *w;
                *v = *u - t;
                *u += t;
            }
        }
        len <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Fr;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn f(v: i64) -> Fr {
        Fr::from_i64(v)
    }

    fn random_poly(rng: &mut ChaCha20Rng, len: usize) -> Polynomial<Fr> {
        Polynomial::from_coefficients((0..len).map(|_| Fr::random(rng)).collect())
    }

    #[test]
    fn divides_difference_of_squares() {
        let num = Polynomial::from_coefficients(vec![f(-1), f(0), f(1)]);
        let den = Polynomial::from_coefficients(vec![f(-1), f(1)]);
        let (q, r) = num.div_rem(&den).unwrap();
        assert_eq!(q, Polynomial::from_coefficients(vec![f(1), f(1)]));
        assert!(r.is_zero());
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let num = Polynomial::constant(f(3));
        assert_eq!(num.div_rem(&Polynomial::zero()), Err(PolyError::DivisionByZero));
    }

    /// One-gate QAP for x * x = y over a single-point domain {1}, with
    /// z = (y, 1, x): every column polynomial is a constant.
    fn one_gate_p(x: i64, y: i64) -> Polynomial<Fr> {
        let a = Polynomial::constant(f(x));
        let b = Polynomial::constant(f(x));
        let c = Polynomial::constant(f(y));
        &(&a * &b) - &c
    }

    #[test]
    fn satisfied_one_gate_qap_is_divisible_by_target() {
        let t = Polynomial::<Fr>::vanishing(1);
        let (_, r) = one_gate_p(3, 9).div_rem(&t).unwrap();
        assert!(r.is_zero());
        // independent check: p vanishes wherever t does, and h*t = p at random points
        let (h, _) = one_gate_p(3, 9).div_rem(&t).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        for _ in 0..10 {
            let z = Fr::random(&mut rng);
            assert_eq!(h.evaluate(z) * t.evaluate(z), one_gate_p(3, 9).evaluate(z));
        }
    }

    #[test]
    fn unsatisfied_one_gate_qap_leaves_remainder() {
        let t = Polynomial::<Fr>::vanishing(1);
        let (_, r) = one_gate_p(3, 8).div_rem(&t).unwrap();
        assert_eq!(r, Polynomial::constant(f(1)));
    }

    #[test]
    fn fft_agrees_with_lagrange_interpolation() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for size in [1usize, 2, 4, 8, 16, 32, 64] {
            let domain = Radix2Domain::<Fr>::new(size).unwrap();
            let evals: Vec<Fr> = (0..size).map(|_| Fr::random(&mut rng)).collect();
            let mut coeffs = evals.clone();
            domain.ifft(&mut coeffs);
            let points: Vec<_> = domain.elements().into_iter().zip(evals.iter().copied()).collect();
            let naive = Polynomial::interpolate(&points).unwrap();
            assert_eq!(Polynomial::from_coefficients(coeffs.clone()), naive);
            let mut back = coeffs;
            domain.fft(&mut back);
            assert_eq!(back, evals);
        }
    }

    #[test]
    fn coset_fft_evaluates_on_shifted_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let domain = Radix2Domain::<Fr>::new(16).unwrap();
        let poly = random_poly(&mut rng, 16);
        let mut evals = poly.coefficients().to_vec();
        domain.coset_fft(&mut evals);
        for (e, w) in evals.iter().zip(domain.elements()) {
            assert_eq!(*e, poly.evaluate(w * domain.coset_shift()));
        }
        domain.coset_ifft(&mut evals);
        assert_eq!(Polynomial::from_coefficients(evals), poly);
    }

    #[test]
    fn lagrange_basis_matches_interpolation() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let domain = Radix2Domain::<Fr>::new(8).unwrap();
        let evals: Vec<Fr> = (0..8).map(|_| Fr::random(&mut rng)).collect();
        let mut coeffs = evals.clone();
        domain.ifft(&mut coeffs);
        let poly = Polynomial::from_coefficients(coeffs);
        let x = Fr::random(&mut rng);
        let basis = domain.lagrange_basis_at(x);
        let via_basis: Fr = basis.iter().zip(&evals).map(|(l, e)| *l * *e).sum();
        assert_eq!(via_basis, poly.evaluate(x));
        let on_domain = domain.lagrange_basis_at(domain.generator());
        assert_eq!(on_domain[1], Fr::ONE);
        assert_eq!(on_domain.iter().filter(|v| !v.is_zero()).count(), 1);
    }

    #[test]
    fn domain_capacity_is_enforced() {
        assert!(Radix2Domain::<Fr>::new(1 << 28).is_ok());
        assert!(matches!(
            Radix2Domain::<Fr>::new((1 << 28) + 1),
            Err(PolyError::DomainTooLarge { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn product_divides_back(seed in any::<u64>(), da in 0usize..=64, db in 0usize..=64) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let a = random_poly(&mut rng, da + 1);
            let b = random_poly(&mut rng, db + 1);
            prop_assume!(!b.is_zero());
            let (q, r) = (&a * &b).div_rem(&b).unwrap();
            prop_assert_eq!(q, a);
            prop_assert!(r.is_zero());
        }
    }
}
