//! R1CS to QAP reduction over a radix-2 evaluation domain.
//!
//! Row `i` of the constraint matrices is attached to the domain point `w^i`;
//! rows beyond the constraint count are zero. The target polynomial is
//! `t(z) = z^n - 1`, the vanishing polynomial of the whole domain.

use crate::circuit::r1cs::{SparseRow, R1CS};
use crate::field::PrimeField;
use crate::poly::{PolyError, Polynomial, Radix2Domain};

#[derive(Clone, Debug)]
pub struct Qap<F: PrimeField> {
    a: Vec<SparseRow<F>>,
    b: Vec<SparseRow<F>>,
    c: Vec<SparseRow<F>>,
    num_vars: usize,
    io_len: usize,
    domain: Radix2Domain<F>,
}

/// Column polynomials evaluated at one point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QapEvaluation<F: PrimeField> {
    pub u: Vec<F>,
    pub w: Vec<F>,
    pub y: Vec<F>,
    pub t: F,
}

/// Interpolates the columns of `r1cs` as given.
pub fn r1cs_to_qap<F: PrimeField>(r1cs: &R1CS<F>) -> Result<Qap<F>, PolyError> {
    Qap::from_rows(
        r1cs.a.clone(),
        r1cs.b.clone(),
        r1cs.c.clone(),
        r1cs.num_vars,
        r1cs.io_len,
    )
}

impl<F: PrimeField> Qap<F> {
    /// The reduction used by the proof system: one extra row `z_i * 0 = 0` for
    /// every public column and the constant column, so the public column
    /// polynomials are linearly independent of each other and of the rest.
    pub fn for_proving(r1cs: &R1CS<F>) -> Result<Self, PolyError> {
        let mut a = r1cs.a.clone();
        let mut b = r1cs.b.clone();
        let mut c = r1cs.c.clone();
        for i in 0..=r1cs.io_len {
            a.push(vec![(i, F::ONE)]);
            b.push(Vec::new());
            c.push(Vec::new());
        }
        Self::from_rows(a, b, c, r1cs.num_vars, r1cs.io_len)
    }

    fn from_rows(
        a: Vec<SparseRow<F>>,
        b: Vec<SparseRow<F>>,
        c: Vec<SparseRow<F>>,
        num_vars: usize,
        io_len: usize,
    ) -> Result<Self, PolyError> {
        let domain = Radix2Domain::new(a.len())?;
        Ok(Qap {
            a,
            b,
            c,
            num_vars,
            io_len,
            domain,
        })
    }

    pub fn domain(&self) -> &Radix2Domain<F> {
        &self.domain
    }

    pub fn num_rows(&self) -> usize {
        self.a.len()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn io_len(&self) -> usize {
        self.io_len
    }

    /// Degree of `t`, the domain size.
    pub fn degree(&self) -> usize {
        self.domain.size()
    }

    pub fn target(&self) -> Polynomial<F> {
        Polynomial::vanishing(self.domain.size())
    }

    /// `u_k(x), w_k(x), y_k(x)` for every column `k`, plus `t(x)`.
    pub fn evaluate_at(&self, x: F) -> QapEvaluation<F> {
        let basis = self.domain.lagrange_basis_at(x);
        let columns = |m: &[SparseRow<F>]| {
            let mut out = vec![F::ZERO; self.num_vars];
            for (row, l) in m.iter().zip(&basis) {
                for (k, coeff) in row {
                    out[*k] += *coeff * *l;
                }
            }
            out
        };
        QapEvaluation {
            u: columns(&self.a),
            w: columns(&self.b),
            y: columns(&self.c),
            t: self.domain.vanishing_at(x),
        }
    }

    /// Row residuals `(Az)_i (Bz)_i - (Cz)_i`, i.e. `p(w^i)`.
    pub fn residuals(&self, z: &[F]) -> Vec<F> {
        let (a, b, c) = self.row_values(z);
        a.iter().zip(&b).zip(&c).map(|((x, y), w)| *x * *y - *w).collect()
    }

    pub fn is_satisfied(&self, z: &[F]) -> bool {
        z.len() == self.num_vars && self.residuals(z).iter().all(|r| r.is_zero())
    }

    fn row_values(&self, z: &[F]) -> (Vec<F>, Vec<F>, Vec<F>) {
        let eval = |m: &[SparseRow<F>]| -> Vec<F> {
            m.iter()
                .map(|row| row.iter().map(|(k, c)| *c * z[*k]).sum())
                .collect()
        };
        (eval(&self.a), eval(&self.b), eval(&self.c))
    }

    /// Coefficients of `U(z) = sum_k z_k u_k`, `W`, `Y` for an assignment.
    pub fn assignment_polynomials(&self, z: &[F]) -> (Vec<F>, Vec<F>, Vec<F>) {
        let (mut a, mut b, mut c) = self.row_values(z);
        self.domain.ifft(&mut a);
        self.domain.ifft(&mut b);
        self.domain.ifft(&mut c);
        (a, b, c)
    }

    /// `p(z) = U(z) W(z) - Y(z)` in coefficient form, computed naively.
    pub fn p_polynomial(&self, z: &[F]) -> Polynomial<F> {
        let (a, b, c) = self.assignment_polynomials(z);
        let (a, b, c) = (
            Polynomial::from_coefficients(a),
            Polynomial::from_coefficients(b),
            Polynomial::from_coefficients(c),
        );
        &(&a * &b) - &c
    }

    /// Coefficients `h_0..h_{n-2}` of `p / t`, computed by pointwise division
    /// on a coset of the domain. When `t` does not divide `p` the result is the
    /// quotient's coset interpolant truncated to degree `n - 2`.
    pub fn quotient(&self, z: &[F]) -> Vec<F> {
        let (a, b, c) = self.assignment_polynomials(z);
        self.quotient_of(a, b, c)
    }

    /// [`Qap::quotient`] from the output of [`Qap::assignment_polynomials`].
    pub fn quotient_of(&self, mut a: Vec<F>, mut b: Vec<F>, mut c: Vec<F>) -> Vec<F> {
        let n = self.domain.size();
        self.domain.coset_fft(&mut a);
        self.domain.coset_fft(&mut b);
        self.domain.coset_fft(&mut c);
        // t is constant on the coset: (g w^i)^n - 1 = g^n - 1
        let t_inv = self
            .domain
            .vanishing_at(self.domain.coset_shift())
            .inverse()
            .expect("coset is disjoint from the domain");
        let mut h: Vec<F> = a
            .iter()
            .zip(&b)
            .zip(&c)
            .map(|((x, y), w)| (*x * *y - *w) * t_inv)
            .collect();
        self.domain.coset_ifft(&mut h);
        h.truncate(n.saturating_sub(1));
        h
    }
}
