//! Rank-1 constraint systems.
//!
//! The full assignment vector is laid out as `z = (io, 1, aux)`: public
//! inputs first, then the constant one, then the auxiliary witness.

use std::fmt::Write as _;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigUint;

use super::CircuitError;
use crate::field::PrimeField;

/// A variable handle produced by [`ConstraintSystem`]; resolved to a column
/// index of `z` when the system is finalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    Public(usize),
    One,
    Aux(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinearCombination<F: PrimeField> {
    terms: Vec<(Variable, F)>,
}

impl<F: PrimeField> LinearCombination<F> {
    pub fn zero() -> Self {
        LinearCombination { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Variable::One.into()
    }

    pub fn constant(c: F) -> Self {
        LinearCombination {
            terms: vec![(Variable::One, c)],
        }
    }

    pub fn terms(&self) -> &[(Variable, F)] {
        &self.terms
    }

    pub fn scale(mut self, s: F) -> Self {
        for (_, c) in self.terms.iter_mut() {
            *c *= s;
        }
        self
    }

    pub fn sum<I: IntoIterator<Item = Variable>>(vars: I) -> Self {
        LinearCombination {
            terms: vars.into_iter().map(|v| (v, F::ONE)).collect(),
        }
    }
}

impl<F: PrimeField> From<Variable> for LinearCombination<F> {
    fn from(v: Variable) -> Self {
        LinearCombination {
            terms: vec![(v, F::ONE)],
        }
    }
}

impl<F: PrimeField> Add for LinearCombination<F> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.terms.extend(rhs.terms);
        self
    }
}

impl<F: PrimeField> Sub for LinearCombination<F> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<F: PrimeField> Neg for LinearCombination<F> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-F::ONE)
    }
}

impl<F: PrimeField> Add<Variable> for LinearCombination<F> {
    type Output = Self;
    fn add(self, rhs: Variable) -> Self {
        self + LinearCombination::from(rhs)
    }
}

impl<F: PrimeField> Sub<Variable> for LinearCombination<F> {
    type Output = Self;
    fn sub(self, rhs: Variable) -> Self {
        self - LinearCombination::from(rhs)
    }
}

impl<F: PrimeField> Mul<F> for LinearCombination<F> {
    type Output = Self;
    fn mul(self, rhs: F) -> Self {
        self.scale(rhs)
    }
}

/// A sparse row: `(column, coefficient)` pairs with distinct, sorted columns.
pub type SparseRow<F> = Vec<(usize, F)>;

/// `(A z) ∘ (B z) = (C z)` over `z = (io, 1, aux)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct R1CS<F: PrimeField> {
    pub a: Vec<SparseRow<F>>,
    pub b: Vec<SparseRow<F>>,
    pub c: Vec<SparseRow<F>>,
    pub num_vars: usize,
    pub io_len: usize,
}

impl<F: PrimeField> R1CS<F> {
    pub fn num_constraints(&self) -> usize {
        self.a.len()
    }

    /// Index of the constant-one column.
    pub fn one_index(&self) -> usize {
        self.io_len
    }

    pub fn num_aux(&self) -> usize {
        self.num_vars - self.io_len - 1
    }

    pub fn num_nonzero(&self) -> usize {
        [&self.a, &self.b, &self.c]
            .iter()
            .flat_map(|m| m.iter())
            .map(|r| r.len())
            .sum()
    }

    /// Per-row values `(Az, Bz, Cz)`.
    pub fn evaluate_rows(&self, z: &[F]) -> (Vec<F>, Vec<F>, Vec<F>) {
        let eval = |m: &[SparseRow<F>]| -> Vec<F> {
            m.iter()
                .map(|row| row.iter().map(|(i, c)| *c * z[*i]).sum())
                .collect()
        };
        (eval(&self.a), eval(&self.b), eval(&self.c))
    }

    /// Line-oriented text export: a header, then one constraint per line as
    /// `A i:c ... ; B i:c ... ; C i:c ...` with decimal coefficients.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "r1cs constraints={} vars={} io={}\n",
            self.num_constraints(),
            self.num_vars,
            self.io_len
        );
        for ((a, b), c) in self.a.iter().zip(&self.b).zip(&self.c) {
            for (label, row) in [("A", a), ("B", b), ("C", c)] {
                if label != "A" {
                    out.push_str(" ; ");
                }
                out.push_str(label);
                for (i, coeff) in row {
                    write!(out, " {i}:{coeff}").expect("writing to a String");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CircuitError> {
        let bad = |msg: &str| CircuitError::Parse(msg.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("r1cs") {
            return Err(bad("missing r1cs header"));
        }
        let mut get = |key: &str| -> Result<usize, CircuitError> {
            let field = fields.next().ok_or_else(|| bad("truncated header"))?;
            field
                .strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(&format!("bad header field {field:?}")))
        };
        let (n, num_vars, io_len) = (get("constraints")?, get("vars")?, get("io")?);
        let mut r1cs = R1CS {
            a: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            num_vars,
            io_len,
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split(';').collect();
            if parts.len() != 3 {
                return Err(bad("constraint line must have three sections"));
            }
            let mut rows = Vec::with_capacity(3);
            for (part, label) in parts.iter().zip(["A", "B", "C"]) {
                let mut toks = part.split_whitespace();
                if toks.next() != Some(label) {
                    return Err(bad(&format!("expected section {label}")));
                }
                let mut row = Vec::new();
                for tok in toks {
                    let (i, c) = tok.split_once(':').ok_or_else(|| bad("term must be index:coeff"))?;
                    let i: usize = i.parse().map_err(|_| bad("bad index"))?;
                    if i >= num_vars {
                        return Err(bad("index out of range"));
                    }
                    let c = BigUint::parse_bytes(c.as_bytes(), 10).ok_or_else(|| bad("bad coefficient"))?;
                    if c >= F::modulus() {
                        return Err(bad("coefficient is not reduced"));
                    }
                    row.push((i, F::from_biguint(&c)));
                }
                rows.push(row);
            }
            r1cs.c.push(rows.pop().expect("three rows"));
            r1cs.b.push(rows.pop().expect("three rows"));
            r1cs.a.push(rows.pop().expect("three rows"));
        }
        if r1cs.num_constraints() != n {
            return Err(bad("constraint count does not match header"));
        }
        Ok(r1cs)
    }
}

/// Public inputs `io` and auxiliary assignment `aux`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness<F: PrimeField> {
    pub public: Vec<F>,
    pub aux: Vec<F>,
}

impl<F: PrimeField> Witness<F> {
    /// `z = (io, 1, aux)`.
    pub fn full_assignment(&self) -> Vec<F> {
        let mut z = Vec::with_capacity(self.public.len() + 1 + self.aux.len());
        z.extend_from_slice(&self.public);
        z.push(F::ONE);
        z.extend_from_slice(&self.aux);
        z
    }
}

/// Row-wise satisfaction check.
pub fn check_satisfied<F: PrimeField>(r1cs: &R1CS<F>, witness: &Witness<F>) -> Result<bool, CircuitError> {
    if witness.public.len() != r1cs.io_len || witness.aux.len() != r1cs.num_aux() {
        return Err(CircuitError::ShapeMismatch {
            expected: (r1cs.io_len, r1cs.num_aux()),
            actual: (witness.public.len(), witness.aux.len()),
        });
    }
    let z = witness.full_assignment();
    let (a, b, c) = r1cs.evaluate_rows(&z);
    Ok(a.iter().zip(&b).zip(&c).all(|((a, b), c)| *a * *b == *c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Synthesize,
    Assign,
}

/// Builder shared by circuit construction and witness assignment. In
/// synthesis mode values are ignored and constraints are recorded; in
/// assignment mode values are mandatory and constraints are skipped, so one
/// circuit description yields both the matrices and a consistently ordered
/// witness.
pub struct ConstraintSystem<F: PrimeField> {
    mode: Mode,
    public: Vec<F>,
    aux: Vec<F>,
    num_public: usize,
    num_aux: usize,
    constraints: Vec<[LinearCombination<F>; 3]>,
}

impl<F: PrimeField> ConstraintSystem<F> {
    pub fn new_synthesis() -> Self {
        Self::with_mode(Mode::Synthesize)
    }

    pub fn new_assignment() -> Self {
        Self::with_mode(Mode::Assign)
    }

    fn with_mode(mode: Mode) -> Self {
        ConstraintSystem {
            mode,
            public: Vec::new(),
            aux: Vec::new(),
            num_public: 0,
            num_aux: 0,
            constraints: Vec::new(),
        }
    }

    pub fn is_assigning(&self) -> bool {
        self.mode == Mode::Assign
    }

    fn record(&mut self, slot: Variable, value: Option<F>) {
        if self.mode == Mode::Assign {
            let v = value.expect("assignment mode requires a value for every variable");
            match slot {
                Variable::Public(_) => self.public.push(v),
                Variable::Aux(_) => self.aux.push(v),
                Variable::One => unreachable!(),
            }
        }
    }

    pub fn alloc_public(&mut self, value: Option<F>) -> Variable {
        let v = Variable::Public(self.num_public);
        self.num_public += 1;
        self.record(v, value);
        v
    }

    pub fn alloc_aux(&mut self, value: Option<F>) -> Variable {
        let v = Variable::Aux(self.num_aux);
        self.num_aux += 1;
        self.record(v, value);
        v
    }

    /// Value of a linear combination; `None` outside assignment mode.
    pub fn eval(&self, lc: &LinearCombination<F>) -> Option<F> {
        if self.mode != Mode::Assign {
            return None;
        }
        Some(
            lc.terms
                .iter()
                .map(|(v, c)| {
                    *c * match v {
                        Variable::Public(i) => self.public[*i],
                        Variable::One => F::ONE,
                        Variable::Aux(i) => self.aux[*i],
                    }
                })
                .sum(),
        )
    }

    pub fn value(&self, v: Variable) -> Option<F> {
        self.eval(&v.into())
    }

    /// Adds the constraint `a * b = c`.
    pub fn enforce(
        &mut self,
        a: impl Into<LinearCombination<F>>,
        b: impl Into<LinearCombination<F>>,
        c: impl Into<LinearCombination<F>>,
    ) {
        if self.mode == Mode::Synthesize {
            self.constraints.push([a.into(), b.into(), c.into()]);
        }
    }

    /// Allocates `a * b` as a fresh auxiliary variable.
    pub fn mul(&mut self, a: LinearCombination<F>, b: LinearCombination<F>) -> Variable {
        let value = self.eval(&a).zip(self.eval(&b)).map(|(x, y)| x * y);
        let out = self.alloc_aux(value);
        self.enforce(a, b, out);
        out
    }

    pub fn num_public(&self) -> usize {
        self.num_public
    }

    pub fn num_aux(&self) -> usize {
        self.num_aux
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn resolve(&self, v: Variable) -> usize {
        match v {
            Variable::Public(i) => i,
            Variable::One => self.num_public,
            Variable::Aux(i) => self.num_public + 1 + i,
        }
    }

    fn compress(&self, lc: &LinearCombination<F>) -> SparseRow<F> {
        let mut row: SparseRow<F> = lc.terms.iter().map(|(v, c)| (self.resolve(*v), *c)).collect();
        row.sort_by_key(|(i, _)| *i);
        let mut out: SparseRow<F> = Vec::with_capacity(row.len());
        for (i, c) in row {
            match out.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|(_, c)| !c.is_zero());
        out
    }

    /// Matrices of a synthesized system.
    pub fn into_r1cs(self) -> R1CS<F> {
        assert_eq!(self.mode, Mode::Synthesize, "only a synthesized system has constraints");
        let mut r1cs = R1CS {
            a: Vec::with_capacity(self.constraints.len()),
            b: Vec::with_capacity(self.constraints.len()),
            c: Vec::with_capacity(self.constraints.len()),
            num_vars: self.num_public + 1 + self.num_aux,
            io_len: self.num_public,
        };
        for [a, b, c] in &self.constraints {
            r1cs.a.push(self.compress(a));
            r1cs.b.push(self.compress(b));
            r1cs.c.push(self.compress(c));
        }
        r1cs
    }

    /// Witness of an assigned system.
    pub fn into_witness(self) -> Witness<F> {
        assert_eq!(self.mode, Mode::Assign, "only an assigned system has values");
        Witness {
            public: self.public,
            aux: self.aux,
        }
    }
}
