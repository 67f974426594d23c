//! Groth16 over a pluggable bilinear group.
//!
//! Setup publishes, for toxic values `alpha, beta, gamma, delta, s`:
//!
//! ```text
//! sigma_1 = alpha, beta, delta, {s^i}_{i<n},
//!           {(beta u_k(s) + alpha w_k(s) + y_k(s)) / gamma}   public k,
//!           {(beta u_k(s) + alpha w_k(s) + y_k(s)) / delta}   private k,
//!           {s^i t(s) / delta}_{i<n-1}
//! sigma_2 = beta, gamma, delta, {s^i}_{i<n}
//! ```
//!
//! and verification checks `e(A, B) = e(alpha, beta) e(IC, gamma) e(C, delta)`.
//! Verification does one multi-scalar product over the public inputs plus a
//! constant number of pairings.

pub mod group;
pub mod qap;

use rand::Rng;
use thiserror::Error;

use crate::circuit::r1cs::{check_satisfied, Witness, R1CS};
use crate::field::PrimeField;
use crate::poly::PolyError;
pub use group::{msm, GroupElement, MockEngine, MockG1, MockG2, MockGt, PairingEngine};
pub use qap::{r1cs_to_qap, Qap, QapEvaluation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Groth16Error {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("witness does not satisfy the constraint system")]
    Unsatisfied,
    #[error("assignment has {actual} variables, circuit expects {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvingKey<E: PairingEngine> {
    pub alpha_g1: E::G1,
    pub beta_g1: E::G1,
    pub beta_g2: E::G2,
    pub gamma_g2: E::G2,
    pub delta_g1: E::G1,
    pub delta_g2: E::G2,
    /// `[s^i]_1` for `i < n`.
    pub powers_g1: Vec<E::G1>,
    /// `[s^i]_2` for `i < n`.
    pub powers_g2: Vec<E::G2>,
    /// Public columns, divided by `gamma`.
    pub ic_query: Vec<E::G1>,
    /// Private columns, divided by `delta`.
    pub aux_query: Vec<E::G1>,
    /// `[s^i t(s) / delta]_1` for `i < n - 1`.
    pub h_query: Vec<E::G1>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyingKey<E: PairingEngine> {
    pub alpha_g1: E::G1,
    pub beta_g2: E::G2,
    pub gamma_g2: E::G2,
    pub delta_g2: E::G2,
    /// One entry per public input followed by the constant column.
    pub ic: Vec<E::G1>,
}

impl<E: PairingEngine> VerifyingKey<E> {
    pub fn io_len(&self) -> usize {
        self.ic.len() - 1
    }
}

/// The setup randomness. Anyone holding it can forge proofs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trapdoor<F: PrimeField> {
    pub alpha: F,
    pub beta: F,
    pub gamma: F,
    pub delta: F,
    pub s: F,
}

#[derive(Clone, Debug)]
pub struct SetupOutput<E: PairingEngine> {
    pub pk: ProvingKey<E>,
    pub vk: VerifyingKey<E>,
    pub trapdoor: Trapdoor<E::Scalar>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Proof<E: PairingEngine> {
    pub a: E::G1,
    pub b: E::G2,
    pub c: E::G1,
}

fn nonzero<F: PrimeField, R: Rng + ?Sized>(rng: &mut R) -> F {
    loop {
        let x = F::random(rng);
        if !x.is_zero() {
            return x;
        }
    }
}

/// Generates keys and discards the trapdoor.
pub fn setup<E: PairingEngine, R: Rng + ?Sized>(
    qap: &Qap<E::Scalar>,
    rng: &mut R,
) -> (ProvingKey<E>, VerifyingKey<E>) {
    let out = setup_with_trapdoor::<E, R>(qap, rng);
    (out.pk, out.vk)
}

/// Generates keys and keeps the trapdoor, for simulation and tests.
pub fn setup_with_trapdoor<E: PairingEngine, R: Rng + ?Sized>(
    qap: &Qap<E::Scalar>,
    rng: &mut R,
) -> SetupOutput<E> {
    let alpha = nonzero(rng);
    let beta = nonzero(rng);
    let gamma = nonzero(rng);
    let delta = nonzero(rng);
    // s must avoid the domain so that t(s) != 0
    let s = loop {
        let s = nonzero::<E::Scalar, R>(rng);
        if !qap.domain().vanishing_at(s).is_zero() {
            break s;
        }
    };
    let trapdoor = Trapdoor {
        alpha,
        beta,
        gamma,
        delta,
        s,
    };
    let (pk, vk) = keys_from_trapdoor(qap, &trapdoor);
    SetupOutput { pk, vk, trapdoor }
}

/// Deterministic key derivation from explicit toxic values.
pub fn keys_from_trapdoor<E: PairingEngine>(
    qap: &Qap<E::Scalar>,
    td: &Trapdoor<E::Scalar>,
) -> (ProvingKey<E>, VerifyingKey<E>) {
    let n = qap.degree();
    let ev = qap.evaluate_at(td.s);
    let gamma_inv = td.gamma.inverse().expect("gamma is nonzero");
    let delta_inv = td.delta.inverse().expect("delta is nonzero");

    let mut powers = Vec::with_capacity(n);
    let mut x = E::Scalar::ONE;
    for _ in 0..n {
        powers.push(x);
        x *= td.s;
    }
    let column = |k: usize| td.beta * ev.u[k] + td.alpha * ev.w[k] + ev.y[k];
    let public_cols = qap.io_len() + 1;
    let ic_query: Vec<E::G1> = (0..public_cols)
        .map(|k| E::G1::embed(column(k) * gamma_inv))
        .collect();
    let aux_query: Vec<E::G1> = (public_cols..qap.num_vars())
        .map(|k| E::G1::embed(column(k) * delta_inv))
        .collect();
    let t_over_delta = ev.t * delta_inv;
    let h_query: Vec<E::G1> = powers
        .iter()
        .take(n.saturating_sub(1))
        .map(|p| E::G1::embed(*p * t_over_delta))
        .collect();

    let pk = ProvingKey {
        alpha_g1: E::G1::embed(td.alpha),
        beta_g1: E::G1::embed(td.beta),
        beta_g2: E::G2::embed(td.beta),
        gamma_g2: E::G2::embed(td.gamma),
        delta_g1: E::G1::embed(td.delta),
        delta_g2: E::G2::embed(td.delta),
        powers_g1: powers.iter().map(|p| E::G1::embed(*p)).collect(),
        powers_g2: powers.iter().map(|p| E::G2::embed(*p)).collect(),
        ic_query: ic_query.clone(),
        aux_query,
        h_query,
    };
    let vk = VerifyingKey {
        alpha_g1: pk.alpha_g1,
        beta_g2: pk.beta_g2,
        gamma_g2: pk.gamma_g2,
        delta_g2: pk.delta_g2,
        ic: ic_query,
    };
    (pk, vk)
}

/// Proves knowledge of a satisfying witness; refuses unsatisfying ones.
pub fn prove<E: PairingEngine, R: Rng + ?Sized>(
    pk: &ProvingKey<E>,
    qap: &Qap<E::Scalar>,
    witness: &Witness<E::Scalar>,
    rng: &mut R,
) -> Result<Proof<E>, Groth16Error> {
    let z = full_assignment(qap, witness)?;
    if !qap.is_satisfied(&z) {
        return Err(Groth16Error::Unsatisfied);
    }
    Ok(prove_assignment(pk, qap, &z, rng))
}

/// Runs the prover without the satisfaction check. The output of an
/// unsatisfying witness fails verification except with negligible
/// probability; this exists to demonstrate exactly that.
pub fn prove_unchecked<E: PairingEngine, R: Rng + ?Sized>(
    pk: &ProvingKey<E>,
    qap: &Qap<E::Scalar>,
    witness: &Witness<E::Scalar>,
    rng: &mut R,
) -> Result<Proof<E>, Groth16Error> {
    let z = full_assignment(qap, witness)?;
    Ok(prove_assignment(pk, qap, &z, rng))
}

fn full_assignment<F: PrimeField>(qap: &Qap<F>, witness: &Witness<F>) -> Result<Vec<F>, Groth16Error> {
    let z = witness.full_assignment();
    if z.len() != qap.num_vars() || witness.public.len() != qap.io_len() {
        return Err(Groth16Error::ShapeMismatch {
            expected: qap.num_vars(),
            actual: z.len(),
        });
    }
    Ok(z)
}

fn prove_assignment<E: PairingEngine, R: Rng + ?Sized>(
    pk: &ProvingKey<E>,
    qap: &Qap<E::Scalar>,
    z: &[E::Scalar],
    rng: &mut R,
) -> Proof<E> {
    let r1 = E::Scalar::random(rng);
    let r2 = E::Scalar::random(rng);
    let (u, w, y) = qap.assignment_polynomials(z);
    let h = qap.quotient_of(u.clone(), w.clone(), y);

    let a = pk
        .alpha_g1
        .add(&msm(&pk.powers_g1, &u))
        .add(&pk.delta_g1.mul(r1));
    let b2 = pk
        .beta_g2
        .add(&msm(&pk.powers_g2, &w))
        .add(&pk.delta_g2.mul(r2));
    let b1 = pk
        .beta_g1
        .add(&msm(&pk.powers_g1, &w))
        .add(&pk.delta_g1.mul(r2));
    let aux = &z[qap.io_len() + 1..];
    let c = msm(&pk.aux_query, aux)
        .add(&msm(&pk.h_query, &h))
        .add(&a.mul(r2))
        .add(&b1.mul(r1))
        .sub(&pk.delta_g1.mul(r1 * r2));
    Proof { a, b: b2, c }
}

/// Checks the pairing equation. A public-input vector of the wrong length is
/// rejected rather than treated as an error.
pub fn verify<E: PairingEngine>(vk: &VerifyingKey<E>, proof: &Proof<E>, public_inputs: &[E::Scalar]) -> bool {
    if public_inputs.len() != vk.io_len() {
        return false;
    }
    let ic = msm(&vk.ic[..public_inputs.len()], public_inputs).add(&vk.ic[public_inputs.len()]);
    let lhs = E::pairing(&proof.a, &proof.b);
    let rhs = E::gt_mul(
        &E::gt_mul(
            &E::pairing(&vk.alpha_g1, &vk.beta_g2),
            &E::pairing(&ic, &vk.gamma_g2),
        ),
        &E::pairing(&proof.c, &vk.delta_g2),
    );
    lhs == rhs
}

/// Reference backend that skips cryptography entirely: accepts iff the
/// witness satisfies the circuit and carries exactly these public inputs.
pub fn oracle_verify<F: PrimeField>(r1cs: &R1CS<F>, witness: &Witness<F>, public_inputs: &[F]) -> bool {
    witness.public == public_inputs && check_satisfied(r1cs, witness).unwrap_or(false)
}

/// Produces an accepting proof for any public inputs using only the trapdoor.
pub fn simulate<E: PairingEngine, R: Rng + ?Sized>(
    qap: &Qap<E::Scalar>,
    td: &Trapdoor<E::Scalar>,
    public_inputs: &[E::Scalar],
    rng: &mut R,
) -> Result<Proof<E>, Groth16Error> {
    if public_inputs.len() != qap.io_len() {
        return Err(Groth16Error::ShapeMismatch {
            expected: qap.io_len(),
            actual: public_inputs.len(),
        });
    }
    let ev = qap.evaluate_at(td.s);
    let a = E::Scalar::random(rng);
    let b = E::Scalar::random(rng);
    let ic: E::Scalar = public_inputs
        .iter()
        .chain(std::iter::once(&E::Scalar::ONE))
        .enumerate()
        .map(|(k, x)| *x * (td.beta * ev.u[k] + td.alpha * ev.w[k] + ev.y[k]))
        .sum();
    let c = (a * b - td.alpha * td.beta - ic) * td.delta.inverse().expect("delta is nonzero");
    Ok(Proof {
        a: E::G1::embed(a),
        b: E::G2::embed(b),
        c: E::G1::embed(c),
    })
}

fn put(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Groth16Error> {
        if self.0.len() < n {
            return Err(Groth16Error::Malformed("truncated input"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, Groth16Error> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn item(&mut self) -> Result<&'a [u8], Groth16Error> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn g1<E: PairingEngine>(&mut self) -> Result<E::G1, Groth16Error> {
        E::G1::from_bytes(self.item()?).ok_or(Groth16Error::Malformed("bad G1 element"))
    }

    fn g2<E: PairingEngine>(&mut self) -> Result<E::G2, Groth16Error> {
        E::G2::from_bytes(self.item()?).ok_or(Groth16Error::Malformed("bad G2 element"))
    }

    fn finish(self) -> Result<(), Groth16Error> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Groth16Error::Malformed("trailing bytes"))
        }
    }
}

impl<E: PairingEngine> Proof<E> {
    /// `A`, `B`, `C`, each as a 4-byte big-endian length and the element bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put(&mut out, &self.a.to_bytes());
        put(&mut out, &self.b.to_bytes());
        put(&mut out, &self.c.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Groth16Error> {
        let mut r = Reader(bytes);
        let proof = Proof {
            a: r.g1::<E>()?,
            b: r.g2::<E>()?,
            c: r.g1::<E>()?,
        };
        r.finish()?;
        Ok(proof)
    }
}

impl<E: PairingEngine> VerifyingKey<E> {
    /// `alpha_1, beta_2, gamma_2, delta_2`, a 4-byte count, then the `ic`
    /// elements, all length-prefixed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put(&mut out, &self.alpha_g1.to_bytes());
        put(&mut out, &self.beta_g2.to_bytes());
        put(&mut out, &self.gamma_g2.to_bytes());
        put(&mut out, &self.delta_g2.to_bytes());
        out.extend_from_slice(&(self.ic.len() as u32).to_be_bytes());
        for g in &self.ic {
            put(&mut out, &g.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Groth16Error> {
        let mut r = Reader(bytes);
        let alpha_g1 = r.g1::<E>()?;
        let beta_g2 = r.g2::<E>()?;
        let gamma_g2 = r.g2::<E>()?;
        let delta_g2 = r.g2::<E>()?;
        let count = r.u32()? as usize;
        if count == 0 {
            return Err(Groth16Error::Malformed("empty ic"));
        }
        let ic = (0..count).map(|_| r.g1::<E>()).collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(VerifyingKey {
            alpha_g1,
            beta_g2,
            gamma_g2,
            delta_g2,
            ic,
        })
    }
}

/// Decodes and verifies; any decoding failure is a rejection.
pub fn verify_bytes<E: PairingEngine>(vk: &VerifyingKey<E>, proof: &[u8], public_inputs: &[E::Scalar]) -> bool {
    Proof::<E>::from_bytes(proof).is_ok_and(|p| verify(vk, &p, public_inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::r1cs::ConstraintSystem;
    use crate::circuit::{assign_witness, build_validity_circuit, AlgebraicHashParams, ValidityInputs};
    use crate::field::Fr;
    use crate::fixed::FixedPointCodec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type E = MockEngine<Fr>;

    /// `x^3 + x + 5 = y` with `y` public.
    fn cubic(x: Option<u64>) -> ConstraintSystem<Fr> {
        let mut cs = match x {
            Some(_) => ConstraintSystem::new_assignment(),
            None => ConstraintSystem::new_synthesis(),
        };
        let xf = x.map(Fr::from_u64);
        let y = cs.alloc_public(xf.map(|x| x * x * x + x + Fr::from_u64(5)));
        let xv = cs.alloc_aux(xf);
        let x2 = cs.mul(xv.into(), xv.into());
        let x3 = cs.mul(x2.into(), xv.into());
        cs.enforce(
            crate::circuit::LinearCombination::from(x3)
                + xv
                + crate::circuit::LinearCombination::constant(Fr::from_u64(5)),
            crate::circuit::LinearCombination::one(),
            y,
        );
        cs
    }

    fn cubic_setup(seed: u64) -> (R1CS<Fr>, Qap<Fr>, SetupOutput<E>) {
        let r1cs = cubic(None).into_r1cs();
        let qap = Qap::for_proving(&r1cs).unwrap();
        let out = setup_with_trapdoor::<E, _>(&qap, &mut ChaCha20Rng::seed_from_u64(seed));
        (r1cs, qap, out)
    }

    #[test]
    fn setup_is_reproducible_and_shaped() {
        let (_, qap, a) = cubic_setup(1);
        let (_, _, b) = cubic_setup(1);
        assert_eq!(a.pk, b.pk);
        assert_eq!(a.vk, b.vk);
        assert_eq!(a.pk.powers_g1.len(), qap.degree());
        assert_eq!(a.pk.powers_g2.len(), qap.degree());
        assert_eq!(a.pk.h_query.len(), qap.degree() - 1);
        assert_eq!(a.vk.ic.len(), qap.io_len() + 1);
        // mock: the element is the exponent, so formulas can be checked directly
        let td = &a.trapdoor;
        let ev = qap.evaluate_at(td.s);
        let k = qap.io_len() + 1;
        assert_eq!(
            a.pk.aux_query[0].0,
            (td.beta * ev.u[k] + td.alpha * ev.w[k] + ev.y[k]) * td.delta.inverse().unwrap()
        );
        assert_eq!(a.pk.powers_g1[2].0, td.s * td.s);
    }

    #[test]
    fn honest_proof_verifies() {
        let (_, qap, keys) = cubic_setup(2);
        let w = cubic(Some(3)).into_witness();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p1 = prove(&keys.pk, &qap, &w, &mut rng).unwrap();
        let p2 = prove(&keys.pk, &qap, &w, &mut rng).unwrap();
        assert_ne!(p1, p2);
        assert!(verify(&keys.vk, &p1, &w.public));
        assert!(verify(&keys.vk, &p2, &w.public));
        assert!(!verify(&keys.vk, &p1, &[Fr::from_u64(36)]));
        assert!(!verify(&keys.vk, &p1, &[]));
    }

    #[test]
    fn prover_refuses_bad_witness_and_forced_proofs_fail() {
        let (_, qap, keys) = cubic_setup(4);
        let mut w = cubic(Some(3)).into_witness();
        w.public[0] += Fr::ONE;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        assert_eq!(prove(&keys.pk, &qap, &w, &mut rng).unwrap_err(), Groth16Error::Unsatisfied);
        let forced = prove_unchecked(&keys.pk, &qap, &w, &mut rng).unwrap();
        assert!(!verify(&keys.vk, &forced, &w.public));
    }

    #[test]
    fn perturbed_proofs_fail() {
        let (_, qap, keys) = cubic_setup(6);
        let w = cubic(Some(7)).into_witness();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for trial in 0..1_000 {
            let p = prove(&keys.pk, &qap, &w, &mut rng).unwrap();
            let mut q = p;
            match trial % 4 {
                0 => q.a = MockG1(p.a.0 + Fr::ONE),
                1 => q.b = MockG2(p.b.0 + Fr::ONE),
                2 => q.c = MockG1(p.c.0 + Fr::ONE),
                _ => {
                    let mut io = w.public.clone();
                    io[0] += Fr::ONE;
                    assert!(!verify(&keys.vk, &p, &io));
                    continue;
                }
            }
            assert!(!verify(&keys.vk, &q, &w.public));
        }
    }

    #[test]
    fn simulated_proofs_verify() {
        let (_, qap, keys) = cubic_setup(8);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for y in [0u64, 35, 999] {
            let io = [Fr::from_u64(y)];
            let p = simulate::<E, _>(&qap, &keys.trapdoor, &io, &mut rng).unwrap();
            assert!(verify(&keys.vk, &p, &io));
        }
    }

    #[test]
    fn oracle_checks_public_section() {
        let r1cs = cubic(None).into_r1cs();
        let w = cubic(Some(2)).into_witness();
        assert!(oracle_verify(&r1cs, &w, &w.public));
        assert!(!oracle_verify(&r1cs, &w, &[Fr::from_u64(16)]));
        assert!(!oracle_verify(&r1cs, &w, &[]));
    }

    #[test]
    fn serialization_roundtrip() {
        let (_, qap, keys) = cubic_setup(10);
        let w = cubic(Some(4)).into_witness();
        let p = prove(&keys.pk, &qap, &w, &mut ChaCha20Rng::seed_from_u64(11)).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 3 * (4 + 32));
        assert_eq!(Proof::<E>::from_bytes(&bytes).unwrap(), p);
        assert!(verify_bytes(&keys.vk, &bytes, &w.public));
        assert!(!verify_bytes(&keys.vk, &bytes[..bytes.len() - 1], &w.public));
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(!verify_bytes(&keys.vk, &extended, &w.public));
        let vk_bytes = keys.vk.to_bytes();
        assert_eq!(VerifyingKey::<E>::from_bytes(&vk_bytes).unwrap(), keys.vk);
    }

    #[test]
    fn validity_circuit_end_to_end() {
        let codec = FixedPointCodec::for_dimension::<Fr>(1024, 16, 8.0).unwrap();
        let (r1cs, layout) = build_validity_circuit(4, codec, AlgebraicHashParams::new(3)).unwrap();
        let qap = Qap::for_proving(&r1cs).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let (pk, vk) = setup::<E, _>(&qap, &mut rng);
        let r: Vec<Fr> = (0..4).map(|_| Fr::random(&mut rng)).collect();
        let s = [0.5, -0.5, 1.0, 0.25];
        let w = [0.55, -0.45, 0.9, 0.3];
        let inputs = ValidityInputs::honest(&layout, &w, &s, None, &r, 0.9, 0.5).unwrap();
        let wit = assign_witness(&layout, &inputs).unwrap();
        let io = layout.public_inputs(&inputs.statement).unwrap();
        let proof = prove(&pk, &qap, &wit, &mut rng).unwrap();
        assert!(verify(&vk, &proof, &io));
        assert_eq!(verify(&vk, &proof, &io), oracle_verify(&r1cs, &wit, &io));

        let bad_w: Vec<f64> = s.iter().map(|x| -x).collect();
        let bad = ValidityInputs::honest(&layout, &bad_w, &s, None, &r, 0.9, 0.5).unwrap();
        let wit = assign_witness(&layout, &bad).unwrap();
        let io = layout.public_inputs(&bad.statement).unwrap();
        assert_eq!(prove(&pk, &qap, &wit, &mut rng).unwrap_err(), Groth16Error::Unsatisfied);
        let forced = prove_unchecked(&pk, &qap, &wit, &mut rng).unwrap();
        assert!(!verify(&vk, &forced, &io));
        assert!(!oracle_verify(&r1cs, &wit, &io));
    }
}
