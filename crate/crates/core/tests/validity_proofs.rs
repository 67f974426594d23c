use std::time::Instant;

use bpfl_core::adversary::{forged_inputs, sign_flip};
use bpfl_core::circuit::{
    algebraic_hash, assign_witness, build_validity_circuit, AlgebraicHashParams, ConstraintSystem, LinearCombination,
    ValidityCircuitLayout, ValidityInputs, R1CS,
};
use bpfl_core::field::{Fr, PrimeField};
use bpfl_core::fixed::FixedPointCodec;
use bpfl_core::groth16::{oracle_verify, prove, prove_unchecked, setup, verify, MockEngine, Qap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type E = MockEngine<Fr>;

fn circuit(d: usize) -> (R1CS<Fr>, ValidityCircuitLayout<Fr>) {
    let codec = FixedPointCodec::for_dimension::<Fr>(d.max(2), 16, 8.0).unwrap();
    build_validity_circuit(d, codec, AlgebraicHashParams::new(3)).unwrap()
}

fn near(w_s: &[f64], spread: f64, rng: &mut impl Rng) -> Vec<f64> {
    w_s.iter().map(|x| x + rng.random_range(-spread..spread)).collect()
}

#[test]
fn honest_proofs_verify_at_every_size() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for d in [1, 2, 8, 64] {
        let (r1cs, layout) = circuit(d);
        let qap = Qap::for_proving(&r1cs).unwrap();
        let (pk, vk) = setup::<E, _>(&qap, &mut rng);
        let r: Vec<Fr> = (0..d).map(|_| Fr::random(&mut rng)).collect();
        for _ in 0..3 {
            let w_s: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
            let w = near(&w_s, 0.05, &mut rng);
            let inputs = ValidityInputs::honest(&layout, &w, &w_s, None, &r, 0.9, 1.0).unwrap();
            let witness = assign_witness(&layout, &inputs).unwrap();
            let proof = prove(&pk, &qap, &witness, &mut rng).unwrap();
            let io = layout.public_inputs(&inputs.statement).unwrap();
            assert!(verify(&vk, &proof, &io), "d = {d}");
        }
    }
}

#[test]
fn proof_size_does_not_depend_on_dimension() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut sizes = Vec::new();
    for d in [2, 64, 256] {
        let (r1cs, layout) = circuit(d);
        let qap = Qap::for_proving(&r1cs).unwrap();
        let (pk, vk) = setup::<E, _>(&qap, &mut rng);
        let r: Vec<Fr> = (0..d).map(|_| Fr::random(&mut rng)).collect();
        let w_s = vec![1.0; d];
        let inputs = ValidityInputs::honest(&layout, &w_s, &w_s, None, &r, 0.9, 1.0).unwrap();
        let witness = assign_witness(&layout, &inputs).unwrap();
        let proof = prove(&pk, &qap, &witness, &mut rng).unwrap();
        assert!(verify(&vk, &proof, &layout.public_inputs(&inputs.statement).unwrap()));
        sizes.push(proof.to_bytes().len());
    }
    assert_eq!(sizes, vec![sizes[0]; 3]);
    assert_eq!(sizes[0], 3 * (4 + 32));
}

/// `y = x^(2^k)` with one public input and `k + 1` private values.
fn squaring_chain(cs: &mut ConstraintSystem<Fr>, k: usize) {
    let x0 = cs.is_assigning().then(|| Fr::from_u64(3));
    let y = x0.map(|x| (0..k).fold(x, |v, _| v.square()));
    let out = cs.alloc_public(y);
    let mut cur = cs.alloc_aux(x0);
    for _ in 0..k {
        let next = cs.alloc_aux(cs.value(cur).map(|v| v.square()));
        cs.enforce(cur, cur, next);
        cur = next;
    }
    cs.enforce(cur, LinearCombination::one(), out);
}

#[test]
fn verifier_work_is_independent_of_private_size() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut medians = Vec::new();
    let mut vk_sizes = Vec::new();
    for k in [8, 4000] {
        let mut cs = ConstraintSystem::new_synthesis();
        squaring_chain(&mut cs, k);
        let r1cs = cs.into_r1cs();
        let mut cs = ConstraintSystem::new_assignment();
        squaring_chain(&mut cs, k);
        let witness = cs.into_witness();
        let io = witness.public.clone();
        let qap = Qap::for_proving(&r1cs).unwrap();
        let (pk, vk) = setup::<E, _>(&qap, &mut rng);
        let proof = prove(&pk, &qap, &witness, &mut rng).unwrap();
        assert!(verify(&vk, &proof, &io));
        vk_sizes.push(vk.to_bytes().len());
        let mut times: Vec<f64> = (0..301)
            .map(|_| {
                let t = Instant::now();
                for _ in 0..20 {
                    std::hint::black_box(verify(&vk, &proof, &io));
                }
                t.elapsed().as_secs_f64()
            })
            .collect();
        times.sort_by(f64::total_cmp);
        medians.push(times[150]);
    }
    assert_eq!(vk_sizes[0], vk_sizes[1]);
    let ratio = medians[1] / medians[0];
    assert!(ratio < 3.0, "verify time ratio {ratio}");
}

struct Fixture {
    r1cs: R1CS<Fr>,
    layout: ValidityCircuitLayout<Fr>,
    qap: Qap<Fr>,
    pk: bpfl_core::groth16::ProvingKey<E>,
    vk: bpfl_core::groth16::VerifyingKey<E>,
    r: Vec<Fr>,
}

fn fixture(d: usize) -> Fixture {
    let (r1cs, layout) = circuit(d);
    let qap = Qap::for_proving(&r1cs).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (pk, vk) = setup::<E, _>(&qap, &mut rng);
    let r = (0..d).map(|_| Fr::random(&mut rng)).collect();
    Fixture {
        r1cs,
        layout,
        qap,
        pk,
        vk,
        r,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // the proof system and direct constraint checking agree on every
    // statement, honest or not
    #[test]
    fn groth16_agrees_with_constraint_oracle(
        w_s in proptest::collection::vec(-4.0f64..4.0, 4),
        delta in proptest::collection::vec(-2.0f64..2.0, 4),
        scale in 0.0f64..1.5,
        variant in 0u8..4,
        seed in any::<u64>(),
    ) {
        thread_local!(static FIX: Fixture = fixture(4));
        FIX.with(|f| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let w: Vec<f64> = w_s.iter().zip(&delta).map(|(a, b)| (a + scale * b).clamp(-8.0, 8.0)).collect();
            let inputs = match variant {
                0 => ValidityInputs::honest(&f.layout, &w, &w_s, None, &f.r, 0.6, 2.5).unwrap(),
                1 => ValidityInputs::honest(&f.layout, &sign_flip(&w), &w_s, None, &f.r, 0.6, 2.5).unwrap(),
                2 => {
                    let mut i = ValidityInputs::honest(&f.layout, &w, &w_s, None, &f.r, 0.6, 2.5).unwrap();
                    i.statement.w_bar[0] += Fr::ONE;
                    i
                }
                _ => {
                    let h = algebraic_hash(&f.r, f.layout.hash_params());
                    forged_inputs(&f.layout, &w_s, None, &w, h, 0.6, 2.5).unwrap()
                }
            };
            let witness = assign_witness(&f.layout, &inputs).unwrap();
            let io = f.layout.public_inputs(&inputs.statement).unwrap();
            let proof = prove_unchecked(&f.pk, &f.qap, &witness, &mut rng).unwrap();
            prop_assert_eq!(verify(&f.vk, &proof, &io), oracle_verify(&f.r1cs, &witness, &io));
            Ok(())
        })?;
    }
}
