//! Byzantine behaviour: model-poisoning generators and malformed protocol
//! submissions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    assign_witness, CircuitError, PublicStatement, ValidityCircuitLayout, ValidityInputs,
};
use crate::field::PrimeField;
use crate::fl::metrics::{norm, squared_distance};
use crate::fl::ModelVector;
use crate::groth16::{prove, prove_unchecked, Groth16Error, PairingEngine, Proof, ProvingKey, Qap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("attack configuration: {0}")]
    Config(String),
    #[error("need at least {needed} benign models, got {got}")]
    TooFewBenign { needed: usize, got: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Groth16(#[from] Groth16Error),
}

/// Direction along which min-max / min-sum push the benign mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `-mean / |mean|`.
    #[default]
    InverseUnit,
    /// `-sign(mean)`.
    InverseSign,
    /// `-std` per coordinate.
    InverseStd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSearch {
    pub initial: f64,
    pub tolerance: f64,
}

impl Default for GammaSearch {
    fn default() -> Self {
        GammaSearch {
            initial: 10.0,
            tolerance: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttackKind {
    None,
    AddNoise {
        sigma: f64,
    },
    /// Negation, optionally boosted: `w -> -scale * w`.
    SignFlip {
        #[serde(default = "one")]
        scale: f64,
    },
    MinMax {
        #[serde(default)]
        perturbation: Perturbation,
        #[serde(default)]
        search: GammaSearch,
    },
    MinSum {
        #[serde(default)]
        perturbation: Perturbation,
        #[serde(default)]
        search: GammaSearch,
    },
    /// Protocol-level deviations.
    Malicious { behavior: MaliciousBehavior },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaliciousBehavior {
    /// Masks and proves an invalid model.
    InvalidModel,
    /// Submits `w * r` while proving `w + r`.
    BadMaskOp,
    /// Masks with some `r' != r`.
    WrongMaskVector,
    /// Proves the reference model with `r~ = w~ - w_S` and submits `w~`.
    ForgedProof,
}

impl MaliciousBehavior {
    pub const ALL: [MaliciousBehavior; 4] = [
        MaliciousBehavior::InvalidModel,
        MaliciousBehavior::BadMaskOp,
        MaliciousBehavior::WrongMaskVector,
        MaliciousBehavior::ForgedProof,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(flatten)]
    pub kind: AttackKind,
    /// Share of clients that are malicious, strictly below one half.
    pub fraction: f64,
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if !(0.0..0.5).contains(&self.fraction) {
            return Err(AttackError::Config(format!(
                "fraction {} must be in [0, 0.5): malicious clients must be a minority",
                self.fraction
            )));
        }
        match self.kind {
            AttackKind::AddNoise { sigma } if !(sigma >= 0.0) => {
                Err(AttackError::Config(format!("noise sigma {sigma} must be >= 0")))
            }
            AttackKind::SignFlip { scale } if !(scale > 0.0) => {
                Err(AttackError::Config(format!("sign-flip scale {scale} must be > 0")))
            }
            AttackKind::MinMax { search, .. } | AttackKind::MinSum { search, .. } => search.validate(),
            _ => Ok(()),
        }
    }

    /// Number of malicious clients among `n`, rounded down.
    pub fn malicious_count(&self, n: usize) -> usize {
        if self.kind == AttackKind::None {
            0
        } else {
            (self.fraction * n as f64 + 1e-9).floor() as usize
        }
    }
}

impl GammaSearch {
    fn validate(&self) -> Result<(), AttackError> {
        if !(self.initial > 0.0 && self.tolerance > 0.0 && self.initial.is_finite()) {
            return Err(AttackError::Config(format!(
                "gamma search needs positive initial value and tolerance, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `w + eps` with `eps ~ N(0, sigma^2)` per coordinate.
pub fn add_noise(w: &[f64], sigma: f64, seed: u64) -> ModelVector {
    if sigma == 0.0 {
        return w.to_vec();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    w.iter().map(|v| v + normal.sample(&mut rng)).collect()
}

pub fn sign_flip(w: &[f64]) -> ModelVector {
    w.iter().map(|v| -v).collect()
}

pub fn scaled_sign_flip(w: &[f64], scale: f64) -> ModelVector {
    w.iter().map(|v| -scale * v).collect()
}

fn mean_of(models: &[ModelVector]) -> ModelVector {
    let d = models[0].len();
    let mut m = vec![0.0; d];
    for w in models {
        for (a, b) in m.iter_mut().zip(w) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= models.len() as f64);
    m
}

/// The perturbation vector for `benign`.
pub fn perturbation_direction(benign: &[ModelVector], kind: Perturbation) -> ModelVector {
    let mean = mean_of(benign);
    match kind {
        Perturbation::InverseUnit => {
            let n = norm(&mean);
            if n == 0.0 {
                vec![0.0; mean.len()]
            } else {
                mean.iter().map(|v| -v / n).collect()
            }
        }
        Perturbation::InverseSign => mean.iter().map(|v| -v.signum() * (*v != 0.0) as u8 as f64).collect(),
        Perturbation::InverseStd => {
            let k = benign.len() as f64;
            (0..mean.len())
                .map(|j| {
                    let var = benign.iter().map(|w| (w[j] - mean[j]).powi(2)).sum::<f64>() / k;
                    -var.sqrt()
                })
                .collect()
        }
    }
}

fn check_benign(benign: &[ModelVector]) -> Result<(), AttackError> {
    if benign.len() < 2 {
        return Err(AttackError::TooFewBenign {
            needed: 2,
            got: benign.len(),
        });
    }
    Ok(())
}

/// Largest `gamma` in `[0, search.initial]`, up to `search.tolerance`, such
/// that `mean + gamma * p` satisfies `feasible`. `gamma = 0` is always
/// feasible for both bounds used here, so bisection keeps a feasible `lo`.
fn search_gamma(
    mean: &[f64],
    direction: &[f64],
    search: GammaSearch,
    feasible: impl Fn(&[f64]) -> bool,
) -> ModelVector {
    let at = |g: f64| -> ModelVector { mean.iter().zip(direction).map(|(m, p)| m + g * p).collect() };
    if feasible(&at(search.initial)) {
        return at(search.initial);
    }
    let (mut lo, mut hi) = (0.0, search.initial);
    while hi - lo > search.tolerance {
        let mid = (lo + hi) / 2.0;
        if feasible(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// Largest distance from the candidate to any benign model, bounded by the
/// largest pairwise benign distance.
pub fn min_max_feasible(candidate: &[f64], benign: &[ModelVector]) -> bool {
    let bound = benign
        .iter()
        .flat_map(|a| benign.iter().map(move |b| squared_distance(a, b)))
        .fold(0.0, f64::max);
    benign.iter().map(|b| squared_distance(candidate, b)).fold(0.0, f64::max) <= bound
}

/// Sum of squared distances from the candidate to the benign models, bounded
/// by the largest such sum among benign models.
pub fn min_sum_feasible(candidate: &[f64], benign: &[ModelVector]) -> bool {
    let bound = benign
        .iter()
        .map(|a| benign.iter().map(|b| squared_distance(a, b)).sum::<f64>())
        .fold(0.0, f64::max);
    benign.iter().map(|b| squared_distance(candidate, b)).sum::<f64>() <= bound
}

pub fn min_max_attack(
    benign: &[ModelVector],
    perturbation: Perturbation,
    search: GammaSearch,
) -> Result<ModelVector, AttackError> {
    check_benign(benign)?;
    let p = perturbation_direction(benign, perturbation);
    min_max_attack_along(benign, &p, search)
}

pub fn min_max_attack_along(
    benign: &[ModelVector],
    direction: &[f64],
    search: GammaSearch,
) -> Result<ModelVector, AttackError> {
    check_benign(benign)?;
    search.validate()?;
    Ok(search_gamma(&mean_of(benign), direction, search, |c| min_max_feasible(c, benign)))
}

pub fn min_sum_attack(
    benign: &[ModelVector],
    perturbation: Perturbation,
    search: GammaSearch,
) -> Result<ModelVector, AttackError> {
    check_benign(benign)?;
    let p = perturbation_direction(benign, perturbation);
    min_sum_attack_along(benign, &p, search)
}

pub fn min_sum_attack_along(
    benign: &[ModelVector],
    direction: &[f64],
    search: GammaSearch,
) -> Result<ModelVector, AttackError> {
    check_benign(benign)?;
    search.validate()?;
    Ok(search_gamma(&mean_of(benign), direction, search, |c| min_sum_feasible(c, benign)))
}

/// A masked model and its proof as sent to the server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission<E: PairingEngine> {
    pub w_bar: Vec<E::Scalar>,
    pub proof: Proof<E>,
}

/// What a client knows when it proves: the published round parameters and
/// its own secrets.
pub struct ProverContext<'a, E: PairingEngine> {
    pub pk: &'a ProvingKey<E>,
    pub qap: &'a Qap<E::Scalar>,
    pub layout: &'a ValidityCircuitLayout<E::Scalar>,
    pub reference: &'a [f64],
    pub anchor: Option<&'a [f64]>,
    pub tau_c: f64,
    pub tau_e: f64,
    /// The agreed mask.
    pub r: &'a [E::Scalar],
}

impl<E: PairingEngine> ProverContext<'_, E> {
    fn inputs(&self, w: &[f64], r: &[E::Scalar]) -> Result<ValidityInputs<E::Scalar>, AttackError> {
        Ok(ValidityInputs::honest(
            self.layout,
            w,
            self.reference,
            self.anchor,
            r,
            self.tau_c,
            self.tau_e,
        )?)
    }

    /// Proves with the honest prover when the witness satisfies the circuit
    /// and with the forced prover otherwise.
    fn prove_any<R: Rng + ?Sized>(
        &self,
        inputs: &ValidityInputs<E::Scalar>,
        rng: &mut R,
    ) -> Result<Proof<E>, AttackError> {
        let witness = assign_witness(self.layout, inputs)?;
        match prove(self.pk, self.qap, &witness, rng) {
            Err(Groth16Error::Unsatisfied) => Ok(prove_unchecked(self.pk, self.qap, &witness, rng)?),
            other => Ok(other?),
        }
    }
}

/// The protocol-following submission; fails if `w` is outside the thresholds.
pub fn honest_submission<E: PairingEngine, R: Rng + ?Sized>(
    ctx: &ProverContext<'_, E>,
    w: &[f64],
    rng: &mut R,
) -> Result<Submission<E>, AttackError> {
    let inputs = ctx.inputs(w, ctx.r)?;
    let witness = assign_witness(ctx.layout, &inputs)?;
    let proof = prove(ctx.pk, ctx.qap, &witness, rng)?;
    Ok(Submission {
        w_bar: inputs.statement.w_bar,
        proof,
    })
}

/// Submits `w` masked correctly, forcing a proof if `w` is invalid. A valid
/// `w` yields an honest, accepted submission.
pub fn submit_model<E: PairingEngine, R: Rng + ?Sized>(
    ctx: &ProverContext<'_, E>,
    w: &[f64],
    rng: &mut R,
) -> Result<Submission<E>, AttackError> {
    let inputs = ctx.inputs(w, ctx.r)?;
    let proof = ctx.prove_any(&inputs, rng)?;
    Ok(Submission {
        w_bar: inputs.statement.w_bar,
        proof,
    })
}

/// The malformed submission for `behavior`, built around the client's own
/// trained model `w`.
pub fn malicious_submission<E: PairingEngine, R: Rng + ?Sized>(
    behavior: MaliciousBehavior,
    ctx: &ProverContext<'_, E>,
    w: &[f64],
    rng: &mut R,
) -> Result<Submission<E>, AttackError> {
    match behavior {
        MaliciousBehavior::InvalidModel => submit_model(ctx, &sign_flip(w), rng),
        MaliciousBehavior::BadMaskOp => {
            let inputs = ctx.inputs(w, ctx.r)?;
            let proof = ctx.prove_any(&inputs, rng)?;
            let w_bar = inputs.w.iter().zip(ctx.r).map(|(a, b)| *a * *b).collect();
            Ok(Submission { w_bar, proof })
        }
        MaliciousBehavior::WrongMaskVector => {
            let r: Vec<E::Scalar> = loop {
                let r: Vec<E::Scalar> = ctx.r.iter().map(|_| E::Scalar::random(rng)).collect();
                if r.as_slice() != ctx.r {
                    break r;
                }
            };
            // the statement still commits to the agreed hash the server holds
            let mut inputs = ctx.inputs(w, &r)?;
            inputs.statement.h = crate::circuit::algebraic_hash(ctx.r, ctx.layout.hash_params());
            let proof = ctx.prove_any(&inputs, rng)?;
            Ok(Submission {
                w_bar: inputs.statement.w_bar,
                proof,
            })
        }
        MaliciousBehavior::ForgedProof => {
            let forged = sign_flip(w);
            Ok(forge_with_reference(ctx, &forged, rng)?)
        }
    }
}

/// Private inputs `{w_S, r~}` with `r~ = enc(w~) - enc(w_S)`: every
/// similarity check passes trivially and `w_S + r~ = w~`, so only the
/// commitment to the agreed mask stands in the way.
pub fn forged_inputs<F: PrimeField>(
    layout: &ValidityCircuitLayout<F>,
    reference: &[f64],
    anchor: Option<&[f64]>,
    forged_model: &[f64],
    agreed_hash: F,
    tau_c: f64,
    tau_e: f64,
) -> Result<ValidityInputs<F>, AttackError> {
    let codec = layout.codec();
    let w_s: Vec<F> = codec.encode_vec(reference).map_err(CircuitError::from)?;
    let target: Vec<F> = codec.encode_vec(forged_model).map_err(CircuitError::from)?;
    let r_tilde: Vec<F> = target.iter().zip(&w_s).map(|(a, b)| *a - *b).collect();
    let anchor = anchor
        .map(|a| codec.encode_vec(a))
        .transpose()
        .map_err(CircuitError::from)?;
    let statement = PublicStatement::new(codec, w_s.clone(), target, anchor, tau_c, tau_e, agreed_hash)?;
    Ok(ValidityInputs {
        statement,
        w: w_s,
        r: r_tilde,
    })
}

fn forge_with_reference<E: PairingEngine, R: Rng + ?Sized>(
    ctx: &ProverContext<'_, E>,
    forged_model: &[f64],
    rng: &mut R,
) -> Result<Submission<E>, AttackError> {
    let h = crate::circuit::algebraic_hash(ctx.r, ctx.layout.hash_params());
    let inputs = forged_inputs(
        ctx.layout,
        ctx.reference,
        ctx.anchor,
        forged_model,
        h,
        ctx.tau_c,
        ctx.tau_e,
    )?;
    let proof = ctx.prove_any(&inputs, rng)?;
    Ok(Submission {
        w_bar: inputs.statement.w_bar,
        proof,
    })
}
