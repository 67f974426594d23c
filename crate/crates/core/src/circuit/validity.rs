//! The model-validity circuit.
//!
//! Over fixed-point encodings (scale `k`) the circuit enforces
//!
//! 1. `sum_j (w_j - s_j)^2 <= (k tau_e)^2`
//! 2. `(k * sum_j w_j s_j)^2 >= (k tau_c)^2 * sum_j w_j^2 * sum_j s_j^2`
//! 3. `sum_j w_j s_j >= 0`
//! 4. `wbar_j = w_j + r_j` for every coordinate
//! 5. `hash(r) = h`
//!
//! where `w` is the private local model, `s` the server's reference model and
//! `r` the private mask. Each inequality is a range check on its slack. In
//! update mode the two cosine/Euclidean operands are taken relative to a public
//! anchor vector instead of the origin.

use num_bigint::BigUint;

use super::gadgets::range_check_gadget;
use super::hash::{algebraic_hash, hash_gadget, AlgebraicHashParams};
use super::r1cs::{ConstraintSystem, LinearCombination, Variable, Witness, R1CS};
use super::CircuitError;
use crate::field::PrimeField;
use crate::fixed::FixedPointCodec;

/// What the similarity checks compare.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    /// Full weight vectors.
    #[default]
    Weights,
    /// Differences from a public anchor (typically the previous reference model).
    Updates,
}

#[derive(Clone, Debug)]
pub struct ValidityConfig<F: PrimeField> {
    pub dimension: usize,
    pub codec: FixedPointCodec,
    pub hash: AlgebraicHashParams<F>,
    pub mode: ComparisonMode,
    /// Disabling this drops constraint 5; only useful to demonstrate the
    /// mask-substitution attack it prevents.
    pub check_hash: bool,
}

impl<F: PrimeField> ValidityConfig<F> {
    pub fn new(dimension: usize, codec: FixedPointCodec, hash: AlgebraicHashParams<F>) -> Self {
        ValidityConfig {
            dimension,
            codec,
            hash,
            mode: ComparisonMode::Weights,
            check_hash: true,
        }
    }
}

/// Variable placement of a built circuit.
///
/// Public inputs are laid out as `w_S[d] | wbar[d] | anchor[d]? | tau_c_sq |
/// tau_e_sq | h`; the auxiliary part starts with `w[d] | r[d]`.
#[derive(Clone, Debug)]
pub struct ValidityCircuitLayout<F: PrimeField> {
    config: ValidityConfig<F>,
    io_len: usize,
    num_aux: usize,
    required_bits: u32,
}

impl<F: PrimeField> ValidityCircuitLayout<F> {
    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn codec(&self) -> &FixedPointCodec {
        &self.config.codec
    }

    pub fn hash_params(&self) -> &AlgebraicHashParams<F> {
        &self.config.hash
    }

    pub fn config(&self) -> &ValidityConfig<F> {
        &self.config
    }

    pub fn io_len(&self) -> usize {
        self.io_len
    }

    pub fn num_aux(&self) -> usize {
        self.num_aux
    }

    /// Smallest slack width this circuit's intermediates need.
    pub fn required_bits(&self) -> u32 {
        self.required_bits
    }

    pub fn w_s_index(&self, j: usize) -> usize {
        j
    }

    pub fn w_bar_index(&self, j: usize) -> usize {
        self.config.dimension + j
    }

    /// Aux index of the private weight `w_j`.
    pub fn w_index(&self, j: usize) -> usize {
        j
    }

    /// Aux index of the private mask `r_j`.
    pub fn r_index(&self, j: usize) -> usize {
        self.config.dimension + j
    }

    /// Serializes a statement into the public-input vector expected by the
    /// verifier.
    pub fn public_inputs(&self, st: &PublicStatement<F>) -> Result<Vec<F>, CircuitError> {
        self.check_statement(st)?;
        let mut io = Vec::with_capacity(self.io_len);
        io.extend_from_slice(&st.w_s);
        io.extend_from_slice(&st.w_bar);
        if let Some(a) = &st.anchor {
            io.extend_from_slice(a);
        }
        io.extend([st.tau_c_sq, st.tau_e_sq, st.h]);
        Ok(io)
    }

    fn check_statement(&self, st: &PublicStatement<F>) -> Result<(), CircuitError> {
        let d = self.config.dimension;
        for v in [&st.w_s, &st.w_bar] {
            if v.len() != d {
                return Err(CircuitError::Dimension {
                    expected: d,
                    actual: v.len(),
                });
            }
        }
        match (self.config.mode, &st.anchor) {
            (ComparisonMode::Weights, None) => Ok(()),
            (ComparisonMode::Updates, Some(a)) if a.len() == d => Ok(()),
            (ComparisonMode::Updates, Some(a)) => Err(CircuitError::Dimension {
                expected: d,
                actual: a.len(),
            }),
            (ComparisonMode::Weights, Some(a)) => Err(CircuitError::Dimension {
                expected: 0,
                actual: a.len(),
            }),
            (ComparisonMode::Updates, None) => Err(CircuitError::Dimension {
                expected: d,
                actual: 0,
            }),
        }
    }
}

/// Everything the verifier sees.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicStatement<F: PrimeField> {
    pub w_s: Vec<F>,
    pub w_bar: Vec<F>,
    pub anchor: Option<Vec<F>>,
    pub tau_c_sq: F,
    pub tau_e_sq: F,
    pub h: F,
}

impl<F: PrimeField> PublicStatement<F> {
    /// Statement for the given encoded vectors and real thresholds.
    pub fn new(
        codec: &FixedPointCodec,
        w_s: Vec<F>,
        w_bar: Vec<F>,
        anchor: Option<Vec<F>>,
        tau_c: f64,
        tau_e: f64,
        h: F,
    ) -> Result<Self, CircuitError> {
        let (tau_c_sq, tau_e_sq) = encode_thresholds::<F>(codec, tau_c, tau_e)?;
        Ok(PublicStatement {
            w_s,
            w_bar,
            anchor,
            tau_c_sq,
            tau_e_sq,
            h,
        })
    }
}

/// `((k tau_c)^2, (k tau_e)^2)` as field elements; `tau_c` must lie in `[0, 1]`.
pub fn encode_thresholds<F: PrimeField>(
    codec: &FixedPointCodec,
    tau_c: f64,
    tau_e: f64,
) -> Result<(F, F), CircuitError> {
    if !(0.0..=1.0).contains(&tau_c) {
        return Err(CircuitError::Threshold(tau_c));
    }
    let c: BigUint = codec.threshold_square(tau_c)?;
    let e: BigUint = codec.threshold_square(tau_e)?;
    Ok((F::from_biguint(&c), F::from_biguint(&e)))
}

/// Private and public inputs of one proof.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidityInputs<F: PrimeField> {
    pub statement: PublicStatement<F>,
    pub w: Vec<F>,
    pub r: Vec<F>,
}

impl<F: PrimeField> ValidityInputs<F> {
    /// Inputs of an honest client: `wbar = w + r` and `h = hash(r)`.
    #[allow(clippy::too_many_arguments)]
    pub fn honest(
        layout: &ValidityCircuitLayout<F>,
        w: &[f64],
        w_s: &[f64],
        anchor: Option<&[f64]>,
        r: &[F],
        tau_c: f64,
        tau_e: f64,
    ) -> Result<Self, CircuitError> {
        let codec = layout.codec();
        let w: Vec<F> = codec.encode_vec(w)?;
        let w_s: Vec<F> = codec.encode_vec(w_s)?;
        let anchor = anchor.map(|a| codec.encode_vec(a)).transpose()?;
        let w_bar = w.iter().zip(r).map(|(a, b)| *a + *b).collect();
        let h = algebraic_hash(r, layout.hash_params());
        let statement = PublicStatement::new(codec, w_s, w_bar, anchor, tau_c, tau_e, h)?;
        Ok(ValidityInputs {
            statement,
            w,
            r: r.to_vec(),
        })
    }
}

fn required_bits(cfg: &ComparisonMode, d: usize, codec: &FixedPointCodec) -> u32 {
    let kw = BigUint::from(codec.max_encoded_weight());
    let k = BigUint::from(1u32) << codec.scale_bits();
    let d = BigUint::from(d);
    let delta = match cfg {
        ComparisonMode::Weights => kw.clone(),
        ComparisonMode::Updates => &kw * 2u32,
    };
    let euclid = &d * (&kw * 2u32).pow(2);
    // (k * dot)^2 and (k tau_c)^2 * q * s2 with tau_c <= 1 share this bound
    let cosine = (&k * &d * delta.pow(2)).pow(2);
    euclid.max(cosine).bits() as u32
}

/// Builds the validity circuit for dimension `d` with default options.
pub fn build_validity_circuit<F: PrimeField>(
    d: usize,
    codec: FixedPointCodec,
    hash: AlgebraicHashParams<F>,
) -> Result<(R1CS<F>, ValidityCircuitLayout<F>), CircuitError> {
    build_validity_circuit_with(ValidityConfig::new(d, codec, hash))
}

pub fn build_validity_circuit_with<F: PrimeField>(
    config: ValidityConfig<F>,
) -> Result<(R1CS<F>, ValidityCircuitLayout<F>), CircuitError> {
    let d = config.dimension;
    if d == 0 {
        return Err(CircuitError::Dimension {
            expected: 1,
            actual: 0,
        });
    }
    let needed = required_bits(&config.mode, d, &config.codec);
    if needed > config.codec.sum_bits() {
        return Err(CircuitError::BitWidth {
            needed,
            available: config.codec.sum_bits(),
        });
    }
    let mut layout = ValidityCircuitLayout {
        config,
        io_len: 0,
        num_aux: 0,
        required_bits: needed,
    };
    let mut cs = ConstraintSystem::new_synthesis();
    synthesize(&mut cs, &layout, None);
    layout.io_len = cs.num_public();
    layout.num_aux = cs.num_aux();
    Ok((cs.into_r1cs(), layout))
}

/// Full assignment for `inputs`. Inconsistent inputs are assigned as given
/// and simply fail [`check_satisfied`](super::check_satisfied).
pub fn assign_witness<F: PrimeField>(
    layout: &ValidityCircuitLayout<F>,
    inputs: &ValidityInputs<F>,
) -> Result<Witness<F>, CircuitError> {
    layout.check_statement(&inputs.statement)?;
    let d = layout.dimension();
    for v in [&inputs.w, &inputs.r] {
        if v.len() != d {
            return Err(CircuitError::Dimension {
                expected: d,
                actual: v.len(),
            });
        }
    }
    let mut cs = ConstraintSystem::new_assignment();
    synthesize(&mut cs, layout, Some(inputs));
    Ok(cs.into_witness())
}

fn synthesize<F: PrimeField>(
    cs: &mut ConstraintSystem<F>,
    layout: &ValidityCircuitLayout<F>,
    inputs: Option<&ValidityInputs<F>>,
) {
    let cfg = &layout.config;
    let d = cfg.dimension;
    let bits = cfg.codec.sum_bits();
    let st = inputs.map(|i| &i.statement);
    let k = F::from_u64(1u64 << cfg.codec.scale_bits());
    let kw = F::from_u64(cfg.codec.max_encoded_weight());

    let w_s: Vec<Variable> = (0..d).map(|j| cs.alloc_public(st.map(|s| s.w_s[j]))).collect();
    let w_bar: Vec<Variable> = (0..d).map(|j| cs.alloc_public(st.map(|s| s.w_bar[j]))).collect();
    let anchor: Option<Vec<Variable>> = (cfg.mode == ComparisonMode::Updates).then(|| {
        (0..d)
            .map(|j| cs.alloc_public(st.map(|s| s.anchor.as_ref().expect("checked")[j])))
            .collect()
    });
    let tau_c_sq = cs.alloc_public(st.map(|s| s.tau_c_sq));
    let tau_e_sq = cs.alloc_public(st.map(|s| s.tau_e_sq));
    let h = cs.alloc_public(st.map(|s| s.h));

    let w: Vec<Variable> = (0..d).map(|j| cs.alloc_aux(inputs.map(|i| i.w[j]))).collect();
    let r: Vec<Variable> = (0..d).map(|j| cs.alloc_aux(inputs.map(|i| i.r[j]))).collect();

    let mut sum_e = LinearCombination::zero();
    let mut sum_p = LinearCombination::zero();
    let mut sum_q = LinearCombination::zero();
    let mut sum_s2 = LinearCombination::zero();
    for j in 0..d {
        // mask consistency
        cs.enforce(
            LinearCombination::from(w[j]) + r[j] - w_bar[j],
            LinearCombination::one(),
            LinearCombination::zero(),
        );
        // -kW <= w_j <= kW
        range_check_gadget(
            cs,
            LinearCombination::from(w[j]) + LinearCombination::constant(kw),
            cfg.codec.weight_bits(),
        );
        range_check_gadget(
            cs,
            LinearCombination::constant(kw) - w[j],
            cfg.codec.weight_bits(),
        );
        let diff = LinearCombination::from(w[j]) - w_s[j];
        sum_e = sum_e + LinearCombination::from(cs.mul(diff.clone(), diff));
        let (a, b): (LinearCombination<F>, LinearCombination<F>) = match &anchor {
            None => (w[j].into(), w_s[j].into()),
            Some(anc) => (
                LinearCombination::from(w[j]) - anc[j],
                LinearCombination::from(w_s[j]) - anc[j],
            ),
        };
        sum_p = sum_p + LinearCombination::from(cs.mul(a.clone(), b.clone()));
        sum_q = sum_q + LinearCombination::from(cs.mul(a.clone(), a));
        sum_s2 = sum_s2 + LinearCombination::from(cs.mul(b.clone(), b));
    }

    range_check_gadget(cs, LinearCombination::from(tau_e_sq) - sum_e, bits);
    range_check_gadget(cs, sum_p.clone(), bits);
    let kp = sum_p * k;
    let lhs = cs.mul(kp.clone(), kp);
    let norms = cs.mul(sum_q, sum_s2);
    let rhs = cs.mul(tau_c_sq.into(), norms.into());
    range_check_gadget(cs, LinearCombination::from(lhs) - rhs, bits);

    if cfg.check_hash {
        let r_lcs: Vec<LinearCombination<F>> = r.iter().map(|v| (*v).into()).collect();
        let digest = hash_gadget(cs, &r_lcs, &cfg.hash);
        cs.enforce(digest - h, LinearCombination::one(), LinearCombination::zero());
    }
}
