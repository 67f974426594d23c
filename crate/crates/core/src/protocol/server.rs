//! Server side: seed aggregation, hash agreement, reference training,
//! proof verification and masked aggregation.
//!
//! The server never holds a Paillier secret key, a mask or an unmasked
//! client model; none of those are fields of [`ServerState`]. What it does
//! hold:
//!
//! ```
//! use bpfl_core::protocol::ServerState;
//! use bpfl_core::groth16::MockEngine;
//! use bpfl_core::field::Fr;
//! fn peek(s: &ServerState<MockEngine<Fr>>) {
//!     let _ = (s.reference(), s.paillier_key(), s.agreed_hash(), s.encoded_global());
//! }
//! ```
//!
//! ```compile_fail
//! use bpfl_core::protocol::ServerState;
//! use bpfl_core::groth16::MockEngine;
//! use bpfl_core::field::Fr;
//! fn peek(s: &ServerState<MockEngine<Fr>>) {
//!     let _ = &s.mask;
//! }
//! ```
//!
//! ```compile_fail
//! use bpfl_core::protocol::ServerState;
//! use bpfl_core::groth16::MockEngine;
//! use bpfl_core::field::Fr;
//! fn peek(s: &ServerState<MockEngine<Fr>>) {
//!     let _ = s.secret_key();
//! }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{ComparisonMode, PublicStatement, ValidityCircuitLayout};
use crate::field::PrimeField;
use crate::fl::{masked_sum, train_local, Dataset, EncodedSum, ModelVector, TrainingTask};
use crate::groth16::{verify_bytes, PairingEngine, VerifyingKey};
use crate::mask::{server_aggregate_seeds, SeedShare};
use crate::paillier::{PaillierCiphertext, PaillierPublicKey};

use super::message::ProofParams;
use super::ProtocolError;

/// Most frequent commitment; ties go to the smallest value. `None` when
/// there are no commitments.
pub fn mode_of_hashes<F: PrimeField>(hashes: &[F]) -> Option<F> {
    let mut counts: BTreeMap<F, usize> = BTreeMap::new();
    for h in hashes {
        *counts.entry(*h).or_default() += 1;
    }
    let mut best: Option<(F, usize)> = None;
    for (h, c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((h, c));
        }
    }
    best.map(|(h, _)| h)
}

/// One round of reference training on the server's root data.
pub fn server_train_reference(
    task: &TrainingTask,
    data: &Dataset,
    previous: &[f64],
    seed: u64,
) -> Result<ModelVector, ProtocolError> {
    Ok(train_local(task, data, previous, seed)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ProofVerificationFailure,
    MalformedSubmission,
}

pub struct ServerState<E: PairingEngine> {
    vk: VerifyingKey<E>,
    layout: ValidityCircuitLayout<E::Scalar>,
    task: TrainingTask,
    data: Dataset,
    tau_c: f64,
    tau_e: f64,
    paillier: Option<PaillierPublicKey>,
    h: Option<E::Scalar>,
    reference: ModelVector,
    anchor: Option<ModelVector>,
    global: Option<EncodedSum<E::Scalar>>,
    /// `w_S^t` as encoded once per round, reused for every verification.
    statement_base: Option<PublicStatement<E::Scalar>>,
}

impl<E: PairingEngine> ServerState<E> {
    pub fn new(
        vk: VerifyingKey<E>,
        layout: ValidityCircuitLayout<E::Scalar>,
        task: TrainingTask,
        data: Dataset,
        tau_c: f64,
        tau_e: f64,
        initial: ModelVector,
    ) -> Self {
        ServerState {
            vk,
            layout,
            task,
            data,
            tau_c,
            tau_e,
            paillier: None,
            h: None,
            reference: initial,
            anchor: None,
            global: None,
            statement_base: None,
        }
    }

    pub fn set_paillier_key(&mut self, pk: PaillierPublicKey) {
        self.paillier = Some(pk);
    }

    pub fn aggregate_seeds(&self, shares: &[SeedShare]) -> Result<PaillierCiphertext, ProtocolError> {
        let pk = self.paillier.as_ref().ok_or(ProtocolError::MissingKey("paillier public key"))?;
        Ok(server_aggregate_seeds(pk, shares)?)
    }

    pub fn paillier_key(&self) -> Option<&PaillierPublicKey> {
        self.paillier.as_ref()
    }

    /// Fixes `h` as the mode of the commitments.
    pub fn agree_hash(&mut self, commits: &[E::Scalar]) -> Result<E::Scalar, ProtocolError> {
        let h = mode_of_hashes(commits).ok_or(ProtocolError::NoHashCommits)?;
        self.h = Some(h);
        Ok(h)
    }

    pub fn agreed_hash(&self) -> Option<E::Scalar> {
        self.h
    }

    /// Trains `w_S^t` starting from `w_S^{t-1}` and publishes it.
    pub fn start_round(&mut self, seed: u64) -> Result<ProofParams, ProtocolError> {
        let previous = self.reference.clone();
        self.reference = server_train_reference(&self.task, &self.data, &previous, seed)?;
        self.anchor = match self.layout.config().mode {
            ComparisonMode::Weights => None,
            ComparisonMode::Updates => Some(previous),
        };
        let codec = self.layout.codec();
        let w_s = codec.encode_vec(&self.reference).map_err(crate::circuit::CircuitError::from)?;
        let anchor = self
            .anchor
            .as_ref()
            .map(|a| codec.encode_vec(a))
            .transpose()
            .map_err(crate::circuit::CircuitError::from)?;
        let h = self.h.ok_or(ProtocolError::MissingKey("agreed hash"))?;
        self.statement_base = Some(PublicStatement::new(
            codec,
            w_s,
            Vec::new(),
            anchor,
            self.tau_c,
            self.tau_e,
            h,
        )?);
        Ok(ProofParams {
            reference: self.reference.clone(),
            anchor: self.anchor.clone(),
            tau_c: self.tau_c,
            tau_e: self.tau_e,
        })
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn anchor(&self) -> Option<&[f64]> {
        self.anchor.as_deref()
    }

    pub fn thresholds(&self) -> (f64, f64) {
        (self.tau_c, self.tau_e)
    }

    pub fn layout(&self) -> &ValidityCircuitLayout<E::Scalar> {
        &self.layout
    }

    /// Checks one submission against the round statement.
    pub fn verify_submission(&self, w_bar: &[E::Scalar], proof: &[u8]) -> Result<(), RejectReason> {
        let base = self.statement_base.as_ref().ok_or(RejectReason::MalformedSubmission)?;
        if w_bar.len() != self.layout.dimension() {
            return Err(RejectReason::MalformedSubmission);
        }
        let statement = PublicStatement {
            w_bar: w_bar.to_vec(),
            ..base.clone()
        };
        let inputs = self
            .layout
            .public_inputs(&statement)
            .map_err(|_| RejectReason::MalformedSubmission)?;
        if verify_bytes(&self.vk, proof, &inputs) {
            Ok(())
        } else {
            Err(RejectReason::ProofVerificationFailure)
        }
    }

    /// Sums the accepted masked models. With nothing accepted the previous
    /// sum stays in place and `None` is returned.
    pub fn aggregate(&mut self, accepted: &[Vec<E::Scalar>]) -> Result<Option<&EncodedSum<E::Scalar>>, ProtocolError> {
        if accepted.is_empty() {
            return Ok(None);
        }
        self.global = Some(masked_sum(accepted)?);
        Ok(self.global.as_ref())
    }

    pub fn encoded_global(&self) -> Option<&EncodedSum<E::Scalar>> {
        self.global.as_ref()
    }
}
