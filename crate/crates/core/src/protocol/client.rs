//! Client side: key sharing, seed contribution, mask expansion, local
//! training, proving and unmasking.

use std::sync::Arc;

use num_bigint::BigUint;
use rand::Rng;

use crate::adversary::{malicious_submission, submit_model, MaliciousBehavior, ProverContext, Submission};
use crate::circuit::{algebraic_hash, ValidityCircuitLayout};
use crate::fl::{clip, train_local, unmask_global, Dataset, EncodedSum, ModelVector, TrainingTask};
use crate::groth16::{PairingEngine, ProvingKey, Qap};
use crate::mask::{client_share, expand_mask, SeedShare};
use crate::paillier::{keygen, PaillierCiphertext, PaillierPublicKey, PaillierSecretKey};

use super::message::ProofParams;
use super::ProtocolError;

/// What a client sends in a round.
#[derive(Clone, Debug, PartialEq)]
pub enum Intent {
    /// Mask and prove this model; the proof is forced if it is invalid.
    Model(ModelVector),
    /// A malformed submission built around the trained model.
    Deviate(MaliciousBehavior),
}

/// Read-only material shared by all clients.
pub struct ProverMaterial<E: PairingEngine> {
    pub pk: ProvingKey<E>,
    pub qap: Qap<E::Scalar>,
    pub layout: ValidityCircuitLayout<E::Scalar>,
}

pub struct ClientState<E: PairingEngine> {
    id: u32,
    data: Dataset,
    task: TrainingTask,
    material: Arc<ProverMaterial<E>>,
    paillier_pk: Option<PaillierPublicKey>,
    paillier_sk: Option<PaillierSecretKey>,
    own_seed: Option<BigUint>,
    mask: Option<Vec<E::Scalar>>,
    global: ModelVector,
    params: Option<ProofParams>,
    trained: Option<ModelVector>,
    submitted: Option<ModelVector>,
}

impl<E: PairingEngine> ClientState<E> {
    pub fn new(id: u32, data: Dataset, task: TrainingTask, material: Arc<ProverMaterial<E>>) -> Self {
        ClientState {
            id,
            data,
            task,
            material,
            paillier_pk: None,
            paillier_sk: None,
            own_seed: None,
            mask: None,
            global: Vec::new(),
            params: None,
            trained: None,
            submitted: None,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Generates the shared Paillier key pair.
    pub fn generate_paillier<R: Rng + ?Sized>(
        &mut self,
        bits: u64,
        rng: &mut R,
    ) -> Result<(PaillierPublicKey, PaillierSecretKey), ProtocolError> {
        let kp = keygen(bits, rng)?;
        self.paillier_pk = Some(kp.public.clone());
        self.paillier_sk = Some(kp.secret.clone());
        Ok((kp.public, kp.secret))
    }

    pub fn set_paillier(&mut self, pk: PaillierPublicKey, sk: PaillierSecretKey) {
        self.paillier_pk = Some(pk);
        self.paillier_sk = Some(sk);
    }

    pub fn paillier_key(&self) -> Option<&PaillierPublicKey> {
        self.paillier_pk.as_ref()
    }

    pub fn seed_share<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<SeedShare, ProtocolError> {
        let pk = self.paillier_pk.as_ref().ok_or(ProtocolError::MissingKey("paillier public key"))?;
        let (seed, share) = client_share(self.id, pk, rng)?;
        self.own_seed = Some(seed);
        Ok(share)
    }

    /// Decrypts the aggregated seed, expands the mask and returns its hash.
    pub fn finish_mask(&mut self, seed_sum: &PaillierCiphertext) -> Result<E::Scalar, ProtocolError> {
        let sk = self.paillier_sk.as_ref().ok_or(ProtocolError::MissingKey("paillier secret key"))?;
        let s = sk.decrypt(seed_sum)?;
        let layout = &self.material.layout;
        let mask = expand_mask(&s, layout.dimension(), layout.hash_params())?;
        let h = algebraic_hash(&mask.r, layout.hash_params());
        self.mask = Some(mask.r);
        Ok(h)
    }

    pub fn mask(&self) -> Option<&[E::Scalar]> {
        self.mask.as_deref()
    }

    pub fn set_global(&mut self, w: ModelVector) {
        self.global = w;
    }

    /// This client's view of the global model.
    pub fn global(&self) -> &[f64] {
        &self.global
    }

    pub fn set_params(&mut self, params: ProofParams) {
        self.params = Some(params);
    }

    /// Local training from the current global model.
    pub fn train(&mut self, seed: u64) -> Result<&[f64], ProtocolError> {
        let w = train_local(&self.task, &self.data, &self.global, seed)?;
        Ok(self.trained.insert(w))
    }

    /// The last locally trained model.
    pub fn trained(&self) -> Option<&[f64]> {
        self.trained.as_deref()
    }

    /// The plaintext model behind the last well-formed submission; `None`
    /// after a protocol deviation.
    pub fn submitted(&self) -> Option<&[f64]> {
        self.submitted.as_deref()
    }

    pub fn submit<R: Rng + ?Sized>(&mut self, intent: Intent, rng: &mut R) -> Result<Submission<E>, ProtocolError> {
        let params = self.params.as_ref().ok_or(ProtocolError::MissingKey("round parameters"))?;
        let r = self.mask.as_deref().ok_or(ProtocolError::MissingKey("mask"))?;
        let m = &*self.material;
        let ctx = ProverContext {
            pk: &m.pk,
            qap: &m.qap,
            layout: &m.layout,
            reference: &params.reference,
            anchor: params.anchor.as_deref(),
            tau_c: params.tau_c,
            tau_e: params.tau_e,
            r,
        };
        match intent {
            Intent::Model(mut w) => {
                clip(&mut w, m.layout.codec().weight_bound());
                let sub = submit_model(&ctx, &w, rng)?;
                self.submitted = Some(w);
                Ok(sub)
            }
            Intent::Deviate(behavior) => {
                let w = self.trained.as_deref().ok_or(ProtocolError::MissingKey("trained model"))?;
                let sub = malicious_submission(behavior, &ctx, w, rng)?;
                self.submitted = None;
                Ok(sub)
            }
        }
    }

    /// Unmasks the broadcast sum into the next global model.
    pub fn apply_global(&mut self, encoded: &EncodedSum<E::Scalar>) -> Result<(), ProtocolError> {
        let r = self.mask.as_deref().ok_or(ProtocolError::MissingKey("mask"))?;
        self.global = unmask_global(encoded, r, self.material.layout.codec())?;
        Ok(())
    }
}
