//! The federated protocol: setup, mask negotiation and training rounds,
//! with every exchange going through a [`Bus`] as encoded frames.
//!
//! A single driver plays all parties. Each party only touches its own
//! state and what it receives, so the division of knowledge is the same as
//! in a distributed deployment.

pub mod client;
pub mod message;
pub mod server;
pub mod transport;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{add_noise, min_max_attack, min_sum_attack, scaled_sign_flip, AttackError, AttackKind, AttackSpec};
use crate::circuit::{build_validity_circuit_with, AlgebraicHashParams, CircuitError, ComparisonMode, ValidityConfig};
use crate::field::PrimeField;
use crate::fixed::{FixedPointCodec, FixedPointError, DEFAULT_SCALE_BITS};
use crate::fl::{Dataset, EncodedSum, FlError, ModelVector, TrainingTask};
use crate::groth16::{self, Groth16Error, GroupElement, PairingEngine, Proof, Qap};
use crate::mask::{MaskError, SeedShare};
use crate::paillier::{PaillierError, PaillierPublicKey, PaillierSecretKey, DEFAULT_KEY_BITS};
use crate::poly::PolyError;

pub use client::{ClientState, Intent, ProverMaterial};
pub use message::{Message, Party, Payload, ProofParams};
pub use server::{mode_of_hashes, server_train_reference, RejectReason, ServerState};
pub use transport::{Bus, ByteCounts, InProcTransport, TcpTransport, Transport};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error("malformed frame: {0}")]
    Decode(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no frame waiting for {0}")]
    NothingToReceive(Party),
    #[error("{0} is not connected")]
    UnknownParty(Party),
    #[error("round {round}: expected {expected} at {at}, got {got} from {from}")]
    Unexpected {
        round: u32,
        at: Party,
        expected: &'static str,
        got: &'static str,
        from: Party,
    },
    #[error("missing {0}")]
    MissingKey(&'static str),
    #[error("no hash commitments received")]
    NoHashCommits,
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Groth16(#[from] Groth16Error),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub num_clients: usize,
    pub task: TrainingTask,
    pub scale_bits: u32,
    pub hash_rounds: usize,
    pub tau_c: f64,
    pub tau_e: f64,
    pub mode: ComparisonMode,
    pub paillier_bits: u64,
    pub attack: AttackSpec,
    /// Run mask negotiation again at the start of every round.
    pub renegotiate_mask: bool,
    /// Train and prove on all clients concurrently.
    pub parallel: bool,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(num_clients: usize, task: TrainingTask) -> Self {
        ProtocolConfig {
            num_clients,
            task,
            scale_bits: DEFAULT_SCALE_BITS,
            hash_rounds: crate::circuit::hash::DEFAULT_HASH_ROUNDS,
            tau_c: 0.5,
            tau_e: 4.0,
            mode: ComparisonMode::Weights,
            paillier_bits: DEFAULT_KEY_BITS,
            attack: AttackSpec::none(),
            renegotiate_mask: false,
            parallel: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.num_clients == 0 {
            return Err(ProtocolError::Config("need at least one client".into()));
        }
        if self.num_clients >= crate::protocol::message::SERVER_ID as usize {
            return Err(ProtocolError::Config("too many clients".into()));
        }
        if !(0.0..=1.0).contains(&self.tau_c) {
            return Err(ProtocolError::Config(format!("tau_c = {} outside [0, 1]", self.tau_c)));
        }
        if !(self.tau_e.is_finite() && self.tau_e > 0.0) {
            return Err(ProtocolError::Config(format!("tau_e = {} must be positive", self.tau_e)));
        }
        if self.hash_rounds == 0 {
            return Err(ProtocolError::Config("hash needs at least one round".into()));
        }
        self.attack.validate()?;
        Ok(())
    }
}

/// A 64-bit seed for one purpose, derived from the run seed.
pub fn derive_seed(master: u64, label: &str, a: u64, b: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_be_bytes());
    h.update((label.len() as u32).to_be_bytes());
    h.update(label.as_bytes());
    h.update(a.to_be_bytes());
    h.update(b.to_be_bytes());
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

fn rng_for(master: u64, label: &str, a: u64, b: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, label, a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub client: u32,
    pub reason: RejectReason,
}

/// The deterministic record of a round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub accepted: Vec<u32>,
    pub rejected: Vec<Rejection>,
    pub global_updated: bool,
    pub bytes: ByteCounts,
    /// Hex SHA-256 over every frame sent since setup began.
    pub transcript: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundTimings {
    pub server_train: Duration,
    pub client_train: Vec<Duration>,
    pub client_prove: Vec<Duration>,
    /// Decoding, verifying and summing all submissions.
    pub server_verify_aggregate: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutcome {
    pub report: RoundReport,
    pub timings: RoundTimings,
}

pub struct Session<E: PairingEngine> {
    config: ProtocolConfig,
    server: ServerState<E>,
    clients: Vec<ClientState<E>>,
    malicious: Vec<bool>,
    bus: Bus<E::Scalar>,
    round: u32,
    setup_bytes: ByteCounts,
    setup_time: Duration,
}

/// Trusted setup, initial model broadcast, key sharing and mask agreement.
///
/// The malicious clients are the highest indices, `malicious_count(n)` of
/// them; client 0, which generates the Paillier key, is always honest.
pub fn run_setup<E: PairingEngine>(
    config: ProtocolConfig,
    client_data: Vec<Dataset>,
    server_data: Dataset,
    transport: Box<dyn Transport>,
) -> Result<Session<E>, ProtocolError> {
    let started = Instant::now();
    config.validate()?;
    let n = config.num_clients;
    if client_data.len() != n {
        return Err(ProtocolError::Config(format!(
            "{} client datasets for {n} clients",
            client_data.len()
        )));
    }
    let spec = config.task.model;
    let d = spec.dimension();
    let codec = FixedPointCodec::for_dimension::<E::Scalar>(d, config.scale_bits, config.task.weight_bound)?;
    let mut vc = ValidityConfig::new(d, codec, AlgebraicHashParams::new(config.hash_rounds));
    vc.mode = config.mode;
    let (r1cs, layout) = build_validity_circuit_with(vc)?;
    let qap = Qap::for_proving(&r1cs)?;
    let (pk, vk) = groth16::setup::<E, _>(&qap, &mut rng_for(config.seed, "setup", 0, 0));
    let material = Arc::new(ProverMaterial {
        pk,
        qap,
        layout: layout.clone(),
    });

    let initial = spec.initial(derive_seed(config.seed, "initial", 0, 0));
    let server = ServerState::new(
        vk,
        layout,
        config.task,
        server_data,
        config.tau_c,
        config.tau_e,
        initial.clone(),
    );
    let clients = client_data
        .into_iter()
        .enumerate()
        .map(|(i, data)| ClientState::new(i as u32, data, config.task, Arc::clone(&material)))
        .collect();
    let m = config.attack.malicious_count(n);
    let malicious = (0..n).map(|i| i >= n - m).collect();
    let mut session = Session {
        config,
        server,
        clients,
        malicious,
        bus: Bus::new(transport),
        round: 0,
        setup_bytes: ByteCounts::default(),
        setup_time: Duration::ZERO,
    };

    session.broadcast_from_server(0, Payload::InitialModel(initial))?;
    for i in 0..n {
        let msg = session.recv_client(i, 0)?;
        match msg.payload {
            Payload::InitialModel(w) if w.len() == d => session.clients[i].set_global(w),
            other => return Err(session.unexpected(0, Party::Client(i as u32), "initial-model", &other, msg.sender)),
        }
    }
    session.share_paillier_key()?;
    session.negotiate_mask(0)?;
    session.setup_bytes = session.bus.bytes();
    session.setup_time = started.elapsed();
    Ok(session)
}

impl<E: PairingEngine> Session<E> {
    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn server(&self) -> &ServerState<E> {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState<E>] {
        &self.clients
    }

    pub fn is_malicious(&self, client: usize) -> bool {
        self.malicious[client]
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn bytes(&self) -> ByteCounts {
        self.bus.bytes()
    }

    pub fn setup_bytes(&self) -> ByteCounts {
        self.setup_bytes
    }

    pub fn setup_time(&self) -> Duration {
        self.setup_time
    }

    pub fn bus(&self) -> &Bus<E::Scalar> {
        &self.bus
    }

    /// The global model as held by the first honest client.
    pub fn global_model(&self) -> &[f64] {
        let i = self.malicious.iter().position(|m| !m).unwrap_or(0);
        self.clients[i].global()
    }

    fn unexpected(&self, round: u32, at: Party, expected: &'static str, got: &Payload<E::Scalar>, from: Party) -> ProtocolError {
        ProtocolError::Unexpected {
            round,
            at,
            expected,
            got: got.name(),
            from,
        }
    }

    fn broadcast_from_server(&mut self, round: u32, payload: Payload<E::Scalar>) -> Result<(), ProtocolError> {
        let msg = Message::new(round, Party::Server, payload);
        for i in 0..self.clients.len() {
            self.bus.send(Party::Client(i as u32), &msg)?;
        }
        Ok(())
    }

    fn recv_checked(&mut self, at: Party, round: u32) -> Result<Message<E::Scalar>, ProtocolError> {
        let msg = self.bus.recv(at)?;
        if msg.round != round {
            return Err(ProtocolError::Decode(format!(
                "{at} got a round {} frame during round {round}",
                msg.round
            )));
        }
        Ok(msg)
    }

    fn recv_client(&mut self, i: usize, round: u32) -> Result<Message<E::Scalar>, ProtocolError> {
        self.recv_checked(Party::Client(i as u32), round)
    }

    /// `n` frames at the server, ordered by sender.
    fn gather_at_server(&mut self, round: u32) -> Result<Vec<Message<E::Scalar>>, ProtocolError> {
        let mut msgs = (0..self.clients.len())
            .map(|_| self.recv_checked(Party::Server, round))
            .collect::<Result<Vec<_>, _>>()?;
        msgs.sort_by_key(|m| m.sender);
        Ok(msgs)
    }

    /// Client 0 generates the key pair, sends the public key to everyone and
    /// the secret key to the other clients.
    fn share_paillier_key(&mut self) -> Result<(), ProtocolError> {
        let bits = self.config.paillier_bits;
        let mut rng = rng_for(self.config.seed, "paillier", 0, 0);
        let (pk, sk) = self.clients[0].generate_paillier(bits, &mut rng)?;
        let pk_msg = Message::new(0, Party::Client(0), Payload::PaillierPublicKey(pk.to_bytes()));
        let sk_msg = Message::new(0, Party::Client(0), Payload::PaillierSecretKey(sk.to_bytes()));
        self.bus.send(Party::Server, &pk_msg)?;
        for i in 1..self.clients.len() {
            self.bus.send(Party::Client(i as u32), &pk_msg)?;
            self.bus.send(Party::Client(i as u32), &sk_msg)?;
        }

        let msg = self.recv_checked(Party::Server, 0)?;
        match msg.payload {
            Payload::PaillierPublicKey(b) => self.server.set_paillier_key(PaillierPublicKey::from_bytes(&b)),
            other => return Err(self.unexpected(0, Party::Server, "paillier-public-key", &other, msg.sender)),
        }
        for i in 1..self.clients.len() {
            let at = Party::Client(i as u32);
            let first = self.recv_client(i, 0)?;
            let pk = match first.payload {
                Payload::PaillierPublicKey(b) => PaillierPublicKey::from_bytes(&b),
                other => return Err(self.unexpected(0, at, "paillier-public-key", &other, first.sender)),
            };
            let second = self.recv_client(i, 0)?;
            let sk = match second.payload {
                Payload::PaillierSecretKey(b) => PaillierSecretKey::from_bytes(&pk, &b)
                    .ok_or_else(|| ProtocolError::Decode("paillier secret key".into()))?,
                other => return Err(self.unexpected(0, at, "paillier-secret-key", &other, second.sender)),
            };
            self.clients[i].set_paillier(pk, sk);
        }
        Ok(())
    }

    /// Seed shares, encrypted aggregation, mask expansion and hash agreement.
    /// Malicious clients commit to a random hash.
    fn negotiate_mask(&mut self, round: u32) -> Result<(), ProtocolError> {
        let seed = self.config.seed;
        for i in 0..self.clients.len() {
            let mut rng = rng_for(seed, "seed-share", i as u64, round as u64);
            let share = self.clients[i].seed_share(&mut rng)?;
            let msg = Message::new(round, Party::Client(i as u32), Payload::SeedShare(share.ciphertext.to_bytes()));
            self.bus.send(Party::Server, &msg)?;
        }
        let pk = self
            .server
            .paillier_key()
            .cloned()
            .ok_or(ProtocolError::MissingKey("paillier public key"))?;
        let mut shares = Vec::new();
        for msg in self.gather_at_server(round)? {
            match msg.payload {
                Payload::SeedShare(b) => shares.push(SeedShare {
                    client: msg.sender.to_wire(),
                    ciphertext: pk.ciphertext_from_bytes(&b)?,
                }),
                other => return Err(self.unexpected(round, Party::Server, "seed-share", &other, msg.sender)),
            }
        }
        let total = self.server.aggregate_seeds(&shares)?;
        self.broadcast_from_server(round, Payload::SeedSum(total.to_bytes()))?;

        for i in 0..self.clients.len() {
            let at = Party::Client(i as u32);
            let msg = self.recv_client(i, round)?;
            let ct = match msg.payload {
                Payload::SeedSum(b) => {
                    let pk = self.clients[i].paillier_key().ok_or(ProtocolError::MissingKey("paillier public key"))?;
                    pk.ciphertext_from_bytes(&b)?
                }
                other => return Err(self.unexpected(round, at, "seed-sum", &other, msg.sender)),
            };
            let mut h = self.clients[i].finish_mask(&ct)?;
            if self.malicious[i] {
                h = E::Scalar::random(&mut rng_for(seed, "bad-hash", i as u64, round as u64));
            }
            self.bus.send(Party::Server, &Message::new(round, at, Payload::HashCommit(h)))?;
        }
        let mut commits = Vec::new();
        for msg in self.gather_at_server(round)? {
            match msg.payload {
                Payload::HashCommit(h) => commits.push(h),
                other => return Err(self.unexpected(round, Party::Server, "hash-commit", &other, msg.sender)),
            }
        }
        self.server.agree_hash(&commits)?;
        Ok(())
    }

    fn map_clients<T, G>(&mut self, f: G) -> Result<Vec<T>, ProtocolError>
    where
        T: Send,
        G: Fn(&mut ClientState<E>) -> Result<T, ProtocolError> + Sync + Send,
    {
        if self.config.parallel {
            self.clients.par_iter_mut().map(f).collect()
        } else {
            self.clients.iter_mut().map(f).collect()
        }
    }

    fn intents(&self, round: u32) -> Result<Vec<Intent>, ProtocolError> {
        let trained = self
            .clients
            .iter()
            .map(|c| c.trained().map(<[f64]>::to_vec).ok_or(ProtocolError::MissingKey("trained model")))
            .collect::<Result<Vec<_>, _>>()?;
        let i = self.malicious.iter().position(|m| *m).unwrap_or(0);
        plan_intents(
            &self.config.attack,
            &self.malicious,
            trained,
            self.clients[i].global(),
            self.config.seed,
            round,
        )
    }

    /// One training round.
    pub fn run_round(&mut self) -> Result<RoundOutcome, ProtocolError> {
        self.round += 1;
        let t = self.round;
        let seed = self.config.seed;
        let before = self.bus.bytes();
        if self.config.renegotiate_mask {
            self.negotiate_mask(t)?;
        }

        let clock = Instant::now();
        let params = self.server.start_round(derive_seed(seed, "server-train", t as u64, 0))?;
        let server_train = clock.elapsed();
        self.broadcast_from_server(t, Payload::ProofParams(params))?;
        for i in 0..self.clients.len() {
            let msg = self.recv_client(i, t)?;
            match msg.payload {
                Payload::ProofParams(p) => self.clients[i].set_params(p),
                other => return Err(self.unexpected(t, Party::Client(i as u32), "proof-params", &other, msg.sender)),
            }
        }

        let client_train = self.map_clients(|c| {
            let clock = Instant::now();
            c.train(derive_seed(seed, "client-train", c.id() as u64, t as u64))?;
            Ok(clock.elapsed())
        })?;

        let intents = self.intents(t)?;
        let proved = self.map_clients(|c| {
            let mut rng = rng_for(seed, "prove", c.id() as u64, t as u64);
            let clock = Instant::now();
            let sub = c.submit(intents[c.id() as usize].clone(), &mut rng)?;
            Ok((sub, clock.elapsed()))
        })?;
        let mut client_prove = Vec::with_capacity(proved.len());
        for (i, (sub, elapsed)) in proved.into_iter().enumerate() {
            client_prove.push(elapsed);
            let payload = Payload::Submission {
                w_bar: sub.w_bar,
                proof: sub.proof.to_bytes(),
            };
            self.bus.send(Party::Server, &Message::new(t, Party::Client(i as u32), payload))?;
        }

        let clock = Instant::now();
        let mut accepted = Vec::new();
        let mut accepted_models = Vec::new();
        let mut rejected = Vec::new();
        let mut submissions = Vec::new();
        for msg in self.gather_at_server(t)? {
            match msg.payload {
                Payload::Submission { w_bar, proof } => submissions.push((msg.sender.to_wire(), w_bar, proof)),
                other => return Err(self.unexpected(t, Party::Server, "submission", &other, msg.sender)),
            }
        }
        let server = &self.server;
        let check = |(_, w_bar, proof): &(u32, Vec<E::Scalar>, Vec<u8>)| server.verify_submission(w_bar, proof);
        let verdicts: Vec<_> = if self.config.parallel {
            submissions.par_iter().map(check).collect()
        } else {
            submissions.iter().map(check).collect()
        };
        for ((client, w_bar, _), verdict) in submissions.into_iter().zip(verdicts) {
            match verdict {
                Ok(()) => {
                    accepted.push(client);
                    accepted_models.push(w_bar);
                }
                Err(reason) => rejected.push(Rejection { client, reason }),
            }
        }
        let global = self.server.aggregate(&accepted_models)?.cloned();
        let server_verify_aggregate = clock.elapsed();

        let global_updated = global.is_some();
        let payload = match &global {
            Some(g) => Payload::GlobalModel {
                sum: g.sum.clone(),
                count: g.count as u32,
            },
            None => {
                log::warn!("round {t}: no submission accepted, global model unchanged");
                Payload::GlobalModel { sum: Vec::new(), count: 0 }
            }
        };
        self.broadcast_from_server(t, payload)?;
        for i in 0..self.clients.len() {
            let msg = self.recv_client(i, t)?;
            match msg.payload {
                Payload::GlobalModel { count: 0, .. } => {}
                Payload::GlobalModel { sum, count } => self.clients[i].apply_global(&EncodedSum {
                    sum,
                    count: count as usize,
                })?,
                other => return Err(self.unexpected(t, Party::Client(i as u32), "global-model", &other, msg.sender)),
            }
        }

        Ok(RoundOutcome {
            report: RoundReport {
                round: t,
                accepted,
                rejected,
                global_updated,
                bytes: self.bus.bytes().since(&before),
                transcript: hex::encode(self.bus.transcript_digest()),
            },
            timings: RoundTimings {
                server_train,
                client_train,
                client_prove,
                server_verify_aggregate,
            },
        })
    }
}

/// What every client submits in `round`, given the trained models.
///
/// Malicious clients collude: min-max and min-sum attackers share one
/// poisoned model computed from their own trained models plus the current
/// global model.
pub fn plan_intents(
    attack: &AttackSpec,
    malicious: &[bool],
    trained: Vec<ModelVector>,
    global: &[f64],
    seed: u64,
    round: u32,
) -> Result<Vec<Intent>, ProtocolError> {
    let colluders: Vec<usize> = (0..trained.len()).filter(|i| malicious[*i]).collect();
    let knowledge = || {
        let mut known: Vec<ModelVector> = colluders.iter().map(|i| trained[*i].clone()).collect();
        known.push(global.to_vec());
        known
    };
    let shared = match attack.kind {
        AttackKind::MinMax { perturbation, search } if !colluders.is_empty() => {
            Some(min_max_attack(&knowledge(), perturbation, search)?)
        }
        AttackKind::MinSum { perturbation, search } if !colluders.is_empty() => {
            Some(min_sum_attack(&knowledge(), perturbation, search)?)
        }
        _ => None,
    };
    Ok(trained
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            if !malicious[i] {
                return Intent::Model(w);
            }
            match attack.kind {
                AttackKind::None => Intent::Model(w),
                AttackKind::AddNoise { sigma } => {
                    Intent::Model(add_noise(&w, sigma, derive_seed(seed, "noise", i as u64, round as u64)))
                }
                AttackKind::SignFlip { scale } => Intent::Model(scaled_sign_flip(&w, scale)),
                AttackKind::MinMax { .. } | AttackKind::MinSum { .. } => {
                    Intent::Model(shared.clone().expect("computed for colluders"))
                }
                AttackKind::Malicious { behavior } => Intent::Deviate(behavior),
            }
        })
        .collect())
}

/// Proof size in bytes for engine `E`.
pub fn proof_size<E: PairingEngine>() -> usize {
    let g1 = E::G1::generator();
    let g2 = E::G2::generator();
    Proof::<E> { a: g1, b: g2, c: g1 }.to_bytes().len()
}
