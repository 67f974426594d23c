//! Runs one configured experiment and writes its artifacts:
//! `metrics.jsonl` (a provenance line, then one record per round),
//! `summary.csv` and `resolved_config.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use bpfl_core::adversary::AttackKind;
use bpfl_core::field::Fr;
use bpfl_core::fl::{aggregate, clip, evaluate, train_local, AggregationRule, FlError, ModelSpec, ModelVector, TrainingTask};
use bpfl_core::groth16::MockEngine;
use bpfl_core::protocol::{
    derive_seed, plan_intents, run_setup, ByteCounts, InProcTransport, Intent, Party, ProtocolConfig, ProtocolError,
    Rejection, TcpTransport, Transport,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, DatasetSource, ExperimentConfig, TransportKind};
use crate::data::{generate_synthetic, load_mnist, DataError, Partitions};

pub type Engine = MockEngine<Fr>;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing summary.csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("serializing metrics: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub test_accuracy: f64,
    pub accepted: Vec<u32>,
    pub rejected: Vec<Rejection>,
    /// Malicious clients whose submission was aggregated.
    pub malicious_accepted: usize,
    /// Honest clients whose submission was not aggregated.
    pub honest_rejected: usize,
    pub global_updated: bool,
    /// Protocol traffic this round; absent for plaintext rules.
    pub bytes: Option<ByteCounts>,
    pub transcript: Option<String>,
    pub server_train_ms: f64,
    pub client_train_ms_median: f64,
    pub client_prove_ms_median: f64,
    pub server_verify_ms: f64,
    pub baseline_accuracy: Option<f64>,
    /// `baseline_accuracy - test_accuracy`.
    pub attack_impact: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub dimension: usize,
    pub malicious: Vec<u32>,
    pub setup_bytes: Option<ByteCounts>,
    pub setup_ms: f64,
    pub rounds: Vec<RoundRecord>,
    pub final_accuracy: f64,
    pub final_model: ModelVector,
}

#[derive(Serialize)]
struct CsvRow {
    round: u32,
    test_accuracy: f64,
    accepted: usize,
    rejected: usize,
    malicious_accepted: usize,
    honest_rejected: usize,
    bytes_total: u64,
    server_train_ms: f64,
    client_train_ms_median: f64,
    client_prove_ms_median: f64,
    server_verify_ms: f64,
    baseline_accuracy: Option<f64>,
    attack_impact: Option<f64>,
}

pub fn median_ms(ds: &[Duration]) -> f64 {
    let mut v: Vec<f64> = ds.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn load_partitions(config: &ExperimentConfig) -> Result<Partitions, DataError> {
    match &config.dataset {
        DatasetSource::Synthetic(s) => generate_synthetic(s, config.num_clients, config.server_samples, config.seed),
        DatasetSource::MnistIdx(m) => load_mnist(m, config.num_clients, config.server_samples, config.seed),
    }
}

pub fn training_task(config: &ExperimentConfig, data: &Partitions) -> TrainingTask {
    let spec = ModelSpec {
        family: config.model,
        num_features: data.server.num_features(),
        num_classes: data.server.num_classes(),
    };
    let mut task = TrainingTask::new(spec);
    task.epochs = config.training.epochs;
    task.learning_rate = config.training.learning_rate;
    task.batch_size = config.training.batch_size;
    task.weight_decay = config.training.weight_decay;
    task.weight_bound = config.weight_bound;
    task
}

pub fn protocol_config(config: &ExperimentConfig, task: TrainingTask) -> ProtocolConfig {
    let mut p = ProtocolConfig::new(config.num_clients, task);
    p.scale_bits = config.scale_bits;
    p.hash_rounds = config.field.hash_rounds;
    p.tau_c = config.tau_c;
    p.tau_e = config.tau_e;
    p.mode = config.comparison;
    p.paillier_bits = config.paillier_bits;
    p.attack = config.attack;
    p.renegotiate_mask = config.renegotiate_mask;
    p.parallel = config.parallel;
    p.seed = config.seed;
    p
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Per-round results before evaluation.
struct RawRound {
    round: u32,
    model: ModelVector,
    accepted: Vec<u32>,
    rejected: Vec<Rejection>,
    global_updated: bool,
    bytes: Option<ByteCounts>,
    transcript: Option<String>,
    server_train: Duration,
    client_train: Vec<Duration>,
    client_prove: Vec<Duration>,
    server_verify: Duration,
}

/// FedAvg-style training loop in the clear with the configured rule, using
/// the same seeds as the protocol.
struct Plaintext<'a> {
    config: &'a ExperimentConfig,
    rule: AggregationRule,
    attack: bpfl_core::adversary::AttackSpec,
    task: TrainingTask,
    data: &'a Partitions,
    malicious: Vec<bool>,
    global: ModelVector,
    reference: ModelVector,
    round: u32,
}

impl<'a> Plaintext<'a> {
    fn new(
        config: &'a ExperimentConfig,
        rule: AggregationRule,
        attack: bpfl_core::adversary::AttackSpec,
        task: TrainingTask,
        data: &'a Partitions,
        malicious: Vec<bool>,
    ) -> Self {
        let global = task.model.initial(derive_seed(config.seed, "initial", 0, 0));
        Plaintext {
            config,
            rule,
            attack,
            task,
            data,
            malicious,
            reference: global.clone(),
            global,
            round: 0,
        }
    }

    fn step(&mut self) -> Result<RawRound, RunError> {
        self.round += 1;
        let t = self.round;
        let seed = self.config.seed;
        let clock = std::time::Instant::now();
        if self.rule == AggregationRule::FlTrust {
            let s = derive_seed(seed, "server-train", t as u64, 0);
            self.reference = train_local(&self.task, &self.data.server, &self.reference, s)?;
        }
        let server_train = clock.elapsed();
        let mut client_train = Vec::new();
        let mut trained = Vec::new();
        for (i, shard) in self.data.clients.iter().enumerate() {
            let clock = std::time::Instant::now();
            let s = derive_seed(seed, "client-train", i as u64, t as u64);
            trained.push(train_local(&self.task, shard, &self.global, s)?);
            client_train.push(clock.elapsed());
        }
        let intents = plan_intents(&self.attack, &self.malicious, trained, &self.global, seed, t)?;
        let models: Vec<ModelVector> = intents
            .into_iter()
            .map(|i| match i {
                Intent::Model(mut w) => {
                    clip(&mut w, self.task.weight_bound);
                    w
                }
                Intent::Deviate(_) => unreachable!("rejected by config validation"),
            })
            .collect();
        let clock = std::time::Instant::now();
        self.global = aggregate(self.rule, &models, Some(&self.reference))?;
        let server_verify = clock.elapsed();
        Ok(RawRound {
            round: t,
            model: self.global.clone(),
            accepted: (0..models.len() as u32).collect(),
            rejected: Vec::new(),
            global_updated: true,
            bytes: None,
            transcript: None,
            server_train,
            client_train,
            client_prove: Vec::new(),
            server_verify,
        })
    }
}

fn transport_for(kind: TransportKind, n: usize) -> Result<Box<dyn Transport>, ProtocolError> {
    Ok(match kind {
        TransportKind::Inproc => Box::new(InProcTransport::new()),
        TransportKind::Tcp => {
            let mut parties = vec![Party::Server];
            parties.extend((0..n as u32).map(Party::Client));
            Box::new(TcpTransport::start(&parties)?)
        }
    })
}

pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<RunSummary, RunError> {
    let transport = if config.aggregation == AggregationRule::MaskedSum {
        Some(transport_for(config.transport, config.num_clients)?)
    } else {
        None
    };
    run_experiment_with(config, out, transport)
}

/// Like [`run_experiment`], with the protocol's transport supplied by the
/// caller. `transport` is ignored for plaintext rules.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    out: &Path,
    transport: Option<Box<dyn Transport>>,
) -> Result<RunSummary, RunError> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let data = load_partitions(config)?;
    let task = training_task(config, &data);
    let spec = task.model;
    let n = config.num_clients;
    let m = config.attack.malicious_count(n);
    let malicious: Vec<bool> = (0..n).map(|i| i >= n - m).collect();
    let malicious_ids: Vec<u32> = (0..n as u32).filter(|i| malicious[*i as usize]).collect();

    let resolved = out.join("resolved_config.json");
    std::fs::write(&resolved, serde_json::to_string_pretty(config)?).map_err(io_err(&resolved))?;
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(io_err(&metrics_path))?);
    let provenance = json!({
        "type": "provenance",
        "git": git_describe(),
        "config": config,
        "dimension": spec.dimension(),
        "malicious": malicious_ids,
        "seeds": {
            "master": config.seed,
            "initial": derive_seed(config.seed, "initial", 0, 0),
            "setup": derive_seed(config.seed, "setup", 0, 0),
            "paillier": derive_seed(config.seed, "paillier", 0, 0),
        },
    });
    writeln!(metrics, "{provenance}").map_err(io_err(&metrics_path))?;
    metrics.flush().map_err(io_err(&metrics_path))?;

    let mut baseline = config.baseline.then(|| {
        let honest = vec![false; n];
        Plaintext::new(
            config,
            AggregationRule::FedAvg,
            bpfl_core::adversary::AttackSpec::none(),
            task,
            &data,
            honest,
        )
    });

    let mut records = Vec::with_capacity(config.rounds);
    let mut final_model = spec.initial(derive_seed(config.seed, "initial", 0, 0));
    let mut emit = |raw: RawRound, baseline: &mut Option<Plaintext>| -> Result<RoundRecord, RunError> {
        let acc = evaluate(&spec, &raw.model, &data.test)?;
        let baseline_accuracy = match baseline {
            Some(b) => {
                let r = b.step()?;
                Some(evaluate(&spec, &r.model, &data.test)?)
            }
            None => None,
        };
        let malicious_accepted = raw.accepted.iter().filter(|c| malicious[**c as usize]).count();
        let honest_rejected = raw.rejected.iter().filter(|r| !malicious[r.client as usize]).count();
        let record = RoundRecord {
            round: raw.round,
            test_accuracy: acc,
            accepted: raw.accepted,
            rejected: raw.rejected,
            malicious_accepted,
            honest_rejected,
            global_updated: raw.global_updated,
            bytes: raw.bytes,
            transcript: raw.transcript,
            server_train_ms: ms(raw.server_train),
            client_train_ms_median: median_ms(&raw.client_train),
            client_prove_ms_median: median_ms(&raw.client_prove),
            server_verify_ms: ms(raw.server_verify),
            baseline_accuracy,
            attack_impact: baseline_accuracy.map(|b| b - acc),
        };
        let mut line = serde_json::to_value(&record)?;
        line.as_object_mut().expect("record is an object").insert("type".into(), "round".into());
        writeln!(metrics, "{line}").map_err(io_err(&metrics_path))?;
        metrics.flush().map_err(io_err(&metrics_path))?;
        log::info!(
            "{} round {}: accuracy {:.4}, accepted {}/{}",
            config.name,
            record.round,
            acc,
            record.accepted.len(),
            n
        );
        final_model = raw.model;
        Ok(record)
    };

    let (setup_bytes, setup_ms) = if config.aggregation == AggregationRule::MaskedSum {
        let transport = match transport {
            Some(t) => t,
            None => transport_for(config.transport, n)?,
        };
        let pc = protocol_config(config, task);
        let mut session = run_setup::<Engine>(pc, data.clients.clone(), data.server.clone(), transport)?;
        let setup = (Some(session.setup_bytes()), ms(session.setup_time()));
        for _ in 0..config.rounds {
            let outcome = session.run_round()?;
            let r = outcome.report;
            let raw = RawRound {
                round: r.round,
                model: session.global_model().to_vec(),
                accepted: r.accepted,
                rejected: r.rejected,
                global_updated: r.global_updated,
                bytes: Some(r.bytes),
                transcript: Some(r.transcript),
                server_train: outcome.timings.server_train,
                client_train: outcome.timings.client_train,
                client_prove: outcome.timings.client_prove,
                server_verify: outcome.timings.server_verify_aggregate,
            };
            records.push(emit(raw, &mut baseline)?);
        }
        setup
    } else {
        debug_assert!(!matches!(config.attack.kind, AttackKind::Malicious { .. }));
        let mut sim = Plaintext::new(config, config.aggregation, config.attack, task, &data, malicious.clone());
        for _ in 0..config.rounds {
            let raw = sim.step()?;
            records.push(emit(raw, &mut baseline)?);
        }
        (None, 0.0)
    };
    drop(emit);

    let csv_path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in &records {
        w.serialize(CsvRow {
            round: r.round,
            test_accuracy: r.test_accuracy,
            accepted: r.accepted.len(),
            rejected: r.rejected.len(),
            malicious_accepted: r.malicious_accepted,
            honest_rejected: r.honest_rejected,
            bytes_total: r.bytes.map_or(0, |b| b.total()),
            server_train_ms: r.server_train_ms,
            client_train_ms_median: r.client_train_ms_median,
            client_prove_ms_median: r.client_prove_ms_median,
            server_verify_ms: r.server_verify_ms,
            baseline_accuracy: r.baseline_accuracy,
            attack_impact: r.attack_impact,
        })?;
    }
    w.flush().map_err(io_err(&csv_path))?;

    Ok(RunSummary {
        name: config.name.clone(),
        dimension: spec.dimension(),
        malicious: malicious_ids,
        setup_bytes,
        setup_ms,
        final_accuracy: records.last().map_or(0.0, |r| r.test_accuracy),
        rounds: records,
        final_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        let d = |x: u64| Duration::from_millis(x);
        assert_eq!(median_ms(&[]), 0.0);
        assert_eq!(median_ms(&[d(5), d(1), d(3)]), 3.0);
        assert_eq!(median_ms(&[d(4), d(1), d(3), d(10)]), 3.5);
    }
}
