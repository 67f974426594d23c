use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use bpfl_core::fl::AggregationRule;
use bpfl_core::protocol::{InProcTransport, Party, ProtocolError, Transport};
use bpfl_experiment::config::{resolve, ConfigError, ExperimentConfig};
use bpfl_experiment::runner::{run_experiment, run_experiment_with, RoundRecord, RunSummary};

fn preset(name: &str, extra: &[(&str, &str)]) -> ExperimentConfig {
    let mut env = vec![("BPFL_PAILLIER_BITS".to_string(), "512".to_string())];
    env.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    resolve(Some(name), None, env).unwrap()
}

#[derive(Default)]
struct Counting {
    inner: InProcTransport,
    sent: Arc<AtomicU64>,
    received: Arc<AtomicU64>,
}

impl Transport for Counting {
    fn send(&mut self, from: Party, to: Party, frame: Vec<u8>) -> Result<(), ProtocolError> {
        self.sent.fetch_add(frame.len() as u64, Ordering::Relaxed);
        self.inner.send(from, to, frame)
    }

    fn recv(&mut self, at: Party) -> Result<Vec<u8>, ProtocolError> {
        let f = self.inner.recv(at)?;
        self.received.fetch_add(f.len() as u64, Ordering::Relaxed);
        Ok(f)
    }
}

fn read_metrics(dir: &std::path::Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(dir.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn honest_smoke_accepts_everyone_every_round() {
    let dir = tempfile::tempdir().unwrap();
    let c = preset("honest-smoke", &[]);
    let s = run_experiment(&c, dir.path()).unwrap();
    assert_eq!(s.dimension, 64);
    assert_eq!(s.rounds.len(), 10);
    for r in &s.rounds {
        assert_eq!(r.accepted, vec![0, 1, 2, 3, 4], "round {}", r.round);
        assert!(r.rejected.is_empty());
    }
    assert!(s.final_accuracy > 0.95, "{}", s.final_accuracy);

    let lines = read_metrics(dir.path());
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[0]["type"], "provenance");
    assert_eq!(lines[0]["config"]["name"], "honest-smoke");
    assert!(lines[0]["git"].is_string());
    for (line, r) in lines[1..].iter().zip(&s.rounds) {
        assert_eq!(line["type"], "round");
        let parsed: RoundRecord = serde_json::from_value(line.clone()).unwrap();
        assert_eq!(parsed.accepted, r.accepted);
        assert_eq!(parsed.transcript, r.transcript);
    }

    let mut csv = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    assert!(csv.headers().unwrap().iter().any(|h| h == "client_prove_ms_median"));
    assert_eq!(csv.records().count(), 10);

    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("resolved_config.json")).unwrap()).unwrap();
    let back: ExperimentConfig = serde_json::from_value(resolved).unwrap();
    assert_eq!(back, c);
}

#[test]
fn signflip_attackers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&preset("signflip-20pct", &[]), dir.path()).unwrap();
    assert_eq!(s.malicious, vec![8, 9]);
    for r in &s.rounds {
        assert_eq!(r.accepted, (0..8).collect::<Vec<_>>(), "round {}", r.round);
        let rejected: Vec<u32> = r.rejected.iter().map(|x| x.client).collect();
        assert_eq!(rejected, vec![8, 9]);
        assert_eq!((r.malicious_accepted, r.honest_rejected), (0, 0));
        let impact = r.attack_impact.unwrap();
        assert!(impact.abs() < 0.02, "round {}: impact {impact}", r.round);
    }
}

#[test]
fn same_seed_same_run() {
    let c = preset("honest-smoke", &[("BPFL_ROUNDS", "3"), ("BPFL_SEED", "4")]);
    let a = run_experiment(&c, tempfile::tempdir().unwrap().path()).unwrap();
    let b = run_experiment(&c, tempfile::tempdir().unwrap().path()).unwrap();
    let key = |s: &RunSummary| s.rounds.iter().map(|r| (r.transcript.clone(), r.test_accuracy)).collect::<Vec<_>>();
    assert_eq!(key(&a), key(&b));
    assert_eq!(a.final_model, b.final_model);
}

#[test]
fn byte_counts_match_the_wire() {
    let c = preset("honest-smoke", &[("BPFL_ROUNDS", "2")]);
    let t = Counting::default();
    let (sent, received) = (Arc::clone(&t.sent), Arc::clone(&t.received));
    let s = run_experiment_with(&c, tempfile::tempdir().unwrap().path(), Some(Box::new(t))).unwrap();
    let reported = s.setup_bytes.unwrap().total() + s.rounds.iter().map(|r| r.bytes.unwrap().total()).sum::<u64>();
    assert_eq!(reported, sent.load(Ordering::Relaxed));
    assert_eq!(reported, received.load(Ordering::Relaxed));
}

#[test]
fn tcp_matches_inproc() {
    let c = preset("honest-smoke", &[("BPFL_ROUNDS", "2")]);
    let a = run_experiment(&c, tempfile::tempdir().unwrap().path()).unwrap();
    let tcp = preset("honest-smoke", &[("BPFL_ROUNDS", "2"), ("BPFL_TRANSPORT", "tcp")]);
    let b = run_experiment(&tcp, tempfile::tempdir().unwrap().path()).unwrap();
    for (x, y) in a.rounds.iter().zip(&b.rounds) {
        assert_eq!((&x.transcript, x.bytes), (&y.transcript, y.bytes));
    }
}

#[test]
fn plaintext_rules_run_without_the_protocol() {
    for rule in [
        r#"{"rule": "fed_avg"}"#,
        r#"{"rule": "median"}"#,
        r#"{"rule": "krum", "f": 2}"#,
        r#"{"rule": "bulyan", "f": 1}"#,
        r#"{"rule": "fl_trust"}"#,
    ] {
        let c = preset("signflip-20pct", &[("BPFL_AGGREGATION", rule), ("BPFL_ROUNDS", "3")]);
        assert_ne!(c.aggregation, AggregationRule::MaskedSum);
        let s = run_experiment(&c, tempfile::tempdir().unwrap().path()).unwrap();
        assert!(s.setup_bytes.is_none());
        assert!(s.rounds.iter().all(|r| r.bytes.is_none() && r.accepted.len() == 10));
    }
}

#[test]
fn undefended_fedavg_collapses_under_boosted_sign_flip() {
    let c = preset("robustness", &[("BPFL_AGGREGATION", r#"{"rule": "fed_avg"}"#), ("BPFL_ROUNDS", "5")]);
    let s = run_experiment(&c, tempfile::tempdir().unwrap().path()).unwrap();
    assert!(s.rounds.last().unwrap().attack_impact.unwrap() >= 0.1);
}

#[test]
fn invalid_configs_name_the_field() {
    let err = resolve(Some("honest-smoke"), None, vec![("BPFL_ATTACK__FRACTION".into(), "0.6".into())]).unwrap_err();
    match &err {
        ConfigError::Invalid { path, message } => {
            assert_eq!(path, "attack.fraction");
            assert!(message.contains("minority"), "{message}");
        }
        other => panic!("{other}"),
    }
    let err = resolve(None, None, vec![("BPFL_TAU_C".into(), "1.5".into())]).unwrap_err();
    assert!(err.to_string().contains("tau_c"));
    let err = resolve(None, None, vec![("BPFL_DATASET__SOURCE".into(), "\"csv\"".into())]).unwrap_err();
    assert!(err.to_string().contains("dataset"), "{err}");
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_bpfl");
    let out = std::process::Command::new(bin)
        .args(["run", "--preset", "honest-smoke", "--out"])
        .arg(tempfile::tempdir().unwrap().path())
        .env("BPFL_ATTACK__FRACTION", "0.6")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("attack.fraction"));

    let out = std::process::Command::new(bin)
        .args(["run", "--preset", "mnist-smoke", "--out"])
        .arg(tempfile::tempdir().unwrap().path())
        .env("BPFL_DATASET__DIR", "/nonexistent/mnist")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = std::process::Command::new(bin).arg("presets").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("robustness"));

    let dir = tempfile::tempdir().unwrap();
    let out = std::process::Command::new(bin)
        .args(["run", "--preset", "honest-smoke", "--transport", "tcp", "--seed", "3", "--out"])
        .arg(dir.path())
        .env("BPFL_ROUNDS", "1")
        .env("BPFL_PAILLIER_BITS", "512")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = read_metrics(dir.path());
    assert_eq!(lines[0]["config"]["transport"], "tcp");
    assert_eq!(lines[0]["config"]["seed"], 3);
}
