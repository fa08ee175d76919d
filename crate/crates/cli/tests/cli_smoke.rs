//! End-to-end smoke tests of the command layer: tiny configurations of
//! every experiment family, plus the bit-identical-output determinism
//! contract.

use std::collections::BTreeMap;
use std::path::Path;

use mmlab_cli::commands;
use mmlab_cli::config::{Config, Scale};

/// A very small config so every family runs in seconds.
fn smoke_config(out: &Path) -> Config {
    let mut cfg = Config::defaults(Scale::Desk);
    cfg.out = out.display().to_string();
    cfg.seed = 7;
    cfg.market.steps_per_session = 150;
    cfg.run.sessions = 2;
    cfg.run.test_sessions = 2;
    cfg.run.seeds = vec![7];
    cfg.run.checkpoint_sessions = vec![0];
    cfg.run.log_mm_steps = true;
    cfg.run.log_market_events = true;
    cfg.run.aiif_values = vec![0.0, 1.0];
    cfg.run.weights = vec![0.0, 1.0];
    cfg.rl.minibatch = 64;
    cfg.rl.grad_steps_per_event = 2;
    cfg.context.sequence = vec![0, 1];
    cfg.context.sessions_per_context = 2;
    cfg.context.library_counts = vec![0, 1];
    cfg.context.library_sessions = 2;
    cfg.powdts.rounds_recal = 20;
    cfg.powdts.exp_ts = 60;
    cfg.powdts.rounds_exp = 1;
    cfg
}

/// Recursively collects relative path -> file bytes.
fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    walk(root, root, &mut out);
    out
}

#[test]
fn train_then_test_then_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    commands::cmd_train(&cfg).unwrap();

    let seed_dir = dir.path().join("seed_7");
    assert!(seed_dir.join("sessions.csv").exists());
    assert!(seed_dir.join("mm_steps.csv").exists());
    assert!(seed_dir.join("events.csv").exists());
    assert!(seed_dir.join("summary.json").exists());
    let final_ck = seed_dir.join("checkpoints/final.mmck");
    assert!(final_ck.exists());
    assert!(seed_dir.join("checkpoints/ckpt_s0.mmck").exists());

    // Greedy test from the checkpoint.
    let test_out = dir.path().join("test_run");
    let mut test_cfg = cfg.clone();
    test_cfg.out = test_out.display().to_string();
    commands::cmd_test(&test_cfg, &final_ck).unwrap();
    assert!(test_out.join("seed_7/sessions.csv").exists());

    // Report regeneration is idempotent.
    commands::cmd_report(&seed_dir).unwrap();
    let first = std::fs::read(seed_dir.join("rolling.csv")).unwrap();
    commands::cmd_report(&seed_dir).unwrap();
    let second = std::fs::read(seed_dir.join("rolling.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn rerun_with_same_config_is_bit_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    commands::cmd_train(&smoke_config(dir_a.path())).unwrap();
    commands::cmd_train(&smoke_config(dir_b.path())).unwrap();
    let a = tree_bytes(dir_a.path());
    let b = tree_bytes(dir_b.path());
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "file sets differ"
    );
    for (path, bytes) in &a {
        if path == "config.resolved.toml" {
            // The resolved config embeds the output directory itself;
            // compare it with that line masked.
            let strip = |raw: &[u8]| -> Vec<String> {
                String::from_utf8_lossy(raw)
                    .lines()
                    .filter(|l| !l.starts_with("out = "))
                    .map(str::to_string)
                    .collect()
            };
            assert_eq!(strip(bytes), strip(&b[path]), "{path} differs between reruns");
        } else {
            assert_eq!(bytes, &b[path], "{path} differs between reruns");
        }
    }
}

#[test]
fn sweeps_benchmark_and_metrics_emit_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    commands::cmd_sweep_aiif(&cfg).unwrap();
    assert!(dir.path().join("aiif_sweep.json").exists());
    assert!(dir.path().join("aiif_sweep.csv").exists());

    commands::cmd_sweep_morl(&cfg).unwrap();
    let points = dir.path().join("points.json");
    assert!(points.exists());

    commands::cmd_metrics(&cfg, &points).unwrap();
    assert!(dir.path().join("metrics.json").exists());
    assert!(dir.path().join("metrics.csv").exists());

    commands::cmd_benchmark_rewards(&cfg).unwrap();
    assert!(dir.path().join("benchmark.json").exists());
}

#[test]
fn context_sequence_command_runs_powdts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    commands::cmd_context_seq(&cfg, Some("powdts")).unwrap();
    assert!(dir.path().join("library.mmlb").exists());
    let seed_dir = dir.path().join("seed_7");
    assert!(seed_dir.join("context_summary.json").exists());
    assert!(seed_dir.join("recals.json").exists());
    assert!(dir.path().join("context_results.json").exists());

    // The cached library is reused for a second method without retraining.
    commands::cmd_context_seq(&cfg, Some("single-policy:0")).unwrap();
    commands::cmd_context_seq(&cfg, Some("cl-ewc:1")).unwrap();
    commands::cmd_context_seq(&cfg, Some("optimal-mp")).unwrap();
}

#[test]
fn report_rejects_partial_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    commands::cmd_train(&cfg).unwrap();
    let seed_dir = dir.path().join("seed_7");
    // Drop the middle session's rows for one label.
    let text = std::fs::read_to_string(seed_dir.join("sessions.csv")).unwrap();
    let filtered: Vec<&str> = text
        .lines()
        .filter(|l| !(l.starts_with("1,") && l.contains("random")))
        .collect();
    std::fs::write(seed_dir.join("sessions.csv"), filtered.join("\n")).unwrap();
    let err = commands::cmd_report(&seed_dir).unwrap_err().to_string();
    assert!(err.contains("missing sessions"), "error was: {err}");
    assert!(err.contains("random:1"), "error was: {err}");
}
