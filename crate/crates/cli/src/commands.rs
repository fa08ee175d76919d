//! Subcommand implementations. Every command writes a deterministic file
//! tree under the configured output directory.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

use mmlab_core::experiment::{
    run_aiif_sweep, run_context_sequence, run_reward_benchmark, run_test, run_training,
    run_weight_sweep, ContextMethod, ContextSeqConfig, OpponentLineup, RunLog, RunOpts,
    TestConfig, TrainConfig,
};
use mmlab_core::powdts::PowDtsCfg;

use crate::config::Config;
use crate::io;
use crate::report;

fn run_opts(cfg: &Config) -> RunOpts {
    RunOpts {
        log_mm_steps: cfg.run.log_mm_steps,
        log_market_events: cfg.run.log_market_events,
    }
}

fn train_config(cfg: &Config, seed: u64) -> Result<TrainConfig> {
    Ok(TrainConfig {
        market: cfg.market.to_core(),
        sessions: cfg.run.sessions,
        master_seed: seed,
        learner: cfg.learner_spec()?,
        opponents: OpponentLineup::default(),
        checkpoint_sessions: cfg.run.checkpoint_sessions.clone(),
        opts: run_opts(cfg),
    })
}

fn write_run_log(dir: &Path, log: &RunLog, cfg: &Config) -> Result<()> {
    io::ensure_dir(dir)?;
    io::write_sessions_csv(&dir.join("sessions.csv"), &log.session_summaries)?;
    if cfg.run.log_mm_steps {
        io::write_mm_steps_csv(&dir.join("mm_steps.csv"), &log.mm_steps)?;
    }
    if cfg.run.log_market_events {
        io::write_events_csv(&dir.join("events.csv"), &log.market_events)?;
    }
    io::write_json(
        &dir.join("summary.json"),
        &report::aggregate_sessions(&log.session_summaries),
    )?;
    Ok(())
}

fn write_resolved_config(out: &Path, cfg: &Config) -> Result<()> {
    io::ensure_dir(out)?;
    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())
        .context("writing resolved config")
}

/// `train`: one training run per configured seed, with checkpoints.
pub fn cmd_train(cfg: &Config) -> Result<()> {
    let out = PathBuf::from(&cfg.out);
    write_resolved_config(&out, cfg)?;
    for &seed in &cfg.run.seeds {
        let tc = train_config(cfg, seed)?;
        log::info!("training seed {seed} for {} sessions", tc.sessions);
        let result = run_training(&tc);
        let dir = out.join(format!("seed_{seed}"));
        write_run_log(&dir, &result.log, cfg)?;
        let ck_dir = dir.join("checkpoints");
        io::ensure_dir(&ck_dir)?;
        for (session, ck) in &result.checkpoints {
            io::save_checkpoint(&ck_dir.join(format!("ckpt_s{session}.mmck")), ck)?;
        }
        io::save_checkpoint(&ck_dir.join("final.mmck"), &result.final_checkpoint)?;
    }
    Ok(())
}

/// `test`: greedy evaluation of a saved checkpoint per seed.
pub fn cmd_test(cfg: &Config, checkpoint: &Path) -> Result<()> {
    let ck = io::load_checkpoint(checkpoint)?;
    let out = PathBuf::from(&cfg.out);
    write_resolved_config(&out, cfg)?;
    for &seed in &cfg.run.seeds {
        let tc = TestConfig {
            market: cfg.market.to_core(),
            sessions: cfg.run.test_sessions,
            master_seed: seed,
            opponents: OpponentLineup::default(),
            opts: run_opts(cfg),
        };
        log::info!("testing seed {seed} for {} sessions", tc.sessions);
        let log = run_test(&tc, &ck);
        write_run_log(&out.join(format!("seed_{seed}")), &log, cfg)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AiifSweepOutput {
    seed: u64,
    arms: Vec<mmlab_core::experiment::AiifArm>,
}

/// `sweep-aiif`: trains and tests one agent per risk-aversion factor.
pub fn cmd_sweep_aiif(cfg: &Config) -> Result<()> {
    let out = PathBuf::from(&cfg.out);
    write_resolved_config(&out, cfg)?;
    let mut all = Vec::new();
    for &seed in &cfg.run.seeds {
        let base = train_config(cfg, seed)?;
        log::info!("AIIF sweep, seed {seed}: {:?}", cfg.run.aiif_values);
        let arms = run_aiif_sweep(
            &base,
            cfg.run.test_sessions,
            cfg.reward.ditf,
            &cfg.run.aiif_values,
        );
        all.push(AiifSweepOutput { seed, arms });
    }
    io::write_json(&out.join("aiif_sweep.json"), &all)?;
    let mut w = csv::Writer::from_path(out.join("aiif_sweep.csv"))?;
    w.write_record([
        "seed",
        "aiif",
        "train_mean_reward",
        "test_mean_reward",
        "test_mean_mtm",
        "test_mean_abs_inventory",
        "test_cash_inventory_ratio",
    ])?;
    for run in &all {
        for a in &run.arms {
            w.write_record([
                run.seed.to_string(),
                a.aiif.to_string(),
                a.train_mean_reward.to_string(),
                a.test_mean_reward.to_string(),
                a.test_mean_mtm.to_string(),
                a.test_mean_abs_inventory.to_string(),
                a.test_cash_inventory_ratio.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `sweep-morl`: weight sweeps for the dual-head agent and the
/// weighted-scalarized comparison, emitting labeled objective points.
pub fn cmd_sweep_morl(cfg: &Config) -> Result<()> {
    let out = PathBuf::from(&cfg.out);
    write_resolved_config(&out, cfg)?;
    let base = train_config(cfg, cfg.run.seeds[0])?;
    let weights = &cfg.run.weights;
    log::info!("weight sweep over {weights:?} with seeds {:?}", cfg.run.seeds);
    let morl = run_weight_sweep(&base, cfg.run.test_sessions, weights, &cfg.run.seeds, false);
    let rew = run_weight_sweep(&base, cfg.run.test_sessions, weights, &cfg.run.seeds, true);
    let sets = vec![
        report::LabeledPoints {
            tag: "morl".into(),
            points: morl.iter().map(|p| p.objective_point("morl")).collect(),
        },
        report::LabeledPoints {
            tag: "re-w".into(),
            points: rew.iter().map(|p| p.objective_point("re-w")).collect(),
        },
    ];
    io::write_json(&out.join("points.json"), &sets)?;
    io::write_json(&out.join("sweep_morl.json"), &serde_json::json!({ "morl": morl, "re_w": rew }))?;
    Ok(())
}

/// `benchmark-rewards`: the four-way reward-function comparison with
/// shared market streams.
pub fn cmd_benchmark_rewards(cfg: &Config) -> Result<()> {
    use mmlab_core::experiment::RewardSpec;
    use mmlab_core::rewards::AiifConfig;
    let out = PathBuf::from(&cfg.out);
    write_resolved_config(&out, cfg)?;
    let mut arms: Vec<(String, RewardSpec)> = vec![
        ("full-inv".into(), RewardSpec::FullInv { lambda: cfg.reward.lambda }),
        ("asym-damp".into(), RewardSpec::AsymDamp { eta: cfg.reward.eta }),
        ("pnl-only".into(), RewardSpec::PnlOnly),
    ];
    for &aiif in &cfg.run.aiif_values {
        arms.push((
            format!("rim-aiif{aiif}"),
            RewardSpec::Rim(AiifConfig {
                aiif,
                ditf: cfg.reward.ditf,
                window: cfg.reward.window,
            }),
        ));
    }
    let mut all = Vec::new();
    for &seed in &cfg.run.seeds {
        let base = train_config(cfg, seed)?;
        log::info!("reward benchmark, seed {seed}");
        let rows = run_reward_benchmark(&base, cfg.run.test_sessions, &arms);
        all.push(serde_json::json!({ "seed": seed, "arms": rows }));
    }
    io::write_json(&out.join("benchmark.json"), &all)?;
    Ok(())
}

fn parse_method(spec: &str, powdts: PowDtsCfg) -> Result<ContextMethod> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let num = |what: &str| -> Result<f64> {
        arg.with_context(|| format!("method '{name}' needs :<{what}>"))?
            .parse::<f64>()
            .with_context(|| format!("parsing {what} in '{spec}'"))
    };
    Ok(match name {
        "single-policy" => ContextMethod::SinglePolicy {
            library_idx: num("library index")? as usize,
        },
        "cl-singlep" => ContextMethod::ClSingleP { lr: num("learning rate")? },
        "cl-freezing" => ContextMethod::ClFreezing,
        "cl-rehearsal" => ContextMethod::ClRehearsal { gamma_mix: num("mix")? },
        "cl-ewc" => ContextMethod::ClEwc { lambda: num("lambda")? },
        "powdts" => ContextMethod::PowDts(powdts),
        "random-blocks" => ContextMethod::RandomBlocks(powdts),
        "random-timesteps" => ContextMethod::RandomTimesteps,
        "optimal-mp" => ContextMethod::OptimalMp,
        other => bail!("unknown context method '{other}'"),
    })
}

/// Trains the policy library if not cached under the output directory.
fn load_or_train_library(
    cfg: &Config,
    out: &Path,
) -> Result<mmlab_core::experiment::PolicyLibrary> {
    let lib_path = out.join("library.mmlb");
    if lib_path.exists() {
        log::info!("loading policy library from {}", lib_path.display());
        let file = io::load_library(&lib_path)?;
        return Ok(mmlab_core::experiment::PolicyLibrary {
            context_counts: file.context_counts,
            checkpoints: file.checkpoints,
            baseline_buffer: file.baseline_buffer,
            baseline_fisher: file.baseline_fisher,
        });
    }
    log::info!(
        "training policy library for contexts {:?} ({} sessions each)",
        cfg.context.library_counts,
        cfg.context.library_sessions
    );
    let mut spec = cfg.learner_spec()?;
    // Library policies are dual-head agents selected with the blend weight.
    spec.algo = mmlab_core::experiment::LearnerAlgo::Morl { w: cfg.context.blend_w };
    spec.reward = mmlab_core::experiment::RewardSpec::MorlVector { alpha: cfg.reward.alpha };
    spec.schedule = mmlab_core::rl::EpsSchedule::sized_for_sessions(cfg.context.library_sessions);
    let lib = mmlab_core::experiment::train_library(
        &cfg.market.to_core(),
        &cfg.context.library_counts,
        cfg.context.library_sessions,
        cfg.seed,
        &spec,
    );
    io::save_library(
        &lib_path,
        &io::LibraryFile {
            context_counts: lib.context_counts.clone(),
            checkpoints: lib.checkpoints.clone(),
            baseline_buffer: lib.baseline_buffer.clone(),
            baseline_fisher: lib.baseline_fisher.clone(),
        },
    )?;
    Ok(lib)
}

/// `context-seq` / `powdts`: the non-stationary context-sequence
/// experiment with the configured adaptation method.
pub fn cmd_context_seq(cfg: &Config, method_flag: Option<&str>) -> Result<()> {
    let out = PathBuf::from(&cfg.out);
    write_resolved_config(&out, cfg)?;
    let library = load_or_train_library(cfg, &out)?;
    let method = parse_method(
        method_flag.unwrap_or(&cfg.context.method),
        cfg.powdts.to_core(),
    )?;
    let mut results = Vec::new();
    for &seed in &cfg.run.seeds {
        let ctx_cfg = ContextSeqConfig {
            market: cfg.market.to_core(),
            contexts: cfg.context.sequence.clone(),
            sessions_per_context: cfg.context.sessions_per_context,
            exploration_sessions: cfg.context.exploration_sessions,
            master_seed: seed,
            blend_w: cfg.context.blend_w,
            opts: run_opts(cfg),
        };
        log::info!("context sequence '{}', seed {seed}", method.label());
        let run = run_context_sequence(&ctx_cfg, &library, &method, cfg.hyper()?);
        let dir = out.join(format!("seed_{seed}"));
        write_run_log(&dir, &run.log, cfg)?;
        io::write_json(
            &dir.join("context_summary.json"),
            &serde_json::json!({
                "method": run.method,
                "per_context": run.per_context,
                "aggregate": run.aggregate,
            }),
        )?;
        if let Some(powdts_log) = &run.powdts {
            io::write_json(&dir.join("recals.json"), &powdts_log.recals)?;
        }
        results.push(serde_json::json!({
            "seed": seed,
            "method": run.method,
            "aggregate": run.aggregate,
        }));
    }
    io::write_json(&out.join("context_results.json"), &results)?;
    Ok(())
}

/// `metrics`: multi-objective metrics over labeled point sets.
pub fn cmd_metrics(cfg: &Config, points: &Path) -> Result<()> {
    let out = PathBuf::from(&cfg.out);
    io::ensure_dir(&out)?;
    let text = std::fs::read_to_string(points)
        .with_context(|| format!("reading {}", points.display()))?;
    let sets: Vec<report::LabeledPoints> =
        serde_json::from_str(&text).context("parsing points.json")?;
    let rows = report::metrics_table(&sets, 0.05)?;
    io::write_json(&out.join("metrics.json"), &rows)?;
    report::write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    for r in &rows {
        println!(
            "{:<10} hypervolume {:>8.4} sparsity {:>12.1} undominated {} ({:.0}%)",
            r.experiment,
            r.hypervolume,
            r.sparsity_avg,
            r.undominated,
            100.0 * r.undominated_share
        );
    }
    Ok(())
}

/// `report`: regenerates rolling averages and summaries from a run
/// directory's sessions.csv. Idempotent.
pub fn cmd_report(run_dir: &Path) -> Result<()> {
    let sessions_path = run_dir.join("sessions.csv");
    let rows = crate::io::read_sessions_csv(&sessions_path)?;
    if rows.is_empty() {
        bail!("{}: no session rows", sessions_path.display());
    }
    // Partial logs are an explicit error: every label must cover the same
    // contiguous session range.
    let max_session = rows.iter().map(|r| r.session).max().unwrap();
    let labels: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r.label.as_str()).collect();
    let mut missing = Vec::new();
    for label in &labels {
        for s in 0..=max_session {
            if !rows.iter().any(|r| r.label == *label && r.session == s) {
                missing.push(format!("{label}:{s}"));
            }
        }
    }
    if !missing.is_empty() {
        bail!(
            "{}: missing sessions {}",
            sessions_path.display(),
            missing.join(", ")
        );
    }

    io::write_json(
        &run_dir.join("summary.json"),
        &report::aggregate_sessions(&rows),
    )?;

    // 50-session rolling averages of reward and terminal value per label.
    let window = 50;
    let mut w = csv::Writer::from_path(run_dir.join("rolling.csv"))?;
    w.write_record(["label", "session", "rolling_reward", "rolling_mtm"])?;
    for label in &labels {
        let mut series: Vec<&mmlab_core::experiment::SessionSummary> =
            rows.iter().filter(|r| r.label == *label).collect();
        series.sort_by_key(|r| r.session);
        let rewards: Vec<f64> = series.iter().map(|r| r.mean_reward).collect();
        let mtms: Vec<f64> = series.iter().map(|r| r.terminal_mtm as f64).collect();
        let rr = report::rolling_mean(&rewards, window);
        let rm = report::rolling_mean(&mtms, window);
        for (i, row) in series.iter().enumerate() {
            w.write_record([
                label.to_string(),
                row.session.to_string(),
                rr[i].to_string(),
                rm[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
