//! Experiment configuration: a single nested TOML file layered over
//! per-scale defaults, with environment-variable overrides for the
//! top-level keys and rejection of unknown keys.
//!
//! Resolution order: scale defaults <- config file <- `MMLAB_*`
//! environment variables <- command-line flags.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use mmlab_core::background::{MomentumCfg, NoiseAgentCfg, PovCfg, ValueAgentCfg};
use mmlab_core::experiment::{LearnerAlgo, LearnerSpec, RewardSpec};
use mmlab_core::nn::LossKind;
use mmlab_core::powdts::PowDtsCfg;
use mmlab_core::rewards::AiifConfig;
use mmlab_core::rl::{DqnHyper, EpsSchedule};
use mmlab_core::session::MarketCfg;
use mmlab_core::state::{EmaPreset, StateVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => bail!("unknown scale '{other}' (expected 'desk' or 'paper')"),
        }
    }
}

/// The fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Master seed; every stream in a run derives from it.
    pub seed: u64,
    /// Output directory for logs, checkpoints, and reports.
    pub out: String,
    pub scale: Scale,
    pub market: MarketSection,
    pub mm: MmSection,
    pub reward: RewardSection,
    pub rl: RlSection,
    pub run: RunSection,
    pub context: ContextSection,
    pub powdts: PowDtsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub steps_per_session: u64,
    pub n_noise: usize,
    pub n_value: usize,
    pub n_momentum: usize,
    pub initial_spread: i64,
    pub n_investors: usize,
    pub investor_arrival_prob: f64,
    pub investor_order_size: i64,
    pub mm_opening_cash: i64,
    pub noise: NoiseAgentCfg,
    pub value: ValueAgentCfg,
    pub momentum: MomentumCfg,
    pub pov: PovCfg,
}

impl MarketSection {
    fn from_core(cfg: MarketCfg) -> Self {
        Self {
            steps_per_session: cfg.steps_per_session,
            n_noise: cfg.n_noise,
            n_value: cfg.n_value,
            n_momentum: cfg.n_momentum,
            initial_spread: cfg.initial_spread,
            n_investors: cfg.n_investors,
            investor_arrival_prob: cfg.investor_arrival_prob,
            investor_order_size: cfg.investor_order_size,
            mm_opening_cash: cfg.mm_opening_cash,
            noise: cfg.noise,
            value: cfg.value,
            momentum: cfg.momentum,
            pov: cfg.pov,
        }
    }

    pub fn to_core(&self) -> MarketCfg {
        MarketCfg {
            steps_per_session: self.steps_per_session,
            n_noise: self.n_noise,
            n_value: self.n_value,
            n_momentum: self.n_momentum,
            noise: self.noise,
            value: self.value,
            momentum: self.momentum,
            pov: self.pov,
            initial_spread: self.initial_spread,
            n_investors: self.n_investors,
            investor_arrival_prob: self.investor_arrival_prob,
            investor_order_size: self.investor_order_size,
            mm_opening_cash: self.mm_opening_cash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmSection {
    /// `dqn` or `morl`.
    pub algo: String,
    /// `v8`, `v10`, or `v11`.
    pub state: String,
    /// `none`, `m20_8`, `m15_4`, or `m10_2`.
    pub ema_preset: String,
    /// Action-selection blend weight for dual-head agents.
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    /// `single`, `rim`, `full-inv`, `asym-damp`, `pnl-only`, `rew`,
    /// or `morl-vector`.
    pub kind: String,
    pub aiif: f64,
    pub ditf: f64,
    pub window: usize,
    pub lambda: f64,
    pub eta: f64,
    pub w: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSection {
    pub gamma: f64,
    pub lr: f64,
    pub train_every: u64,
    pub minibatch: usize,
    pub grad_steps_per_event: usize,
    /// Factor applied to rewards when building regression targets
    /// (tick-denominated rewards are 100x dollar scale).
    pub reward_scale: f64,
    /// `mae` or `mse`.
    pub loss: String,
    pub replay_capacity: usize,
    pub eps_start: f64,
    pub eps_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub sessions: usize,
    pub test_sessions: usize,
    pub seeds: Vec<u64>,
    pub checkpoint_sessions: Vec<usize>,
    pub log_mm_steps: bool,
    pub log_market_events: bool,
    /// AIIF values swept by `sweep-aiif`.
    pub aiif_values: Vec<f64>,
    /// Selection weights swept by `sweep-morl`.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSection {
    pub sequence: Vec<usize>,
    pub sessions_per_context: usize,
    pub exploration_sessions: usize,
    pub blend_w: f64,
    pub library_counts: Vec<usize>,
    pub library_sessions: usize,
    /// Method run by `context-seq`: `single-policy:<idx>`,
    /// `cl-singlep:<lr>`, `cl-freezing`, `cl-rehearsal:<mix>`,
    /// `cl-ewc:<lambda>`, `powdts`, `random-blocks`, `random-timesteps`,
    /// `optimal-mp`.
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowDtsSection {
    pub alpha_inc: f64,
    pub beta_inc: f64,
    pub gamma: f64,
    pub rounds_exp: u64,
    pub rounds_recal: u64,
    pub exp_ts: u64,
}

impl PowDtsSection {
    pub fn to_core(&self) -> PowDtsCfg {
        PowDtsCfg {
            alpha_inc: self.alpha_inc,
            beta_inc: self.beta_inc,
            gamma: self.gamma,
            rounds_exp: self.rounds_exp,
            rounds_recal: self.rounds_recal,
            exp_ts: self.exp_ts,
        }
    }
}

impl Config {
    /// Built-in defaults for a scale. Desk: 1,800-step sessions, 0.2
    /// population multiplier, 30 sessions, 3 seeds, compute-proportional
    /// gradient budget. Paper: 7,200-step sessions, full populations,
    /// 150 sessions, 5 seeds, the full-scale hyperparameters.
    pub fn defaults(scale: Scale) -> Self {
        let (market, sessions, test_sessions, seeds, minibatch, grad_steps, sessions_per_context, library_sessions) =
            match scale {
                Scale::Desk => (MarketCfg::desk(), 30, 10, vec![1, 2, 3], 256, 20, 30, 45),
                Scale::Paper => (
                    MarketCfg::paper(),
                    150,
                    50,
                    vec![1, 2, 3, 4, 5],
                    1024,
                    100,
                    50,
                    150,
                ),
            };
        Self {
            seed: 1,
            out: String::from("runs/out"),
            scale,
            market: MarketSection::from_core(market),
            mm: MmSection {
                algo: String::from("dqn"),
                state: String::from("v10"),
                ema_preset: String::from("none"),
                w: 0.9,
            },
            reward: RewardSection {
                kind: String::from("single"),
                aiif: 1.0,
                ditf: 0.5,
                window: 20,
                lambda: 0.15,
                eta: 0.1,
                w: 0.5,
                alpha: 5.0,
            },
            rl: RlSection {
                gamma: 0.6,
                lr: 0.01,
                train_every: 200,
                minibatch,
                grad_steps_per_event: grad_steps,
                reward_scale: 0.01,
                loss: String::from("mae"),
                replay_capacity: 1_000_000,
                eps_start: EpsSchedule::DEFAULT_START,
                eps_min: EpsSchedule::DEFAULT_MIN,
            },
            run: RunSection {
                sessions,
                test_sessions,
                seeds,
                checkpoint_sessions: vec![],
                log_mm_steps: false,
                log_market_events: false,
                aiif_values: vec![0.0, 1.0, 10.0],
                weights: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            },
            context: ContextSection {
                sequence: vec![0, 5, 1, 7, 1, 7, 5, 0],
                sessions_per_context,
                exploration_sessions: 0,
                blend_w: 0.9,
                library_counts: vec![0, 1, 5, 7],
                library_sessions,
                method: String::from("powdts"),
            },
            powdts: PowDtsSection {
                alpha_inc: 1.0,
                beta_inc: 1.0,
                gamma: 0.4,
                rounds_exp: 3,
                rounds_recal: 150,
                exp_ts: 750,
            },
        }
    }

    /// Loads a config: scale defaults, merged with the optional TOML file,
    /// then `MMLAB_SEED` / `MMLAB_OUT` / `MMLAB_SCALE` env overrides.
    /// Unknown keys anywhere in the file are rejected.
    pub fn load(path: Option<&Path>, scale_flag: Option<Scale>) -> Result<Self> {
        // The scale may come from the flag, the env, or the file itself;
        // it decides which default bundle the file is merged onto.
        let file_value: Option<toml::Value> = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let table = text.parse::<toml::Table>().context("parsing config TOML")?;
                Some(toml::Value::Table(table))
            }
            None => None,
        };
        let env_scale = std::env::var("MMLAB_SCALE")
            .ok()
            .map(|s| s.parse::<Scale>())
            .transpose()?;
        let file_scale = file_value
            .as_ref()
            .and_then(|v| v.get("scale"))
            .and_then(|v| v.as_str())
            .map(|s| s.parse::<Scale>())
            .transpose()?;
        let scale = scale_flag.or(env_scale).or(file_scale).unwrap_or(Scale::Desk);

        let mut merged = toml::Value::try_from(Config::defaults(scale))
            .context("encoding default config")?;
        if let Some(file) = file_value {
            merge_toml(&mut merged, file);
        }
        let mut cfg: Config = merged.try_into().context("invalid config")?;
        cfg.scale = scale;

        if let Ok(seed) = std::env::var("MMLAB_SEED") {
            cfg.seed = seed.parse().context("MMLAB_SEED must be an integer")?;
        }
        if let Ok(out) = std::env::var("MMLAB_OUT") {
            cfg.out = out;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn state_variant(&self) -> Result<StateVariant> {
        Ok(match self.mm.state.as_str() {
            "v8" => StateVariant::V8,
            "v10" => StateVariant::V10,
            "v11" => StateVariant::V11,
            other => bail!("unknown state variant '{other}'"),
        })
    }

    pub fn ema_preset(&self) -> Result<Option<EmaPreset>> {
        Ok(match self.mm.ema_preset.as_str() {
            "none" => None,
            "m20_8" => Some(EmaPreset::MINUTES_20_8),
            "m15_4" => Some(EmaPreset::MINUTES_15_4),
            "m10_2" => Some(EmaPreset::MINUTES_10_2),
            other => bail!("unknown EMA preset '{other}'"),
        })
    }

    pub fn reward_spec(&self) -> Result<RewardSpec> {
        let r = &self.reward;
        Ok(match r.kind.as_str() {
            "single" => RewardSpec::Single,
            "rim" => RewardSpec::Rim(AiifConfig {
                aiif: r.aiif,
                ditf: r.ditf,
                window: r.window,
            }),
            "full-inv" => RewardSpec::FullInv { lambda: r.lambda },
            "asym-damp" => RewardSpec::AsymDamp { eta: r.eta },
            "pnl-only" => RewardSpec::PnlOnly,
            "rew" => RewardSpec::Rew {
                w: r.w,
                alpha: r.alpha,
            },
            "morl-vector" => RewardSpec::MorlVector { alpha: r.alpha },
            other => bail!("unknown reward kind '{other}'"),
        })
    }

    pub fn hyper(&self) -> Result<DqnHyper> {
        Ok(DqnHyper {
            gamma: self.rl.gamma,
            lr: self.rl.lr,
            train_every: self.rl.train_every,
            minibatch: self.rl.minibatch,
            grad_steps_per_event: self.rl.grad_steps_per_event,
            reward_scale: self.rl.reward_scale,
            loss: match self.rl.loss.as_str() {
                "mae" => LossKind::Mae,
                "mse" => LossKind::Mse,
                other => bail!("unknown loss '{other}'"),
            },
            replay_capacity: self.rl.replay_capacity,
        })
    }

    pub fn learner_spec(&self) -> Result<LearnerSpec> {
        let algo = match self.mm.algo.as_str() {
            "dqn" => LearnerAlgo::Dqn,
            "morl" => LearnerAlgo::Morl { w: self.mm.w },
            other => bail!("unknown mm algo '{other}'"),
        };
        let reward = match algo {
            LearnerAlgo::Morl { .. } => RewardSpec::MorlVector {
                alpha: self.reward.alpha,
            },
            LearnerAlgo::Dqn => self.reward_spec()?,
        };
        Ok(LearnerSpec {
            algo,
            variant: self.state_variant()?,
            ema: self.ema_preset()?,
            reward,
            hyper: self.hyper()?,
            schedule: EpsSchedule {
                start: self.rl.eps_start,
                min: self.rl.eps_min,
                decay: EpsSchedule::sized_for_sessions(self.run.sessions).decay,
            },
        })
    }
}

/// Recursively merges `overlay` into `base` (tables merge key-wise,
/// everything else replaces).
fn merge_toml(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(base_map), toml::Value::Table(overlay_map)) => {
            for (k, v) in overlay_map {
                match base_map.get_mut(&k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        // Unknown key: keep it so deny_unknown_fields
                        // rejects it with a precise error.
                        base_map.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        for scale in [Scale::Desk, Scale::Paper] {
            let cfg = Config::defaults(scale);
            let text = cfg.to_toml();
            let back: Config = toml::from_str(&text).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "seed = 42\n[market]\nsteps_per_session = 99\n").unwrap();
        let cfg = Config::load(Some(&path), None).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.market.steps_per_session, 99);
        // Untouched keys keep desk defaults.
        assert_eq!(cfg.market.n_noise, 20);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "definitely_not_a_key = 1\n").unwrap();
        assert!(Config::load(Some(&path), None).is_err());
        std::fs::write(&path, "[market]\ntypo_key = 1\n").unwrap();
        assert!(Config::load(Some(&path), None).is_err());
    }

    #[test]
    fn scale_switches_defaults() {
        let desk = Config::defaults(Scale::Desk);
        let paper = Config::defaults(Scale::Paper);
        assert_eq!(desk.market.steps_per_session, 1_800);
        assert_eq!(paper.market.steps_per_session, 7_200);
        assert_eq!(paper.market.n_noise, 100);
        assert_eq!(paper.run.sessions, 150);
    }
}
