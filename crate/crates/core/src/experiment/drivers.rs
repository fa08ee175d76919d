//! Multi-session experiment drivers: training runs with checkpointing,
//! greedy test runs, and the sweep/benchmark experiment families.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use serde::Serialize;

use crate::dealer::route_investor_order;
use crate::nn::NetSpec;
use crate::pareto::ObjectivePoint;
use crate::replay::ReplayBuffer;
use crate::rewards::AiifConfig;
use crate::rl::{DqnAgent, DqnHyper, EpsSchedule, M3orlAgent};
use crate::rng::RngRegistry;
use crate::session::{MarketCfg, MarketEvent, TradingSession, MM_ID_BASE};
use crate::state::{EmaPreset, RunningScaler, StateVariant};

use super::mm::{
    Checkpoint, ClState, FrozenRunner, LearnerNet, LearnerState, MmHarness, MmKind, MmStepRow,
    RewardSpec,
};

/// What to record while running.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOpts {
    pub log_mm_steps: bool,
    pub log_market_events: bool,
}

/// Per-session, per-MM summary row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub session: usize,
    pub mm_id: u64,
    pub label: String,
    pub mean_reward: f64,
    pub mean_r2: f64,
    pub terminal_mtm: i64,
    pub terminal_cash: i64,
    pub terminal_inventory: i64,
    pub mean_abs_inventory: f64,
    pub cash_inventory_ratio: f64,
    pub total_earnings: i64,
    pub total_hedge_cost: i64,
    pub eps: f64,
}

/// Everything a run produced in memory.
#[derive(Debug, Default)]
pub struct RunLog {
    pub session_summaries: Vec<SessionSummary>,
    pub mm_steps: Vec<MmStepRow>,
    pub market_events: Vec<MarketEvent>,
}

impl RunLog {
    /// Mean of a per-session field across sessions for one MM label.
    pub fn mean_over_sessions<F: Fn(&SessionSummary) -> f64>(&self, label: &str, f: F) -> f64 {
        let rows: Vec<&SessionSummary> = self
            .session_summaries
            .iter()
            .filter(|s| s.label == label)
            .collect();
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|s| f(s)).sum::<f64>() / rows.len() as f64
    }
}

/// Runs `sessions` consecutive trading sessions with the given MM lineup,
/// resetting market and accounts each session. `session_offset` shifts the
/// epsilon-schedule index (continuation runs).
pub fn run_sessions(
    market: &MarketCfg,
    mms: &mut [MmHarness],
    sessions: usize,
    session_offset: usize,
    master_seed: u64,
    opts: RunOpts,
) -> RunLog {
    let registry = RngRegistry::new(master_seed);
    let mut log = RunLog::default();
    for s in 0..sessions {
        let session_idx = session_offset + s;
        let session_registry = registry.session_registry(session_idx as u64);
        let mut session = TradingSession::new(market.clone(), &session_registry);
        session.log_events = opts.log_market_events;
        for mm in mms.iter_mut() {
            let stream = session_registry.agent_stream(mm.account.id);
            mm.begin_session(session_idx, market.mm_opening_cash, stream);
        }
        run_one_session(&mut session, mms, session_idx, opts, &mut log);
        if opts.log_market_events {
            log.market_events.append(&mut session.events);
        }
    }
    log
}

/// One full market + dealer step for the given lineup. Returns the view
/// the step traded against.
pub(crate) fn dealer_step(
    session: &mut TradingSession,
    mms: &mut [MmHarness],
    session_idx: usize,
    opts: RunOpts,
    log: &mut RunLog,
) -> crate::session::MarketView {
    let view = session.step_background();
    for mm in mms.iter_mut() {
        mm.revalue_and_hedge(&view);
    }
    for mm in mms.iter_mut() {
        mm.observe_and_act(&view);
    }
    let quotes: Vec<crate::dealer::MmQuote> = mms.iter().map(|m| m.quote).collect();
    for order in session.investor_orders() {
        let stream = &mut session.investors[order.investor_idx].stream;
        let idx = route_investor_order(&quotes, order.side, stream);
        mms[idx].record_trade(order.side, order.qty, view.mid);
    }
    for mm in mms.iter_mut() {
        let mut sink = if opts.log_mm_steps {
            Some(&mut log.mm_steps)
        } else {
            None
        };
        mm.finalize_step(&view, session_idx, &mut sink);
    }
    session.advance();
    view
}

/// Appends one summary row per MM at session end.
pub(crate) fn emit_session_summaries(
    mms: &[MmHarness],
    last_mid: crate::book::Price,
    session_idx: usize,
    log: &mut RunLog,
) {
    for mm in mms.iter() {
        let steps = mm.steps_in_session.max(1) as f64;
        let eps = match &mm.kind {
            MmKind::Learner(l) => l.eps,
            _ => 0.0,
        };
        log.session_summaries.push(SessionSummary {
            session: session_idx,
            mm_id: mm.account.id,
            label: mm.label.clone(),
            mean_reward: mm.acc_r1 / steps,
            mean_r2: mm.acc_r2 / steps,
            terminal_mtm: mm.account.mark_to_market(last_mid),
            terminal_cash: mm.account.cash,
            terminal_inventory: mm.account.inventory,
            mean_abs_inventory: mm.acc_abs_inv / steps,
            cash_inventory_ratio: mm.acc_ratio / steps,
            total_earnings: mm.acc_e,
            total_hedge_cost: mm.acc_hgc,
            eps,
        });
    }
}

/// The per-step dealer pipeline over one full session.
fn run_one_session(
    session: &mut TradingSession,
    mms: &mut [MmHarness],
    session_idx: usize,
    opts: RunOpts,
    log: &mut RunLog,
) {
    let mut last_mid = crate::book::OPENING_PRICE;
    while !session.clock.session_over() {
        last_mid = dealer_step(session, mms, session_idx, opts, log).mid;
    }
    emit_session_summaries(mms, last_mid, session_idx, log);
}

/// Learning algorithm selection for a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LearnerAlgo {
    Dqn,
    /// Dual-head agent with the given action-selection weight.
    Morl { w: f64 },
}

/// Full specification of one learning MM.
#[derive(Debug, Clone)]
pub struct LearnerSpec {
    pub algo: LearnerAlgo,
    pub variant: StateVariant,
    pub ema: Option<EmaPreset>,
    pub reward: RewardSpec,
    pub hyper: DqnHyper,
    pub schedule: EpsSchedule,
}

impl LearnerSpec {
    /// Builds the learner state with freshly initialized networks.
    pub fn build(&self, registry: &RngRegistry, mm_id: u64) -> LearnerState {
        let mut stream = registry.agent_stream(mm_id ^ 0x5eed_0000);
        let spec = NetSpec::mm_head(self.variant.arity());
        let net = match self.algo {
            LearnerAlgo::Dqn => LearnerNet::Dqn(DqnAgent::new(spec, self.hyper, &mut stream)),
            LearnerAlgo::Morl { w } => {
                LearnerNet::Morl(M3orlAgent::new(spec, w, self.hyper, &mut stream))
            }
        };
        LearnerState {
            net,
            hyper: self.hyper,
            variant: self.variant,
            ema_preset: self.ema,
            ema: self.ema.map(crate::state::EmaTracker::new),
            scaler: RunningScaler::new(self.variant.arity()),
            buffer: ReplayBuffer::new(self.hyper.replay_capacity),
            schedule: self.schedule,
            eps: self.schedule.start,
            reward: self.reward,
            cl: ClState::default(),
            steps_seen: 0,
            learning: true,
        }
    }
}

/// Opposing baseline MMs included in a run.
#[derive(Debug, Clone, Copy)]
pub struct OpponentLineup {
    pub random: usize,
    pub persistent: usize,
}

impl Default for OpponentLineup {
    fn default() -> Self {
        Self {
            random: 1,
            persistent: 1,
        }
    }
}

/// Builds the standard lineup: the experimental MM first (id 20_000),
/// then random and persistent baselines.
pub fn standard_lineup(exp: MmHarness, opponents: OpponentLineup, opening_cash: i64) -> Vec<MmHarness> {
    let registry = RngRegistry::new(0);
    let mut mms = alloc::vec![exp];
    let mut next_id = MM_ID_BASE + 1;
    for i in 0..opponents.random {
        let label = if opponents.random == 1 {
            String::from("random")
        } else {
            alloc::format!("random{i}")
        };
        mms.push(MmHarness::new(
            &label,
            MmKind::Random,
            next_id,
            opening_cash,
            registry.agent_stream(next_id),
        ));
        next_id += 1;
    }
    for i in 0..opponents.persistent {
        let label = if opponents.persistent == 1 {
            String::from("persistent")
        } else {
            alloc::format!("persistent{i}")
        };
        mms.push(MmHarness::new(
            &label,
            MmKind::Persistent {
                current: crate::action::EtaAction::new(5, 5, 0),
            },
            next_id,
            opening_cash,
            registry.agent_stream(next_id),
        ));
        next_id += 1;
    }
    mms
}

/// A training run's configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub market: MarketCfg,
    pub sessions: usize,
    pub master_seed: u64,
    pub learner: LearnerSpec,
    pub opponents: OpponentLineup,
    /// Session indices (0-based, after that session completes) at which to
    /// snapshot a checkpoint.
    pub checkpoint_sessions: Vec<usize>,
    pub opts: RunOpts,
}

pub struct TrainOutput {
    pub log: RunLog,
    pub checkpoints: Vec<(usize, Checkpoint)>,
    pub final_checkpoint: Checkpoint,
}

/// Trains one learning MM against the baseline lineup over the configured
/// session count, snapshotting checkpoints along the way.
pub fn run_training(cfg: &TrainConfig) -> TrainOutput {
    let registry = RngRegistry::new(cfg.master_seed);
    let learner = cfg.learner.build(&registry, MM_ID_BASE);
    let exp = MmHarness::new(
        "learner",
        MmKind::Learner(Box::new(learner)),
        MM_ID_BASE,
        cfg.market.mm_opening_cash,
        registry.agent_stream(MM_ID_BASE),
    );
    let mut mms = standard_lineup(exp, cfg.opponents, cfg.market.mm_opening_cash);

    let mut log = RunLog::default();
    let mut checkpoints = Vec::new();
    for s in 0..cfg.sessions {
        let mut part = run_sessions(&cfg.market, &mut mms, 1, s, cfg.master_seed, cfg.opts);
        log.session_summaries.append(&mut part.session_summaries);
        log.mm_steps.append(&mut part.mm_steps);
        log.market_events.append(&mut part.market_events);
        if cfg.checkpoint_sessions.contains(&s) {
            checkpoints.push((s, learner_checkpoint(&mms[0])));
        }
    }
    let final_checkpoint = learner_checkpoint(&mms[0]);
    TrainOutput {
        log,
        checkpoints,
        final_checkpoint,
    }
}

fn learner_checkpoint(mm: &MmHarness) -> Checkpoint {
    match &mm.kind {
        MmKind::Learner(l) => l.checkpoint(),
        _ => panic!("not a learner"),
    }
}

/// A greedy evaluation run from a checkpoint.
#[derive(Debug, Clone)]
pub struct TestConfig {
    pub market: MarketCfg,
    pub sessions: usize,
    pub master_seed: u64,
    pub opponents: OpponentLineup,
    pub opts: RunOpts,
}

/// Runs greedy-only sessions of a frozen policy against the baseline
/// lineup. The policy's networks and standardizer never update.
pub fn run_test(cfg: &TestConfig, checkpoint: &Checkpoint) -> RunLog {
    let registry = RngRegistry::new(cfg.master_seed);
    let exp = MmHarness::new(
        "policy",
        MmKind::Frozen(Box::new(FrozenRunner::new(checkpoint.clone()))),
        MM_ID_BASE,
        cfg.market.mm_opening_cash,
        registry.agent_stream(MM_ID_BASE),
    );
    let mut mms = standard_lineup(exp, cfg.opponents, cfg.market.mm_opening_cash);
    run_sessions(&cfg.market, &mut mms, cfg.sessions, 0, cfg.master_seed, cfg.opts)
}

/// One arm of the risk-aversion sweep.
#[derive(Debug, Clone, Serialize)]
pub struct AiifArm {
    pub aiif: f64,
    pub train_mean_reward: f64,
    pub train_mean_abs_inventory: f64,
    pub test_mean_reward: f64,
    pub test_mean_mtm: f64,
    pub test_mean_abs_inventory: f64,
    pub test_cash_inventory_ratio: f64,
}

/// Trains and tests one agent per AIIF value, sharing every other
/// parameter and the market seed.
pub fn run_aiif_sweep(
    base: &TrainConfig,
    test_sessions: usize,
    ditf: f64,
    aiif_list: &[f64],
) -> Vec<AiifArm> {
    aiif_list
        .iter()
        .map(|&aiif| {
            let mut cfg = base.clone();
            cfg.learner.reward = RewardSpec::Rim(AiifConfig {
                aiif,
                ditf,
                window: crate::rewards::DEFAULT_THRESHOLD_WINDOW,
            });
            let out = run_training(&cfg);
            let test_cfg = TestConfig {
                market: cfg.market.clone(),
                sessions: test_sessions,
                master_seed: cfg.master_seed ^ 0x7e57,
                opponents: cfg.opponents,
                opts: cfg.opts,
            };
            let test = run_test(&test_cfg, &out.final_checkpoint);
            AiifArm {
                aiif,
                train_mean_reward: out.log.mean_over_sessions("learner", |s| s.mean_reward),
                train_mean_abs_inventory: out
                    .log
                    .mean_over_sessions("learner", |s| s.mean_abs_inventory),
                test_mean_reward: test.mean_over_sessions("policy", |s| s.mean_reward),
                test_mean_mtm: test.mean_over_sessions("policy", |s| s.terminal_mtm as f64),
                test_mean_abs_inventory: test
                    .mean_over_sessions("policy", |s| s.mean_abs_inventory),
                test_cash_inventory_ratio: test
                    .mean_over_sessions("policy", |s| s.cash_inventory_ratio),
            }
        })
        .collect()
}

/// One point of a weight sweep, ready for the Pareto tooling.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub w: f64,
    pub mean_mtm: f64,
    pub mean_abs_inventory: f64,
}

impl SweepPoint {
    /// Encodes the point with both axes maximized: the inventory score is
    /// the negated mean absolute inventory.
    pub fn objective_point(&self, tag: &str) -> ObjectivePoint {
        ObjectivePoint::new(self.mean_mtm, -self.mean_abs_inventory, tag)
    }
}

/// Trains and greedily tests one agent per selection weight, averaging
/// test outcomes over `seeds` independent runs per weight. Works for both
/// the dual-head agent (`LearnerAlgo::Morl`) and the weighted-scalarized
/// single-head comparison (`RewardSpec::Rew`).
pub fn run_weight_sweep(
    base: &TrainConfig,
    test_sessions: usize,
    weights: &[f64],
    seeds: &[u64],
    scalarized: bool,
) -> Vec<SweepPoint> {
    weights
        .iter()
        .map(|&w| {
            let mut mtm_acc = 0.0;
            let mut inv_acc = 0.0;
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.master_seed = seed;
                if scalarized {
                    cfg.learner.algo = LearnerAlgo::Dqn;
                    cfg.learner.reward = RewardSpec::Rew {
                        w,
                        alpha: crate::rewards::ALPHA_INVENTORY,
                    };
                } else {
                    cfg.learner.algo = LearnerAlgo::Morl { w };
                    cfg.learner.reward = RewardSpec::MorlVector {
                        alpha: crate::rewards::ALPHA_INVENTORY,
                    };
                }
                let out = run_training(&cfg);
                let test_cfg = TestConfig {
                    market: cfg.market.clone(),
                    sessions: test_sessions,
                    master_seed: seed ^ 0x7e57,
                    opponents: cfg.opponents,
                    opts: cfg.opts,
                };
                let test = run_test(&test_cfg, &out.final_checkpoint);
                mtm_acc += test.mean_over_sessions("policy", |s| s.terminal_mtm as f64);
                inv_acc += test.mean_over_sessions("policy", |s| s.mean_abs_inventory);
            }
            SweepPoint {
                w,
                mean_mtm: mtm_acc / seeds.len() as f64,
                mean_abs_inventory: inv_acc / seeds.len() as f64,
            }
        })
        .collect()
}

/// One arm of the reward-function benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkArm {
    pub label: String,
    pub test_mean_mtm: f64,
    pub test_mean_abs_inventory: f64,
    pub test_cash_inventory_ratio: f64,
}

/// Trains one agent per reward function with everything else shared
/// (market seed included) and reports test-stage aggregates.
pub fn run_reward_benchmark(
    base: &TrainConfig,
    test_sessions: usize,
    arms: &[(String, RewardSpec)],
) -> Vec<BenchmarkArm> {
    arms.iter()
        .map(|(label, reward)| {
            let mut cfg = base.clone();
            cfg.learner.reward = *reward;
            let out = run_training(&cfg);
            let test_cfg = TestConfig {
                market: cfg.market.clone(),
                sessions: test_sessions,
                master_seed: cfg.master_seed ^ 0x7e57,
                opponents: cfg.opponents,
                opts: cfg.opts,
            };
            let test = run_test(&test_cfg, &out.final_checkpoint);
            BenchmarkArm {
                label: label.clone(),
                test_mean_mtm: test.mean_over_sessions("policy", |s| s.terminal_mtm as f64),
                test_mean_abs_inventory: test
                    .mean_over_sessions("policy", |s| s.mean_abs_inventory),
                test_cash_inventory_ratio: test
                    .mean_over_sessions("policy", |s| s.cash_inventory_ratio),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_train_cfg(seed: u64) -> TrainConfig {
        let mut market = MarketCfg::desk();
        market.steps_per_session = 220;
        TrainConfig {
            market,
            sessions: 2,
            master_seed: seed,
            learner: LearnerSpec {
                algo: LearnerAlgo::Dqn,
                variant: StateVariant::V10,
                ema: None,
                reward: RewardSpec::Single,
                hyper: DqnHyper {
                    minibatch: 64,
                    ..DqnHyper::default()
                },
                schedule: EpsSchedule::sized_for_sessions(2),
            },
            opponents: OpponentLineup::default(),
            checkpoint_sessions: alloc::vec![0],
            opts: RunOpts {
                log_mm_steps: true,
                log_market_events: false,
            },
        }
    }

    #[test]
    fn smoke_training_run_is_deterministic() {
        let a = run_training(&smoke_train_cfg(5));
        let b = run_training(&smoke_train_cfg(5));
        assert_eq!(a.log.session_summaries, b.log.session_summaries);
        assert_eq!(a.log.mm_steps, b.log.mm_steps);
        assert_eq!(a.final_checkpoint, b.final_checkpoint);
        assert_eq!(a.checkpoints.len(), 1);
    }

    #[test]
    fn summaries_match_step_log_recomputation() {
        let out = run_training(&smoke_train_cfg(6));
        for summary in &out.log.session_summaries {
            let rows: Vec<&MmStepRow> = out
                .log
                .mm_steps
                .iter()
                .filter(|r| r.session == summary.session && r.mm_id == summary.mm_id)
                .collect();
            assert!(!rows.is_empty());
            let mean_r1: f64 = rows.iter().map(|r| r.r1).sum::<f64>() / rows.len() as f64;
            assert!((mean_r1 - summary.mean_reward).abs() < 1e-9);
            let mean_abs_inv: f64 =
                rows.iter().map(|r| r.inventory.abs() as f64).sum::<f64>() / rows.len() as f64;
            assert!((mean_abs_inv - summary.mean_abs_inventory).abs() < 1e-9);
            assert_eq!(rows.last().unwrap().mtm, summary.terminal_mtm);
            let e_total: i64 = rows.iter().map(|r| r.e).sum();
            assert_eq!(e_total, summary.total_earnings);
        }
    }

    #[test]
    fn pnl_identity_holds_per_step() {
        // Delta MtM == E + inv * delta_mid - HgC exactly, in ticks, for
        // every logged step after the first of each session.
        let out = run_training(&smoke_train_cfg(7));
        let mut by_mm: alloc::collections::BTreeMap<(usize, u64), Vec<&MmStepRow>> =
            alloc::collections::BTreeMap::new();
        for row in &out.log.mm_steps {
            by_mm.entry((row.session, row.mm_id)).or_default().push(row);
        }
        for rows in by_mm.values() {
            for pair in rows.windows(2) {
                let (prev, curr) = (&pair[0], &pair[1]);
                let delta_mtm = curr.mtm - prev.mtm;
                assert_eq!(
                    delta_mtm,
                    curr.e + curr.pnl - curr.hgc,
                    "identity broken at step {}",
                    curr.step
                );
            }
        }
    }

    #[test]
    fn greedy_test_is_deterministic_and_frozen() {
        let out = run_training(&smoke_train_cfg(8));
        let cfg = smoke_train_cfg(8);
        let test_cfg = TestConfig {
            market: cfg.market.clone(),
            sessions: 2,
            master_seed: 99,
            opponents: OpponentLineup::default(),
            opts: RunOpts::default(),
        };
        let ck_before = checkpoint_bytes(&out.final_checkpoint);
        let t1 = run_test(&test_cfg, &out.final_checkpoint);
        let t2 = run_test(&test_cfg, &out.final_checkpoint);
        assert_eq!(t1.session_summaries, t2.session_summaries);
        assert_eq!(ck_before, checkpoint_bytes(&out.final_checkpoint));
    }

    fn checkpoint_bytes(ck: &Checkpoint) -> Vec<u8> {
        super::super::mm::checkpoint_to_bytes(ck)
    }

    #[test]
    fn shared_seed_background_markets_are_identical_across_arms() {
        // Two different reward arms under one seed: the background event
        // stream must match exactly (MMs never touch the book).
        let mut cfg_a = smoke_train_cfg(11);
        cfg_a.opts.log_market_events = true;
        let mut cfg_b = cfg_a.clone();
        cfg_b.learner.reward = RewardSpec::PnlOnly;
        let a = run_training(&cfg_a);
        let b = run_training(&cfg_b);
        assert_eq!(a.log.market_events, b.log.market_events);
        assert!(!a.log.market_events.is_empty());
    }
}
