//! Non-stationary context-sequence experiments: a rotating competitor
//! count drives market regime changes while one experimental MM either
//! holds a single pre-trained policy, continually retrains (plain, frozen
//! layers, rehearsal, or elastic-penalty variants), schedules a policy
//! library via discounted Thompson sampling, or follows oracle baselines.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use serde::Serialize;

use crate::book::OPENING_PRICE;
use crate::nn::{estimate_fisher_diag, FisherDiag, FreezeMask, GradSample};
use crate::powdts::{
    powdts_run, sections_from_weights, agent_for_timestep, PolicyEnv, PowDtsCfg, PowDtsLog,
};
use crate::replay::ReplayBuffer;
use crate::rewards::ALPHA_INVENTORY;
use crate::rl::{argmax, DqnAgent, DqnCore, DqnHyper, EpsSchedule, M3orlAgent, RewardComponent};
use crate::rng::{AgentRng, RngRegistry};
use crate::session::{MarketCfg, TradingSession, MM_ID_BASE};
use rand::Rng;

use super::drivers::{
    dealer_step, emit_session_summaries, LearnerSpec, RunLog, RunOpts,
};
use super::mm::{
    Checkpoint, ClState, FrozenRunner, LearnerNet, LearnerState, MmHarness, MmKind, RewardSpec,
};

/// A pre-trained policy library: one checkpoint per training context,
/// plus the artifacts needed by the continual-learning baselines.
pub struct PolicyLibrary {
    /// Competitor count each entry was trained against.
    pub context_counts: Vec<usize>,
    pub checkpoints: Vec<Checkpoint>,
    /// The baseline (first) agent's final replay buffer, for rehearsal.
    pub baseline_buffer: ReplayBuffer,
    /// Diagonal Fisher estimates of the baseline agent's two heads.
    pub baseline_fisher: (FisherDiag, FisherDiag),
}

/// TD-loss diagonal Fisher estimate over a buffer sample at the network's
/// current parameters.
fn fisher_from_buffer(
    core: &DqnCore,
    buffer: &ReplayBuffer,
    component: RewardComponent,
    max_samples: usize,
    stream: &mut AgentRng,
) -> FisherDiag {
    assert!(!buffer.is_empty());
    let batch = buffer.sample(max_samples.min(buffer.len()), stream);
    let targets: Vec<f64> = batch
        .iter()
        .map(|t| {
            let next_q = crate::nn::forward(&core.target, &t.next_state);
            component.extract(&t.r) * core.reward_scale + core.gamma * next_q[argmax(&next_q)]
        })
        .collect();
    let samples: Vec<GradSample<'_>> = batch
        .iter()
        .zip(&targets)
        .map(|(t, &y)| GradSample {
            x: &t.state,
            action: t.action as usize,
            target: y,
        })
        .collect();
    estimate_fisher_diag(&core.train, &samples, core.loss)
}

/// One training run of a fresh learner against `competitors` frozen
/// policies (plus the standard random/persistent pair). Returns the final
/// checkpoint and, on request, the learner's replay buffer and per-head
/// Fisher estimates.
fn train_one_policy(
    market: &MarketCfg,
    spec: &LearnerSpec,
    competitors: &[Checkpoint],
    sessions: usize,
    seed: u64,
    capture_cl_artifacts: bool,
) -> (Checkpoint, Option<(ReplayBuffer, (FisherDiag, FisherDiag))>) {
    let registry = RngRegistry::new(seed);
    let learner = spec.build(&registry, MM_ID_BASE);
    let exp = MmHarness::new(
        "learner",
        MmKind::Learner(Box::new(learner)),
        MM_ID_BASE,
        market.mm_opening_cash,
        registry.agent_stream(MM_ID_BASE),
    );
    let mut mms = super::drivers::standard_lineup(
        exp,
        super::drivers::OpponentLineup::default(),
        market.mm_opening_cash,
    );
    for (c, source) in competitors.iter().enumerate() {
        let id = MM_ID_BASE + 3 + c as u64;
        mms.push(MmHarness::new(
            &alloc::format!("competitor{c}"),
            MmKind::Frozen(Box::new(FrozenRunner::new(source.clone()))),
            id,
            market.mm_opening_cash,
            registry.agent_stream(id),
        ));
    }
    let _ = super::drivers::run_sessions(market, &mut mms, sessions, 0, seed, RunOpts::default());
    match &mut mms[0].kind {
        MmKind::Learner(l) => {
            let ck = l.checkpoint();
            let artifacts = if capture_cl_artifacts {
                let mut stream = registry.agent_stream(MM_ID_BASE ^ 0xf15e);
                let fisher = match &l.net {
                    LearnerNet::Morl(agent) => (
                        fisher_from_buffer(&agent.q1, &l.buffer, RewardComponent::R1, 2048, &mut stream),
                        fisher_from_buffer(&agent.q2, &l.buffer, RewardComponent::R2, 2048, &mut stream),
                    ),
                    LearnerNet::Dqn(agent) => {
                        let f = fisher_from_buffer(&agent.core, &l.buffer, RewardComponent::R1, 2048, &mut stream);
                        (f.clone(), f)
                    }
                };
                Some((l.buffer.clone(), fisher))
            } else {
                None
            };
            (ck, artifacts)
        }
        _ => unreachable!(),
    }
}

/// Trains one dual-head agent per context count. The baseline (count 0)
/// trains alone for two phases' worth of sessions. Every other context
/// trains in two phases toward its own competitive regime: first against
/// clones of the baseline, then a fresh learner against clones of the
/// phase-one policy. The context-sequence evaluation uses clones of the
/// final matched policy as its competitors, so each library policy plays
/// in the regime it was trained for.
pub fn train_library(
    market: &MarketCfg,
    context_counts: &[usize],
    sessions_per_policy: usize,
    master_seed: u64,
    spec: &LearnerSpec,
) -> PolicyLibrary {
    assert!(!context_counts.is_empty());
    assert_eq!(context_counts[0], 0, "the first library context is the baseline (no competitors)");
    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    let mut baseline_buffer = None;
    let mut baseline_fisher = None;

    for (i, &count) in context_counts.iter().enumerate() {
        let seed = master_seed.wrapping_add(1000 + i as u64);
        if count == 0 {
            let (ck, artifacts) =
                train_one_policy(market, spec, &[], 2 * sessions_per_policy, seed, i == 0);
            if let Some((buffer, fisher)) = artifacts {
                baseline_buffer = Some(buffer);
                baseline_fisher = Some(fisher);
            }
            checkpoints.push(ck);
            continue;
        }
        // Phase 1: best response to baseline clones.
        let phase1: Vec<Checkpoint> = (0..count).map(|_| checkpoints[0].clone()).collect();
        let (ck1, _) = train_one_policy(market, spec, &phase1, sessions_per_policy, seed, false);
        // Phase 2: best response to clones of the phase-one policy.
        let phase2: Vec<Checkpoint> = (0..count).map(|_| ck1.clone()).collect();
        let (ck2, _) = train_one_policy(
            market,
            spec,
            &phase2,
            sessions_per_policy,
            seed ^ 0x2_0000,
            false,
        );
        checkpoints.push(ck2);
    }

    PolicyLibrary {
        context_counts: context_counts.to_vec(),
        checkpoints,
        baseline_buffer: baseline_buffer.expect("at least one context"),
        baseline_fisher: baseline_fisher.expect("at least one context"),
    }
}

/// How the experimental MM adapts across contexts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ContextMethod {
    /// Act greedily with one library policy throughout.
    SinglePolicy { library_idx: usize },
    /// Continually retrain the baseline policy on incoming experience.
    ClSingleP { lr: f64 },
    /// Retrain with every layer frozen except the last.
    ClFreezing,
    /// Retrain on a mix of old and new experiences.
    ClRehearsal { gamma_mix: f64 },
    /// Retrain with the quadratic anchor penalty.
    ClEwc { lambda: f64 },
    /// Schedule the library with discounted Thompson sampling.
    PowDts(PowDtsCfg),
    /// Random section weights per cycle (ablation).
    RandomBlocks(PowDtsCfg),
    /// Uniformly random library policy every step (ablation).
    RandomTimesteps,
    /// Switch to each context's matched policy at the (oracle-known)
    /// context boundaries.
    OptimalMp,
}

impl ContextMethod {
    pub fn label(&self) -> String {
        match self {
            ContextMethod::SinglePolicy { library_idx } => {
                alloc::format!("single-policy-{library_idx}")
            }
            ContextMethod::ClSingleP { lr } => alloc::format!("cl-singlep-lr{lr}"),
            ContextMethod::ClFreezing => String::from("cl-freezing"),
            ContextMethod::ClRehearsal { gamma_mix } => {
                alloc::format!("cl-rehearsal-{gamma_mix}")
            }
            ContextMethod::ClEwc { lambda } => alloc::format!("cl-ewc-l{lambda}"),
            ContextMethod::PowDts(_) => String::from("powdts"),
            ContextMethod::RandomBlocks(_) => String::from("random-blocks"),
            ContextMethod::RandomTimesteps => String::from("random-timesteps"),
            ContextMethod::OptimalMp => String::from("optimal-mp"),
        }
    }

    fn needs_library_controller(&self) -> bool {
        matches!(
            self,
            ContextMethod::PowDts(_)
                | ContextMethod::RandomBlocks(_)
                | ContextMethod::RandomTimesteps
                | ContextMethod::OptimalMp
        )
    }
}

/// Configuration of one context-sequence run.
#[derive(Debug, Clone)]
pub struct ContextSeqConfig {
    pub market: MarketCfg,
    /// Competitor count per context block.
    pub contexts: Vec<usize>,
    pub sessions_per_context: usize,
    /// Exploration sessions (eps forced to 1) after each context change,
    /// for the exploration-variant continual learners.
    pub exploration_sessions: usize,
    pub master_seed: u64,
    /// Action-selection blend: headline reward is
    /// `blend_w * r1 + (1 - blend_w) * r2`.
    pub blend_w: f64,
    pub opts: RunOpts,
}

impl ContextSeqConfig {
    pub fn desk(master_seed: u64) -> Self {
        Self {
            market: MarketCfg::desk(),
            contexts: alloc::vec![0, 5, 1, 7, 1, 7, 5, 0],
            sessions_per_context: 30,
            exploration_sessions: 0,
            master_seed,
            blend_w: 0.9,
            opts: RunOpts::default(),
        }
    }
}

/// Per-context aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextSummary {
    pub context_idx: usize,
    pub competitor_count: usize,
    pub sessions: usize,
    pub mean_blended_reward: f64,
    pub mean_terminal_mtm: f64,
    pub mean_abs_inventory: f64,
}

/// Output of one context-sequence run.
#[derive(Debug)]
pub struct ContextSeqOutput {
    pub method: String,
    pub log: RunLog,
    pub per_context: Vec<ContextSummary>,
    pub aggregate: ContextSummary,
    /// Recalibration records when the scheduler ran.
    pub powdts: Option<PowDtsLog>,
}

/// Streams market steps across sessions and context blocks, rebuilding the
/// competitor lineup at each block boundary.
struct ContextDriver {
    cfg: ContextSeqConfig,
    library: Vec<Checkpoint>,
    context_policy: Vec<usize>,
    method: ContextMethod,
    mms: Vec<MmHarness>,
    session: TradingSession,
    session_idx: usize,
    total_sessions: usize,
    last_mid: crate::book::Price,
    log: RunLog,
    done: bool,
}

impl ContextDriver {
    fn new(
        cfg: ContextSeqConfig,
        library: &PolicyLibrary,
        method: ContextMethod,
        exp: MmHarness,
    ) -> Self {
        let total_sessions = cfg.contexts.len() * cfg.sessions_per_context;
        let context_policy = cfg
            .contexts
            .iter()
            .map(|count| {
                library
                    .context_counts
                    .iter()
                    .position(|c| c == count)
                    .unwrap_or(0)
            })
            .collect();
        let exp_lineup = super::drivers::standard_lineup(
            exp,
            super::drivers::OpponentLineup::default(),
            cfg.market.mm_opening_cash,
        );
        let registry = RngRegistry::new(cfg.master_seed).session_registry(0);
        let session = TradingSession::new(cfg.market.clone(), &registry);
        let mut driver = Self {
            cfg,
            library: library.checkpoints.clone(),
            context_policy,
            method,
            mms: exp_lineup,
            session,
            session_idx: 0,
            total_sessions,
            last_mid: OPENING_PRICE,
            log: RunLog::default(),
            done: false,
        };
        driver.begin_session();
        driver
    }

    fn context_idx_of(&self, session_idx: usize) -> usize {
        session_idx / self.cfg.sessions_per_context
    }

    fn competitor_count(&self, session_idx: usize) -> usize {
        self.cfg.contexts[self.context_idx_of(session_idx)]
    }

    fn begin_session(&mut self) {
        let registry =
            RngRegistry::new(self.cfg.master_seed).session_registry(self.session_idx as u64);
        self.session = TradingSession::new(self.cfg.market.clone(), &registry);
        self.session.log_events = self.cfg.opts.log_market_events;

        // Rebuild the competitor tail for the current context: `count`
        // frozen copies of the context's matched policy, the regime that
        // policy was trained toward.
        let count = self.competitor_count(self.session_idx);
        let policy_idx = self.context_policy[self.context_idx_of(self.session_idx)];
        self.mms.truncate(3);
        for c in 0..count {
            let id = MM_ID_BASE + 3 + c as u64;
            self.mms.push(MmHarness::new(
                &alloc::format!("competitor{c}"),
                MmKind::Frozen(Box::new(FrozenRunner::new(self.library[policy_idx].clone()))),
                id,
                self.cfg.market.mm_opening_cash,
                registry.agent_stream(id),
            ));
        }

        for mm in self.mms.iter_mut() {
            let stream = registry.agent_stream(mm.account.id);
            mm.begin_session(self.session_idx, self.cfg.market.mm_opening_cash, stream);
        }

        // Oracle policy mapping at known boundaries.
        if matches!(self.method, ContextMethod::OptimalMp) {
            self.mms[0].set_active_policy(policy_idx);
        }
        // Exploration rounds right after a context change.
        let session_in_context = self.session_idx % self.cfg.sessions_per_context;
        if session_in_context < self.cfg.exploration_sessions {
            self.mms[0].set_eps(1.0);
        } else {
            self.mms[0].set_eps(0.0);
        }
    }

    /// One market step. Finalizes sessions (and starts the next) as the
    /// clock rolls over. Returns the experimental MM's reward vector.
    fn step(&mut self) -> crate::rewards::RewardVector {
        assert!(!self.done, "context run already complete");
        let view = dealer_step(
            &mut self.session,
            &mut self.mms,
            self.session_idx,
            self.cfg.opts,
            &mut self.log,
        );
        self.last_mid = view.mid;
        let reward = self.mms[0].last_reward;
        if self.session.clock.session_over() {
            emit_session_summaries(&self.mms, self.last_mid, self.session_idx, &mut self.log);
            if self.cfg.opts.log_market_events {
                let mut events = core::mem::take(&mut self.session.events);
                self.log.market_events.append(&mut events);
            }
            self.session_idx += 1;
            if self.session_idx >= self.total_sessions {
                self.done = true;
            } else {
                self.begin_session();
            }
        }
        reward
    }

    fn total_steps(&self) -> u64 {
        self.total_sessions as u64 * self.cfg.market.steps_per_session
    }

    fn blend(&self, r: crate::rewards::RewardVector) -> f64 {
        self.cfg.blend_w * r.r1 + (1.0 - self.cfg.blend_w) * r.r2
    }
}

impl PolicyEnv for ContextDriver {
    fn step(&mut self, policy_idx: usize) -> f64 {
        self.mms[0].set_active_policy(policy_idx);
        let r = ContextDriver::step(self);
        self.blend(r)
    }
}

/// Builds the experimental MM for a method.
fn build_experimental_mm(
    method: &ContextMethod,
    library: &PolicyLibrary,
    hyper: DqnHyper,
    registry: &RngRegistry,
) -> MmHarness {
    let baseline = library.checkpoints[0].clone();
    let kind = if method.needs_library_controller() {
        MmKind::Library {
            policies: library
                .checkpoints
                .iter()
                .map(|ck| FrozenRunner::new(ck.clone()))
                .collect(),
            active: 0,
        }
    } else {
        match method {
            ContextMethod::SinglePolicy { library_idx } => MmKind::Frozen(Box::new(
                FrozenRunner::new(library.checkpoints[*library_idx].clone()),
            )),
            ContextMethod::ClSingleP { lr } => {
                let mut h = hyper;
                h.lr = *lr;
                MmKind::Learner(Box::new(learner_from_checkpoint(&baseline, h, ClState::default())))
            }
            ContextMethod::ClFreezing => {
                let freeze = FreezeMask::freeze_all_but_last(&baseline.nets[0].spec, 1);
                let cl = ClState {
                    freeze: Some(freeze),
                    ..ClState::default()
                };
                MmKind::Learner(Box::new(learner_from_checkpoint(&baseline, hyper, cl)))
            }
            ContextMethod::ClRehearsal { gamma_mix } => {
                let cl = ClState {
                    rehearsal: Some((library.baseline_buffer.clone(), *gamma_mix)),
                    ..ClState::default()
                };
                MmKind::Learner(Box::new(learner_from_checkpoint(&baseline, hyper, cl)))
            }
            ContextMethod::ClEwc { lambda } => {
                let cl = ClState {
                    fisher: Some(library.baseline_fisher.0.clone()),
                    fisher2: Some(library.baseline_fisher.1.clone()),
                    ewc_lambda: *lambda,
                    ..ClState::default()
                };
                MmKind::Learner(Box::new(learner_from_checkpoint(&baseline, hyper, cl)))
            }
            _ => unreachable!(),
        }
    };
    MmHarness::new(
        &method.label(),
        kind,
        MM_ID_BASE,
        0,
        registry.agent_stream(MM_ID_BASE),
    )
}

/// Rebuilds a learner from a frozen checkpoint, continuing its scaler and
/// training greedily (exploration is injected per session by the driver).
fn learner_from_checkpoint(ck: &Checkpoint, hyper: DqnHyper, cl: ClState) -> LearnerState {
    let net = match ck.nets.len() {
        1 => LearnerNet::Dqn(DqnAgent {
            core: DqnCore::from_params(ck.nets[0].clone(), &hyper),
            hyper,
        }),
        2 => LearnerNet::Morl(M3orlAgent {
            q1: DqnCore::from_params(ck.nets[0].clone(), &hyper),
            q2: DqnCore::from_params(ck.nets[1].clone(), &hyper),
            w: ck.w,
            hyper,
        }),
        n => panic!("checkpoint with {n} networks"),
    };
    let reward = match ck.nets.len() {
        1 => RewardSpec::Single,
        _ => RewardSpec::MorlVector {
            alpha: ALPHA_INVENTORY,
        },
    };
    LearnerState {
        net,
        hyper,
        variant: ck.variant,
        ema_preset: ck.ema,
        ema: ck.ema.map(crate::state::EmaTracker::new),
        scaler: ck.scaler.clone(),
        buffer: ReplayBuffer::new(hyper.replay_capacity),
        schedule: EpsSchedule::greedy(),
        eps: 0.0,
        reward,
        cl,
        steps_seen: 0,
        learning: true,
    }
}

/// Runs one context-sequence experiment with the given adaptation method.
pub fn run_context_sequence(
    cfg: &ContextSeqConfig,
    library: &PolicyLibrary,
    method: &ContextMethod,
    hyper: DqnHyper,
) -> ContextSeqOutput {
    let registry = RngRegistry::new(cfg.master_seed);
    let exp = build_experimental_mm(method, library, hyper, &registry);
    let mut driver = ContextDriver::new(cfg.clone(), library, method.clone(), exp);
    let total_steps = driver.total_steps();
    let n_policies = library.checkpoints.len();
    let mut scheduler_stream = registry.agent_stream(MM_ID_BASE ^ 0xd75);

    let mut powdts_log = None;
    match method {
        ContextMethod::PowDts(pcfg) => {
            let log = powdts_run(&mut driver, n_policies, pcfg, &mut scheduler_stream, total_steps);
            powdts_log = Some(log);
        }
        ContextMethod::RandomBlocks(pcfg) => {
            // Same block cadence as the scheduler, but weights drawn
            // uniformly at random each cycle and no testing phase.
            let cycle = pcfg.rounds_exp * pcfg.exp_ts;
            let mut steps = 0u64;
            'outer: loop {
                let raw: Vec<f64> = (0..n_policies)
                    .map(|_| scheduler_stream.random_range(0.0..1.0) + 1e-9)
                    .collect();
                let total: f64 = raw.iter().sum();
                let weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
                let sections = sections_from_weights(&weights, pcfg.exp_ts);
                for ts in 0..cycle {
                    if steps >= total_steps {
                        break 'outer;
                    }
                    let policy = agent_for_timestep(&sections, ts);
                    PolicyEnv::step(&mut driver, policy);
                    steps += 1;
                }
            }
        }
        ContextMethod::RandomTimesteps => {
            for _ in 0..total_steps {
                let policy = scheduler_stream.random_range(0..n_policies);
                PolicyEnv::step(&mut driver, policy);
            }
        }
        _ => {
            for _ in 0..total_steps {
                ContextDriver::step(&mut driver);
            }
        }
    }
    assert!(driver.done, "context run should have consumed every session");

    // Aggregate the experimental MM's per-session summaries per context.
    let blend = |r1: f64, r2: f64| cfg.blend_w * r1 + (1.0 - cfg.blend_w) * r2;
    let exp_rows: Vec<&super::drivers::SessionSummary> = driver
        .log
        .session_summaries
        .iter()
        .filter(|s| s.mm_id == MM_ID_BASE)
        .collect();
    let mut per_context = Vec::new();
    for (ci, &count) in cfg.contexts.iter().enumerate() {
        let rows: Vec<_> = exp_rows
            .iter()
            .filter(|s| s.session / cfg.sessions_per_context == ci)
            .collect();
        let n = rows.len().max(1) as f64;
        per_context.push(ContextSummary {
            context_idx: ci,
            competitor_count: count,
            sessions: rows.len(),
            mean_blended_reward: rows.iter().map(|s| blend(s.mean_reward, s.mean_r2)).sum::<f64>() / n,
            mean_terminal_mtm: rows.iter().map(|s| s.terminal_mtm as f64).sum::<f64>() / n,
            mean_abs_inventory: rows.iter().map(|s| s.mean_abs_inventory).sum::<f64>() / n,
        });
    }
    let n = exp_rows.len().max(1) as f64;
    let aggregate = ContextSummary {
        context_idx: usize::MAX,
        competitor_count: 0,
        sessions: exp_rows.len(),
        mean_blended_reward: exp_rows
            .iter()
            .map(|s| blend(s.mean_reward, s.mean_r2))
            .sum::<f64>()
            / n,
        mean_terminal_mtm: exp_rows.iter().map(|s| s.terminal_mtm as f64).sum::<f64>() / n,
        mean_abs_inventory: exp_rows.iter().map(|s| s.mean_abs_inventory).sum::<f64>() / n,
    };

    ContextSeqOutput {
        method: method.label(),
        log: driver.log,
        per_context,
        aggregate,
        powdts: powdts_log,
    }
}
