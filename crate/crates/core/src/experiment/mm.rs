//! One experimental market maker: its account, controller (random,
//! persistent, learning, or frozen-policy), observation bookkeeping,
//! reward accounting, and checkpoint form.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use serde::Serialize;

use crate::action::{action_to_etas, etas_to_action, random_action, ActionIndex, EtaAction};
use crate::book::Price;
use crate::dealer::{execute_mm_trade, hedge, quote_from_etas, MmAccount, MmQuote};
use crate::nn::{forward, ParamSet};
use crate::replay::{rehearsal_sample, ReplayBuffer, Transition};
use crate::rewards::{
    reward_asym_damp, reward_full_inv, reward_morl_vector, reward_pnl_only, reward_rew,
    reward_rim, reward_single, AiifConfig, RewardTerms, RewardVector, ThresholdState,
    ALPHA_INVENTORY, DEFAULT_THRESHOLD_WINDOW,
};
use crate::rl::{
    argmax, morl_select_action, select_action, DqnHyper, EpsSchedule, M3orlAgent,
    RewardComponent, TrainMods,
};
use crate::rng::AgentRng;
use crate::session::MarketView;
use crate::state::{
    build_state_v10, build_state_v11, build_state_v8, EmaPreset, EmaTracker, MmObs,
    RunningScaler, StateVariant,
};

/// Which scalar (or vector) reward drives an MM's learning and headline
/// reward column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RewardSpec {
    /// `E + PnL - HgC`.
    Single,
    /// Inventory-managed reward with dynamic threshold penalty.
    Rim(AiifConfig),
    /// `E - lambda |inv| - HgC`.
    FullInv { lambda: f64 },
    /// `E + PnL - max(0, eta PnL) - HgC`.
    AsymDamp { eta: f64 },
    /// `E - HgC`.
    PnlOnly,
    /// Weighted scalarization of the two objectives.
    Rew { w: f64, alpha: f64 },
    /// The two-component vector itself (dual-head agents).
    MorlVector { alpha: f64 },
}

impl RewardSpec {
    /// Computes this step's reward vector. `r1` carries the scalar the
    /// agent trains on (for single-head specs); `r2` always carries the
    /// inventory objective for logging and dual-head training.
    fn compute(
        &self,
        terms: &RewardTerms,
        cash: i64,
        inventory: i64,
        mid: Price,
        threshold: &mut ThresholdState,
    ) -> RewardVector {
        let r2 = reward_morl_vector(terms, inventory, ALPHA_INVENTORY).r2;
        let r1 = match *self {
            RewardSpec::Single => reward_single(terms),
            RewardSpec::Rim(cfg) => reward_rim(terms, threshold, &cfg, cash, mid, inventory),
            RewardSpec::FullInv { lambda } => reward_full_inv(terms.e, inventory, terms.hgc, lambda),
            RewardSpec::AsymDamp { eta } => reward_asym_damp(terms.e, terms.pnl, terms.hgc, eta),
            RewardSpec::PnlOnly => reward_pnl_only(terms.e, terms.hgc),
            RewardSpec::Rew { w, alpha } => reward_rew(terms, inventory, w, alpha),
            RewardSpec::MorlVector { alpha } => {
                return reward_morl_vector(terms, inventory, alpha);
            }
        };
        RewardVector { r1, r2 }
    }
}

/// Per-step investor-trade counters from the MM's perspective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MmStepStats {
    pub buy_count: i64,
    pub buy_volume: i64,
    pub sell_count: i64,
    pub sell_volume: i64,
}

/// A frozen greedy policy: network snapshot(s), frozen standardizer, and
/// the feature layout they expect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub variant: StateVariant,
    /// One network for single-head agents, two (MtM head then inventory
    /// head) for dual-head agents.
    pub nets: Vec<ParamSet>,
    /// Action-selection blend weight; only meaningful with two heads.
    pub w: f64,
    pub scaler: RunningScaler,
    pub ema: Option<EmaPreset>,
}

impl Checkpoint {
    /// Greedy Q-values (blended when dual-headed) for a standardized state.
    fn values(&self, x: &[f64]) -> Vec<f64> {
        match self.nets.len() {
            1 => forward(&self.nets[0], x),
            2 => {
                let q1 = forward(&self.nets[0], x);
                let q2 = forward(&self.nets[1], x);
                q1.iter()
                    .zip(&q2)
                    .map(|(a, b)| self.w * a + (1.0 - self.w) * b)
                    .collect()
            }
            n => panic!("checkpoint with {n} networks"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointError {
    BadMagic,
    BadVersion(u32),
    Truncated,
    Malformed(String),
}

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "not a checkpoint (bad magic)"),
            CheckpointError::BadVersion(v) => write!(f, "unsupported checkpoint version {v}"),
            CheckpointError::Truncated => write!(f, "checkpoint truncated or corrupt"),
            CheckpointError::Malformed(m) => write!(f, "malformed checkpoint: {m}"),
        }
    }
}

const CKPT_MAGIC: &[u8; 4] = b"MMCK";
const CKPT_VERSION: u32 = 1;

/// Serializes a checkpoint: magic, version, variant tag, blend weight,
/// optional EMA preset, the length-prefixed network parameter blobs, and
/// the standardizer moments.
pub fn checkpoint_to_bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.push(match ck.variant {
        StateVariant::V8 => 8,
        StateVariant::V10 => 10,
        StateVariant::V11 => 11,
    });
    out.extend_from_slice(&ck.w.to_le_bytes());
    match ck.ema {
        None => out.push(0),
        Some(p) => {
            out.push(1);
            out.extend_from_slice(&p.long_steps.to_le_bytes());
            out.extend_from_slice(&p.short_steps.to_le_bytes());
            out.extend_from_slice(&(p.slope_lag_steps as u32).to_le_bytes());
        }
    }
    out.push(ck.nets.len() as u8);
    for net in &ck.nets {
        let blob = net.to_bytes();
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    out.extend_from_slice(&ck.scaler.count.to_le_bytes());
    out.extend_from_slice(&(ck.scaler.mean.len() as u32).to_le_bytes());
    for &m in ck.scaler.mean.iter().chain(ck.scaler.m2.iter()) {
        out.extend_from_slice(&m.to_le_bytes());
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    struct Reader<'a> {
        bytes: &'a [u8],
        at: usize,
    }
    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
            if self.at + n > self.bytes.len() {
                return Err(CheckpointError::Truncated);
            }
            let s = &self.bytes[self.at..self.at + n];
            self.at += n;
            Ok(s)
        }
        fn u8(&mut self) -> Result<u8, CheckpointError> {
            Ok(self.take(1)?[0])
        }
        fn u32(&mut self) -> Result<u32, CheckpointError> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }
        fn u64(&mut self) -> Result<u64, CheckpointError> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        fn f64(&mut self) -> Result<f64, CheckpointError> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
    }
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != CKPT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let variant = match r.u8()? {
        8 => StateVariant::V8,
        10 => StateVariant::V10,
        11 => StateVariant::V11,
        v => return Err(CheckpointError::Malformed(alloc::format!("state variant {v}"))),
    };
    let w = r.f64()?;
    let ema = match r.u8()? {
        0 => None,
        1 => Some(EmaPreset {
            long_steps: r.u32()?,
            short_steps: r.u32()?,
            slope_lag_steps: r.u32()? as usize,
        }),
        v => return Err(CheckpointError::Malformed(alloc::format!("ema tag {v}"))),
    };
    let n_nets = r.u8()? as usize;
    if n_nets == 0 || n_nets > 2 {
        return Err(CheckpointError::Malformed(alloc::format!("{n_nets} networks")));
    }
    let mut nets = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        let len = r.u64()? as usize;
        let blob = r.take(len)?;
        let net = ParamSet::from_bytes(blob, None)
            .map_err(|e| CheckpointError::Malformed(alloc::format!("{e}")))?;
        nets.push(net);
    }
    let count = r.u64()?;
    let arity = r.u32()? as usize;
    if arity != variant.arity() {
        return Err(CheckpointError::Malformed(alloc::format!(
            "scaler arity {arity} for variant of arity {}",
            variant.arity()
        )));
    }
    let mut mean = Vec::with_capacity(arity);
    for _ in 0..arity {
        mean.push(r.f64()?);
    }
    let mut m2 = Vec::with_capacity(arity);
    for _ in 0..arity {
        m2.push(r.f64()?);
    }
    if r.at != bytes.len() {
        return Err(CheckpointError::Truncated);
    }
    Ok(Checkpoint {
        variant,
        nets,
        w,
        scaler: RunningScaler { count, mean, m2 },
        ema,
    })
}

/// Which algorithm backs a learning MM.
#[derive(Debug, Clone)]
pub enum LearnerNet {
    Dqn(crate::rl::DqnAgent),
    Morl(M3orlAgent),
}

/// Continual-learning modifiers carried by a learner.
#[derive(Debug, Clone, Default)]
pub struct ClState {
    pub fisher: Option<crate::nn::FisherDiag>,
    /// Fisher matrices per head for dual-head agents (second head).
    pub fisher2: Option<crate::nn::FisherDiag>,
    pub ewc_lambda: f64,
    pub freeze: Option<crate::nn::FreezeMask>,
    /// Old-experience buffer plus mixing proportion for rehearsal.
    pub rehearsal: Option<(ReplayBuffer, f64)>,
}

/// A learning market maker's full mutable state.
pub struct LearnerState {
    pub net: LearnerNet,
    pub hyper: DqnHyper,
    pub variant: StateVariant,
    pub ema_preset: Option<EmaPreset>,
    pub ema: Option<EmaTracker>,
    pub scaler: RunningScaler,
    pub buffer: ReplayBuffer,
    pub schedule: EpsSchedule,
    pub eps: f64,
    pub reward: RewardSpec,
    pub cl: ClState,
    pub steps_seen: u64,
    /// When false the policy is evaluated greedily and nothing updates.
    pub learning: bool,
}

impl LearnerState {
    pub fn checkpoint(&self) -> Checkpoint {
        let (nets, w) = match &self.net {
            LearnerNet::Dqn(a) => (alloc::vec![a.core.target.clone()], 1.0),
            LearnerNet::Morl(a) => (
                alloc::vec![a.q1.target.clone(), a.q2.target.clone()],
                a.w,
            ),
        };
        Checkpoint {
            variant: self.variant,
            nets,
            w,
            scaler: self.scaler.clone(),
            ema: self.ema_preset,
        }
    }

    fn maybe_train(&mut self, stream: &mut AgentRng) {
        if !self.learning {
            return;
        }
        self.steps_seen += 1;
        if self.steps_seen % self.hyper.train_every != 0 || self.buffer.is_empty() {
            return;
        }
        for _ in 0..self.hyper.grad_steps_per_event.max(1) {
            // Rehearsal draws the batch from both buffers; otherwise sample
            // uniformly from the live buffer.
            let batch: Vec<&Transition> = match &self.cl.rehearsal {
                Some((old, gamma_mix)) => {
                    rehearsal_sample(old, &self.buffer, *gamma_mix, self.hyper.minibatch, stream)
                }
                None => self.buffer.sample(self.hyper.minibatch, stream),
            };
            match &mut self.net {
                LearnerNet::Dqn(agent) => {
                    let mods = TrainMods {
                        ewc: self.cl.fisher.as_ref().map(|f| (f, self.cl.ewc_lambda)),
                        freeze: self.cl.freeze.as_ref(),
                    };
                    agent.core.train_on_batch(&batch, RewardComponent::R1, mods);
                }
                LearnerNet::Morl(agent) => {
                    let mods1 = TrainMods {
                        ewc: self.cl.fisher.as_ref().map(|f| (f, self.cl.ewc_lambda)),
                        freeze: self.cl.freeze.as_ref(),
                    };
                    let mods2 = TrainMods {
                        ewc: self.cl.fisher2.as_ref().map(|f| (f, self.cl.ewc_lambda)),
                        freeze: self.cl.freeze.as_ref(),
                    };
                    agent.q1.train_on_batch(&batch, RewardComponent::R1, mods1);
                    agent.q2.train_on_batch(&batch, RewardComponent::R2, mods2);
                }
            }
        }
        match &mut self.net {
            LearnerNet::Dqn(agent) => agent.core.sync_target(),
            LearnerNet::Morl(agent) => {
                agent.q1.sync_target();
                agent.q2.sync_target();
            }
        }
    }
}

/// Controller behind one experimental MM.
pub enum MmKind {
    /// Uniform random action every step.
    Random,
    /// One random action drawn at session start and held for the session.
    Persistent { current: EtaAction },
    /// A learning agent (single- or dual-head).
    Learner(Box<LearnerState>),
    /// A frozen greedy policy.
    Frozen(Box<FrozenRunner>),
    /// A library of frozen policies with an externally switched active
    /// index (the policy-weighting scheduler drives it).
    Library {
        policies: Vec<FrozenRunner>,
        active: usize,
    },
}

/// Frozen checkpoint plus its per-session EMA tracker.
pub struct FrozenRunner {
    pub ck: Checkpoint,
    pub ema: Option<EmaTracker>,
}

impl FrozenRunner {
    pub fn new(ck: Checkpoint) -> Self {
        let ema = ck.ema.map(EmaTracker::new);
        Self { ck, ema }
    }

    fn act(&mut self, obs: &MmObs, mid: Price) -> EtaAction {
        let raw = build_raw_state(self.ck.variant, obs, &mut self.ema, mid);
        let x = self.ck.scaler.apply(&raw);
        let q = self.ck.values(&x);
        action_to_etas(argmax(&q) as ActionIndex).expect("in range")
    }
}

/// Builds the raw (unstandardized) feature vector for a variant, feeding
/// the EMA tracker when the variant uses trend features.
fn build_raw_state(
    variant: StateVariant,
    obs: &MmObs,
    ema: &mut Option<EmaTracker>,
    mid: Price,
) -> Vec<f64> {
    match variant {
        StateVariant::V8 => build_state_v8(obs).values,
        StateVariant::V10 => build_state_v10(obs).values,
        StateVariant::V11 => {
            let tracker = ema.as_mut().expect("v11 requires an EMA tracker");
            let (l, s, slope) = tracker.observe(mid.ticks() as f64);
            build_state_v11(obs, l, s, slope).values
        }
    }
}

/// One row of the per-step MM log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmStepRow {
    pub session: usize,
    pub step: u64,
    pub mm_id: u64,
    pub eta_b: f64,
    pub eta_s: f64,
    pub eta_h: f64,
    pub buys: i64,
    pub sells: i64,
    pub inventory: i64,
    pub cash: i64,
    pub mtm: i64,
    pub e: i64,
    pub pnl: i64,
    pub hgc: i64,
    pub r1: f64,
    pub r2: f64,
}

/// An experimental market maker wired into the dealer pipeline.
pub struct MmHarness {
    pub label: String,
    pub kind: MmKind,
    pub account: MmAccount,
    pub stream: AgentRng,
    pub reward: RewardSpec,
    pub quote: MmQuote,
    pending_hedge: u8,
    current_action: EtaAction,
    threshold: ThresholdState,
    terms: RewardTerms,
    // Observation bookkeeping.
    prev_stats: MmStepStats,
    curr_stats: MmStepStats,
    inv_prev: i64,
    spread_prev: i64,
    // Transition bookkeeping (learners only).
    last_sa: Option<(Vec<f64>, ActionIndex)>,
    pub last_reward: RewardVector,
    // Session accumulators.
    pub acc_r1: f64,
    pub acc_r2: f64,
    pub acc_abs_inv: f64,
    pub acc_ratio: f64,
    pub acc_e: i64,
    pub acc_hgc: i64,
    pub steps_in_session: u64,
}

impl MmHarness {
    pub fn new(label: &str, kind: MmKind, id: u64, opening_cash: i64, stream: AgentRng) -> Self {
        let reward = match &kind {
            MmKind::Learner(l) => l.reward,
            _ => RewardSpec::Single,
        };
        Self {
            label: String::from(label),
            kind,
            account: MmAccount::new(id, opening_cash),
            stream,
            reward,
            quote: MmQuote::default(),
            pending_hedge: 0,
            current_action: EtaAction::new(5, 5, 0),
            threshold: ThresholdState::new(DEFAULT_THRESHOLD_WINDOW),
            terms: RewardTerms::default(),
            prev_stats: MmStepStats::default(),
            curr_stats: MmStepStats::default(),
            inv_prev: 0,
            spread_prev: 0,
            last_sa: None,
            last_reward: RewardVector::default(),
            acc_r1: 0.0,
            acc_r2: 0.0,
            acc_abs_inv: 0.0,
            acc_ratio: 0.0,
            acc_e: 0,
            acc_hgc: 0,
            steps_in_session: 0,
        }
    }

    /// Resets per-session state: account, bookkeeping, exploration rate,
    /// the persistent action redraw, and EMA trackers.
    pub fn begin_session(&mut self, session_idx: usize, opening_cash: i64, stream: AgentRng) {
        self.account = MmAccount::new(self.account.id, opening_cash);
        self.stream = stream;
        self.quote = MmQuote::default();
        self.pending_hedge = 0;
        self.threshold = ThresholdState::new(DEFAULT_THRESHOLD_WINDOW);
        self.terms = RewardTerms::default();
        self.prev_stats = MmStepStats::default();
        self.curr_stats = MmStepStats::default();
        self.inv_prev = 0;
        self.spread_prev = 0;
        self.last_sa = None;
        self.last_reward = RewardVector::default();
        self.acc_r1 = 0.0;
        self.acc_r2 = 0.0;
        self.acc_abs_inv = 0.0;
        self.acc_ratio = 0.0;
        self.acc_e = 0;
        self.acc_hgc = 0;
        self.steps_in_session = 0;
        match &mut self.kind {
            MmKind::Persistent { current } => *current = random_action(&mut self.stream),
            MmKind::Learner(l) => {
                l.eps = if l.learning { l.schedule.eps_at(session_idx) } else { 0.0 };
                if let Some(preset) = l.ema_preset {
                    l.ema = Some(EmaTracker::new(preset));
                }
            }
            MmKind::Frozen(f) => {
                if let Some(preset) = f.ck.ema {
                    f.ema = Some(EmaTracker::new(preset));
                }
            }
            MmKind::Library { policies, .. } => {
                for p in policies.iter_mut() {
                    if let Some(preset) = p.ck.ema {
                        p.ema = Some(EmaTracker::new(preset));
                    }
                }
            }
            MmKind::Random => {}
        }
    }

    /// Overrides the exploration rate (exploration-round variants).
    pub fn set_eps(&mut self, eps: f64) {
        if let MmKind::Learner(l) = &mut self.kind {
            l.eps = eps;
        }
    }

    /// Selects the active library policy (policy-weighting scheduler).
    pub fn set_active_policy(&mut self, idx: usize) {
        if let MmKind::Library { policies, active } = &mut self.kind {
            assert!(idx < policies.len());
            *active = idx;
        }
    }

    /// Phase 1 of the dealer stage: revalue inventory over the mid move
    /// and execute the hedge chosen last step.
    pub fn revalue_and_hedge(&mut self, view: &MarketView) {
        let pnl = self.account.inventory * (view.mid.ticks() - view.prev_mid.ticks());
        let hres = hedge(&mut self.account, self.pending_hedge, view.spread, view.mid);
        self.terms = RewardTerms {
            e: 0,
            pnl,
            hgc: hres.cost,
        };
    }

    /// Phase 2: observe, store the pending transition, pick this step's
    /// action, and quote.
    pub fn observe_and_act(&mut self, view: &MarketView) {
        let obs = MmObs {
            buy_count_prev: self.prev_stats.buy_count,
            buy_volume_prev: self.prev_stats.buy_volume,
            sell_count_prev: self.prev_stats.sell_count,
            sell_volume_prev: self.prev_stats.sell_volume,
            inv_now: self.account.inventory,
            inv_prev: self.inv_prev,
            delta_mid: view.mid.ticks() - view.prev_mid.ticks(),
            spread_now: view.spread,
            spread_prev: self.spread_prev,
            volume_prev: self.prev_stats.buy_volume + self.prev_stats.sell_volume,
        };
        let action = match &mut self.kind {
            MmKind::Random => random_action(&mut self.stream),
            MmKind::Persistent { current } => *current,
            MmKind::Frozen(f) => f.act(&obs, view.mid),
            MmKind::Library { policies, active } => policies[*active].act(&obs, view.mid),
            MmKind::Learner(l) => {
                let raw = build_raw_state(l.variant, &obs, &mut l.ema, view.mid);
                let x = if l.learning {
                    l.scaler.update_apply(&raw)
                } else {
                    l.scaler.apply(&raw)
                };
                if l.learning {
                    if let Some((s_prev, a_prev)) = self.last_sa.take() {
                        l.buffer.push(Transition {
                            state: s_prev,
                            action: a_prev,
                            next_state: x.clone(),
                            r: self.last_reward,
                        });
                    }
                }
                let idx = match &l.net {
                    LearnerNet::Dqn(agent) => {
                        select_action(&agent.core.q_values(&x), l.eps, &mut self.stream)
                    }
                    LearnerNet::Morl(agent) => morl_select_action(
                        &agent.q1.q_values(&x),
                        &agent.q2.q_values(&x),
                        agent.w,
                        l.eps,
                        &mut self.stream,
                    ),
                };
                self.last_sa = Some((x, idx));
                action_to_etas(idx).expect("in range")
            }
        };
        self.current_action = action;
        self.quote = quote_from_etas(view.spread, &action);
        self.pending_hedge = action.hedge;
        self.inv_prev = self.account.inventory;
        self.spread_prev = view.spread;
    }

    /// Phase 3 callback: an investor order was routed here and executed.
    pub fn record_trade(&mut self, investor_side: crate::book::Side, qty: i64, mid: Price) {
        let earned = execute_mm_trade(&mut self.account, investor_side, qty, &self.quote, mid);
        self.terms.e += earned;
        match investor_side {
            // Investor buys -> the MM sold shares.
            crate::book::Side::Buy => {
                self.curr_stats.sell_count += 1;
                self.curr_stats.sell_volume += qty;
            }
            crate::book::Side::Sell => {
                self.curr_stats.buy_count += 1;
                self.curr_stats.buy_volume += qty;
            }
        }
    }

    /// Phase 4: compute the step's reward, run any training cadence, and
    /// roll the per-step counters.
    pub fn finalize_step(&mut self, view: &MarketView, session: usize, row_sink: &mut Option<&mut Vec<MmStepRow>>) {
        let r = self.reward.compute(
            &self.terms,
            self.account.cash,
            self.account.inventory,
            view.mid,
            &mut self.threshold,
        );
        self.last_reward = r;
        self.acc_r1 += r.r1;
        self.acc_r2 += r.r2;
        self.acc_abs_inv += self.account.inventory.abs() as f64;
        let inv_value = (self.account.inventory.abs() * view.mid.ticks()).max(1);
        self.acc_ratio += self.account.cash.abs() as f64 / inv_value as f64;
        self.acc_e += self.terms.e;
        self.acc_hgc += self.terms.hgc;
        self.steps_in_session += 1;

        if let Some(rows) = row_sink {
            rows.push(MmStepRow {
                session,
                step: view.step,
                mm_id: self.account.id,
                eta_b: self.current_action.eta_buy(),
                eta_s: self.current_action.eta_sell(),
                eta_h: self.current_action.eta_hedge(),
                buys: self.curr_stats.buy_volume,
                sells: self.curr_stats.sell_volume,
                inventory: self.account.inventory,
                cash: self.account.cash,
                mtm: self.account.mark_to_market(view.mid),
                e: self.terms.e,
                pnl: self.terms.pnl,
                hgc: self.terms.hgc,
                r1: r.r1,
                r2: r.r2,
            });
        }

        if let MmKind::Learner(l) = &mut self.kind {
            l.maybe_train(&mut self.stream);
        }
        self.prev_stats = core::mem::take(&mut self.curr_stats);
    }

    /// The current action encoded as its index (for logs).
    pub fn action_index(&self) -> ActionIndex {
        etas_to_action(self.current_action)
    }
}
