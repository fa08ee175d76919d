//! DQN machinery: the exploration schedule, epsilon-greedy action
//! selection (plain and weight-blended two-objective form), and the
//! train/target network pair with its bootstrapped regression step.
//!
//! The task is non-episodic, so every bootstrap uses the non-terminal
//! target `y = r + gamma * max_a' Q_target(s', a')`. After each training
//! event the train network is copied to the target network, and the target
//! network is the one that selects greedy actions.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionIndex;
use crate::nn::{adam_step, forward, grad, AdamState, FisherDiag, FreezeMask, GradSample, LossKind, NetSpec, ParamSet};
use crate::replay::{ReplayBuffer, Transition};
use crate::rewards::RewardVector;

/// Exploration rate schedule: multiplicative decay per session from
/// `start` to the `min` floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub start: f64,
    pub min: f64,
    pub decay: f64,
}

impl EpsSchedule {
    pub const DEFAULT_START: f64 = 0.99;
    pub const DEFAULT_MIN: f64 = 0.01;

    /// A schedule whose decay reaches the floor exactly at the last of
    /// `sessions` training sessions.
    pub fn sized_for_sessions(sessions: usize) -> Self {
        let (start, min) = (Self::DEFAULT_START, Self::DEFAULT_MIN);
        let decay = if sessions <= 1 {
            0.0
        } else {
            libm::pow(min / start, 1.0 / (sessions - 1) as f64)
        };
        Self { start, min, decay }
    }

    /// Epsilon for the given session index (0-based), floored at `min`.
    pub fn eps_at(&self, session: usize) -> f64 {
        (self.start * libm::pow(self.decay, session as f64)).max(self.min)
    }

    /// A schedule pinned at zero: always greedy.
    pub fn greedy() -> Self {
        Self {
            start: 0.0,
            min: 0.0,
            decay: 0.0,
        }
    }
}

/// Index of the maximum value; ties break to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy selection over a Q-value vector.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], eps: f64, stream: &mut R) -> ActionIndex {
    debug_assert!((0.0..=1.0).contains(&eps));
    if eps > 0.0 && stream.random_bool(eps) {
        stream.random_range(0..q_values.len()) as ActionIndex
    } else {
        argmax(q_values) as ActionIndex
    }
}

/// Epsilon-greedy selection over the `w`-blended value vector
/// `w * q1 + (1 - w) * q2`.
pub fn morl_select_action<R: Rng + ?Sized>(
    q1: &[f64],
    q2: &[f64],
    w: f64,
    eps: f64,
    stream: &mut R,
) -> ActionIndex {
    debug_assert!((0.0..=1.0).contains(&w));
    debug_assert_eq!(q1.len(), q2.len());
    let blended: Vec<f64> = q1
        .iter()
        .zip(q2)
        .map(|(a, b)| w * a + (1.0 - w) * b)
        .collect();
    select_action(&blended, eps, stream)
}

/// Which component of the reward vector a network head trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardComponent {
    R1,
    R2,
}

impl RewardComponent {
    pub fn extract(self, r: &RewardVector) -> f64 {
        match self {
            RewardComponent::R1 => r.r1,
            RewardComponent::R2 => r.r2,
        }
    }
}

/// Training hyperparameters. Defaults: gamma 0.6, lr 0.01, refit every 200
/// steps on 1,024-sample minibatches, MAE loss, 1M replay slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqnHyper {
    pub gamma: f64,
    pub lr: f64,
    pub train_every: u64,
    pub minibatch: usize,
    /// Minibatch gradient steps per training event (epoch-style refits;
    /// the target network stays fixed within an event).
    pub grad_steps_per_event: usize,
    /// Factor applied to rewards when building regression targets, so
    /// Q-values live on a scale the optimizer can reach (tick-denominated
    /// rewards are 100x dollar scale). Action selection is unaffected:
    /// rescaling both heads by a common factor never changes the argmax.
    pub reward_scale: f64,
    pub loss: LossKind,
    pub replay_capacity: usize,
}

impl Default for DqnHyper {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            lr: 0.01,
            train_every: 200,
            minibatch: 1024,
            grad_steps_per_event: 1,
            reward_scale: 1.0,
            loss: LossKind::Mae,
            replay_capacity: ReplayBuffer::DEFAULT_CAPACITY,
        }
    }
}

/// Optional continual-learning modifiers applied during a training step.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainMods<'a> {
    /// Quadratic anchor penalty added to the loss gradient.
    pub ewc: Option<(&'a FisherDiag, f64)>,
    /// Parameters that must not move.
    pub freeze: Option<&'a FreezeMask>,
}

/// One train/target network pair regressing one reward component.
#[derive(Debug, Clone)]
pub struct DqnCore {
    pub train: ParamSet,
    pub target: ParamSet,
    pub adam: AdamState,
    pub loss: LossKind,
    pub gamma: f64,
    pub reward_scale: f64,
}

impl DqnCore {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, hyper: &DqnHyper, stream: &mut R) -> Self {
        let train = ParamSet::init(spec, stream);
        let target = train.clone();
        let adam = AdamState::new(train.values.len(), hyper.lr);
        Self {
            train,
            target,
            adam,
            loss: hyper.loss,
            gamma: hyper.gamma,
            reward_scale: hyper.reward_scale,
        }
    }

    pub fn from_params(params: ParamSet, hyper: &DqnHyper) -> Self {
        let adam = AdamState::new(params.values.len(), hyper.lr);
        Self {
            target: params.clone(),
            train: params,
            adam,
            loss: hyper.loss,
            gamma: hyper.gamma,
            reward_scale: hyper.reward_scale,
        }
    }

    /// Q-values used for action selection (the target network, which
    /// equals the train network right after every sync).
    pub fn q_values(&self, x: &[f64]) -> Vec<f64> {
        forward(&self.target, x)
    }

    /// One bootstrapped regression step on a batch: builds non-terminal
    /// targets from the target network, takes one Adam step on the selected
    /// loss, and returns that loss. Does not sync the target network.
    pub fn train_on_batch(
        &mut self,
        batch: &[&Transition],
        component: RewardComponent,
        mods: TrainMods<'_>,
    ) -> f64 {
        assert!(!batch.is_empty());
        let targets: Vec<f64> = batch
            .iter()
            .map(|t| {
                let next_q = forward(&self.target, &t.next_state);
                component.extract(&t.r) * self.reward_scale + self.gamma * next_q[argmax(&next_q)]
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
        let loss_value = crate::nn::batch_loss(&self.train, &samples, self.loss);
        let mut g = grad(&self.train, &samples, self.loss);
        if let Some((fisher, lambda)) = mods.ewc {
            let (_, penalty_grad) = crate::nn::ewc_penalty_and_grad(&self.train, fisher, lambda);
            for (gi, pi) in g.iter_mut().zip(&penalty_grad) {
                *gi += pi;
            }
        }
        adam_step(&mut self.train, &g, &mut self.adam, mods.freeze);
        loss_value
    }

    pub fn sync_target(&mut self) {
        self.target = self.train.clone();
    }
}

/// Single-objective DQN agent: one network pair over the scalar reward
/// (stored in the `r1` slot).
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub core: DqnCore,
    pub hyper: DqnHyper,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, hyper: DqnHyper, stream: &mut R) -> Self {
        Self {
            core: DqnCore::new(spec, &hyper, stream),
            hyper,
        }
    }

    /// One training event: `grad_steps_per_event` minibatch steps against
    /// a fixed target network, then a target sync. Returns the first
    /// minibatch's pre-step loss. Call every `hyper.train_every` steps
    /// with a non-empty buffer.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        stream: &mut R,
        mods: TrainMods<'_>,
    ) -> f64 {
        let mut first_loss = 0.0;
        for i in 0..self.hyper.grad_steps_per_event.max(1) {
            let batch = buffer.sample(self.hyper.minibatch, stream);
            let loss = self.core.train_on_batch(&batch, RewardComponent::R1, mods);
            if i == 0 {
                first_loss = loss;
            }
        }
        self.core.sync_target();
        first_loss
    }
}

/// Two independent DQN blocks sharing state and action spaces: one head per
/// objective, trained only on its own reward component. The selection
/// weight `w` blends the two value vectors at action-selection time only.
#[derive(Debug, Clone)]
pub struct M3orlAgent {
    pub q1: DqnCore,
    pub q2: DqnCore,
    pub w: f64,
    pub hyper: DqnHyper,
}

impl M3orlAgent {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, w: f64, hyper: DqnHyper, stream: &mut R) -> Self {
        assert!((0.0..=1.0).contains(&w));
        Self {
            q1: DqnCore::new(spec.clone(), &hyper, stream),
            q2: DqnCore::new(spec, &hyper, stream),
            w,
            hyper,
        }
    }

    /// Epsilon-greedy action over the blended heads.
    pub fn select<R: Rng + ?Sized>(&self, x: &[f64], eps: f64, stream: &mut R) -> ActionIndex {
        morl_select_action(&self.q1.q_values(x), &self.q2.q_values(x), self.w, eps, stream)
    }

    /// One training event over both heads: each minibatch trains each head
    /// on its own reward component only, targets stay fixed within the
    /// event, and both target networks sync at the end. The selection
    /// weight plays no role here.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        stream: &mut R,
        mods: TrainMods<'_>,
    ) -> (f64, f64) {
        let mut first = (0.0, 0.0);
        for i in 0..self.hyper.grad_steps_per_event.max(1) {
            let batch = buffer.sample(self.hyper.minibatch, stream);
            let loss1 = self.q1.train_on_batch(&batch, RewardComponent::R1, mods);
            let loss2 = self.q2.train_on_batch(&batch, RewardComponent::R2, mods);
            if i == 0 {
                first = (loss1, loss2);
            }
        }
        self.q1.sync_target();
        self.q2.sync_target();
        first
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngRegistry;
    use alloc::vec;

    #[test]
    fn schedule_monotone_and_floored() {
        let sched = EpsSchedule::sized_for_sessions(250);
        let mut prev = f64::INFINITY;
        for s in 0..300 {
            let e = sched.eps_at(s);
            assert!(e <= prev && (EpsSchedule::DEFAULT_MIN..=EpsSchedule::DEFAULT_START).contains(&e));
            prev = e;
        }
        assert_eq!(sched.eps_at(0), 0.99);
        assert!((sched.eps_at(249) - 0.01).abs() < 1e-12);
        assert_eq!(sched.eps_at(299), 0.01);
    }

    #[test]
    fn greedy_when_eps_zero() {
        let mut stream = RngRegistry::new(1).agent_stream(0);
        let q = [0.0, 3.0, 2.0];
        for _ in 0..100 {
            assert_eq!(select_action(&q, 0.0, &mut stream), 1);
        }
    }

    #[test]
    fn argmax_tie_breaks_low() {
        let q = [0.0, 0.0, 5.0, 1.0, 5.0, 0.0, 0.0, 5.0];
        assert_eq!(argmax(&q), 2);
    }

    #[test]
    fn uniform_when_eps_one() {
        let mut stream = RngRegistry::new(2).agent_stream(0);
        let q = [0.0; 10];
        let mut counts = [0u32; 10];
        let n = 50_000;
        for _ in 0..n {
            counts[select_action(&q, 1.0, &mut stream) as usize] += 1;
        }
        for &c in &counts {
            let frac = f64::from(c) / n as f64;
            assert!((frac - 0.1).abs() < 0.01, "arm fraction {frac}");
        }
    }

    #[test]
    fn morl_selection_extremes() {
        let mut stream = RngRegistry::new(3).agent_stream(0);
        let q1 = [5.0, 0.0, 0.0];
        let q2 = [0.0, 0.0, 7.0];
        assert_eq!(morl_select_action(&q1, &q2, 1.0, 0.0, &mut stream), 0);
        assert_eq!(morl_select_action(&q1, &q2, 0.0, 0.0, &mut stream), 2);
    }

    #[test]
    fn blend_argmax_invariant_under_common_scaling() {
        let mut stream = RngRegistry::new(4).agent_stream(0);
        let q1 = [0.4, -0.3, 1.2, 0.9];
        let q2 = [-0.2, 0.8, 0.1, 0.5];
        for w in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let base = morl_select_action(&q1, &q2, w, 0.0, &mut stream);
            let q1s: Vec<f64> = q1.iter().map(|&v| v * 37.5).collect();
            let q2s: Vec<f64> = q2.iter().map(|&v| v * 37.5).collect();
            assert_eq!(morl_select_action(&q1s, &q2s, w, 0.0, &mut stream), base);
        }
    }

    fn bandit_buffer(n_actions: usize, rewarded: ActionIndex, arms_seen: &[ActionIndex]) -> ReplayBuffer {
        let mut buf = ReplayBuffer::new(10_000);
        let state = vec![1.0];
        for &a in arms_seen {
            let _ = n_actions;
            buf.push(Transition {
                state: state.clone(),
                action: a,
                next_state: state.clone(),
                r: RewardVector {
                    r1: if a == rewarded { 1.0 } else { 0.0 },
                    r2: 0.0,
                },
            });
        }
        buf
    }

    #[test]
    fn gamma_zero_is_supervised_regression() {
        let mut stream = RngRegistry::new(5).agent_stream(0);
        let hyper = DqnHyper {
            gamma: 0.0,
            minibatch: 16,
            loss: LossKind::Mse,
            ..DqnHyper::default()
        };
        let spec = NetSpec::new(vec![1, 8, 3]);
        let mut agent = DqnAgent::new(spec, hyper, &mut stream);
        let arms: Vec<ActionIndex> = (0..300).map(|i| (i % 3) as ActionIndex).collect();
        let buf = bandit_buffer(3, 1, &arms);
        for _ in 0..500 {
            agent.train_step(&buf, &mut stream, TrainMods::default());
        }
        let q = agent.core.q_values(&[1.0]);
        // With gamma = 0 the fixed point is the raw rewards (1 on arm 1).
        assert!((q[1] - 1.0).abs() < 0.05, "q = {q:?}");
        assert!(q[0].abs() < 0.05 && q[2].abs() < 0.05, "q = {q:?}");
    }

    #[test]
    fn constant_reward_bandit_reaches_geometric_fixed_point() {
        // Single state, every action rewarded 1, gamma 0.6: Q converges to
        // r / (1 - gamma) = 2.5 within 1%.
        let mut stream = RngRegistry::new(6).agent_stream(0);
        let hyper = DqnHyper {
            minibatch: 32,
            loss: LossKind::Mse,
            ..DqnHyper::default()
        };
        let spec = NetSpec::new(vec![1, 8, 2]);
        let mut agent = DqnAgent::new(spec, hyper, &mut stream);
        let mut buf = ReplayBuffer::new(1000);
        for i in 0..200 {
            buf.push(Transition {
                state: vec![1.0],
                action: (i % 2) as ActionIndex,
                next_state: vec![1.0],
                r: RewardVector { r1: 1.0, r2: 0.0 },
            });
        }
        for _ in 0..2000 {
            agent.train_step(&buf, &mut stream, TrainMods::default());
        }
        let q = agent.core.q_values(&[1.0]);
        for &v in &q {
            assert!((v - 2.5).abs() < 0.025, "q = {q:?}");
        }
    }

    #[test]
    fn loss_decreases_on_frozen_batch() {
        let mut stream = RngRegistry::new(7).agent_stream(0);
        let hyper = DqnHyper {
            gamma: 0.0,
            minibatch: 8,
            ..DqnHyper::default()
        };
        let spec = NetSpec::new(vec![2, 16, 4]);
        let mut agent = DqnAgent::new(spec, hyper, &mut stream);
        let mut buf = ReplayBuffer::new(8);
        for i in 0..8 {
            buf.push(Transition {
                state: vec![i as f64 / 8.0, 1.0],
                action: (i % 4) as ActionIndex,
                next_state: vec![0.0, 0.0],
                r: RewardVector { r1: (i as f64) - 4.0, r2: 0.0 },
            });
        }
        let first = agent.train_step(&buf, &mut stream, TrainMods::default());
        let mut last = first;
        for _ in 0..99 {
            last = agent.train_step(&buf, &mut stream, TrainMods::default());
        }
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn morl_heads_decouple_and_ignore_w() {
        // Two agents with identical seeds but different w and different r2
        // streams: Q1 training is identical in both.
        let make = |w: f64, r2: f64| -> M3orlAgent {
            let mut stream = RngRegistry::new(8).agent_stream(0);
            let hyper = DqnHyper {
                minibatch: 8,
                ..DqnHyper::default()
            };
            let spec = NetSpec::new(vec![1, 8, 3]);
            let mut agent = M3orlAgent::new(spec, w, hyper, &mut stream);
            let mut buf = ReplayBuffer::new(64);
            for i in 0..64 {
                buf.push(Transition {
                    state: vec![1.0],
                    action: (i % 3) as ActionIndex,
                    next_state: vec![1.0],
                    r: RewardVector { r1: 0.5, r2 },
                });
            }
            let mut train_stream = RngRegistry::new(9).agent_stream(1);
            for _ in 0..20 {
                agent.train_step(&buf, &mut train_stream, TrainMods::default());
            }
            agent
        };
        let a = make(0.9, -3.0);
        let b = make(0.1, 42.0);
        assert_eq!(a.q1.train.values, b.q1.train.values);
        assert_ne!(a.q2.train.values, b.q2.train.values);
    }

    #[test]
    fn zero_r2_stream_drives_q2_to_zero() {
        let mut stream = RngRegistry::new(10).agent_stream(0);
        let hyper = DqnHyper {
            minibatch: 16,
            loss: LossKind::Mse,
            ..DqnHyper::default()
        };
        let spec = NetSpec::new(vec![1, 8, 2]);
        let mut agent = M3orlAgent::new(spec, 0.5, hyper, &mut stream);
        let mut buf = ReplayBuffer::new(100);
        for i in 0..100 {
            buf.push(Transition {
                state: vec![1.0],
                action: (i % 2) as ActionIndex,
                next_state: vec![1.0],
                r: RewardVector { r1: 1.0, r2: 0.0 },
            });
        }
        for _ in 0..1500 {
            agent.train_step(&buf, &mut stream, TrainMods::default());
        }
        let q2 = agent.q2.q_values(&[1.0]);
        for &v in &q2 {
            assert!(v.abs() < 0.05, "q2 = {q2:?}");
        }
    }
}
