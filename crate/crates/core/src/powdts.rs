//! Policy weighting through discounted Thompson sampling: a scheduler that
//! allocates contiguous time sections to pre-trained greedy policies in
//! proportion to Beta-bandit weights, recalibrated periodically against
//! measured per-policy rewards.
//!
//! One cycle: a recalibration phase tests every policy greedily for
//! `rounds_recal` steps and records its summed reward; the top policy is
//! the winner; a Thompson draw over the Beta coefficients picks a predicted
//! best, coefficients update with geometric discounting (the sampled
//! policy's success/failure counter grows depending on whether it matched
//! the winner), and the weights derived from the coefficient means carve
//! the `exp_ts`-step exploitation horizon into per-policy sections. The
//! scheduler then exploits for `rounds_exp` rounds of `exp_ts` steps, with
//! the step index wrapping modulo `exp_ts`, before the next recalibration.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::Serialize;

/// Floor keeping discounted coefficients strictly positive in floats.
const COEF_FLOOR: f64 = 1e-12;

/// Per-policy Beta(a, b) bookkeeping; initialized flat at (1, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaCoefs {
    pub pairs: Vec<(f64, f64)>,
}

impl BetaCoefs {
    pub fn flat(n_policies: usize) -> Self {
        assert!(n_policies > 0);
        Self {
            pairs: alloc::vec![(1.0, 1.0); n_policies],
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Contiguous half-open step ranges assigned to each policy, covering
/// `[0, exp_ts)` in policy order.
pub type Sections = Vec<(u64, u64)>;

/// Scheduler parameters. Defaults: increments 1, discount 0.4, recalibrate
/// every 3 exploitation rounds, 150 test steps per policy, 750-step
/// exploitation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowDtsCfg {
    pub alpha_inc: f64,
    pub beta_inc: f64,
    pub gamma: f64,
    /// Exploitation rounds (each `exp_ts` steps) between recalibrations.
    pub rounds_exp: u64,
    /// Greedy test steps per policy during recalibration.
    pub rounds_recal: u64,
    /// Exploitation horizon carved into sections.
    pub exp_ts: u64,
}

impl Default for PowDtsCfg {
    fn default() -> Self {
        Self {
            alpha_inc: 1.0,
            beta_inc: 1.0,
            gamma: 0.4,
            rounds_exp: 3,
            rounds_recal: 150,
            exp_ts: 750,
        }
    }
}

/// One Beta sample per policy; returns the argmax index. Underflowed
/// samples (both Gamma draws zero at vanishing shapes) fall back to the
/// coefficient mean. Exactly tied samples only occur through float
/// saturation at 0/1 (a continuous draw ties with probability zero), so
/// ties break uniformly at random.
pub fn sample_best<R: Rng + ?Sized>(coefs: &BetaCoefs, stream: &mut R) -> usize {
    assert!(!coefs.is_empty());
    let samples: Vec<f64> = coefs
        .pairs
        .iter()
        .map(|&(a, b)| {
            let draw = Beta::new(a, b)
                .map(|d| d.sample(stream))
                .unwrap_or(f64::NAN);
            if draw.is_nan() {
                a / (a + b)
            } else {
                draw
            }
        })
        .collect();
    let best = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i] == best)
        .collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[stream.random_range(0..tied.len())]
    }
}

/// Discounted Thompson update. The sampled policy's success counter grows
/// when the draw matched the measured winner, its failure counter when it
/// did not; every coefficient is then discounted by `gamma`:
/// sampled == winner: `(a, b) <- (gamma * (a + alpha_inc), gamma * b)`
/// sampled != winner: sampled gets `(gamma * a, gamma * (b + beta_inc))`
/// all other policies: `(gamma * a, gamma * b)`.
pub fn update_coefs(coefs: &mut BetaCoefs, winner_idx: usize, sampled_idx: usize, cfg: &PowDtsCfg) {
    assert!(winner_idx < coefs.len() && sampled_idx < coefs.len());
    for (i, pair) in coefs.pairs.iter_mut().enumerate() {
        let (mut a, mut b) = *pair;
        if i == sampled_idx {
            if i == winner_idx {
                a += cfg.alpha_inc;
            } else {
                b += cfg.beta_inc;
            }
        }
        a *= cfg.gamma;
        b *= cfg.gamma;
        *pair = (a.max(COEF_FLOOR), b.max(COEF_FLOOR));
    }
}

/// Normalized coefficient means: `w_i = (a_i/(a_i+b_i)) / sum_j (...)`.
pub fn weights_from_coefs(coefs: &BetaCoefs) -> Vec<f64> {
    let means: Vec<f64> = coefs.pairs.iter().map(|&(a, b)| a / (a + b)).collect();
    let total: f64 = means.iter().sum();
    means.iter().map(|m| m / total).collect()
}

/// Carves `[0, exp_ts)` into consecutive sections with boundaries at the
/// half-up-rounded cumulative weights, so lengths accumulate without
/// overshooting the horizon.
pub fn sections_from_weights(weights: &[f64], exp_ts: u64) -> Sections {
    debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let mut sections = Vec::with_capacity(weights.len());
    let mut cumulative = 0.0;
    let mut start = 0u64;
    for &w in weights {
        cumulative += w;
        let end = libm::floor(exp_ts as f64 * cumulative + 0.5) as u64;
        let end = end.min(exp_ts);
        sections.push((start, end));
        start = end;
    }
    // Rounding of the final cumulative weight (1.0) lands exactly on the
    // horizon, so the last section always closes it.
    if let Some(last) = sections.last_mut() {
        last.1 = exp_ts;
    }
    sections
}

/// The policy whose section contains `ts`; the step index wraps modulo the
/// horizon across exploitation rounds.
pub fn agent_for_timestep(sections: &Sections, ts: u64) -> usize {
    let horizon = sections.last().map(|s| s.1).unwrap_or(0);
    debug_assert!(horizon > 0);
    let ts = ts % horizon;
    sections
        .iter()
        .position(|&(start, end)| start <= ts && ts < end)
        .expect("sections cover the horizon")
}

/// Anything POW-dTS can drive: one environment step under the given
/// policy, returning that step's scalar reward. Policies are evaluated
/// greedily and never trained.
pub trait PolicyEnv {
    fn step(&mut self, policy_idx: usize) -> f64;
}

/// Record of one recalibration, emitted per cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecalRecord {
    /// Global step index at which the recalibration completed.
    pub step: u64,
    pub test_rewards: Vec<f64>,
    pub winner: usize,
    pub sampled_best: usize,
    pub coefs: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
    pub sections: Sections,
}

/// Full run log: every recalibration record plus aggregate reward.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowDtsLog {
    pub recals: Vec<RecalRecord>,
    pub total_reward: f64,
    pub steps_run: u64,
    /// Steps each policy was active for (testing + exploitation).
    pub steps_per_policy: Vec<u64>,
}

/// Runs the full scheduler loop for `total_steps` environment steps.
pub fn powdts_run<E: PolicyEnv, R: Rng + ?Sized>(
    env: &mut E,
    n_policies: usize,
    cfg: &PowDtsCfg,
    stream: &mut R,
    total_steps: u64,
) -> PowDtsLog {
    assert!(n_policies > 0, "empty policy library");
    let mut coefs = BetaCoefs::flat(n_policies);
    let mut log = PowDtsLog {
        recals: Vec::new(),
        total_reward: 0.0,
        steps_run: 0,
        steps_per_policy: alloc::vec![0; n_policies],
    };
    let mut sections;

    'outer: loop {
        // Recalibration: test every policy greedily, in order.
        let mut test_rewards = alloc::vec![0.0; n_policies];
        for policy in 0..n_policies {
            for _ in 0..cfg.rounds_recal {
                if log.steps_run >= total_steps {
                    break 'outer;
                }
                let r = env.step(policy);
                test_rewards[policy] += r;
                log.total_reward += r;
                log.steps_per_policy[policy] += 1;
                log.steps_run += 1;
            }
        }
        let winner = argmax_f64(&test_rewards);
        let sampled = sample_best(&coefs, stream);
        update_coefs(&mut coefs, winner, sampled, cfg);
        let weights = weights_from_coefs(&coefs);
        sections = sections_from_weights(&weights, cfg.exp_ts);
        log.recals.push(RecalRecord {
            step: log.steps_run,
            test_rewards,
            winner,
            sampled_best: sampled,
            coefs: coefs.pairs.clone(),
            weights,
            sections: sections.clone(),
        });

        // Exploitation: rounds_exp rounds of exp_ts steps under the
        // section schedule, wrapping modulo the horizon.
        let mut ts_test = 0u64;
        for _ in 0..cfg.rounds_exp * cfg.exp_ts {
            if log.steps_run >= total_steps {
                break 'outer;
            }
            let policy = agent_for_timestep(&sections, ts_test);
            let r = env.step(policy);
            log.total_reward += r;
            log.steps_per_policy[policy] += 1;
            log.steps_run += 1;
            ts_test += 1;
        }
    }
    log
}

/// Argmax over rewards; ties break to the lowest policy index.
fn argmax_f64(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngRegistry;
    use alloc::vec;

    #[test]
    fn sample_best_prefers_strong_coefficients() {
        let coefs = BetaCoefs {
            pairs: vec![(1000.0, 1.0), (1.0, 1000.0)],
        };
        let mut stream = RngRegistry::new(1).agent_stream(0);
        let hits = (0..2000)
            .filter(|_| sample_best(&coefs, &mut stream) == 0)
            .count();
        assert!(hits >= 1999, "hits = {hits}");
    }

    #[test]
    fn sample_best_symmetric_is_even() {
        let coefs = BetaCoefs::flat(2);
        let mut stream = RngRegistry::new(2).agent_stream(0);
        let hits = (0..10_000)
            .filter(|_| sample_best(&coefs, &mut stream) == 0)
            .count();
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "frac = {frac}");
    }

    #[test]
    fn sample_best_single_policy() {
        let coefs = BetaCoefs::flat(1);
        let mut stream = RngRegistry::new(3).agent_stream(0);
        assert_eq!(sample_best(&coefs, &mut stream), 0);
    }

    #[test]
    fn update_success_case() {
        let mut coefs = BetaCoefs::flat(2);
        let cfg = PowDtsCfg::default();
        update_coefs(&mut coefs, 0, 0, &cfg);
        let (a, b) = coefs.pairs[0];
        assert!((a - 0.8).abs() < 1e-12 && (b - 0.4).abs() < 1e-12);
    }

    #[test]
    fn update_failure_case() {
        // The sampled policy missed the winner: its failure counter grows.
        let mut coefs = BetaCoefs::flat(2);
        let cfg = PowDtsCfg::default();
        update_coefs(&mut coefs, 0, 1, &cfg);
        let (a, b) = coefs.pairs[1];
        assert!((a - 0.4).abs() < 1e-12 && (b - 0.8).abs() < 1e-12);
    }

    #[test]
    fn update_bystander_discounts() {
        let mut coefs = BetaCoefs {
            pairs: vec![(1.0, 1.0), (1.0, 1.0), (2.0, 2.0)],
        };
        let cfg = PowDtsCfg::default();
        update_coefs(&mut coefs, 0, 1, &cfg);
        let (a, b) = coefs.pairs[2];
        assert!((a - 0.8).abs() < 1e-12 && (b - 0.8).abs() < 1e-12);
    }

    #[test]
    fn coefficients_stay_positive() {
        let mut coefs = BetaCoefs::flat(2);
        let cfg = PowDtsCfg::default();
        for _ in 0..5000 {
            update_coefs(&mut coefs, 0, 0, &cfg);
        }
        for &(a, b) in &coefs.pairs {
            assert!(a > 0.0 && b > 0.0);
        }
    }

    #[test]
    fn undiscounted_always_sampled_winner_grows_linearly() {
        let mut coefs = BetaCoefs::flat(3);
        let cfg = PowDtsCfg {
            gamma: 1.0,
            alpha_inc: 1.0,
            ..PowDtsCfg::default()
        };
        for k in 1..=50u64 {
            update_coefs(&mut coefs, 0, 0, &cfg);
            assert!((coefs.pairs[0].0 - (1.0 + k as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_cases() {
        let flat = BetaCoefs::flat(4);
        assert_eq!(weights_from_coefs(&flat), vec![0.25; 4]);

        let skewed = BetaCoefs {
            pairs: vec![(2.0, 1.0), (1.0, 2.0)],
        };
        let w = weights_from_coefs(&skewed);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);

        // Common scaling of every pair leaves weights unchanged.
        let scaled = BetaCoefs {
            pairs: vec![(20.0, 10.0), (10.0, 20.0)],
        };
        assert_eq!(weights_from_coefs(&skewed), weights_from_coefs(&scaled));
    }

    #[test]
    fn weights_sum_to_one() {
        let coefs = BetaCoefs {
            pairs: vec![(0.3, 1.7), (5.0, 0.1), (1.0, 1.0)],
        };
        let w = weights_from_coefs(&coefs);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn sections_two_thirds_one_third() {
        let secs = sections_from_weights(&[2.0 / 3.0, 1.0 / 3.0], 750);
        assert_eq!(secs, vec![(0, 500), (500, 750)]);
    }

    #[test]
    fn sections_uniform_four_policies() {
        let secs = sections_from_weights(&[0.25; 4], 750);
        let lengths: Vec<u64> = secs.iter().map(|&(s, e)| e - s).collect();
        assert_eq!(lengths, vec![188, 187, 188, 187]);
        assert_eq!(secs.last().unwrap().1, 750);
    }

    #[test]
    fn sections_single_policy() {
        assert_eq!(sections_from_weights(&[1.0], 750), vec![(0, 750)]);
    }

    #[test]
    fn sections_partition_horizon() {
        let w = [0.17, 0.05, 0.33, 0.25, 0.2];
        let secs = sections_from_weights(&w, 1234);
        assert_eq!(secs[0].0, 0);
        assert_eq!(secs.last().unwrap().1, 1234);
        for pair in secs.windows(2) {
            assert_eq!(pair[0].1, pair[1].0);
        }
    }

    #[test]
    fn timestep_lookup_and_wrap() {
        let secs: Sections = vec![(0, 10), (10, 25)];
        assert_eq!(agent_for_timestep(&secs, 14), 1);
        assert_eq!(agent_for_timestep(&secs, 0), 0);
        // ts == horizon wraps to the first policy.
        assert_eq!(agent_for_timestep(&secs, 25), 0);
    }

    #[test]
    fn zero_length_sections_are_skipped() {
        let secs: Sections = vec![(0, 10), (10, 10), (10, 20)];
        assert_eq!(agent_for_timestep(&secs, 10), 2);
    }

    struct Bandit {
        rates: Vec<f64>,
    }

    impl PolicyEnv for Bandit {
        fn step(&mut self, policy_idx: usize) -> f64 {
            self.rates[policy_idx]
        }
    }

    #[test]
    fn single_policy_run_is_that_policy_alone() {
        let mut env = Bandit { rates: vec![0.5] };
        let cfg = PowDtsCfg {
            rounds_recal: 5,
            exp_ts: 20,
            ..PowDtsCfg::default()
        };
        let mut stream = RngRegistry::new(4).agent_stream(0);
        let log = powdts_run(&mut env, 1, &cfg, &mut stream, 200);
        assert_eq!(log.steps_per_policy, vec![200]);
        assert!((log.total_reward - 100.0).abs() < 1e-9);
    }

    #[test]
    fn stationary_bandit_concentrates_weight() {
        // Reward gap 1.0 vs 0.0: the winner's weight exceeds 0.9 within 20
        // recalibrations.
        let mut env = Bandit {
            rates: vec![1.0, 0.0],
        };
        let cfg = PowDtsCfg {
            rounds_recal: 10,
            exp_ts: 30,
            rounds_exp: 1,
            ..PowDtsCfg::default()
        };
        let mut stream = RngRegistry::new(5).agent_stream(0);
        let steps_per_cycle = 2 * 10 + 30;
        let log = powdts_run(&mut env, 2, &cfg, &mut stream, 20 * steps_per_cycle);
        let reached = log
            .recals
            .iter()
            .any(|r| r.winner == 0 && r.weights[0] > 0.9);
        assert!(reached, "weights never concentrated: {:?}", log.recals.last());
    }

    #[test]
    fn swapped_bandit_recovers() {
        // Quality swap mid-run: the new best policy's weight exceeds 0.5
        // within 10 further recalibrations.
        let cfg = PowDtsCfg {
            rounds_recal: 10,
            exp_ts: 30,
            rounds_exp: 1,
            ..PowDtsCfg::default()
        };
        struct SwitchingBandit {
            steps: u64,
            swap_at: u64,
        }
        impl PolicyEnv for SwitchingBandit {
            fn step(&mut self, policy_idx: usize) -> f64 {
                self.steps += 1;
                let best = if self.steps > self.swap_at { 1 } else { 0 };
                if policy_idx == best {
                    1.0
                } else {
                    0.0
                }
            }
        }
        let steps_per_cycle = 2 * 10 + 30;
        let mut env = SwitchingBandit {
            steps: 0,
            swap_at: 20 * steps_per_cycle,
        };
        let mut stream = RngRegistry::new(6).agent_stream(0);
        let log = powdts_run(&mut env, 2, &cfg, &mut stream, 30 * steps_per_cycle);
        let after_swap: Vec<&RecalRecord> = log
            .recals
            .iter()
            .filter(|r| r.step > 20 * steps_per_cycle)
            .collect();
        assert!(
            after_swap.iter().take(10).any(|r| r.weights[1] > 0.5),
            "post-swap weights: {:?}",
            after_swap.iter().map(|r| r.weights[1]).collect::<Vec<_>>()
        );
    }
}
