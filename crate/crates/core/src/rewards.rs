//! Market-maker reward functions: the plain mark-to-market reward, the
//! inventory-managed reward with its dynamic threshold penalty, three
//! benchmark rewards, the weighted scalarization, and the two-component
//! reward vector.
//!
//! Term conventions (all in ticks): `e` is spread earnings from investor
//! trades (non-negative), `pnl` is inventory revaluation (signed), `hgc` is
//! hedging cost (non-negative).

use alloc::collections::VecDeque;
use serde::{Deserialize, Serialize};

use crate::book::Price;

/// Default inventory-penalty coefficient of the full-inventory benchmark.
pub const LAMBDA_FULL_INV: f64 = 0.15;
/// Default damping factor of the asymmetrically-dampened benchmark.
pub const ETA_ASYM_DAMP: f64 = 0.1;
/// Scale factor on the inventory objective; affects only how the action
/// selection weight trades the two objectives, never the learning targets.
pub const ALPHA_INVENTORY: f64 = 5.0;
/// Default rolling window (steps) for threshold and inventory averages.
pub const DEFAULT_THRESHOLD_WINDOW: usize = 20;

/// Per-step reward ingredients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RewardTerms {
    /// Spread earnings, >= 0.
    pub e: i64,
    /// Inventory revaluation, signed.
    pub pnl: i64,
    /// Hedging cost, >= 0.
    pub hgc: i64,
}

/// Two-component reward: `r1` drives mark-to-market, `r2` inventory control.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub r1: f64,
    pub r2: f64,
}

/// Parameters of the inventory-managed reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AiifConfig {
    /// Risk-aversion factor scaling the penalty, >= 0.
    pub aiif: f64,
    /// Target cash-to-inventory-value ratio, > 0.
    pub ditf: f64,
    /// Rolling window length in steps.
    pub window: usize,
}

impl Default for AiifConfig {
    fn default() -> Self {
        Self {
            aiif: 1.0,
            ditf: 0.5,
            window: DEFAULT_THRESHOLD_WINDOW,
        }
    }
}

/// Profit-seeking reward: `E + PnL - HgC`.
pub fn reward_single(terms: &RewardTerms) -> f64 {
    (terms.e + terms.pnl - terms.hgc) as f64
}

/// Dynamic inventory threshold: `ditf * |cash / mean(rolling mids)|`.
pub fn dynamic_threshold(cash: i64, rolling_mids: &VecDeque<i64>, ditf: f64) -> f64 {
    debug_assert!(!rolling_mids.is_empty());
    let mean_mid = rolling_mids.iter().sum::<i64>() as f64 / rolling_mids.len() as f64;
    ditf * (cash as f64 / mean_mid).abs()
}

/// Inventory penalty: `aiif * min(|R|, |R * mean_inv / mean_thr|)`. A zero
/// mean threshold is treated as an infinitely tight limit, so the penalty
/// clamps at `aiif * |R|`.
pub fn rim_penalty(r_mtm: f64, mean_inv: f64, mean_thr: f64, aiif: f64) -> f64 {
    let r_abs = r_mtm.abs();
    let scaled = if mean_thr == 0.0 {
        r_abs
    } else {
        (r_mtm * mean_inv / mean_thr).abs().min(r_abs)
    };
    aiif * scaled
}

/// Rolling windows backing the dynamic threshold: the last `window` mids,
/// thresholds, and signed inventories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdState {
    window: usize,
    mids: VecDeque<i64>,
    thresholds: VecDeque<f64>,
    inventories: VecDeque<i64>,
}

impl ThresholdState {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1);
        Self {
            window,
            mids: VecDeque::with_capacity(window),
            thresholds: VecDeque::with_capacity(window),
            inventories: VecDeque::with_capacity(window),
        }
    }

    fn push_capped<T>(queue: &mut VecDeque<T>, value: T, cap: usize) {
        queue.push_back(value);
        if queue.len() > cap {
            queue.pop_front();
        }
    }

    /// Feeds this step's mid, cash, and inventory; returns
    /// `(mean |inventory|, mean threshold)` over the windows, averages using
    /// whatever history exists during warm-up.
    pub fn observe(&mut self, cash: i64, mid: Price, inventory: i64, ditf: f64) -> (f64, f64) {
        Self::push_capped(&mut self.mids, mid.ticks(), self.window);
        let thr = dynamic_threshold(cash, &self.mids, ditf);
        Self::push_capped(&mut self.thresholds, thr, self.window);
        Self::push_capped(&mut self.inventories, inventory, self.window);

        let mean_inv =
            self.inventories.iter().sum::<i64>() as f64 / self.inventories.len() as f64;
        let mean_thr = self.thresholds.iter().sum::<f64>() / self.thresholds.len() as f64;
        (libm::fabs(mean_inv), mean_thr)
    }
}

/// Inventory-managed reward: `E + PnL - HgC - Pny`, updating the rolling
/// threshold state with this step's observations.
pub fn reward_rim(
    terms: &RewardTerms,
    state: &mut ThresholdState,
    cfg: &AiifConfig,
    cash: i64,
    mid: Price,
    inventory: i64,
) -> f64 {
    let r = reward_single(terms);
    let (mean_inv, mean_thr) = state.observe(cash, mid, inventory, cfg.ditf);
    r - rim_penalty(r, mean_inv, mean_thr, cfg.aiif)
}

/// Benchmark: `E - lambda * |inv| - HgC`.
pub fn reward_full_inv(e: i64, inventory: i64, hgc: i64, lambda: f64) -> f64 {
    e as f64 - lambda * inventory.abs() as f64 - hgc as f64
}

/// Benchmark: `E + PnL - max(0, eta * PnL) - HgC`.
pub fn reward_asym_damp(e: i64, pnl: i64, hgc: i64, eta: f64) -> f64 {
    let damp = (eta * pnl as f64).max(0.0);
    (e + pnl - hgc) as f64 - damp
}

/// Benchmark: `E - HgC`, no inventory term at all.
pub fn reward_pnl_only(e: i64, hgc: i64) -> f64 {
    (e - hgc) as f64
}

/// Weighted scalarization of the two objectives:
/// `w * (E + PnL - HgC) + (1 - w) * (-alpha * |inv| - HgC)`.
pub fn reward_rew(terms: &RewardTerms, inventory: i64, w: f64, alpha: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&w));
    let vec = reward_morl_vector(terms, inventory, alpha);
    w * vec.r1 + (1.0 - w) * vec.r2
}

/// The reward vector: `r1 = E + PnL - HgC`, `r2 = -alpha * |inv| - HgC`.
pub fn reward_morl_vector(terms: &RewardTerms, inventory: i64, alpha: f64) -> RewardVector {
    RewardVector {
        r1: reward_single(terms),
        r2: -alpha * inventory.abs() as f64 - terms.hgc as f64,
    }
}
