//! Market-maker observation vectors, EMA trend features, and online
//! feature standardization.
//!
//! Three state layouts are supported: the 8-feature vector, the 10-feature
//! vector that splits trade counts from volumes, and the 11-feature vector
//! that appends long/short EMAs of the mid price and the long-EMA slope.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Variance floor for standardization.
pub const EPS_STD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateVariant {
    V8,
    V10,
    V11,
}

impl StateVariant {
    pub fn arity(self) -> usize {
        match self {
            StateVariant::V8 => 8,
            StateVariant::V10 => 10,
            StateVariant::V11 => 11,
        }
    }
}

/// Raw per-step observation of one market maker, gathered by the dealer
/// layer. Quantities are in shares, prices and spreads in ticks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MmObs {
    /// Count of investor buy trades matched with this MM last step.
    pub buy_count_prev: i64,
    /// Shares this MM bought from investors last step.
    pub buy_volume_prev: i64,
    /// Count of investor sell trades matched with this MM last step.
    pub sell_count_prev: i64,
    /// Shares this MM sold to investors last step.
    pub sell_volume_prev: i64,
    pub inv_now: i64,
    pub inv_prev: i64,
    pub delta_mid: i64,
    pub spread_now: i64,
    pub spread_prev: i64,
    /// Total shares this MM traded with investors last step.
    pub volume_prev: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector {
    pub variant: StateVariant,
    pub values: Vec<f64>,
}

impl StateVector {
    fn new(variant: StateVariant, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), variant.arity());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { variant, values }
    }
}

/// 8-feature state: shares bought, shares sold, current inventory, previous
/// inventory, mid variation, current spread, previous spread, shares traded.
pub fn build_state_v8(obs: &MmObs) -> StateVector {
    StateVector::new(
        StateVariant::V8,
        alloc::vec![
            obs.buy_volume_prev as f64,
            obs.sell_volume_prev as f64,
            obs.inv_now as f64,
            obs.inv_prev as f64,
            obs.delta_mid as f64,
            obs.spread_now as f64,
            obs.spread_prev as f64,
            obs.volume_prev as f64,
        ],
    )
}

/// 10-feature state: buy count, buy volume, sell count, sell volume,
/// previous inventory, current inventory, mid variation, current spread,
/// previous spread, total volume.
pub fn build_state_v10(obs: &MmObs) -> StateVector {
    StateVector::new(
        StateVariant::V10,
        alloc::vec![
            obs.buy_count_prev as f64,
            obs.buy_volume_prev as f64,
            obs.sell_count_prev as f64,
            obs.sell_volume_prev as f64,
            obs.inv_prev as f64,
            obs.inv_now as f64,
            obs.delta_mid as f64,
            obs.spread_now as f64,
            obs.spread_prev as f64,
            obs.volume_prev as f64,
        ],
    )
}

/// 11-feature state: the 8 base features followed by EMA-long, EMA-short,
/// and the EMA-long slope.
pub fn build_state_v11(obs: &MmObs, ema_l: f64, ema_s: f64, slope: f64) -> StateVector {
    let mut values = build_state_v8(obs).values;
    values.push(ema_l);
    values.push(ema_s);
    values.push(slope);
    StateVector::new(StateVariant::V11, values)
}

/// One EMA update with smoothing factor `alpha = 2 / (1 + n)`.
pub fn ema(prev_ema: f64, x: f64, n: u32) -> f64 {
    debug_assert!(n >= 1);
    let alpha = 2.0 / (1.0 + f64::from(n));
    alpha * x + (1.0 - alpha) * prev_ema
}

/// Difference between the latest EMA value and the one `n` observations
/// back. Returns 0 while fewer than `n + 1` values have been observed.
pub fn ema_slope(ema_series: &[f64], n: usize) -> f64 {
    if ema_series.len() <= n {
        return 0.0;
    }
    let last = ema_series[ema_series.len() - 1];
    let lagged = ema_series[ema_series.len() - 1 - n];
    last - lagged
}

/// EMA window preset in steps (1 paper minute = 60 steps). The slope lag
/// matches the long window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmaPreset {
    pub long_steps: u32,
    pub short_steps: u32,
    pub slope_lag_steps: usize,
}

impl EmaPreset {
    /// The (20, 8), (15, 4), (10, 2)-minute presets.
    pub const MINUTES_20_8: EmaPreset = EmaPreset {
        long_steps: 1200,
        short_steps: 480,
        slope_lag_steps: 1200,
    };
    pub const MINUTES_15_4: EmaPreset = EmaPreset {
        long_steps: 900,
        short_steps: 240,
        slope_lag_steps: 900,
    };
    pub const MINUTES_10_2: EmaPreset = EmaPreset {
        long_steps: 600,
        short_steps: 120,
        slope_lag_steps: 600,
    };
}

/// Rolling EMA state for the v11 feature extension.
#[derive(Debug, Clone)]
pub struct EmaTracker {
    preset: EmaPreset,
    ema_l: Option<f64>,
    ema_s: Option<f64>,
    long_history: VecDeque<f64>,
}

impl EmaTracker {
    pub fn new(preset: EmaPreset) -> Self {
        Self {
            preset,
            ema_l: None,
            ema_s: None,
            long_history: VecDeque::new(),
        }
    }

    /// Feeds one mid-price observation; returns (ema_l, ema_s, slope).
    pub fn observe(&mut self, mid: f64) -> (f64, f64, f64) {
        let l = match self.ema_l {
            Some(prev) => ema(prev, mid, self.preset.long_steps),
            None => mid,
        };
        let s = match self.ema_s {
            Some(prev) => ema(prev, mid, self.preset.short_steps),
            None => mid,
        };
        self.ema_l = Some(l);
        self.ema_s = Some(s);
        self.long_history.push_back(l);
        if self.long_history.len() > self.preset.slope_lag_steps + 1 {
            self.long_history.pop_front();
        }
        let (front, back) = self.long_history.as_slices();
        let slope = if back.is_empty() {
            ema_slope(front, self.preset.slope_lag_steps)
        } else {
            let series: Vec<f64> = self.long_history.iter().copied().collect();
            ema_slope(&series, self.preset.slope_lag_steps)
        };
        (l, s, slope)
    }
}

/// Online feature standardizer: running mean/variance per feature
/// (population variance, Welford update). Statistics are updated first,
/// then the standardized vector `(x - mean) / max(std, eps)` is returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningScaler {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningScaler {
    pub fn new(arity: usize) -> Self {
        Self {
            count: 0,
            mean: alloc::vec![0.0; arity],
            m2: alloc::vec![0.0; arity],
        }
    }

    pub fn arity(&self) -> usize {
        self.mean.len()
    }

    fn std(&self, i: usize) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        libm::sqrt(self.m2[i] / self.count as f64)
    }

    /// Updates the running statistics with `raw`, then standardizes it.
    pub fn update_apply(&mut self, raw: &[f64]) -> Vec<f64> {
        assert_eq!(raw.len(), self.arity(), "scaler arity mismatch");
        self.count += 1;
        for (i, &x) in raw.iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta / self.count as f64;
            self.m2[i] += delta * (x - self.mean[i]);
        }
        self.apply(raw)
    }

    /// Standardizes without touching the statistics (frozen evaluation).
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        assert_eq!(raw.len(), self.arity(), "scaler arity mismatch");
        raw.iter()
            .enumerate()
            .map(|(i, &x)| (x - self.mean[i]) / self.std(i).max(EPS_STD))
            .collect()
    }
}
