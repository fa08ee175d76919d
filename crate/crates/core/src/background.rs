//! Background market ecology: noise traders, mean-reversion value traders,
//! moving-average momentum traders, and an adaptive percentage-of-volume
//! liquidity provider. Their interaction produces the mid-price path,
//! volatility, and the reference market spread.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::book::{Price, Quotes, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseAgentCfg {
    pub order_size: i64,
    pub arrival_prob: f64,
}

impl Default for NoiseAgentCfg {
    fn default() -> Self {
        Self {
            order_size: 2,
            arrival_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueAgentCfg {
    /// Long-run mean of the fundamental, in ticks.
    pub mean: f64,
    /// Mean-reversion rate per step, in (0, 1].
    pub kappa: f64,
    /// Fundamental noise, in ticks.
    pub sigma: f64,
    /// Mid-vs-fundamental deviation required to trade, in ticks.
    pub entry_threshold: i64,
    pub order_size: i64,
}

impl Default for ValueAgentCfg {
    fn default() -> Self {
        Self {
            mean: 100_000.0,
            kappa: 0.02,
            sigma: 15.0,
            entry_threshold: 25,
            order_size: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumCfg {
    pub fast_window: usize,
    pub slow_window: usize,
    pub order_size: i64,
}

impl Default for MomentumCfg {
    fn default() -> Self {
        Self {
            fast_window: 20,
            slow_window: 50,
            order_size: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovCfg {
    /// Fraction of lookback transacted volume to quote, in (0, 1].
    pub pov_fraction: f64,
    /// Transacted-volume lookback, in steps.
    pub lookback: usize,
    /// Re-quote cadence, in steps.
    pub wake_interval: u64,
    /// Price levels per side.
    pub ladder_levels: i64,
    /// Tick distance between levels.
    pub level_spacing: i64,
}

impl Default for PovCfg {
    fn default() -> Self {
        Self {
            pov_fraction: 0.2,
            lookback: 100,
            wake_interval: 10,
            ladder_levels: 2,
            level_spacing: 10,
        }
    }
}

/// With probability `arrival_prob`, a market order of fixed size in a
/// uniformly random direction.
pub fn noise_step<R: Rng + ?Sized>(cfg: &NoiseAgentCfg, stream: &mut R) -> Option<(Side, i64)> {
    if !stream.random_bool(cfg.arrival_prob) {
        return None;
    }
    let side = if stream.random_bool(0.5) {
        Side::Buy
    } else {
        Side::Sell
    };
    Some((side, cfg.order_size))
}

/// One step of the mean-reverting fundamental:
/// `x' = x + kappa * (mean - x) + sigma * xi`, clamped to at least 1 tick.
pub fn fundamental_next<R: Rng + ?Sized>(x: f64, cfg: &ValueAgentCfg, stream: &mut R) -> f64 {
    let xi: f64 = StandardNormal.sample(stream);
    let next = x + cfg.kappa * (cfg.mean - x) + cfg.sigma * xi;
    next.max(1.0)
}

/// A value trade: when the mid deviates from the fundamental by more than
/// the threshold, cross the book with a marketable limit at the far touch.
/// Returns `(side, limit price, size)`.
pub fn value_step(cfg: &ValueAgentCfg, fundamental: f64, quotes: &Quotes) -> Option<(Side, Price, i64)> {
    let mid = quotes.mid.ticks() as f64;
    if mid < fundamental - cfg.entry_threshold as f64 {
        // Underpriced: lift the ask.
        quotes.best_ask.map(|ask| (Side::Buy, ask, cfg.order_size))
    } else if mid > fundamental + cfg.entry_threshold as f64 {
        // Overpriced: hit the bid.
        quotes.best_bid.map(|bid| (Side::Sell, bid, cfg.order_size))
    } else {
        None
    }
}

/// Moving-average crossover on the shared mid history: buy the step the
/// fast average first exceeds the slow one, sell on the reverse cross.
/// Warm-up (history shorter than `slow_window + 1`) yields no order.
/// Comparisons are cross-multiplied window sums, so they are exact.
pub fn momentum_step(cfg: &MomentumCfg, mid_history: &[i64]) -> Option<(Side, i64)> {
    debug_assert!(cfg.fast_window < cfg.slow_window);
    let n = mid_history.len();
    if n < cfg.slow_window + 1 {
        return None;
    }
    let sum = |len: usize, end: usize| -> i128 {
        mid_history[end - len..end].iter().map(|&m| i128::from(m)).sum()
    };
    let fast_n = cfg.fast_window as i128;
    let slow_n = cfg.slow_window as i128;
    // fast/slow mean comparison at `end`, exact: fast_sum * slow_n vs slow_sum * fast_n.
    let rel = |end: usize| -> core::cmp::Ordering {
        (sum(cfg.fast_window, end) * slow_n).cmp(&(sum(cfg.slow_window, end) * fast_n))
    };
    use core::cmp::Ordering::*;
    match (rel(n - 1), rel(n)) {
        (Less | Equal, Greater) => Some((Side::Buy, cfg.order_size)),
        (Greater | Equal, Less) => Some((Side::Sell, cfg.order_size)),
        _ => None,
    }
}

/// One resting quote of the POV ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LadderOrder {
    pub side: Side,
    pub price: Price,
    pub qty: i64,
}

/// The POV maker's ladder around the mid: `ladder_levels` bids below and
/// asks above at `level_spacing`, each level sized
/// `ceil(pov_fraction * lookback_volume / (2 * levels))`, at least 1 share.
pub fn pov_ladder(cfg: &PovCfg, mid: Price, lookback_volume: i64) -> Vec<LadderOrder> {
    let per_level = libm::ceil(
        cfg.pov_fraction * lookback_volume as f64 / (2.0 * cfg.ladder_levels as f64),
    ) as i64;
    let qty = per_level.max(1);
    let mut out = Vec::with_capacity(2 * cfg.ladder_levels as usize);
    for level in 1..=cfg.ladder_levels {
        let offset = level * cfg.level_spacing;
        if mid.ticks() - offset > 0 {
            out.push(LadderOrder {
                side: Side::Buy,
                price: Price(mid.ticks() - offset),
                qty,
            });
        }
        out.push(LadderOrder {
            side: Side::Sell,
            price: Price(mid.ticks() + offset),
            qty,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::OPENING_PRICE;
    use crate::rng::RngRegistry;
    use alloc::vec;

    #[test]
    fn noise_never_fires_at_zero_prob() {
        let cfg = NoiseAgentCfg {
            arrival_prob: 0.0,
            ..NoiseAgentCfg::default()
        };
        let mut stream = RngRegistry::new(3).agent_stream(0);
        for _ in 0..1000 {
            assert_eq!(noise_step(&cfg, &mut stream), None);
        }
    }

    #[test]
    fn noise_sides_are_balanced() {
        let cfg = NoiseAgentCfg {
            arrival_prob: 1.0,
            order_size: 1,
        };
        let mut stream = RngRegistry::new(3).agent_stream(0);
        let mut buys = 0u32;
        for _ in 0..10_000 {
            match noise_step(&cfg, &mut stream) {
                Some((Side::Buy, _)) => buys += 1,
                Some((Side::Sell, _)) => {}
                None => unreachable!(),
            }
        }
        let frac = f64::from(buys) / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "buy fraction {frac}");
    }

    #[test]
    fn noise_is_reproducible() {
        let cfg = NoiseAgentCfg {
            arrival_prob: 0.7,
            order_size: 3,
        };
        let run = || -> Vec<Option<(Side, i64)>> {
            let mut stream = RngRegistry::new(11).agent_stream(4);
            (0..200).map(|_| noise_step(&cfg, &mut stream)).collect()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fundamental_fixed_point_and_reversion() {
        let mut stream = RngRegistry::new(1).agent_stream(0);
        let cfg = ValueAgentCfg {
            mean: 100.0,
            sigma: 0.0,
            kappa: 1.0,
            ..ValueAgentCfg::default()
        };
        assert_eq!(fundamental_next(100.0, &cfg, &mut stream), 100.0);
        assert_eq!(fundamental_next(90.0, &cfg, &mut stream), 100.0);
        let half = ValueAgentCfg { kappa: 0.5, ..cfg };
        assert_eq!(fundamental_next(90.0, &half, &mut stream), 95.0);
    }

    fn quotes(bid: i64, ask: i64) -> Quotes {
        Quotes {
            best_bid: Some(Price(bid)),
            best_ask: Some(Price(ask)),
            mid: Price((bid + ask + 1) / 2),
            market_spread: Some(ask - bid),
        }
    }

    #[test]
    fn value_agent_rules() {
        let cfg = ValueAgentCfg {
            entry_threshold: 20,
            order_size: 2,
            ..ValueAgentCfg::default()
        };
        let q = quotes(99_990, 100_010);
        // mid == fundamental: nothing.
        assert_eq!(value_step(&cfg, 100_000.0, &q), None);
        // Fundamental 50 ticks above mid: buy at the ask.
        assert_eq!(
            value_step(&cfg, 100_050.0, &q),
            Some((Side::Buy, Price(100_010), 2))
        );
        // Huge threshold: never trades.
        let cautious = ValueAgentCfg {
            entry_threshold: 1_000_000,
            ..cfg
        };
        assert_eq!(value_step(&cautious, 100_050.0, &q), None);
    }

    #[test]
    fn momentum_flat_history_no_cross() {
        let cfg = MomentumCfg::default();
        let history = vec![100_000i64; 200];
        assert_eq!(momentum_step(&cfg, &history), None);
    }

    #[test]
    fn momentum_warmup_none() {
        let cfg = MomentumCfg::default();
        let history = vec![100_000i64; 49];
        assert_eq!(momentum_step(&cfg, &history), None);
    }

    #[test]
    fn momentum_single_buy_on_ramp() {
        // Flat history then a ramp: exactly one buy, at the step the fast
        // average first exceeds the slow one (reference MAs computed
        // directly from the window definition).
        let cfg = MomentumCfg {
            fast_window: 3,
            slow_window: 5,
            order_size: 1,
        };
        let mut history: Vec<i64> = vec![100; 10];
        let mut signals = Vec::new();
        for t in 0..10 {
            history.push(100 + t * 5);
            signals.push(momentum_step(&cfg, &history));
        }
        let buys: Vec<usize> = signals
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, Some((Side::Buy, _))))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(buys.len(), 1);
        // Reference check: recompute plain means around the signal step.
        let at = buys[0];
        let end = 11 + at;
        let fast: f64 = history[end - 3..end].iter().sum::<i64>() as f64 / 3.0;
        let slow: f64 = history[end - 5..end].iter().sum::<i64>() as f64 / 5.0;
        assert!(fast > slow);
        let fast_prev: f64 = history[end - 4..end - 1].iter().sum::<i64>() as f64 / 3.0;
        let slow_prev: f64 = history[end - 6..end - 1].iter().sum::<i64>() as f64 / 5.0;
        assert!(fast_prev <= slow_prev);
    }

    #[test]
    fn pov_floor_rule() {
        let cfg = PovCfg::default();
        let ladder = pov_ladder(&cfg, OPENING_PRICE, 0);
        assert!(ladder.iter().all(|o| o.qty == 1));
    }

    #[test]
    fn pov_level_size_arithmetic() {
        let cfg = PovCfg {
            pov_fraction: 0.1,
            ladder_levels: 2,
            ..PovCfg::default()
        };
        let ladder = pov_ladder(&cfg, OPENING_PRICE, 200);
        // ceil(200 * 0.1 / 4) = 5
        assert!(ladder.iter().all(|o| o.qty == 5));
    }

    #[test]
    fn pov_ladder_prices() {
        let cfg = PovCfg {
            ladder_levels: 2,
            level_spacing: 10,
            ..PovCfg::default()
        };
        let ladder = pov_ladder(&cfg, Price(100_000), 0);
        let bids: Vec<i64> = ladder
            .iter()
            .filter(|o| o.side == Side::Buy)
            .map(|o| o.price.ticks())
            .collect();
        let asks: Vec<i64> = ladder
            .iter()
            .filter(|o| o.side == Side::Sell)
            .map(|o| o.price.ticks())
            .collect();
        assert_eq!(bids, vec![99_990, 99_980]);
        assert_eq!(asks, vec![100_010, 100_020]);
    }
}
