//! One trading session: the central book, the background agent ecology
//! stepping in a fixed per-step order, and the investor pool that trades
//! exclusively with market makers.
//!
//! All agents act in ascending agent-id order each step; agent ids live in
//! fixed, population-independent ranges (background from 0, investors from
//! 10_000, market makers from 20_000), so adding or resizing one group
//! never perturbs another group's random streams.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::background::{
    fundamental_next, momentum_step, noise_step, pov_ladder, value_step, MomentumCfg,
    NoiseAgentCfg, PovCfg, ValueAgentCfg,
};
use crate::book::{Order, OrderBook, Price, Side, SimClock, OPENING_PRICE};
use crate::rng::{AgentRng, RngRegistry};

/// First investor agent id.
pub const INVESTOR_ID_BASE: u64 = 10_000;
/// First market-maker agent id.
pub const MM_ID_BASE: u64 = 20_000;

/// Market population and microstructure parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketCfg {
    pub steps_per_session: u64,
    pub n_noise: usize,
    pub n_value: usize,
    pub n_momentum: usize,
    pub noise: NoiseAgentCfg,
    pub value: ValueAgentCfg,
    pub momentum: MomentumCfg,
    pub pov: PovCfg,
    /// Market spread assumed before the book has ever been two-sided.
    pub initial_spread: i64,
    pub n_investors: usize,
    pub investor_arrival_prob: f64,
    pub investor_order_size: i64,
    pub mm_opening_cash: i64,
}

impl MarketCfg {
    /// Desk-scale default: 1,800-step sessions with the full-population
    /// counts scaled by 0.2.
    pub fn desk() -> Self {
        Self::with_scale(1_800, 0.2)
    }

    /// Full-scale setup: 2-hour (7,200-step) sessions, populations
    /// 100 noise / 10 value / 10 momentum / 1 POV.
    pub fn paper() -> Self {
        Self::with_scale(7_200, 1.0)
    }

    fn with_scale(steps: u64, multiplier: f64) -> Self {
        let scaled = |base: usize| -> usize {
            (libm::round(base as f64 * multiplier) as usize).max(1)
        };
        Self {
            steps_per_session: steps,
            n_noise: scaled(100),
            n_value: scaled(10),
            n_momentum: scaled(10),
            noise: NoiseAgentCfg::default(),
            value: ValueAgentCfg::default(),
            momentum: MomentumCfg::default(),
            pov: PovCfg::default(),
            initial_spread: 20,
            n_investors: 50,
            investor_arrival_prob: 0.5,
            investor_order_size: 10,
            mm_opening_cash: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    LimitSubmit,
    MarketSubmit,
    Fill,
    Cancel,
    Unfilled,
}

/// One row of the per-step market event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MarketEvent {
    pub step: u64,
    pub kind: EventKind,
    pub agent_id: u64,
    pub side: Side,
    pub qty: i64,
    pub price_ticks: i64,
    pub order_id: u64,
}

/// What the dealer layer needs from the market after the background stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarketView {
    pub step: u64,
    pub mid: Price,
    pub prev_mid: Price,
    /// Reference market spread; falls back to the last defined spread
    /// (initially `initial_spread`) when the book is one-sided.
    pub spread: i64,
}

struct NoiseTrader {
    id: u64,
    stream: AgentRng,
}

struct ValueTrader {
    id: u64,
    stream: AgentRng,
    fundamental: f64,
}

struct MomentumTrader {
    id: u64,
}

struct PovMaker {
    id: u64,
    resting: Vec<u64>,
}

/// One greedy investor; trades only with market makers.
pub struct Investor {
    pub id: u64,
    pub stream: AgentRng,
}

/// An investor order to be routed to a market maker this step.
#[derive(Debug, Clone, Copy)]
pub struct InvestorOrder {
    pub investor_idx: usize,
    pub side: Side,
    pub qty: i64,
}

/// A live trading session: book plus background ecology plus investors.
pub struct TradingSession {
    pub cfg: MarketCfg,
    pub book: OrderBook,
    pub clock: SimClock,
    noise: Vec<NoiseTrader>,
    value: Vec<ValueTrader>,
    momentum: Vec<MomentumTrader>,
    pov: PovMaker,
    pub investors: Vec<Investor>,
    mid_history: Vec<i64>,
    volume_window: VecDeque<i64>,
    next_order_id: u64,
    last_spread: i64,
    prev_mid: Price,
    pub events: Vec<MarketEvent>,
    pub log_events: bool,
}

impl TradingSession {
    pub fn new(cfg: MarketCfg, registry: &RngRegistry) -> Self {
        let mut id = 0u64;
        let mut take_id = || {
            let v = id;
            id += 1;
            v
        };
        let noise = (0..cfg.n_noise)
            .map(|_| {
                let id = take_id();
                NoiseTrader {
                    id,
                    stream: registry.agent_stream(id),
                }
            })
            .collect();
        let value = (0..cfg.n_value)
            .map(|_| {
                let id = take_id();
                ValueTrader {
                    id,
                    stream: registry.agent_stream(id),
                    fundamental: cfg.value.mean,
                }
            })
            .collect();
        let momentum = (0..cfg.n_momentum)
            .map(|_| MomentumTrader { id: take_id() })
            .collect();
        let pov = PovMaker {
            id: take_id(),
            resting: Vec::new(),
        };
        let investors = (0..cfg.n_investors)
            .map(|i| {
                let id = INVESTOR_ID_BASE + i as u64;
                Investor {
                    id,
                    stream: registry.agent_stream(id),
                }
            })
            .collect();
        let steps = cfg.steps_per_session;
        let lookback = cfg.pov.lookback;
        Self {
            cfg,
            book: OrderBook::new(),
            clock: SimClock::new(steps),
            noise,
            value,
            momentum,
            pov,
            investors,
            mid_history: Vec::with_capacity(steps as usize),
            volume_window: VecDeque::with_capacity(lookback),
            next_order_id: 1,
            last_spread: 0,
            prev_mid: OPENING_PRICE,
            events: Vec::new(),
            log_events: false,
        }
    }

    fn alloc_order_id(&mut self) -> u64 {
        let id = self.next_order_id;
        self.next_order_id += 1;
        id
    }

    fn log(&mut self, event: MarketEvent) {
        if self.log_events {
            self.events.push(event);
        }
    }

    fn record_fills(&mut self, fills: &[crate::book::Fill], side: Side, step: u64) -> i64 {
        let mut volume = 0;
        for f in fills {
            volume += f.qty;
            self.log(MarketEvent {
                step,
                kind: EventKind::Fill,
                agent_id: f.taker_agent_id,
                side,
                qty: f.qty,
                price_ticks: f.price.ticks(),
                order_id: f.maker_order_id,
            });
        }
        volume
    }

    fn submit_market(&mut self, agent_id: u64, side: Side, qty: i64, step: u64) -> i64 {
        self.log(MarketEvent {
            step,
            kind: EventKind::MarketSubmit,
            agent_id,
            side,
            qty,
            price_ticks: 0,
            order_id: 0,
        });
        let res = self
            .book
            .submit_market_order(side, qty, agent_id, step)
            .expect("positive qty");
        let volume = self.record_fills(&res.fills.clone(), side, step);
        if res.unfilled_qty > 0 {
            self.log(MarketEvent {
                step,
                kind: EventKind::Unfilled,
                agent_id,
                side,
                qty: res.unfilled_qty,
                price_ticks: 0,
                order_id: 0,
            });
        }
        volume
    }

    fn submit_limit(&mut self, agent_id: u64, side: Side, qty: i64, price: Price, step: u64) -> (u64, i64) {
        let id = self.alloc_order_id();
        self.log(MarketEvent {
            step,
            kind: EventKind::LimitSubmit,
            agent_id,
            side,
            qty,
            price_ticks: price.ticks(),
            order_id: id,
        });
        let order = Order {
            id,
            agent_id,
            side,
            qty,
            limit_price: price,
            arrival_step: step,
        };
        let res = self.book.submit_limit_order(order).expect("unique id");
        let volume = self.record_fills(&res.fills.clone(), side, step);
        (if res.resting_qty > 0 { id } else { 0 }, volume)
    }

    /// Runs the background stage of one step and returns the market view
    /// the dealer layer quotes against.
    pub fn step_background(&mut self) -> MarketView {
        let step = self.clock.step;
        let mut volume = 0i64;

        for i in 0..self.noise.len() {
            let (id, order) = {
                let trader = &mut self.noise[i];
                (trader.id, noise_step(&self.cfg.noise, &mut trader.stream))
            };
            if let Some((side, qty)) = order {
                volume += self.submit_market(id, side, qty, step);
            }
        }

        for i in 0..self.value.len() {
            let quotes = self.book.best_quotes();
            let (id, order) = {
                let trader = &mut self.value[i];
                trader.fundamental =
                    fundamental_next(trader.fundamental, &self.cfg.value, &mut trader.stream);
                (trader.id, value_step(&self.cfg.value, trader.fundamental, &quotes))
            };
            if let Some((side, price, qty)) = order {
                let (_, filled) = self.submit_limit(id, side, qty, price, step);
                volume += filled;
            }
        }

        for i in 0..self.momentum.len() {
            let id = self.momentum[i].id;
            if let Some((side, qty)) = momentum_step(&self.cfg.momentum, &self.mid_history) {
                volume += self.submit_market(id, side, qty, step);
            }
        }

        if step % self.cfg.pov.wake_interval == 0 {
            let resting = core::mem::take(&mut self.pov.resting);
            for order_id in resting {
                let removed = self.book.cancel_order(order_id);
                if removed > 0 {
                    self.log(MarketEvent {
                        step,
                        kind: EventKind::Cancel,
                        agent_id: self.pov.id,
                        side: Side::Buy,
                        qty: removed,
                        price_ticks: 0,
                        order_id,
                    });
                }
            }
            let mid = self.book.best_quotes().mid;
            let lookback_volume: i64 = self.volume_window.iter().sum();
            let ladder = pov_ladder(&self.cfg.pov, mid, lookback_volume);
            let pov_id = self.pov.id;
            for rung in ladder {
                let (resting_id, filled) =
                    self.submit_limit(pov_id, rung.side, rung.qty, rung.price, step);
                volume += filled;
                if resting_id != 0 {
                    self.pov.resting.push(resting_id);
                }
            }
        }

        let quotes = self.book.best_quotes();
        if let Some(spread) = quotes.market_spread {
            self.last_spread = spread;
        }
        let spread = if self.last_spread > 0 {
            self.last_spread
        } else {
            self.cfg.initial_spread
        };
        let prev_mid = self.prev_mid;
        self.prev_mid = quotes.mid;
        self.mid_history.push(quotes.mid.ticks());
        self.volume_window.push_back(volume);
        if self.volume_window.len() > self.cfg.pov.lookback {
            self.volume_window.pop_front();
        }

        MarketView {
            step,
            mid: quotes.mid,
            prev_mid,
            spread,
        }
    }

    /// Draws this step's investor arrivals: each investor independently
    /// submits one fixed-size order with the configured probability, in a
    /// uniformly random direction.
    pub fn investor_orders(&mut self) -> Vec<InvestorOrder> {
        let mut orders = Vec::new();
        for (idx, inv) in self.investors.iter_mut().enumerate() {
            if !inv.stream.random_bool(self.cfg.investor_arrival_prob) {
                continue;
            }
            let side = if inv.stream.random_bool(0.5) {
                Side::Buy
            } else {
                Side::Sell
            };
            orders.push(InvestorOrder {
                investor_idx: idx,
                side,
                qty: self.cfg.investor_order_size,
            });
        }
        orders
    }

    /// Advances the session clock after the dealer stage.
    pub fn advance(&mut self) {
        self.clock.advance();
    }

    pub fn mid_history(&self) -> &[i64] {
        &self.mid_history
    }

    /// Current fundamental value of each value trader (diagnostics).
    pub fn value_fundamentals(&self) -> Vec<f64> {
        self.value.iter().map(|v| v.fundamental).collect()
    }
}
