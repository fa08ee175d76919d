//! Price-time-priority limit order book.
//!
//! All prices are integer ticks (1 tick = $0.01); matching is therefore
//! bit-exact and seed-stable. Incoming limit orders match against the
//! opposite side best price first, FIFO within a price level, and any
//! remainder rests. Market orders walk the opposite side and never rest.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use serde::Serialize;

/// Opening price used throughout: $1,000.00 in ticks.
pub const OPENING_PRICE: Price = Price(100_000);

/// A price in integer ticks, always non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Price(pub i64);

impl Price {
    pub fn ticks(self) -> i64 {
        self.0
    }
}

/// Round-half-up integer division for non-negative operands.
pub(crate) fn div_round_half_up(num: i64, den: i64) -> i64 {
    debug_assert!(num >= 0 && den > 0);
    (2 * num + den) / (2 * den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

/// A resting or incoming limit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Order {
    pub id: u64,
    pub agent_id: u64,
    pub side: Side,
    pub qty: i64,
    pub limit_price: Price,
    pub arrival_step: u64,
}

/// One execution against a resting (maker) order. The fill price is always
/// the maker's limit price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Fill {
    pub maker_order_id: u64,
    pub maker_agent_id: u64,
    pub taker_agent_id: u64,
    pub qty: i64,
    pub price: Price,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BookError {
    DuplicateOrderId(u64),
    NonPositiveQty,
}

impl core::fmt::Display for BookError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BookError::DuplicateOrderId(id) => write!(f, "duplicate order id {id}"),
            BookError::NonPositiveQty => write!(f, "order quantity must be positive"),
        }
    }
}

/// Result of submitting a limit order: immediate fills plus the quantity
/// left resting in the book (zero if fully matched).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitResult {
    pub fills: Vec<Fill>,
    pub resting_qty: i64,
}

/// Result of a market order: fills plus any quantity that could not be
/// matched (market orders never rest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketResult {
    pub fills: Vec<Fill>,
    pub unfilled_qty: i64,
}

/// Best-of-book snapshot. `mid` always has a value via the fallback chain
/// (book mid, else last trade price, which starts at the opening price).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Quotes {
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub mid: Price,
    /// `ask - bid`; only defined when both sides are present.
    pub market_spread: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct OrderBook {
    /// Bid levels keyed by price; best bid = max key.
    bids: BTreeMap<i64, VecDeque<Order>>,
    /// Ask levels keyed by price; best ask = min key.
    asks: BTreeMap<i64, VecDeque<Order>>,
    /// Order id -> (side, price) for O(log n) cancellation.
    index: BTreeMap<u64, (Side, i64)>,
    last_trade_price: Price,
}

impl Default for OrderBook {
    fn default() -> Self {
        Self::new()
    }
}

impl OrderBook {
    pub fn new() -> Self {
        Self {
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            index: BTreeMap::new(),
            last_trade_price: OPENING_PRICE,
        }
    }

    pub fn last_trade_price(&self) -> Price {
        self.last_trade_price
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().map(|&p| Price(p))
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().map(|&p| Price(p))
    }

    pub fn contains_order(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    /// Total resting quantity on one side, across all levels.
    pub fn depth(&self, side: Side) -> i64 {
        let levels = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        levels
            .values()
            .map(|q| q.iter().map(|o| o.qty).sum::<i64>())
            .sum()
    }

    /// Best bid/ask, mid, and market spread. The mid is the tick-rounded
    /// (half-up) midpoint when both sides are present, otherwise the last
    /// trade price (initialized to the opening price).
    pub fn best_quotes(&self) -> Quotes {
        let best_bid = self.best_bid();
        let best_ask = self.best_ask();
        let (mid, market_spread) = match (best_bid, best_ask) {
            (Some(b), Some(a)) => (
                Price(div_round_half_up(b.0 + a.0, 2)),
                Some(a.0 - b.0),
            ),
            _ => (self.last_trade_price, None),
        };
        Quotes {
            best_bid,
            best_ask,
            mid,
            market_spread,
        }
    }

    /// Submits a limit order: matches best-price-first / FIFO-within-level,
    /// rests any remainder, and updates the last trade price to the
    /// volume-weighted average of this order's fills (rounded half-up).
    pub fn submit_limit_order(&mut self, order: Order) -> Result<LimitResult, BookError> {
        if order.qty <= 0 {
            return Err(BookError::NonPositiveQty);
        }
        if self.index.contains_key(&order.id) {
            return Err(BookError::DuplicateOrderId(order.id));
        }

        let mut remaining = order.qty;
        let fills = self.match_against(
            order.side,
            order.agent_id,
            &mut remaining,
            Some(order.limit_price),
            order.arrival_step,
        );
        self.record_vwap(&fills);

        if remaining > 0 {
            let mut resting = order;
            resting.qty = remaining;
            let levels = match order.side {
                Side::Buy => &mut self.bids,
                Side::Sell => &mut self.asks,
            };
            levels
                .entry(order.limit_price.0)
                .or_default()
                .push_back(resting);
            self.index
                .insert(order.id, (order.side, order.limit_price.0));
        }

        Ok(LimitResult {
            fills,
            resting_qty: remaining,
        })
    }

    /// Executes a market order: walks the opposite side until exhaustion.
    /// Any unfilled remainder is discarded and reported.
    pub fn submit_market_order(
        &mut self,
        side: Side,
        qty: i64,
        taker_agent_id: u64,
        step: u64,
    ) -> Result<MarketResult, BookError> {
        if qty <= 0 {
            return Err(BookError::NonPositiveQty);
        }
        let mut remaining = qty;
        let fills = self.match_against(side, taker_agent_id, &mut remaining, None, step);
        self.record_vwap(&fills);
        Ok(MarketResult {
            fills,
            unfilled_qty: remaining,
        })
    }

    /// Removes an order if present and returns its remaining quantity;
    /// an unknown id is a 0 result, not a fault.
    pub fn cancel_order(&mut self, order_id: u64) -> i64 {
        let Some((side, price)) = self.index.remove(&order_id) else {
            return 0;
        };
        let levels = match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        let Some(queue) = levels.get_mut(&price) else {
            return 0;
        };
        let mut removed = 0;
        if let Some(pos) = queue.iter().position(|o| o.id == order_id) {
            removed = queue[pos].qty;
            queue.remove(pos);
        }
        if queue.is_empty() {
            levels.remove(&price);
        }
        removed
    }

    /// Core matching loop shared by limit and market orders. `limit` of
    /// `None` means match at any price.
    fn match_against(
        &mut self,
        side: Side,
        taker_agent_id: u64,
        remaining: &mut i64,
        limit: Option<Price>,
        step: u64,
    ) -> Vec<Fill> {
        let mut fills = Vec::new();
        while *remaining > 0 {
            let best = match side {
                Side::Buy => self.asks.keys().next().copied(),
                Side::Sell => self.bids.keys().next_back().copied(),
            };
            let Some(level_price) = best else { break };
            let crosses = match (side, limit) {
                (_, None) => true,
                (Side::Buy, Some(l)) => level_price <= l.0,
                (Side::Sell, Some(l)) => level_price >= l.0,
            };
            if !crosses {
                break;
            }
            let levels = match side {
                Side::Buy => &mut self.asks,
                Side::Sell => &mut self.bids,
            };
            let queue = levels.get_mut(&level_price).expect("level exists");
            while *remaining > 0 {
                let Some(maker) = queue.front_mut() else { break };
                let traded = maker.qty.min(*remaining);
                fills.push(Fill {
                    maker_order_id: maker.id,
                    maker_agent_id: maker.agent_id,
                    taker_agent_id,
                    qty: traded,
                    price: Price(level_price),
                    step,
                });
                maker.qty -= traded;
                *remaining -= traded;
                if maker.qty == 0 {
                    let id = maker.id;
                    queue.pop_front();
                    self.index.remove(&id);
                }
            }
            if queue.is_empty() {
                levels.remove(&level_price);
            }
        }
        fills
    }

    fn record_vwap(&mut self, fills: &[Fill]) {
        if fills.is_empty() {
            return;
        }
        let qty: i64 = fills.iter().map(|f| f.qty).sum();
        let notional: i64 = fills.iter().map(|f| f.qty * f.price.0).sum();
        self.last_trade_price = Price(div_round_half_up(notional, qty));
    }

    /// All resting orders in priority order, for snapshots and oracles:
    /// bids best-first, then asks best-first.
    pub fn resting_orders(&self) -> Vec<Order> {
        let mut out = Vec::new();
        for (_, queue) in self.bids.iter().rev() {
            out.extend(queue.iter().copied());
        }
        for (_, queue) in self.asks.iter() {
            out.extend(queue.iter().copied());
        }
        out
    }
}

/// Wall clock of a trading session in whole steps (1 step = 1 simulated
/// second; a 2-hour session is 7,200 steps).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    pub step: u64,
    pub steps_per_session: u64,
}

impl SimClock {
    pub fn new(steps_per_session: u64) -> Self {
        Self {
            step: 0,
            steps_per_session,
        }
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }

    pub fn session_over(&self) -> bool {
        self.step >= self.steps_per_session
    }
}
