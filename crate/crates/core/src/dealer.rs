//! The dealer segment: market makers quote buy/sell spreads around the mid,
//! greedy investors route each order to the narrowest quote, and inventory
//! is hedged at the mid for an explicit spread cost.
//!
//! All dealer arithmetic is integer ticks. Spread quotes come from the eta
//! grid, so `spread * (1 + eta)` reduces to exact rational arithmetic with
//! half-up rounding.

use alloc::vec::Vec;
use rand::Rng;
use serde::Serialize;

use crate::action::EtaAction;
use crate::book::{div_round_half_up, Price, Side};

/// A market maker's two-sided quote: distances from the mid (in ticks) at
/// which it buys from / sells to investors. Clamped non-negative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MmQuote {
    pub buy_spread: i64,
    pub sell_spread: i64,
}

/// Cash and signed inventory of one market maker. Mark-to-market is always
/// `cash + inventory * mid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MmAccount {
    pub id: u64,
    pub cash: i64,
    pub inventory: i64,
}

impl MmAccount {
    pub fn new(id: u64, opening_cash: i64) -> Self {
        Self {
            id,
            cash: opening_cash,
            inventory: 0,
        }
    }

    pub fn mark_to_market(&self, mid: Price) -> i64 {
        self.cash + self.inventory * mid.ticks()
    }
}

/// Quoted spreads from the action's etas: `round(spread_mkt * (1 + eta))`,
/// computed exactly on the eta grid (1 + eta = idx / 5) and never negative.
pub fn quote_from_etas(market_spread: i64, action: &EtaAction) -> MmQuote {
    debug_assert!(market_spread >= 0);
    let leg = |grid_idx: u8| div_round_half_up(market_spread * i64::from(grid_idx), 5);
    MmQuote {
        buy_spread: leg(action.buy),
        sell_spread: leg(action.sell),
    }
}

/// Which MM an investor order goes to: the minimum sell spread for investor
/// buys, the minimum buy spread for investor sells; ties uniform at random.
/// Faults on an empty quote list.
pub fn route_investor_order<R: Rng + ?Sized>(
    quotes: &[MmQuote],
    investor_side: Side,
    stream: &mut R,
) -> usize {
    assert!(!quotes.is_empty(), "no market maker quotes to route to");
    let relevant = |q: &MmQuote| match investor_side {
        Side::Buy => q.sell_spread,
        Side::Sell => q.buy_spread,
    };
    let best = quotes.iter().map(relevant).min().expect("non-empty");
    let tied: Vec<usize> = quotes
        .iter()
        .enumerate()
        .filter(|(_, q)| relevant(q) == best)
        .map(|(i, _)| i)
        .collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[stream.random_range(0..tied.len())]
    }
}

/// Executes one investor order against an MM at `mid` +/- the matched
/// spread. Returns the earnings delta (`qty * matched spread`). Inventory is
/// signed; shorts are allowed.
pub fn execute_mm_trade(
    account: &mut MmAccount,
    investor_side: Side,
    qty: i64,
    quote: &MmQuote,
    mid: Price,
) -> i64 {
    debug_assert!(qty > 0);
    match investor_side {
        // Investor buys: the MM sells at mid + sell_spread.
        Side::Buy => {
            account.inventory -= qty;
            account.cash += qty * (mid.ticks() + quote.sell_spread);
            qty * quote.sell_spread
        }
        // Investor sells: the MM buys at mid - buy_spread.
        Side::Sell => {
            account.inventory += qty;
            account.cash -= qty * (mid.ticks() - quote.buy_spread);
            qty * quote.buy_spread
        }
    }
}

/// Outcome of a hedging action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct HedgeResult {
    pub hedged_qty: i64,
    /// `hedged_qty * market_spread`, charged to cash.
    pub cost: i64,
}

/// Hedges `round(|inventory| * eta_hedge)` shares toward zero. Fills at the
/// mid with an explicit spread cost per share charged to cash; the
/// background book is not touched, so the cost model matches the reward's
/// hedging-cost term exactly.
pub fn hedge(
    account: &mut MmAccount,
    hedge_grid_idx: u8,
    market_spread: i64,
    mid: Price,
) -> HedgeResult {
    debug_assert!(hedge_grid_idx <= 4);
    debug_assert!(market_spread >= 0);
    let hedged_qty = div_round_half_up(account.inventory.abs() * i64::from(hedge_grid_idx), 4);
    if hedged_qty == 0 {
        return HedgeResult::default();
    }
    let cost = hedged_qty * market_spread;
    if account.inventory > 0 {
        // Sell down a long at the mid.
        account.inventory -= hedged_qty;
        account.cash += hedged_qty * mid.ticks();
    } else {
        // Buy back a short at the mid.
        account.inventory += hedged_qty;
        account.cash -= hedged_qty * mid.ticks();
    }
    account.cash -= cost;
    HedgeResult { hedged_qty, cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngRegistry;

    fn eta(buy: u8, sell: u8, hedge: u8) -> EtaAction {
        EtaAction::new(buy, sell, hedge)
    }

    #[test]
    fn quote_identity_at_eta_zero() {
        // eta = 0 is grid index 5.
        let q = quote_from_etas(10, &eta(5, 5, 0));
        assert_eq!(q, MmQuote { buy_spread: 10, sell_spread: 10 });
    }

    #[test]
    fn quote_narrows_with_negative_eta() {
        // eta_buy = -0.2 is grid index 4: 10 * 0.8 = 8.
        let q = quote_from_etas(10, &eta(4, 5, 0));
        assert_eq!(q.buy_spread, 8);
    }

    #[test]
    fn quote_at_eta_minus_one_is_zero() {
        let q = quote_from_etas(10, &eta(0, 0, 0));
        assert_eq!(q, MmQuote { buy_spread: 0, sell_spread: 0 });
    }

    #[test]
    fn routing_picks_min_spread() {
        let quotes = [
            MmQuote { buy_spread: 9, sell_spread: 5 },
            MmQuote { buy_spread: 5, sell_spread: 7 },
            MmQuote { buy_spread: 7, sell_spread: 9 },
        ];
        let mut stream = RngRegistry::new(1).agent_stream(0);
        assert_eq!(route_investor_order(&quotes, Side::Buy, &mut stream), 0);
        assert_eq!(route_investor_order(&quotes, Side::Sell, &mut stream), 1);
    }

    #[test]
    fn routing_single_mm() {
        let quotes = [MmQuote { buy_spread: 3, sell_spread: 3 }];
        let mut stream = RngRegistry::new(1).agent_stream(0);
        assert_eq!(route_investor_order(&quotes, Side::Buy, &mut stream), 0);
    }

    #[test]
    fn routing_ties_are_uniform() {
        let quotes = [
            MmQuote { buy_spread: 5, sell_spread: 5 },
            MmQuote { buy_spread: 7, sell_spread: 7 },
            MmQuote { buy_spread: 5, sell_spread: 5 },
        ];
        let mut stream = RngRegistry::new(7).agent_stream(0);
        let mut counts = [0u32; 3];
        for _ in 0..10_000 {
            counts[route_investor_order(&quotes, Side::Buy, &mut stream)] += 1;
        }
        assert_eq!(counts[1], 0);
        for &c in &[counts[0], counts[2]] {
            let frac = f64::from(c) / 10_000.0;
            assert!((frac - 0.5).abs() < 0.03, "tie fraction {frac}");
        }
    }

    #[test]
    fn trade_investor_buy() {
        let mut acct = MmAccount::new(0, 0);
        let quote = MmQuote { buy_spread: 5, sell_spread: 5 };
        let earned = execute_mm_trade(&mut acct, Side::Buy, 10, &quote, Price(100_000));
        assert_eq!(acct.inventory, -10);
        assert_eq!(acct.cash, 1_000_050);
        assert_eq!(earned, 50);
    }

    #[test]
    fn trade_investor_sell() {
        let mut acct = MmAccount::new(0, 0);
        let quote = MmQuote { buy_spread: 5, sell_spread: 5 };
        let earned = execute_mm_trade(&mut acct, Side::Sell, 10, &quote, Price(100_000));
        assert_eq!(acct.inventory, 10);
        assert_eq!(acct.cash, -999_950);
        assert_eq!(earned, 50);
    }

    #[test]
    fn zero_spread_trade_preserves_mtm() {
        let mut acct = MmAccount::new(0, 0);
        let mid = Price(100_000);
        let before = acct.mark_to_market(mid);
        let quote = MmQuote { buy_spread: 0, sell_spread: 0 };
        let earned = execute_mm_trade(&mut acct, Side::Buy, 10, &quote, mid);
        assert_eq!(earned, 0);
        assert_eq!(acct.mark_to_market(mid), before);
    }

    #[test]
    fn hedge_half_of_long() {
        let mut acct = MmAccount::new(0, 0);
        acct.inventory = 150;
        let res = hedge(&mut acct, 2, 4, Price(100_000));
        assert_eq!(res.hedged_qty, 75);
        assert_eq!(acct.inventory, 75);
    }

    #[test]
    fn hedge_zero_is_noop() {
        let mut acct = MmAccount::new(0, 123);
        acct.inventory = 40;
        let res = hedge(&mut acct, 0, 4, Price(100_000));
        assert_eq!(res, HedgeResult::default());
        assert_eq!((acct.cash, acct.inventory), (123, 40));
    }

    #[test]
    fn hedge_full_short() {
        let mut acct = MmAccount::new(0, 0);
        acct.inventory = -100;
        let res = hedge(&mut acct, 4, 4, Price(100_000));
        assert_eq!(acct.inventory, 0);
        assert_eq!(res.cost, 400);
        assert_eq!(acct.cash, -100 * 100_000 - 400);
    }

    #[test]
    fn hedge_shrinks_inventory_magnitude() {
        for idx in 0..=4u8 {
            for inv in [-37, -1, 0, 1, 8, 150] {
                let mut acct = MmAccount::new(0, 0);
                acct.inventory = inv;
                hedge(&mut acct, idx, 3, Price(100_000));
                assert!(acct.inventory.abs() <= inv.abs());
                if idx == 0 || inv == 0 {
                    assert_eq!(acct.inventory, inv);
                }
            }
        }
    }

    #[test]
    fn mark_to_market_cases() {
        let mut acct = MmAccount::new(0, 10_000_000);
        assert_eq!(acct.mark_to_market(Price(100_000)), 10_000_000);
        acct.cash = 0;
        acct.inventory = 100;
        assert_eq!(acct.mark_to_market(Price(100_000)), 10_000_000);
        // Short 50: a 10-tick mid rise costs 500 ticks of MtM.
        acct.inventory = -50;
        let low = acct.mark_to_market(Price(100_000));
        let high = acct.mark_to_market(Price(100_010));
        assert_eq!(high - low, -500);
    }
}
