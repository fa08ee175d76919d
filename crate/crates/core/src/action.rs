//! The market maker's discrete action space: an (eta_buy, eta_sell,
//! eta_hedge) triple in bijection with indices 0..605.
//!
//! Buy/sell etas live on the 11-point grid {-1, -0.8, ..., 0.8, 1}; the
//! hedge eta on {0, 0.25, 0.5, 0.75, 1}. Actions are stored as grid indices
//! so the codec and all downstream spread arithmetic stay exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Number of buy (and sell) eta grid points.
pub const ETA_SPREAD_GRID: u16 = 11;
/// Number of hedge eta grid points.
pub const ETA_HEDGE_GRID: u16 = 5;
/// Total number of discrete actions: 11 * 11 * 5.
pub const ACTION_COUNT: u16 = ETA_SPREAD_GRID * ETA_SPREAD_GRID * ETA_HEDGE_GRID;

/// Index into the flat action space, in `0..605`.
pub type ActionIndex = u16;

/// One market-making action, held as grid indices:
/// `buy`/`sell` in 0..=10 (eta = idx/5 - 1), `hedge` in 0..=4 (eta = idx/4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EtaAction {
    pub buy: u8,
    pub sell: u8,
    pub hedge: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionError {
    IndexOutOfRange(u16),
    OffGridEta(f64),
}

impl core::fmt::Display for ActionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ActionError::IndexOutOfRange(i) => write!(f, "action index {i} out of 0..605"),
            ActionError::OffGridEta(x) => write!(f, "eta value {x} is not on its grid"),
        }
    }
}

impl EtaAction {
    pub fn new(buy: u8, sell: u8, hedge: u8) -> Self {
        debug_assert!(buy < 11 && sell < 11 && hedge < 5);
        Self { buy, sell, hedge }
    }

    /// Buy spread multiplier offset in [-1, 1].
    pub fn eta_buy(&self) -> f64 {
        f64::from(self.buy) / 5.0 - 1.0
    }

    /// Sell spread multiplier offset in [-1, 1].
    pub fn eta_sell(&self) -> f64 {
        f64::from(self.sell) / 5.0 - 1.0
    }

    /// Fraction of inventory to hedge, in {0, 0.25, 0.5, 0.75, 1}.
    pub fn eta_hedge(&self) -> f64 {
        f64::from(self.hedge) / 4.0
    }

    /// Reconstructs an action from eta values; faults on off-grid input.
    pub fn from_etas(eta_buy: f64, eta_sell: f64, eta_hedge: f64) -> Result<Self, ActionError> {
        let grid = |x: f64, scale: f64, offset: f64, n: u8| -> Result<u8, ActionError> {
            let raw = (x + offset) * scale;
            let idx = libm::round(raw);
            if (raw - idx).abs() > 1e-9 || idx < 0.0 || idx >= f64::from(n) {
                return Err(ActionError::OffGridEta(x));
            }
            Ok(idx as u8)
        };
        Ok(Self {
            buy: grid(eta_buy, 5.0, 1.0, 11)?,
            sell: grid(eta_sell, 5.0, 1.0, 11)?,
            hedge: grid(eta_hedge, 4.0, 0.0, 5)?,
        })
    }
}

/// Decodes an action index (buy-major, then sell, then hedge).
pub fn action_to_etas(index: ActionIndex) -> Result<EtaAction, ActionError> {
    if index >= ACTION_COUNT {
        return Err(ActionError::IndexOutOfRange(index));
    }
    Ok(EtaAction {
        buy: (index / 55) as u8,
        sell: ((index / 5) % 11) as u8,
        hedge: (index % 5) as u8,
    })
}

/// Encodes an action as its index: `buy * 55 + sell * 5 + hedge`.
pub fn etas_to_action(action: EtaAction) -> ActionIndex {
    u16::from(action.buy) * 55 + u16::from(action.sell) * 5 + u16::from(action.hedge)
}

/// Uniform draw over all 605 actions.
pub fn random_action<R: Rng + ?Sized>(stream: &mut R) -> EtaAction {
    action_to_etas(stream.random_range(0..ACTION_COUNT)).expect("in range")
}
