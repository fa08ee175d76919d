//! Deterministic market-making laboratory: a time-stepped limit-order-book
//! market with a configurable background ecology, a dealer segment where
//! reinforcement-learning market makers quote spreads against greedy
//! investors, from-scratch DQN machinery, multi-objective evaluation
//! tooling, and discounted-Thompson-sampling policy weighting.
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation on
//! owned state. File formats, CSV/JSON emission, and the command-line
//! harness live in the companion `mmlab-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod action;
pub mod background;
pub mod book;
pub mod dealer;
pub mod experiment;
pub mod nn;
pub mod pareto;
pub mod powdts;
pub mod replay;
pub mod rewards;
pub mod rl;
pub mod rng;
pub mod session;
pub mod state;
