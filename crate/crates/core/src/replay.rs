//! Experience replay: a fixed-capacity ring of transitions with uniform
//! sampling, plus the old/new rehearsal mixer used for continual training.

use alloc::vec::Vec;
use rand::Rng;

use crate::action::ActionIndex;
use crate::rewards::RewardVector;

/// One stored experience. Rewards are kept as the full two-component
/// vector; scalar-reward agents read only `r.r1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: ActionIndex,
    pub next_state: Vec<f64>,
    pub r: RewardVector,
}

/// Ring buffer of transitions; overwrites the oldest entry once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    write_at: usize,
}

impl ReplayBuffer {
    /// The default replay capacity used in training.
    pub const DEFAULT_CAPACITY: usize = 1_000_000;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            items: Vec::new(),
            write_at: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.write_at] = t;
            self.write_at = (self.write_at + 1) % self.capacity;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `k` transitions drawn uniformly with replacement. Sampling an empty
    /// buffer is a caller bug.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, k: usize, stream: &mut R) -> Vec<&'a Transition> {
        assert!(!self.items.is_empty(), "sampling an empty replay buffer");
        (0..k)
            .map(|_| &self.items[stream.random_range(0..self.items.len())])
            .collect()
    }
}

/// Draws `round(gamma_mix * k)` transitions from the old buffer and the
/// remainder from the new one. If one source is empty while its share is
/// positive, its share is filled from the other source (logged as a
/// warning).
pub fn rehearsal_sample<'a, R: Rng + ?Sized>(
    old: &'a ReplayBuffer,
    new: &'a ReplayBuffer,
    gamma_mix: f64,
    k: usize,
    stream: &mut R,
) -> Vec<&'a Transition> {
    assert!((0.0..=1.0).contains(&gamma_mix));
    let mut from_old = libm::round(gamma_mix * k as f64) as usize;
    let mut from_new = k - from_old;
    if old.is_empty() && from_old > 0 {
        log::warn!("rehearsal: old buffer empty, drawing its share from new experiences");
        from_new += from_old;
        from_old = 0;
    }
    if new.is_empty() && from_new > 0 {
        log::warn!("rehearsal: new buffer empty, drawing its share from old experiences");
        from_old += from_new;
        from_new = 0;
    }
    let mut out = Vec::with_capacity(k);
    if from_old > 0 {
        out.extend(old.sample(from_old, stream));
    }
    if from_new > 0 {
        out.extend(new.sample(from_new, stream));
    }
    out
}
