//! A fixed-topology fully connected network (ReLU hidden layers, linear
//! head) with hand-rolled backpropagation, Adam, per-parameter freezing,
//! diagonal Fisher estimation, and an elastic quadratic penalty.
//!
//! Parameters live in one flat `f64` array laid out layer by layer:
//! weights (row-major, `out x in`) then biases, for each layer in order.
//! The same layout backs the serialized form (see [`ParamSet::to_bytes`]).

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Layer sizes, input first, output last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layers: Vec<usize>,
}

impl NetSpec {
    pub fn new(layers: Vec<usize>) -> Self {
        assert!(layers.len() >= 2, "need at least input and output layers");
        Self { layers }
    }

    /// The market-maker head: `input -> 32 -> 32 -> 32 -> 605`.
    pub fn mm_head(input_arity: usize) -> Self {
        Self::new(alloc::vec![input_arity, 32, 32, 32, crate::action::ACTION_COUNT as usize])
    }

    pub fn input_arity(&self) -> usize {
        self.layers[0]
    }

    pub fn output_arity(&self) -> usize {
        *self.layers.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Flat parameter array plus its layout descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub spec: NetSpec,
    pub values: Vec<f64>,
}

const PARAM_MAGIC: &[u8; 4] = b"MMNN";
const PARAM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamFileError {
    BadMagic,
    BadVersion(u32),
    Truncated,
    SpecMismatch { expected: String, found: String },
}

impl core::fmt::Display for ParamFileError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParamFileError::BadMagic => write!(f, "not a parameter file (bad magic)"),
            ParamFileError::BadVersion(v) => write!(f, "unsupported parameter file version {v}"),
            ParamFileError::Truncated => write!(f, "parameter file is truncated or corrupt"),
            ParamFileError::SpecMismatch { expected, found } => {
                write!(f, "network shape mismatch: expected {expected}, found {found}")
            }
        }
    }
}

impl ParamSet {
    /// He-scaled normal init for the ReLU stack; biases start at zero.
    pub fn init<R: Rng + ?Sized>(spec: NetSpec, stream: &mut R) -> Self {
        let mut values = Vec::with_capacity(spec.param_count());
        for w in spec.layers.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = libm::sqrt(2.0 / fan_in as f64);
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(stream);
                values.push(z * scale);
            }
            values.extend(core::iter::repeat(0.0).take(fan_out));
        }
        Self { spec, values }
    }

    pub fn zeros(spec: NetSpec) -> Self {
        let n = spec.param_count();
        Self {
            spec,
            values: alloc::vec![0.0; n],
        }
    }

    /// Self-describing binary form: magic `MMNN`, version, layer count,
    /// layer sizes (u32 LE), then the flat value array (f64 LE).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.spec.layers.len() + 8 * self.values.len());
        out.extend_from_slice(PARAM_MAGIC);
        out.extend_from_slice(&PARAM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.spec.layers.len() as u32).to_le_bytes());
        for &n in &self.spec.layers {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses [`ParamSet::to_bytes`] output. When `expected` is given, a
    /// differing stored shape is a fault.
    pub fn from_bytes(bytes: &[u8], expected: Option<&NetSpec>) -> Result<Self, ParamFileError> {
        let take = |at: &mut usize, n: usize| -> Result<&[u8], ParamFileError> {
            if *at + n > bytes.len() {
                return Err(ParamFileError::Truncated);
            }
            let slice = &bytes[*at..*at + n];
            *at += n;
            Ok(slice)
        };
        let mut at = 0;
        if take(&mut at, 4)? != PARAM_MAGIC {
            return Err(ParamFileError::BadMagic);
        }
        let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
        if version != PARAM_VERSION {
            return Err(ParamFileError::BadVersion(version));
        }
        let n_layers = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        if n_layers < 2 || n_layers > 64 {
            return Err(ParamFileError::Truncated);
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            layers.push(u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize);
        }
        let spec = NetSpec::new(layers);
        if let Some(want) = expected {
            if *want != spec {
                return Err(ParamFileError::SpecMismatch {
                    expected: alloc::format!("{:?}", want.layers),
                    found: alloc::format!("{:?}", spec.layers),
                });
            }
        }
        let count = spec.param_count();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()));
        }
        if at != bytes.len() {
            return Err(ParamFileError::Truncated);
        }
        Ok(Self { spec, values })
    }
}

/// Forward pass returning the output activations (Q-values).
pub fn forward(params: &ParamSet, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), params.spec.input_arity(), "input arity mismatch");
    let mut activations: Vec<f64> = x.to_vec();
    let mut offset = 0;
    let n_layers = params.spec.layers.len() - 1;
    for (l, w) in params.spec.layers.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &params.values[offset..offset + fan_in * fan_out];
        let biases = &params.values[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let mut next = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut z = biases[o];
            for (wi, ai) in row.iter().zip(&activations) {
                z += wi * ai;
            }
            if l + 1 < n_layers {
                z = z.max(0.0); // ReLU on hidden layers, linear head.
            }
            next.push(z);
        }
        activations = next;
    }
    activations
}

/// Forward pass keeping every layer's post-activation values (input
/// included), for backpropagation.
fn forward_trace(params: &ParamSet, x: &[f64]) -> Vec<Vec<f64>> {
    let mut trace = Vec::with_capacity(params.spec.layers.len());
    trace.push(x.to_vec());
    let mut offset = 0;
    let n_layers = params.spec.layers.len() - 1;
    for (l, w) in params.spec.layers.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &params.values[offset..offset + fan_in * fan_out];
        let biases = &params.values[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let prev = trace.last().unwrap();
        let mut next = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut z = biases[o];
            for (wi, ai) in row.iter().zip(prev) {
                z += wi * ai;
            }
            if l + 1 < n_layers {
                z = z.max(0.0);
            }
            next.push(z);
        }
        trace.push(next);
    }
    trace
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Mean absolute error; subgradient at a zero residual is 0.
    Mae,
    /// Mean squared error, as in the plain bootstrapped regression step.
    Mse,
}

/// One supervised sample: input, the action whose output unit is trained,
/// and the regression target for that unit.
#[derive(Debug, Clone)]
pub struct GradSample<'a> {
    pub x: &'a [f64],
    pub action: usize,
    pub target: f64,
}

/// Mean loss over a batch, restricted to each sample's selected output unit.
pub fn batch_loss(params: &ParamSet, batch: &[GradSample<'_>], loss: LossKind) -> f64 {
    assert!(!batch.is_empty());
    let mut total = 0.0;
    for s in batch {
        let q = forward(params, s.x)[s.action];
        let r = q - s.target;
        total += match loss {
            LossKind::Mae => r.abs(),
            LossKind::Mse => r * r,
        };
    }
    total / batch.len() as f64
}

/// Gradient of [`batch_loss`] with respect to every parameter.
pub fn grad(params: &ParamSet, batch: &[GradSample<'_>], loss: LossKind) -> Vec<f64> {
    assert!(!batch.is_empty());
    let mut grads = alloc::vec![0.0; params.values.len()];
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        accumulate_sample_grad(params, s, loss, scale, &mut grads);
    }
    grads
}

/// Adds `scale * d(sample loss)/d(theta)` into `grads`.
fn accumulate_sample_grad(
    params: &ParamSet,
    sample: &GradSample<'_>,
    loss: LossKind,
    scale: f64,
    grads: &mut [f64],
) {
    let trace = forward_trace(params, sample.x);
    let n_layers = params.spec.layers.len() - 1;
    let out = &trace[n_layers];
    let residual = out[sample.action] - sample.target;
    let dloss = match loss {
        LossKind::Mae => {
            if residual > 0.0 {
                1.0
            } else if residual < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        LossKind::Mse => 2.0 * residual,
    };
    if dloss == 0.0 {
        return;
    }

    // Delta on the output layer: only the selected unit is driven.
    let mut delta = alloc::vec![0.0; params.spec.output_arity()];
    delta[sample.action] = dloss * scale;

    // Layer parameter offsets, front to back.
    let mut offsets = Vec::with_capacity(n_layers);
    let mut offset = 0;
    for w in params.spec.layers.windows(2) {
        offsets.push(offset);
        offset += w[0] * w[1] + w[1];
    }

    for l in (0..n_layers).rev() {
        let fan_in = params.spec.layers[l];
        let fan_out = params.spec.layers[l + 1];
        let base = offsets[l];
        let prev = &trace[l];
        // Weight and bias gradients.
        for o in 0..fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = base + o * fan_in;
            for i in 0..fan_in {
                grads[row + i] += d * prev[i];
            }
            grads[base + fan_in * fan_out + o] += d;
        }
        if l == 0 {
            break;
        }
        // Propagate to the previous layer through the ReLU gate.
        let weights = &params.values[base..base + fan_in * fan_out];
        let mut prev_delta = alloc::vec![0.0; fan_in];
        for o in 0..fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            for (pd, wi) in prev_delta.iter_mut().zip(row) {
                *pd += d * wi;
            }
        }
        for (pd, &a) in prev_delta.iter_mut().zip(prev.iter()) {
            if a <= 0.0 {
                *pd = 0.0;
            }
        }
        delta = prev_delta;
    }
}

/// Adam optimizer state. Defaults mirror the training setup: lr 0.01,
/// beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: alloc::vec![0.0; param_count],
            v: alloc::vec![0.0; param_count],
        }
    }
}

/// Per-parameter freeze mask; `true` entries never move.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub frozen: Vec<bool>,
}

impl FreezeMask {
    pub fn none(param_count: usize) -> Self {
        Self {
            frozen: alloc::vec![false; param_count],
        }
    }

    pub fn all(param_count: usize) -> Self {
        Self {
            frozen: alloc::vec![true; param_count],
        }
    }

    /// Freezes every layer except the last `trainable_tail` ones (the
    /// usual freezing-layers setup trains only the head).
    pub fn freeze_all_but_last(spec: &NetSpec, trainable_tail: usize) -> Self {
        let n_layers = spec.layers.len() - 1;
        let mut frozen = Vec::with_capacity(spec.param_count());
        for (l, w) in spec.layers.windows(2).enumerate() {
            let is_frozen = l + trainable_tail < n_layers;
            frozen.extend(core::iter::repeat(is_frozen).take(w[0] * w[1] + w[1]));
        }
        Self { frozen }
    }
}

/// One Adam update over the unfrozen parameters; frozen entries (and their
/// moments) stay untouched.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[f64],
    state: &mut AdamState,
    freeze: Option<&FreezeMask>,
) {
    assert_eq!(grads.len(), params.values.len());
    if let Some(mask) = freeze {
        assert_eq!(mask.frozen.len(), params.values.len());
    }
    state.t += 1;
    let bc1 = 1.0 - libm::pow(state.beta1, state.t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, state.t as f64);
    for i in 0..params.values.len() {
        if freeze.map_or(false, |m| m.frozen[i]) {
            continue;
        }
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.values[i] -= state.lr * m_hat / (libm::sqrt(v_hat) + state.eps);
    }
}

/// Diagonal Fisher estimate with the anchor parameters it was taken at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherDiag {
    pub values: Vec<f64>,
    pub anchor: Vec<f64>,
}

/// Diagonal Fisher estimate: the mean over samples of the squared
/// per-parameter gradient of each sample's own loss at the current
/// parameters.
pub fn estimate_fisher_diag(
    params: &ParamSet,
    dataset: &[GradSample<'_>],
    loss: LossKind,
) -> FisherDiag {
    assert!(!dataset.is_empty());
    let mut acc = alloc::vec![0.0; params.values.len()];
    let mut sample_grad = alloc::vec![0.0; params.values.len()];
    for s in dataset {
        sample_grad.iter_mut().for_each(|g| *g = 0.0);
        accumulate_sample_grad(params, s, loss, 1.0, &mut sample_grad);
        for (a, g) in acc.iter_mut().zip(&sample_grad) {
            *a += g * g;
        }
    }
    let n = dataset.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    FisherDiag {
        values: acc,
        anchor: params.values.clone(),
    }
}

/// Elastic quadratic penalty `sum (lambda/2) F_i (theta_i - anchor_i)^2`
/// and its gradient contribution `lambda F_i (theta_i - anchor_i)`.
pub fn ewc_penalty_and_grad(
    params: &ParamSet,
    fisher: &FisherDiag,
    lambda: f64,
) -> (f64, Vec<f64>) {
    assert_eq!(fisher.values.len(), params.values.len());
    let mut penalty = 0.0;
    let mut grad = Vec::with_capacity(params.values.len());
    for i in 0..params.values.len() {
        let d = params.values[i] - fisher.anchor[i];
        penalty += 0.5 * lambda * fisher.values[i] * d * d;
        grad.push(lambda * fisher.values[i] * d);
    }
    (penalty, grad)
}
