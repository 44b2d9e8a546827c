//! Fully connected tanh network with a mean head and an optional variance head.

mod checkpoint;
mod dropout;

pub use checkpoint::{Checkpoint, CheckpointError, ParamBlock};
pub use dropout::DropoutMask;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{propagate_jet, Activation, DiffError, Jet2, Layer, Scalar};

/// Floor added to the softplus variance head.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("parameter vector has {got} entries, layout expects {expected}")]
    Layout { expected: usize, got: usize },
    #[error("dropout mask does not fit the hidden layers")]
    Mask,
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Normalized network input; both coordinates live in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: f64,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: f64, t: f64) -> Self {
        Self { x, t }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    pub variance_head: bool,
    pub dropout_rate: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![2, 50, 50, 2],
            variance_head: true,
            dropout_rate: 0.0,
        }
    }
}

impl MlpConfig {
    /// `[2, hidden..., 2]` with variance head, or `[2, hidden..., 1]` without.
    pub fn with_hidden(hidden: &[usize], variance_head: bool, dropout_rate: f64) -> Self {
        let mut layer_sizes = vec![2];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(if variance_head { 2 } else { 1 });
        Self {
            layer_sizes,
            variance_head,
            dropout_rate,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 {
            return Err(NetError::Config("need at least input and output layers".into()));
        }
        if sizes[0] != 2 {
            return Err(NetError::Config(format!("input layer must have 2 units, got {}", sizes[0])));
        }
        let want = if self.variance_head { 2 } else { 1 };
        if *sizes.last().unwrap() != want {
            return Err(NetError::Config(format!(
                "output layer must have {want} unit(s) (variance head {}), got {}",
                if self.variance_head { "on" } else { "off" },
                sizes.last().unwrap()
            )));
        }
        if sizes.contains(&0) {
            return Err(NetError::Config("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetError::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<Layout, NetError> {
        self.validate()?;
        Ok(Layout::new(&self.layer_sizes))
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub bias: usize,
}

/// Offsets of each layer's weights and biases inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    sizes: Vec<usize>,
    slots: Vec<LayerSlot>,
    len: usize,
}

impl Layout {
    fn new(sizes: &[usize]) -> Self {
        let mut offset = 0;
        let slots = sizes
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    fan_in: w[0],
                    fan_out: w[1],
                    weights: offset,
                    bias: offset + w[0] * w[1],
                };
                offset = slot.bias + w[1];
                slot
            })
            .collect();
        Self {
            sizes: sizes.to_vec(),
            slots,
            len: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn slots(&self) -> &[LayerSlot] {
        &self.slots
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer<'a, S>(&self, index: usize, params: &'a [S]) -> Layer<'a, S> {
        let s = self.slots[index];
        Layer {
            index,
            fan_in: s.fan_in,
            fan_out: s.fan_out,
            weights: &params[s.weights..s.bias],
            bias: &params[s.bias..s.bias + s.fan_out],
        }
    }

    fn check<S>(&self, params: &[S]) -> Result<(), NetError> {
        if params.len() != self.len {
            return Err(NetError::Layout {
                expected: self.len,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for s in &self.slots {
            let limit = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
            for w in &mut out[s.weights..s.bias] {
                *w = rng.random_range(-limit..limit);
            }
        }
        out
    }
}

/// Flat parameter vector tied to its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl NetworkParams {
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self, NetError> {
        layout.check(&values)?;
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn glorot<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        let values = layout.glorot(rng);
        Self { layout, values }
    }

    pub fn forward(&self, point: SpaceTimePoint, mask: Option<&DropoutMask>) -> Result<NetOutput<f64>, NetError> {
        forward(&self.layout, &self.values, point, mask)
    }

    pub fn forward_with_derivatives(&self, point: SpaceTimePoint) -> Result<Jet2<f64>, NetError> {
        Ok(forward_jet(&self.layout, &self.values, point, None)?.mean)
    }
}

/// Raw network heads: the solution mean and, when enabled, the unconstrained
/// pre-variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetOutput<S> {
    pub mean: S,
    pub pre_var: Option<S>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JetOutput<S> {
    pub mean: Jet2<S>,
    pub pre_var: Option<Jet2<S>>,
}

/// σ² = softplus(pre_var) + 1e-6.
pub fn variance_of<S: Scalar>(pre_var: S) -> S {
    pre_var.softplus() + VARIANCE_FLOOR
}

fn check_mask(layout: &Layout, mask: Option<&DropoutMask>) -> Result<(), NetError> {
    if let Some(m) = mask {
        let hidden = &layout.sizes[1..layout.sizes.len() - 1];
        if !m.fits(hidden) {
            return Err(NetError::Mask);
        }
    }
    Ok(())
}

/// Derivative-free pass.
pub fn forward<S: Scalar>(
    layout: &Layout,
    params: &[S],
    point: SpaceTimePoint,
    mask: Option<&DropoutMask>,
) -> Result<NetOutput<S>, NetError> {
    layout.check(params)?;
    check_mask(layout, mask)?;
    let ctx = params[0];
    let mut act = vec![ctx.constant(point.x), ctx.constant(point.t)];
    let last = layout.slots.len() - 1;
    for i in 0..=last {
        let activation = if i == last { Activation::Identity } else { Activation::Tanh };
        act = layout.layer(i, params).apply(&act, activation)?;
        if i < last {
            if let Some(m) = mask {
                for (a, &f) in act.iter_mut().zip(m.factors(i)) {
                    *a = *a * f;
                }
            }
        }
    }
    Ok(NetOutput {
        mean: act[0],
        pre_var: act.get(1).copied(),
    })
}

/// Pass carrying jets; derivatives are taken w.r.t. the normalized inputs.
pub fn forward_jet<S: Scalar>(
    layout: &Layout,
    params: &[S],
    point: SpaceTimePoint,
    mask: Option<&DropoutMask>,
) -> Result<JetOutput<S>, NetError> {
    layout.check(params)?;
    check_mask(layout, mask)?;
    let ctx = params[0];
    let mut act = vec![Jet2::seed_x(ctx.constant(point.x)), Jet2::seed_t(ctx.constant(point.t))];
    let last = layout.slots.len() - 1;
    for i in 0..=last {
        let activation = if i == last { Activation::Identity } else { Activation::Tanh };
        act = propagate_jet(&layout.layer(i, params), &act, activation)?;
        if i < last {
            if let Some(m) = mask {
                for (a, &f) in act.iter_mut().zip(m.factors(i)) {
                    *a = a.scale(f);
                }
            }
        }
    }
    Ok(JetOutput {
        mean: act[0],
        pre_var: act.get(1).copied(),
    })
}
