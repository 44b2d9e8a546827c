//! Second-order input derivatives and first-order parameter gradients.
//!
//! Input derivatives (∂x, ∂²x, ∂t) travel forward as [`Jet2`] values; the
//! jets themselves are built from [`Scalar`] values, so instantiating them
//! with tape variables gives parameter gradients of anything computed from
//! the derivatives, including PDE residual losses.

mod check;
mod jet;
mod scalar;
mod tape;

pub use check::{check_gradient, CoordinateCheck, GradientReport};
pub use jet::{propagate_jet, Activation, Jet2, Layer};
pub use scalar::Scalar;
pub use tape::{Gradients, OpKind, Tape, TapeNode, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error(
        "layer {layer}: expected {fan_out}x{fan_in} weights and {fan_out} biases for {fan_in} inputs, \
         got {weights} weights, {bias} biases, {inputs} inputs"
    )]
    Dimension {
        layer: usize,
        fan_in: usize,
        fan_out: usize,
        weights: usize,
        bias: usize,
        inputs: usize,
    },
    #[error("non-finite loss {value}{}", .param.map(|p| format!(" (parameter {p})")).unwrap_or_default())]
    NonFinite { value: f64, param: Option<usize> },
}

/// A scalar function of a parameter vector, evaluable in any [`Scalar`].
pub trait Objective {
    fn evaluate<S: Scalar>(&self, params: &[S]) -> S;
}

/// Loss value and its gradient with respect to every parameter.
pub fn grad<O: Objective>(objective: &O, params: &[f64]) -> Result<(f64, Vec<f64>), DiffError> {
    let mut tape = Tape::with_capacity(4 * params.len() + 64, 8 * params.len() + 64);
    grad_on(&mut tape, objective, params)
}

/// As [`grad`], recording on a caller-owned tape to reuse its allocations.
pub fn grad_on<O: Objective>(
    tape: &mut Tape,
    objective: &O,
    params: &[f64],
) -> Result<(f64, Vec<f64>), DiffError> {
    tape.reset();
    let vars = tape.vars(params);
    let loss = objective.evaluate(&vars);
    let value = loss.value();
    if !value.is_finite() {
        return Err(DiffError::NonFinite {
            value,
            param: params.iter().position(|p| !p.is_finite()),
        });
    }
    let gradient = tape.gradient(loss).wrt_all(&vars);
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(DiffError::NonFinite {
            value: gradient[i],
            param: Some(i),
        });
    }
    Ok((value, gradient))
}
