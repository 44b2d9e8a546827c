use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{self, Var};

/// Arithmetic shared by plain `f64` evaluation and tape recording.
///
/// Losses and network passes are written once against this trait; the `f64`
/// instantiation serves finite-difference checks and inference, the [`Var`]
/// instantiation records a tape for parameter gradients.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant living in the same evaluation context as `self`.
    fn constant(&self, c: f64) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn softplus(self) -> Self;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn affine(weights: &[Self], inputs: &[Self], bias: Option<Self>) -> Self;
    fn sum(items: &[Self]) -> Self;

    fn square(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn constant(&self, c: f64) -> Self {
        c
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn softplus(self) -> Self {
        tape::softplus(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn affine(weights: &[Self], inputs: &[Self], bias: Option<Self>) -> Self {
        assert_eq!(weights.len(), inputs.len(), "affine: length mismatch");
        // same accumulation order as the tape node
        let mut acc = 0.0;
        for (w, x) in weights.iter().zip(inputs) {
            acc += w * x;
        }
        if let Some(b) = bias {
            acc += b;
        }
        acc
    }
    fn sum(items: &[Self]) -> Self {
        let mut acc = 0.0;
        for v in items {
            acc += v;
        }
        acc
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(&self) -> f64 {
        Var::value(self)
    }
    fn constant(&self, c: f64) -> Self {
        self.tape().constant(c)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn softplus(self) -> Self {
        Var::softplus(self)
    }
    fn abs(self) -> Self {
        Var::abs(self)
    }
    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }
    fn affine(weights: &[Self], inputs: &[Self], bias: Option<Self>) -> Self {
        Var::affine(weights, inputs, bias)
    }
    fn sum(items: &[Self]) -> Self {
        Var::sum(items)
    }
}
