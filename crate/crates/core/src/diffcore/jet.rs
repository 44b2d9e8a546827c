use super::scalar::Scalar;
use super::DiffError;

/// Truncated Taylor jet in the two network inputs: the value together with
/// ∂/∂x, ∂²/∂x² and ∂/∂t. Mixed and ∂²/∂t² terms are not carried.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2<S> {
    pub value: S,
    pub d_x: S,
    pub d_xx: S,
    pub d_t: S,
}

impl<S: Scalar> Jet2<S> {
    pub fn new(value: S, d_x: S, d_xx: S, d_t: S) -> Self {
        Self {
            value,
            d_x,
            d_xx,
            d_t,
        }
    }

    /// Jet of a quantity that depends on neither input.
    pub fn constant(value: S) -> Self {
        let z = value.constant(0.0);
        Self::new(value, z, z, z)
    }

    /// Jet of the input `x` itself.
    pub fn seed_x(x: S) -> Self {
        Self::new(x, x.constant(1.0), x.constant(0.0), x.constant(0.0))
    }

    /// Jet of the input `t` itself.
    pub fn seed_t(t: S) -> Self {
        Self::new(t, t.constant(0.0), t.constant(0.0), t.constant(1.0))
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(self.value * c, self.d_x * c, self.d_xx * c, self.d_t * c)
    }

    /// Chain rule through tanh: with s = 1 − tanh², the second derivative
    /// picks up the −2·tanh·s·(∂x)² curvature term.
    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        let s = -(t * t) + 1.0;
        let curvature = t * s * self.d_x.square() * 2.0;
        Self::new(t, s * self.d_x, s * self.d_xx - curvature, s * self.d_t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Borrowed view of one dense layer: `weights` is row-major `fan_out × fan_in`.
#[derive(Clone, Copy, Debug)]
pub struct Layer<'a, S> {
    pub index: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: &'a [S],
    pub bias: &'a [S],
}

impl<S: Scalar> Layer<'_, S> {
    fn check(&self, inputs: usize) -> Result<(), DiffError> {
        if self.weights.len() != self.fan_in * self.fan_out
            || self.bias.len() != self.fan_out
            || inputs != self.fan_in
        {
            return Err(DiffError::Dimension {
                layer: self.index,
                fan_in: self.fan_in,
                fan_out: self.fan_out,
                weights: self.weights.len(),
                bias: self.bias.len(),
                inputs,
            });
        }
        Ok(())
    }

    /// Plain forward pass of the layer.
    pub fn apply(&self, inputs: &[S], activation: Activation) -> Result<Vec<S>, DiffError> {
        self.check(inputs.len())?;
        Ok(self
            .weights
            .chunks_exact(self.fan_in)
            .zip(self.bias)
            .map(|(row, &b)| {
                let z = S::affine(row, inputs, Some(b));
                match activation {
                    Activation::Tanh => z.tanh(),
                    Activation::Identity => z,
                }
            })
            .collect())
    }
}

/// Pushes input jets through `activation(W·a + b)`.
///
/// The bias only enters the value channel; every derivative channel is the
/// same linear map without offset. The value channel reproduces
/// [`Layer::apply`] bit for bit.
pub fn propagate_jet<S: Scalar>(
    layer: &Layer<'_, S>,
    inputs: &[Jet2<S>],
    activation: Activation,
) -> Result<Vec<Jet2<S>>, DiffError> {
    layer.check(inputs.len())?;
    let values: Vec<S> = inputs.iter().map(|j| j.value).collect();
    let dx: Vec<S> = inputs.iter().map(|j| j.d_x).collect();
    let dxx: Vec<S> = inputs.iter().map(|j| j.d_xx).collect();
    let dt: Vec<S> = inputs.iter().map(|j| j.d_t).collect();
    Ok(layer
        .weights
        .chunks_exact(layer.fan_in)
        .zip(layer.bias)
        .map(|(row, &b)| {
            let z = Jet2::new(
                S::affine(row, &values, Some(b)),
                S::affine(row, &dx, None),
                S::affine(row, &dxx, None),
                S::affine(row, &dt, None),
            );
            match activation {
                Activation::Tanh => z.tanh(),
                Activation::Identity => z,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer<'a>(w: &'a [f64], b: &'a [f64], fan_in: usize, fan_out: usize) -> Layer<'a, f64> {
        Layer {
            index: 0,
            fan_in,
            fan_out,
            weights: w,
            bias: b,
        }
    }

    #[test]
    fn identity_layer_passes_jet_through() {
        let l = layer(&[1.0], &[0.0], 1, 1);
        let j = Jet2::new(0.7, 1.0, 0.0, 0.0);
        let out = propagate_jet(&l, &[j], Activation::Identity).unwrap();
        assert_eq!(out[0], Jet2::new(0.7, 1.0, 0.0, 0.0));
    }

    #[test]
    fn tanh_at_origin() {
        let j = Jet2::new(0.0, 1.0, 0.0, 0.0).tanh();
        assert_eq!(j, Jet2::new(0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn affine_map_scales_derivatives_and_shifts_value() {
        let l = layer(&[2.5], &[-1.0], 1, 1);
        let j = Jet2::new(0.4, 0.3, -0.2, 1.1);
        let out = propagate_jet(&l, &[j], Activation::Identity).unwrap()[0];
        assert_eq!(out.value, 2.5 * 0.4 - 1.0);
        assert_eq!(out.d_x, 2.5 * 0.3);
        assert_eq!(out.d_xx, 2.5 * -0.2);
        assert_eq!(out.d_t, 2.5 * 1.1);
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let l = Layer {
            index: 3,
            fan_in: 2,
            fan_out: 1,
            weights: &[1.0, 2.0][..],
            bias: &[0.0][..],
        };
        let err = propagate_jet(&l, &[Jet2::constant(1.0)], Activation::Tanh).unwrap_err();
        assert!(matches!(err, DiffError::Dimension { layer: 3, .. }));
        assert!(err.to_string().contains("layer 3"));
    }

    #[test]
    fn value_channel_matches_plain_forward() {
        let w = [0.3, -1.2, 0.8, 0.05, 2.0, -0.7];
        let b = [0.1, -0.4, 0.25];
        let l = layer(&w, &b, 2, 3);
        let inputs = [Jet2::seed_x(0.37), Jet2::seed_t(0.81)];
        let jets = propagate_jet(&l, &inputs, Activation::Tanh).unwrap();
        let plain = l.apply(&[0.37, 0.81], Activation::Tanh).unwrap();
        for (j, p) in jets.iter().zip(&plain) {
            assert_eq!(j.value.to_bits(), p.to_bits());
        }
    }
}
