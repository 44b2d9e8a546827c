//! Monte-Carlo posterior predictive and the law-of-total-variance split.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::VariationalPosterior;
use crate::model::{ModelError, TrainedModel, Variant};
use crate::net::ParamBlock;
use crate::net::{forward, variance_of, DropoutMask, NetError, SpaceTimePoint};
use crate::refsolver::FieldGrid;

pub const DEFAULT_SAMPLES_BPINN: usize = 500;
pub const DEFAULT_SAMPLES_DPINN: usize = 200;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("variant {variant} needs at least 2 samples, got {k}")]
    Samples { variant: Variant, k: usize },
    #[error("sample vectors must have equal length ≥ 2 (got {mu} and {var})")]
    Length { mu: usize, var: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Predictive moments at one point, in °C and K².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub epistemic_var: f64,
    pub aleatoric_var: f64,
    pub total_var: f64,
    pub n_samples: usize,
}

impl PredictiveDistribution {
    pub fn new(mean: f64, epistemic_var: f64, aleatoric_var: f64, n_samples: usize) -> Self {
        Self { mean, epistemic_var, aleatoric_var, total_var: epistemic_var + aleatoric_var, n_samples }
    }

    pub fn std(&self) -> f64 {
        self.total_var.sqrt()
    }
}

/// Running mean and population variance of μ̂ plus the mean of σ̂².
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    var_sum: f64,
}

impl Moments {
    fn push(&mut self, mu: f64, var: f64) {
        self.n += 1;
        let d = mu - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (mu - self.mean);
        self.var_sum += var;
    }

    fn split(&self) -> (f64, f64, f64) {
        let k = self.n as f64;
        let epistemic = (self.m2 / k).max(0.0);
        let aleatoric = self.var_sum / k;
        (epistemic, aleatoric, epistemic + aleatoric)
    }
}

/// Epistemic (population variance of the means), aleatoric (mean variance)
/// and their sum.
pub fn decompose(samples_mu: &[f64], samples_var: &[f64]) -> Result<(f64, f64, f64), UqError> {
    if samples_mu.len() != samples_var.len() || samples_mu.len() < 2 {
        return Err(UqError::Length { mu: samples_mu.len(), var: samples_var.len() });
    }
    let mut m = Moments::default();
    for (&mu, &var) in samples_mu.iter().zip(samples_var) {
        m.push(mu, var);
    }
    Ok(m.split())
}

/// One Monte-Carlo draw: a parameter vector and an optional dropout mask.
struct Draw {
    theta: Vec<f64>,
    mask: Option<DropoutMask>,
}

fn draws(model: &TrainedModel, k: usize, seed: u64) -> Result<Vec<Draw>, UqError> {
    let stream = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        rng
    };
    match (&model.params, model.variant) {
        (ParamBlock::Variational { mu, rho }, v) if v.is_bayesian() => {
            let q = VariationalPosterior { mu: mu.clone(), rho: rho.clone() };
            Ok((0..k).map(|i| Draw { theta: q.sample(&mut stream(i)), mask: None }).collect())
        }
        (ParamBlock::Deterministic { theta }, v) if v.is_dropout() => {
            let hidden = model.config.hidden_sizes();
            let rate = model.config.dropout_rate;
            Ok((0..k)
                .map(|i| Draw { theta: theta.clone(), mask: Some(DropoutMask::sample(hidden, rate, &mut stream(i))) })
                .collect())
        }
        (ParamBlock::Deterministic { theta }, Variant::Pinn) => Ok(vec![Draw { theta: theta.clone(), mask: None }]),
        (_, v) => Err(ModelError::Block(v).into()),
    }
}

/// Predictive distribution at normalized points.
///
/// Sample `i` uses stream `i` of the seeded generator: a posterior draw for
/// B-PINNs, a dropout mask for d-PINNs. Vanilla PINNs ignore `k` and report
/// zero variances. Points are evaluated in parallel; each point reduces its
/// samples in index order, so results do not depend on the thread count.
pub fn predict(
    model: &TrainedModel,
    points: &[SpaceTimePoint],
    k: usize,
    seed: u64,
) -> Result<Vec<PredictiveDistribution>, UqError> {
    let variant = model.variant;
    if variant.is_stochastic() && k < 2 {
        return Err(UqError::Samples { variant, k });
    }
    let layout = model.layout()?;
    let draws = draws(model, k, seed)?;
    let fixed_var = model.sigma.sigma_bc * model.sigma.sigma_bc;
    let norm = model.norm;
    let scale2 = norm.temp_scale * norm.temp_scale;
    points
        .par_iter()
        .map(|&p| {
            let mut m = Moments::default();
            for d in &draws {
                let out = forward(&layout, &d.theta, p, d.mask.as_ref())?;
                let var = match (variant, out.pre_var) {
                    (Variant::Pinn, _) => 0.0,
                    (v, Some(pre)) if v.is_hetero() => variance_of(pre),
                    _ => fixed_var,
                };
                m.push(out.mean, var);
            }
            let (epi, ale, _) = m.split();
            let epi = if variant == Variant::Pinn { 0.0 } else { epi };
            Ok(PredictiveDistribution::new(norm.denormalize_temp(m.mean), epi * scale2, ale * scale2, m.n))
        })
        .collect()
}

/// Predictive fields on a rectangular grid in physical coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionGrid {
    pub mean: FieldGrid,
    pub epistemic: FieldGrid,
    pub aleatoric: FieldGrid,
    pub total: FieldGrid,
}

impl PredictionGrid {
    pub fn distributions(&self) -> Vec<PredictiveDistribution> {
        (0..self.mean.values().len())
            .map(|i| {
                PredictiveDistribution {
                    mean: self.mean.values()[i],
                    epistemic_var: self.epistemic.values()[i],
                    aleatoric_var: self.aleatoric.values()[i],
                    total_var: self.total.values()[i],
                    n_samples: 0,
                }
            })
            .collect()
    }

    /// Long format `x,t_s,mean,eu,au,tu`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,t_s,mean,eu,au,tu\n");
        for (i, (x, t, m)) in self.mean.points().enumerate() {
            let _ = writeln!(
                s,
                "{x},{t},{m},{},{},{}",
                self.epistemic.values()[i],
                self.aleatoric.values()[i],
                self.total.values()[i]
            );
        }
        s
    }
}

pub fn predict_grid(model: &TrainedModel, x: &[f64], t: &[f64], k: usize, seed: u64) -> Result<PredictionGrid, UqError> {
    let points: Vec<SpaceTimePoint> =
        t.iter().flat_map(|&tt| x.iter().map(move |&xx| (xx, tt))).map(|(xx, tt)| model.norm.point(xx, tt)).collect();
    let preds = predict(model, &points, k, seed)?;
    let field = |f: fn(&PredictiveDistribution) -> f64| FieldGrid::new(x.to_vec(), t.to_vec(), preds.iter().map(f).collect());
    Ok(PredictionGrid {
        mean: field(|p| p.mean),
        epistemic: field(|p| p.epistemic_var),
        aleatoric: field(|p| p.aleatoric_var),
        total: field(|p| p.total_var),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_three_samples() {
        let (e, a, t) = decompose(&[1.0, 2.0, 3.0], &[0.1, 0.1, 0.1]).unwrap();
        assert!((e - 2.0 / 3.0).abs() < 1e-15);
        assert!((a - 0.1).abs() < 1e-15);
        assert_eq!(t, e + a);
    }

    #[test]
    fn degenerate_inputs() {
        let (e, a, _) = decompose(&[4.0; 5], &[0.3; 5]).unwrap();
        assert_eq!(e, 0.0);
        assert!((a - 0.3).abs() < 1e-15);
        assert!(decompose(&[1.0, 2.0], &[1.0]).is_err());
        assert!(decompose(&[1.0], &[1.0]).is_err());
    }
}
