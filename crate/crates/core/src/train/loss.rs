//! Loss assembly for all variants, written once over [`Scalar`].

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::bayes::{mc_kl_terms, PriorSpec, VariationalPosterior};
use crate::diffcore::{Objective, Scalar, Tape};
use crate::model::{SigmaTriplet, Variant};
use crate::net::{forward, forward_jet, variance_of, DropoutMask, Layout, SpaceTimePoint};
use crate::physics::{CollocationPoint, ResidualScaling};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_0: f64,
    pub lambda_b: f64,
    pub lambda_r: f64,
}

impl LossWeights {
    pub const BPINN: LossWeights = LossWeights { lambda_0: 1.0, lambda_b: 1.0, lambda_r: 1e-4 };
    pub const PINN: LossWeights = LossWeights { lambda_0: 1.0, lambda_b: 1.0, lambda_r: 1e-6 };

    pub fn for_variant(v: Variant) -> Self {
        if v.is_bayesian() {
            Self::BPINN
        } else {
            Self::PINN
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.lambda_0, self.lambda_b, self.lambda_r].iter().all(|l| *l >= 0.0 && l.is_finite())
    }

    pub fn scaled_residual(self, factor: f64) -> Self {
        Self { lambda_r: self.lambda_r * factor, ..self }
    }
}

/// Supervised point in normalized units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub point: SpaceTimePoint,
    pub target: f64,
}

/// One mini-batch together with the full-data sizes it stands for.
///
/// `data_scale` and `residual_scale` turn a batch sum into an unbiased
/// estimate of the full-data sum; `n_initial`, `n_boundary` and
/// `n_residual` are the full-data counts used by mean-type losses.
#[derive(Clone, Copy, Debug)]
pub struct Batches<'a> {
    pub initial: &'a [Sample],
    pub boundary: &'a [Sample],
    pub collocation: &'a [CollocationPoint],
    pub data_scale: f64,
    pub residual_scale: f64,
    pub n_initial: usize,
    pub n_boundary: usize,
    pub n_residual: usize,
}

impl<'a> Batches<'a> {
    /// The whole data set as one batch.
    pub fn full(initial: &'a [Sample], boundary: &'a [Sample], collocation: &'a [CollocationPoint]) -> Self {
        Self {
            initial,
            boundary,
            collocation,
            data_scale: 1.0,
            residual_scale: 1.0,
            n_initial: initial.len(),
            n_boundary: boundary.len(),
            n_residual: collocation.len(),
        }
    }
}

/// λ-weighted loss terms; their sum in field order is the total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Components<S> {
    pub kl: S,
    pub nll_0: S,
    pub nll_bc: S,
    pub nll_r: S,
}

impl<S: Scalar> Components<S> {
    pub fn total(&self) -> S {
        self.kl + self.nll_0 + self.nll_bc + self.nll_r
    }

    pub fn values(&self) -> Components<f64> {
        Components {
            kl: self.kl.value(),
            nll_0: self.nll_0.value(),
            nll_bc: self.nll_bc.value(),
            nll_r: self.nll_r.value(),
        }
    }
}

impl Components<f64> {
    pub fn zero() -> Self {
        Self { kl: 0.0, nll_0: 0.0, nll_bc: 0.0, nll_r: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        [self.kl, self.nll_0, self.nll_bc, self.nll_r].iter().all(|v| v.is_finite())
    }
}

/// Gaussian NLL `½ln(2π·var) + (u − μ)²/(2·var)`.
pub fn nll_hetero(u_true: f64, mu: f64, var: f64) -> Result<f64, TrainError> {
    if !(var > 0.0) {
        return Err(TrainError::Variance(var));
    }
    Ok(gaussian_nll(u_true, mu, var))
}

/// Σ [½ln(2πσ²) + rᵢ²/(2σ²)].
pub fn nll_homo(residuals: &[f64], sigma: f64) -> Result<f64, TrainError> {
    if !(sigma > 0.0) {
        return Err(TrainError::Variance(sigma));
    }
    let var = sigma * sigma;
    Ok(residuals.iter().map(|&r| gaussian_nll(r, 0.0, var)).sum())
}

fn gaussian_nll<S: Scalar>(u: f64, mu: S, var: S) -> S {
    (var * (2.0 * std::f64::consts::PI)).ln() * 0.5 + (mu - u).square() / (var * 2.0)
}

fn fixed_nll<S: Scalar>(u: f64, mu: S, sigma: f64) -> S {
    (mu - u).square() * (0.5 / (sigma * sigma)) + (sigma.ln() + HALF_LN_2PI)
}

/// Shared context of a loss evaluation.
#[derive(Clone, Debug)]
pub struct LossContext {
    pub variant: Variant,
    pub layout: Layout,
    pub scaling: ResidualScaling,
    pub sigma: SigmaTriplet,
    pub prior: PriorSpec,
    pub weights: LossWeights,
}

/// One evaluation of a variant's loss on a batch with fixed randomness.
///
/// B-PINN parameters are `[μ ; ρ]` and `noise` holds one or more
/// reparameterization draws (the loss averages over them); d-PINN and
/// vanilla parameters are the network weights, with an optional mask.
pub struct LossProblem<'a> {
    pub ctx: &'a LossContext,
    pub batch: Batches<'a>,
    pub noise: &'a [Vec<f64>],
    pub mask: Option<&'a DropoutMask>,
    /// Add the complexity cost (off when a batch is one of several chunks).
    pub with_kl: bool,
}

fn sum_or_zero<S: Scalar>(ctx: S, terms: &[S]) -> S {
    if terms.is_empty() {
        ctx.constant(0.0)
    } else {
        S::sum(terms)
    }
}

impl LossProblem<'_> {
    fn data_terms<S: Scalar>(&self, theta: &[S], samples: &[Sample], sigma: f64) -> Vec<S> {
        let v = self.ctx.variant;
        samples
            .iter()
            .map(|s| {
                let out = forward(&self.ctx.layout, theta, s.point, self.mask).expect("layout checked");
                match (v, out.pre_var) {
                    (Variant::Pinn, _) => (out.mean - s.target).square(),
                    (v, Some(pre)) if v.is_hetero() => gaussian_nll(s.target, out.mean, variance_of(pre)),
                    _ => fixed_nll(s.target, out.mean, sigma),
                }
            })
            .collect()
    }

    fn residual_terms<S: Scalar>(&self, theta: &[S]) -> Vec<S> {
        let v = self.ctx.variant;
        self.batch
            .collocation
            .iter()
            .map(|c| {
                let jet = forward_jet(&self.ctx.layout, theta, c.point, self.mask).expect("layout checked");
                let r = self.ctx.scaling.residual(&jet.mean, c.forcing);
                if v.is_bayesian() {
                    fixed_nll(0.0, r, self.ctx.sigma.sigma_f)
                } else {
                    r.square()
                }
            })
            .collect()
    }

    /// Weighted terms for one parameter draw.
    fn terms_for<S: Scalar>(&self, theta: &[S]) -> [S; 3] {
        let ctx = self.ctx;
        let b = &self.batch;
        let w = ctx.weights;
        let zero = theta[0].constant(0.0);
        let ic = sum_or_zero(zero, &self.data_terms(theta, b.initial, ctx.sigma.sigma_0));
        let bc = sum_or_zero(zero, &self.data_terms(theta, b.boundary, ctx.sigma.sigma_bc));
        let res = sum_or_zero(zero, &self.residual_terms(theta));
        // B-PINNs estimate full-data sums, the others full-data means
        let per = |n: usize| if ctx.variant.is_bayesian() { 1.0 } else if n == 0 { 0.0 } else { 1.0 / n as f64 };
        [
            ic * (w.lambda_0 * b.data_scale * per(b.n_initial)),
            bc * (w.lambda_b * b.data_scale * per(b.n_boundary)),
            res * (w.lambda_r * b.residual_scale * per(b.n_residual)),
        ]
    }

    pub fn components<S: Scalar>(&self, params: &[S]) -> Components<S> {
        let zero = params[0].constant(0.0);
        if !self.ctx.variant.is_bayesian() {
            let [nll_0, nll_bc, nll_r] = self.terms_for(params);
            return Components { kl: zero, nll_0, nll_bc, nll_r };
        }
        let n = params.len() / 2;
        let (mu, rho) = params.split_at(n);
        let k = self.noise.len().max(1);
        let inv = 1.0 / k as f64;
        let mut acc = Components { kl: zero, nll_0: zero, nll_bc: zero, nll_r: zero };
        for (i, eps) in self.noise.iter().enumerate() {
            let kl = mc_kl_terms(mu, rho, &self.ctx.prior, eps).expect("noise sized to posterior");
            let [a, b, c] = self.terms_for(&kl.theta);
            let kl = if self.with_kl { kl.complexity() } else { zero };
            let step = Components { kl, nll_0: a, nll_bc: b, nll_r: c };
            acc = if i == 0 && k == 1 {
                step
            } else {
                Components {
                    kl: acc.kl + step.kl * inv,
                    nll_0: acc.nll_0 + step.nll_0 * inv,
                    nll_bc: acc.nll_bc + step.nll_bc * inv,
                    nll_r: acc.nll_r + step.nll_r * inv,
                }
            };
        }
        acc
    }
}

impl Objective for LossProblem<'_> {
    fn evaluate<S: Scalar>(&self, params: &[S]) -> S {
        self.components(params).total()
    }
}

/// Loss, its breakdown, and the gradient over the optimized vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub components: Components<f64>,
    pub gradient: Vec<f64>,
}

pub(crate) fn evaluate_on(tape: &mut Tape, problem: &LossProblem<'_>, params: &[f64]) -> Result<StepOutput, TrainError> {
    tape.reset();
    let vars = tape.vars(params);
    let comps = problem.components(&vars);
    let total = comps.total();
    let components = comps.values();
    let loss = total.value();
    if !loss.is_finite() {
        return Err(TrainError::Divergence { components, loss });
    }
    let gradient = tape.gradient(total).wrt_all(&vars);
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::Divergence { components, loss });
    }
    Ok(StepOutput { loss, components, gradient })
}

fn check_len(ctx: &LossContext, params: usize) -> Result<(), TrainError> {
    let want = if ctx.variant.is_bayesian() { 2 * ctx.layout.len() } else { ctx.layout.len() };
    if params != want {
        return Err(TrainError::Params { expected: want, got: params });
    }
    Ok(())
}

/// Single-sample variational free energy
/// `log q − log p + λ₀·NLL⁽⁰⁾ + λ_b·NLL⁽ᵇᶜ⁾ + λ_r·NLL⁽ʳ⁾` and its gradient
/// over `[μ ; ρ]`.
pub fn elbo_step(
    ctx: &LossContext,
    post: &VariationalPosterior,
    batch: Batches<'_>,
    noise: &[f64],
) -> Result<StepOutput, TrainError> {
    if !ctx.variant.is_bayesian() {
        return Err(TrainError::Variant(ctx.variant));
    }
    let flat = post.to_flat();
    check_len(ctx, flat.len())?;
    let noise = [noise.to_vec()];
    let problem = LossProblem { ctx, batch, noise: &noise, mask: None, with_kl: true };
    let mut tape = Tape::with_capacity(1 << 14, 1 << 16);
    evaluate_on(&mut tape, &problem, &flat)
}

/// `λ₀·MSE_IC + λ_b·MSE_BC + λ_r·MSE_r` and its gradient.
pub fn pinn_loss(ctx: &LossContext, params: &[f64], batch: Batches<'_>) -> Result<StepOutput, TrainError> {
    if ctx.variant != Variant::Pinn {
        return Err(TrainError::Variant(ctx.variant));
    }
    check_len(ctx, params.len())?;
    let problem = LossProblem { ctx, batch, noise: &[], mask: None, with_kl: false };
    let mut tape = Tape::with_capacity(1 << 14, 1 << 16);
    evaluate_on(&mut tape, &problem, params)
}

/// Mean Gaussian NLL on the data terms (learned or fixed variance) plus the
/// λ_r-weighted mean squared residual of the mean head, under `mask`.
pub fn dpinn_loss(
    ctx: &LossContext,
    params: &[f64],
    mask: &DropoutMask,
    batch: Batches<'_>,
) -> Result<StepOutput, TrainError> {
    if !ctx.variant.is_dropout() {
        return Err(TrainError::Variant(ctx.variant));
    }
    check_len(ctx, params.len())?;
    let problem = LossProblem { ctx, batch, noise: &[], mask: Some(mask), with_kl: false };
    let mut tape = Tape::with_capacity(1 << 14, 1 << 16);
    evaluate_on(&mut tape, &problem, params)
}
