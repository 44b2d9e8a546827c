//! Loss assembly and optimization for every variant: mini-batch Adam with
//! early stopping, followed by full-batch L-BFGS for the vanilla PINN.

mod loss;
mod optim;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loss::{
    dpinn_loss, elbo_step, nll_hetero, nll_homo, pinn_loss, Batches, Components, LossContext, LossProblem, LossWeights,
    Sample, StepOutput,
};
pub use optim::{lbfgs_refine, Adam, LbfgsOptions, LbfgsResult, LbfgsStop};

use crate::bayes::{standard_normal_vec, BayesError, PriorSpec, VariationalPosterior};
use crate::diffcore::Tape;
use crate::model::{SigmaTriplet, TrainedModel, Variant};
use crate::net::{forward, variance_of, DropoutMask, Layout, MlpConfig, NetError, ParamBlock};
use crate::physics::{
    sample_training_sets, CollocationPoint, DataPoint, Normalization, PhysicsError, ResidualScaling, SampleCounts,
    ThermalPdeSpec,
};

/// Validation losses above this count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Fixed number of pieces a loss evaluation is split into for parallel
/// gradients; fixed so results do not depend on the thread count.
const PIECES: usize = 4;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("variance must be positive, got {0}")]
    Variance(f64),
    #[error("loss diverged to {loss} (kl {}, nll_0 {}, nll_bc {}, nll_r {})", .components.kl, .components.nll_0, .components.nll_bc, .components.nll_r)]
    Divergence { components: Components<f64>, loss: f64 },
    #[error("operation not defined for variant {0}")]
    Variant(Variant),
    #[error("parameter vector has {got} entries, expected {expected}")]
    Params { expected: usize, got: usize },
    #[error("invalid training plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPlan {
    pub variant: Variant,
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// IC/BC points per step.
    pub batch: usize,
    /// Collocation points per step.
    pub colloc_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub sigma: SigmaTriplet,
    pub weights: LossWeights,
    pub prior: PriorSpec,
    /// Initial posterior standard deviation.
    pub posterior_sigma0: f64,
    pub dropout: f64,
    /// Full-batch L-BFGS iterations after Adam (vanilla PINN only).
    pub lbfgs_iters: usize,
    pub lbfgs_memory: usize,
    /// Reparameterization draws averaged per step.
    pub mc_samples: usize,
    /// Share of IC/BC points held out for early stopping.
    pub val_fraction: f64,
    /// Record wall time per epoch; off by default so logs replay exactly.
    pub record_time: bool,
}

impl TrainPlan {
    pub fn for_variant(variant: Variant) -> Self {
        let pinn = variant == Variant::Pinn;
        Self {
            variant,
            hidden: vec![50, 50],
            lr: 0.01,
            batch: 16,
            colloc_batch: 16,
            max_epochs: if pinn { 20_000 } else { 15_000 },
            patience: 200,
            sigma: SigmaTriplet::default(),
            weights: LossWeights::for_variant(variant),
            prior: PriorSpec::default(),
            posterior_sigma0: 0.05,
            dropout: if variant.is_dropout() { 0.1 } else { 0.0 },
            lbfgs_iters: if pinn { 10_000 } else { 0 },
            lbfgs_memory: 10,
            mc_samples: 1,
            val_fraction: 0.1,
            record_time: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Plan(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.patience >= self.max_epochs {
            return bad(format!("patience ({}) must be below max_epochs ({})", self.patience, self.max_epochs));
        }
        if self.batch == 0 || self.colloc_batch == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with positive widths".into());
        }
        if !self.sigma.is_valid() {
            return bad("homoscedastic sigmas must be positive".into());
        }
        if !self.weights.is_valid() {
            return bad("loss weights must be non-negative".into());
        }
        if !(self.posterior_sigma0 > 0.0) {
            return bad("posterior_sigma0 must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.mc_samples == 0 || self.lbfgs_memory == 0 {
            return bad("mc_samples and lbfgs_memory must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        self.prior.validate()?;
        Ok(())
    }

    pub fn mlp_config(&self) -> MlpConfig {
        let rate = if self.variant.is_dropout() { self.dropout } else { 0.0 };
        MlpConfig::with_hidden(&self.hidden, self.variant.is_hetero(), rate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    Divergence,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStop => "early_stop",
            StopReason::Divergence => "divergence",
        }
    }
}

/// One logged epoch (or L-BFGS iteration); components are epoch means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub kl: f64,
    pub nll_0: f64,
    pub nll_bc: f64,
    pub nll_r: f64,
    pub total: f64,
    pub val: f64,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub stop: StopReason,
    pub adam_epochs: usize,
    pub lbfgs_iters: usize,
    pub best_epoch: usize,
    pub best_val: f64,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,kl,nll_0,nll_bc,nll_r,total,val,ms\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{},{},{}", r.epoch, r.kl, r.nll_0, r.nll_bc, r.nll_r, r.total, r.val, r.ms);
        }
        s
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream ids derived from the run seed.
mod streams {
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const NOISE: u64 = 4;
}

fn split_evenly<T>(items: &[T], pieces: usize) -> Vec<&[T]> {
    let n = items.len();
    (0..pieces).map(|i| &items[i * n / pieces..(i + 1) * n / pieces]).collect()
}

/// Loss and gradient with the batch cut into a fixed number of pieces
/// evaluated in parallel and summed in piece order.
pub fn loss_and_grad(
    ctx: &LossContext,
    batch: Batches<'_>,
    noise: &[Vec<f64>],
    mask: Option<&DropoutMask>,
    params: &[f64],
) -> Result<StepOutput, TrainError> {
    let ic = split_evenly(batch.initial, PIECES);
    let bc = split_evenly(batch.boundary, PIECES);
    let co = split_evenly(batch.collocation, PIECES);
    let outs: Vec<Result<StepOutput, TrainError>> = (0..PIECES)
        .into_par_iter()
        .map(|i| {
            let piece = Batches { initial: ic[i], boundary: bc[i], collocation: co[i], ..batch };
            let problem = LossProblem { ctx, batch: piece, noise, mask, with_kl: i == 0 };
            let mut tape = Tape::with_capacity(1 << 12, 1 << 14);
            loss::evaluate_on(&mut tape, &problem, params)
        })
        .collect();
    let mut components = Components::zero();
    let mut gradient = vec![0.0; params.len()];
    for out in outs {
        let out = out?;
        components.kl += out.components.kl;
        components.nll_0 += out.components.nll_0;
        components.nll_bc += out.components.nll_bc;
        components.nll_r += out.components.nll_r;
        for (g, d) in gradient.iter_mut().zip(&out.gradient) {
            *g += d;
        }
    }
    let loss = components.total();
    if !loss.is_finite() {
        return Err(TrainError::Divergence { components, loss });
    }
    Ok(StepOutput { loss, components, gradient })
}

/// Mean per-point data loss of a deterministic network (posterior mean,
/// no dropout): Gaussian NLL for probabilistic variants, MSE for the PINN.
pub fn data_loss(ctx: &LossContext, theta: &[f64], initial: &[Sample], boundary: &[Sample]) -> Result<f64, TrainError> {
    let n = initial.len() + boundary.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (set, sigma) in [(initial, ctx.sigma.sigma_0), (boundary, ctx.sigma.sigma_bc)] {
        for s in set {
            let out = forward(&ctx.layout, theta, s.point, None)?;
            sum += match (ctx.variant, out.pre_var) {
                (Variant::Pinn, _) => (out.mean - s.target).powi(2),
                (v, Some(pre)) if v.is_hetero() => nll_hetero(s.target, out.mean, variance_of(pre))?,
                _ => nll_hetero(s.target, out.mean, sigma * sigma)?,
            };
        }
    }
    Ok(sum / n as f64)
}

/// Normalized training data shared by the loops.
struct Prepared {
    initial: Vec<Sample>,
    boundary: Vec<Sample>,
    val_initial: Vec<Sample>,
    val_boundary: Vec<Sample>,
    collocation: Vec<CollocationPoint>,
}

fn to_samples(points: &[DataPoint], norm: &Normalization) -> Vec<Sample> {
    points.iter().map(|p| Sample { point: norm.point(p.x, p.t), target: norm.normalize_temp(p.u) }).collect()
}

fn hold_out(mut items: Vec<Sample>, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<Sample>, Vec<Sample>) {
    let n_val = (fraction * items.len() as f64).round() as usize;
    let n_val = n_val.min(items.len().saturating_sub(1));
    for i in 0..n_val {
        let j = rng.random_range(i..items.len());
        items.swap(i, j);
    }
    let train = items.split_off(n_val);
    (train, items)
}

fn prepare(
    spec: &ThermalPdeSpec,
    norm: &Normalization,
    scaling: &ResidualScaling,
    counts: SampleCounts,
    plan: &TrainPlan,
    seed: u64,
) -> Result<Prepared, TrainError> {
    let sets = sample_training_sets(spec, counts, seed)?;
    let mut rng = stream(seed, streams::SPLIT);
    let (initial, val_initial) = hold_out(to_samples(&sets.initial, norm), plan.val_fraction, &mut rng);
    let (boundary, val_boundary) = hold_out(to_samples(&sets.boundary, norm), plan.val_fraction, &mut rng);
    let collocation = sets
        .collocation
        .iter()
        .map(|&(x, t)| Ok(CollocationPoint { point: norm.point(x, t), forcing: scaling.forcing(spec, norm, t)? }))
        .collect::<Result<_, PhysicsError>>()?;
    Ok(Prepared { initial, boundary, val_initial, val_boundary, collocation })
}

/// Deterministic network used for validation and prediction checks.
fn point_params(variant: Variant, w: &[f64]) -> &[f64] {
    if variant.is_bayesian() {
        &w[..w.len() / 2]
    } else {
        w
    }
}

fn param_block(variant: Variant, w: Vec<f64>) -> ParamBlock {
    if variant.is_bayesian() {
        let q = VariationalPosterior::from_flat(&w);
        ParamBlock::Variational { mu: q.mu, rho: q.rho }
    } else {
        ParamBlock::Deterministic { theta: w }
    }
}

struct Monitor {
    best: Vec<f64>,
    best_val: f64,
    best_epoch: usize,
}

impl Monitor {
    /// Records `val` at `epoch`; returns whether it improved on the best.
    fn observe(&mut self, epoch: usize, val: f64, w: &[f64]) -> bool {
        if val < self.best_val {
            self.best_val = val;
            self.best_epoch = epoch;
            self.best.copy_from_slice(w);
            true
        } else {
            false
        }
    }
}

/// Trains `plan.variant` on training sets drawn from `spec`.
///
/// Randomness comes from separate streams of `seed` (point sampling,
/// initialization, validation split, batching, noise and masks), so a run
/// replays exactly. Divergence stops the run and returns the best model.
pub fn fit(
    plan: &TrainPlan,
    spec: &ThermalPdeSpec,
    counts: SampleCounts,
    seed: u64,
) -> Result<(TrainedModel, TrainLog), TrainError> {
    plan.validate()?;
    spec.validate()?;
    let variant = plan.variant;
    let config = plan.mlp_config();
    let layout: Layout = config.layout()?;
    let norm = Normalization::from_spec(spec);
    let scaling = ResidualScaling::new(spec, &norm);
    let data = prepare(spec, &norm, &scaling, counts, plan, seed)?;
    let ctx = LossContext { variant, layout: layout.clone(), scaling, sigma: plan.sigma, prior: plan.prior, weights: plan.weights };

    let mut init_rng = stream(seed, streams::INIT);
    let mut w = if variant.is_bayesian() {
        VariationalPosterior::init(&layout, plan.posterior_sigma0, &mut init_rng).to_flat()
    } else {
        layout.glorot(&mut init_rng)
    };
    let mut batch_rng = stream(seed, streams::BATCH);
    let mut noise_rng = stream(seed, streams::NOISE);
    let mut adam = Adam::new(w.len());

    // pool entries: (is_boundary, index)
    let mut pool: Vec<(bool, usize)> =
        (0..data.initial.len()).map(|i| (false, i)).chain((0..data.boundary.len()).map(|i| (true, i))).collect();
    let n_data = pool.len();
    let n_colloc = data.collocation.len();
    let colloc_batch = plan.colloc_batch.min(n_colloc);
    let mut colloc_idx: Vec<usize> = (0..n_colloc).collect();
    let has_val = !(data.val_initial.is_empty() && data.val_boundary.is_empty());
    let validate = |w: &[f64]| data_loss(&ctx, point_params(variant, w), &data.val_initial, &data.val_boundary);

    let mut monitor = Monitor { best: w.clone(), best_val: f64::INFINITY, best_epoch: 0 };
    let mut rows = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut epochs = 0;
    'epochs: for epoch in 1..=plan.max_epochs {
        let started = Instant::now();
        for i in (1..pool.len()).rev() {
            let j = batch_rng.random_range(0..=i);
            pool.swap(i, j);
        }
        let mut sum = Components::zero();
        let mut steps = 0usize;
        for chunk in pool.chunks(plan.batch) {
            let initial: Vec<Sample> = chunk.iter().filter(|c| !c.0).map(|c| data.initial[c.1]).collect();
            let boundary: Vec<Sample> = chunk.iter().filter(|c| c.0).map(|c| data.boundary[c.1]).collect();
            for i in 0..colloc_batch {
                let j = batch_rng.random_range(i..n_colloc);
                colloc_idx.swap(i, j);
            }
            let collocation: Vec<CollocationPoint> = colloc_idx[..colloc_batch].iter().map(|&i| data.collocation[i]).collect();
            let batch = Batches {
                initial: &initial,
                boundary: &boundary,
                collocation: &collocation,
                data_scale: n_data as f64 / chunk.len() as f64,
                residual_scale: n_colloc as f64 / colloc_batch.max(1) as f64,
                n_initial: data.initial.len(),
                n_boundary: data.boundary.len(),
                n_residual: n_colloc,
            };
            let noise: Vec<Vec<f64>> = if variant.is_bayesian() {
                (0..plan.mc_samples).map(|_| standard_normal_vec(layout.len(), &mut noise_rng)).collect()
            } else {
                Vec::new()
            };
            let mask = variant.is_dropout().then(|| DropoutMask::sample(config.hidden_sizes(), plan.dropout, &mut noise_rng));
            match loss_and_grad(&ctx, batch, &noise, mask.as_ref(), &w) {
                Ok(out) => {
                    adam.update(&mut w, &out.gradient, plan.lr);
                    sum.kl += out.components.kl;
                    sum.nll_0 += out.components.nll_0;
                    sum.nll_bc += out.components.nll_bc;
                    sum.nll_r += out.components.nll_r;
                    steps += 1;
                }
                Err(TrainError::Divergence { components, loss }) => {
                    log::warn!("divergence at epoch {epoch}: loss {loss}, components {components:?}");
                    stop = StopReason::Divergence;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        epochs = epoch;
        let k = steps.max(1) as f64;
        let mean = Components { kl: sum.kl / k, nll_0: sum.nll_0 / k, nll_bc: sum.nll_bc / k, nll_r: sum.nll_r / k };
        let total = mean.total();
        let val = if has_val { validate(&w)? } else { total };
        let ms = if plan.record_time { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        rows.push(LogRow { epoch, kl: mean.kl, nll_0: mean.nll_0, nll_bc: mean.nll_bc, nll_r: mean.nll_r, total, val, ms });
        if !val.is_finite() || val > DIVERGENCE_LIMIT || w.iter().any(|v| !v.is_finite()) {
            log::warn!("divergence at epoch {epoch}: monitored loss {val}");
            stop = StopReason::Divergence;
            break;
        }
        let improved = monitor.observe(epoch, val, &w);
        if !improved && epoch - monitor.best_epoch >= plan.patience {
            stop = StopReason::EarlyStop;
            break;
        }
    }
    if monitor.best_val.is_finite() {
        w.copy_from_slice(&monitor.best);
    }

    let mut lbfgs_iters = 0;
    if variant == Variant::Pinn && plan.lbfgs_iters > 0 && stop != StopReason::Divergence {
        let full = Batches::full(&data.initial, &data.boundary, &data.collocation);
        let last_eval: RefCell<Option<(Vec<f64>, Components<f64>)>> = RefCell::new(None);
        let monitor_cell = RefCell::new(monitor);
        let rows_cell = RefCell::new(rows);
        let started = RefCell::new(Instant::now());
        let opts = LbfgsOptions { max_iters: plan.lbfgs_iters, memory: plan.lbfgs_memory, ..LbfgsOptions::default() };
        let result = lbfgs_refine(
            &w,
            |x| match loss_and_grad(&ctx, full, &[], None, x) {
                Ok(out) => {
                    *last_eval.borrow_mut() = Some((x.to_vec(), out.components));
                    (out.loss, out.gradient)
                }
                Err(_) => (f64::NAN, vec![f64::NAN; x.len()]),
            },
            opts,
            |it, x, loss| {
                let comps = match &*last_eval.borrow() {
                    Some((p, c)) if p == x => *c,
                    _ => Components { kl: 0.0, nll_0: loss, nll_bc: 0.0, nll_r: 0.0 },
                };
                let val = if has_val { validate(x).unwrap_or(f64::NAN) } else { loss };
                let ms = if plan.record_time { started.replace(Instant::now()).elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                let epoch = epochs + it;
                rows_cell.borrow_mut().push(LogRow {
                    epoch,
                    kl: comps.kl,
                    nll_0: comps.nll_0,
                    nll_bc: comps.nll_bc,
                    nll_r: comps.nll_r,
                    total: comps.total(),
                    val,
                    ms,
                });
                if val.is_finite() {
                    monitor_cell.borrow_mut().observe(epoch, val, x);
                }
            },
        );
        if result.warning() {
            log::warn!("L-BFGS stopped early: {:?}", result.stop);
        }
        lbfgs_iters = result.iters;
        monitor = monitor_cell.into_inner();
        rows = rows_cell.into_inner();
        if monitor.best_val.is_finite() {
            w.copy_from_slice(&monitor.best);
        }
    }

    let mut extra = BTreeMap::new();
    extra.insert("seed".to_string(), seed.to_string());
    extra.insert("stop".to_string(), stop.name().to_string());
    let model = TrainedModel { variant, config, params: param_block(variant, w), norm, sigma: plan.sigma, extra };
    let log = TrainLog { rows, stop, adam_epochs: epochs, lbfgs_iters, best_epoch: monitor.best_epoch, best_val: monitor.best_val };
    Ok((model, log))
}
