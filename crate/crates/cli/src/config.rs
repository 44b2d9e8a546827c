//! Run configuration: a TOML file with one table per module, overridable
//! key by key with dotted paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bpinn::bayes::{PriorKind, PriorSpec};
use bpinn::data::SynthProfile;
use bpinn::model::{SigmaTriplet, Variant};
use bpinn::physics::{defaults, BoundarySeries, InitialProfile, SampleCounts, ThermalPdeSpec};
use bpinn::refsolver::GridSpec;
use bpinn::thermal::HstParams;
use bpinn::train::{LossWeights, TrainPlan};
use bpinn::uq::{DEFAULT_SAMPLES_BPINN, DEFAULT_SAMPLES_DPINN};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    pub physics: PhysicsConfig,
    pub refsolver: RefSolverConfig,
    pub train: TrainConfig,
    pub uq: UqConfig,
    pub metrics: MetricsConfig,
    pub thermal: ThermalConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("out"),
            data: DataConfig::default(),
            physics: PhysicsConfig::default(),
            refsolver: RefSolverConfig::default(),
            train: TrainConfig::default(),
            uq: UqConfig::default(),
            metrics: MetricsConfig::default(),
            thermal: ThermalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Operating data: a CSV file, or a synthetic series when `input` is unset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub input: Option<PathBuf>,
    /// Replace missing values by channel means instead of rejecting them.
    pub impute: bool,
    /// Length of the synthetic series.
    pub days: u32,
    pub synth: SynthProfile,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { input: None, impute: false, days: 4, synth: SynthProfile::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub k: f64,
    pub rho_cp: f64,
    pub h: f64,
    pub p0: f64,
    pub mu_rated: f64,
    pub height: f64,
    pub initial: InitialProfile,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            k: defaults::K,
            rho_cp: defaults::RHO_CP,
            h: defaults::H,
            p0: defaults::P0,
            mu_rated: defaults::MU_RATED,
            height: defaults::HEIGHT,
            initial: InitialProfile::Linear,
        }
    }
}

impl PhysicsConfig {
    pub fn spec(&self, series: BoundarySeries) -> ThermalPdeSpec {
        ThermalPdeSpec {
            k: self.k,
            rho_cp: self.rho_cp,
            h: self.h,
            p0: self.p0,
            mu_rated: self.mu_rated,
            height: self.height,
            series,
            initial: self.initial,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefSolverConfig {
    /// Total node count including both boundaries.
    pub nx: usize,
    /// Time step [s].
    pub dt: f64,
}

impl Default for RefSolverConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self { nx: g.nx, dt: g.dt }
    }
}

impl RefSolverConfig {
    pub fn grid(&self) -> GridSpec {
        GridSpec { nx: self.nx, dt: self.dt }
    }
}

/// Training settings. Unset optional keys take the variant's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch: usize,
    pub colloc_batch: usize,
    pub epochs: Option<usize>,
    /// Unset: the variant default, capped below the epoch budget.
    pub patience: Option<usize>,
    pub lbfgs_iters: Option<usize>,
    pub lbfgs_memory: usize,
    pub n0: usize,
    pub nb: usize,
    pub nr: usize,
    pub sigma_0: f64,
    pub sigma_bc: f64,
    pub sigma_f: f64,
    pub lambda_0: Option<f64>,
    pub lambda_b: Option<f64>,
    pub lambda_r: Option<f64>,
    pub prior: PriorKind,
    pub prior_scale: f64,
    pub posterior_sigma0: f64,
    pub dropout: Option<f64>,
    pub mc_samples: usize,
    pub val_fraction: f64,
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let plan = TrainPlan::for_variant(Variant::BpinnHetero);
        let sigma = SigmaTriplet::default();
        Self {
            variant: Variant::BpinnHetero,
            hidden: plan.hidden,
            lr: plan.lr,
            batch: plan.batch,
            colloc_batch: plan.colloc_batch,
            epochs: None,
            patience: None,
            lbfgs_iters: None,
            lbfgs_memory: plan.lbfgs_memory,
            n0: 100,
            nb: 5760,
            nr: 10_000,
            sigma_0: sigma.sigma_0,
            sigma_bc: sigma.sigma_bc,
            sigma_f: sigma.sigma_f,
            lambda_0: None,
            lambda_b: None,
            lambda_r: None,
            prior: PriorKind::Laplace,
            prior_scale: 1.0,
            posterior_sigma0: plan.posterior_sigma0,
            dropout: None,
            mc_samples: plan.mc_samples,
            val_fraction: plan.val_fraction,
            record_time: false,
        }
    }
}

impl TrainConfig {
    pub fn plan(&self) -> TrainPlan {
        let base = TrainPlan::for_variant(self.variant);
        let w = LossWeights::for_variant(self.variant);
        let max_epochs = self.epochs.unwrap_or(base.max_epochs);
        TrainPlan {
            variant: self.variant,
            hidden: self.hidden.clone(),
            lr: self.lr,
            batch: self.batch,
            colloc_batch: self.colloc_batch,
            max_epochs,
            patience: self.patience.unwrap_or(base.patience.min(max_epochs.saturating_sub(1))),
            sigma: SigmaTriplet { sigma_0: self.sigma_0, sigma_bc: self.sigma_bc, sigma_f: self.sigma_f },
            weights: LossWeights {
                lambda_0: self.lambda_0.unwrap_or(w.lambda_0),
                lambda_b: self.lambda_b.unwrap_or(w.lambda_b),
                lambda_r: self.lambda_r.unwrap_or(w.lambda_r),
            },
            prior: PriorSpec { kind: self.prior, scale: self.prior_scale },
            posterior_sigma0: self.posterior_sigma0,
            dropout: self.dropout.unwrap_or(base.dropout),
            lbfgs_iters: self.lbfgs_iters.unwrap_or(base.lbfgs_iters),
            lbfgs_memory: self.lbfgs_memory,
            mc_samples: self.mc_samples,
            val_fraction: self.val_fraction,
            record_time: self.record_time,
        }
    }

    pub fn counts(&self) -> SampleCounts {
        SampleCounts { n0: self.n0, nb: self.nb, nr: self.nr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UqConfig {
    /// Monte-Carlo samples; unset uses the variant default.
    pub samples: Option<usize>,
    /// Prediction grid: node count along the height and time step [s].
    pub nx: usize,
    pub dt: f64,
}

impl Default for UqConfig {
    fn default() -> Self {
        Self { samples: None, nx: 21, dt: 600.0 }
    }
}

impl UqConfig {
    pub fn samples_for(&self, variant: Variant) -> usize {
        self.samples.unwrap_or(if variant.is_bayesian() {
            DEFAULT_SAMPLES_BPINN
        } else if variant.is_dropout() {
            DEFAULT_SAMPLES_DPINN
        } else {
            1
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Prediction instants [h after the first truth time].
    pub instants: Vec<f64>,
    /// Keep every n-th truth node along x and t.
    pub x_stride: usize,
    pub t_stride: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { instants: vec![0.0, 3.0, 6.0, 18.0, 25.0, 50.0], x_stride: 10, t_stride: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalConfig {
    pub hst: HstParams,
    /// Monte-Carlo samples of the ageing propagation.
    pub samples: usize,
    /// Ageing grid: node count along the height and row stride of the series.
    pub nx: usize,
    pub t_stride: usize,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        Self { hst: HstParams::default(), samples: 1000, nx: 21, t_stride: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n0: Vec<usize>,
    pub nr: Vec<usize>,
    pub nb: Vec<usize>,
    pub reps: usize,
    /// Divides every set size (rounded up, at least 1).
    pub scale: usize,
    /// Cells trained concurrently.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { n0: vec![5, 100, 200], nr: vec![5000, 10_000, 20_000], nb: vec![2880, 5760, 8640, 11_520], reps: 5, scale: 1, jobs: 1 }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
pub fn parse_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Sets `key` (dotted path) in `table`, creating intermediate tables.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(CliError::Usage(format!("`{p}` in `{key}` is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides in order, and
    /// validates the result against the schema.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            set_key(&mut table, k, v.clone())?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::invalid(m));
        if self.refsolver.nx < 3 || !(self.refsolver.dt > 0.0) {
            return bad("refsolver needs nx >= 3 and dt > 0");
        }
        if self.uq.nx < 2 || !(self.uq.dt > 0.0) {
            return bad("uq grid needs nx >= 2 and dt > 0");
        }
        if self.metrics.x_stride == 0 || self.metrics.t_stride == 0 || self.thermal.t_stride == 0 {
            return bad("strides must be positive");
        }
        if self.thermal.nx < 2 {
            return bad("thermal.nx must be at least 2");
        }
        if self.sweep.scale == 0 || self.sweep.jobs == 0 || self.sweep.reps == 0 {
            return bad("sweep scale, jobs and reps must be positive");
        }
        if self.data.days == 0 {
            return bad("data.days must be positive");
        }
        self.train.plan().validate()?;
        Ok(())
    }

    /// TOML text that reproduces this configuration.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
