//! One function per subcommand. Each reads the resolved configuration and
//! writes its artifacts under `cfg.output`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use bpinn::data::{impute, load_series, synthesize, OperatingSeries};
use bpinn::metrics::{evaluate as score, EvalReport};
use bpinn::model::{TrainedModel, Variant};
use bpinn::net::Checkpoint;
use bpinn::physics::ThermalPdeSpec;
use bpinn::refsolver::{solve, FieldGrid};
use bpinn::thermal::{hst_rise, propagate_ageing, RiseSeries};
use bpinn::train::{fit, StopReason, TrainLog};
use bpinn::uq::{predict as predictive, predict_grid};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg;

pub const SERIES_CSV: &str = "series.csv";
pub const TRUTH_CSV: &str = "truth.csv";
pub const MODEL_CKPT: &str = "model.ckpt";

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Creates the output directory and writes the resolved-config snapshot.
pub fn prepare_output(cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::io(&cfg.output, e))?;
    write(&cfg.output.join(format!("{command}.config.toml")), &cfg.snapshot())
}

/// The configured operating series: the input CSV, or synthetic data.
pub fn operating_series(cfg: &RunConfig) -> Result<OperatingSeries, CliError> {
    let Some(path) = &cfg.data.input else {
        return Ok(synthesize(cfg.data.days, cfg.seed, &cfg.data.synth));
    };
    let (series, report) = load_series(path)?;
    log::info!("{}: {} rows, {} duplicates dropped, {} missing values", path.display(), report.rows, report.duplicates, report.missing);
    if report.missing > 0 && cfg.data.impute {
        return Ok(impute(&series)?);
    }
    Ok(series)
}

pub fn pde_spec(cfg: &RunConfig) -> Result<ThermalPdeSpec, CliError> {
    let spec = cfg.physics.spec(operating_series(cfg)?.to_boundary()?);
    spec.validate()?;
    Ok(spec)
}

fn checkpoint_path(cfg: &RunConfig, given: Option<&Path>) -> PathBuf {
    given.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.join(MODEL_CKPT))
}

pub fn load_model(path: &Path) -> Result<TrainedModel, CliError> {
    Ok(TrainedModel::from_checkpoint(&Checkpoint::load(path)?)?)
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
}

/// Time nodes covered by a model, stepped by `dt` with the end included.
fn model_times(model: &TrainedModel, dt: f64) -> Vec<f64> {
    let (t0, t1) = (model.norm.t_offset, model.norm.t_offset + model.norm.t_scale);
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let mut t: Vec<f64> = (0..steps).map(|i| t0 + i as f64 * dt).collect();
    t.push(t1);
    t
}

/// Rejects coordinates outside the domain a model was trained on.
fn check_domain(model: &TrainedModel, x: &[f64], t: &[f64]) -> Result<(), CliError> {
    let n = &model.norm;
    let tol = 1e-9;
    let (t0, t1) = (n.t_offset, n.t_offset + n.t_scale);
    if let Some(bad) = x.iter().find(|&&v| !(v >= -tol * n.x_scale && v <= n.x_scale * (1.0 + tol))) {
        return Err(CliError::invalid(format!("x = {bad} lies outside the model domain [0, {}]", n.x_scale)));
    }
    let span = tol * n.t_scale.abs().max(1.0);
    if let Some(bad) = t.iter().find(|&&v| !(v >= t0 - span && v <= t1 + span)) {
        return Err(CliError::invalid(format!("t = {bad} s lies outside the model span [{t0}, {t1}]")));
    }
    Ok(())
}

fn samples(cfg: &RunConfig, variant: Variant) -> usize {
    cfg.uq.samples_for(variant)
}

pub fn synth_data(cfg: &RunConfig) -> Result<(), CliError> {
    let series = synthesize(cfg.data.days, cfg.seed, &cfg.data.synth);
    let path = cfg.output.join(SERIES_CSV);
    series.write_csv(&path)?;
    log::info!("wrote {} rows to {}", series.len(), path.display());
    Ok(())
}

pub fn solve_ref(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = pde_spec(cfg)?;
    let grid = solve(&spec, &cfg.refsolver.grid())?;
    let path = cfg.output.join(TRUTH_CSV);
    grid.write_csv(&path)?;
    write(&cfg.output.join("truth.svg"), &svg::heatmap(&grid, "Reference oil temperature", "°C"))?;
    log::info!("wrote {} x {} grid to {}", grid.nt(), grid.nx(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    variant: &'a str,
    seed: u64,
    schedule: &'a str,
    stop: &'a str,
    adam_epochs: usize,
    lbfgs_iters: usize,
    best_epoch: usize,
    best_val: f64,
    parameters: usize,
}

/// Writes the checkpoint, the log and its summary for a finished fit.
pub fn write_training(dir: &Path, model: &TrainedModel, log: &TrainLog, seed: u64) -> Result<(), CliError> {
    model.to_checkpoint().save(&dir.join(MODEL_CKPT))?;
    write(&dir.join("train_log.csv"), &log.to_csv())?;
    let summary = TrainSummary {
        variant: model.variant.name(),
        seed,
        schedule: if log.lbfgs_iters > 0 { "adam+lbfgs" } else { "adam" },
        stop: log.stop.name(),
        adam_epochs: log.adam_epochs,
        lbfgs_iters: log.lbfgs_iters,
        best_epoch: log.best_epoch,
        best_val: log.best_val,
        parameters: model.layout()?.len(),
    };
    write(&dir.join("train_summary.json"), &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = pde_spec(cfg)?;
    let plan = cfg.train.plan();
    let (model, log) = fit(&plan, &spec, cfg.train.counts(), cfg.seed)?;
    write_training(&cfg.output, &model, &log, cfg.seed)?;
    let ckpt = cfg.output.join(MODEL_CKPT);
    log::info!("{}: {} after {} log rows, best val {:.6}", model.variant, log.stop.name(), log.rows.len(), log.best_val);
    if log.stop == StopReason::Divergence {
        return Err(CliError::Divergence(ckpt.display().to_string()));
    }
    Ok(())
}

pub fn predict(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let model = load_model(&checkpoint_path(cfg, checkpoint))?;
    let x = linspace(0.0, model.norm.x_scale, cfg.uq.nx);
    let t = model_times(&model, cfg.uq.dt);
    let grid = predict_grid(&model, &x, &t, samples(cfg, model.variant), cfg.seed)?;
    write(&cfg.output.join("prediction.csv"), &grid.to_csv())?;
    write(&cfg.output.join("prediction_mean.svg"), &svg::heatmap(&grid.mean, "Predictive mean", "°C"))?;
    write(&cfg.output.join("prediction_std.svg"), &svg::heatmap(&grid.total.map(f64::sqrt), "Predictive std", "K"))?;
    Ok(())
}

/// Every `stride`-th index, always keeping the last one.
pub fn strided(n: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx
}

/// Scores `model` on the strided nodes of `truth`.
pub fn evaluate_model(cfg: &RunConfig, model: &TrainedModel, truth: &FieldGrid) -> Result<EvalReport, CliError> {
    let xi = strided(truth.nx(), cfg.metrics.x_stride);
    let ti = strided(truth.nt(), cfg.metrics.t_stride);
    let x: Vec<f64> = xi.iter().map(|&i| truth.x[i]).collect();
    let t: Vec<f64> = ti.iter().map(|&i| truth.t[i]).collect();
    check_domain(model, &x, &t)?;
    let mut points = Vec::with_capacity(x.len() * t.len());
    let mut values = Vec::with_capacity(points.capacity());
    let mut times = Vec::with_capacity(points.capacity());
    for &it in &ti {
        for &ix in &xi {
            points.push(model.norm.point(truth.x[ix], truth.t[it]));
            values.push(truth.get(it, ix));
            times.push(truth.t[it]);
        }
    }
    let preds = predictive(model, &points, samples(cfg, model.variant), cfg.seed)?;
    Ok(score(&preds, &values, &times, &cfg.metrics.instants)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn instants_csv(report: &EvalReport) -> String {
    let mut s = String::from("instant_h,t_s,points,rmse,crps,nll,sharpness\n");
    for r in &report.rows {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.instant_h, r.t_s, r.points, r.rmse, opt(r.crps), opt(r.nll), r.sharpness);
    }
    s
}

pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, truth: Option<&Path>) -> Result<(), CliError> {
    let model = load_model(&checkpoint_path(cfg, checkpoint))?;
    let truth_path = truth.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.join(TRUTH_CSV));
    let grid = FieldGrid::read_csv(&truth_path)?;
    let report = evaluate_model(cfg, &model, &grid)?;
    write(&cfg.output.join("eval.json"), &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    write(&cfg.output.join("eval_instants.csv"), &instants_csv(&report))?;
    log::info!("rmse {:.4} K, crps {}", report.rmse, opt(report.crps_mean));
    Ok(())
}

pub fn age(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let model = load_model(&checkpoint_path(cfg, checkpoint))?;
    let series = operating_series(cfg)?;
    let boundary = series.to_boundary()?;
    let rise = RiseSeries { times: boundary.times.clone(), values: hst_rise(&cfg.thermal.hst, &boundary.load)? };
    let x = linspace(0.0, model.norm.x_scale, cfg.thermal.nx);
    // loss of life integrates with a uniform step, so no end node is added
    let t: Vec<f64> = boundary.times.iter().step_by(cfg.thermal.t_stride).copied().collect();
    check_domain(&model, &x, &t)?;
    let grid = predict_grid(&model, &x, &t, samples(cfg, model.variant), cfg.seed)?;
    let stats = propagate_ageing(&grid.mean, &grid.total, &rise, cfg.thermal.samples, cfg.seed)?;
    for (name, field) in [("v_mean", &stats.v_mean), ("v_std", &stats.v_std), ("lol_mean", &stats.lol_mean), ("lol_std", &stats.lol_std)] {
        write(&cfg.output.join(format!("{name}.csv")), &field.to_csv())?;
    }
    write(&cfg.output.join("lol_mean.svg"), &svg::heatmap(&stats.lol_mean, "Mean loss of life", "min"))?;
    write(&cfg.output.join("v_mean.svg"), &svg::heatmap(&stats.v_mean, "Mean ageing factor", "p.u."))?;
    Ok(())
}
