//! Point and probabilistic scores for Gaussian predictive distributions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::uq::PredictiveDistribution;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {pred} predictions vs {truth} truths")]
    Length { pred: usize, truth: usize },
    #[error("empty input")]
    Empty,
    #[error("point {index} has zero predictive variance; NLL is undefined, use RMSE")]
    ZeroVariance { index: usize },
    #[error("calibration needs at least 10 points, got {0}")]
    TooFewPoints(usize),
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn check_lengths(pred: usize, truth: usize) -> Result<(), MetricsError> {
    if pred != truth {
        return Err(MetricsError::Length { pred, truth });
    }
    if pred == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn rmse(pred_means: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred_means.len(), truth.len())?;
    let sse: f64 = pred_means.iter().zip(truth).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// Mean Gaussian NLL using (mean, total variance).
pub fn nll_metric(preds: &[PredictiveDistribution], truth: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), truth.len())?;
    let mut sum = 0.0;
    for (index, (p, y)) in preds.iter().zip(truth).enumerate() {
        if !(p.total_var > 0.0) {
            return Err(MetricsError::ZeroVariance { index });
        }
        let r = y - p.mean;
        sum += HALF_LN_2PI + 0.5 * p.total_var.ln() + r * r / (2.0 * p.total_var);
    }
    Ok(sum / truth.len() as f64)
}

/// Closed-form CRPS of N(μ, σ²) at `y`; σ = 0 gives |y − μ|.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> f64 {
    if sigma <= 0.0 {
        return (y - mu).abs();
    }
    let n = std_normal();
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * n.cdf(z) - 1.0) + 2.0 * n.pdf(z) - FRAC_1_SQRT_PI)
}

pub fn crps_avg(preds: &[PredictiveDistribution], truth: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), truth.len())?;
    let sum: f64 = preds.iter().zip(truth).map(|(p, &y)| crps_gaussian(p.mean, p.std(), y)).sum();
    Ok(sum / truth.len() as f64)
}

/// Levels 0.01, 0.02, ..., 0.99.
pub fn default_levels() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub levels: Vec<f64>,
    pub coverage: Vec<f64>,
    pub miscalibration_area: f64,
    pub sharpness: f64,
}

/// Coverage of central Gaussian intervals at each level, the mean absolute
/// gap to the diagonal, and the mean predictive std.
pub fn calibration(preds: &[PredictiveDistribution], truth: &[f64], levels: &[f64]) -> Result<Calibration, MetricsError> {
    check_lengths(preds.len(), truth.len())?;
    if preds.len() < 10 {
        return Err(MetricsError::TooFewPoints(preds.len()));
    }
    let n = std_normal();
    // |z| per point; zero-variance points are inside only when exact
    let abs_z: Vec<f64> = preds
        .iter()
        .zip(truth)
        .map(|(p, &y)| {
            let s = p.std();
            let d = (y - p.mean).abs();
            if s > 0.0 {
                d / s
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let count = abs_z.len() as f64;
    let coverage: Vec<f64> = levels
        .iter()
        .map(|&p| {
            let half = n.inverse_cdf(0.5 + 0.5 * p);
            abs_z.iter().filter(|&&z| z <= half).count() as f64 / count
        })
        .collect();
    let miscalibration_area = if levels.is_empty() {
        0.0
    } else {
        coverage.iter().zip(levels).map(|(c, p)| (c - p).abs()).sum::<f64>() / levels.len() as f64
    };
    let sharpness = preds.iter().map(PredictiveDistribution::std).sum::<f64>() / count;
    Ok(Calibration { levels: levels.to_vec(), coverage, miscalibration_area, sharpness })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub instant_h: f64,
    pub t_s: f64,
    pub points: usize,
    pub rmse: f64,
    pub crps: Option<f64>,
    pub nll: Option<f64>,
    pub sharpness: f64,
}

/// Overall and per-instant scores. Probabilistic entries are `None` when
/// the predictions carry no variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub points: usize,
    pub rmse: f64,
    pub crps_mean: Option<f64>,
    pub nll_mean: Option<f64>,
    pub miscalibration_area: Option<f64>,
    pub sharpness: f64,
    pub rows: Vec<SliceRow>,
}

fn probabilistic(preds: &[PredictiveDistribution]) -> bool {
    preds.iter().all(|p| p.total_var > 0.0)
}

/// Scores `preds` against `truth` at times `times_s`; per-instant rows use
/// the time nodes nearest to `first time + instant` and skip instants past
/// the last time.
pub fn evaluate(
    preds: &[PredictiveDistribution],
    truth: &[f64],
    times_s: &[f64],
    instants_h: &[f64],
) -> Result<EvalReport, MetricsError> {
    check_lengths(preds.len(), truth.len())?;
    check_lengths(preds.len(), times_s.len())?;
    let prob = probabilistic(preds);
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let sharpness = preds.iter().map(PredictiveDistribution::std).sum::<f64>() / preds.len() as f64;
    let (crps_mean, nll_mean, miscalibration_area) = if prob {
        let cal = if preds.len() >= 10 { Some(calibration(preds, truth, &default_levels())?.miscalibration_area) } else { None };
        (Some(crps_avg(preds, truth)?), Some(nll_metric(preds, truth)?), cal)
    } else {
        (None, None, None)
    };

    let mut nodes: Vec<f64> = times_s.to_vec();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
    let mut rows = Vec::new();
    for &h in instants_h {
        let target = first + 3600.0 * h;
        if target > last + 1e-9 || target < first - 1e-9 {
            log::warn!("instant {h} h lies outside the evaluated span; skipped");
            continue;
        }
        let t_s = *nodes
            .iter()
            .min_by(|a, b| (*a - target).abs().total_cmp(&(*b - target).abs()))
            .expect("non-empty");
        let idx: Vec<usize> = (0..times_s.len()).filter(|&i| times_s[i] == t_s).collect();
        let p: Vec<PredictiveDistribution> = idx.iter().map(|&i| preds[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
        let m: Vec<f64> = p.iter().map(|q| q.mean).collect();
        let slice_prob = probabilistic(&p);
        rows.push(SliceRow {
            instant_h: h,
            t_s,
            points: idx.len(),
            rmse: rmse(&m, &y)?,
            crps: if slice_prob { Some(crps_avg(&p, &y)?) } else { None },
            nll: if slice_prob { Some(nll_metric(&p, &y)?) } else { None },
            sharpness: p.iter().map(PredictiveDistribution::std).sum::<f64>() / p.len() as f64,
        });
    }
    Ok(EvalReport {
        points: preds.len(),
        rmse: rmse(&means, truth)?,
        crps_mean,
        nll_mean,
        miscalibration_area,
        sharpness,
        rows,
    })
}
