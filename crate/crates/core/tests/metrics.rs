use bpinn::metrics::*;
use bpinn::uq::PredictiveDistribution;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use statrs::function::erf::erfc;

fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// ∫ (F(z) − 1{z ≥ y})² dz by the trapezoid rule, split at y.
fn crps_trapezoid(mu: f64, sigma: f64, y: f64) -> f64 {
    let lo = (mu - 12.0 * sigma).min(y);
    let hi = (mu + 12.0 * sigma).max(y);
    let piece = |a: f64, b: f64, step: bool| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |z: f64| {
            let d = phi((z - mu) / sigma) - if step { 1.0 } else { 0.0 };
            d * d
        };
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    };
    piece(lo, y, false) + piece(y, hi, true)
}

fn pd(mean: f64, var: f64) -> PredictiveDistribution {
    PredictiveDistribution::new(mean, 0.0, var, 1)
}

#[test]
fn closed_form_crps_matches_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let mu = rng.random_range(-5.0..5.0);
        let sigma = rng.random_range(0.05..3.0);
        let y = mu + sigma * rng.random_range(-4.0..4.0);
        let (a, b) = (crps_gaussian(mu, sigma, y), crps_trapezoid(mu, sigma, y));
        assert!((a - b).abs() < 1e-4, "mu={mu} sigma={sigma} y={y}: {a} vs {b}");
    }
    assert!((crps_gaussian(0.0, 1.0, 0.0) - crps_trapezoid(0.0, 1.0, 0.0)).abs() < 1e-4);
}

#[test]
fn crps_continuous_at_zero_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (mu, y) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        assert!((crps_gaussian(mu, 1e-8, y) - (y - mu).abs()).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn crps_below_expected_absolute_error(mu in -3.0f64..3.0, sigma in 0.1f64..2.0, y in -4.0f64..4.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4000;
        let draws: Vec<f64> = (0..n).map(|_| mu + sigma * { let z: f64 = StandardNormal.sample(&mut rng); z }).collect();
        let mae = draws.iter().map(|x| (x - y).abs()).sum::<f64>() / n as f64;
        let se = (draws.iter().map(|x| ((x - y).abs() - mae).powi(2)).sum::<f64>() / (n * (n - 1)) as f64).sqrt();
        prop_assert!(crps_gaussian(mu, sigma, y) <= mae + 4.0 * se);
    }
}

#[test]
fn nll_rmse_and_average_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let preds: Vec<PredictiveDistribution> = (0..200)
        .map(|_| PredictiveDistribution::new(rng.random_range(10.0..80.0), rng.random_range(0.0..2.0), rng.random_range(0.01..1.0), 5))
        .collect();
    let truth: Vec<f64> = preds.iter().map(|p| p.mean + rng.random_range(-2.0..2.0)).collect();

    let mut dens = 0.0;
    let mut sq = 0.0;
    let mut cr = 0.0;
    for (p, y) in preds.iter().zip(&truth) {
        let s = p.total_var.sqrt();
        let pdf = (-(y - p.mean).powi(2) / (2.0 * p.total_var)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        dens -= pdf.ln();
        sq += (y - p.mean).powi(2);
        cr += crps_gaussian(p.mean, s, *y);
    }
    let n = truth.len() as f64;
    let nll = nll_metric(&preds, &truth).unwrap();
    assert!((nll - dens / n).abs() <= 1e-12 * nll.abs());
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    assert_eq!(rmse(&means, &truth).unwrap(), (sq / n).sqrt());
    assert_eq!(crps_avg(&preds, &truth).unwrap(), cr / n);
    assert!((rmse(&[3.0; 4], &[1.0; 4]).unwrap() - 2.0).abs() < 1e-15);
}

fn self_consistent(n: usize, seed: u64) -> (Vec<PredictiveDistribution>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds: Vec<PredictiveDistribution> =
        (0..n).map(|_| pd(rng.random_range(20.0..60.0), rng.random_range(0.1..4.0))).collect();
    let truth = preds
        .iter()
        .map(|p| Normal::new(p.mean, p.total_var.sqrt()).unwrap().sample(&mut rng))
        .collect();
    (preds, truth)
}

#[test]
fn calibration_of_true_predictive_is_near_diagonal() {
    let (preds, truth) = self_consistent(10_000, 8);
    let c = calibration(&preds, &truth, &default_levels()).unwrap();
    assert!(c.miscalibration_area < 0.02, "area {}", c.miscalibration_area);
    assert_eq!(c.coverage.len(), 99);
    let (small_p, small_t) = self_consistent(300, 8);
    let coarse = calibration(&small_p, &small_t, &default_levels()).unwrap();
    assert!(c.miscalibration_area <= coarse.miscalibration_area);
}

#[test]
fn doubled_variance_over_covers() {
    let (preds, truth) = self_consistent(10_000, 9);
    let wide: Vec<PredictiveDistribution> = preds.iter().map(|p| pd(p.mean, 2.0 * p.total_var)).collect();
    let c = calibration(&wide, &truth, &default_levels()).unwrap();
    assert!(c.coverage.iter().zip(&c.levels).all(|(cov, p)| cov > p));
    assert!((0.0..=0.5).contains(&c.miscalibration_area));
}

#[test]
fn evaluation_report_rows_and_vanilla_rule() {
    let times: Vec<f64> = (0..=60).map(|h| h as f64 * 3600.0).collect();
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    let mut ts = Vec::new();
    for &t in &times {
        for i in 0..5 {
            preds.push(pd(40.0 + i as f64, 0.25));
            truth.push(40.3 + i as f64);
            ts.push(t);
        }
    }
    let r = evaluate(&preds, &truth, &ts, &[0.0, 3.0, 6.0, 18.0, 25.0, 50.0]).unwrap();
    assert_eq!(r.rows.len(), 6);
    assert_eq!(r.rows[3].t_s, 18.0 * 3600.0);
    assert!(r.rows.iter().all(|row| row.points == 5 && row.crps.is_some()));
    assert!((r.rmse - 0.3).abs() < 1e-12);

    let point: Vec<PredictiveDistribution> = preds.iter().map(|p| pd(p.mean, 0.0)).collect();
    let v = evaluate(&point, &truth, &ts, &[0.0, 3.0]).unwrap();
    assert!(v.crps_mean.is_none() && v.nll_mean.is_none() && v.miscalibration_area.is_none());
    assert!(v.rows.iter().all(|row| row.crps.is_none() && row.nll.is_none()));
    assert!((v.rmse - 0.3).abs() < 1e-12);

    let tiny: Vec<PredictiveDistribution> = truth.iter().map(|&y| pd(y, 1e-12)).collect();
    let s = evaluate(&tiny, &truth, &ts, &[]).unwrap();
    assert_eq!(s.rmse, 0.0);
    assert!(s.crps_mean.unwrap() < 1e-6);
}
