use std::collections::BTreeMap;

use bpinn::bayes::rho_for_sigma;
use bpinn::model::{SigmaTriplet, TrainedModel, Variant};
use bpinn::net::{forward, MlpConfig, ParamBlock, SpaceTimePoint};
use bpinn::physics::Normalization;
use bpinn::uq::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn two_pass(mu: &[f64]) -> f64 {
    let n = mu.len() as f64;
    let m = mu.iter().sum::<f64>() / n;
    mu.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

#[test]
fn decomposition_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let k = rng.random_range(2..400);
        let mu: Vec<f64> = (0..k).map(|_| rng.random_range(20.0..80.0)).collect();
        let var: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        let (e, a, t) = decompose(&mu, &var).unwrap();
        let oracle = two_pass(&mu);
        assert!((e - oracle).abs() <= 1e-12 * oracle);
        assert!((a - var.iter().sum::<f64>() / k as f64).abs() <= 1e-12 * a);
        assert_eq!(t, e + a);
    }
}

#[test]
fn scale_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mu: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..3.0)).collect();
    let var = vec![0.1; 100];
    let (e, ..) = decompose(&mu, &var).unwrap();
    for c in [2.0, 0.5, 4.0] {
        let scaled: Vec<f64> = mu.iter().map(|v| v * c).collect();
        assert_eq!(decompose(&scaled, &var).unwrap().0, c * c * e);
    }
    let scaled: Vec<f64> = mu.iter().map(|v| v * 3.7).collect();
    assert!((decompose(&scaled, &var).unwrap().0 / (3.7 * 3.7 * e) - 1.0).abs() < 1e-12);
}

#[test]
fn epistemic_estimate_converges_at_root_k() {
    let v: f64 = 2.0;
    let normal = Normal::new(1.0, v.sqrt()).unwrap();
    let mut rms = Vec::new();
    for k in [100usize, 1000, 10_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let errs: Vec<f64> = (0..200)
            .map(|_| {
                let mu: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
                decompose(&mu, &vec![0.0; k]).unwrap().0 - v
            })
            .collect();
        rms.push((errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt());
    }
    // Var of the sample variance of a normal ≈ 2v²/K
    for (i, k) in [100.0f64, 1000.0, 10_000.0].iter().enumerate() {
        let expect = v * (2.0 / k).sqrt();
        assert!((rms[i] / expect - 1.0).abs() < 0.25, "K={k}: {} vs {expect}", rms[i]);
    }
    for w in rms.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.3, "ratio {ratio}");
    }
}

fn model(variant: Variant, sigma_q: f64) -> TrainedModel {
    let hetero = variant.is_hetero();
    let dropout = if variant.is_dropout() { 0.1 } else { 0.0 };
    let config = MlpConfig::with_hidden(&[6, 5], hetero, dropout);
    let layout = config.layout().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let theta = layout.glorot(&mut rng);
    let params = if variant.is_bayesian() {
        ParamBlock::Variational { rho: vec![rho_for_sigma(sigma_q); theta.len()], mu: theta }
    } else {
        ParamBlock::Deterministic { theta }
    };
    TrainedModel {
        variant,
        config,
        params,
        norm: Normalization { x_scale: 1.0, t_offset: 0.0, t_scale: 86400.0, temp_shift: 15.0, temp_scale: 40.0 },
        sigma: SigmaTriplet { sigma_0: 0.01, sigma_bc: 0.02, sigma_f: 0.01 },
        extra: BTreeMap::new(),
    }
}

fn points() -> Vec<SpaceTimePoint> {
    (0..25).map(|i| SpaceTimePoint::new((i % 5) as f64 / 4.0, (i / 5) as f64 / 4.0)).collect()
}

#[test]
fn collapsed_posterior_equals_deterministic_forward() {
    let m = model(Variant::BpinnHetero, 1e-12);
    let preds = predict(&m, &points(), 20, 0).unwrap();
    let ParamBlock::Variational { mu, .. } = &m.params else { unreachable!() };
    let layout = m.layout().unwrap();
    for (p, q) in points().iter().zip(&preds) {
        let det = forward(&layout, mu, *p, None).unwrap().mean;
        assert!(q.epistemic_var < 1e-10);
        assert!((q.mean - m.norm.denormalize_temp(det)).abs() < 1e-9);
        assert!(q.aleatoric_var >= 1e-6 * 1600.0);
    }
}

#[test]
fn homoscedastic_aleatoric_is_configured_sigma() {
    for v in [Variant::BpinnHomo, Variant::DpinnHomo] {
        let m = model(v, 0.05);
        let want = 0.02 * 0.02 * 1600.0;
        let preds = predict(&m, &points(), 10, 1).unwrap();
        for q in &preds {
            assert!((q.aleatoric_var - want).abs() < 1e-12);
            assert_eq!(q.total_var, q.epistemic_var + q.aleatoric_var);
            assert!(q.epistemic_var >= 0.0);
        }
        // zero biases pin the origin output, elsewhere samples disagree
        assert!(preds[1..].iter().all(|q| q.epistemic_var > 0.0));
    }
}

#[test]
fn vanilla_has_zero_variance_and_ignores_k() {
    let m = model(Variant::Pinn, 0.0);
    let a = predict(&m, &points(), 0, 0).unwrap();
    assert!(a.iter().all(|q| q.total_var == 0.0 && q.n_samples == 1));
    assert_eq!(a, predict(&m, &points(), 50, 9).unwrap());
}

#[test]
fn stochastic_variants_need_two_samples_and_replay() {
    for v in [Variant::BpinnHetero, Variant::DpinnHetero] {
        let m = model(v, 0.05);
        assert!(matches!(predict(&m, &points(), 1, 0), Err(UqError::Samples { .. })));
        let a = predict(&m, &points(), 30, 4).unwrap();
        assert_eq!(a, predict(&m, &points(), 30, 4).unwrap());
        assert_ne!(a, predict(&m, &points(), 30, 5).unwrap());
    }
}

#[test]
fn grid_prediction_layout() {
    let m = model(Variant::DpinnHetero, 0.0);
    let g = predict_grid(&m, &[0.0, 0.5, 1.0], &[0.0, 3600.0], 10, 0).unwrap();
    assert_eq!(g.mean.nx(), 3);
    assert_eq!(g.mean.nt(), 2);
    let csv = g.to_csv();
    assert!(csv.starts_with("x,t_s,mean,eu,au,tu\n"));
    assert_eq!(csv.lines().count(), 7);
}
