//! Built-in self-tests: loss gradients against finite differences, network
//! input derivatives against finite differences, and the reference solver
//! against a decaying sine mode.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bpinn::bayes::{standard_normal_vec, PriorSpec};
use bpinn::diffcore::check_gradient;
use bpinn::model::{SigmaTriplet, Variant};
use bpinn::net::{forward, forward_jet, DropoutMask, MlpConfig, SpaceTimePoint};
use bpinn::physics::{BoundarySeries, CollocationPoint, InitialProfile, Normalization, ResidualScaling, ThermalPdeSpec};
use bpinn::refsolver::{solve, GridSpec};
use bpinn::train::{Batches, LossContext, LossProblem, LossWeights, Sample};

use crate::config::RunConfig;
use crate::error::CliError;

/// Outcome of one self-test.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn sine_spec(amplitude: f64) -> ThermalPdeSpec {
    let times: Vec<f64> = (0..=144).map(|i| 600.0 * i as f64).collect();
    let mut spec = ThermalPdeSpec::with_series(BoundarySeries::constant(times, 0.0, 0.0, 0.0));
    spec.p0 = 0.0;
    spec.mu_rated = 0.0;
    spec.initial = InitialProfile::Sine { amplitude };
    spec
}

fn gradient_checks(seed: u64) -> Vec<CheckLine> {
    let spec = sine_spec(10.0);
    let norm = Normalization::from_spec(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pt = |rng: &mut ChaCha8Rng| SpaceTimePoint::new(rng.random(), rng.random());
    let initial: Vec<Sample> = (0..4).map(|_| Sample { point: SpaceTimePoint::new(rng.random(), 0.0), target: rng.random() }).collect();
    let boundary: Vec<Sample> =
        (0..4).map(|i| Sample { point: SpaceTimePoint::new((i % 2) as f64, rng.random()), target: rng.random() }).collect();
    let colloc: Vec<CollocationPoint> = (0..4).map(|_| CollocationPoint { point: pt(&mut rng), forcing: rng.random() }).collect();
    Variant::ALL
        .into_iter()
        .map(|variant| {
            let hidden = [3, 3];
            let cfg = MlpConfig::with_hidden(&hidden, variant.is_hetero(), if variant.is_dropout() { 0.2 } else { 0.0 });
            let layout = cfg.layout().expect("valid layout");
            let ctx = LossContext {
                variant,
                layout: layout.clone(),
                scaling: ResidualScaling::new(&spec, &norm),
                sigma: SigmaTriplet { sigma_0: 0.3, sigma_bc: 0.2, sigma_f: 0.5 },
                prior: PriorSpec::default(),
                weights: LossWeights { lambda_0: 1.0, lambda_b: 0.7, lambda_r: 0.3 },
            };
            let n = layout.len();
            let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
            let noise = if variant.is_bayesian() {
                w.extend(vec![-2.0; n]);
                vec![standard_normal_vec(n, &mut rng)]
            } else {
                Vec::new()
            };
            let mask = variant.is_dropout().then(|| DropoutMask::sample(&hidden, 0.2, &mut rng));
            let problem = LossProblem {
                ctx: &ctx,
                batch: Batches::full(&initial, &boundary, &colloc),
                noise: &noise,
                mask: mask.as_ref(),
                with_kl: variant.is_bayesian(),
            };
            let report = check_gradient(&problem, &w, 1e-5, 1e-3);
            CheckLine {
                name: format!("gradient {variant}"),
                pass: report.all_pass(),
                detail: format!("max rel err {:.2e} over {} parameters", report.max_rel_err(), w.len()),
            }
        })
        .collect()
}

/// Largest relative error of the jet channels against finite differences
/// over random networks and points.
fn jet_check(seed: u64) -> CheckLine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = MlpConfig::with_hidden(&[6, 5], false, 0.0).layout().expect("valid layout");
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w = layout.glorot(&mut rng);
        let p = SpaceTimePoint::new(rng.random(), rng.random());
        let f = |x: f64, t: f64| forward(&layout, &w, SpaceTimePoint::new(x, t), None).expect("sized").mean;
        let jet = forward_jet(&layout, &w, p, None).expect("sized").mean;
        // Richardson-extrapolated central differences
        let d1 = |g: &dyn Fn(f64) -> f64, h: f64| {
            let c = |h: f64| (g(h) - g(-h)) / (2.0 * h);
            (4.0 * c(h / 2.0) - c(h)) / 3.0
        };
        let dx = d1(&|h| f(p.x + h, p.t), 1e-2);
        let dt = d1(&|h| f(p.x, p.t + h), 1e-2);
        let h = 1e-3;
        let dxx = (f(p.x + h, p.t) - 2.0 * f(p.x, p.t) + f(p.x - h, p.t)) / (h * h);
        for (a, b) in [(jet.d_x, dx), (jet.d_t, dt), (jet.d_xx, dxx)] {
            worst = worst.max((a - b).abs() / b.abs().max(1e-3));
        }
    }
    CheckLine { name: "input derivatives".into(), pass: worst < 1e-5, detail: format!("max rel err {worst:.2e}") }
}

fn solver_check() -> CheckLine {
    let amp = 10.0;
    let spec = sine_spec(amp);
    let t_end = spec.t_end();
    let grid = GridSpec { nx: 101, dt: t_end / 2000.0 };
    let rate = spec.alpha() * PI * PI / (spec.height * spec.height) + spec.h / spec.rho_cp;
    match solve(&spec, &grid) {
        Ok(field) => {
            let err = field
                .points()
                .map(|(x, t, v)| (v - amp * (-rate * t).exp() * (PI * x / spec.height).sin()).abs())
                .fold(0.0, f64::max);
            CheckLine { name: "reference solver".into(), pass: err < 1e-3, detail: format!("max-norm error {err:.2e} K") }
        }
        Err(e) => CheckLine { name: "reference solver".into(), pass: false, detail: e.to_string() },
    }
}

pub fn checks(seed: u64) -> Vec<CheckLine> {
    let mut out = gradient_checks(seed);
    out.push(jet_check(seed));
    out.push(solver_check());
    out
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let lines = checks(cfg.seed);
    for l in &lines {
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    if failed > 0 {
        return Err(CliError::invalid(format!("{failed} self-test(s) failed")));
    }
    Ok(())
}
