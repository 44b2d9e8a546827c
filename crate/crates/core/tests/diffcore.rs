use bpinn::diffcore::{check_gradient, grad, Objective, Scalar};
use bpinn::net::{forward, forward_jet, MlpConfig, SpaceTimePoint};
use bpinn::physics::ResidualScaling;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(hidden: &[usize], seed: u64) -> (bpinn::net::Layout, Vec<f64>) {
    let layout = MlpConfig::with_hidden(hidden, false, 0.0).layout().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..layout.len()).map(|_| rng.random_range(-1.2..1.2)).collect();
    (layout, w)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

#[test]
fn jet_channels_match_central_differences() {
    let h = 1e-3;
    for seed in 0..20 {
        let (layout, w) = random_net(&[6, 5], seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let p = SpaceTimePoint::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
        let u = |x: f64, t: f64| forward(&layout, &w, SpaceTimePoint::new(x, t), None).unwrap().mean;
        let jet = forward_jet(&layout, &w, p, None).unwrap().mean;
        let d_xx = (u(p.x + h, p.t) - 2.0 * u(p.x, p.t) + u(p.x - h, p.t)) / (h * h);
        // first derivatives use Richardson-extrapolated central differences
        let cx = |h: f64| (u(p.x + h, p.t) - u(p.x - h, p.t)) / (2.0 * h);
        let ct = |h: f64| (u(p.x, p.t + h) - u(p.x, p.t - h)) / (2.0 * h);
        let d_x = (4.0 * cx(h / 2.0) - cx(h)) / 3.0;
        let d_t = (4.0 * ct(h / 2.0) - ct(h)) / 3.0;
        assert!(rel(jet.d_xx, d_xx) < 1e-5, "seed {seed}: d_xx {} vs {d_xx}", jet.d_xx);
        assert!(rel(jet.d_x, d_x) < 1e-5, "seed {seed}: d_x {} vs {d_x}", jet.d_x);
        assert!(rel(jet.d_t, d_t) < 1e-5, "seed {seed}: d_t {} vs {d_t}", jet.d_t);
        assert_eq!(jet.value, u(p.x, p.t));
    }
}

/// Mean squared normalized residual over fixed collocation points.
struct ResidualLoss {
    layout: bpinn::net::Layout,
    points: Vec<(SpaceTimePoint, f64)>,
    scaling: ResidualScaling,
}

impl Objective for ResidualLoss {
    fn evaluate<S: Scalar>(&self, p: &[S]) -> S {
        let terms: Vec<S> = self
            .points
            .iter()
            .map(|&(pt, a)| {
                let jet = forward_jet(&self.layout, p, pt, None).unwrap().mean;
                self.scaling.residual(&jet, a).square()
            })
            .collect();
        S::sum(&terms) * (1.0 / terms.len() as f64)
    }
}

fn residual_loss(seed: u64) -> (ResidualLoss, Vec<f64>) {
    let (layout, w) = random_net(&[5, 3], seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
    let points = (0..6).map(|_| (SpaceTimePoint::new(rng.random(), rng.random()), rng.random_range(-2.0..2.0))).collect();
    let scaling = ResidualScaling { diffusion: 0.3, reaction: 1.7, factor: 1.0 };
    (ResidualLoss { layout, points, scaling }, w)
}

#[test]
fn residual_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let (loss, w) = residual_loss(seed);
        let report = check_gradient(&loss, &w, 1e-5, 1e-4);
        assert!(report.all_pass(), "seed {seed}: max rel err {}", report.max_rel_err());
    }
}

#[test]
fn gradient_is_linear_in_the_loss() {
    struct Mix<'a>(&'a ResidualLoss, &'a ResidualLoss, f64, f64);
    impl Objective for Mix<'_> {
        fn evaluate<S: Scalar>(&self, p: &[S]) -> S {
            self.0.evaluate(p) * self.2 + self.1.evaluate(p) * self.3
        }
    }
    let (l1, w) = residual_loss(7);
    let (mut l2, _) = residual_loss(8);
    l2.layout = l1.layout.clone();
    let (_, g1) = grad(&l1, &w).unwrap();
    let (_, g2) = grad(&l2, &w).unwrap();
    let (_, g) = grad(&Mix(&l1, &l2, 0.7, -2.5), &w).unwrap();
    for i in 0..w.len() {
        let want = 0.7 * g1[i] - 2.5 * g2[i];
        assert!((g[i] - want).abs() <= 1e-12 * (1.0 + want.abs()), "{i}: {} vs {want}", g[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn value_channel_is_bit_identical(seed in 0u64..10_000, x in 0.0f64..1.0, t in 0.0f64..1.0) {
        let (layout, w) = random_net(&[4, 4], seed);
        let p = SpaceTimePoint::new(x, t);
        let plain = forward(&layout, &w, p, None).unwrap().mean;
        let jet = forward_jet(&layout, &w, p, None).unwrap().mean;
        prop_assert_eq!(plain.to_bits(), jet.value.to_bits());
    }
}
