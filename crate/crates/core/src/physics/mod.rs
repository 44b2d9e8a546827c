//! Vertical oil-temperature diffusion in a transformer tank.
//!
//! Θ_O(x, t) obeys `k·Θ_xx + q = ρc_p·Θ_t` on `0 ≤ x ≤ H` with volumetric
//! heat source `q = P₀ + K(t)²·μ − h·(Θ_O − Θ_A)` and Dirichlet data
//! `Θ_O(0,t) = Θ_A(t)`, `Θ_O(H,t) = Θ_TO(t)`.
//!
//! Losses are treated as volumetric densities over an effective 1 m³ volume,
//! so `P₀` and `μ` given in W enter directly as W/m³.

mod normalize;
mod sampling;

pub use normalize::Normalization;
pub use sampling::{sample_training_sets, DataPoint, SampleCounts, TrainingSets};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{Jet2, Scalar};
use crate::net::SpaceTimePoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("time {t} s lies outside the series span [{start}, {end}] s")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("invalid thermal spec: {0}")]
    Invalid(String),
    #[error("requested {requested} boundary points but only {capacity} (boundary, timestamp) pairs exist")]
    Capacity { requested: usize, capacity: usize },
    #[error("sample counts must be at least 1 (got N0={n0}, Nb={nb}, Nr={nr})")]
    Counts { n0: usize, nb: usize, nr: usize },
}

/// Load and boundary temperatures on a shared, strictly increasing time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySeries {
    /// Seconds.
    pub times: Vec<f64>,
    /// Load factor K [p.u.].
    pub load: Vec<f64>,
    /// Θ_A [°C], bottom boundary.
    pub ambient: Vec<f64>,
    /// Θ_TO [°C], top boundary.
    pub topoil: Vec<f64>,
}

/// Series values at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesSample {
    pub load: f64,
    pub ambient: f64,
    pub topoil: f64,
}

impl BoundarySeries {
    pub fn constant(times: Vec<f64>, load: f64, ambient: f64, topoil: f64) -> Self {
        let n = times.len();
        Self {
            times,
            load: vec![load; n],
            ambient: vec![ambient; n],
            topoil: vec![topoil; n],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn validate(&self) -> Result<(), PhysicsError> {
        let n = self.times.len();
        if n < 2 {
            return Err(PhysicsError::Invalid("series needs at least two timestamps".into()));
        }
        if self.load.len() != n || self.ambient.len() != n || self.topoil.len() != n {
            return Err(PhysicsError::Invalid("series channels have different lengths".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PhysicsError::Invalid("series timestamps must be strictly increasing".into()));
        }
        let all = self.times.iter().chain(&self.load).chain(&self.ambient).chain(&self.topoil);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(PhysicsError::Invalid("series contains non-finite values".into()));
        }
        Ok(())
    }

    /// Bracketing index and weight for linear interpolation at `t`.
    fn locate(&self, t: f64) -> Result<(usize, f64), PhysicsError> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(PhysicsError::OutOfSpan { t, start, end });
        }
        let i = match self.times.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return Ok((i, 0.0)),
            Err(i) => i - 1,
        };
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Ok((i, w))
    }

    pub fn at(&self, t: f64) -> Result<SeriesSample, PhysicsError> {
        let (i, w) = self.locate(t)?;
        let lerp = |v: &[f64]| if w == 0.0 { v[i] } else { v[i] + w * (v[i + 1] - v[i]) };
        Ok(SeriesSample {
            load: lerp(&self.load),
            ambient: lerp(&self.ambient),
            topoil: lerp(&self.topoil),
        })
    }
}

/// Initial temperature profile Θ_O(x, t₀).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialProfile {
    /// Straight line from Θ_A(t₀) at the bottom to Θ_TO(t₀) at the top.
    Linear,
    /// `amplitude · sin(πx/H)`; used for manufactured-solution checks.
    Sine { amplitude: f64 },
}

/// Physical coefficients, geometry and driving series of the diffusion problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalPdeSpec {
    /// Thermal conductivity k [W/(m·K)].
    pub k: f64,
    /// Volumetric heat capacity ρ·c_p [J/(m³·K)].
    pub rho_cp: f64,
    /// Convective coefficient h [W/(m³·K)].
    pub h: f64,
    /// No-load losses P₀ [W/m³].
    pub p0: f64,
    /// Rated load losses μ [W/m³].
    pub mu_rated: f64,
    /// Tank height H [m].
    pub height: f64,
    pub series: BoundarySeries,
    pub initial: InitialProfile,
}

/// Default coefficients. These are not nameplate values: they give a
/// mineral-oil-like diffusivity and are meant to be overridden.
pub mod defaults {
    pub const K: f64 = 0.11;
    pub const RHO_CP: f64 = 1.53e6;
    pub const H: f64 = 50.0;
    pub const HEIGHT: f64 = 1.0;
    /// No-load losses from the nameplate table [W].
    pub const P0: f64 = 842.0;
    /// Rated load losses from the nameplate table [W].
    pub const MU_RATED: f64 = 9800.0;
}

impl ThermalPdeSpec {
    pub fn with_series(series: BoundarySeries) -> Self {
        Self {
            k: defaults::K,
            rho_cp: defaults::RHO_CP,
            h: defaults::H,
            p0: defaults::P0,
            mu_rated: defaults::MU_RATED,
            height: defaults::HEIGHT,
            series,
            initial: InitialProfile::Linear,
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let pos = [("k", self.k), ("rho_cp", self.rho_cp), ("height", self.height)];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PhysicsError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [("h", self.h), ("p0", self.p0), ("mu_rated", self.mu_rated)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PhysicsError::Invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        self.series.validate()
    }

    /// Thermal diffusivity α = k / (ρ·c_p) [m²/s].
    pub fn alpha(&self) -> f64 {
        self.k / self.rho_cp
    }

    pub fn t_start(&self) -> f64 {
        self.series.start()
    }

    pub fn t_end(&self) -> f64 {
        self.series.end()
    }

    /// Load losses P_K = K²·μ at time `t`.
    pub fn load_losses(&self, t: f64) -> Result<f64, PhysicsError> {
        let k = self.series.at(t)?.load;
        Ok(k * k * self.mu_rated)
    }

    /// Dirichlet values (bottom, top) at time `t`.
    pub fn boundary_values(&self, t: f64) -> Result<(f64, f64), PhysicsError> {
        let s = self.series.at(t)?;
        Ok((s.ambient, s.topoil))
    }

    pub fn initial_value(&self, x: f64) -> f64 {
        match self.initial {
            InitialProfile::Linear => {
                let (bottom, top) = (self.series.ambient[0], self.series.topoil[0]);
                bottom + (top - bottom) * (x / self.height)
            }
            InitialProfile::Sine { amplitude } => amplitude * (std::f64::consts::PI * x / self.height).sin(),
        }
    }

    /// q(x, t) = P₀ + K(t)²·μ − h·(Θ_O − Θ_A(t)) [W/m³].
    pub fn heat_source(&self, _x: f64, t: f64, theta_o: f64) -> Result<f64, PhysicsError> {
        let s = self.series.at(t)?;
        Ok(self.p0 + s.load * s.load * self.mu_rated - self.h * (theta_o - s.ambient))
    }
}

/// Physical residual `Θ_xx + q/k − Θ_t/α` from network derivatives taken in
/// normalized coordinates; the chain-rule factors come from `norm`.
pub fn residual(
    spec: &ThermalPdeSpec,
    norm: &Normalization,
    eval: &Jet2<f64>,
    x: f64,
    t: f64,
) -> Result<f64, PhysicsError> {
    let theta = norm.denormalize_temp(eval.value);
    let theta_xx = norm.temp_scale * eval.d_xx / (norm.x_scale * norm.x_scale);
    let theta_t = norm.temp_scale * eval.d_t / norm.t_scale;
    let q = spec.heat_source(x, t, theta)?;
    Ok(theta_xx + q / spec.k - theta_t / spec.alpha())
}

/// Constants of the residual rewritten in normalized variables.
///
/// Multiplying the physical residual by `α·T/ΔΘ` gives
/// `r̃ = D·ũ_xx + a(t) − b·ũ − ũ_t` with `D = α·T/H²` and `b = h·T/(ρc_p)`;
/// `a(t)` depends only on the driving series and is stored per point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualScaling {
    pub diffusion: f64,
    pub reaction: f64,
    /// Factor from physical to normalized residual.
    pub factor: f64,
}

impl ResidualScaling {
    pub fn new(spec: &ThermalPdeSpec, norm: &Normalization) -> Self {
        let alpha = spec.alpha();
        Self {
            diffusion: alpha * norm.t_scale / (norm.x_scale * norm.x_scale),
            reaction: spec.h * norm.t_scale / spec.rho_cp,
            factor: alpha * norm.t_scale / norm.temp_scale,
        }
    }

    /// Source term `a(t)` for a collocation point at physical time `t`.
    pub fn forcing(&self, spec: &ThermalPdeSpec, norm: &Normalization, t: f64) -> Result<f64, PhysicsError> {
        let s = spec.series.at(t)?;
        let c = norm.t_scale / (spec.rho_cp * norm.temp_scale);
        Ok(c * (spec.p0 + s.load * s.load * spec.mu_rated + spec.h * (s.ambient - norm.temp_shift)))
    }

    pub fn residual<S: Scalar>(&self, eval: &Jet2<S>, forcing: f64) -> S {
        eval.d_xx * self.diffusion + eval.value * (-self.reaction) + forcing - eval.d_t
    }
}

/// Interior point where the PDE residual is penalized, with its forcing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollocationPoint {
    pub point: SpaceTimePoint,
    pub forcing: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec() -> ThermalPdeSpec {
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 60.0).collect();
        let mut s = ThermalPdeSpec::with_series(BoundarySeries::constant(times, 0.5, 20.0, 60.0));
        s.series.load[3] = 1.0;
        s
    }

    #[test]
    fn alpha_is_ratio() {
        let s = spec();
        assert!((s.alpha() - 0.11 / 1.53e6).abs() <= 1e-12 * s.alpha());
    }

    #[test]
    fn heat_source_cases() {
        let mut s = spec();
        s.series.load = vec![0.0; 11];
        assert_eq!(s.heat_source(0.5, 120.0, 20.0).unwrap(), 842.0);
        s.h = 0.0;
        s.series.load = vec![1.0; 11];
        assert_eq!(s.heat_source(0.5, 120.0, 75.0).unwrap(), 842.0 + 9800.0);
        let mut s = spec();
        s.h = 50.0;
        s.series.load = vec![0.5; 11];
        // h·ΔΘ = 100
        assert!((s.heat_source(0.5, 60.0, 22.0).unwrap() - 3192.0).abs() < 1e-9);
    }

    #[test]
    fn heat_source_is_affine_in_temperature() {
        let s = spec();
        let q1 = s.heat_source(0.2, 150.0, 30.0).unwrap();
        let q2 = s.heat_source(0.2, 150.0, 37.0).unwrap();
        assert!(((q2 - q1) / 7.0 + s.h).abs() < 1e-12);
    }

    #[test]
    fn no_extrapolation() {
        let s = spec();
        assert!(matches!(s.heat_source(0.0, 601.0, 20.0), Err(PhysicsError::OutOfSpan { .. })));
        assert!(s.heat_source(0.0, -1.0, 20.0).is_err());
    }

    #[test]
    fn series_interpolates_linearly() {
        let s = spec();
        let v = s.series.at(150.0).unwrap();
        assert!((v.load - 0.75).abs() < 1e-15);
        assert_eq!(s.series.at(180.0).unwrap().load, 1.0);
    }

    #[test]
    fn linear_initial_profile() {
        let s = spec();
        assert_eq!(s.initial_value(0.0), 20.0);
        assert_eq!(s.initial_value(1.0), 60.0);
        assert_eq!(s.initial_value(0.25), 30.0);
    }

    /// u = A·sin(πx/H)·exp(−απ²t/H²) with q ≡ 0.
    fn manufactured() -> (ThermalPdeSpec, Normalization) {
        let mut s = ThermalPdeSpec::with_series(BoundarySeries::constant(vec![0.0, 3.0e6], 0.0, 0.0, 0.0));
        s.p0 = 0.0;
        s.mu_rated = 0.0;
        s.h = 0.0;
        s.height = 1.3;
        s.initial = InitialProfile::Sine { amplitude: 1.0 };
        let n = Normalization::from_spec(&s);
        (s, n)
    }

    fn exact_jet(s: &ThermalPdeSpec, n: &Normalization, x: f64, t: f64) -> Jet2<f64> {
        let (h, a) = (s.height, s.alpha());
        let decay = (-a * PI * PI * t / (h * h)).exp();
        let u = (PI * x / h).sin() * decay;
        let u_xx = -(PI / h).powi(2) * u;
        let u_t = -a * (PI / h).powi(2) * u;
        // physical → normalized derivatives
        Jet2::new(
            n.normalize_temp(u),
            0.0,
            u_xx * n.x_scale * n.x_scale / n.temp_scale,
            u_t * n.t_scale / n.temp_scale,
        )
    }

    #[test]
    fn manufactured_solution_has_zero_residual() {
        let (s, n) = manufactured();
        for i in 0..20 {
            for j in 0..20 {
                let x = s.height * i as f64 / 19.0;
                let t = s.t_end() * j as f64 / 19.0;
                let r = residual(&s, &n, &exact_jet(&s, &n, x, t), x, t).unwrap();
                assert!(r.abs() < 1e-6, "r({x},{t}) = {r}");
            }
        }
    }

    #[test]
    fn equilibrium_has_zero_residual() {
        let mut s = spec();
        s.p0 = 0.0;
        s.h = 0.0;
        s.series.load = vec![0.0; 11];
        s.series.topoil = vec![20.0; 11];
        let n = Normalization::from_spec(&s);
        let j = Jet2::new(n.normalize_temp(20.0), 0.0, 0.0, 0.0);
        assert_eq!(residual(&s, &n, &j, 0.4, 300.0).unwrap(), 0.0);
    }

    #[test]
    fn scaled_residual_matches_physical() {
        let mut s = spec();
        s.height = 2.0;
        let n = Normalization::from_spec(&s);
        let sc = ResidualScaling::new(&s, &n);
        let jets = [
            Jet2::new(0.3, 0.7, -2.0, 0.4),
            Jet2::new(0.9, -0.1, 15.0, -3.0),
            Jet2::new(-0.2, 0.0, 0.02, 0.001),
        ];
        for (k, j) in jets.iter().enumerate() {
            let t = 37.0 + 100.0 * k as f64;
            let phys = residual(&s, &n, j, 0.5, t).unwrap();
            let scaled = sc.residual(j, sc.forcing(&s, &n, t).unwrap());
            assert!((scaled / sc.factor - phys).abs() <= 1e-8 * phys.abs().max(1.0), "{scaled} {phys}");
        }
    }
}
