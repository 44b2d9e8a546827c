//! Hot-spot rise dynamics, winding temperature and insulation ageing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::refsolver::FieldGrid;

#[derive(Debug, Error, PartialEq)]
pub enum ThermalError {
    #[error("time step {dt} min exceeds half of the smaller time constant ({limit} min)")]
    TimeStep { dt: f64, limit: f64 },
    #[error("invalid hot-spot parameter {name} = {value}")]
    Param { name: &'static str, value: f64 },
    #[error("empty load series")]
    Empty,
    #[error("time {t} s lies outside the rise series span [{start}, {end}] s")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("grid time axis is not uniform")]
    NonUniform,
    #[error("need at least 2 samples, got {0}")]
    Samples(usize),
    #[error("mean and variance grids differ in shape")]
    Shape,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HstParams {
    /// Hot-spot rise at rated load [K].
    pub delta_theta_hr: f64,
    pub k21: f64,
    pub k22: f64,
    /// Winding time constant [min].
    pub tau_w: f64,
    /// Top-oil time constant [min].
    pub tau_to: f64,
    /// Winding exponent.
    pub y: f64,
    /// Step between load samples [min].
    pub dt: f64,
    /// Equal sub-steps of the difference recursion per load sample.
    pub substeps: usize,
}

impl Default for HstParams {
    fn default() -> Self {
        Self {
            delta_theta_hr: 15.1,
            k21: 2.32,
            k22: 2.05,
            tau_w: 9.75,
            tau_to: 266.8,
            y: 1.3,
            dt: 1.0,
            substeps: 10,
        }
    }
}

impl HstParams {
    pub fn validate(&self) -> Result<(), ThermalError> {
        let named = [
            ("delta_theta_hr", self.delta_theta_hr),
            ("k21", self.k21),
            ("k22", self.k22),
            ("tau_w", self.tau_w),
            ("tau_to", self.tau_to),
            ("y", self.y),
            ("dt", self.dt),
        ];
        for (name, value) in named {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ThermalError::Param { name, value });
            }
        }
        if self.substeps == 0 {
            return Err(ThermalError::Param { name: "substeps", value: 0.0 });
        }
        let limit = 0.5 * self.tau_w.min(self.tau_to);
        if self.dt > limit {
            return Err(ThermalError::TimeStep { dt: self.dt, limit });
        }
        Ok(())
    }

    fn steady_parts(&self, k: f64) -> (f64, f64) {
        let ky = k.powf(self.y);
        (self.k21 * self.delta_theta_hr * ky, (self.k21 - 1.0) * self.delta_theta_hr * ky)
    }
}

/// Hot-spot rise over top oil for a load series sampled every `params.dt`.
///
/// Two first-order difference recursions, started at steady state for the
/// first load value; each interval holds the load at its end value.
pub fn hst_rise(params: &HstParams, load: &[f64]) -> Result<Vec<f64>, ThermalError> {
    params.validate()?;
    let (&k0, rest) = load.split_first().ok_or(ThermalError::Empty)?;
    let h = params.dt / params.substeps as f64;
    let u1 = h / (params.k22 * params.tau_w);
    let u2 = params.k22 * h / params.tau_to;
    let (mut r1, mut r2) = params.steady_parts(k0);
    let mut out = Vec::with_capacity(load.len());
    out.push(r1 - r2);
    for &k in rest {
        let (b1, b2) = params.steady_parts(k);
        for _ in 0..params.substeps {
            r1 += u1 * (b1 - r1);
            r2 += u2 * (b2 - r2);
        }
        out.push(r1 - r2);
    }
    Ok(out)
}

/// Steady-state hot-spot temperature for top-oil `theta_to0` and load `k0`.
pub fn hst_initial(params: &HstParams, theta_to0: f64, k0: f64) -> f64 {
    let ky = k0.powf(params.y);
    theta_to0 + params.k21 * params.delta_theta_hr * ky - (params.k21 - 1.0) * params.delta_theta_hr * ky
}

/// Rise series on a time axis in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct RiseSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl RiseSeries {
    pub fn at(&self, t: f64) -> Result<f64, ThermalError> {
        let (start, end) = (self.times[0], *self.times.last().unwrap());
        if !(t >= start && t <= end) {
            return Err(ThermalError::OutOfSpan { t, start, end });
        }
        let i = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len().max(2) - 1) - 1;
        if i + 1 >= self.times.len() || self.times[i] == t {
            return Ok(self.values[i]);
        }
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Ok(self.values[i] + w * (self.values[i + 1] - self.values[i]))
    }
}

/// Winding temperature: oil field plus the x-independent rise at each row.
pub fn winding_field(oil: &FieldGrid, rise: &RiseSeries) -> Result<FieldGrid, ThermalError> {
    let shifts = oil.t.iter().map(|&t| rise.at(t)).collect::<Result<Vec<_>, _>>()?;
    let nx = oil.nx();
    let values = oil.values().iter().enumerate().map(|(k, &v)| v + shifts[k / nx]).collect();
    Ok(FieldGrid::new(oil.x.clone(), oil.t.clone(), values))
}

/// Relative ageing rate `2^((Θ − 98)/6)`.
pub fn ageing_factor(theta_w: f64) -> f64 {
    ((theta_w - 98.0) / 6.0).exp2()
}

/// Ageing rate and accumulated loss of life [min] on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AgeingField {
    pub v: FieldGrid,
    pub lol: FieldGrid,
}

/// `LOL(x, LΔt) = Δt · Σ_{n ≤ L} V(x, nΔt)` with `dt_min` in minutes.
pub fn loss_of_life(v: &FieldGrid, dt_min: f64) -> AgeingField {
    let nx = v.nx();
    let mut acc = vec![0.0; nx];
    let mut values = Vec::with_capacity(v.values().len());
    for it in 0..v.nt() {
        for (a, &r) in acc.iter_mut().zip(v.row(it)) {
            *a += r;
        }
        values.extend(acc.iter().map(|a| a * dt_min));
    }
    AgeingField {
        v: v.clone(),
        lol: FieldGrid::new(v.x.clone(), v.t.clone(), values),
    }
}

/// Grid time step in minutes, checked for uniformity.
pub fn uniform_step_minutes(t: &[f64]) -> Result<f64, ThermalError> {
    if t.len() < 2 {
        return Ok(1.0);
    }
    let dt = t[1] - t[0];
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1.0)) {
        return Err(ThermalError::NonUniform);
    }
    Ok(dt / 60.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgeingStats {
    pub v_mean: FieldGrid,
    pub v_std: FieldGrid,
    pub lol_mean: FieldGrid,
    pub lol_std: FieldGrid,
    pub n_samples: usize,
}

struct Welford {
    mean: Vec<f64>,
    m2: Vec<f64>,
    n: usize,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self { mean: vec![0.0; len], m2: vec![0.0; len], n: 0 }
    }

    fn push(&mut self, xs: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(xs) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    fn std(&self) -> Vec<f64> {
        let d = (self.n - 1) as f64;
        self.m2.iter().map(|s| (s / d).max(0.0).sqrt()).collect()
    }
}

const BATCH: usize = 16;

/// Monte-Carlo push of `N(mean, var)` temperature fields through the
/// winding, ageing and loss-of-life maps. Sample `k` draws from stream `k`
/// of the seeded generator; statistics use the unbiased sample std.
pub fn propagate_ageing(
    mean: &FieldGrid,
    total_var: &FieldGrid,
    rise: &RiseSeries,
    n_samples: usize,
    seed: u64,
) -> Result<AgeingStats, ThermalError> {
    if n_samples < 2 {
        return Err(ThermalError::Samples(n_samples));
    }
    if mean.x != total_var.x || mean.t != total_var.t {
        return Err(ThermalError::Shape);
    }
    let dt_min = uniform_step_minutes(&mean.t)?;
    let base = winding_field(mean, rise)?;
    let std: Vec<f64> = total_var.values().iter().map(|v| v.max(0.0).sqrt()).collect();
    let len = base.values().len();
    let nx = base.nx();

    let draw = |k: usize| -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let v: Vec<f64> = base
            .values()
            .iter()
            .zip(&std)
            .map(|(&m, &s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                ageing_factor(m + s * z)
            })
            .collect();
        let mut lol = Vec::with_capacity(len);
        let mut acc = vec![0.0; nx];
        for row in v.chunks(nx) {
            for (a, &r) in acc.iter_mut().zip(row) {
                *a += r;
            }
            lol.extend(acc.iter().map(|a| a * dt_min));
        }
        (v, lol)
    };

    let mut wv = Welford::new(len);
    let mut wl = Welford::new(len);
    for start in (0..n_samples).step_by(BATCH) {
        let end = (start + BATCH).min(n_samples);
        let batch: Vec<_> = (start..end).into_par_iter().map(draw).collect();
        for (v, lol) in &batch {
            wv.push(v);
            wl.push(lol);
        }
    }
    let grid = |values: Vec<f64>| FieldGrid::new(base.x.clone(), base.t.clone(), values);
    Ok(AgeingStats {
        v_std: grid(wv.std()),
        lol_std: grid(wl.std()),
        v_mean: grid(wv.mean),
        lol_mean: grid(wl.mean),
        n_samples,
    })
}
