use serde::{Deserialize, Serialize};

use super::ThermalPdeSpec;
use crate::net::SpaceTimePoint;

/// Affine maps between physical units and the unit square the network sees.
///
/// `x̃ = x / x_scale`, `t̃ = (t − t_offset) / t_scale`,
/// `ũ = (Θ − temp_shift) / temp_scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_scale: f64,
    pub t_offset: f64,
    pub t_scale: f64,
    pub temp_shift: f64,
    pub temp_scale: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        x_scale: 1.0,
        t_offset: 0.0,
        t_scale: 1.0,
        temp_shift: 0.0,
        temp_scale: 1.0,
    };

    /// Scales from the geometry, the series span, and the temperature range
    /// of both boundary channels together with the initial profile.
    pub fn from_spec(spec: &ThermalPdeSpec) -> Self {
        let s = &spec.series;
        let ic = (0..=100).map(|i| spec.initial_value(spec.height * i as f64 / 100.0));
        let (lo, hi) = s
            .ambient
            .iter()
            .chain(&s.topoil)
            .copied()
            .chain(ic)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        Self {
            x_scale: spec.height,
            t_offset: spec.t_start(),
            t_scale: spec.t_end() - spec.t_start(),
            temp_shift: lo,
            temp_scale: if range > 0.0 { range } else { 1.0 },
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x_scale, self.t_scale, self.temp_scale]
            .iter()
            .all(|v| *v != 0.0 && v.is_finite())
            && self.t_offset.is_finite()
            && self.temp_shift.is_finite()
    }

    pub fn point(&self, x: f64, t: f64) -> SpaceTimePoint {
        SpaceTimePoint::new(x / self.x_scale, (t - self.t_offset) / self.t_scale)
    }

    pub fn physical(&self, p: SpaceTimePoint) -> (f64, f64) {
        (p.x * self.x_scale, p.t * self.t_scale + self.t_offset)
    }

    pub fn normalize_temp(&self, theta: f64) -> f64 {
        (theta - self.temp_shift) / self.temp_scale
    }

    pub fn denormalize_temp(&self, u: f64) -> f64 {
        u * self.temp_scale + self.temp_shift
    }

    /// Variance in normalized units → K².
    pub fn denormalize_var(&self, v: f64) -> f64 {
        v * self.temp_scale * self.temp_scale
    }
}
