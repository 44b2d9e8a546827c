use super::{grad, Objective};

/// Absolute floor under the relative-error denominator, so coordinates
/// whose true partial is exactly zero do not divide by zero.
const ABS_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CoordinateCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    /// One-sided differences disagree at O(1) rather than O(step).
    pub non_smooth: bool,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub loss: f64,
    pub step: f64,
    pub tolerance: f64,
    pub coordinates: Vec<CoordinateCheck>,
}

impl GradientReport {
    pub fn max_rel_err(&self) -> f64 {
        self.coordinates
            .iter()
            .filter(|c| !c.non_smooth)
            .map(|c| c.rel_err)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CoordinateCheck> {
        self.coordinates.iter().filter(|c| !c.pass)
    }

    pub fn non_smooth(&self) -> impl Iterator<Item = &CoordinateCheck> {
        self.coordinates.iter().filter(|c| c.non_smooth)
    }

    pub fn all_pass(&self) -> bool {
        self.coordinates.iter().all(|c| c.pass)
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ABS_FLOOR)
}

/// Compares tape gradients with central differences coordinate by coordinate.
///
/// Kinks are detected by comparing the gap between forward and backward
/// differences at `step` and `step/2`: a smooth function halves the gap, a
/// kink keeps it. Flagged coordinates are reported but never pass.
pub fn check_gradient<O: Objective>(
    objective: &O,
    params: &[f64],
    step: f64,
    tolerance: f64,
) -> GradientReport {
    assert!(step > 0.0, "finite-difference step must be positive");
    let f = |p: &[f64]| objective.evaluate::<f64>(p);
    let f0 = f(params);
    let analytic = match grad(objective, params) {
        Ok((_, g)) => g,
        Err(_) => vec![f64::NAN; params.len()],
    };
    let mut work = params.to_vec();
    let shifted = |i: usize, delta: f64, work: &mut Vec<f64>| {
        work[i] = params[i] + delta;
        let v = f(work);
        work[i] = params[i];
        v
    };
    let coordinates = (0..params.len())
        .map(|i| {
            let plus = shifted(i, step, &mut work);
            let minus = shifted(i, -step, &mut work);
            let plus_half = shifted(i, 0.5 * step, &mut work);
            let minus_half = shifted(i, -0.5 * step, &mut work);
            let numeric = (plus - minus) / (2.0 * step);
            let gap = ((plus - f0) - (f0 - minus)).abs() / step;
            let gap_half = ((plus_half - f0) - (f0 - minus_half)).abs() / (0.5 * step);
            let non_smooth = gap > tolerance && gap_half > 0.75 * gap;
            let rel_err = relative_error(analytic[i], numeric);
            CoordinateCheck {
                index: i,
                analytic: analytic[i],
                numeric,
                rel_err,
                non_smooth,
                pass: !non_smooth && rel_err < tolerance,
            }
        })
        .collect();
    GradientReport {
        loss: f0,
        step,
        tolerance,
        coordinates,
    }
}
