//! Crank–Nicolson finite-difference solution of the oil diffusion problem,
//! used as ground truth for training targets and metrics.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::physics::{PhysicsError, ThermalPdeSpec};

#[derive(Debug, Error)]
pub enum RefSolverError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("singular tridiagonal system at row {0}")]
    Singular(usize),
    #[error("point ({x}, {t}) lies outside the grid")]
    OutsideGrid { x: f64, t: f64 },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("field csv: {0}")]
    Csv(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Total node count on [0, H], boundaries included.
    pub nx: usize,
    /// Time step [s]. The last step is shortened to land on the series end.
    pub dt: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nx: 201, dt: 60.0 }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<(), RefSolverError> {
        if self.nx < 3 {
            return Err(RefSolverError::Grid(format!("nx must be at least 3, got {}", self.nx)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(RefSolverError::Grid(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Time nodes from `t0` to `t1` with a possibly shorter final step.
    pub fn time_nodes(&self, t0: f64, t1: f64) -> Vec<f64> {
        let span = t1 - t0;
        let steps = ((span / self.dt) - 1e-9).ceil().max(1.0) as usize;
        let mut t: Vec<f64> = (0..steps).map(|i| t0 + i as f64 * self.dt).collect();
        t.push(t1);
        t
    }
}

/// Values on a rectangular (t, x) grid, one row per time node.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    values: Vec<f64>,
}

impl FieldGrid {
    pub fn new(x: Vec<f64>, t: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), x.len() * t.len(), "field size mismatch");
        Self { x, t, values }
    }

    pub fn from_fn(x: Vec<f64>, t: Vec<f64>, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = t.iter().flat_map(|&tt| x.iter().map(move |&xx| (xx, tt))).map(|(xx, tt)| f(xx, tt)).collect();
        Self { x, t, values }
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nt(&self) -> usize {
        self.t.len()
    }

    pub fn get(&self, it: usize, ix: usize) -> f64 {
        self.values[it * self.x.len() + ix]
    }

    pub fn row(&self, it: usize) -> &[f64] {
        let n = self.x.len();
        &self.values[it * n..(it + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            x: self.x.clone(),
            t: self.t.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Every (x, t, value) in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.t
            .iter()
            .enumerate()
            .flat_map(move |(it, &t)| self.x.iter().enumerate().map(move |(ix, &x)| (x, t, self.get(it, ix))))
    }

    fn bracket(nodes: &[f64], v: f64) -> Option<(usize, f64)> {
        let (first, last) = (nodes[0], *nodes.last()?);
        if !(v >= first && v <= last) {
            return None;
        }
        if nodes.len() == 1 {
            return Some((0, 0.0));
        }
        let i = nodes.partition_point(|&n| n <= v).clamp(1, nodes.len() - 1) - 1;
        Some((i, (v - nodes[i]) / (nodes[i + 1] - nodes[i])))
    }

    /// Bilinear interpolation inside the grid hull.
    pub fn interpolate(&self, x: f64, t: f64) -> Result<f64, RefSolverError> {
        let outside = || RefSolverError::OutsideGrid { x, t };
        let (ix, wx) = Self::bracket(&self.x, x).ok_or_else(outside)?;
        let (it, wt) = Self::bracket(&self.t, t).ok_or_else(outside)?;
        let ix1 = (ix + 1).min(self.nx() - 1);
        let it1 = (it + 1).min(self.nt() - 1);
        let lo = self.get(it, ix) * (1.0 - wx) + self.get(it, ix1) * wx;
        let hi = self.get(it1, ix) * (1.0 - wx) + self.get(it1, ix1) * wx;
        Ok(if wt == 0.0 { lo } else { lo * (1.0 - wt) + hi * wt })
    }

    /// Header row `t_s,<x0>,<x1>,...`, then one row per time node.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s");
        for x in &self.x {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
        for (it, t) in self.t.iter().enumerate() {
            let _ = write!(s, "{t}");
            for v in self.row(it) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, RefSolverError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| RefSolverError::Csv("empty file".into()))?;
        let mut cells = header.split(',');
        if cells.next().map(str::trim) != Some("t_s") {
            return Err(RefSolverError::Csv("header must start with t_s".into()));
        }
        let parse = |c: &str, line: usize| {
            c.trim()
                .parse::<f64>()
                .map_err(|e| RefSolverError::Csv(format!("line {line}: {e}")))
        };
        let x = cells.map(|c| parse(c, 1)).collect::<Result<Vec<_>, _>>()?;
        let mut t = Vec::new();
        let mut values = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut cells = line.split(',');
            t.push(parse(cells.next().unwrap_or(""), n + 2)?);
            let before = values.len();
            for c in cells {
                values.push(parse(c, n + 2)?);
            }
            if values.len() - before != x.len() {
                return Err(RefSolverError::Csv(format!("line {}: expected {} values", n + 2, x.len())));
            }
        }
        Ok(Self { x, t, values })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), RefSolverError> {
        std::fs::write(path, self.to_csv()).map_err(|source| RefSolverError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self, RefSolverError> {
        let text = std::fs::read_to_string(path).map_err(|source| RefSolverError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(&text)
    }
}

/// Solves the tridiagonal system `sub[i]·y[i−1] + diag[i]·y[i] + sup[i]·y[i+1] = rhs[i]`
/// in place (Thomas algorithm).
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64], scratch: &mut [f64]) -> Result<(), RefSolverError> {
    let n = diag.len();
    let mut beta = diag[0];
    if beta.abs() < f64::MIN_POSITIVE {
        return Err(RefSolverError::Singular(0));
    }
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * scratch[i];
        if beta.abs() < f64::MIN_POSITIVE {
            return Err(RefSolverError::Singular(i));
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
    Ok(())
}

/// Crank–Nicolson solve from the problem's initial profile.
pub fn solve(spec: &ThermalPdeSpec, grid: &GridSpec) -> Result<FieldGrid, RefSolverError> {
    solve_with_initial(spec, grid, |x| spec.initial_value(x))
}

/// Crank–Nicolson solve from an explicit initial profile.
///
/// The reaction term −h·Θ is implicit alongside diffusion; the explicit
/// source `P₀ + K²μ + h·Θ_A` is frozen at the half step. Boundary columns
/// are pinned to the series at every time row.
pub fn solve_with_initial(
    spec: &ThermalPdeSpec,
    grid: &GridSpec,
    initial: impl Fn(f64) -> f64,
) -> Result<FieldGrid, RefSolverError> {
    spec.validate()?;
    grid.validate()?;
    let nx = grid.nx;
    let dx = spec.height / (nx - 1) as f64;
    let x: Vec<f64> = (0..nx).map(|i| if i == nx - 1 { spec.height } else { i as f64 * dx }).collect();
    let t = grid.time_nodes(spec.t_start(), spec.t_end());
    let alpha = spec.alpha();
    let beta = spec.h / spec.rho_cp;

    let mut values = Vec::with_capacity(nx * t.len());
    let mut cur: Vec<f64> = x.iter().map(|&xx| initial(xx)).collect();
    let (b0, b1) = spec.boundary_values(t[0])?;
    cur[0] = b0;
    cur[nx - 1] = b1;
    values.extend_from_slice(&cur);

    let m = nx - 2;
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    for step in 1..t.len() {
        let (t_prev, t_next) = (t[step - 1], t[step]);
        let dt = t_next - t_prev;
        let r = alpha * dt / (2.0 * dx * dx);
        let react = 0.5 * beta * dt;
        let mid = 0.5 * (t_prev + t_next);
        let s = spec.series.at(mid)?;
        let source = dt * (spec.p0 + s.load * s.load * spec.mu_rated + spec.h * s.ambient) / spec.rho_cp;
        let (b0, b1) = spec.boundary_values(t_next)?;
        for i in 0..m {
            let j = i + 1;
            sub[i] = -r;
            sup[i] = -r;
            diag[i] = 1.0 + 2.0 * r + react;
            rhs[i] = (1.0 - 2.0 * r - react) * cur[j] + r * (cur[j - 1] + cur[j + 1]) + source;
        }
        rhs[0] += r * b0;
        rhs[m - 1] += r * b1;
        thomas(&sub, &diag, &sup, &mut rhs, &mut scratch)?;
        cur[0] = b0;
        cur[nx - 1] = b1;
        cur[1..nx - 1].copy_from_slice(&rhs);
        values.extend_from_slice(&cur);
    }
    Ok(FieldGrid { x, t, values })
}
