//! Set-size sensitivity sweep: every (N0, Nr, Nb) cell is trained and scored
//! against the reference field several times, then aggregated per cell.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use bpinn::physics::SampleCounts;
use bpinn::refsolver::{solve, FieldGrid};
use bpinn::train::{fit, StopReason};

use crate::commands::{evaluate_model, pde_spec, write, write_training};
use crate::config::RunConfig;
use crate::error::CliError;

/// One cell of the grid after scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub index: usize,
    pub counts: SampleCounts,
}

/// Cells in nested order: N0 outermost, then Nr, then Nb. Each size is
/// divided by `scale`, rounding up.
pub fn cells(n0: &[usize], nr: &[usize], nb: &[usize], scale: usize) -> Vec<Cell> {
    let div = |n: usize| n.div_ceil(scale).max(1);
    let mut out = Vec::with_capacity(n0.len() * nr.len() * nb.len());
    for &a in n0 {
        for &r in nr {
            for &b in nb {
                out.push(Cell { index: out.len(), counts: SampleCounts { n0: div(a), nb: div(b), nr: div(r) } });
            }
        }
    }
    out
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Training seed of repetition `rep` in cell `cell`.
pub fn run_seed(base: u64, cell: usize, rep: usize) -> u64 {
    splitmix(splitmix(base ^ splitmix(cell as u64)).wrapping_add(rep as u64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunScores {
    pub crps: Option<f64>,
    pub rmse: f64,
    pub nll: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub cell: Cell,
    pub rep: usize,
    pub seed: u64,
    pub result: Result<RunScores, String>,
}

/// Mean and sample standard deviation; `None` when empty, std `None`
/// with fewer than two values.
pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn cell_dir(root: &std::path::Path, cell: &Cell) -> PathBuf {
    let c = cell.counts;
    root.join("cells").join(format!("cell_{:02}_n0_{}_nr_{}_nb_{}", cell.index, c.n0, c.nr, c.nb))
}

fn run_one(cfg: &RunConfig, truth: &FieldGrid, spec: &bpinn::physics::ThermalPdeSpec, cell: Cell, rep: usize, seed: u64) -> Result<RunScores, String> {
    let dir = cell_dir(&cfg.output, &cell).join(format!("rep_{rep}"));
    fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let (model, log) = fit(&cfg.train.plan(), spec, cell.counts, seed).map_err(|e| e.to_string())?;
    write_training(&dir, &model, &log, seed).map_err(|e| e.to_string())?;
    if log.stop == StopReason::Divergence {
        return Err(format!("diverged after {} epochs", log.rows.len()));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.seed = seed;
    let report = evaluate_model(&run_cfg, &model, truth).map_err(|e| e.to_string())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write(&dir.join("eval.json"), &json).map_err(|e| e.to_string())?;
    Ok(RunScores { crps: report.crps_mean, rmse: report.rmse, nll: report.nll_mean })
}

fn cell_stats(out: &[RunOutcome], f: impl Fn(&RunScores) -> Option<f64>) -> (Option<f64>, Option<f64>) {
    let xs: Vec<f64> = out.iter().filter_map(|o| o.result.as_ref().ok()).filter_map(&f).collect();
    mean_std(&xs)
}

fn cellf(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Aggregated table, one row per cell.
pub fn aggregate(cells: &[Cell], outcomes: &[RunOutcome]) -> String {
    let mut s = String::from("cell,n0,nr,nb,runs,failures,crps_mean,crps_std,rmse_mean,rmse_std,nll_mean,nll_std\n");
    for cell in cells {
        let runs: Vec<RunOutcome> = outcomes.iter().filter(|o| o.cell.index == cell.index).cloned().collect();
        let failures = runs.iter().filter(|o| o.result.is_err()).count();
        let (cm, cs) = cell_stats(&runs, |r| r.crps);
        let (rm, rs) = cell_stats(&runs, |r| Some(r.rmse));
        let (nm, ns) = cell_stats(&runs, |r| r.nll);
        let c = cell.counts;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            cell.index,
            c.n0,
            c.nr,
            c.nb,
            runs.len(),
            failures,
            cellf(cm),
            cellf(cs),
            cellf(rm),
            cellf(rs),
            cellf(nm),
            cellf(ns)
        );
    }
    s
}

fn runs_csv(outcomes: &[RunOutcome]) -> String {
    let mut s = String::from("cell,rep,seed,n0,nr,nb,status,crps,rmse,nll\n");
    for o in outcomes {
        let c = o.cell.counts;
        let (status, crps, rmse, nll) = match &o.result {
            Ok(r) => ("ok".to_string(), cellf(r.crps), r.rmse.to_string(), cellf(r.nll)),
            Err(e) => (format!("\"failed: {}\"", e.replace('"', "'")), String::new(), String::new(), String::new()),
        };
        let _ = writeln!(s, "{},{},{},{},{},{},{status},{crps},{rmse},{nll}", o.cell.index, o.rep, o.seed, c.n0, c.nr, c.nb);
    }
    s
}

/// Mean CRPS per Nr level over all cells and repetitions.
pub fn nr_trend(outcomes: &[RunOutcome]) -> Vec<(usize, Option<f64>)> {
    let mut levels: Vec<usize> = outcomes.iter().map(|o| o.cell.counts.nr).collect();
    levels.sort_unstable();
    levels.dedup();
    levels
        .into_iter()
        .map(|nr| {
            let xs: Vec<f64> = outcomes
                .iter()
                .filter(|o| o.cell.counts.nr == nr)
                .filter_map(|o| o.result.as_ref().ok().and_then(|r| r.crps))
                .collect();
            (nr, mean_std(&xs).0)
        })
        .collect()
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let sw = &cfg.sweep;
    let spec = pde_spec(cfg)?;
    let truth = solve(&spec, &cfg.refsolver.grid())?;
    let grid = cells(&sw.n0, &sw.nr, &sw.nb, sw.scale);
    let capacity = 2 * spec.series.len();
    if let Some(c) = grid.iter().find(|c| c.counts.nb > capacity) {
        return Err(CliError::invalid(format!("Nb = {} exceeds the {capacity} boundary samples of the series", c.counts.nb)));
    }
    let tasks: Vec<(Cell, usize)> = grid.iter().flat_map(|&c| (0..sw.reps).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sw.jobs)
        .build()
        .map_err(|e| CliError::invalid(format!("thread pool: {e}")))?;
    let outcomes: Vec<RunOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(cell, rep)| {
                let seed = run_seed(cfg.seed, cell.index, rep);
                let result = run_one(cfg, &truth, &spec, cell, rep, seed);
                match &result {
                    Ok(r) => log::info!("cell {} rep {rep}: rmse {:.4} crps {}", cell.index, r.rmse, cellf(r.crps)),
                    Err(e) => log::warn!("cell {} rep {rep} failed: {e}", cell.index),
                }
                RunOutcome { cell, rep, seed, result }
            })
            .collect()
    });
    write(&cfg.output.join("sweep.csv"), &aggregate(&grid, &outcomes))?;
    write(&cfg.output.join("sweep_runs.csv"), &runs_csv(&outcomes))?;
    let mut trend = String::from("nr,crps_mean\n");
    for (nr, m) in nr_trend(&outcomes) {
        let _ = writeln!(trend, "{nr},{}", cellf(m));
    }
    write(&cfg.output.join("sweep_nr_trend.csv"), &trend)?;
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    log::info!("{} cells x {} reps done, {failed} failed", grid.len(), sw.reps);
    Ok(())
}
