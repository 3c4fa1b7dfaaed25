//! Experiment orchestration: seed fans, metric CSVs, manifests, sweeps and
//! grid exports.
//!
//! Output layout for one experiment, under the config's `output_dir`:
//!
//! ```text
//! manifest.txt                        version, seed outcomes, config snapshot
//! {algorithm}_{metric}_seed{S}.csv    step,value
//! {algorithm}_{metric}.csv            step,mean,std over the seeds that ran
//! ```

mod csv;
mod export;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

pub use csv::{aggregate, parse_curve, write_aggregate, write_curve, Aggregate};
pub use export::{export_heatmap, export_visitation, grid_csv, oracle_values};

use crate::config::{parse_kv, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::{Curve, RunMetrics};
use crate::options::run_controller;

/// Version string recorded in manifests.
pub fn version() -> String {
    format!("{}-{}", env!("CARGO_PKG_VERSION"), option_env!("EIGENOPT_GIT_DESCRIBE").unwrap_or("unknown"))
}

/// Run every seed of `cfg` on up to `workers` threads. Results come back in
/// seed-list order. A seed that errors or panics yields `Err` without
/// stopping the others.
pub fn run_seeds(cfg: &RunConfig, workers: usize) -> Vec<(u64, Result<RunMetrics>)> {
    let seeds = &cfg.seeds;
    let workers = workers.clamp(1, seeds.len().max(1));
    let mut slots: Vec<Option<Result<RunMetrics>>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..seeds.len()).step_by(workers).map(|i| (i, run_one(cfg, seeds[i]))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("seed worker catches its own panics") {
                slots[i] = Some(r);
            }
        }
    });
    seeds.iter().copied().zip(slots.into_iter().map(|s| s.expect("every seed assigned"))).collect()
}

fn run_one(cfg: &RunConfig, seed: u64) -> Result<RunMetrics> {
    match catch_unwind(AssertUnwindSafe(|| run_controller(cfg, seed))) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(Error::Internal(format!("seed {seed} panicked: {msg}")))
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Everything one experiment produced.
#[derive(Debug)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub runs: Vec<RunMetrics>,
    pub failures: Vec<(u64, String)>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn all_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// The curves written for each run, by metric name.
fn curves(m: &RunMetrics) -> Vec<(&'static str, &Curve)> {
    let mut out = vec![("coverage", &m.coverage), ("return", &m.returns)];
    if !m.repr_loss.is_empty() {
        out.push(("repr_loss", &m.repr_loss));
    }
    if !m.td_loss.is_empty() {
        out.push(("td_loss", &m.td_loss));
    }
    out
}

/// Run all seeds and write per-seed CSVs, aggregates and the manifest into
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    run_experiment_in(cfg, Path::new(&cfg.output_dir), default_workers())
}

pub fn run_experiment_in(cfg: &RunConfig, dir: &Path, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let algo = cfg.algorithm.name();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in run_seeds(cfg, workers) {
        match r {
            Ok(m) => runs.push(m),
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    let mut files = Vec::new();
    for m in &runs {
        for (metric, curve) in curves(m) {
            let path = dir.join(format!("{algo}_{metric}_seed{}.csv", m.seed));
            write_curve(&path, curve)?;
            files.push(path);
        }
    }
    if let Some(first) = runs.first() {
        for (metric, _) in curves(first) {
            let per_seed: Vec<&Curve> =
                runs.iter().filter_map(|m| curves(m).into_iter().find(|c| c.0 == metric).map(|c| c.1)).collect();
            let path = dir.join(format!("{algo}_{metric}.csv"));
            write_aggregate(&path, &aggregate(&per_seed))?;
            files.push(path);
        }
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest(cfg, &runs, &failures))?;
    files.push(path);
    Ok(ExperimentReport { output_dir: dir.to_path_buf(), runs, failures, files })
}

fn manifest(cfg: &RunConfig, runs: &[RunMetrics], failures: &[(u64, String)]) -> String {
    let seeds = |xs: Vec<u64>| xs.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
    let mut s = format!("# eigenopt {}\n", version());
    s += &format!("# seeds_ok = {}\n", seeds(runs.iter().map(|m| m.seed).collect()));
    s += &format!("# seeds_failed = {}\n", seeds(failures.iter().map(|f| f.0).collect()));
    for (seed, msg) in failures {
        s += &format!("# failure seed {seed}: {}\n", msg.replace('\n', " "));
    }
    s + &cfg.to_text()
}

/// A sweep grid: each line is `key = v1 | v2 | ...`.
pub fn parse_grid(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let grid: Vec<(String, Vec<String>)> =
        parse_kv(text)?.into_iter().map(|(k, v)| (k, v.split('|').map(|x| x.trim().to_string()).collect())).collect();
    if let Some((k, _)) = grid.iter().find(|(_, vs)| vs.iter().any(String::is_empty)) {
        return Err(Error::config(format!("sweep key '{k}' has an empty alternative")));
    }
    Ok(grid)
}

/// Every combination of grid values, as override lists, in lexicographic
/// key order with the last key varying fastest.
pub fn grid_points(grid: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for (k, vs) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                vs.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((k.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

/// Run `base` once per grid point. Each point writes into a subdirectory of
/// the base output directory named after its overrides.
pub fn sweep(
    config_path: &Path,
    overrides: &[(String, String)],
    grid: &[(String, Vec<String>)],
) -> Result<Vec<ExperimentReport>> {
    let base = RunConfig::load(config_path, overrides)?;
    let points = grid_points(grid);
    // validate every point before running any of them
    let cfgs = points
        .iter()
        .map(|p| {
            let mut all = overrides.to_vec();
            all.extend(p.iter().cloned());
            RunConfig::load(config_path, &all)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for (p, cfg) in points.iter().zip(&cfgs) {
        let name: Vec<String> = p.iter().map(|(k, v)| format!("{k}={}", v.replace([',', '/', ' '], "_"))).collect();
        let dir = Path::new(&base.output_dir).join(name.join("_"));
        reports.push(run_experiment_in(cfg, &dir, default_workers())?);
    }
    Ok(reports)
}
