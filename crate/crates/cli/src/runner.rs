use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use decision_boost::boosting::BoostConfig;
use decision_boost::experiments::{self, motivating, Method, TrialResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::plot::emit_plots;
use crate::results::{write_csv, Row, FAILED};

pub const MANIFEST_FORMAT: &str = "decision-boost-run";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<Row>,
    pub files: Vec<PathBuf>,
    pub failures: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'a str,
    version: u32,
    tool_version: &'a str,
    config: &'a RunConfig,
    files: Vec<String>,
    method_failures: usize,
    errors: Vec<String>,
}

fn trial_rows(cfg: &RunConfig, depth: usize, t: &TrialResult) -> Vec<Row> {
    let mut rows = Vec::new();
    for m in &t.methods {
        for (split, excess) in [("train", m.train_excess), ("test", m.test_excess)] {
            rows.push(Row {
                problem: cfg.problem.as_str().into(),
                method: m.method.as_str().into(),
                depth,
                tau: cfg.tau,
                trial: t.trial,
                split: split.into(),
                excess_cost: if m.error.is_some() { None } else { excess },
                n_trees: m.n_trees,
                stop_reason: match (&m.error, &m.stop_reason) {
                    (Some(_), _) => FAILED.into(),
                    (None, Some(r)) => r.clone(),
                    (None, None) => String::new(),
                },
                runtime_s: m.runtime_s,
            });
        }
    }
    rows
}

/// Shortest round-tripping text, with negative zero folded into zero.
fn num(x: f64) -> String {
    format!("{:e}", x + 0.0)
}

fn map_trials<T: Send>(cfg: &RunConfig, f: impl Fn(usize) -> T + Sync + Send) -> anyhow::Result<Vec<T>> {
    Ok(match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building worker pool")?
            .install(|| (0..cfg.trials).into_par_iter().map(&f).collect()),
        None => (0..cfg.trials).map(f).collect(),
    })
}

fn run_experiments(cfg: &RunConfig, errors: &mut Vec<String>) -> anyhow::Result<(Vec<Row>, usize)> {
    let mut rows = Vec::new();
    let mut failures = 0;
    for &depth in &cfg.depths {
        let spec = cfg.spec(depth).expect("experiment scenario");
        let results = map_trials(cfg, |trial| experiments::run_trial(&spec, trial))?;
        for (trial, res) in results.into_iter().enumerate() {
            match res {
                Ok(t) => {
                    for m in &t.methods {
                        if let Some(e) = &m.error {
                            errors.push(format!("depth {depth} trial {trial} {}: {e}", m.method.as_str()));
                        }
                    }
                    failures += t.failures();
                    rows.extend(trial_rows(cfg, depth, &t));
                }
                Err(e) => {
                    // The instance itself could not be built; every method is lost.
                    errors.push(format!("depth {depth} trial {trial}: {e}"));
                    failures += spec.methods.len();
                    for &m in &spec.methods {
                        for split in ["train", "test"] {
                            rows.push(Row {
                                problem: cfg.problem.as_str().into(),
                                method: m.as_str().into(),
                                depth,
                                tau: cfg.tau,
                                trial,
                                split: split.into(),
                                excess_cost: None,
                                n_trees: 0,
                                stop_reason: FAILED.into(),
                                runtime_s: 0.0,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok((rows, failures))
}

fn run_motivating(cfg: &RunConfig, out: &Path, files: &mut Vec<PathBuf>, errors: &mut Vec<String>) -> anyhow::Result<(Vec<Row>, usize)> {
    let mut rows = Vec::new();
    let mut failures = 0;
    let mut trace = csv::Writer::from_writer(Vec::new());
    trace.write_record(["depth", "trial", "method", "iteration", "loss", "excess_cost"])?;
    let mut curve = csv::Writer::from_writer(Vec::new());
    curve.write_record([
        "depth", "trial", "x", "true_c1", "true_c2", "mse_boost_c1", "mse_boost_c2", "dboost_c1", "dboost_c2",
        "mse_boost_z1", "mse_boost_z2", "dboost_z1", "dboost_z2",
    ])?;
    for &depth in &cfg.depths {
        let boost = BoostConfig {
            max_depth: depth,
            ..cfg.boost
        };
        let reports = map_trials(cfg, |trial| {
            let start = Instant::now();
            let seed = cfg.seed.wrapping_add(trial as u64);
            let r = motivating::run(cfg.m_train, cfg.noise_std, seed, &boost, cfg.curve_points);
            (r, start.elapsed().as_secs_f64())
        })?;
        for (trial, (report, secs)) in reports.into_iter().enumerate() {
            let report = match report {
                Ok(r) => r,
                Err(e) => {
                    errors.push(format!("depth {depth} trial {trial}: {e}"));
                    for &m in &cfg.methods {
                        failures += 1;
                        rows.push(Row {
                            problem: cfg.problem.as_str().into(),
                            method: m.as_str().into(),
                            depth,
                            tau: cfg.tau,
                            trial,
                            split: "train".into(),
                            excess_cost: None,
                            n_trees: 0,
                            stop_reason: FAILED.into(),
                            runtime_s: secs,
                        });
                    }
                    continue;
                }
            };
            for &m in &cfg.methods {
                let (ens, fin) = match m {
                    Method::Dboost => (&report.dboost, &report.dboost_final),
                    _ => (&report.mse_boost, &report.mse_final),
                };
                rows.push(Row {
                    problem: cfg.problem.as_str().into(),
                    method: m.as_str().into(),
                    depth,
                    tau: cfg.tau,
                    trial,
                    split: "train".into(),
                    excess_cost: Some(fin.ratio),
                    n_trees: ens.n_stages(),
                    stop_reason: ens.stop_reason.as_str().into(),
                    runtime_s: secs,
                });
            }
            for p in report.trace.iter().filter(|p| cfg.methods.contains(&p.method)) {
                trace.write_record([
                    depth.to_string(),
                    trial.to_string(),
                    p.method.as_str().to_string(),
                    p.iteration.to_string(),
                    num(p.loss),
                    num(p.excess_cost),
                ])?;
            }
            for p in &report.curve {
                let mut rec = vec![depth.to_string(), trial.to_string(), num(p.x)];
                for v in [&p.true_cost, &p.mse_boost, &p.dboost, &p.mse_boost_z, &p.dboost_z] {
                    rec.extend(v.iter().map(|&x| num(x)));
                }
                curve.write_record(rec)?;
            }
        }
    }
    for (name, w) in [("loss_trace.csv", trace), ("prediction_curve.csv", curve)] {
        let path = out.join(name);
        std::fs::write(&path, w.into_inner()?).with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    Ok((rows, failures))
}

/// Runs every trial, then writes all outputs from this thread.
pub fn run(cfg: &RunConfig) -> anyhow::Result<RunOutcome> {
    cfg.validate()?;
    let out = &cfg.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
    let mut files = Vec::new();
    let mut errors = Vec::new();
    let (rows, failures) = match cfg.problem.kind() {
        Some(_) => run_experiments(cfg, &mut errors)?,
        None => run_motivating(cfg, out, &mut files, &mut errors)?,
    };
    let csv_path = out.join("results.csv");
    write_csv(&csv_path, &rows)?;
    files.insert(0, csv_path);
    if cfg.plot {
        files.extend(emit_plots(&rows, out)?);
    }
    let manifest_path = out.join("manifest.json");
    let names = files
        .iter()
        .chain(std::iter::once(&manifest_path))
        .map(|p| p.file_name().expect("file").to_string_lossy().into_owned())
        .collect();
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        files: names,
        method_failures: failures,
        errors,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&manifest_path, text + "\n").with_context(|| format!("writing {}", manifest_path.display()))?;
    files.push(manifest_path);
    Ok(RunOutcome { rows, files, failures })
}
