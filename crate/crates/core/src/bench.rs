//! Batch-size sweeps: one solver run per `(m, seed)` with per-application
//! shuffling, errors measured against a policy-iteration reference, and CSV
//! output for plotting.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::mdp::{load_mdp, validate_mdp, Mdp, ValueFunction};
use crate::solvers::{
    compute_reference, modified_policy_iteration, value_iteration, ConvergenceTrace, SolverConfig,
    DEFAULT_MAX_ITERATIONS, DEFAULT_MPI_STEPS, DEFAULT_TOLERANCE,
};

pub const TRACE_HEADER: [&str; 4] = ["iteration", "error_sup", "residual_sup", "elapsed_seconds"];
pub const SUMMARY_HEADER: [&str; 9] = [
    "env",
    "algorithm",
    "m",
    "seed",
    "iters_to_tol",
    "seconds_to_tol",
    "converged",
    "n_states",
    "workers",
];
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    ValueIteration,
    ModifiedPolicyIteration,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::ValueIteration => "VI",
            Algorithm::ModifiedPolicyIteration => "MPI",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vi" => Ok(Algorithm::ValueIteration),
            "mpi" => Ok(Algorithm::ModifiedPolicyIteration),
            _ => Err(Error::InvalidConfig(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSource {
    Named(Environment),
    File(PathBuf),
}

impl EnvSource {
    /// Display name and model.
    pub fn resolve(&self) -> Result<(String, Mdp)> {
        match self {
            EnvSource::Named(env) => Ok((env.to_string(), env.build()?)),
            EnvSource::File(path) => {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "mdp".into());
                Ok((name, load_mdp(path)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub environment: EnvSource,
    pub algorithm: Algorithm,
    pub batch_sizes: Vec<usize>,
    /// Policy-evaluation steps per MPI outer iteration.
    pub k_eval: usize,
    pub seeds: Vec<u64>,
    pub tolerance: f64,
    pub workers: usize,
    pub max_iterations: usize,
}

impl SweepSpec {
    pub fn new(environment: EnvSource, algorithm: Algorithm, batch_sizes: Vec<usize>) -> Self {
        Self {
            environment,
            algorithm,
            batch_sizes,
            k_eval: DEFAULT_MPI_STEPS,
            seeds: DEFAULT_SEEDS.to_vec(),
            tolerance: DEFAULT_TOLERANCE,
            workers: 1,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    fn check(&self, n_states: usize) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
        }
        if self.batch_sizes.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep needs at least one batch size".into(),
            ));
        }
        if let Some(m) = self.batch_sizes.iter().find(|&&m| m == 0 || m > n_states) {
            return Err(Error::InvalidConfig(format!(
                "batch size {m} not in [1, {n_states}]"
            )));
        }
        if self.k_eval == 0 {
            return Err(Error::InvalidConfig("K must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub batch_size: usize,
    pub seed: u64,
    pub trace: ConvergenceTrace,
    pub iters_to_tol: Option<usize>,
    pub seconds_to_tol: Option<f64>,
    pub converged: bool,
    pub n_states: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub env: String,
    pub algorithm: Algorithm,
    pub tolerance: f64,
    pub discount: f64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn rows_for(&self, batch_size: usize) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(move |r| r.batch_size == batch_size)
    }

    pub fn iterations(&self, batch_size: usize, seed: u64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.batch_size == batch_size && r.seed == seed)
            .and_then(|r| r.iters_to_tol)
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<BenchReport> {
    let (name, mdp) = spec.environment.resolve()?;
    run_sweep_on(&name, &mdp, None, spec)
}

/// Same as [`run_sweep`] for an already loaded model; `reference` skips the
/// policy-iteration solve when `J*` is known.
pub fn run_sweep_on(
    name: &str,
    mdp: &Mdp,
    reference: Option<&ValueFunction>,
    spec: &SweepSpec,
) -> Result<BenchReport> {
    let report = validate_mdp(mdp);
    if !report.is_empty() {
        return Err(Error::InvalidMdp(report));
    }
    spec.check(mdp.n_states)?;
    let owned;
    let reference = match reference {
        Some(r) => r,
        None => {
            owned = compute_reference(mdp)?;
            &owned
        }
    };
    let mut rows = Vec::with_capacity(spec.batch_sizes.len() * spec.seeds.len());
    for &m in &spec.batch_sizes {
        for &seed in &spec.seeds {
            let config = SolverConfig::new(m)
                .with_shuffle(true)
                .with_seed(seed)
                .with_tolerance(spec.tolerance)
                .with_max_iterations(spec.max_iterations)
                .with_workers(spec.workers);
            let solution = match spec.algorithm {
                Algorithm::ValueIteration => value_iteration(mdp, &config, Some(reference))?,
                Algorithm::ModifiedPolicyIteration => {
                    modified_policy_iteration(mdp, spec.k_eval, &config, Some(reference))?
                }
            };
            rows.push(BenchRow {
                batch_size: m,
                seed,
                iters_to_tol: solution.trace.iterations_to_tolerance(spec.tolerance),
                seconds_to_tol: solution.trace.seconds_to_tolerance(spec.tolerance),
                converged: solution.converged,
                trace: solution.trace,
                n_states: mdp.n_states,
                workers: spec.workers,
            });
        }
    }
    Ok(BenchReport {
        env: name.to_string(),
        algorithm: spec.algorithm,
        tolerance: spec.tolerance,
        discount: mdp.discount,
        rows,
    })
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn trace_file_name(report: &BenchReport, row: &BenchRow) -> String {
    format!(
        "trace_{}_{}_m{}_seed{}.csv",
        report.env,
        report.algorithm.to_string().to_lowercase(),
        row.batch_size,
        row.seed
    )
}

pub fn write_trace_csv(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.iteration.to_string(),
            opt(r.error.map(num)),
            opt(r.residual.map(num)),
            num(r.elapsed_seconds),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv` plus one trace CSV per row into `dir`, creating it if
/// needed. Returns the summary path.
pub fn emit_csv(report: &BenchReport, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    w.write_record(SUMMARY_HEADER)?;
    for row in &report.rows {
        w.write_record([
            report.env.clone(),
            report.algorithm.to_string(),
            row.batch_size.to_string(),
            row.seed.to_string(),
            opt(row.iters_to_tol),
            opt(row.seconds_to_tol.map(num)),
            row.converged.to_string(),
            row.n_states.to_string(),
            row.workers.to_string(),
        ])?;
        write_trace_csv(&row.trace, &dir.join(trace_file_name(report, row)))?;
    }
    w.flush().map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary_path)
}
