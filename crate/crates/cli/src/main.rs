//! `mbdp` command-line tool.
//!
//! Exit codes: 0 success / converged, 1 domain failure (invalid model,
//! non-convergence), 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mbdp::bench::{
    emit_csv, run_sweep, write_trace_csv, Algorithm, EnvSource, SweepSpec, DEFAULT_SEEDS,
};
use mbdp::envs::{Environment, MazeParams, DEFAULT_SLIP_MASS, DEFAULT_WALL_DENSITY};
use mbdp::mdp::{load_mdp, load_value, save_mdp, save_policy, save_value, validate_mdp};
use mbdp::operators::default_workers;
use mbdp::solvers::{
    modified_policy_iteration, value_iteration, SolverConfig, DEFAULT_MAX_ITERATIONS,
    DEFAULT_MPI_STEPS, DEFAULT_TOLERANCE,
};
use mbdp::Error;

#[derive(Parser)]
#[command(
    name = "mbdp",
    version,
    about = "Mini-batch dynamic programming for finite discounted MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvName {
    Frozenlake,
    Taxi,
    Maze,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Vi,
    Mpi,
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Vi => Algorithm::ValueIteration,
            Algo::Mpi => Algorithm::ModifiedPolicyIteration,
        }
    }
}

#[derive(clap::Args)]
struct MazeArgs {
    /// Maze side length N (grid is N×N).
    #[arg(long, default_value_t = 80)]
    side: usize,
    /// Maze layout seed.
    #[arg(long = "maze-seed", default_value_t = 0)]
    maze_seed: u64,
    /// Probability of the intended move.
    #[arg(long = "slip-mass", default_value_t = DEFAULT_SLIP_MASS)]
    slip_mass: f64,
    /// Fraction of cells seeded as walls.
    #[arg(long = "wall-density", default_value_t = DEFAULT_WALL_DENSITY)]
    wall_density: f64,
}

impl MazeArgs {
    fn params(&self) -> MazeParams {
        MazeParams {
            side: self.side,
            seed: self.maze_seed,
            slip_mass: self.slip_mass,
            wall_density: self.wall_density,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a benchmark environment and write it as MDP JSON.
    Gen {
        env: EnvName,
        out: PathBuf,
        #[command(flatten)]
        maze: MazeArgs,
        /// Alias for --maze-seed.
        #[arg(long, conflicts_with = "maze_seed")]
        seed: Option<u64>,
    },
    /// Run value iteration or modified policy iteration on an MDP file.
    Solve {
        mdp: PathBuf,
        #[arg(long, value_enum, default_value = "vi")]
        algo: Algo,
        /// Batch size m (default: number of states).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long = "max-iters", default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        /// Policy-evaluation steps per MPI iteration.
        #[arg(long = "K")]
        k: Option<usize>,
        /// Process states in ascending order instead of reshuffling.
        #[arg(long = "no-shuffle")]
        no_shuffle: bool,
        /// Precomputed J* (value JSON); switches stopping to error-vs-reference.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Batch-size sweep writing summary and trace CSVs.
    Bench {
        /// frozenlake, taxi, maze, or a path to an MDP file.
        #[arg(long)]
        env: String,
        #[arg(long, value_enum, default_value = "vi")]
        algo: Algo,
        /// Comma-separated batch sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<usize>,
        /// Comma-separated shuffle seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long = "max-iters", default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iters: usize,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        maze: MazeArgs,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Check an MDP file and print its validation report.
    Validate { mdp: PathBuf },
}

enum Failure {
    Domain(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidMdp(_) | Error::NonFinite { .. } | Error::Residual { .. } => {
                Failure::Domain(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            env,
            out,
            maze,
            seed,
        } => cmd_gen(env, &out, &maze, seed),
        Command::Solve {
            mdp,
            algo,
            m,
            tol,
            max_iters,
            seed,
            workers,
            k,
            no_shuffle,
            reference,
            out,
        } => {
            if k.is_some() && algo != Algo::Mpi {
                Err(Failure::Usage("--K requires --algo mpi".into()))
            } else {
                let config = SolveArgs {
                    algo,
                    m,
                    tol,
                    max_iters,
                    seed,
                    workers: workers.unwrap_or_else(default_workers),
                    k: k.unwrap_or(DEFAULT_MPI_STEPS),
                    shuffle: !no_shuffle,
                    reference,
                };
                cmd_solve(&mdp, &config, &out)
            }
        }
        Command::Bench {
            env,
            algo,
            m,
            seeds,
            tol,
            max_iters,
            k,
            workers,
            maze,
            out,
        } => {
            if k.is_some() && algo != Algo::Mpi {
                Err(Failure::Usage("--K requires --algo mpi".into()))
            } else {
                let environment = match env.parse::<Environment>() {
                    Ok(Environment::Maze(_)) => EnvSource::Named(Environment::Maze(maze.params())),
                    Ok(named) => EnvSource::Named(named),
                    Err(_) => EnvSource::File(PathBuf::from(env)),
                };
                let mut spec = SweepSpec::new(environment, algo.into(), m);
                spec.seeds = seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
                spec.tolerance = tol;
                spec.max_iterations = max_iters;
                spec.k_eval = k.unwrap_or(DEFAULT_MPI_STEPS);
                spec.workers = workers.unwrap_or_else(default_workers);
                cmd_bench(&spec, &out)
            }
        }
        Command::Validate { mdp } => cmd_validate(&mdp),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn cmd_gen(
    env: EnvName,
    out: &Path,
    maze: &MazeArgs,
    seed: Option<u64>,
) -> Result<ExitCode, Failure> {
    let env = match env {
        EnvName::Frozenlake => Environment::FrozenLake,
        EnvName::Taxi => Environment::Taxi,
        EnvName::Maze => {
            let mut params = maze.params();
            if let Some(s) = seed {
                params.seed = s;
            }
            Environment::Maze(params)
        }
    };
    let mdp = env.build()?;
    save_mdp(&mdp, out)?;
    println!(
        "{env}: {} states, {} actions per state (max) -> {}",
        mdp.n_states,
        mdp.max_actions(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

struct SolveArgs {
    algo: Algo,
    m: Option<usize>,
    tol: f64,
    max_iters: usize,
    seed: u64,
    workers: usize,
    k: usize,
    shuffle: bool,
    reference: Option<PathBuf>,
}

fn cmd_solve(path: &Path, args: &SolveArgs, out: &Path) -> Result<ExitCode, Failure> {
    let mdp = load_mdp(path)?;
    let report = validate_mdp(&mdp);
    if !report.is_empty() {
        return Err(Failure::Domain(format!(
            "invalid MDP {}:\n{report}",
            path.display()
        )));
    }
    let reference = args.reference.as_ref().map(load_value).transpose()?;
    let config = SolverConfig::new(args.m.unwrap_or(mdp.n_states))
        .with_shuffle(args.shuffle)
        .with_seed(args.seed)
        .with_tolerance(args.tol)
        .with_max_iterations(args.max_iters)
        .with_workers(args.workers);
    let solution = match args.algo {
        Algo::Vi => value_iteration(&mdp, &config, reference.as_ref())?,
        Algo::Mpi => modified_policy_iteration(&mdp, args.k, &config, reference.as_ref())?,
    };
    fs::create_dir_all(out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    save_value(&solution.value, out.join("value.json"))?;
    save_policy(&solution.policy, out.join("policy.json"))?;
    write_trace_csv(&solution.trace, &out.join("trace.csv"))?;
    let last = solution.trace.last().expect("trace is never empty");
    println!(
        "{} m={} iterations={} converged={} error={} residual={}",
        Algorithm::from(args.algo),
        config.batch_size,
        last.iteration,
        solution.converged,
        last.error.map_or("-".into(), |e| format!("{e:e}")),
        last.residual.map_or("-".into(), |r| format!("{r:e}")),
    );
    if solution.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_bench(spec: &SweepSpec, out: &Path) -> Result<ExitCode, Failure> {
    let report = run_sweep(spec)?;
    let summary = emit_csv(&report, out)?;
    for row in &report.rows {
        println!(
            "{} {} m={} seed={} iters={} seconds={} converged={}",
            report.env,
            report.algorithm,
            row.batch_size,
            row.seed,
            row.iters_to_tol.map_or("-".into(), |k| k.to_string()),
            row.seconds_to_tol.map_or("-".into(), |s| format!("{s:.4}")),
            row.converged
        );
    }
    println!(
        "n_states={} summary -> {}",
        report.rows.first().map_or(0, |r| r.n_states),
        summary.display()
    );
    if report.rows.iter().all(|r| r.converged) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_validate(path: &Path) -> Result<ExitCode, Failure> {
    let mdp = load_mdp(path)?;
    let report = validate_mdp(&mdp);
    println!("{report}");
    if report.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
