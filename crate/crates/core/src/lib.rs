//! Mini-batch dynamic programming for finite discounted Markov decision
//! processes.
//!
//! The central object is the mini-batch operator `B_m`: states are visited in
//! blocks of `m` following a permutation, states inside a block are updated
//! in parallel from the values available before the block, and every later
//! block sees the fresh values of all earlier blocks. `m = n` is the classic
//! Bellman backup, `m = 1` is a Gauss-Seidel sweep.
//!
//! Modules:
//! - [`mdp`]: the model, validation, Q-values, greedy policies, JSON files.
//! - [`operators`]: batch schedules and the two mini-batch kernels.
//! - [`solvers`]: value iteration, policy iteration, modified policy iteration.
//! - [`envs`]: FrozenLake, Taxi and seeded 2D mazes.
//! - [`bench`]: batch-size sweeps and CSV output.

pub mod bench;
pub mod envs;
pub mod error;
pub mod mdp;
pub mod operators;
pub mod solvers;

pub use error::{Error, Result};
pub use mdp::{ActionEntry, Mdp, Policy, ValidationReport, ValueFunction, Violation};
pub use operators::{BatchPartition, BatchSchedule, Executor};
pub use solvers::{ConvergenceTrace, Solution, SolverConfig, TraceRecord};
