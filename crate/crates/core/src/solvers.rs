//! Value iteration, policy iteration and modified policy iteration over the
//! mini-batch operator family.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{greedy_action, greedy_policy, validate_mdp, Mdp, Policy, ValueFunction};
use crate::operators::{default_workers, BatchSchedule, Executor};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
pub const DEFAULT_MPI_STEPS: usize = 50;

/// Largest state count solved with a dense LU factorization.
pub const DENSE_SOLVE_LIMIT: usize = 2500;

/// Fixed-point residual a reference solution must meet.
pub const REFERENCE_RESIDUAL: f64 = 1e-8;

/// Relative margin an action must beat the incumbent by during policy
/// improvement; keeps policy iteration from cycling on rounding-level ties.
const IMPROVEMENT_MARGIN: f64 = 1e-11;

/// Relative successive-difference target of iterative policy evaluation.
const ITERATIVE_EVAL_TOLERANCE: f64 = 1e-13;
const ITERATIVE_EVAL_MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// `m`, in `[1, n]`.
    pub batch_size: usize,
    /// Draw a fresh uniform order before every operator application;
    /// otherwise process states in ascending order.
    pub shuffle: bool,
    /// Seed of the ChaCha8 stream used for the orderings.
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub workers: usize,
}

impl SolverConfig {
    pub fn new(batch_size: usize) -> Self {
        Self {
            batch_size,
            shuffle: true,
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            workers: default_workers(),
        }
    }

    pub fn with_shuffle(mut self, shuffle: bool) -> Self {
        self.shuffle = shuffle;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn check(&self, n_states: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n_states {
            return Err(Error::InvalidConfig(format!(
                "batch size {} not in [1, {n_states}]",
                self.batch_size
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be ≥ 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `‖J_k − J*‖∞`, when a reference is known.
    pub error: Option<f64>,
    /// `‖J_k − J_{k−1}‖∞`; absent at `k = 0`.
    pub residual: Option<f64>,
    /// Cumulative seconds spent in operator applications.
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// First iteration whose error is within `tolerance`.
    pub fn iterations_to_tolerance(&self, tolerance: f64) -> Option<usize> {
        self.first_within(tolerance).map(|r| r.iteration)
    }

    pub fn seconds_to_tolerance(&self, tolerance: f64) -> Option<f64> {
        self.first_within(tolerance).map(|r| r.elapsed_seconds)
    }

    fn first_within(&self, tolerance: f64) -> Option<&TraceRecord> {
        self.records
            .iter()
            .find(|r| r.error.is_some_and(|e| e <= tolerance))
    }

    pub fn errors(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.records.iter().map(|r| r.error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub value: ValueFunction,
    pub policy: Policy,
    pub trace: ConvergenceTrace,
    pub converged: bool,
}

impl Solution {
    /// Iterations performed: operator applications for VI, outer loops for
    /// PI and MPI.
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.iteration)
    }
}

/// Trace bookkeeping shared by VI and MPI.
struct Recorder<'a> {
    reference: Option<&'a ValueFunction>,
    tolerance: f64,
    trace: ConvergenceTrace,
    elapsed: f64,
}

impl<'a> Recorder<'a> {
    fn new(reference: Option<&'a ValueFunction>, tolerance: f64) -> Self {
        Self {
            reference,
            tolerance,
            trace: ConvergenceTrace::default(),
            elapsed: 0.0,
        }
    }

    fn error(&self, values: &[f64]) -> Option<f64> {
        self.reference.map(|r| sup_diff(values, &r.values))
    }

    /// Records iteration `k` and reports whether the stopping metric is met.
    fn record(&mut self, iteration: usize, values: &[f64], previous: Option<&[f64]>) -> bool {
        let error = self.error(values);
        let residual = previous.map(|p| sup_diff(values, p));
        self.trace.records.push(TraceRecord {
            iteration,
            error,
            residual,
            elapsed_seconds: self.elapsed,
        });
        match (error, residual) {
            (Some(e), _) => e <= self.tolerance,
            (None, Some(r)) => r <= self.tolerance,
            (None, None) => false,
        }
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_finite(values: &[f64], iteration: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(state) => Err(Error::NonFinite {
            iteration,
            state: state + 1,
        }),
        None => Ok(()),
    }
}

fn check_inputs(mdp: &Mdp, config: &SolverConfig, reference: Option<&ValueFunction>) -> Result<()> {
    let report = validate_mdp(mdp);
    if !report.is_empty() {
        return Err(Error::InvalidMdp(report));
    }
    config.check(mdp.n_states)?;
    if let Some(r) = reference {
        mdp.check_values(r)?;
    }
    Ok(())
}

/// Repeated application of `B_m` from `J_0 = 0`.
///
/// Stops when the error against `reference` (or, without one, the successive
/// residual) reaches `config.tolerance`, or after `config.max_iterations`
/// applications.
pub fn value_iteration(
    mdp: &Mdp,
    config: &SolverConfig,
    reference: Option<&ValueFunction>,
) -> Result<Solution> {
    check_inputs(mdp, config, reference)?;
    let executor = Executor::new(config.workers);
    let n = mdp.n_states;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut schedule = BatchSchedule::identity(n, config.batch_size)?;
    let mut recorder = Recorder::new(reference, config.tolerance);

    let mut values = vec![0.0; n];
    let mut next = Vec::with_capacity(n);
    let mut converged = recorder.record(0, &values, None);

    let mut k = 0;
    while !converged && k < config.max_iterations {
        k += 1;
        let start = Instant::now();
        if config.shuffle {
            schedule.reshuffle(&mut rng);
        }
        executor.apply_into(mdp, &values, &schedule, &mut next);
        recorder.elapsed += start.elapsed().as_secs_f64();
        check_finite(&next, k)?;
        std::mem::swap(&mut values, &mut next);
        converged = recorder.record(k, &values, Some(&next));
    }

    let value = ValueFunction::new(values);
    let policy = greedy_policy(mdp, &value);
    Ok(Solution {
        value,
        policy,
        trace: recorder.trace,
        converged,
    })
}

/// `J_μ`, the solution of `(I − α·P_μ)·J = g_μ`.
pub fn exact_policy_evaluation(mdp: &Mdp, mu: &Policy) -> Result<ValueFunction> {
    evaluate_policy(mdp, mu, None)
}

fn evaluate_policy(mdp: &Mdp, mu: &Policy, warm: Option<&ValueFunction>) -> Result<ValueFunction> {
    let report = validate_mdp(mdp);
    if !report.is_empty() {
        return Err(Error::InvalidMdp(report));
    }
    mdp.check_policy(mu)?;
    let values = if mdp.n_states <= DENSE_SOLVE_LIMIT {
        dense_policy_solve(mdp, mu)?
    } else {
        iterative_policy_solve(mdp, mu, warm)?
    };
    let residual = policy_residual(mdp, mu, &values);
    if residual.is_nan() || residual > REFERENCE_RESIDUAL {
        return Err(Error::Residual {
            residual,
            limit: REFERENCE_RESIDUAL,
        });
    }
    Ok(values)
}

fn dense_policy_solve(mdp: &Mdp, mu: &Policy) -> Result<ValueFunction> {
    let n = mdp.n_states;
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for i in 0..n {
        let entry = &mdp.actions[i][mu.choices[i]];
        b[i] = entry.cost;
        for &(j, p) in &entry.transitions {
            a[(i, j)] -= mdp.discount * p;
        }
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::LinearSolve("singular policy system".into()))?;
    Ok(ValueFunction::new(x.iter().copied().collect()))
}

/// Gauss-Seidel sweeps of `B_{μ,1}` until successive iterates agree to
/// `ITERATIVE_EVAL_TOLERANCE` relative to the value scale.
fn iterative_policy_solve(
    mdp: &Mdp,
    mu: &Policy,
    warm: Option<&ValueFunction>,
) -> Result<ValueFunction> {
    let n = mdp.n_states;
    let mut values = match warm {
        Some(w) if w.len() == n => w.values.clone(),
        _ => vec![0.0; n],
    };
    for sweep in 1..=ITERATIVE_EVAL_MAX_SWEEPS {
        let mut delta = 0.0_f64;
        let mut scale = 1.0_f64;
        for i in 0..n {
            let entry = &mdp.actions[i][mu.choices[i]];
            let v = entry.cost + mdp.discount * entry.expected(&values);
            delta = delta.max((v - values[i]).abs());
            scale = scale.max(v.abs());
            values[i] = v;
        }
        check_finite(&values, sweep)?;
        if delta <= ITERATIVE_EVAL_TOLERANCE * scale {
            break;
        }
    }
    Ok(ValueFunction::new(values))
}

/// `‖T_μ J − J‖∞`.
pub fn policy_residual(mdp: &Mdp, mu: &Policy, values: &ValueFunction) -> f64 {
    (0..mdp.n_states)
        .map(|i| {
            let entry = &mdp.actions[i][mu.choices[i]];
            let t = entry.cost + mdp.discount * entry.expected(&values.values);
            (t - values[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// `‖T J − J‖∞` for the plain Bellman operator.
pub fn bellman_residual(mdp: &Mdp, values: &ValueFunction) -> f64 {
    (0..mdp.n_states)
        .map(|i| (greedy_action(mdp, &values.values, i).1 - values[i]).abs())
        .fold(0.0, f64::max)
}

/// Greedy step that keeps the incumbent action unless some action beats it
/// by more than a relative rounding margin. Ties among challengers go to the
/// lowest index.
pub(crate) fn improve_policy(mdp: &Mdp, values: &[f64], incumbent: &Policy) -> Policy {
    let choices = (0..mdp.n_states)
        .map(|i| {
            let (best, best_q) = greedy_action(mdp, values, i);
            let current = incumbent.choices[i];
            if best == current {
                return current;
            }
            let entry = &mdp.actions[i][current];
            let current_q = entry.cost + mdp.discount * entry.expected(values);
            if current_q - best_q <= IMPROVEMENT_MARGIN * best_q.abs().max(1.0) {
                current
            } else {
                best
            }
        })
        .collect();
    Policy::new(choices)
}

/// Exact policy iteration from the policy greedy with respect to `J = 0`.
///
/// The trace holds one record per evaluation, with the residual between
/// consecutive policy values.
pub fn policy_iteration(mdp: &Mdp) -> Result<Solution> {
    let report = validate_mdp(mdp);
    if !report.is_empty() {
        return Err(Error::InvalidMdp(report));
    }
    let n = mdp.n_states;
    let start = Instant::now();
    let mut policy = greedy_policy(mdp, &ValueFunction::zeros(n));
    let mut values: Option<ValueFunction> = None;
    let mut trace = ConvergenceTrace::default();
    // Finite in theory; the cap only guards against a broken model.
    let cap = 10_000;
    for iteration in 1..=cap {
        let next = evaluate_policy(mdp, &policy, values.as_ref())?;
        let residual = values.as_ref().map(|v| sup_diff(&next.values, &v.values));
        let improved = improve_policy(mdp, &next.values, &policy);
        trace.records.push(TraceRecord {
            iteration,
            error: None,
            residual,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
        values = Some(next);
        if improved == policy {
            return Ok(Solution {
                value: values.expect("set above"),
                policy,
                trace,
                converged: true,
            });
        }
        policy = improved;
    }
    Ok(Solution {
        value: values.expect("at least one evaluation"),
        policy,
        trace,
        converged: false,
    })
}

/// Modified policy iteration: `k_eval` applications of `B_{μ,m}` per outer
/// step, warm-started from the previous value estimate, then a greedy
/// improvement.
///
/// Stops once the policy is unchanged by an improvement step and the value
/// criterion of `config` holds, or after `config.max_iterations` outer steps.
pub fn modified_policy_iteration(
    mdp: &Mdp,
    k_eval: usize,
    config: &SolverConfig,
    reference: Option<&ValueFunction>,
) -> Result<Solution> {
    check_inputs(mdp, config, reference)?;
    if k_eval == 0 {
        return Err(Error::InvalidConfig("K must be ≥ 1".into()));
    }
    let executor = Executor::new(config.workers);
    let n = mdp.n_states;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut schedule = BatchSchedule::identity(n, config.batch_size)?;
    let mut recorder = Recorder::new(reference, config.tolerance);

    let mut values = vec![0.0; n];
    let mut previous = values.clone();
    let mut next = Vec::with_capacity(n);
    let mut policy = greedy_policy(mdp, &ValueFunction::zeros(n));
    recorder.record(0, &values, None);

    let mut converged = false;
    let mut outer = 0;
    while !converged && outer < config.max_iterations {
        outer += 1;
        previous.copy_from_slice(&values);
        let start = Instant::now();
        for _ in 0..k_eval {
            if config.shuffle {
                schedule.reshuffle(&mut rng);
            }
            executor.apply_policy_into(mdp, &values, &policy, &schedule, &mut next);
            std::mem::swap(&mut values, &mut next);
        }
        let improved = improve_policy(mdp, &values, &policy);
        recorder.elapsed += start.elapsed().as_secs_f64();
        check_finite(&values, outer)?;
        let stable = improved == policy;
        let met = recorder.record(outer, &values, Some(&previous));
        policy = improved;
        converged = stable && met;
    }

    Ok(Solution {
        value: ValueFunction::new(values),
        policy,
        trace: recorder.trace,
        converged,
    })
}

/// `J*` by policy iteration, checked to satisfy the Bellman equation.
pub fn compute_reference(mdp: &Mdp) -> Result<ValueFunction> {
    let solution = policy_iteration(mdp)?;
    let residual = bellman_residual(mdp, &solution.value);
    if !solution.converged || residual.is_nan() || residual > REFERENCE_RESIDUAL {
        return Err(Error::Residual {
            residual,
            limit: REFERENCE_RESIDUAL,
        });
    }
    Ok(solution.value)
}
