//! Mini-batch operators `B_m` and `B_{μ,m}`.
//!
//! A [`BatchSchedule`] fixes the processing order (a permutation of the
//! states) and the batch size `m`. The permutation is cut into consecutive
//! groups of `m` states; the last group may be shorter. When a state is
//! updated it reads fresh values for every state in a strictly earlier group
//! and the incoming values for everything else, including the other members
//! of its own group. Hence the members of one group are independent and are
//! handed to the worker pool together.
//!
//! Under the identity permutation the states already updated when state `i`
//! (1-based) is processed are `{1, ..., m·⌊(i−1)/m⌋}`: `m = n` reads only
//! old values (Bellman), `m = 1` reads every predecessor (Gauss-Seidel).

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{greedy_action, Mdp, Policy, ValueFunction};

/// Groups smaller than this are evaluated on the calling thread.
const PARALLEL_MIN_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSchedule {
    permutation: Vec<usize>,
    batch_size: usize,
}

impl BatchSchedule {
    /// `permutation[k]` is the (0-based) state processed at position `k`.
    pub fn new(permutation: Vec<usize>, batch_size: usize) -> Result<Self> {
        let n = permutation.len();
        if n == 0 {
            return Err(Error::InvalidSchedule("empty permutation".into()));
        }
        if batch_size == 0 || batch_size > n {
            return Err(Error::InvalidSchedule(format!(
                "batch size {batch_size} not in [1, {n}]"
            )));
        }
        let mut seen = vec![false; n];
        for &s in &permutation {
            if s >= n || seen[s] {
                return Err(Error::InvalidSchedule(format!(
                    "not a permutation of 1..={n} (entry {})",
                    s.wrapping_add(1)
                )));
            }
            seen[s] = true;
        }
        Ok(Self {
            permutation,
            batch_size,
        })
    }

    /// Ascending order.
    pub fn identity(n: usize, batch_size: usize) -> Result<Self> {
        Self::new((0..n).collect(), batch_size)
    }

    /// Uniform random order (Fisher-Yates).
    pub fn shuffled<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Result<Self> {
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(rng);
        Self::new(permutation, batch_size)
    }

    /// Redraws the order in place, keeping the batch size.
    pub fn reshuffle<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.permutation.shuffle(rng);
    }

    pub fn n_states(&self) -> usize {
        self.permutation.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn batches(&self) -> std::slice::Chunks<'_, usize> {
        self.permutation.chunks(self.batch_size)
    }

    pub fn partition(&self) -> BatchPartition {
        BatchPartition {
            batches: self.batches().map(<[usize]>::to_vec).collect(),
        }
    }
}

/// Ordered, disjoint groups of states covering the whole state space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPartition {
    pub batches: Vec<Vec<usize>>,
}

impl BatchPartition {
    /// Index of the group holding `state`.
    pub fn batch_of(&self, state: usize) -> Option<usize> {
        self.batches.iter().position(|b| b.contains(&state))
    }

    /// States in groups strictly before the one holding `state`, i.e. the
    /// states whose fresh values `state` reads. Sorted ascending.
    pub fn updated_before(&self, state: usize) -> Vec<usize> {
        let Some(b) = self.batch_of(state) else {
            return Vec::new();
        };
        let mut out: Vec<usize> = self.batches[..b].iter().flatten().copied().collect();
        out.sort_unstable();
        out
    }
}

pub fn batch_partition(schedule: &BatchSchedule) -> BatchPartition {
    schedule.partition()
}

/// Runs the operators, optionally spreading each batch over a thread pool.
///
/// Each state's Q-values are summed by one worker in transition-list order, so
/// the output is bitwise identical for every worker count.
pub struct Executor {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("workers", &self.workers)
            .finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::new(default_workers())
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

impl Executor {
    pub fn sequential() -> Self {
        Self {
            workers: 1,
            pool: None,
        }
    }

    /// `workers = 0` is treated as 1. Falls back to sequential execution if
    /// the pool cannot be built.
    pub fn new(workers: usize) -> Self {
        let workers = workers.max(1);
        if workers == 1 {
            return Self::sequential();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|k| format!("mbdp-worker-{k}"))
            .build()
            .ok();
        Self {
            workers: if pool.is_some() { workers } else { 1 },
            pool,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `B_m J`.
    pub fn apply(
        &self,
        mdp: &Mdp,
        values: &ValueFunction,
        schedule: &BatchSchedule,
    ) -> Result<ValueFunction> {
        check_dims(mdp, values, schedule)?;
        let mut out = Vec::with_capacity(values.len());
        self.apply_into(mdp, &values.values, schedule, &mut out);
        Ok(ValueFunction::new(out))
    }

    /// `B_{μ,m} J`.
    pub fn apply_policy(
        &self,
        mdp: &Mdp,
        values: &ValueFunction,
        mu: &Policy,
        schedule: &BatchSchedule,
    ) -> Result<ValueFunction> {
        check_dims(mdp, values, schedule)?;
        mdp.check_policy(mu)?;
        let mut out = Vec::with_capacity(values.len());
        self.apply_policy_into(mdp, &values.values, mu, schedule, &mut out);
        Ok(ValueFunction::new(out))
    }

    /// Unchecked `B_m` writing into `out`; dimensions must already agree.
    pub(crate) fn apply_into(
        &self,
        mdp: &Mdp,
        input: &[f64],
        schedule: &BatchSchedule,
        out: &mut Vec<f64>,
    ) {
        self.sweep(input, schedule, out, |i, vals| {
            greedy_action(mdp, vals, i).1
        });
    }

    pub(crate) fn apply_policy_into(
        &self,
        mdp: &Mdp,
        input: &[f64],
        mu: &Policy,
        schedule: &BatchSchedule,
        out: &mut Vec<f64>,
    ) {
        let alpha = mdp.discount;
        self.sweep(input, schedule, out, |i, vals| {
            let entry = &mdp.actions[i][mu.choices[i]];
            entry.cost + alpha * entry.expected(vals)
        });
    }

    /// `out` starts as a copy of `input`; after each group its new values
    /// are written back, so `out` always holds fresh values for finished
    /// groups and incoming values for the rest.
    fn sweep<F>(&self, input: &[f64], schedule: &BatchSchedule, out: &mut Vec<f64>, update: F)
    where
        F: Fn(usize, &[f64]) -> f64 + Sync,
    {
        out.clear();
        out.extend_from_slice(input);
        let mut fresh: Vec<f64> = Vec::with_capacity(schedule.batch_size());
        for batch in schedule.batches() {
            let current: &[f64] = out;
            match &self.pool {
                Some(pool) if batch.len() >= PARALLEL_MIN_BATCH => pool.install(|| {
                    batch
                        .par_iter()
                        .map(|&i| update(i, current))
                        .collect_into_vec(&mut fresh)
                }),
                _ => {
                    fresh.clear();
                    fresh.extend(batch.iter().map(|&i| update(i, current)));
                }
            }
            for (&i, &v) in batch.iter().zip(&fresh) {
                out[i] = v;
            }
        }
    }
}

fn check_dims(mdp: &Mdp, values: &ValueFunction, schedule: &BatchSchedule) -> Result<()> {
    mdp.check_values(values)?;
    if schedule.n_states() != mdp.n_states {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states,
            actual: schedule.n_states(),
        });
    }
    Ok(())
}

/// `B_m J` on the calling thread.
pub fn apply_minibatch(
    mdp: &Mdp,
    values: &ValueFunction,
    schedule: &BatchSchedule,
) -> Result<ValueFunction> {
    Executor::sequential().apply(mdp, values, schedule)
}

/// `B_{μ,m} J` on the calling thread.
pub fn apply_minibatch_policy(
    mdp: &Mdp,
    values: &ValueFunction,
    mu: &Policy,
    schedule: &BatchSchedule,
) -> Result<ValueFunction> {
    Executor::sequential().apply_policy(mdp, values, mu, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ActionEntry;

    fn chain() -> Mdp {
        Mdp::new(
            0.5,
            vec![
                vec![ActionEntry::deterministic(0.0, 0)],
                vec![ActionEntry::deterministic(1.0, 0)],
            ],
        )
    }

    fn sets(p: &BatchPartition, n: usize) -> Vec<Vec<usize>> {
        (0..n)
            .map(|i| p.updated_before(i).into_iter().map(|s| s + 1).collect())
            .collect()
    }

    #[test]
    fn partition_n5_m2() {
        let p = batch_partition(&BatchSchedule::identity(5, 2).unwrap());
        assert_eq!(p.batches, vec![vec![0, 1], vec![2, 3], vec![4]]);
        assert_eq!(
            sets(&p, 5),
            vec![vec![], vec![], vec![1, 2], vec![1, 2], vec![1, 2, 3, 4]]
        );
    }

    #[test]
    fn partition_bellman_and_gauss_seidel_cases() {
        let p = batch_partition(&BatchSchedule::identity(5, 5).unwrap());
        assert_eq!(p.batches.len(), 1);
        assert!(sets(&p, 5).iter().all(Vec::is_empty));

        let p = batch_partition(&BatchSchedule::identity(5, 1).unwrap());
        assert_eq!(p.batches.len(), 5);
        let expected: Vec<Vec<usize>> = (1..=5).map(|i| (1..i).collect()).collect();
        assert_eq!(sets(&p, 5), expected);
    }

    #[test]
    fn partition_follows_permutation() {
        let s = BatchSchedule::new(vec![3, 0, 4, 1, 2], 2).unwrap();
        let p = s.partition();
        assert_eq!(p.batches, vec![vec![3, 0], vec![4, 1], vec![2]]);
        assert_eq!(p.updated_before(2), vec![0, 1, 3, 4]);
        assert_eq!(p.updated_before(1), vec![0, 3]);
        let flat: Vec<usize> = p.batches.concat();
        assert_eq!(flat, s.permutation());
    }

    #[test]
    fn schedule_rejects_bad_input() {
        assert!(BatchSchedule::new(vec![0, 0, 1], 1).is_err());
        assert!(BatchSchedule::new(vec![0, 3, 1], 1).is_err());
        assert!(BatchSchedule::identity(3, 0).is_err());
        assert!(BatchSchedule::identity(3, 4).is_err());
        assert!(BatchSchedule::identity(0, 1).is_err());
    }

    #[test]
    fn chain_bellman_and_gauss_seidel() {
        let mdp = chain();
        let j = ValueFunction::new(vec![4.0, 4.0]);
        let t = apply_minibatch(&mdp, &j, &BatchSchedule::identity(2, 2).unwrap()).unwrap();
        assert_eq!(t.values, vec![2.0, 3.0]);
        let f = apply_minibatch(&mdp, &j, &BatchSchedule::identity(2, 1).unwrap()).unwrap();
        assert_eq!(f.values, vec![2.0, 2.0]);
    }

    #[test]
    fn policy_operator_examples() {
        let single = Mdp::new(0.5, vec![vec![ActionEntry::deterministic(1.0, 0)]]);
        let out = apply_minibatch_policy(
            &single,
            &ValueFunction::zeros(1),
            &Policy::new(vec![0]),
            &BatchSchedule::identity(1, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(out.values, vec![1.0]);

        let out = apply_minibatch_policy(
            &chain(),
            &ValueFunction::new(vec![4.0, 4.0]),
            &Policy::new(vec![0, 0]),
            &BatchSchedule::identity(2, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(out.values, vec![2.0, 2.0]);
    }

    #[test]
    fn dimension_errors() {
        let mdp = chain();
        let s = BatchSchedule::identity(2, 1).unwrap();
        assert!(apply_minibatch(&mdp, &ValueFunction::zeros(3), &s).is_err());
        let s3 = BatchSchedule::identity(3, 1).unwrap();
        assert!(apply_minibatch(&mdp, &ValueFunction::zeros(2), &s3).is_err());
        assert!(apply_minibatch_policy(
            &mdp,
            &ValueFunction::zeros(2),
            &Policy::new(vec![0, 1]),
            &s
        )
        .is_err());
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        // 600 states in one batch so the pool is actually used.
        let n = 600;
        let actions = (0..n)
            .map(|i| {
                vec![
                    ActionEntry::new(
                        (i % 7) as f64 * 0.3,
                        vec![((i + 1) % n, 0.25), ((i * 7 + 3) % n, 0.75)],
                    ),
                    ActionEntry::new(1.0 / (i + 1) as f64, vec![((i * 13) % n, 1.0)]),
                ]
            })
            .collect();
        let mdp = Mdp::new(0.93, actions);
        let j = ValueFunction::new((0..n).map(|i| (i as f64).sin()).collect());
        let s = BatchSchedule::identity(n, n).unwrap();
        let a = Executor::sequential().apply(&mdp, &j, &s).unwrap();
        let b = Executor::new(4).apply(&mdp, &j, &s).unwrap();
        let bits = |v: &ValueFunction| v.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
