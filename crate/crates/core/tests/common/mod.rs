//! Test oracles written independently of the library's operator and solver
//! code paths.

#![allow(dead_code, clippy::needless_range_loop)]

use mbdp::envs::RandomMdp;
use mbdp::{Mdp, Policy, ValueFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random model from the acceptance corpus: n ≤ 20, ≤ 4 actions,
/// α ∈ [0.5, 0.99].
pub fn corpus_mdp(seed: u64) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    let n = rng.random_range(1..=20);
    let alpha = rng.random_range(0.5..=0.99);
    RandomMdp::new(n, alpha).build_with(&mut rng)
}

/// Same shape with costs in [0, 1], so that `J = 0 ≤ TJ ≤ J*`.
pub fn nonnegative_mdp(seed: u64) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0dd_ba11);
    let n = rng.random_range(2..=20);
    let alpha = rng.random_range(0.5..=0.99);
    RandomMdp::new(n, alpha)
        .with_costs(0.0, 1.0)
        .build_with(&mut rng)
}

pub fn random_values<R: Rng>(rng: &mut R, n: usize, scale: f64) -> ValueFunction {
    ValueFunction::new((0..n).map(|_| rng.random_range(-scale..=scale)).collect())
}

pub fn random_permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

pub fn random_policy<R: Rng>(rng: &mut R, mdp: &Mdp) -> Policy {
    Policy::new(
        mdp.actions
            .iter()
            .map(|a| rng.random_range(0..a.len()))
            .collect(),
    )
}

fn q(mdp: &Mdp, values: &[f64], i: usize, u: usize) -> f64 {
    let e = &mdp.actions[i][u];
    let mut acc = 0.0;
    for &(j, p) in &e.transitions {
        acc += p * values[j];
    }
    e.cost + mdp.discount * acc
}

fn min_q(mdp: &Mdp, values: &[f64], i: usize) -> f64 {
    (0..mdp.actions[i].len())
        .map(|u| q(mdp, values, i, u))
        .fold(f64::INFINITY, f64::min)
}

/// `T J`: every state reads only `J`.
pub fn bellman_backup(mdp: &Mdp, j: &ValueFunction) -> ValueFunction {
    ValueFunction::new(
        (0..mdp.n_states)
            .map(|i| min_q(mdp, &j.values, i))
            .collect(),
    )
}

/// `F J`: ascending in-place sweep.
pub fn gauss_seidel_sweep(mdp: &Mdp, j: &ValueFunction) -> ValueFunction {
    let mut v = j.values.clone();
    for i in 0..mdp.n_states {
        v[i] = min_q(mdp, &v, i);
    }
    ValueFunction::new(v)
}

/// Gaussian elimination with partial pivoting on `(I − α P_μ) x = g_μ`.
pub fn solve_policy_by_elimination(mdp: &Mdp, mu: &Policy) -> Vec<f64> {
    let n = mdp.n_states;
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        a[i][i] = 1.0;
        let e = &mdp.actions[i][mu.choices[i]];
        for &(j, p) in &e.transitions {
            a[i][j] -= mdp.discount * p;
        }
        a[i][n] = e.cost;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// `J*` as the elementwise minimum of `J_μ` over every deterministic policy.
/// Only for tiny models.
pub fn brute_force_optimum(mdp: &Mdp) -> ValueFunction {
    let n = mdp.n_states;
    let sizes: Vec<usize> = mdp.actions.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    assert!(total <= 100_000, "too many policies to enumerate");
    let mut best = vec![f64::INFINITY; n];
    let mut choices = vec![0; n];
    for _ in 0..total {
        let v = solve_policy_by_elimination(mdp, &Policy::new(choices.clone()));
        for (b, x) in best.iter_mut().zip(&v) {
            *b = b.min(*x);
        }
        for (c, &s) in choices.iter_mut().zip(&sizes) {
            *c += 1;
            if *c < s {
                break;
            }
            *c = 0;
        }
    }
    ValueFunction::new(best)
}

/// `max_i [Q*(i, μ(i)) − min_u Q*(i, u)]` at the given `J*`.
pub fn policy_q_gap(mdp: &Mdp, optimum: &ValueFunction, mu: &Policy) -> f64 {
    (0..mdp.n_states)
        .map(|i| q(mdp, &optimum.values, i, mu.choices[i]) - min_q(mdp, &optimum.values, i))
        .fold(0.0, f64::max)
}

pub fn sup(a: &ValueFunction, b: &ValueFunction) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest `a(i) − b(i)`; `≤ slack` means `a ≤ b + slack` elementwise.
pub fn max_excess(a: &ValueFunction, b: &ValueFunction) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x - y)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Whether every state reads at least as many fresh values under batch size
/// `small` as under `large` for the same order, i.e. position prefix
/// `large·⌊p/large⌋ ≤ small·⌊p/small⌋` for every position `p`.
pub fn nested_batches(small: usize, large: usize, n: usize) -> bool {
    (0..n).all(|p| large * (p / large) <= small * (p / small))
}
