mod common;

use common::*;
use mbdp::envs::{
    build_frozenlake, build_maze, build_taxi, frozenlake_tile, generate_maze_layout, maze_mdp,
    taxi_is_delivered, MazeParams,
};
use mbdp::mdp::{greedy_policy, validate_mdp};
use mbdp::operators::{apply_minibatch, BatchSchedule};
use mbdp::solvers::{
    bellman_residual, compute_reference, exact_policy_evaluation, modified_policy_iteration,
    policy_iteration, value_iteration, SolverConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn frozenlake_reference_values() {
    let mdp = build_frozenlake();
    let star = compute_reference(&mdp).unwrap();
    assert!(bellman_residual(&mdp, &star) <= 1e-8);
    for s in 0..64 {
        match frozenlake_tile(s) {
            b'H' => assert!((star[s] - 20000.0).abs() <= 1e-6, "hole {s}: {}", star[s]),
            b'G' => assert_eq!(star[s], 0.0),
            _ => assert!(star[s] > 0.0 && star[s] < 20000.0),
        }
    }
    let mu = greedy_policy(&mdp, &star);
    let j_mu = exact_policy_evaluation(&mdp, &mu).unwrap();
    assert!(sup(&j_mu, &star) <= 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in [1, 7, 32, 64] {
        let s = BatchSchedule::new(random_permutation(&mut rng, 64), m).unwrap();
        let out = apply_minibatch(&mdp, &star, &s).unwrap();
        assert!(sup(&out, &star) <= 1e-8);
    }
}

#[test]
fn taxi_policy_iteration_agrees_with_value_iteration() {
    let mdp = build_taxi();
    let pi = policy_iteration(&mdp).unwrap();
    assert!(pi.converged);
    let config = SolverConfig::new(500)
        .with_shuffle(false)
        .with_tolerance(1e-6)
        .with_workers(1);
    let vi = value_iteration(&mdp, &config, None).unwrap();
    assert!(vi.converged);
    assert!(sup(&pi.value, &vi.value) <= 1e-5);
    for s in (0..500).filter(|&s| taxi_is_delivered(s)) {
        assert!(pi.value[s].abs() <= 1e-12);
    }
    // Passenger in the car at its destination: drop off for −20.
    assert!((pi.value[mbdp::envs::taxi_encode(4, 3, 4, 3)] + 20.0).abs() <= 1e-12);
}

#[test]
fn maze_values_are_bounded_and_terminal_is_free() {
    for seed in 0..3 {
        let params = MazeParams::new(15, seed);
        let mdp = build_maze(&params).unwrap();
        assert!(validate_mdp(&mdp).is_empty());
        let star = compute_reference(&mdp).unwrap();
        let t = mdp.n_states - 1;
        assert_eq!(star[t], 0.0);
        let bound = 1.0 / (1.0 - mdp.discount);
        assert!(star.max() < bound);
        assert!(star.values[..t].iter().all(|&v| v >= 1.0));
    }
}

#[test]
fn maze_80_size_is_close_to_published_instance() {
    let layout = generate_maze_layout(&MazeParams::new(80, 0)).unwrap();
    let n = layout.n_states();
    assert!((4000..=6400).contains(&n), "{n}");
    let mdp = maze_mdp(&layout, 0.7);
    assert!(validate_mdp(&mdp).is_empty());
}

#[test]
fn maze_with_full_slip_mass_is_deterministic() {
    let mut params = MazeParams::new(10, 4);
    params.slip_mass = 1.0;
    let mdp = build_maze(&params).unwrap();
    assert!(validate_mdp(&mdp).is_empty());
    assert!(mdp
        .actions
        .iter()
        .flatten()
        .all(|e| e.transitions.len() == 1));
}

#[test]
fn large_maze_uses_iterative_evaluation() {
    // 60 × 60 at 4 % walls is above the dense-solve cutoff.
    let mdp = build_maze(&MazeParams::new(60, 2)).unwrap();
    assert!(mdp.n_states > mbdp::solvers::DENSE_SOLVE_LIMIT);
    let star = compute_reference(&mdp).unwrap();
    assert!(bellman_residual(&mdp, &star) <= 1e-8);
}

#[test]
fn mpi_gauss_seidel_needs_fewest_outer_iterations_on_maze() {
    let mdp = build_maze(&MazeParams::new(100, 0)).unwrap();
    let n = mdp.n_states;
    let star = compute_reference(&mdp).unwrap();
    let outer = |m: usize| {
        let config = SolverConfig::new(m).with_seed(0).with_workers(1);
        let sol = modified_policy_iteration(&mdp, 50, &config, Some(&star)).unwrap();
        assert!(sol.converged, "m={m}");
        sol.trace.iterations_to_tolerance(1e-4).unwrap()
    };
    let gs = outer(1);
    for m in [512, n / 2, n] {
        assert!(gs <= outer(m), "m={m}");
    }
}

#[test]
fn mpi_policy_stabilises_on_bundled_environments() {
    let envs = [
        build_frozenlake(),
        build_taxi(),
        build_maze(&MazeParams::new(20, 3)).unwrap(),
    ];
    for mdp in envs {
        let star = compute_reference(&mdp).unwrap();
        let config = SolverConfig::new(32)
            .with_seed(5)
            .with_max_iterations(1000)
            .with_workers(1);
        let sol = modified_policy_iteration(&mdp, 50, &config, Some(&star)).unwrap();
        assert!(sol.converged);
        assert!(policy_q_gap(&mdp, &star, &sol.policy) <= 1e-9);
    }
}
