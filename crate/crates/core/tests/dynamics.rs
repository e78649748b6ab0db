mod common;

use common::{exact_mean_update, load, power_iteration, FIXTURES};
use lfa_di::mdp::{induced_state_chain, stationary_distribution, EpsGreedyPolicy};
use lfa_di::sim::{seeded_rng, SaModel};
use lfa_di::{build_piece, ges_margin, validate_b1, validate_b4, AlgorithmConfig, DeterministicPolicy};
use nalgebra::DVector;

fn configs(eps: f64) -> Vec<AlgorithmConfig> {
    vec![
        AlgorithmConfig::q_learning(eps).unwrap(),
        AlgorithmConfig::sarsa(eps).unwrap(),
        AlgorithmConfig::new(eps, 0.5 * eps).unwrap(),
    ]
}

fn all_policies(n_states: usize, n_actions: usize) -> Vec<DeterministicPolicy> {
    let total = (n_actions as u64).pow(n_states as u32);
    (0..total).map(|id| DeterministicPolicy::from_id(id, n_states, n_actions)).collect()
}

#[test]
fn stationary_matches_power_iteration() {
    for name in FIXTURES {
        let (fx, mdp, _) = load(name);
        for pol in all_policies(mdp.n_states(), mdp.n_actions()) {
            let eg = EpsGreedyPolicy::new(pol, fx.eps.unwrap(), mdp.n_actions()).unwrap();
            let chain = induced_state_chain(&mdp, &eg).unwrap();
            let d = stationary_distribution(&chain).unwrap().dist;
            let oracle = power_iteration(&chain);
            for (x, y) in d.iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-12, "{name}: {d:?} vs {oracle:?}");
            }
        }
    }
}

#[test]
fn affine_pieces_match_exhaustive_expectation() {
    let thetas = [[0.0, 0.0], [1.0, -2.0], [-3.5, 0.25], [10.0, 7.0]];
    for name in FIXTURES {
        let (fx, mdp, features) = load(name);
        for cfg in configs(fx.eps.unwrap()) {
            for pol in all_policies(2, 2) {
                let piece = build_piece(&mdp, &features, &pol, &cfg).unwrap();
                for t in thetas {
                    let theta = DVector::from_column_slice(&t);
                    let oracle = exact_mean_update(&mdp, &features, pol.actions(), cfg.eps, cfg.eps_prime, &theta);
                    let drift = piece.drift(&theta);
                    assert!(
                        (&drift - &oracle).amax() < 1e-11 * (1.0 + theta.amax()),
                        "{name} {pol} {cfg:?}: {drift} vs {oracle}"
                    );
                }
            }
        }
    }
}

#[test]
fn landmarks_solve_their_pieces() {
    for name in FIXTURES {
        let (fx, mdp, features) = load(name);
        for cfg in configs(fx.eps.unwrap()) {
            for pol in all_policies(2, 2) {
                let piece = build_piece(&mdp, &features, &pol, &cfg).unwrap();
                let x = piece.landmark().unwrap();
                assert!((&piece.a * x - &piece.b).norm() <= 1e-10 * (1.0 + piece.b.norm()));
            }
        }
    }
}

#[test]
fn monte_carlo_drift_agrees_with_pieces() {
    const N: usize = 100_000;
    for name in FIXTURES {
        let (fx, mdp, features) = load(name);
        let cfg = AlgorithmConfig::q_learning(fx.eps.unwrap()).unwrap();
        let mut model = SaModel::new(&mdp, &features, cfg).unwrap();
        let mut rng = seeded_rng(11);
        for t in [[0.7, -0.2], [-1.5, 2.0]] {
            let theta = DVector::from_column_slice(&t);
            let pol = lfa_di::greedy_policy_of(&theta, &features);
            let expected = build_piece(&mdp, &features, &pol, &cfg).unwrap().drift(&theta);
            let mut sum = DVector::zeros(2);
            let mut sq = DVector::zeros(2);
            for _ in 0..N {
                let x = model.step(&theta, &mut rng).unwrap().direction;
                sq += x.component_mul(&x);
                sum += x;
            }
            let mean = &sum / N as f64;
            for i in 0..2 {
                let var = sq[i] / N as f64 - mean[i] * mean[i];
                let se = (var / N as f64).sqrt();
                assert!(
                    (mean[i] - expected[i]).abs() <= 4.0 * se,
                    "{name} θ={t:?} component {i}: {} vs {} (se {se})",
                    mean[i],
                    expected[i]
                );
            }
        }
    }
}

#[test]
fn fixtures_satisfy_rank_and_definiteness() {
    for name in FIXTURES {
        let (fx, mdp, features) = load(name);
        let b1 = validate_b1(&features, &mdp).unwrap();
        assert!(b1.full_rank && b1.rank == 2);
        assert!(b1.k_phi > 0.0 && b1.k_r > 0.0);
        let cfg = fx.preset_config("q").unwrap();
        let pieces: Vec<_> = all_policies(2, 2)
            .iter()
            .map(|p| build_piece(&mdp, &features, p, &cfg).unwrap())
            .collect();
        assert!(validate_b4(&pieces).pass, "{name}");
        let g = ges_margin(&pieces);
        let direct = pieces
            .iter()
            .map(|p| {
                let s = &p.a + p.a.transpose();
                s.symmetric_eigenvalues().min()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((g.beta - direct).abs() < 1e-12);
        assert!(g.beta > 0.0);
    }
}

#[test]
fn crafted_features_break_definiteness() {
    let (fx, mdp, features) = load("non_pd");
    let cfg = fx.preset_config("q").unwrap();
    let pol = DeterministicPolicy::new(vec![0, 1], 2).unwrap();
    let piece = build_piece(&mdp, &features, &pol, &cfg).unwrap();
    assert!((piece.pd_margin + 0.023113243546).abs() < 1e-9, "{}", piece.pd_margin);
    assert!(!validate_b4(&[piece]).pass);
}
