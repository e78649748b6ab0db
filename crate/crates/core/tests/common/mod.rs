#![allow(dead_code)]

use std::path::PathBuf;

use lfa_di::{FeatureMap, FiniteMdp, MdpFixture};
use nalgebra::{DMatrix, DVector};

pub const FIXTURES: [&str; 4] = ["b1", "b2", "b3", "b4"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json"))
}

pub fn load(name: &str) -> (MdpFixture, FiniteMdp, FeatureMap) {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    let fx = MdpFixture::from_json(&text).unwrap();
    let mdp = fx.mdp().unwrap();
    let features = fx.feature_map().unwrap();
    (fx, mdp, features)
}

/// ε-greedy probability written out from its definition.
pub fn eps_greedy(greedy: usize, a: usize, eps: f64, n_actions: usize) -> f64 {
    let uniform = eps / n_actions as f64;
    if a == greedy {
        (1.0 - eps) + uniform
    } else {
        uniform
    }
}

/// Stationary law by repeated multiplication of a lazy copy of the chain.
pub fn power_iteration(chain: &DMatrix<f64>) -> Vec<f64> {
    let n = chain.nrows();
    let lazy = (chain + DMatrix::identity(n, n)) * 0.5;
    let mut d = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..200_000 {
        let next = lazy.transpose() * &d;
        let done = (&next - &d).amax() < 1e-15;
        d = next;
        if done {
            break;
        }
    }
    d.iter().copied().collect()
}

/// `E[δ φ(s, a)]` by exhaustive enumeration of `(s, a, s′, a′)`.
pub fn exact_mean_update(
    mdp: &FiniteMdp,
    features: &FeatureMap,
    policy: &[usize],
    eps: f64,
    eps_prime: f64,
    theta: &DVector<f64>,
) -> DVector<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut chain = DMatrix::zeros(ns, ns);
    for s in 0..ns {
        for a in 0..na {
            for s2 in 0..ns {
                chain[(s, s2)] += eps_greedy(policy[s], a, eps, na) * mdp.prob(s, a, s2);
            }
        }
    }
    let d = power_iteration(&chain);
    let mut mean = DVector::zeros(features.dim());
    for s in 0..ns {
        for a in 0..na {
            let w_sa = d[s] * eps_greedy(policy[s], a, eps, na);
            let q_sa = features.phi(s, a).dot(theta);
            for s2 in 0..ns {
                for a2 in 0..na {
                    let w = w_sa * mdp.prob(s, a, s2) * eps_greedy(policy[s2], a2, eps_prime, na);
                    if w == 0.0 {
                        continue;
                    }
                    let delta = mdp.reward(s, a, s2) + mdp.gamma() * features.phi(s2, a2).dot(theta) - q_sa;
                    mean += features.phi(s, a) * (w * delta);
                }
            }
        }
    }
    mean
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Exact solution of `θ̇ = b − Aθ` from `θ0` at time `t`.
pub fn affine_flow(a: &DMatrix<f64>, b: &DVector<f64>, theta0: &DVector<f64>, t: f64) -> DVector<f64> {
    let x = a.clone().lu().solve(b).unwrap();
    &x + expm(&(-a * t)) * (theta0 - &x)
}
