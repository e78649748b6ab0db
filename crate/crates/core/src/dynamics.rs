//! Affine mean dynamics `θ̇ = b_a − A_a θ` of each greedy region.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::mdp::{
    induced_state_chain, stationary_distribution_with, DeterministicPolicy, EpsGreedyPolicy,
    FiniteMdp, StationaryDistribution,
};
use crate::partition::{greedy_action, FeatureMap};

/// Exploration pair `(ε, ε′)`: actions are drawn ε-greedy and the bootstrap
/// action ε′-greedy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub eps: f64,
    pub eps_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Q,
    Sarsa,
    Generic,
}

impl AlgorithmConfig {
    pub fn new(eps: f64, eps_prime: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(invalid(format!("behavior exploration {eps} outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&eps_prime) {
            return Err(invalid(format!("target exploration {eps_prime} outside [0, 1]")));
        }
        Ok(Self { eps, eps_prime })
    }

    pub fn q_learning(eps: f64) -> Result<Self> {
        Self::new(eps, 0.0)
    }

    pub fn sarsa(eps: f64) -> Result<Self> {
        Self::new(eps, eps)
    }

    pub fn preset(algo: Algorithm, eps: f64, eps_prime: Option<f64>) -> Result<Self> {
        match algo {
            Algorithm::Q => Self::q_learning(eps),
            Algorithm::Sarsa => Self::sarsa(eps),
            Algorithm::Generic => Self::new(
                eps,
                eps_prime.ok_or_else(|| invalid("generic algorithm needs eps_prime"))?,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieceDynamics {
    pub policy: DeterministicPolicy,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub landmark: Option<DVector<f64>>,
    /// Landmark lies in the closed greedy region of `policy`.
    pub self_consistent: bool,
    /// Landmark lies strictly inside the region.
    pub landmark_interior: bool,
    /// `λ_min((A + Aᵀ)/2)`.
    pub pd_margin: f64,
    pub stationary: StationaryDistribution,
}

impl PieceDynamics {
    pub fn drift(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * theta
    }

    pub fn landmark(&self) -> Result<&DVector<f64>> {
        self.landmark.as_ref().ok_or_else(|| Error::SingularDynamics {
            policy: self.policy.to_string(),
        })
    }
}

pub fn build_piece(
    mdp: &FiniteMdp,
    features: &FeatureMap,
    policy: &DeterministicPolicy,
    cfg: &AlgorithmConfig,
) -> Result<PieceDynamics> {
    build_piece_with(mdp, features, policy, cfg, &Tolerances::default())
}

/// `b = Φᵀ D r` and `A = Φᵀ D (I − γ P^{ε′}) Φ` with `D = diag(d(s) π^ε(a|s))`.
pub fn build_piece_with(
    mdp: &FiniteMdp,
    features: &FeatureMap,
    policy: &DeterministicPolicy,
    cfg: &AlgorithmConfig,
    tol: &Tolerances,
) -> Result<PieceDynamics> {
    if features.n_states() != mdp.n_states() || features.n_actions() != mdp.n_actions() {
        return Err(invalid("feature map dimensions do not match the MDP"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let behavior = EpsGreedyPolicy::new(policy.clone(), cfg.eps, na)?;
    let target = EpsGreedyPolicy::new(policy.clone(), cfg.eps_prime, na)?;
    let stationary = stationary_distribution_with(&induced_state_chain(mdp, &behavior)?, tol)?;

    let n = ns * na;
    let phi = features.matrix();
    let mut weight = DVector::zeros(n);
    let mut reward = DVector::zeros(n);
    let mut bootstrap = DMatrix::zeros(n, n);
    for s in 0..ns {
        for a in 0..na {
            let i = s * na + a;
            weight[i] = stationary.dist[s] * behavior.prob(s, a);
            reward[i] = mdp.expected_reward(s, a);
            for s2 in 0..ns {
                let p = mdp.prob(s, a, s2);
                for a2 in 0..na {
                    bootstrap[(i, s2 * na + a2)] = p * target.prob(s2, a2);
                }
            }
        }
    }
    let weighted_phi_t = phi.transpose() * DMatrix::from_diagonal(&weight);
    let b = &weighted_phi_t * reward;
    let a = &weighted_phi_t * (DMatrix::identity(n, n) - bootstrap * mdp.gamma()) * phi;

    let pd_margin = linalg::symmetric_part_min_eigenvalue(&a);
    let landmark = linalg::solve(&a, &b, tol);
    let (self_consistent, landmark_interior) = match &landmark {
        Some(x) => (
            in_closure(features, policy, x, tol.boundary),
            in_interior(features, policy, x, tol.boundary),
        ),
        None => (false, false),
    };
    Ok(PieceDynamics {
        policy: policy.clone(),
        a,
        b,
        landmark,
        self_consistent,
        landmark_interior,
        pd_margin,
        stationary,
    })
}

/// Each state's policy action is within `tol` (distance to the tie
/// hyperplane) of the best action value.
fn in_closure(features: &FeatureMap, policy: &DeterministicPolicy, theta: &DVector<f64>, tol: f64) -> bool {
    (0..features.n_states()).all(|s| {
        let a = policy.action(s);
        let qa = features.value(s, a, theta);
        (0..features.n_actions()).filter(|&b| b != a).all(|b| {
            let gap = qa - features.value(s, b, theta);
            let scale = (features.phi(s, a) - features.phi(s, b)).norm();
            gap >= -tol * scale.max(f64::MIN_POSITIVE)
        })
    })
}

fn in_interior(features: &FeatureMap, policy: &DeterministicPolicy, theta: &DVector<f64>, tol: f64) -> bool {
    (0..features.n_states()).all(|s| {
        let a = policy.action(s);
        if greedy_action(theta, features, s) != a {
            return false;
        }
        let qa = features.value(s, a, theta);
        (0..features.n_actions()).filter(|&b| b != a).all(|b| {
            let scale = (features.phi(s, a) - features.phi(s, b)).norm();
            scale > 0.0 && qa - features.value(s, b, theta) > tol * scale
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B4Entry {
    pub policy: DeterministicPolicy,
    pub pd_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B4Report {
    pub entries: Vec<B4Entry>,
    pub pass: bool,
}

pub fn validate_b4(pieces: &[PieceDynamics]) -> B4Report {
    let entries: Vec<B4Entry> = pieces
        .iter()
        .map(|p| B4Entry {
            policy: p.policy.clone(),
            pd_margin: p.pd_margin,
            pass: p.pd_margin > 0.0,
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    B4Report { entries, pass }
}

/// Global exponential stability margin of the scaled inclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesMargin {
    /// `min_a λ_min(A_a + A_aᵀ)`; positive certifies stability.
    pub beta: f64,
    /// Policy attaining the minimum.
    pub argmin: Option<DeterministicPolicy>,
}

pub fn ges_margin(pieces: &[PieceDynamics]) -> GesMargin {
    pieces
        .iter()
        .map(|p| (2.0 * p.pd_margin, &p.policy))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map_or(
            GesMargin {
                beta: f64::NAN,
                argmin: None,
            },
            |(beta, pol)| GesMargin {
                beta,
                argmin: Some(pol.clone()),
            },
        )
}
