//! Finite MDPs, ε-greedy policies and the Markov chains they induce.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::partition::FeatureMap;

/// A finite discounted MDP. Tensors are stored flat in `(s, a, s′)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    trans: Vec<f64>,
    reward: Vec<f64>,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        trans: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        Self::with_tolerances(n_states, n_actions, gamma, trans, reward, &Tolerances::default())
    }

    pub fn with_tolerances(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        trans: Vec<f64>,
        reward: Vec<f64>,
        tol: &Tolerances,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("MDP needs at least one state and one action"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("discount {gamma} outside [0, 1)")));
        }
        let len = n_states * n_actions * n_states;
        if trans.len() != len || reward.len() != len {
            return Err(invalid(format!(
                "expected {len} transition and reward entries, got {} and {}",
                trans.len(),
                reward.len()
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(invalid("rewards must be finite"));
        }
        for (k, row) in trans.chunks(n_states).enumerate() {
            let (s, a) = (k / n_actions, k % n_actions);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(invalid(format!("negative or non-finite probability at (s={s}, a={a})")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol.prob_sum {
                return Err(invalid(format!(
                    "transition row (s={s}, a={a}) sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            trans,
            reward,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + s2
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.trans[self.idx(s, a, s2)]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.reward[self.idx(s, a, s2)]
    }

    /// `P(· | s, a)` as a slice over next states.
    pub fn next_state_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = self.idx(s, a, 0);
        &self.trans[start..start + self.n_states]
    }

    /// `r(s, a) = Σ_{s′} P(s′|s,a) r(s,a,s′)`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        (0..self.n_states)
            .map(|s2| self.prob(s, a, s2) * self.reward(s, a, s2))
            .sum()
    }

    /// `K_r = max |r(s,a,s′)|`.
    pub fn reward_bound(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// A deterministic policy `a ∈ A^S`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeterministicPolicy(Vec<usize>);

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some(a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(invalid(format!("action {a} out of range for {n_actions} actions")));
        }
        Ok(Self(actions))
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn n_states(&self) -> usize {
        self.0.len()
    }

    /// Mixed-radix index; ordering by id equals lexicographic ordering of the
    /// action vectors.
    pub fn id(&self, n_actions: usize) -> u64 {
        self.0
            .iter()
            .fold(0u64, |acc, &a| acc * n_actions as u64 + a as u64)
    }

    pub fn from_id(id: u64, n_states: usize, n_actions: usize) -> Self {
        let mut actions = vec![0; n_states];
        let mut rest = id;
        for slot in actions.iter_mut().rev() {
            *slot = (rest % n_actions as u64) as usize;
            rest /= n_actions as u64;
        }
        Self(actions)
    }
}

impl fmt::Display for DeterministicPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// ε-greedy randomization of a deterministic policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsGreedyPolicy {
    pub base: DeterministicPolicy,
    pub eps: f64,
    n_actions: usize,
}

impl EpsGreedyPolicy {
    pub fn new(base: DeterministicPolicy, eps: f64, n_actions: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(invalid(format!("exploration rate {eps} outside [0, 1]")));
        }
        if base.actions().iter().any(|&a| a >= n_actions) {
            return Err(invalid("base policy action out of range"));
        }
        Ok(Self {
            base,
            eps,
            n_actions,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `π(a|s)`: `1 − ε(1 − 1/|A|)` on the base action, `ε/|A|` elsewhere.
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        let n = self.n_actions as f64;
        if a == self.base.action(s) {
            1.0 - self.eps * (1.0 - 1.0 / n)
        } else {
            self.eps / n
        }
    }

    pub fn action_dist(&self, s: usize) -> Vec<f64> {
        (0..self.n_actions).map(|a| self.prob(s, a)).collect()
    }
}

/// Stationary distribution of an induced state chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub dist: Vec<f64>,
}

/// `M(s, s′) = Σ_a π(a|s) P(s′|s, a)`.
pub fn induced_state_chain(mdp: &FiniteMdp, pol: &EpsGreedyPolicy) -> Result<DMatrix<f64>> {
    if pol.base.n_states() != mdp.n_states() || pol.n_actions() != mdp.n_actions() {
        return Err(invalid("policy dimensions do not match the MDP"));
    }
    let n = mdp.n_states();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let p = pol.prob(s, a);
            for s2 in 0..n {
                m[(s, s2)] += p * mdp.prob(s, a, s2);
            }
        }
    }
    Ok(m)
}

pub fn stationary_distribution(chain: &DMatrix<f64>) -> Result<StationaryDistribution> {
    stationary_distribution_with(chain, &Tolerances::default())
}

/// Solves the augmented system `[Mᵀ − I; 1ᵀ] d = [0; 1]` by least squares and
/// verifies uniqueness, positivity and the fixed-point residual.
pub fn stationary_distribution_with(
    chain: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<StationaryDistribution> {
    let n = chain.nrows();
    if n == 0 || chain.ncols() != n {
        return Err(invalid("chain must be a non-empty square matrix"));
    }
    for (s, row) in chain.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol.prob_sum * n as f64 || row.iter().any(|&p| p < 0.0) {
            return Err(invalid(format!("chain row {s} is not a distribution")));
        }
    }

    let generator = chain.transpose() - DMatrix::identity(n, n);
    let null_dim = n - linalg::rank(&generator, tol.rank.max(f64::EPSILON * n as f64));
    if null_dim != 1 {
        return Err(Error::NotErgodic(format!(
            "stationary distribution is not unique (null space dimension {null_dim})"
        )));
    }

    let mut aug = DMatrix::zeros(n + 1, n);
    aug.view_mut((0, 0), (n, n)).copy_from(&generator);
    aug.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let d = aug
        .svd(true, true)
        .solve(&rhs, f64::EPSILON)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;

    if let Some((s, &v)) = d.iter().enumerate().find(|(_, &v)| v <= tol.ergodic_min) {
        return Err(Error::NotErgodic(format!(
            "stationary mass of state {s} is {v:e}"
        )));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > tol.stationary {
        return Err(Error::Numerical(format!("stationary distribution sums to {sum}")));
    }
    let residual = (chain.transpose() * &d - &d).amax();
    if residual > tol.stationary {
        return Err(Error::Numerical(format!(
            "stationary residual {residual:e} exceeds {:e}",
            tol.stationary
        )));
    }
    Ok(StationaryDistribution {
        dist: d.iter().copied().collect(),
    })
}

/// Outcome of the B1 check: feature/reward bounds and feature rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B1Report {
    pub k_phi: f64,
    pub k_r: f64,
    pub rank: usize,
    pub d: usize,
    pub full_rank: bool,
}

pub fn validate_b1(features: &FeatureMap, mdp: &FiniteMdp) -> Result<B1Report> {
    if features.n_states() != mdp.n_states() || features.n_actions() != mdp.n_actions() {
        return Err(invalid("feature map dimensions do not match the MDP"));
    }
    let phi = features.matrix();
    let k_phi = phi.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let rank = linalg::rank(phi, Tolerances::default().rank.max(1e-12));
    Ok(B1Report {
        k_phi,
        k_r: mdp.reward_bound(),
        rank,
        d: features.dim(),
        full_rank: rank == features.dim(),
    })
}
