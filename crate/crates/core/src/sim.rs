//! Stochastic iterates `θ_{n+1} = θ_n + α_n δ_n φ(s_n, a_n)` with states drawn
//! i.i.d. from the stationary law of the current ε-greedy policy.
//!
//! Randomness comes from ChaCha8 seeded with the run's 64-bit seed. Every
//! categorical draw consumes exactly one `f64` (53-bit uniform) and inverts
//! the CDF in index order, so a seed reproduces the same trajectory on every
//! platform.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::dynamics::AlgorithmConfig;
use crate::error::{invalid, Error, Result};
use crate::mdp::{induced_state_chain, stationary_distribution_with, EpsGreedyPolicy, FiniteMdp};
use crate::partition::{greedy_policy_of, FeatureMap};

pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Inverse-CDF draw from `probs` using one uniform.
pub fn sample_categorical(rng: &mut SimRng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left the total just below 1; return the last supported index.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSizeSchedule {
    /// `α_n = c / (n + n0)`.
    Harmonic { c: f64, n0: f64 },
    /// `α_n = c`; violates the Robbins–Monro conditions.
    Constant { c: f64 },
}

impl Default for StepSizeSchedule {
    fn default() -> Self {
        StepSizeSchedule::Harmonic { c: 1.0, n0: 1.0 }
    }
}

impl StepSizeSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSizeSchedule::Harmonic { c, n0 } => c > 0.0 && n0 > 0.0 && c.is_finite() && n0.is_finite(),
            StepSizeSchedule::Constant { c } => c > 0.0 && c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("step-size parameters must be positive and finite"))
        }
    }

    #[inline]
    pub fn alpha(&self, n: u64) -> f64 {
        match *self {
            StepSizeSchedule::Harmonic { c, n0 } => c / (n as f64 + n0),
            StepSizeSchedule::Constant { c } => c,
        }
    }

    /// `Σα_n = ∞` and `Σα_n² < ∞`.
    pub fn is_robbins_monro(&self) -> bool {
        matches!(self, StepSizeSchedule::Harmonic { .. })
    }
}

impl std::str::FromStr for StepSizeSchedule {
    type Err = Error;

    /// `harmonic:c,n0` or `constant:c`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = args
            .split(',')
            .filter(|a| !a.is_empty())
            .map(|a| a.trim().parse::<f64>().map_err(|_| invalid(format!("bad number '{a}' in schedule"))))
            .collect::<Result<Vec<_>>>()?;
        let schedule = match (kind, nums.as_slice()) {
            ("harmonic", []) => StepSizeSchedule::default(),
            ("harmonic", [c, n0]) => StepSizeSchedule::Harmonic { c: *c, n0: *n0 },
            ("constant", [c]) => StepSizeSchedule::Constant { c: *c },
            _ => return Err(invalid(format!("unrecognized schedule '{s}'"))),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaRun {
    pub theta0: Vec<f64>,
    pub n_iters: u64,
    pub seed: u64,
    pub cfg: AlgorithmConfig,
    pub schedule: StepSizeSchedule,
    pub record_stride: u64,
}

impl SaRun {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(invalid("n_iters must be at least 1"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride must be at least 1"));
        }
        if self.theta0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("theta0 must be finite"));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaSummary {
    pub final_theta: Vec<f64>,
    /// Mean of the last 5% of iterates `θ_1 … θ_N`.
    pub tail_mean: Vec<f64>,
    pub tail_len: u64,
    /// Number of `n` with a different greedy policy at `θ_{n+1}` than at `θ_n`.
    pub region_switches: u64,
    pub max_norm: f64,
}

/// Recorded rows: iterate index `n`, `θ_n`, the policy id at `θ_n`, and `α_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaTrajectory {
    pub indices: Vec<u64>,
    pub thetas: Vec<Vec<f64>>,
    pub policy_ids: Vec<u64>,
    pub alphas: Vec<f64>,
    pub summary: SaSummary,
}

/// One sampled transition and its update direction.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSample {
    pub direction: DVector<f64>,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub next_action: usize,
    pub td_error: f64,
    /// Greedy policy id at `θ`.
    pub policy_id: u64,
}

struct PolicyCache {
    stationary: Vec<f64>,
    behavior: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
}

/// Sampler for the update direction of the generic algorithm. Stationary
/// distributions are computed lazily and cached per greedy policy.
pub struct SaModel<'a> {
    mdp: &'a FiniteMdp,
    features: &'a FeatureMap,
    cfg: AlgorithmConfig,
    tol: Tolerances,
    cache: HashMap<u64, PolicyCache>,
}

impl<'a> SaModel<'a> {
    pub fn new(mdp: &'a FiniteMdp, features: &'a FeatureMap, cfg: AlgorithmConfig) -> Result<Self> {
        if features.n_states() != mdp.n_states() || features.n_actions() != mdp.n_actions() {
            return Err(invalid("feature map dimensions do not match the MDP"));
        }
        Ok(Self {
            mdp,
            features,
            cfg,
            tol: Tolerances::default(),
            cache: HashMap::new(),
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    fn policy_data(&mut self, theta: &DVector<f64>) -> Result<(u64, &PolicyCache)> {
        let policy = greedy_policy_of(theta, self.features);
        let na = self.mdp.n_actions();
        let id = policy.id(na);
        if !self.cache.contains_key(&id) {
            let behavior = EpsGreedyPolicy::new(policy.clone(), self.cfg.eps, na)?;
            let target = EpsGreedyPolicy::new(policy, self.cfg.eps_prime, na)?;
            let chain = induced_state_chain(self.mdp, &behavior)?;
            let stationary = stationary_distribution_with(&chain, &self.tol)?.dist;
            let ns = self.mdp.n_states();
            self.cache.insert(
                id,
                PolicyCache {
                    stationary,
                    behavior: (0..ns).map(|s| behavior.action_dist(s)).collect(),
                    target: (0..ns).map(|s| target.action_dist(s)).collect(),
                },
            );
        }
        Ok((id, &self.cache[&id]))
    }

    /// Draws `(s, a, s′, a′)` at `θ` and returns `δ φ(s, a)`.
    pub fn step(&mut self, theta: &DVector<f64>, rng: &mut SimRng) -> Result<StepSample> {
        let (mdp, f) = (self.mdp, self.features);
        let (policy_id, data) = self.policy_data(theta)?;
        let s = sample_categorical(rng, &data.stationary);
        let a = sample_categorical(rng, &data.behavior[s]);
        let s2 = sample_categorical(rng, mdp.next_state_dist(s, a));
        let a2 = sample_categorical(rng, &data.target[s2]);
        let td_error = mdp.reward(s, a, s2) + mdp.gamma() * f.value(s2, a2, theta)
            - f.value(s, a, theta);
        Ok(StepSample {
            direction: f.phi(s, a) * td_error,
            state: s,
            action: a,
            next_state: s2,
            next_action: a2,
            td_error,
            policy_id,
        })
    }

    /// Greedy policy id at `θ`.
    pub fn policy_id(&self, theta: &DVector<f64>) -> u64 {
        greedy_policy_of(theta, self.features).id(self.mdp.n_actions())
    }

    pub fn run(&mut self, run: &SaRun) -> Result<SaTrajectory> {
        run.validate()?;
        if run.theta0.len() != self.features.dim() {
            return Err(invalid(format!(
                "theta0 has dimension {}, features have {}",
                run.theta0.len(),
                self.features.dim()
            )));
        }
        let mut rng = seeded_rng(run.seed);
        let divergence = self.tol.divergence;
        let (features, na) = (self.features, self.mdp.n_actions());
        run_iteration(
            run,
            |theta, _| {
                let sample = self.step(theta, &mut rng)?;
                Ok((sample.direction, sample.policy_id))
            },
            |theta| greedy_policy_of(theta, features).id(na),
            divergence,
        )
    }
}

/// Drives `θ_{n+1} = θ_n + α_n · direction(θ_n)` and accumulates the summary.
pub(crate) fn run_iteration(
    run: &SaRun,
    mut direction: impl FnMut(&DVector<f64>, u64) -> Result<(DVector<f64>, u64)>,
    mut label: impl FnMut(&DVector<f64>) -> u64,
    divergence: f64,
) -> Result<SaTrajectory> {
    let n = run.n_iters;
    let tail_len = ((n as f64) * 0.05).ceil().max(1.0) as u64;
    let mut theta = DVector::from_column_slice(&run.theta0);
    let d = theta.len();
    let mut traj = SaTrajectory {
        indices: Vec::new(),
        thetas: Vec::new(),
        policy_ids: Vec::new(),
        alphas: Vec::new(),
        summary: SaSummary {
            final_theta: Vec::new(),
            tail_mean: vec![0.0; d],
            tail_len,
            region_switches: 0,
            max_norm: theta.norm(),
        },
    };
    let mut tail_sum = DVector::zeros(d);
    let mut current_label = label(&theta);
    for i in 0..n {
        let alpha = run.schedule.alpha(i);
        let (dir, lbl) = direction(&theta, i)?;
        if i % run.record_stride == 0 {
            traj.indices.push(i);
            traj.thetas.push(theta.iter().copied().collect());
            traj.policy_ids.push(lbl);
            traj.alphas.push(alpha);
        }
        theta.axpy(alpha, &dir, 1.0);
        let norm = theta.norm();
        if !norm.is_finite() || norm > divergence {
            return Err(Error::NonFinite { iter: i + 1, norm });
        }
        traj.summary.max_norm = traj.summary.max_norm.max(norm);
        let next_label = label(&theta);
        if next_label != current_label {
            traj.summary.region_switches += 1;
            current_label = next_label;
        }
        if i + 1 > n - tail_len {
            tail_sum += &theta;
        }
    }
    traj.summary.final_theta = theta.iter().copied().collect();
    traj.summary.tail_mean = (tail_sum / tail_len as f64).iter().copied().collect();
    Ok(traj)
}

/// Runs several configurations on scoped threads; output order matches input.
pub fn run_many(mdp: &FiniteMdp, features: &FeatureMap, runs: &[SaRun]) -> Vec<Result<SaTrajectory>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|run| {
                scope.spawn(move || SaModel::new(mdp, features, run.cfg)?.run(run))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

/// Configuration, seed and outcome of one run; enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub fixture_name: String,
    pub fixture_sha256: String,
    pub run: SaRun,
    pub robbins_monro: bool,
    pub summary: SaSummary,
}

impl RunManifest {
    pub fn new(fixture_name: &str, fixture_sha256: &str, run: &SaRun, summary: &SaSummary) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            fixture_name: fixture_name.to_string(),
            fixture_sha256: fixture_sha256.to_string(),
            run: run.clone(),
            robbins_monro: run.schedule.is_robbins_monro(),
            summary: summary.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatterReport {
    pub window: usize,
    pub switches_per_window: Vec<u64>,
    /// Max pairwise distance among iterates in each window.
    pub dispersion_per_window: Vec<f64>,
    pub tail_dispersion: f64,
    pub policy_chattering: bool,
    pub parameter_chattering: bool,
}

/// Heuristic chattering diagnostics over consecutive windows of a stride-1
/// trajectory. Policy chattering: the last window still switches at least
/// half as often as the busiest earlier window. Parameter chattering: the
/// last window's dispersion exceeds half that of the middle window.
pub fn chatter_report(traj: &SaTrajectory, window: usize) -> Result<ChatterReport> {
    if window == 0 {
        return Err(invalid("window must be positive"));
    }
    if traj.indices.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(invalid("chatter analysis needs a stride-1 trajectory"));
    }
    let mut switches = Vec::new();
    let mut dispersion = Vec::new();
    for (w, chunk) in traj.thetas.chunks(window).enumerate() {
        let ids = &traj.policy_ids[w * window..w * window + chunk.len()];
        switches.push(ids.windows(2).filter(|p| p[0] != p[1]).count() as u64);
        dispersion.push(max_pairwise_distance(chunk));
    }
    let tail_dispersion = dispersion.last().copied().unwrap_or(0.0);
    let last_switches = switches.last().copied().unwrap_or(0);
    let earlier_max = switches[..switches.len().saturating_sub(1)].iter().copied().max().unwrap_or(0);
    let policy_chattering = last_switches > 0 && 2 * last_switches >= earlier_max;
    let mid = dispersion.get(dispersion.len() / 2).copied().unwrap_or(0.0);
    let parameter_chattering = tail_dispersion > 0.0 && tail_dispersion > 0.5 * mid;
    Ok(ChatterReport {
        window,
        switches_per_window: switches,
        dispersion_per_window: dispersion,
        tail_dispersion,
        policy_chattering,
        parameter_chattering,
    })
}

fn max_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            best = best.max(d);
        }
    }
    best
}
