//! Numeric tolerances shared by every module.

use serde::{Deserialize, Serialize};

/// All tolerance constants in one place so callers (and tests) can tighten them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Row sums of transition kernels and policy tables.
    pub prob_sum: f64,
    /// Unit-sum tolerance and `‖dᵀM − dᵀ‖∞` bound for stationary distributions.
    pub stationary: f64,
    /// Stationary entries at or below this are treated as zero (reducible chain).
    pub ergodic_min: f64,
    /// Relative singular-value cutoff for rank and null-space decisions.
    pub rank: f64,
    /// Linear solves must satisfy `‖Ax − b‖ ≤ solve_residual · (1 + ‖b‖)`.
    pub solve_residual: f64,
    /// Distance below which a point counts as lying on a region boundary.
    pub boundary: f64,
    /// Maximum norm of the witnessed drift combination at an equilibrium.
    pub equilibrium_residual: f64,
    /// Maximum `|wᵀθ|` while sliding.
    pub sliding: f64,
    /// Number of subintervals in the sign scan of `g(λ)`.
    pub root_scan: usize,
    /// Bisection width for roots of `g(λ)`.
    pub root_bisect: f64,
    /// Offset used when probing one-sided drifts around a boundary equilibrium.
    pub classify_offset: f64,
    /// Iterates with norm beyond this abort a stochastic run.
    pub divergence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            prob_sum: 1e-12,
            stationary: 1e-10,
            ergodic_min: 1e-12,
            rank: 1e-12,
            solve_residual: 1e-10,
            boundary: 1e-9,
            equilibrium_residual: 1e-8,
            sliding: 1e-8,
            root_scan: 1000,
            root_bisect: 1e-12,
            classify_offset: 1e-6,
            divergence: 1e9,
        }
    }
}
