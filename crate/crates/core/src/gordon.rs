//! Gordon's chattering example: SARSA(0) on an absorbing MDP, written as a
//! per-trajectory iteration in `R³`.
//!
//! Coordinates are `(θ¹, θ², θ³) = (Q_U, Q_L, Q_A)`. The Bernoulli variable
//! `U_n` selects the upper branch with probability `1 − ε` when `θ² ≤ θ¹` and
//! with probability `ε` otherwise, so the upper affine piece governs the
//! half-space `θ¹ ≥ θ²`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{invalid, Error, Result};
use crate::field::{FieldBoundary, PiecewiseAffineField};
use crate::linalg;
use crate::sim::{run_iteration, seeded_rng, SaRun, SaTrajectory, SimRng, StepSizeSchedule};

/// Region index of the upper piece (`θ¹ ≥ θ²`).
pub const UPPER: usize = 0;
/// Region index of the lower piece (`θ¹ < θ²`).
pub const LOWER: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GordonSystem {
    pub eps: f64,
    pub a_u: DMatrix<f64>,
    pub a_l: DMatrix<f64>,
    pub b_u: DVector<f64>,
    pub b_l: DVector<f64>,
    /// Unnormalized boundary normal `(1, −1, 0)`.
    pub w: DVector<f64>,
}

impl GordonSystem {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(invalid(format!("exploration {eps} outside (0, 1/2)")));
        }
        #[rustfmt::skip]
        let a_u = DMatrix::from_row_slice(3, 3, &[
            1.0 - eps, 0.0, eps - 1.0,
            0.0,       eps, -eps,
            0.0,       0.0, 1.0,
        ]);
        #[rustfmt::skip]
        let a_l = DMatrix::from_row_slice(3, 3, &[
            eps, 0.0,       -eps,
            0.0, 1.0 - eps, eps - 1.0,
            0.0, 0.0,       1.0,
        ]);
        Ok(Self {
            eps,
            a_u,
            a_l,
            b_u: DVector::from_column_slice(&[0.0, 0.0, 2.0 - eps]),
            b_l: DVector::from_column_slice(&[0.0, 0.0, 1.0 + eps]),
            w: DVector::from_column_slice(&[1.0, -1.0, 0.0]),
        })
    }

    pub fn side(&self, theta: &DVector<f64>) -> usize {
        if theta[1] <= theta[0] {
            UPPER
        } else {
            LOWER
        }
    }

    /// Probability that `U_n = 1` at `θ`.
    pub fn upper_probability(&self, theta: &DVector<f64>) -> f64 {
        match self.side(theta) {
            UPPER => 1.0 - self.eps,
            _ => self.eps,
        }
    }

    pub fn piece(&self, region: usize) -> (&DMatrix<f64>, &DVector<f64>) {
        match region {
            UPPER => (&self.a_u, &self.b_u),
            _ => (&self.a_l, &self.b_l),
        }
    }

    /// `b_θ − A_θ θ` with the piece chosen by the side of `θ`.
    pub fn mean_drift(&self, theta: &DVector<f64>) -> DVector<f64> {
        let (a, b) = self.piece(self.side(theta));
        b - a * theta
    }

    pub fn drift_of(&self, region: usize, theta: &DVector<f64>) -> DVector<f64> {
        let (a, b) = self.piece(region);
        b - a * theta
    }
}

fn check_dim(theta: &DVector<f64>) -> Result<()> {
    if theta.len() != 3 {
        return Err(Error::UnsupportedDimension {
            expected: 3,
            got: theta.len(),
        });
    }
    Ok(())
}

/// One update direction `δ_n` drawn at `θ`.
pub fn gordon_step(theta: &DVector<f64>, rng: &mut SimRng, sys: &GordonSystem) -> DVector<f64> {
    let u: f64 = rng.gen();
    if u < sys.upper_probability(theta) {
        DVector::from_column_slice(&[theta[2] - theta[0], 0.0, 2.0 - theta[2]])
    } else {
        DVector::from_column_slice(&[0.0, theta[2] - theta[1], 1.0 - theta[2]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GordonLandmarks {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper_residual: f64,
    pub lower_residual: f64,
}

/// Solves both affine pieces and confirms the diagonal closed forms.
pub fn gordon_landmarks(sys: &GordonSystem) -> Result<GordonLandmarks> {
    let tol = Tolerances::default();
    let solve = |a: &DMatrix<f64>, b: &DVector<f64>, c: f64, name: &str| -> Result<(DVector<f64>, f64)> {
        let x = linalg::solve(a, b, &tol).ok_or_else(|| Error::SingularDynamics { policy: name.into() })?;
        let residual = (a * &x - b).norm();
        if x.iter().any(|v| (v - c).abs() > 1e-9) || sys.w.dot(&x).abs() > 1e-9 {
            return Err(Error::Numerical(format!(
                "{name} landmark {:?} is not the diagonal point {c}",
                x.as_slice()
            )));
        }
        Ok((x, residual))
    };
    let (upper, upper_residual) = solve(&sys.a_u, &sys.b_u, 2.0 - sys.eps, "upper")?;
    let (lower, lower_residual) = solve(&sys.a_l, &sys.b_l, 1.0 + sys.eps, "lower")?;
    Ok(GordonLandmarks {
        upper: upper.iter().copied().collect(),
        lower: lower.iter().copied().collect(),
        upper_residual,
        lower_residual,
    })
}

/// Diagonal points `(η, η, η)` with `η ∈ [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalSegment {
    pub lo: f64,
    pub hi: f64,
}

impl DiagonalSegment {
    pub fn contains(&self, eta: f64, slack: f64) -> bool {
        eta >= self.lo - slack && eta <= self.hi + slack
    }
}

pub fn gordon_equilibrium_segment(sys: &GordonSystem) -> DiagonalSegment {
    DiagonalSegment {
        lo: 1.0 + sys.eps,
        hi: 2.0 - sys.eps,
    }
}

/// Distance from the origin to `co{b_U − A_U θ, b_L − A_L θ}`.
pub fn hull_distance_to_zero(sys: &GordonSystem, theta: &DVector<f64>) -> f64 {
    let fu = sys.drift_of(UPPER, theta);
    let fl = sys.drift_of(LOWER, theta);
    let diff = &fu - &fl;
    let dd = diff.norm_squared();
    let lambda = if dd == 0.0 {
        0.0
    } else {
        (-fl.dot(&diff) / dd).clamp(0.0, 1.0)
    };
    (fl + diff * lambda).norm()
}

pub fn hull_contains_zero(sys: &GordonSystem, theta: &DVector<f64>, tol: f64) -> bool {
    hull_distance_to_zero(sys, theta) <= tol
}

/// `η` of the nearest diagonal point and the distance to it.
pub fn diagonal_projection(theta: &[f64]) -> (f64, f64) {
    let eta = theta.iter().sum::<f64>() / theta.len() as f64;
    let dist = theta.iter().map(|v| (v - eta) * (v - eta)).sum::<f64>().sqrt();
    (eta, dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GordonRun {
    pub theta0: Vec<f64>,
    pub n_iters: u64,
    pub seed: u64,
    pub schedule: StepSizeSchedule,
    pub record_stride: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GordonRunResult {
    pub trajectory: SaTrajectory,
    pub tail_eta: f64,
    pub tail_diagonal_distance: f64,
    pub tail_in_segment: bool,
}

/// Iterates `θ_{n+1} = θ_n + α_n δ_n`. Policy ids record the side:
/// `0` upper, `1` lower.
pub fn gordon_run(sys: &GordonSystem, run: &GordonRun) -> Result<GordonRunResult> {
    let theta0 = DVector::from_column_slice(&run.theta0);
    check_dim(&theta0)?;
    let sa = SaRun {
        theta0: run.theta0.clone(),
        n_iters: run.n_iters,
        seed: run.seed,
        cfg: crate::dynamics::AlgorithmConfig::sarsa(sys.eps)?,
        schedule: run.schedule,
        record_stride: run.record_stride,
    };
    sa.validate()?;
    let mut rng = seeded_rng(run.seed);
    let trajectory = run_iteration(
        &sa,
        |theta, _| Ok((gordon_step(theta, &mut rng, sys), sys.side(theta) as u64)),
        |theta| sys.side(theta) as u64,
        Tolerances::default().divergence,
    )?;
    let (tail_eta, tail_diagonal_distance) = diagonal_projection(&trajectory.summary.tail_mean);
    let tail_in_segment = gordon_equilibrium_segment(sys).contains(tail_eta, 0.0);
    Ok(GordonRunResult {
        trajectory,
        tail_eta,
        tail_diagonal_distance,
        tail_in_segment,
    })
}

/// The two-piece inclusion across `H = {θ¹ = θ²}` in the generic field form.
#[derive(Debug, Clone)]
pub struct GordonField {
    pub sys: GordonSystem,
    boundaries: Vec<FieldBoundary>,
    tol: Tolerances,
}

impl GordonField {
    pub fn new(sys: GordonSystem) -> Self {
        let boundaries = vec![FieldBoundary {
            regions: (UPPER, LOWER),
            normal: sys.w.normalize(),
            rays: Vec::new(),
        }];
        Self {
            sys,
            boundaries,
            tol: Tolerances::default(),
        }
    }

    fn signed_distance(&self, theta: &DVector<f64>) -> f64 {
        self.boundaries[0].normal.dot(theta)
    }
}

impl PiecewiseAffineField for GordonField {
    fn dim(&self) -> usize {
        3
    }

    fn n_regions(&self) -> usize {
        2
    }

    fn region_of(&self, theta: &DVector<f64>) -> Option<usize> {
        Some(self.sys.side(theta))
    }

    fn regions_near(&self, theta: &DVector<f64>, tol: f64) -> Vec<usize> {
        let s = self.signed_distance(theta);
        if s.abs() <= tol {
            vec![UPPER, LOWER]
        } else if s > 0.0 {
            vec![UPPER]
        } else {
            vec![LOWER]
        }
    }

    fn affine(&self, region: usize) -> (&DMatrix<f64>, &DVector<f64>) {
        self.sys.piece(region)
    }

    fn boundaries(&self) -> &[FieldBoundary] {
        &self.boundaries
    }

    fn region_interior_contains(&self, region: usize, theta: &DVector<f64>, tol: f64) -> bool {
        self.boundaries[0].side(region) * self.signed_distance(theta) > tol
    }

    fn region_label(&self, region: usize) -> String {
        match region {
            UPPER => "U".into(),
            _ => "L".into(),
        }
    }

    fn tolerances(&self) -> &Tolerances {
        &self.tol
    }
}
