//! The limiting differential inclusion `θ̇ ∈ h(θ)`: set-valued evaluation,
//! boundary equilibria and the limiting-structure taxonomy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::dynamics::{build_piece_with, AlgorithmConfig, PieceDynamics};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{DeterministicPolicy, FiniteMdp};
use crate::partition::{enumerate_regions, EnumerationMethod, FeatureMap, PartitionDiagram};

/// Hyperplane boundary `{θ : wᵀθ = 0}` shared by two regions.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBoundary {
    pub regions: (usize, usize),
    /// Unit normal, `wᵀθ > 0` on `regions.0`'s side.
    pub normal: DVector<f64>,
    /// Unit directions spanning the shared face (2-D cones). Empty means the
    /// whole hyperplane is shared.
    pub rays: Vec<DVector<f64>>,
}

impl FieldBoundary {
    /// `θ` (assumed on the hyperplane) lies on the shared face.
    pub fn face_contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.rays.is_empty() || self.rays.iter().any(|u| u.dot(theta) >= -tol)
    }

    pub fn project(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta - &self.normal * self.normal.dot(theta)
    }

    /// Orientation of `region` relative to the normal: `+1` for `regions.0`.
    pub fn side(&self, region: usize) -> f64 {
        if region == self.regions.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn other(&self, region: usize) -> usize {
        if region == self.regions.0 {
            self.regions.1
        } else {
            self.regions.0
        }
    }
}

/// A piecewise-affine vector field `f(θ) = b_r − A_r θ` on a conic partition.
pub trait PiecewiseAffineField {
    fn dim(&self) -> usize;
    fn n_regions(&self) -> usize;
    /// Owning region under the tie-break rule.
    fn region_of(&self, theta: &DVector<f64>) -> Option<usize>;
    /// Regions whose closure is within distance `tol` of `θ`.
    fn regions_near(&self, theta: &DVector<f64>, tol: f64) -> Vec<usize>;
    fn affine(&self, region: usize) -> (&DMatrix<f64>, &DVector<f64>);
    fn boundaries(&self) -> &[FieldBoundary];
    fn region_interior_contains(&self, region: usize, theta: &DVector<f64>, tol: f64) -> bool;
    fn region_label(&self, region: usize) -> String;
    fn tolerances(&self) -> &Tolerances;

    /// Fails when boundary analysis (equilibria, sliding) is unsupported.
    fn check_boundary_analysis(&self) -> Result<()> {
        Ok(())
    }

    fn drift(&self, region: usize, theta: &DVector<f64>) -> DVector<f64> {
        let (a, b) = self.affine(region);
        b - a * theta
    }

    fn boundary_index(&self, r1: usize, r2: usize) -> Option<usize> {
        self.boundaries()
            .iter()
            .position(|b| b.regions == (r1, r2) || b.regions == (r2, r1))
    }
}

/// Filippov sliding velocity on boundary `k`: the convex combination
/// `λ f₁ + (1 − λ) f₂` with zero normal component. Returns `(λ, velocity)`.
pub fn sliding_velocity<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    k: usize,
    theta: &DVector<f64>,
) -> Option<(f64, DVector<f64>)> {
    let bd = &field.boundaries()[k];
    let f1 = field.drift(bd.regions.0, theta);
    let f2 = field.drift(bd.regions.1, theta);
    let (n1, n2) = (bd.normal.dot(&f1), bd.normal.dot(&f2));
    if n1 == n2 {
        return None;
    }
    let lambda = n2 / (n2 - n1);
    Some((lambda, f1 * lambda + f2 * (1.0 - lambda)))
}

/// Feature-generated inclusion: greedy-region diagram plus one affine piece
/// per realized policy.
#[derive(Debug, Clone)]
pub struct DiField {
    pub features: FeatureMap,
    pub cfg: AlgorithmConfig,
    pub diagram: PartitionDiagram,
    /// Aligned with `diagram.regions`.
    pub pieces: Vec<PieceDynamics>,
    boundaries: Vec<FieldBoundary>,
    tol: Tolerances,
}

/// Direction count used for sampled enumeration when `d ≠ 2`.
pub const SAMPLED_DIRECTIONS: usize = 100_000;

impl DiField {
    pub fn build(mdp: &FiniteMdp, features: &FeatureMap, cfg: &AlgorithmConfig) -> Result<Self> {
        Self::build_with(mdp, features, cfg, Tolerances::default())
    }

    pub fn build_with(
        mdp: &FiniteMdp,
        features: &FeatureMap,
        cfg: &AlgorithmConfig,
        tol: Tolerances,
    ) -> Result<Self> {
        let method = if features.dim() == 2 {
            EnumerationMethod::Exact2d
        } else {
            EnumerationMethod::Sampled {
                n_dirs: SAMPLED_DIRECTIONS,
                seed: 0,
            }
        };
        let diagram = enumerate_regions(features, method)?;
        let pieces = diagram
            .regions
            .iter()
            .map(|r| build_piece_with(mdp, features, &r.policy, cfg, &tol))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(features.clone(), *cfg, diagram, pieces, tol)
    }

    pub fn from_parts(
        features: FeatureMap,
        cfg: AlgorithmConfig,
        diagram: PartitionDiagram,
        pieces: Vec<PieceDynamics>,
        tol: Tolerances,
    ) -> Result<Self> {
        if pieces.len() != diagram.regions.len() {
            return Err(Error::Invalid("one piece per region required".into()));
        }
        let boundaries = diagram
            .adjacency
            .iter()
            .map(|adj| {
                let (r1, r2) = adj.regions;
                let bd = diagram.boundary_between(r1, r2, &features)?;
                Ok(FieldBoundary {
                    regions: (r1, r2),
                    normal: bd.normal,
                    rays: adj
                        .rays
                        .iter()
                        .map(|u| DVector::from_column_slice(u))
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            features,
            cfg,
            diagram,
            pieces,
            boundaries,
            tol,
        })
    }

    pub fn piece(&self, region: usize) -> &PieceDynamics {
        &self.pieces[region]
    }

    pub fn policy(&self, region: usize) -> &DeterministicPolicy {
        &self.diagram.regions[region].policy
    }

    pub fn policy_id(&self, region: usize) -> u64 {
        self.diagram.policy_id(region)
    }
}

impl PiecewiseAffineField for DiField {
    fn dim(&self) -> usize {
        self.features.dim()
    }

    fn n_regions(&self) -> usize {
        self.pieces.len()
    }

    fn region_of(&self, theta: &DVector<f64>) -> Option<usize> {
        self.diagram.region_of(theta, &self.features)
    }

    fn regions_near(&self, theta: &DVector<f64>, tol: f64) -> Vec<usize> {
        let f = &self.features;
        // Candidate actions per state: those whose tie hyperplane with the
        // best action is within `tol` of θ.
        let candidates: Vec<Vec<usize>> = (0..f.n_states())
            .map(|s| {
                let best = crate::partition::greedy_action(theta, f, s);
                let qb = f.value(s, best, theta);
                (0..f.n_actions())
                    .filter(|&a| {
                        if a == best {
                            return true;
                        }
                        let scale = (f.phi(s, best) - f.phi(s, a)).norm();
                        scale == 0.0 || qb - f.value(s, a, theta) <= tol * scale
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; candidates.len()];
        loop {
            let actions = idx.iter().zip(&candidates).map(|(&i, c)| c[i]).collect();
            let pol = DeterministicPolicy::new(actions, f.n_actions()).expect("in range");
            if let Some(r) = self.diagram.region_index(&pol) {
                out.push(r);
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    out.sort_unstable();
                    out.dedup();
                    return out;
                }
                idx[k] += 1;
                if idx[k] < candidates[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn affine(&self, region: usize) -> (&DMatrix<f64>, &DVector<f64>) {
        let p = &self.pieces[region];
        (&p.a, &p.b)
    }

    fn boundaries(&self) -> &[FieldBoundary] {
        &self.boundaries
    }

    fn region_interior_contains(&self, region: usize, theta: &DVector<f64>, tol: f64) -> bool {
        self.diagram.regions[region].contains_interior(theta, tol)
    }

    fn region_label(&self, region: usize) -> String {
        self.policy_id(region).to_string()
    }

    fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    fn check_boundary_analysis(&self) -> Result<()> {
        if self.dim() != 2 {
            return Err(Error::UnsupportedDimension {
                expected: 2,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Interior,
    Boundary,
    Corner,
}

/// Value of `h(θ)`: one drift in a region's interior, the endpoints of the
/// convex hull near a boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldValue {
    pub kind: FieldKind,
    pub regions: Vec<usize>,
    pub drifts: Vec<DVector<f64>>,
}

pub fn evaluate_field<F: PiecewiseAffineField + ?Sized>(field: &F, theta: &DVector<f64>) -> FieldValue {
    let mut regions = field.regions_near(theta, field.tolerances().boundary);
    if regions.is_empty() {
        regions.extend(field.region_of(theta));
    }
    let kind = match regions.len() {
        0 | 1 => FieldKind::Interior,
        2 => FieldKind::Boundary,
        _ => FieldKind::Corner,
    };
    let drifts = regions.iter().map(|&r| field.drift(r, theta)).collect();
    FieldValue {
        kind,
        regions,
        drifts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    InteriorLandmark,
    BoundaryEquilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    Unstable,
    SlidingAttractor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub location: Vec<f64>,
    pub kind: EquilibriumKind,
    pub stability: Stability,
    /// Witness regions; for boundary equilibria `(r1, r2)` of the boundary.
    pub regions: Vec<usize>,
    /// Mixing weight on `regions[0]`'s drift.
    pub lambda: Option<f64>,
    /// Norm of the witnessed drift combination.
    pub residual: f64,
}

/// Continuum of boundary equilibria (`g(λ) ≡ 0` on an interval).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSegment {
    pub regions: (usize, usize),
    pub lambda_range: (f64, f64),
    pub endpoints: (Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCensus {
    pub points: Vec<Equilibrium>,
    pub segments: Vec<EquilibriumSegment>,
}

pub fn find_equilibria<F: PiecewiseAffineField + ?Sized>(field: &F) -> Result<EquilibriumCensus> {
    field.check_boundary_analysis()?;
    let tol = *field.tolerances();
    for r in 0..field.n_regions() {
        let margin = linalg::symmetric_part_min_eigenvalue(field.affine(r).0);
        if margin <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                policy: field.region_label(r),
                margin,
            });
        }
    }

    let mut census = EquilibriumCensus::default();
    for r in 0..field.n_regions() {
        let (a, b) = field.affine(r);
        let Some(x) = linalg::solve(a, b, &tol) else {
            continue;
        };
        if field.region_interior_contains(r, &x, tol.boundary) {
            census.points.push(Equilibrium {
                residual: field.drift(r, &x).norm(),
                location: x.iter().copied().collect(),
                kind: EquilibriumKind::InteriorLandmark,
                stability: Stability::Stable,
                regions: vec![r],
                lambda: None,
            });
        }
    }

    for k in 0..field.boundaries().len() {
        boundary_equilibria(field, k, &tol, &mut census)?;
    }
    Ok(census)
}

/// `θ(λ) = (λA₁ + (1−λ)A₂)⁻¹ (λb₁ + (1−λ)b₂)`.
fn mixed_point<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    k: usize,
    lambda: f64,
    tol: &Tolerances,
) -> Result<DVector<f64>> {
    let bd = &field.boundaries()[k];
    let (a1, b1) = field.affine(bd.regions.0);
    let (a2, b2) = field.affine(bd.regions.1);
    let a = a1 * lambda + a2 * (1.0 - lambda);
    let b = b1 * lambda + b2 * (1.0 - lambda);
    linalg::solve(&a, &b, tol).ok_or_else(|| {
        Error::Numerical(format!("mixed dynamics singular at λ = {lambda}"))
    })
}

fn boundary_equilibria<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    k: usize,
    tol: &Tolerances,
    census: &mut EquilibriumCensus,
) -> Result<()> {
    let bd = &field.boundaries()[k];
    let n = tol.root_scan.max(2);
    let lambdas: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let points = lambdas
        .iter()
        .map(|&l| mixed_point(field, k, l, tol))
        .collect::<Result<Vec<_>>>()?;
    let g: Vec<f64> = points.iter().map(|p| bd.normal.dot(p)).collect();
    let flat: Vec<bool> = points
        .iter()
        .zip(&g)
        .map(|(p, v)| v.abs() <= tol.solve_residual * (1.0 + p.norm()))
        .collect();

    // Runs of vanishing g are continua of equilibria.
    let mut in_segment = vec![false; n + 1];
    let mut i = 0;
    while i <= n {
        if !flat[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i <= n && flat[i] {
            i += 1;
        }
        let end = i - 1;
        if end >= start + 2 {
            in_segment[start..=end].iter_mut().for_each(|v| *v = true);
            census.segments.push(EquilibriumSegment {
                regions: bd.regions,
                lambda_range: (lambdas[start], lambdas[end]),
                endpoints: (
                    points[start].iter().copied().collect(),
                    points[end].iter().copied().collect(),
                ),
            });
        }
    }

    let mut roots = Vec::new();
    for i in 0..=n {
        if in_segment[i] {
            continue;
        }
        if g[i] == 0.0 {
            roots.push(lambdas[i]);
        } else if i < n && !in_segment[i + 1] && g[i + 1] != 0.0 && (g[i] < 0.0) != (g[i + 1] < 0.0) {
            let (mut lo, mut hi, mut glo) = (lambdas[i], lambdas[i + 1], g[i]);
            while hi - lo > tol.root_bisect {
                let mid = 0.5 * (lo + hi);
                let gm = bd.normal.dot(&mixed_point(field, k, mid, tol)?);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == (glo < 0.0) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }

    for lambda in roots {
        let theta = mixed_point(field, k, lambda, tol)?;
        if !bd.face_contains(&theta, tol.boundary * (1.0 + theta.norm())) {
            continue;
        }
        let duplicate = census.points.iter().any(|e| {
            let d: f64 = e
                .location
                .iter()
                .zip(theta.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            d <= tol.equilibrium_residual * (1.0 + theta.norm())
        });
        if duplicate {
            continue;
        }
        let f1 = field.drift(bd.regions.0, &theta);
        let f2 = field.drift(bd.regions.1, &theta);
        let residual = (f1 * lambda + f2 * (1.0 - lambda)).norm();
        census.points.push(Equilibrium {
            location: theta.iter().copied().collect(),
            kind: EquilibriumKind::BoundaryEquilibrium,
            stability: classify_boundary_point(field, k, &theta, tol),
            regions: vec![bd.regions.0, bd.regions.1],
            lambda: Some(lambda),
            residual,
        });
    }
    Ok(())
}

/// Local stability from one-sided normal drifts, plus the tangential
/// behavior of the sliding flow for attracting boundaries.
fn classify_boundary_point<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    k: usize,
    theta: &DVector<f64>,
    tol: &Tolerances,
) -> Stability {
    let bd = &field.boundaries()[k];
    let delta = tol.classify_offset * theta.norm().max(1.0);
    let w = &bd.normal;
    let toward1 = -w.dot(&field.drift(bd.regions.0, &(theta + w * delta)));
    let toward2 = w.dot(&field.drift(bd.regions.1, &(theta - w * delta)));
    if !(toward1 > 0.0 && toward2 > 0.0) {
        return Stability::Unstable;
    }
    for t in tangent_basis(w) {
        let ahead = bd.project(&(theta + &t * delta));
        let behind = bd.project(&(theta - &t * delta));
        let (Some((_, v_ahead)), Some((_, v_behind))) = (
            sliding_velocity(field, k, &ahead),
            sliding_velocity(field, k, &behind),
        ) else {
            return Stability::Unstable;
        };
        if !(t.dot(&v_ahead) < 0.0 && t.dot(&v_behind) > 0.0) {
            return Stability::Unstable;
        }
    }
    Stability::SlidingAttractor
}

/// Orthonormal basis of `w⊥` by Gram–Schmidt on the coordinate axes.
pub(crate) fn tangent_basis(w: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = w.len();
    let mut basis: Vec<DVector<f64>> = vec![w.normalize()];
    for i in 0..d {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        for u in &basis {
            v -= u * u.dot(&v);
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / n);
        }
        if basis.len() == d {
            break;
        }
    }
    basis.remove(0);
    basis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Taxonomy {
    MultipleAttractors,
    SlidingAttractor,
    UniqueInteriorAttractor,
    BoundarySegment,
    Unclassified,
}

impl std::fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Taxonomy::MultipleAttractors => "multiple-attractors",
            Taxonomy::SlidingAttractor => "sliding-attractor",
            Taxonomy::UniqueInteriorAttractor => "unique-interior-attractor",
            Taxonomy::BoundarySegment => "boundary-segment",
            Taxonomy::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

pub fn classify_structure(census: &EquilibriumCensus) -> Taxonomy {
    if !census.segments.is_empty() {
        return Taxonomy::BoundarySegment;
    }
    let stable: Vec<&Equilibrium> = census
        .points
        .iter()
        .filter(|e| e.stability != Stability::Unstable)
        .collect();
    match stable.as_slice() {
        [] => Taxonomy::Unclassified,
        [only] => match only.stability {
            Stability::SlidingAttractor => Taxonomy::SlidingAttractor,
            _ if only.kind == EquilibriumKind::InteriorLandmark => Taxonomy::UniqueInteriorAttractor,
            _ => Taxonomy::Unclassified,
        },
        _ => Taxonomy::MultipleAttractors,
    }
}
