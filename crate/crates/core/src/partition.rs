//! Greedy regions `P_a = {θ : a(s) = argmax_a φᵀ(s,a)θ ∀s}` and their
//! arrangement in parameter space.
//!
//! Ties in the argmax go to the smallest action index, which makes region
//! membership a total function: every θ belongs to exactly one region, and
//! points on a boundary belong to the region whose policy is
//! lexicographically smallest among the tied ones.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::DeterministicPolicy;

/// Rays closer than this (radians) are treated as the same boundary ray.
const RAY_MERGE_ANGLE: f64 = 1e-12;

/// Feature matrix `Φ` with rows indexed by `s·|A| + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
    n_states: usize,
    n_actions: usize,
}

impl FeatureMap {
    pub fn new(phi: DMatrix<f64>, n_states: usize, n_actions: usize) -> Result<Self> {
        if phi.nrows() != n_states * n_actions {
            return Err(invalid(format!(
                "feature matrix has {} rows, expected {}",
                phi.nrows(),
                n_states * n_actions
            )));
        }
        if phi.ncols() == 0 {
            return Err(invalid("feature dimension must be positive"));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(invalid("features must be finite"));
        }
        Ok(Self {
            phi,
            n_states,
            n_actions,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(crate::linalg::from_rows(rows)?, n_states, n_actions)
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    #[inline]
    pub fn row_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// `φ(s, a)` as an owned vector.
    pub fn phi(&self, s: usize, a: usize) -> DVector<f64> {
        self.phi.row(self.row_index(s, a)).transpose()
    }

    /// `φᵀ(s, a) θ`.
    #[inline]
    pub fn value(&self, s: usize, a: usize, theta: &DVector<f64>) -> f64 {
        let row = self.row_index(s, a);
        (0..self.dim()).map(|j| self.phi[(row, j)] * theta[j]).sum()
    }
}

/// Greedy policy of `θ`; exact ties go to the smallest action index.
pub fn greedy_policy_of(theta: &DVector<f64>, features: &FeatureMap) -> DeterministicPolicy {
    let actions = (0..features.n_states())
        .map(|s| greedy_action(theta, features, s))
        .collect();
    DeterministicPolicy::new(actions, features.n_actions()).expect("argmax is in range")
}

pub(crate) fn greedy_action(theta: &DVector<f64>, features: &FeatureMap, s: usize) -> usize {
    let mut best = 0;
    let mut best_q = features.value(s, 0, theta);
    for a in 1..features.n_actions() {
        let q = features.value(s, a, theta);
        if q > best_q {
            best = a;
            best_q = q;
        }
    }
    best
}

/// One defining inequality `wᵀθ > 0` of a greedy region, where
/// `w = φ(s, winner) − φ(s, loser)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub state: usize,
    pub winner: usize,
    pub loser: usize,
    pub normal: Vec<f64>,
}

impl Halfspace {
    pub fn eval(&self, theta: &DVector<f64>) -> f64 {
        self.normal.iter().zip(theta.iter()).map(|(w, t)| w * t).sum()
    }
}

/// Angular sector `[start, end]` (radians, counter-clockwise) of a 2-D cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub start: f64,
    pub end: f64,
}

impl Sector {
    pub fn is_full_plane(&self) -> bool {
        self.end - self.start >= TAU
    }

    pub fn mid_direction(&self) -> [f64; 2] {
        let mid = 0.5 * (self.start + self.end);
        [mid.cos(), mid.sin()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRegion {
    pub policy: DeterministicPolicy,
    pub halfspaces: Vec<Halfspace>,
    /// Action pairs with identical features; they carry no geometry and are
    /// resolved by index order alone.
    pub degenerate: Vec<(usize, usize, usize)>,
    pub empty: bool,
    /// Angular extent, known only for exact 2-D enumeration.
    pub sector: Option<Sector>,
}

impl GreedyRegion {
    pub fn for_policy(policy: DeterministicPolicy, features: &FeatureMap) -> Self {
        let mut halfspaces = Vec::new();
        let mut degenerate = Vec::new();
        for s in 0..features.n_states() {
            let winner = policy.action(s);
            let phi_w = features.phi(s, winner);
            for loser in (0..features.n_actions()).filter(|&a| a != winner) {
                let normal = &phi_w - features.phi(s, loser);
                if normal.iter().all(|&v| v == 0.0) {
                    degenerate.push((s, winner, loser));
                } else {
                    halfspaces.push(Halfspace {
                        state: s,
                        winner,
                        loser,
                        normal: normal.iter().copied().collect(),
                    });
                }
            }
        }
        let empty = degenerate.iter().any(|&(_, w, l)| w > l);
        Self {
            policy,
            halfspaces,
            degenerate,
            empty,
            sector: None,
        }
    }

    /// Membership under the tie-break rule: strict inequalities, with exact
    /// ties accepted only when the winner has the smaller index.
    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        !self.empty
            && self.halfspaces.iter().all(|h| {
                let v = h.eval(theta);
                v > 0.0 || (v == 0.0 && h.winner < h.loser)
            })
    }

    /// Every defining inequality holds with margin `tol` (distance units).
    pub fn contains_interior(&self, theta: &DVector<f64>, tol: f64) -> bool {
        !self.empty
            && self
                .halfspaces
                .iter()
                .all(|h| h.eval(theta) > tol * norm(&h.normal))
    }

    /// `θ` is within distance `tol` of the closed region.
    pub fn contains_closure(&self, theta: &DVector<f64>, tol: f64) -> bool {
        !self.empty
            && self
                .halfspaces
                .iter()
                .all(|h| h.eval(theta) >= -tol * norm(&h.normal))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Two regions sharing a (d−1)-dimensional boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    pub regions: (usize, usize),
    /// Unit normal of the shared boundary, with `wᵀθ > 0` on `regions.0`'s side.
    pub normal: Vec<f64>,
    /// Unit directions of the shared boundary rays (2-D only).
    pub rays: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumerationMethod {
    Exact2d,
    Sampled { n_dirs: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDiagram {
    /// Nonempty regions ordered by policy id.
    pub regions: Vec<GreedyRegion>,
    pub adjacency: Vec<Adjacency>,
    /// True when produced by direction sampling (a lower bound on the region set).
    pub approximate: bool,
    pub n_actions: usize,
}

/// Shared boundary of two adjacent regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub normal: DVector<f64>,
    /// `(state, action in r1, action in r2)` for each state whose greedy action flips.
    pub witnesses: Vec<(usize, usize, usize)>,
}

impl PartitionDiagram {
    pub fn region_index(&self, policy: &DeterministicPolicy) -> Option<usize> {
        self.regions
            .binary_search_by(|r| r.policy.id(self.n_actions).cmp(&policy.id(self.n_actions)))
            .ok()
    }

    /// Region containing `θ`, or `None` when its policy was not found by an
    /// approximate enumeration.
    pub fn region_of(&self, theta: &DVector<f64>, features: &FeatureMap) -> Option<usize> {
        self.region_index(&greedy_policy_of(theta, features))
    }

    pub fn policy_id(&self, region: usize) -> u64 {
        self.regions[region].policy.id(self.n_actions)
    }

    pub fn adjacency_between(&self, r1: usize, r2: usize) -> Option<&Adjacency> {
        self.adjacency
            .iter()
            .find(|a| a.regions == (r1, r2) || a.regions == (r2, r1))
    }

    /// Normal of the boundary shared by `r1` and `r2`, oriented so that
    /// `wᵀθ > 0` on `r1`'s side, plus the states whose action flips.
    pub fn boundary_between(&self, r1: usize, r2: usize, features: &FeatureMap) -> Result<Boundary> {
        if r1 == r2 || r1 >= self.regions.len() || r2 >= self.regions.len() {
            return Err(Error::NotAdjacent(r1, r2));
        }
        let adj = self.adjacency_between(r1, r2).ok_or(Error::NotAdjacent(r1, r2))?;
        let (p1, p2) = (&self.regions[r1].policy, &self.regions[r2].policy);
        let witnesses: Vec<_> = (0..p1.n_states())
            .filter(|&s| p1.action(s) != p2.action(s))
            .map(|s| (s, p1.action(s), p2.action(s)))
            .collect();
        let from_features = witnesses.iter().find_map(|&(s, a1, a2)| {
            let w = features.phi(s, a1) - features.phi(s, a2);
            let n = w.norm();
            (n > 0.0).then(|| w / n)
        });
        let normal = match from_features {
            Some(w) => w,
            None => {
                let w = DVector::from_column_slice(&adj.normal);
                if adj.regions.0 == r1 {
                    w
                } else {
                    -w
                }
            }
        };
        Ok(Boundary { normal, witnesses })
    }

    /// Policy ids over a regular grid, row-major in `y` then `x`.
    pub fn raster(&self, features: &FeatureMap, grid: &RasterGrid) -> Result<Vec<(f64, f64, u64)>> {
        if features.dim() != 2 {
            return Err(Error::UnsupportedDimension {
                expected: 2,
                got: features.dim(),
            });
        }
        grid.validate()?;
        let mut out = Vec::with_capacity(grid.n * grid.n);
        for j in 0..grid.n {
            let y = grid.coord(grid.ymin, grid.ymax, j);
            for i in 0..grid.n {
                let x = grid.coord(grid.xmin, grid.xmax, i);
                let pol = greedy_policy_of(&DVector::from_vec(vec![x, y]), features);
                out.push((x, y, pol.id(self.n_actions)));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub n: usize,
}

impl RasterGrid {
    fn validate(&self) -> Result<()> {
        if self.n < 2 || !(self.xmax > self.xmin) || !(self.ymax > self.ymin) {
            return Err(invalid("raster grid needs n ≥ 2 and non-empty ranges"));
        }
        Ok(())
    }

    fn coord(&self, lo: f64, hi: f64, i: usize) -> f64 {
        lo + (hi - lo) * i as f64 / (self.n - 1) as f64
    }
}

pub fn enumerate_regions(features: &FeatureMap, method: EnumerationMethod) -> Result<PartitionDiagram> {
    match method {
        EnumerationMethod::Exact2d => exact_2d(features),
        EnumerationMethod::Sampled { n_dirs, seed } => sampled(features, n_dirs, seed),
    }
}

fn exact_2d(features: &FeatureMap) -> Result<PartitionDiagram> {
    if features.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            expected: 2,
            got: features.dim(),
        });
    }
    let n_actions = features.n_actions();

    let mut angles = Vec::new();
    for s in 0..features.n_states() {
        for a in 0..n_actions {
            for b in a + 1..n_actions {
                let w = features.phi(s, a) - features.phi(s, b);
                if w.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let ray = w[0].atan2(-w[1]);
                angles.push(ray.rem_euclid(TAU));
                angles.push((ray + std::f64::consts::PI).rem_euclid(TAU));
            }
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|b, a| *b - *a <= RAY_MERGE_ANGLE);
    if angles.len() > 1 && angles[0] + TAU - angles[angles.len() - 1] <= RAY_MERGE_ANGLE {
        angles.pop();
    }

    let direction = |t: f64| DVector::from_vec(vec![t.cos(), t.sin()]);

    if angles.is_empty() {
        let policy = greedy_policy_of(&direction(0.0), features);
        let mut region = GreedyRegion::for_policy(policy, features);
        region.sector = Some(Sector { start: 0.0, end: TAU });
        return Ok(PartitionDiagram {
            regions: vec![region],
            adjacency: Vec::new(),
            approximate: false,
            n_actions,
        });
    }

    let m = angles.len();
    let sectors: Vec<(Sector, DeterministicPolicy)> = (0..m)
        .map(|i| {
            let start = angles[i];
            let end = if i + 1 < m { angles[i + 1] } else { angles[0] + TAU };
            let sector = Sector { start, end };
            let [x, y] = sector.mid_direction();
            (sector, greedy_policy_of(&DVector::from_vec(vec![x, y]), features))
        })
        .collect();

    // Rotate so that the walk starts where the policy changes, then merge runs.
    let Some(first) = (0..m).find(|&i| sectors[i].1 != sectors[(i + m - 1) % m].1) else {
        let mut region = GreedyRegion::for_policy(sectors[0].1.clone(), features);
        region.sector = Some(Sector { start: 0.0, end: TAU });
        return Ok(PartitionDiagram {
            regions: vec![region],
            adjacency: Vec::new(),
            approximate: false,
            n_actions,
        });
    };
    let mut cones: Vec<(Sector, DeterministicPolicy)> = Vec::new();
    for k in 0..m {
        let (sector, policy) = &sectors[(first + k) % m];
        let sector = if (first + k) % m < first {
            Sector {
                start: sector.start + TAU,
                end: sector.end + TAU,
            }
        } else {
            *sector
        };
        match cones.last_mut() {
            Some((last, p)) if p == policy => last.end = sector.end,
            _ => cones.push((sector, policy.clone())),
        }
    }

    // Regions are convex, so each policy must own a single cone.
    let mut order: Vec<usize> = (0..cones.len()).collect();
    order.sort_by_key(|&i| cones[i].1.id(n_actions));
    if order
        .windows(2)
        .any(|w| cones[w[0]].1 == cones[w[1]].1)
    {
        return Err(Error::Numerical(
            "a greedy region split into several cones".into(),
        ));
    }
    let mut index_of_cone = vec![0; cones.len()];
    for (new, &old) in order.iter().enumerate() {
        index_of_cone[old] = new;
    }
    let regions: Vec<GreedyRegion> = order
        .iter()
        .map(|&i| {
            let (sector, policy) = &cones[i];
            let mut region = GreedyRegion::for_policy(policy.clone(), features);
            region.sector = Some(*sector);
            region
        })
        .collect();

    let mut adjacency: Vec<Adjacency> = Vec::new();
    let c = cones.len();
    for k in 0..c {
        let before = index_of_cone[k];
        let after = index_of_cone[(k + 1) % c];
        let t = cones[(k + 1) % c].0.start;
        let ray = vec![t.cos(), t.sin()];
        // Rotating the ray clockwise points into the sector before it.
        let normal_before = vec![ray[1], -ray[0]];
        if let Some(adj) = adjacency
            .iter_mut()
            .find(|a| a.regions == (before, after) || a.regions == (after, before))
        {
            adj.rays.push(ray);
        } else {
            let (regions, normal) = if before < after {
                ((before, after), normal_before)
            } else {
                ((after, before), normal_before.iter().map(|v| -v).collect())
            };
            adjacency.push(Adjacency {
                regions,
                normal,
                rays: vec![ray],
            });
        }
    }
    adjacency.sort_by_key(|a| a.regions);

    Ok(PartitionDiagram {
        regions,
        adjacency,
        approximate: false,
        n_actions,
    })
}

fn sampled(features: &FeatureMap, n_dirs: usize, seed: u64) -> Result<PartitionDiagram> {
    if n_dirs == 0 {
        return Err(invalid("sampled enumeration needs at least one direction"));
    }
    let d = features.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policies = std::collections::BTreeMap::new();
    if d == 2 {
        let offset: f64 = rng.gen();
        for k in 0..n_dirs {
            let t = TAU * (k as f64 + offset) / n_dirs as f64;
            let pol = greedy_policy_of(&DVector::from_vec(vec![t.cos(), t.sin()]), features);
            policies.entry(pol.id(features.n_actions())).or_insert(pol);
        }
    } else {
        for _ in 0..n_dirs {
            let dir = gaussian_direction(&mut rng, d);
            let pol = greedy_policy_of(&dir, features);
            policies.entry(pol.id(features.n_actions())).or_insert(pol);
        }
    }
    Ok(PartitionDiagram {
        regions: policies
            .into_values()
            .map(|p| GreedyRegion::for_policy(p, features))
            .collect(),
        adjacency: Vec::new(),
        approximate: true,
        n_actions: features.n_actions(),
    })
}

/// Uniform direction on the sphere via Box–Muller normals.
fn gaussian_direction(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    let mut i = 0;
    while i < d {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        v[i] = r * (TAU * u2).cos();
        if i + 1 < d {
            v[i + 1] = r * (TAU * u2).sin();
        }
        i += 2;
    }
    let n = v.norm();
    if n == 0.0 {
        v[0] = 1.0;
        v
    } else {
        v / n
    }
}
