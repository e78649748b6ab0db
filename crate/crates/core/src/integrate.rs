//! Adaptive integration of `θ̇ ∈ h(θ)` with Filippov sliding on region
//! boundaries.
//!
//! Inside a region the flow is the region's affine ODE, stepped with the
//! Dormand–Prince 5(4) pair. Leaving the region triggers a bisection on the
//! step fraction; at the boundary the one-sided normal drifts decide between
//! crossing and sliding. Sliding follows the convex combination of the two
//! drifts with zero normal component and is re-projected onto the boundary
//! after every step.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sliding_velocity, PiecewiseAffineField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "id")]
pub enum Mode {
    /// Flowing inside a region.
    Interior(usize),
    /// Sliding along a boundary (index into the field's boundaries).
    Sliding(usize),
    /// Instant of crossing a boundary.
    Crossing(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub boundary: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Cross,
    EnterSliding,
    ExitSliding,
    /// Touched a boundary tangentially and stayed in the same region.
    Graze,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub modes: Vec<Mode>,
    pub events: Vec<Event>,
}

impl DiTrajectory {
    fn push(&mut self, t: f64, theta: &DVector<f64>, mode: Mode) {
        self.times.push(t);
        self.states.push(theta.iter().copied().collect());
        self.modes.push(mode);
    }

    pub fn terminal(&self) -> DVector<f64> {
        DVector::from_column_slice(self.states.last().expect("trajectory is never empty"))
    }

    /// Flow time of the first entry into sliding mode.
    pub fn first_sliding_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::EnterSliding)
            .map(|e| e.t)
    }

    pub fn crossings(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Cross).count()
    }
}

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub max_steps: usize,
    pub max_bisections: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            max_steps: 2_000_000,
            max_bisections: 200,
        }
    }
}

pub fn integrate_di<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    theta0: &DVector<f64>,
    t_end: f64,
    tol: f64,
) -> Result<DiTrajectory> {
    integrate_di_with(field, theta0, t_end, tol, &IntegratorOptions::default())
}

pub fn integrate_di_with<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    theta0: &DVector<f64>,
    t_end: f64,
    tol: f64,
    opts: &IntegratorOptions,
) -> Result<DiTrajectory> {
    if theta0.len() != field.dim() {
        return Err(Error::Invalid(format!(
            "initial point has dimension {}, field has {}",
            theta0.len(),
            field.dim()
        )));
    }
    crate::linalg::check_finite(theta0, "initial point")?;
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Invalid("end time must be finite and non-negative".into()));
    }

    let mut traj = DiTrajectory::default();
    let mut theta = theta0.clone();
    let mut t = 0.0;
    let mut mode = initial_mode(field, &theta, t)?;
    if let Mode::Sliding(k) = mode {
        traj.events.push(Event {
            t,
            boundary: k,
            kind: EventKind::EnterSliding,
        });
        theta = field.boundaries()[k].project(&theta);
    }
    traj.push(t, &theta, mode);

    let mut h = initial_step(field, &theta, mode, t_end, tol);
    let h_min = 1e-14 * t_end.max(1.0);
    let mut steps = 0usize;

    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(step_failure(t, &theta, "maximum number of steps exceeded"));
        }
        let h_try = h.min(t_end - t);
        let (candidate, err) = rk_step(field, mode, &theta, h_try, tol);
        if !(err <= 1.0) {
            h = h_try * controller_factor(err);
            if h < h_min {
                return Err(step_failure(t, &theta, "step size underflow"));
            }
            continue;
        }
        let next_h = h_try * controller_factor(err);

        match mode {
            Mode::Interior(r) => {
                if field.region_of(&candidate) == Some(r) {
                    t += h_try;
                    theta = candidate;
                    traj.push(t, &theta, mode);
                } else {
                    let (frac, before, after) = locate(opts, |s| {
                        let (p, _) = rk_step(field, mode, &theta, s * h_try, tol);
                        let inside = field.region_of(&p) == Some(r);
                        (inside, p)
                    });
                    t += frac * h_try;
                    let (new_mode, at) = boundary_transition(field, r, &before, &after, t, &mut traj)?;
                    theta = at;
                    mode = new_mode;
                    let event = traj.events.last().expect("transition recorded an event");
                    let marker = match (mode, event.kind) {
                        (Mode::Interior(_), EventKind::Cross) => Mode::Crossing(event.boundary),
                        (m, _) => m,
                    };
                    traj.push(t, &theta, marker);
                }
            }
            Mode::Sliding(k) => {
                let bd = &field.boundaries()[k];
                let projected = bd.project(&candidate);
                if still_sliding(field, k, &projected) {
                    t += h_try;
                    theta = projected;
                    check_face(field, k, &theta, t)?;
                    traj.push(t, &theta, mode);
                } else {
                    let (frac, before, _) = locate(opts, |s| {
                        let (p, _) = rk_step(field, mode, &theta, s * h_try, tol);
                        let p = bd.project(&p);
                        (still_sliding(field, k, &p), p)
                    });
                    t += frac * h_try;
                    theta = before;
                    check_face(field, k, &theta, t)?;
                    let w = &bd.normal;
                    // The region whose drift no longer points at the boundary.
                    let into_first = w.dot(&field.drift(bd.regions.0, &theta))
                        >= -w.dot(&field.drift(bd.regions.1, &theta));
                    let region = if into_first { bd.regions.0 } else { bd.regions.1 };
                    mode = Mode::Interior(region);
                    traj.events.push(Event {
                        t,
                        boundary: k,
                        kind: EventKind::ExitSliding,
                    });
                    traj.push(t, &theta, mode);
                }
            }
            Mode::Crossing(_) => unreachable!("crossing is an instantaneous marker"),
        }
        h = next_h.max(h_min);
    }
    Ok(traj)
}

fn step_failure(t: f64, theta: &DVector<f64>, reason: &str) -> Error {
    Error::StepFailure {
        t,
        theta: theta.iter().copied().collect(),
        reason: reason.into(),
    }
}

fn check_face<F: PiecewiseAffineField + ?Sized>(field: &F, k: usize, theta: &DVector<f64>, t: f64) -> Result<()> {
    let tol = field.tolerances().boundary;
    if field.regions_near(theta, tol).len() > 2 {
        return Err(step_failure(t, theta, "reached a corner where three or more regions meet"));
    }
    if !field.boundaries()[k].face_contains(theta, tol) {
        return Err(step_failure(t, theta, "slid off the end of a boundary face"));
    }
    Ok(())
}

fn still_sliding<F: PiecewiseAffineField + ?Sized>(field: &F, k: usize, theta: &DVector<f64>) -> bool {
    let bd = &field.boundaries()[k];
    let w = &bd.normal;
    let toward1 = -w.dot(&field.drift(bd.regions.0, theta));
    let toward2 = w.dot(&field.drift(bd.regions.1, theta));
    toward1 > 0.0 && toward2 > 0.0
}

/// Filippov decision at a boundary point given the region the flow came from.
fn decide_at_boundary<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    k: usize,
    from: usize,
    theta: &DVector<f64>,
) -> Mode {
    let bd = &field.boundaries()[k];
    let to = bd.other(from);
    let sigma = bd.side(from);
    // Positive values point into `from`'s side.
    let from_in = sigma * bd.normal.dot(&field.drift(from, theta));
    let to_in = sigma * bd.normal.dot(&field.drift(to, theta));
    if from_in < 0.0 && to_in > 0.0 {
        Mode::Sliding(k)
    } else if to_in <= 0.0 {
        Mode::Interior(to)
    } else {
        Mode::Interior(from)
    }
}

fn boundary_transition<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    from: usize,
    before: &DVector<f64>,
    after: &DVector<f64>,
    t: f64,
    traj: &mut DiTrajectory,
) -> Result<(Mode, DVector<f64>)> {
    let tol = field.tolerances().boundary;
    // Points exactly on a boundary can carry a tie-broken policy that owns no
    // open region; the neighbors across the boundary decide instead.
    let to = match field.region_of(after) {
        Some(r) if r != from => r,
        _ => {
            let others: Vec<usize> = field
                .regions_near(after, tol * (1.0 + after.norm()))
                .into_iter()
                .filter(|&r| r != from)
                .collect();
            match others.as_slice() {
                [r] => *r,
                [] => return Err(step_failure(t, after, "entered a region missing from the diagram")),
                _ => return Err(step_failure(t, after, "reached a corner where three or more regions meet")),
            }
        }
    };
    let Some(k) = field.boundary_index(from, to) else {
        if field.boundaries().is_empty() {
            // No boundary geometry (sampled diagrams): plain crossing.
            return Ok((Mode::Interior(to), after.clone()));
        }
        return Err(step_failure(t, after, "crossed into a non-adjacent region"));
    };
    let bd = &field.boundaries()[k];
    let at = bd.project(before);
    if field.regions_near(&at, tol * (1.0 + at.norm())).len() > 2 {
        return Err(step_failure(t, &at, "reached a corner where three or more regions meet"));
    }
    let mode = decide_at_boundary(field, k, from, &at);
    let (kind, at) = match mode {
        // Stay exactly on the hyperplane only while sliding.
        Mode::Sliding(_) => (EventKind::EnterSliding, at),
        Mode::Interior(r) if r == from => (EventKind::Graze, before.clone()),
        _ => (EventKind::Cross, after.clone()),
    };
    traj.events.push(Event { t, boundary: k, kind });
    Ok((mode, at))
}

fn initial_mode<F: PiecewiseAffineField + ?Sized>(field: &F, theta: &DVector<f64>, t: f64) -> Result<Mode> {
    let near = field.regions_near(theta, field.tolerances().boundary);
    match near.as_slice() {
        [] => field
            .region_of(theta)
            .map(Mode::Interior)
            .ok_or_else(|| step_failure(t, theta, "start point outside every known region")),
        [r] => Ok(Mode::Interior(*r)),
        [r1, r2] => {
            let k = field
                .boundary_index(*r1, *r2)
                .ok_or_else(|| step_failure(t, theta, "start point between non-adjacent regions"))?;
            let bd = &field.boundaries()[k];
            let w = &bd.normal;
            let n1 = w.dot(&field.drift(bd.regions.0, theta));
            let n2 = w.dot(&field.drift(bd.regions.1, theta));
            Ok(if n1 < 0.0 && n2 > 0.0 {
                Mode::Sliding(k)
            } else if n2 < 0.0 && !(n1 > 0.0) {
                Mode::Interior(bd.regions.1)
            } else {
                Mode::Interior(bd.regions.0)
            })
        }
        _ => Err(step_failure(t, theta, "start point is a corner where three or more regions meet")),
    }
}

/// Bisection on the step fraction. `probe(s)` reports whether the state after
/// fraction `s` still satisfies the mode's condition. Returns the crossing
/// fraction with the last state satisfying it and the first state violating it.
fn locate(
    opts: &IntegratorOptions,
    mut probe: impl FnMut(f64) -> (bool, DVector<f64>),
) -> (f64, DVector<f64>, DVector<f64>) {
    let (mut lo, mut hi) = (0.0, 1.0);
    let (_, mut before) = probe(0.0);
    let (_, mut after) = probe(1.0);
    for _ in 0..opts.max_bisections {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (ok, p) = probe(mid);
        if ok {
            lo = mid;
            before = p;
        } else {
            hi = mid;
            after = p;
        }
    }
    (lo, before, after)
}

fn velocity<F: PiecewiseAffineField + ?Sized>(field: &F, mode: Mode, theta: &DVector<f64>) -> DVector<f64> {
    match mode {
        Mode::Interior(r) => field.drift(r, theta),
        Mode::Sliding(k) | Mode::Crossing(k) => match sliding_velocity(field, k, theta) {
            Some((_, v)) => v,
            None => DVector::zeros(theta.len()),
        },
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step; returns the 5th-order state and the scaled error
/// norm (accept when ≤ 1). The error is measured per unit step so the global
/// error scales at least linearly with `tol`.
fn rk_step<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    mode: Mode,
    theta: &DVector<f64>,
    h: f64,
    tol: f64,
) -> (DVector<f64>, f64) {
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    for stage in 0..7 {
        let mut y = theta.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[stage][j] != 0.0 {
                y.axpy(h * A[stage][j], kj, 1.0);
            }
        }
        k.push(velocity(field, mode, &y));
    }
    let mut y5 = theta.clone();
    let mut err = DVector::zeros(theta.len());
    for (i, ki) in k.iter().enumerate() {
        y5.axpy(h * B5[i], ki, 1.0);
        err.axpy(h * (B5[i] - B4[i]), ki, 1.0);
    }
    if h == 0.0 {
        return (y5, 0.0);
    }
    let norm = err
        .iter()
        .zip(theta.iter().zip(y5.iter()))
        .map(|(e, (a, b))| {
            let scale = tol * h.min(1.0) * (1.0 + a.abs().max(b.abs()));
            (e / scale).powi(2)
        })
        .sum::<f64>()
        / theta.len() as f64;
    (y5, norm.sqrt())
}

fn controller_factor(err: f64) -> f64 {
    if err == 0.0 {
        return 5.0;
    }
    if !err.is_finite() {
        return 0.1;
    }
    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
}

fn initial_step<F: PiecewiseAffineField + ?Sized>(
    field: &F,
    theta: &DVector<f64>,
    mode: Mode,
    t_end: f64,
    tol: f64,
) -> f64 {
    let v = velocity(field, mode, theta).norm();
    let scale = 1.0 + theta.norm();
    let h = if v > 0.0 { 0.01 * scale / v } else { 0.01 };
    h.min(t_end.max(1e-12)).min(tol.powf(0.2))
}
