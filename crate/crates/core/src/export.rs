//! CSV time series and SVG partition plots.
//!
//! Numbers are printed with Rust's shortest round-trip formatting, so equal
//! inputs always produce identical bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{DiField, EquilibriumCensus, EquilibriumKind, Stability};
use crate::integrate::{DiTrajectory, Mode};
use crate::sim::SaTrajectory;

fn theta_columns(d: usize) -> impl Iterator<Item = String> {
    (0..d).map(|i| format!("theta_{i}"))
}

fn to_csv(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
}

fn numbers(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| v.to_string())
}

/// Columns `n, theta_0.., policy_id, alpha_n`.
pub fn sa_trajectory_csv(traj: &SaTrajectory) -> String {
    let d = traj.thetas.first().map_or(0, Vec::len);
    let header = std::iter::once("n".to_string())
        .chain(theta_columns(d))
        .chain(["policy_id".to_string(), "alpha_n".to_string()])
        .collect();
    let rows = (0..traj.indices.len()).map(|i| {
        std::iter::once(traj.indices[i].to_string())
            .chain(numbers(&traj.thetas[i]))
            .chain([traj.policy_ids[i].to_string(), traj.alphas[i].to_string()])
            .collect()
    });
    to_csv(header, rows)
}

/// Columns `t, theta_0.., mode, id` where `id` is the region or boundary index.
pub fn di_trajectory_csv(traj: &DiTrajectory) -> String {
    let d = traj.states.first().map_or(0, Vec::len);
    let header = std::iter::once("t".to_string())
        .chain(theta_columns(d))
        .chain(["mode".to_string(), "id".to_string()])
        .collect();
    let rows = traj.times.iter().zip(&traj.states).zip(&traj.modes).map(|((t, theta), mode)| {
        let (name, id) = match *mode {
            Mode::Interior(r) => ("interior", r),
            Mode::Sliding(k) => ("sliding", k),
            Mode::Crossing(k) => ("crossing", k),
        };
        std::iter::once(t.to_string())
            .chain(numbers(theta))
            .chain([name.to_string(), id.to_string()])
            .collect()
    });
    to_csv(header, rows)
}

/// Columns `x, y, policy_id`.
pub fn raster_csv(cells: &[(f64, f64, u64)]) -> String {
    let header = ["x", "y", "policy_id"].map(String::from).to_vec();
    to_csv(header, cells.iter().map(|(x, y, id)| vec![x.to_string(), y.to_string(), id.to_string()]))
}

/// Reads the `theta_*` columns of a trajectory CSV written by this module.
pub fn read_trajectory_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| invalid(format!("bad trajectory header: {e}")))?;
    let cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, name)| name.starts_with("theta_"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(invalid("trajectory file has no theta columns"));
    }
    reader
        .records()
        .enumerate()
        .map(|(row, record)| {
            let record = record.map_err(|e| invalid(format!("bad trajectory row {}: {e}", row + 1)))?;
            cols.iter()
                .map(|&c| {
                    record
                        .get(c)
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| invalid(format!("bad value in row {} column {c}", row + 1)))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRegion {
    pub policy_id: u64,
    pub label: String,
    /// The region is `{θ : nᵀθ ≥ 0 for every n}`.
    pub normals: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLandmark {
    pub point: [f64; 2],
    pub self_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEquilibrium {
    pub point: [f64; 2],
    pub stability: Stability,
}

/// Everything drawn in a partition figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// `[xmin, xmax, ymin, ymax]`.
    pub bounds: [f64; 4],
    pub regions: Vec<SceneRegion>,
    pub trajectories: Vec<Vec<[f64; 2]>>,
    pub landmarks: Vec<SceneLandmark>,
    pub equilibria: Vec<SceneEquilibrium>,
}

fn point2(v: &[f64]) -> Result<[f64; 2]> {
    match v {
        [x, y] => Ok([*x, *y]),
        _ => Err(Error::UnsupportedDimension {
            expected: 2,
            got: v.len(),
        }),
    }
}

impl Scene {
    /// Regions, landmarks and boundary equilibria of a planar field.
    pub fn from_field(field: &DiField, census: Option<&EquilibriumCensus>, bounds: [f64; 4]) -> Result<Self> {
        let d = field.features.dim();
        if d != 2 {
            return Err(Error::UnsupportedDimension { expected: 2, got: d });
        }
        let regions = field
            .diagram
            .regions
            .iter()
            .map(|r| {
                Ok(SceneRegion {
                    policy_id: r.policy.id(field.features.n_actions()),
                    label: r.policy.to_string(),
                    normals: r.halfspaces.iter().map(|h| point2(&h.normal)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let landmarks = field
            .pieces
            .iter()
            .filter_map(|p| {
                p.landmark.as_ref().map(|x| {
                    Ok(SceneLandmark {
                        point: point2(x.as_slice())?,
                        self_consistent: p.self_consistent,
                    })
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let equilibria = census
            .map(|c| {
                c.points
                    .iter()
                    .filter(|e| e.kind == EquilibriumKind::BoundaryEquilibrium)
                    .map(|e| {
                        Ok(SceneEquilibrium {
                            point: point2(&e.location)?,
                            stability: e.stability,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        Ok(Self {
            bounds,
            regions,
            trajectories: Vec::new(),
            landmarks,
            equilibria,
        })
    }

    pub fn add_trajectory(&mut self, states: &[Vec<f64>]) -> Result<()> {
        let pts = states.iter().map(|s| point2(s)).collect::<Result<Vec<_>>>()?;
        self.trajectories.push(pts);
        Ok(())
    }
}

/// Sutherland–Hodgman clip of a convex polygon by `nᵀp ≥ 0`.
fn clip(poly: &[[f64; 2]], n: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |p: &[f64; 2]| n[0] * p[0] + n[1] * p[1];
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(&p), side(&q));
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#cfe2f3", "#f4cccc", "#d9ead3", "#fff2cc", "#d9d2e9", "#fce5cd", "#d0e0e3", "#ead1dc",
];
const LINE_COLORS: [&str; 4] = ["#1f4e79", "#7f1d1d", "#14532d", "#4a044e"];
const SIZE: f64 = 600.0;

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

pub fn render_svg(scene: &Scene) -> Result<String> {
    let [xmin, xmax, ymin, ymax] = scene.bounds;
    if !(xmax > xmin && ymax > ymin) || scene.bounds.iter().any(|v| !v.is_finite()) {
        return Err(invalid("plot bounds must be finite with min < max"));
    }
    let px = |p: [f64; 2]| {
        (
            (p[0] - xmin) / (xmax - xmin) * SIZE,
            (ymax - p[1]) / (ymax - ymin) * SIZE,
        )
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = SIZE
    );
    let rect = [[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]];
    for (i, region) in scene.regions.iter().enumerate() {
        let poly = region.normals.iter().fold(rect.to_vec(), |p, &n| clip(&p, n));
        if poly.len() < 3 {
            continue;
        }
        let points: Vec<String> = poly
            .iter()
            .map(|&p| {
                let (x, y) = px(p);
                format!("{},{}", fmt2(x), fmt2(y))
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"  <polygon points="{}" fill="{}" stroke="none"><title>policy {} (id {})</title></polygon>"#,
            points.join(" "),
            PALETTE[i % PALETTE.len()],
            region.label,
            region.policy_id
        );
    }
    let (ox, oy) = px([0.0, 0.0]);
    let _ = writeln!(
        svg,
        r##"  <g stroke="#999" stroke-width="0.5"><line x1="0" y1="{y}" x2="{s}" y2="{y}"/><line x1="{x}" y1="0" x2="{x}" y2="{s}"/></g>"##,
        x = fmt2(ox),
        y = fmt2(oy),
        s = SIZE
    );
    for (i, traj) in scene.trajectories.iter().enumerate() {
        if traj.is_empty() {
            continue;
        }
        let color = LINE_COLORS[i % LINE_COLORS.len()];
        let points: Vec<String> = traj
            .iter()
            .map(|&p| {
                let (x, y) = px(p);
                format!("{},{}", fmt2(x), fmt2(y))
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"  <polyline points="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
            points.join(" ")
        );
        let (x, y) = px(traj[0]);
        let _ = writeln!(svg, r#"  <circle cx="{}" cy="{}" r="4" fill="{color}"/>"#, fmt2(x), fmt2(y));
    }
    for lm in &scene.landmarks {
        let (x, y) = px(lm.point);
        let fill = if lm.self_consistent { "#000" } else { "#fff" };
        let _ = writeln!(
            svg,
            r##"  <polygon points="{},{} {},{} {},{} {},{}" fill="{fill}" stroke="#000"/>"##,
            fmt2(x),
            fmt2(y - 7.0),
            fmt2(x + 7.0),
            fmt2(y),
            fmt2(x),
            fmt2(y + 7.0),
            fmt2(x - 7.0),
            fmt2(y)
        );
    }
    for eq in &scene.equilibria {
        let (x, y) = px(eq.point);
        let (fill, title) = match eq.stability {
            Stability::Unstable => ("none", "unstable"),
            Stability::SlidingAttractor => ("#c00", "sliding attractor"),
            Stability::Stable => ("#060", "stable"),
        };
        let _ = writeln!(
            svg,
            r##"  <circle cx="{}" cy="{}" r="6" fill="{fill}" stroke="#c00" stroke-width="2"><title>{title}</title></circle>"##,
            fmt2(x),
            fmt2(y)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
