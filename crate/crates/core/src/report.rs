//! End-to-end analysis of a fixture: assumption checks, greedy regions, piece
//! dynamics, equilibria and the structural label.

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::dynamics::{ges_margin, validate_b4, AlgorithmConfig, B4Report, GesMargin};
use crate::error::{Error, Result};
use crate::field::{classify_structure, find_equilibria, DiField, EquilibriumCensus, Taxonomy};
use crate::fixture::{MdpFixture, FIXTURE_SCHEMA_VERSION};
use crate::linalg;
use crate::mdp::{
    induced_state_chain, stationary_distribution_with, validate_b1, B1Report, DeterministicPolicy,
    EpsGreedyPolicy,
};
use crate::partition::Sector;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Policies beyond this count are not all checked for ergodicity; only the
/// realized ones are.
const MAX_B2_POLICIES: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub fixture_schema: u32,
    pub fixture_name: String,
    pub fixture_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B2Entry {
    pub policy: DeterministicPolicy,
    pub min_stationary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B2Report {
    pub entries: Vec<B2Entry>,
    /// All `|A|^|S|` policies were checked, not just realized ones.
    pub exhaustive: bool,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B3Report {
    pub schedule: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub policy: DeterministicPolicy,
    pub policy_id: u64,
    pub n_halfspaces: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<Sector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCensus {
    pub n_regions: usize,
    pub approximate: bool,
    pub regions: Vec<RegionSummary>,
    pub adjacency: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceSummary {
    pub policy: DeterministicPolicy,
    pub policy_id: u64,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub landmark: Option<Vec<f64>>,
    pub self_consistent: bool,
    pub landmark_interior: bool,
    pub pd_margin: f64,
    pub stationary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub provenance: Provenance,
    pub config: AlgorithmConfig,
    pub gamma: f64,
    pub b1: B1Report,
    pub b2: B2Report,
    pub b3: B3Report,
    pub b4: B4Report,
    pub ges: GesMargin,
    pub regions: RegionCensus,
    pub pieces: Vec<PieceSummary>,
    /// Absent when the equilibrium analysis could not run.
    pub equilibria: Option<EquilibriumCensus>,
    pub taxonomy: Option<Taxonomy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_error: Option<String>,
}

impl AnalysisReport {
    /// Names of failed assumptions, in order.
    pub fn failed_assumptions(&self) -> Vec<&'static str> {
        let mut failed = Vec::new();
        if !self.b1.full_rank {
            failed.push("B1");
        }
        if !self.b2.pass {
            failed.push("B2");
        }
        if !self.b3.pass {
            failed.push("B3");
        }
        if !self.b4.pass {
            failed.push("B4");
        }
        failed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("report parse error: {e}")))
    }
}

fn check_b2(fx: &MdpFixture, cfg: &AlgorithmConfig, realized: &[DeterministicPolicy]) -> Result<B2Report> {
    let mdp = fx.mdp()?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let total = (na as u64).checked_pow(ns as u32).unwrap_or(u64::MAX);
    let exhaustive = total <= MAX_B2_POLICIES;
    let policies: Vec<DeterministicPolicy> = if exhaustive {
        (0..total).map(|id| DeterministicPolicy::from_id(id, ns, na)).collect()
    } else {
        realized.to_vec()
    };
    let tol = Tolerances::default();
    let mut entries = Vec::new();
    for policy in policies {
        let behavior = EpsGreedyPolicy::new(policy.clone(), cfg.eps, na)?;
        match stationary_distribution_with(&induced_state_chain(&mdp, &behavior)?, &tol) {
            Ok(d) => entries.push(B2Entry {
                policy,
                min_stationary: d.dist.iter().copied().fold(f64::INFINITY, f64::min),
            }),
            Err(e @ Error::NotErgodic(_)) => {
                return Ok(B2Report {
                    entries,
                    exhaustive,
                    pass: false,
                    failure: Some(format!("policy {policy}: {e}")),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(B2Report {
        entries,
        exhaustive,
        pass: true,
        failure: None,
    })
}

/// Runs the full analysis. Assumption violations are reported in the result;
/// only input errors and non-ergodic chains (which leave the dynamics
/// undefined) are returned as errors.
pub fn analyze(fx: &MdpFixture, fixture_sha256: &str, cfg: &AlgorithmConfig) -> Result<AnalysisReport> {
    let mdp = fx.mdp()?;
    let features = fx.feature_map()?;
    let b1 = validate_b1(&features, &mdp)?;
    let (diagram_policies, field) = match DiField::build(&mdp, &features, cfg) {
        Ok(f) => (f.diagram.regions.iter().map(|r| r.policy.clone()).collect::<Vec<_>>(), f),
        Err(e @ Error::NotErgodic(_)) => {
            // Surface the failing policy through the B2 check when possible.
            let b2 = check_b2(fx, cfg, &[])?;
            return Err(match b2.failure {
                Some(msg) => Error::NotErgodic(msg),
                None => e,
            });
        }
        Err(e) => return Err(e),
    };
    let b2 = check_b2(fx, cfg, &diagram_policies)?;
    let b4 = validate_b4(&field.pieces);
    let ges = ges_margin(&field.pieces);
    let na = features.n_actions();

    let regions = RegionCensus {
        n_regions: field.diagram.regions.len(),
        approximate: field.diagram.approximate,
        regions: field
            .diagram
            .regions
            .iter()
            .map(|r| RegionSummary {
                policy: r.policy.clone(),
                policy_id: r.policy.id(na),
                n_halfspaces: r.halfspaces.len(),
                sector: r.sector,
            })
            .collect(),
        adjacency: field.diagram.adjacency.iter().map(|a| a.regions).collect(),
    };
    let pieces = field
        .pieces
        .iter()
        .map(|p| PieceSummary {
            policy: p.policy.clone(),
            policy_id: p.policy.id(na),
            a: linalg::to_rows(&p.a),
            b: p.b.iter().copied().collect(),
            landmark: p.landmark.as_ref().map(|x| x.iter().copied().collect()),
            self_consistent: p.self_consistent,
            landmark_interior: p.landmark_interior,
            pd_margin: p.pd_margin,
            stationary: p.stationary.dist.clone(),
        })
        .collect();

    let (equilibria, taxonomy, analysis_error) = match find_equilibria(&field) {
        Ok(census) => {
            let label = classify_structure(&census);
            (Some(census), Some(label), None)
        }
        Err(e) => (None, None, Some(e.to_string())),
    };

    Ok(AnalysisReport {
        provenance: Provenance {
            tool_version: TOOL_VERSION.to_string(),
            fixture_schema: FIXTURE_SCHEMA_VERSION,
            fixture_name: fx.name.clone(),
            fixture_sha256: fixture_sha256.to_string(),
        },
        config: *cfg,
        gamma: fx.gamma,
        b1,
        b2,
        // Analysis is schedule-free; the ODE limit presumes a Robbins–Monro schedule.
        b3: B3Report {
            schedule: "harmonic".into(),
            pass: true,
        },
        b4,
        ges,
        regions,
        pieces,
        equilibria,
        taxonomy,
        analysis_error,
    })
}
