//! JSON fixture files: an MDP, its feature matrix and default exploration.
//!
//! Transitions are `trans[s][a][s′]`. Rewards are either `reward[s][a][s′]` or
//! `reward[s][a]`, the latter broadcast over next states. Feature rows are
//! ordered `(s₀,a₀), (s₀,a₁), …, (s₁,a₀), …`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{Algorithm, AlgorithmConfig};
use crate::error::{invalid, Result};
use crate::mdp::FiniteMdp;
use crate::partition::FeatureMap;
use crate::sim::StepSizeSchedule;

pub const FIXTURE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardTable {
    Full(Vec<Vec<Vec<f64>>>),
    PerAction(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub algo: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFixture {
    #[serde(default = "current_schema")]
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Optional; checked against `trans` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_actions: Option<usize>,
    pub gamma: f64,
    /// Default behavior exploration; may instead be supplied per call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub trans: Vec<Vec<Vec<f64>>>,
    pub reward: RewardTable,
    pub features: Vec<Vec<f64>>,
    #[serde(default)]
    pub presets: BTreeMap<String, Preset>,
}

fn current_schema() -> u32 {
    FIXTURE_SCHEMA_VERSION
}

fn check_schema(schema: u32) -> Result<()> {
    if schema != FIXTURE_SCHEMA_VERSION {
        return Err(invalid(format!(
            "fixture schema {schema} is not supported (expected {FIXTURE_SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

impl MdpFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let fx: Self = serde_json::from_str(text).map_err(|e| invalid(format!("fixture parse error: {e}")))?;
        check_schema(fx.schema)?;
        let declared = [("n_states", fx.n_states, fx.n_states()), ("n_actions", fx.n_actions, fx.n_actions())];
        for (field, given, actual) in declared {
            if given.is_some_and(|g| g != actual) {
                return Err(invalid(format!("{field} is {} but trans implies {actual}", given.unwrap())));
            }
        }
        fx.mdp()?;
        fx.feature_map()?;
        Ok(fx)
    }

    pub fn n_states(&self) -> usize {
        self.trans.len()
    }

    pub fn n_actions(&self) -> usize {
        self.trans.first().map_or(0, Vec::len)
    }

    pub fn mdp(&self) -> Result<FiniteMdp> {
        let (ns, na) = (self.n_states(), self.n_actions());
        let mut trans = Vec::with_capacity(ns * na * ns);
        for (s, per_action) in self.trans.iter().enumerate() {
            if per_action.len() != na {
                return Err(invalid(format!("state {s} lists {} actions, expected {na}", per_action.len())));
            }
            for row in per_action {
                if row.len() != ns {
                    return Err(invalid(format!("transition row of state {s} has {} entries", row.len())));
                }
                trans.extend_from_slice(row);
            }
        }
        let reward = match &self.reward {
            RewardTable::Full(r) => {
                let flat: Vec<f64> = r.iter().flatten().flatten().copied().collect();
                let shape_ok = r.len() == ns && r.iter().all(|x| x.len() == na && x.iter().all(|y| y.len() == ns));
                if !shape_ok {
                    return Err(invalid("reward table must be [states][actions][states]"));
                }
                flat
            }
            RewardTable::PerAction(r) => {
                if r.len() != ns || r.iter().any(|x| x.len() != na) {
                    return Err(invalid("reward table must be [states][actions]"));
                }
                r.iter()
                    .flatten()
                    .flat_map(|&v| std::iter::repeat(v).take(ns))
                    .collect()
            }
        };
        FiniteMdp::new(ns, na, self.gamma, trans, reward)
    }

    pub fn feature_map(&self) -> Result<FeatureMap> {
        FeatureMap::from_rows(&self.features, self.n_states(), self.n_actions())
    }

    /// Exploration pair for `algo`, with optional overrides of the fixture's ε.
    pub fn config(&self, algo: Algorithm, eps: Option<f64>, eps_prime: Option<f64>) -> Result<AlgorithmConfig> {
        let eps = eps
            .or(self.eps)
            .ok_or_else(|| invalid(format!("fixture '{}' sets no exploration rate; pass one explicitly", self.name)))?;
        AlgorithmConfig::preset(algo, eps, eps_prime)
    }

    pub fn preset_config(&self, name: &str) -> Result<AlgorithmConfig> {
        let p = self
            .presets
            .get(name)
            .ok_or_else(|| invalid(format!("fixture '{}' has no preset '{name}'", self.name)))?;
        self.config(p.algo, p.eps, p.eps_prime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GordonFixture {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub eps: f64,
    pub theta0: Vec<f64>,
    pub iters: u64,
    pub schedule: String,
}

impl GordonFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let fx: Self = serde_json::from_str(text).map_err(|e| invalid(format!("fixture parse error: {e}")))?;
        check_schema(fx.schema)?;
        fx.schedule()?;
        Ok(fx)
    }

    pub fn schedule(&self) -> Result<StepSizeSchedule> {
        self.schedule.parse()
    }
}

/// Hex SHA-256 of raw fixture bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A parsed fixture with the hash of the bytes it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub fixture: T,
    pub sha256: String,
}

fn read(path: &Path) -> Result<(String, String)> {
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let hash = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| invalid(format!("{} is not UTF-8", path.display())))?;
    Ok((text, hash))
}

pub fn load_mdp_fixture(path: impl AsRef<Path>) -> Result<Loaded<MdpFixture>> {
    let path = path.as_ref();
    let (text, sha256) = read(path)?;
    let mut fixture = MdpFixture::from_json(&text)?;
    if fixture.name.is_empty() {
        fixture.name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    }
    Ok(Loaded { fixture, sha256 })
}

pub fn load_gordon_fixture(path: impl AsRef<Path>) -> Result<Loaded<GordonFixture>> {
    let (text, sha256) = read(path.as_ref())?;
    Ok(Loaded {
        fixture: GordonFixture::from_json(&text)?,
        sha256,
    })
}
