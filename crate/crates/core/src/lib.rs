//! Limiting dynamics of Q-learning and SARSA(0) with linear function
//! approximation and ε-greedy exploration.
//!
//! The mean dynamics of the stochastic iterates are piecewise affine on the
//! conic partition of parameter space into greedy regions. This crate builds
//! that partition, the affine piece of each region, the differential
//! inclusion they induce (with Filippov sliding on shared boundaries), and a
//! simulator for the original stochastic recursion.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod field;
pub mod fixture;
pub mod gordon;
pub mod integrate;
pub mod linalg;
pub mod mdp;
pub mod partition;
pub mod report;
pub mod sim;

pub use config::Tolerances;
pub use dynamics::{
    build_piece, build_piece_with, ges_margin, validate_b4, Algorithm, AlgorithmConfig, B4Report,
    GesMargin, PieceDynamics,
};
pub use error::{Error, Result};
pub use field::{
    classify_structure, evaluate_field, find_equilibria, sliding_velocity, DiField, Equilibrium,
    EquilibriumCensus, EquilibriumKind, EquilibriumSegment, FieldBoundary, FieldKind, FieldValue,
    PiecewiseAffineField, Stability, Taxonomy,
};
pub use fixture::{load_gordon_fixture, load_mdp_fixture, GordonFixture, MdpFixture, FIXTURE_SCHEMA_VERSION};
pub use gordon::{
    gordon_equilibrium_segment, gordon_landmarks, gordon_run, gordon_step, GordonField, GordonRun,
    GordonSystem,
};
pub use integrate::{integrate_di, integrate_di_with, DiTrajectory, Event, EventKind, IntegratorOptions, Mode};
pub use mdp::{
    induced_state_chain, stationary_distribution, validate_b1, B1Report, DeterministicPolicy,
    EpsGreedyPolicy, FiniteMdp, StationaryDistribution,
};
pub use partition::{
    enumerate_regions, greedy_policy_of, Adjacency, EnumerationMethod, FeatureMap, GreedyRegion,
    PartitionDiagram, RasterGrid,
};
pub use report::{analyze, AnalysisReport, TOOL_VERSION};
pub use sim::{chatter_report, run_many, RunManifest, SaModel, SaRun, SaTrajectory, StepSizeSchedule};
