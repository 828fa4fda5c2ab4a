//! Desk-scale lane-keeping test bench.
//!
//! The crate wires together everything needed to compare open-loop
//! ("offline") and closed-loop ("online") testing of a learned steering
//! controller:
//!
//! - [`scenario`]: the configurable input space, constraint predicates and a
//!   seeded rejection sampler.
//! - [`world`]: road centerline geometry and lateral-deviation queries.
//! - [`dynamics`]: kinematic bicycle stepping and steering normalization.
//! - [`camera`]: a tiny ground-plane renderer with weather effects.
//! - [`controllers`]: the geometric label oracle, a trainable MLP regressor,
//!   and bias/noise wrappers.
//! - [`offline`]: labeled datasets and MAE/RMSE evaluation.
//! - [`online`]: the closed simulation loop and the MDCL lane-departure metric.
//! - [`matching`]: comparable-subsequence search between generated and
//!   recorded datasets.
//! - [`analysis`]: threshold verdicts, contingency table and report files.

pub mod analysis;
pub mod camera;
pub mod controllers;
pub mod dynamics;
mod error;
pub mod matching;
pub mod offline;
pub mod online;
pub mod seed;
pub mod scenario;
pub mod world;

pub use analysis::{classify, contingency, AgreementRecord, ContingencyTable, Thresholds};
pub use camera::{render, Image};
pub use controllers::{oracle_steering, train, Controller, ControllerKind, Mlp, TrainConfig};
pub use dynamics::{step, steering_to_angle, SimConfig, VehicleState};
pub use error::{Error, Result};
pub use matching::{consistency, find_comparable, MatchResult};
pub use offline::{evaluate_offline, mae, rmse, LabeledDataset, OfflineResult, Provenance};
pub use online::{mdcl, run_closed_loop, MdclValue, SimulationTrace};
pub use scenario::{
    check_constraints, restrict, sample_scenario, DomainModel, Restriction, RoadTopology, Scenario,
    Weather,
};
pub use world::{build_road, lateral_deviation, Road};
