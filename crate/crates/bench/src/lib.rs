//! Shared fixtures for the benchmarks.

use lanebench_core::offline::generate_sim_dataset;
use lanebench_core::scenario::{Interval, RoadTopology};
use lanebench_core::{restrict, sample_scenario, DomainModel, LabeledDataset, Restriction, Scenario, SimConfig};

/// A sunny left curve at 10 m/s.
pub fn curve_scenario() -> Scenario {
    let d = restrict(
        &DomainModel::sunny(),
        &Restriction::default()
            .topologies([RoadTopology::LeftCurved])
            .ego_speed(Interval::point(10.0)),
    )
    .expect("restriction within the sunny model");
    sample_scenario(&d, 7).expect("sampling the fixture scenario")
}

/// Oracle labels of a full-length drive over [`curve_scenario`].
pub fn curve_dataset() -> LabeledDataset {
    generate_sim_dataset(&curve_scenario(), &SimConfig::default()).expect("fixture dataset")
}

/// Deterministic pseudo-random labels in [-1, 1].
pub fn labels(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = lanebench_core::seed::mix(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}
