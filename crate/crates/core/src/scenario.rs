//! Test-input space: domain model, constraint predicates and the seeded
//! rejection sampler that turns a model into concrete initial configurations.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Attempts made by [`sample_scenario`] before giving up.
pub const DEFAULT_ATTEMPT_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoadTopology {
    Straight,
    LeftCurved,
    RightCurved,
    SCurve,
}

impl RoadTopology {
    pub const ALL: [RoadTopology; 4] = [
        RoadTopology::Straight,
        RoadTopology::LeftCurved,
        RoadTopology::RightCurved,
        RoadTopology::SCurve,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Sunny,
    Rain,
    Snow,
    Fog,
}

impl Weather {
    pub const ALL: [Weather; 4] = [Weather::Sunny, Weather::Rain, Weather::Snow, Weather::Fog];
}

impl fmt::Display for Weather {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Weather::Sunny => "sunny",
            Weather::Rain => "rain",
            Weather::Snow => "snow",
            Weather::Fog => "fog",
        };
        f.write_str(name)
    }
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn point(value: f64) -> Self {
        Self { min: value, max: value }
    }

    pub fn is_well_formed(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.min >= other.min && self.max <= other.max
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

/// Executable stand-ins for the constraints that separate valid from
/// invalid value assignments. Each carries its own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ConstraintId {
    /// Speed cap falling linearly with |curvature|:
    /// `v <= straight_speed_limit - drop_per_curvature * |k|`.
    SpeedOnCurve {
        straight_speed_limit: f64,
        drop_per_curvature: f64,
    },
    /// Rain, snow and fog need a visible intensity.
    DegenerateWeather { min_intensity: f64 },
    /// Road must cover the distance driven in `duration_s` plus `margin_m`.
    MinRoadLength { duration_s: f64, margin_m: f64 },
    /// Curvature cap on the opposite-sign arcs of an s-curve.
    SCurveReversal { max_curvature: f64 },
}

impl ConstraintId {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintId::SpeedOnCurve { .. } => "speed_on_curve",
            ConstraintId::DegenerateWeather { .. } => "degenerate_weather",
            ConstraintId::MinRoadLength { .. } => "min_road_length",
            ConstraintId::SCurveReversal { .. } => "s_curve_reversal",
        }
    }

    /// `None` when the scenario satisfies the constraint.
    pub fn evaluate(&self, s: &Scenario) -> Option<ConstraintViolation> {
        let fail = |reason: String| {
            Some(ConstraintViolation {
                constraint: self.name().to_string(),
                reason,
            })
        };
        match *self {
            ConstraintId::SpeedOnCurve {
                straight_speed_limit,
                drop_per_curvature,
            } => {
                let k = s.max_abs_curvature();
                let cap = straight_speed_limit - drop_per_curvature * k;
                if s.ego_speed > cap {
                    fail(format!(
                        "ego speed {:.3} m/s exceeds the {:.3} m/s cap for curvature {:.4}/m",
                        s.ego_speed, cap, k
                    ))
                } else {
                    None
                }
            }
            ConstraintId::DegenerateWeather { min_intensity } => {
                if s.weather != Weather::Sunny && s.weather_intensity < min_intensity {
                    fail(format!(
                        "{} with intensity {:.3} (< {:.3}) is indistinguishable from sunny",
                        s.weather, s.weather_intensity, min_intensity
                    ))
                } else {
                    None
                }
            }
            ConstraintId::MinRoadLength {
                duration_s,
                margin_m,
            } => {
                let needed = s.ego_speed * duration_s + margin_m;
                if s.road_length < needed {
                    fail(format!(
                        "road length {:.1} m is shorter than the {:.1} m driven",
                        s.road_length, needed
                    ))
                } else {
                    None
                }
            }
            ConstraintId::SCurveReversal { max_curvature } => {
                if s.road_topology == RoadTopology::SCurve && s.curvature > max_curvature {
                    fail(format!(
                        "s-curve curvature {:.4}/m exceeds {:.4}/m",
                        s.curvature, max_curvature
                    ))
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub constraint: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainModel {
    pub road_topology_choices: BTreeSet<RoadTopology>,
    /// Curvature magnitude (1/m); the topology decides the sign.
    pub curvature_range: Interval,
    pub road_length_range: Interval,
    pub lane_width_range: Interval,
    pub weather_choices: BTreeSet<Weather>,
    pub weather_intensity_range: Interval,
    pub daytime_brightness_range: Interval,
    pub ego_speed_range: Interval,
    pub constraint_set: Vec<ConstraintId>,
}

impl Default for DomainModel {
    /// The full model: every topology and weather condition.
    fn default() -> Self {
        Self {
            road_topology_choices: RoadTopology::ALL.into_iter().collect(),
            curvature_range: Interval::new(0.0, 0.04),
            road_length_range: Interval::new(400.0, 700.0),
            lane_width_range: Interval::new(3.0, 4.0),
            weather_choices: Weather::ALL.into_iter().collect(),
            weather_intensity_range: Interval::new(0.0, 1.0),
            daytime_brightness_range: Interval::new(0.6, 1.0),
            ego_speed_range: Interval::new(5.0, 15.0),
            constraint_set: vec![
                ConstraintId::SpeedOnCurve {
                    straight_speed_limit: 16.0,
                    drop_per_curvature: 200.0,
                },
                ConstraintId::DegenerateWeather { min_intensity: 0.1 },
                ConstraintId::MinRoadLength {
                    duration_s: 25.0,
                    margin_m: 10.0,
                },
                ConstraintId::SCurveReversal {
                    max_curvature: 0.012,
                },
            ],
        }
    }
}

impl DomainModel {
    /// The full model restricted to sunny scenes.
    pub fn sunny() -> Self {
        let mut d = Self::default();
        d.weather_choices = [Weather::Sunny].into_iter().collect();
        d
    }

    fn ranges(&self) -> [(&'static str, &Interval); 6] {
        [
            ("curvature_range", &self.curvature_range),
            ("road_length_range", &self.road_length_range),
            ("lane_width_range", &self.lane_width_range),
            ("weather_intensity_range", &self.weather_intensity_range),
            ("daytime_brightness_range", &self.daytime_brightness_range),
            ("ego_speed_range", &self.ego_speed_range),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, range) in self.ranges() {
            if !range.is_well_formed() {
                return Err(Error::InvalidDomain(format!(
                    "{name} [{}, {}] is empty or not finite",
                    range.min, range.max
                )));
            }
        }
        if self.road_topology_choices.is_empty() {
            return Err(Error::InvalidDomain("road_topology_choices is empty".into()));
        }
        if self.weather_choices.is_empty() {
            return Err(Error::InvalidDomain("weather_choices is empty".into()));
        }
        if self.curvature_range.min < 0.0 {
            return Err(Error::InvalidDomain(
                "curvature_range holds magnitudes and must be non-negative".into(),
            ));
        }
        if self.road_length_range.min <= 0.0 || self.lane_width_range.min <= 0.0 {
            return Err(Error::InvalidDomain(
                "road length and lane width must be positive".into(),
            ));
        }
        if self.ego_speed_range.min < 0.0 {
            return Err(Error::InvalidDomain("ego speed must be non-negative".into()));
        }
        Ok(())
    }
}

/// One initial configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub road_topology: RoadTopology,
    pub curvature: f64,
    pub road_length: f64,
    pub lane_width: f64,
    pub weather: Weather,
    pub weather_intensity: f64,
    pub brightness: f64,
    pub ego_speed: f64,
    pub rng_seed: u64,
}

impl Scenario {
    /// Largest curvature magnitude actually present on the road.
    pub fn max_abs_curvature(&self) -> f64 {
        match self.road_topology {
            RoadTopology::Straight => 0.0,
            _ => self.curvature.abs(),
        }
    }

    /// Signed (left-positive) curvature of each constant-curvature piece with
    /// its share of the road length.
    pub fn curvature_profile(&self) -> Vec<(f64, f64)> {
        let k = self.curvature.abs();
        match self.road_topology {
            RoadTopology::Straight => vec![(1.0, 0.0)],
            RoadTopology::LeftCurved => vec![(1.0, k)],
            RoadTopology::RightCurved => vec![(1.0, -k)],
            RoadTopology::SCurve => vec![(0.5, k), (0.5, -k)],
        }
    }
}

pub fn scenario_id(seed: u64) -> String {
    format!("scn-{seed:016x}")
}

/// Empty iff `s` is a valid member of `d`. Out-of-range fields are reported
/// as `in_range` violations rather than errors.
pub fn check_constraints(s: &Scenario, d: &DomainModel) -> Vec<ConstraintViolation> {
    let mut out = Vec::new();
    let mut range = |field: &str, value: f64, r: &Interval| {
        if !value.is_finite() || !r.contains(value) {
            out.push(ConstraintViolation {
                constraint: "in_range".into(),
                reason: format!("{field} = {value} outside [{}, {}]", r.min, r.max),
            });
        }
    };
    range("curvature", s.curvature, &d.curvature_range);
    range("road_length", s.road_length, &d.road_length_range);
    range("lane_width", s.lane_width, &d.lane_width_range);
    range("weather_intensity", s.weather_intensity, &d.weather_intensity_range);
    range("brightness", s.brightness, &d.daytime_brightness_range);
    range("ego_speed", s.ego_speed, &d.ego_speed_range);
    if !d.road_topology_choices.contains(&s.road_topology) {
        out.push(ConstraintViolation {
            constraint: "in_range".into(),
            reason: format!("road_topology {:?} not allowed", s.road_topology),
        });
    }
    if !d.weather_choices.contains(&s.weather) {
        out.push(ConstraintViolation {
            constraint: "in_range".into(),
            reason: format!("weather {} not allowed", s.weather),
        });
    }
    out.extend(d.constraint_set.iter().filter_map(|c| c.evaluate(s)));
    out
}

pub fn sample_scenario(d: &DomainModel, seed: u64) -> Result<Scenario> {
    sample_scenario_with_budget(d, seed, DEFAULT_ATTEMPT_BUDGET)
}

/// Uniform draw per field, rejected until every constraint holds.
pub fn sample_scenario_with_budget(d: &DomainModel, seed: u64, attempts: usize) -> Result<Scenario> {
    d.validate()?;
    let topologies: Vec<_> = d.road_topology_choices.iter().copied().collect();
    let weathers: Vec<_> = d.weather_choices.iter().copied().collect();
    let mut rng = seed::rng(seed);
    for _ in 0..attempts {
        let candidate = Scenario {
            id: scenario_id(seed),
            road_topology: topologies[rng.random_range(0..topologies.len())],
            curvature: d.curvature_range.sample(&mut rng),
            road_length: d.road_length_range.sample(&mut rng),
            lane_width: d.lane_width_range.sample(&mut rng),
            weather: weathers[rng.random_range(0..weathers.len())],
            weather_intensity: d.weather_intensity_range.sample(&mut rng),
            brightness: d.daytime_brightness_range.sample(&mut rng),
            ego_speed: d.ego_speed_range.sample(&mut rng),
            rng_seed: seed,
        };
        if check_constraints(&candidate, d).is_empty() {
            return Ok(candidate);
        }
    }
    Err(Error::SamplingExhausted { attempts })
}

/// Field overrides for [`restrict`]; `None` keeps the parent's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Restriction {
    pub road_topology_choices: Option<BTreeSet<RoadTopology>>,
    pub curvature_range: Option<Interval>,
    pub road_length_range: Option<Interval>,
    pub lane_width_range: Option<Interval>,
    pub weather_choices: Option<BTreeSet<Weather>>,
    pub weather_intensity_range: Option<Interval>,
    pub daytime_brightness_range: Option<Interval>,
    pub ego_speed_range: Option<Interval>,
}

impl Restriction {
    pub fn weather(mut self, choices: impl IntoIterator<Item = Weather>) -> Self {
        self.weather_choices = Some(choices.into_iter().collect());
        self
    }

    pub fn topologies(mut self, choices: impl IntoIterator<Item = RoadTopology>) -> Self {
        self.road_topology_choices = Some(choices.into_iter().collect());
        self
    }

    pub fn ego_speed(mut self, range: Interval) -> Self {
        self.ego_speed_range = Some(range);
        self
    }

    pub fn curvature(mut self, range: Interval) -> Self {
        self.curvature_range = Some(range);
        self
    }
}

/// Sub-model of `d`. Every override must lie within the parent.
pub fn restrict(d: &DomainModel, keep: &Restriction) -> Result<DomainModel> {
    fn narrow(field: &'static str, parent: &Interval, child: Option<Interval>) -> Result<Interval> {
        match child {
            None => Ok(*parent),
            Some(c) if !c.is_well_formed() => Err(Error::RestrictionOutsideParent {
                field,
                reason: format!("[{}, {}] is empty or not finite", c.min, c.max),
            }),
            Some(c) if !c.is_subset_of(parent) => Err(Error::RestrictionOutsideParent {
                field,
                reason: format!(
                    "[{}, {}] not within [{}, {}]",
                    c.min, c.max, parent.min, parent.max
                ),
            }),
            Some(c) => Ok(c),
        }
    }
    fn subset<T: Ord + Clone + fmt::Debug>(
        field: &'static str,
        parent: &BTreeSet<T>,
        child: &Option<BTreeSet<T>>,
    ) -> Result<BTreeSet<T>> {
        match child {
            None => Ok(parent.clone()),
            Some(c) if c.is_empty() => Err(Error::RestrictionOutsideParent {
                field,
                reason: "empty choice set".into(),
            }),
            Some(c) if !c.is_subset(parent) => Err(Error::RestrictionOutsideParent {
                field,
                reason: format!("{c:?} not within {parent:?}"),
            }),
            Some(c) => Ok(c.clone()),
        }
    }

    d.validate()?;
    Ok(DomainModel {
        road_topology_choices: subset(
            "road_topology_choices",
            &d.road_topology_choices,
            &keep.road_topology_choices,
        )?,
        curvature_range: narrow("curvature_range", &d.curvature_range, keep.curvature_range)?,
        road_length_range: narrow("road_length_range", &d.road_length_range, keep.road_length_range)?,
        lane_width_range: narrow("lane_width_range", &d.lane_width_range, keep.lane_width_range)?,
        weather_choices: subset("weather_choices", &d.weather_choices, &keep.weather_choices)?,
        weather_intensity_range: narrow(
            "weather_intensity_range",
            &d.weather_intensity_range,
            keep.weather_intensity_range,
        )?,
        daytime_brightness_range: narrow(
            "daytime_brightness_range",
            &d.daytime_brightness_range,
            keep.daytime_brightness_range,
        )?,
        ego_speed_range: narrow("ego_speed_range", &d.ego_speed_range, keep.ego_speed_range)?,
        constraint_set: d.constraint_set.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base(d: &DomainModel) -> Scenario {
        Scenario {
            id: "t".into(),
            road_topology: RoadTopology::Straight,
            curvature: 0.0,
            road_length: 500.0,
            lane_width: 3.5,
            weather: Weather::Sunny,
            weather_intensity: 0.5,
            brightness: 0.8,
            ego_speed: d.ego_speed_range.max,
            rng_seed: 0,
        }
    }

    fn names(v: &[ConstraintViolation]) -> Vec<&str> {
        v.iter().map(|c| c.constraint.as_str()).collect()
    }

    #[test]
    fn straight_road_has_no_speed_limit() {
        let d = DomainModel::default();
        assert!(check_constraints(&base(&d), &d).is_empty());
    }

    #[test]
    fn fast_on_tight_curve_violates_speed_on_curve() {
        let mut d = DomainModel::default();
        d.curvature_range = Interval::new(0.0, 0.05);
        let mut s = base(&d);
        s.road_topology = RoadTopology::LeftCurved;
        s.curvature = 0.05;
        s.ego_speed = 12.0;
        assert_eq!(names(&check_constraints(&s, &d)), ["speed_on_curve"]);
    }

    #[test]
    fn fog_without_intensity_is_degenerate() {
        let d = DomainModel::default();
        let mut s = base(&d);
        s.weather = Weather::Fog;
        s.weather_intensity = 0.0;
        assert_eq!(names(&check_constraints(&s, &d)), ["degenerate_weather"]);
    }

    #[test]
    fn short_road_and_out_of_range_fields_are_reported() {
        let d = DomainModel::default();
        let mut s = base(&d);
        s.road_length = 380.0;
        let v = check_constraints(&s, &d);
        assert_eq!(names(&v), ["in_range", "min_road_length"]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = DomainModel::default();
        assert_eq!(sample_scenario(&d, 7).unwrap(), sample_scenario(&d, 7).unwrap());
        assert_ne!(sample_scenario(&d, 7).unwrap(), sample_scenario(&d, 8).unwrap());
    }

    #[test]
    fn singleton_model_yields_its_unique_scenario() {
        let d = DomainModel {
            road_topology_choices: [RoadTopology::RightCurved].into_iter().collect(),
            curvature_range: Interval::point(0.02),
            road_length_range: Interval::point(500.0),
            lane_width_range: Interval::point(3.5),
            weather_choices: [Weather::Rain].into_iter().collect(),
            weather_intensity_range: Interval::point(0.4),
            daytime_brightness_range: Interval::point(0.9),
            ego_speed_range: Interval::point(9.0),
            constraint_set: DomainModel::default().constraint_set,
        };
        let s = sample_scenario(&d, 99).unwrap();
        assert_eq!(s.road_topology, RoadTopology::RightCurved);
        assert_eq!(
            (s.curvature, s.road_length, s.lane_width, s.weather_intensity, s.brightness, s.ego_speed),
            (0.02, 500.0, 3.5, 0.4, 0.9, 9.0)
        );
        assert_eq!(s.weather, Weather::Rain);
    }

    #[test]
    fn batch_from_full_model_passes_checker() {
        let d = DomainModel::default();
        let batch: Vec<_> = (0..100).map(|i| sample_scenario(&d, i).unwrap()).collect();
        assert_eq!(batch.len(), 100);
        assert!(batch.iter().all(|s| check_constraints(s, &d).is_empty()));
    }

    #[test]
    fn infeasible_model_exhausts_budget() {
        let d = restrict(
            &DomainModel::default(),
            &Restriction::default()
                .topologies([RoadTopology::LeftCurved])
                .curvature(Interval::point(0.04))
                .ego_speed(Interval::point(15.0)),
        )
        .unwrap();
        assert!(matches!(
            sample_scenario_with_budget(&d, 1, 50),
            Err(Error::SamplingExhausted { attempts: 50 })
        ));
    }

    #[test]
    fn restrict_to_sunny_only_samples_sunny() {
        let d = restrict(&DomainModel::default(), &Restriction::default().weather([Weather::Sunny]))
            .unwrap();
        assert!((0..200).all(|i| sample_scenario(&d, i).unwrap().weather == Weather::Sunny));
    }

    #[test]
    fn empty_restriction_is_identity() {
        let d = DomainModel::default();
        assert_eq!(restrict(&d, &Restriction::default()).unwrap(), d);
    }

    #[test]
    fn point_speed_restriction() {
        let d = restrict(
            &DomainModel::default(),
            &Restriction::default().ego_speed(Interval::point(10.0)),
        )
        .unwrap();
        assert!((0..50).all(|i| sample_scenario(&d, i).unwrap().ego_speed == 10.0));
    }

    #[test]
    fn restriction_outside_parent_is_rejected() {
        let d = DomainModel::sunny();
        let err = restrict(&d, &Restriction::default().weather([Weather::Fog])).unwrap_err();
        assert!(matches!(err, Error::RestrictionOutsideParent { field: "weather_choices", .. }));
        let err = restrict(&d, &Restriction::default().ego_speed(Interval::new(1.0, 10.0)))
            .unwrap_err();
        assert!(matches!(err, Error::RestrictionOutsideParent { field: "ego_speed_range", .. }));
    }

    #[test]
    fn json_uses_declared_field_names() {
        let d = DomainModel::default();
        let v = serde_json::to_value(&d).unwrap();
        for key in [
            "road_topology_choices",
            "curvature_range",
            "road_length_range",
            "lane_width_range",
            "weather_choices",
            "weather_intensity_range",
            "daytime_brightness_range",
            "ego_speed_range",
            "constraint_set",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["constraint_set"][0]["name"], "speed_on_curve");
        let back: DomainModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn every_sample_is_valid(seed in any::<u64>()) {
            let d = DomainModel::default();
            let s = sample_scenario(&d, seed).unwrap();
            prop_assert!(check_constraints(&s, &d).is_empty());
        }

        #[test]
        fn restriction_is_monotone(seed in any::<u64>(), lo in 5.0f64..15.0, width in 0.0f64..5.0) {
            let parent = DomainModel::default();
            let hi = (lo + width).min(15.0);
            let child = restrict(
                &parent,
                &Restriction::default()
                    .ego_speed(Interval::new(lo, hi))
                    .weather([Weather::Sunny, Weather::Fog]),
            ).unwrap();
            if let Ok(s) = sample_scenario(&child, seed) {
                prop_assert!(check_constraints(&s, &child).is_empty());
                prop_assert!(check_constraints(&s, &parent).is_empty());
            }
        }
    }
}
