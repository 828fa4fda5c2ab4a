//! Closed-loop simulation and the MDCL lane-departure metric.
//!
//! At step `j` the camera renders image `i_j` from the current state, the
//! controller predicts `theta_j`, and the dynamics step with `theta_j`
//! yields the state that renders `i_{j+1}`.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::{apply_weather, Camera, Image};
use crate::controllers::{oracle_steering_from, Controller, Observation, DEFAULT_LOOKAHEAD};
use crate::dynamics::{step, SimConfig, VehicleState};
use crate::scenario::Scenario;
use crate::world::{build_road, Projection, Road};
use crate::{Error, Result};

/// Deviation at which a run counts as a full lane departure.
pub const MDCL_CAP: f64 = 1.5;

/// Runs stop once the vehicle is this far from the centerline.
pub const ABORT_DEVIATION: f64 = 3.0;

/// Arc-length search radius when re-projecting the vehicle each step.
const TRACKING_RADIUS: f64 = 6.0;

/// What the per-step decision sees.
pub(crate) struct StepView<'a> {
    pub index: usize,
    pub pose: VehicleState,
    pub projection: Projection,
    pub image: Option<&'a Image>,
}

pub(crate) struct Tick {
    pub index: usize,
    pub pose: VehicleState,
    pub projection: Projection,
    pub command: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stop {
    Completed,
    Aborted,
    EndOfRoad,
}

/// Shared simulation loop used by dataset generation and closed-loop runs.
/// `decide` returns the executed command; `record` receives each step with
/// its rendered image when `render` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive(
    road: &Road,
    scenario: &Scenario,
    cfg: &SimConfig,
    steps: usize,
    render: bool,
    abort_at: Option<f64>,
    mut decide: impl FnMut(&StepView<'_>) -> Result<f64>,
    mut record: impl FnMut(Tick, Option<Image>),
) -> Result<Stop> {
    cfg.validate()?;
    let camera = Camera::default();
    let mut pose = VehicleState::at_origin(scenario.ego_speed);
    let mut s_prev = 0.0;
    let radius = TRACKING_RADIUS + scenario.ego_speed * cfg.t_delta;
    for index in 0..steps {
        let projection = match road.project_near(pose.x, pose.y, s_prev, radius) {
            Ok(p) => p,
            Err(Error::EndOfRoad { .. }) => return Ok(Stop::EndOfRoad),
            Err(e) => return Err(e),
        };
        s_prev = projection.s;
        let image = if render {
            let clear = match camera.render_at(road, &pose, projection.s, cfg.image_width, cfg.image_height) {
                Ok(img) => img,
                Err(Error::EndOfRoad { .. }) => return Ok(Stop::EndOfRoad),
                Err(e) => return Err(e),
            };
            Some(apply_weather(
                &clear,
                scenario.weather,
                scenario.weather_intensity,
                scenario.brightness,
                crate::seed::substream(scenario.rng_seed, index as u64),
            ))
        } else {
            None
        };
        let view = StepView {
            index,
            pose,
            projection,
            image: image.as_ref(),
        };
        let command = match decide(&view) {
            Ok(c) => c,
            Err(Error::EndOfRoad { .. }) => return Ok(Stop::EndOfRoad),
            Err(e) => return Err(e),
        };
        record(
            Tick {
                index,
                pose,
                projection,
                command,
            },
            image,
        );
        if abort_at.is_some_and(|limit| projection.lateral.abs() >= limit) {
            return Ok(Stop::Aborted);
        }
        pose = step(&pose, command, cfg);
    }
    Ok(Stop::Completed)
}

/// Pure-pursuit decision from the true vehicle state.
pub(crate) fn oracle_decision(road: &Road, cfg: &SimConfig, view: &StepView<'_>) -> Result<f64> {
    oracle_steering_from(road, &view.pose, &view.projection, DEFAULT_LOOKAHEAD, cfg.wheelbase)
}

/// Oracle labels along the nominal, oracle-driven run of `s`.
pub fn reference_labels(s: &Scenario, cfg: &SimConfig) -> Result<Vec<f64>> {
    let road = build_road(s);
    let mut labels = Vec::with_capacity(cfg.steps_m());
    drive(
        &road,
        s,
        cfg,
        cfg.steps_m(),
        false,
        None,
        |v| oracle_decision(&road, cfg, v),
        |tick, _| labels.push(tick.command),
    )?;
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based simulation step.
    pub step: usize,
    pub time: f64,
    pub pose: VehicleState,
    pub theta_pred: f64,
    pub lateral_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub scenario_id: String,
    pub cfg: SimConfig,
    pub steps: Vec<TraceStep>,
    /// Stopped early at [`ABORT_DEVIATION`].
    pub aborted: bool,
    /// Stopped early at the end of the road.
    pub completed_road: bool,
}

impl SimulationTrace {
    fn from_ticks(s: &Scenario, cfg: &SimConfig, ticks: Vec<Tick>, stop: Stop) -> Self {
        let steps = ticks
            .into_iter()
            .map(|t| TraceStep {
                step: t.index + 1,
                time: t.index as f64 * cfg.t_delta,
                pose: t.pose,
                theta_pred: t.command,
                lateral_dev: t.projection.lateral,
            })
            .collect();
        Self {
            scenario_id: s.id.clone(),
            cfg: *cfg,
            steps,
            aborted: stop == Stop::Aborted,
            completed_road: stop == Stop::EndOfRoad,
        }
    }

    /// Writes `trace.csv` and `summary.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
        w.write_record(["step", "t", "x", "y", "heading", "theta_pred", "lateral_dev"])?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.time.to_string(),
                s.pose.x.to_string(),
                s.pose.y.to_string(),
                s.pose.heading.to_string(),
                s.theta_pred.to_string(),
                s.lateral_dev.to_string(),
            ])?;
        }
        w.flush()?;
        let summary = TraceSummary::new(self)?;
        let mut f = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut f, &summary)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub scenario_id: String,
    pub steps: usize,
    pub mdcl_raw: f64,
    pub mdcl_normalized: f64,
    pub aborted: bool,
    pub completed_road: bool,
}

impl TraceSummary {
    pub fn new(trace: &SimulationTrace) -> Result<Self> {
        let m = mdcl(trace)?;
        Ok(Self {
            scenario_id: trace.scenario_id.clone(),
            steps: trace.steps.len(),
            mdcl_raw: m.raw_max_abs_deviation,
            mdcl_normalized: m.normalized,
            aborted: trace.aborted,
            completed_road: trace.completed_road,
        })
    }
}

/// Embeds `c` in the loop for `m = floor(T / t_delta)` steps. Every frame
/// carries the nominal oracle label of its step as reference.
pub fn run_closed_loop(c: &Controller, s: &Scenario, cfg: &SimConfig) -> Result<SimulationTrace> {
    let road = build_road(s);
    let reference = reference_labels(s, cfg)?;
    let window = c.history_window();
    let render = c.uses_images();
    let blank = Image::filled(cfg.image_width, cfg.image_height, 0.0);
    let mut history: VecDeque<(usize, Option<Image>)> = VecDeque::with_capacity(window + 1);
    let mut ticks = Vec::with_capacity(cfg.steps_m());
    let stop = drive(
        &road,
        s,
        cfg,
        cfg.steps_m(),
        render,
        Some(ABORT_DEVIATION),
        |view| {
            // The nominal run stops where the oracle can no longer see ahead;
            // every controller stops there too.
            if view.index >= reference.len() {
                return Err(Error::EndOfRoad {
                    arc_position: view.projection.s,
                    road_length: road.total_length(),
                });
            }
            if history.len() == window {
                history.pop_front();
            }
            history.push_back((view.index, view.image.cloned()));
            let frames: Vec<Observation<'_>> = history
                .iter()
                .map(|(index, img)| Observation {
                    index: *index,
                    image: img.as_ref().unwrap_or(&blank),
                    reference_label: reference.get(*index).copied(),
                })
                .collect();
            c.predict(&frames)
        },
        |tick, _| ticks.push(tick),
    )?;
    Ok(SimulationTrace::from_ticks(s, cfg, ticks, stop))
}

/// Closed loop driven by pure pursuit on the true vehicle state.
pub fn run_oracle_closed_loop(s: &Scenario, cfg: &SimConfig) -> Result<SimulationTrace> {
    let road = build_road(s);
    let mut ticks = Vec::with_capacity(cfg.steps_m());
    let stop = drive(
        &road,
        s,
        cfg,
        cfg.steps_m(),
        false,
        Some(ABORT_DEVIATION),
        |v| oracle_decision(&road, cfg, v),
        |tick, _| ticks.push(tick),
    )?;
    Ok(SimulationTrace::from_ticks(s, cfg, ticks, stop))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdclValue {
    pub raw_max_abs_deviation: f64,
    /// `min(raw, 1.5) / 1.5`, so 1 marks a lane departure.
    pub normalized: f64,
}

impl MdclValue {
    pub fn from_raw(raw: f64) -> Self {
        Self {
            raw_max_abs_deviation: raw,
            normalized: raw.min(MDCL_CAP) / MDCL_CAP,
        }
    }
}

pub fn mdcl(tr: &SimulationTrace) -> Result<MdclValue> {
    mdcl_of(tr.steps.iter().map(|s| s.lateral_dev))
}

/// MDCL over raw lateral deviations.
pub fn mdcl_of(deviations: impl IntoIterator<Item = f64>) -> Result<MdclValue> {
    let mut iter = deviations.into_iter().peekable();
    if iter.peek().is_none() {
        return Err(Error::EmptyInput("trace"));
    }
    let raw = iter.fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(MdclValue::from_raw(raw))
}
