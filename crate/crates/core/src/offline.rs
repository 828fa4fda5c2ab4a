//! Labeled datasets (simulated and pseudo-real) and open-loop evaluation.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::Image;
use crate::controllers::{Controller, Observation};
use crate::dynamics::SimConfig;
use crate::online::{drive, oracle_decision, Stop};
use crate::scenario::{restrict, sample_scenario, DomainModel, Interval, Restriction, Scenario};
use crate::seed;
use crate::world::{build_road, Road, Segment};
use crate::{Error, Result};

/// Default per-frame standard deviation of pseudo-real label jitter.
pub const DEFAULT_JITTER_SIGMA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Simulated,
    PseudoReal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub image: Image,
    pub theta_label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// In recording order; order is meaningful.
    pub frames: Vec<LabeledFrame>,
    pub provenance: Provenance,
    /// Scenario id for generated data, recording id for recordings.
    pub source_id: String,
    pub fps: f64,
    pub scenario: Option<Scenario>,
    /// The road ended before the configured number of steps.
    pub truncated: bool,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.theta_label).collect()
    }

    /// `r_(x,l)`: frames `x+1 ..= x+l` in 1-based terms.
    pub fn subsequence(&self, offset: usize, length: usize) -> Result<LabeledDataset> {
        if length == 0 || offset + length > self.frames.len() {
            return Err(Error::InvalidArgument(format!(
                "subsequence ({offset}, {length}) outside {} frames",
                self.frames.len()
            )));
        }
        Ok(LabeledDataset {
            frames: self.frames[offset..offset + length].to_vec(),
            provenance: self.provenance,
            source_id: format!("{}[{offset}+{length}]", self.source_id),
            fps: self.fps,
            scenario: self.scenario.clone(),
            truncated: false,
        })
    }

    /// Writes `manifest.json`, `labels.csv` and `frames/NNNNN.pgm` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir)?;
        let (width, height) = self
            .frames
            .first()
            .map(|f| (f.image.width(), f.image.height()))
            .unwrap_or((0, 0));
        let manifest = Manifest {
            provenance: self.provenance,
            fps: self.fps,
            source_id: self.source_id.clone(),
            scenario: self.scenario.clone(),
            truncated: self.truncated,
            frame_count: self.frames.len(),
            width,
            height,
        };
        let mut f = std::fs::File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;

        let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
        w.write_record(["frame_index", "theta_label"])?;
        for (i, frame) in self.frames.iter().enumerate() {
            w.write_record([i.to_string(), frame.theta_label.to_string()])?;
            frame.image.save_pgm(&frames_dir.join(format!("{i:05}.pgm")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
        let labels_path = dir.join("labels.csv");
        let mut reader = csv::Reader::from_path(&labels_path)?;
        let mut frames = Vec::with_capacity(manifest.frame_count);
        for (expected, row) in reader.deserialize::<LabelRow>().enumerate() {
            let row = row?;
            if row.frame_index != expected {
                return Err(Error::Format {
                    path: labels_path,
                    reason: format!("frame_index {} out of order", row.frame_index),
                });
            }
            let image = Image::load_pgm(&dir.join("frames").join(format!("{expected:05}.pgm")))?;
            frames.push(LabeledFrame {
                image,
                theta_label: row.theta_label,
            });
        }
        if frames.len() != manifest.frame_count {
            return Err(Error::Format {
                path: manifest_path,
                reason: format!(
                    "manifest lists {} frames, labels.csv has {}",
                    manifest.frame_count,
                    frames.len()
                ),
            });
        }
        Ok(Self {
            frames,
            provenance: manifest.provenance,
            source_id: manifest.source_id,
            fps: manifest.fps,
            scenario: manifest.scenario,
            truncated: manifest.truncated,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    provenance: Provenance,
    fps: f64,
    source_id: String,
    scenario: Option<Scenario>,
    truncated: bool,
    frame_count: usize,
    width: usize,
    height: usize,
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    frame_index: usize,
    theta_label: f64,
}

/// Drives `road` with the oracle (optionally jittered) and records every
/// rendered frame with the executed command as its label.
fn record(
    road: &Road,
    appearance: &Scenario,
    cfg: &SimConfig,
    steps: usize,
    jitter: Option<(f64, u64)>,
) -> Result<(Vec<LabeledFrame>, bool)> {
    let noise = match jitter {
        Some((sigma, _)) if sigma > 0.0 => Some(
            Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        ),
        Some((sigma, _)) if sigma < 0.0 || sigma.is_nan() => {
            return Err(Error::InvalidArgument(format!("jitter sigma {sigma} < 0")))
        }
        _ => None,
    };
    let mut rng = seed::rng(jitter.map_or(0, |(_, s)| seed::substream(s, 0x4A49_5454)));
    let mut frames = Vec::with_capacity(steps);
    let stop = drive(
        road,
        appearance,
        cfg,
        steps,
        true,
        None,
        |view| {
            let theta = oracle_decision(road, cfg, view)?;
            Ok(match &noise {
                Some(n) => (theta + n.sample(&mut rng)).clamp(-1.0, 1.0),
                None => theta,
            })
        },
        |tick, image| {
            frames.push(LabeledFrame {
                image: image.expect("rendering enabled"),
                theta_label: tick.command,
            })
        },
    )?;
    if frames.is_empty() {
        return Err(Error::EmptyInput("dataset: the road ended before the first frame"));
    }
    Ok((frames, stop == Stop::EndOfRoad))
}

/// `sim(s)`: the oracle drives the scenario and labels every frame.
pub fn generate_sim_dataset(s: &Scenario, cfg: &SimConfig) -> Result<LabeledDataset> {
    let road = build_road(s);
    let (frames, truncated) = record(&road, s, cfg, cfg.steps_m(), None)?;
    Ok(LabeledDataset {
        frames,
        provenance: Provenance::Simulated,
        source_id: s.id.clone(),
        fps: cfg.fps(),
        scenario: Some(s.clone()),
        truncated,
    })
}

/// Oracle steering plus seeded zero-mean jitter, used both as the label and
/// as the executed command, emulating a human recording.
pub fn generate_pseudo_real_dataset(
    s: &Scenario,
    cfg: &SimConfig,
    jitter_sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let road = build_road(s);
    let (frames, truncated) = record(&road, s, cfg, cfg.steps_m(), Some((jitter_sigma, seed)))?;
    Ok(LabeledDataset {
        frames,
        provenance: Provenance::PseudoReal,
        source_id: format!("rec-{:016x}", seed),
        fps: cfg.fps(),
        scenario: Some(s.clone()),
        truncated,
    })
}

/// A long drive assembled from legs sampled out of a domain model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingRoute {
    pub id: String,
    /// Supplies speed, lane width and appearance for the whole drive.
    pub template: Scenario,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordingConfig {
    pub frames: usize,
    pub speed: f64,
    /// Length of each leg, meters.
    pub leg_length: Interval,
    pub jitter_sigma: f64,
}

impl Default for RecordingConfig {
    fn default() -> Self {
        Self {
            frames: 5000,
            speed: 10.0,
            leg_length: Interval::new(250.0, 400.0),
            jitter_sigma: DEFAULT_JITTER_SIGMA,
        }
    }
}

/// Chains legs drawn from `d` (at the recording speed) until the route
/// covers `rc.frames` frames of driving.
pub fn plan_recording(
    d: &DomainModel,
    cfg: &SimConfig,
    rc: &RecordingConfig,
    seed: u64,
) -> Result<RecordingRoute> {
    let legs_model = restrict(d, &Restriction::default().ego_speed(Interval::point(rc.speed)))?;
    if !rc.leg_length.is_well_formed() || rc.leg_length.min <= 0.0 {
        return Err(Error::InvalidArgument("leg length range must be positive".into()));
    }
    let needed = rc.frames as f64 * cfg.t_delta * rc.speed + 20.0;
    let mut rng = seed::rng(seed::substream(seed, 0x524F_5554));
    let mut segments = Vec::new();
    let mut template = None;
    let mut total = 0.0;
    let mut leg = 0u64;
    while total < needed {
        let s = sample_scenario(&legs_model, seed::substream(seed, leg))?;
        let length = if rc.leg_length.min == rc.leg_length.max {
            rc.leg_length.min
        } else {
            rng.random_range(rc.leg_length.min..=rc.leg_length.max)
        };
        segments.extend(s.curvature_profile().into_iter().map(|(share, curvature)| Segment {
            length: share * length,
            curvature,
        }));
        total += length;
        template.get_or_insert(s);
        leg += 1;
    }
    let id = format!("rec-{seed:016x}");
    let mut template = template.expect("at least one leg");
    template.id = id.clone();
    template.road_length = total;
    template.rng_seed = seed;
    Ok(RecordingRoute {
        id,
        template,
        segments,
    })
}

/// Pseudo-real recording of `rc.frames` frames along `route`.
pub fn generate_recording(
    route: &RecordingRoute,
    cfg: &SimConfig,
    rc: &RecordingConfig,
    seed: u64,
) -> Result<LabeledDataset> {
    let road = Road::from_segments(&route.segments, route.template.lane_width)?;
    let (frames, truncated) = record(&road, &route.template, cfg, rc.frames, Some((rc.jitter_sigma, seed)))?;
    Ok(LabeledDataset {
        frames,
        provenance: Provenance::PseudoReal,
        source_id: route.id.clone(),
        fps: cfg.fps(),
        scenario: Some(route.template.clone()),
        truncated,
    })
}

fn check_lengths(labels: &[f64], preds: &[f64]) -> Result<()> {
    if labels.len() != preds.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: preds.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    Ok(())
}

pub fn mae(labels: &[f64], preds: &[f64]) -> Result<f64> {
    check_lengths(labels, preds)?;
    let sum: f64 = labels.iter().zip(preds).map(|(t, p)| (t - p).abs()).sum();
    Ok(sum / labels.len() as f64)
}

pub fn rmse(labels: &[f64], preds: &[f64]) -> Result<f64> {
    check_lengths(labels, preds)?;
    let sum: f64 = labels.iter().zip(preds).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sum / labels.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineResult {
    pub mae: f64,
    pub rmse: f64,
    pub per_frame_abs_error: Vec<f64>,
    pub predictions: Vec<f64>,
}

/// Feeds the frames in order; predictions never influence later frames.
pub fn evaluate_offline(c: &Controller, ds: &LabeledDataset) -> Result<OfflineResult> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let window = c.history_window();
    let mut history: VecDeque<usize> = VecDeque::with_capacity(window + 1);
    let mut predictions = Vec::with_capacity(ds.len());
    for j in 0..ds.len() {
        if history.len() == window {
            history.pop_front();
        }
        history.push_back(j);
        let frames: Vec<Observation<'_>> = history
            .iter()
            .map(|&i| Observation {
                index: i,
                image: &ds.frames[i].image,
                reference_label: Some(ds.frames[i].theta_label),
            })
            .collect();
        predictions.push(c.predict(&frames)?);
    }
    let labels = ds.labels();
    let per_frame_abs_error = labels.iter().zip(&predictions).map(|(t, p)| (t - p).abs()).collect();
    Ok(OfflineResult {
        mae: mae(&labels, &predictions)?,
        rmse: rmse(&labels, &predictions)?,
        per_frame_abs_error,
        predictions,
    })
}
