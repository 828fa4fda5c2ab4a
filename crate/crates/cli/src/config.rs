//! Campaign configuration file. Every field has a default, so `{}` is a
//! valid configuration; command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lanebench_core::offline::RecordingConfig;
use lanebench_core::scenario::{Interval, Restriction};
use lanebench_core::{ControllerKind, DomainModel, SimConfig, Thresholds, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// JSON domain model; the built-in full model when absent.
    pub domain_model: Option<PathBuf>,
    /// Narrows the domain model for the evaluated scenarios.
    pub restriction: Option<Restriction>,
    pub count: usize,
    pub sim: SimConfig,
    pub controller: ControllerSpec,
    pub training: TrainingSpec,
    pub matching: MatchingSpec,
    pub thresholds: Thresholds,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    /// Also write every generated dataset to disk during a campaign.
    pub save_datasets: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            domain_model: None,
            restriction: None,
            count: 50,
            sim: SimConfig::default(),
            controller: ControllerSpec::default(),
            training: TrainingSpec::default(),
            matching: MatchingSpec::default(),
            thresholds: Thresholds::default(),
            seed: 0,
            out: PathBuf::from("out"),
            jobs: None,
            save_datasets: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    /// Trained parameters. Biased and noisy controllers wrap this model
    /// when given and the oracle otherwise.
    pub model: Option<PathBuf>,
    pub bias: f64,
    pub sigma: f64,
    /// History length of a windowed controller trained by the campaign.
    pub window: usize,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Learned,
            model: None,
            bias: 0.0,
            sigma: 0.0,
            window: lanebench_core::controllers::DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    /// Scenarios generated for training when no model file is given.
    pub count: usize,
    /// Domain of the training scenarios; the campaign domain when absent.
    pub domain_model: Option<PathBuf>,
    pub config: TrainConfig,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            count: 60,
            domain_model: None,
            config: TrainConfig {
                frame_stride: 2,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingSpec {
    /// Generated scenarios matched against the recording; 0 skips matching.
    pub count: usize,
    pub epsilon: f64,
    pub recording: RecordingConfig,
    /// Model for the recording and the matched scenarios; sunny at the
    /// recording speed when absent.
    pub domain_model: Option<PathBuf>,
}

impl Default for MatchingSpec {
    fn default() -> Self {
        Self {
            count: 100,
            epsilon: lanebench_core::matching::DEFAULT_EPSILON,
            recording: RecordingConfig::default(),
            domain_model: None,
        }
    }
}

impl CampaignConfig {
    /// Reads `path`, resolving relative file references against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
        let mut cfg: CampaignConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        resolve(&mut cfg.domain_model);
        resolve(&mut cfg.controller.model);
        resolve(&mut cfg.training.domain_model);
        resolve(&mut cfg.matching.domain_model);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.count == 0 {
            return Err(CliError::Config("count must be at least 1".into()));
        }
        self.sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for p in [&self.domain_model, &self.controller.model, &self.training.domain_model, &self.matching.domain_model]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(CliError::Missing(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<DomainModel, CliError> {
        let base = load_domain(self.domain_model.as_deref())?;
        match &self.restriction {
            Some(r) => Ok(lanebench_core::restrict(&base, r)?),
            None => Ok(base),
        }
    }

    pub fn training_domain(&self) -> Result<DomainModel, CliError> {
        match &self.training.domain_model {
            Some(p) => load_domain(Some(p)),
            None => self.domain(),
        }
    }

    pub fn matching_domain(&self) -> Result<DomainModel, CliError> {
        let base = match &self.matching.domain_model {
            Some(p) => load_domain(Some(p))?,
            None => DomainModel::sunny(),
        };
        let speed = Interval::point(self.matching.recording.speed);
        Ok(lanebench_core::restrict(&base, &Restriction::default().ego_speed(speed))?)
    }
}

pub fn load_domain(path: Option<&Path>) -> Result<DomainModel, CliError> {
    let Some(path) = path else {
        return Ok(DomainModel::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
    let d: DomainModel =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    d.validate()?;
    Ok(d)
}
