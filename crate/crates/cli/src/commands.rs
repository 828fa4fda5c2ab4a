//! Subcommand implementations. Each writes under the configured output
//! directory and returns a short human-readable summary line.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lanebench_core::analysis::{emit_report, MatchRecord};
use lanebench_core::matching::{append_match_row, find_comparable};
use lanebench_core::offline::{
    generate_pseudo_real_dataset, generate_recording, generate_sim_dataset, plan_recording, DEFAULT_JITTER_SIGMA,
};
use lanebench_core::online::TraceSummary;
use lanebench_core::seed;
use lanebench_core::{
    classify, evaluate_offline, run_closed_loop, sample_scenario, train, AgreementRecord, Controller,
    ControllerKind, LabeledDataset, Scenario, TrainConfig,
};

use crate::config::CampaignConfig;
use crate::error::CliError;

/// Seed streams keeping the scenario roles of one master seed apart.
const TRAIN_STREAM: u64 = 1;
const MATCH_STREAM: u64 = 2;
const RECORDING_STREAM: u64 = 3;
const PSEUDO_REAL_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DatasetKind {
    /// Oracle-labeled frames for each scenario.
    Sim,
    /// Each scenario driven with jittered oracle steering.
    PseudoReal,
    /// One long jittered drive assembled from restricted-model legs.
    Recording,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRow {
    pub dataset_id: String,
    pub scenario_id: String,
    pub frames: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRow {
    pub scenario_id: String,
    pub steps: usize,
    pub mdcl_raw: f64,
    pub mdcl_normalized: f64,
    pub aborted: bool,
    pub completed_road: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    if !path.exists() {
        return Err(CliError::Missing(format!("{} does not exist", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::missing(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let keep = if want_dirs {
            path.is_dir()
        } else {
            path.extension().is_some_and(|e| e == "json")
        };
        if keep {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_scenarios(dir: &Path) -> Result<Vec<Scenario>, CliError> {
    let files = sorted_entries(dir, false)?;
    if files.is_empty() {
        return Err(CliError::Missing(format!("no scenario files in {}", dir.display())));
    }
    files.iter().map(|p| read_json(p)).collect()
}

/// A directory holding one dataset, or a directory of dataset directories.
fn read_datasets(dir: &Path) -> Result<Vec<LabeledDataset>, CliError> {
    if dir.join("manifest.json").exists() {
        return Ok(vec![LabeledDataset::read_dir(dir)?]);
    }
    let dirs: Vec<PathBuf> = sorted_entries(dir, true)?
        .into_iter()
        .filter(|d| d.join("manifest.json").exists())
        .collect();
    if dirs.is_empty() {
        return Err(CliError::Missing(format!("no datasets in {}", dir.display())));
    }
    dirs.par_iter().map(|d| Ok(LabeledDataset::read_dir(d)?)).collect()
}

fn sample_many(d: &lanebench_core::DomainModel, master: u64, count: usize) -> Result<Vec<Scenario>, CliError> {
    (0..count as u64)
        .map(|i| Ok(sample_scenario(d, seed::per_item(master, i))?))
        .collect()
}

/// Builds the configured controller from an existing model file.
pub fn load_controller(cfg: &CampaignConfig) -> Result<Controller, CliError> {
    let spec = &cfg.controller;
    let model = || -> Result<Controller, CliError> {
        let path = spec.model.as_ref().ok_or_else(|| {
            CliError::Config(format!("a {:?} controller needs a model file (--model)", spec.kind))
        })?;
        if !path.exists() {
            return Err(CliError::Missing(format!("{} does not exist", path.display())));
        }
        Ok(Controller::load(path)?)
    };
    let base = || -> Result<Controller, CliError> {
        if spec.model.is_some() {
            model()
        } else {
            Ok(Controller::Oracle)
        }
    };
    Ok(match spec.kind {
        ControllerKind::Oracle => Controller::Oracle,
        ControllerKind::Learned | ControllerKind::Windowed => model()?,
        ControllerKind::Biased => Controller::biased(base()?, spec.bias),
        ControllerKind::Noisy => Controller::noisy(base()?, spec.sigma, cfg.seed),
    })
}

pub fn cmd_sample(cfg: &CampaignConfig) -> Result<String, CliError> {
    let domain = cfg.domain()?;
    let scenarios = sample_many(&domain, cfg.seed, cfg.count)?;
    let dir = cfg.out.join("scenarios");
    std::fs::create_dir_all(&dir)?;
    write_json(&cfg.out.join("domain.json"), &domain)?;
    for s in &scenarios {
        write_json(&dir.join(format!("{}.json", s.id)), s)?;
    }
    Ok(format!("wrote {} scenarios to {}", scenarios.len(), dir.display()))
}

pub fn cmd_dataset(cfg: &CampaignConfig, scenarios: &Path, kind: DatasetKind, jitter: Option<f64>) -> Result<String, CliError> {
    let root = cfg.out.join("datasets");
    let jitter = jitter.unwrap_or(match kind {
        DatasetKind::Recording => cfg.matching.recording.jitter_sigma,
        _ => DEFAULT_JITTER_SIGMA,
    });
    if kind == DatasetKind::Recording {
        let rc = lanebench_core::offline::RecordingConfig {
            jitter_sigma: jitter,
            ..cfg.matching.recording.clone()
        };
        let rec_seed = seed::substream(cfg.seed, RECORDING_STREAM);
        let route = plan_recording(&cfg.matching_domain()?, &cfg.sim, &rc, rec_seed)?;
        let ds = generate_recording(&route, &cfg.sim, &rc, rec_seed)?;
        let dir = root.join("real").join(&route.id);
        ds.write_dir(&dir)?;
        write_json(&dir.join("route.json"), &route)?;
        return Ok(format!("wrote a {}-frame recording to {}", ds.len(), dir.display()));
    }
    let scenarios = read_scenarios(scenarios)?;
    let sub = if kind == DatasetKind::Sim { "sim" } else { "pseudo_real" };
    let master = seed::substream(cfg.seed, PSEUDO_REAL_STREAM);
    scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let ds = match kind {
                DatasetKind::Sim => generate_sim_dataset(s, &cfg.sim)?,
                _ => generate_pseudo_real_dataset(s, &cfg.sim, jitter, seed::per_item(master, i as u64))?,
            };
            ds.write_dir(&root.join(sub).join(&s.id))?;
            Ok(())
        })
        .collect::<Result<Vec<()>, CliError>>()?;
    Ok(format!("wrote {} {sub} datasets to {}", scenarios.len(), root.join(sub).display()))
}

fn train_config(cfg: &CampaignConfig) -> TrainConfig {
    let mut tc = cfg.training.config.clone();
    if cfg.controller.kind == ControllerKind::Windowed {
        tc.history_window = cfg.controller.window.max(1);
    }
    tc
}

fn train_and_save(cfg: &CampaignConfig, datasets: &[LabeledDataset]) -> Result<(Controller, String), CliError> {
    let (c, report) = train(datasets, &train_config(cfg))?;
    let path = cfg.out.join("model.bin");
    std::fs::create_dir_all(&cfg.out)?;
    c.save(&path)?;
    write_json(&cfg.out.join("train_report.json"), &report)?;
    let msg = format!(
        "trained on {} samples, final training MAE {:.4}, model at {}",
        report.samples,
        report.final_mae,
        path.display()
    );
    Ok((c, msg))
}

pub fn cmd_train(cfg: &CampaignConfig, datasets: Option<&Path>) -> Result<String, CliError> {
    let sets = match datasets {
        Some(dir) => read_datasets(dir)?,
        None => generated_training_sets(cfg)?,
    };
    Ok(train_and_save(cfg, &sets)?.1)
}

fn generated_training_sets(cfg: &CampaignConfig) -> Result<Vec<LabeledDataset>, CliError> {
    if cfg.training.count == 0 {
        return Err(CliError::Config("training.count must be at least 1 to train a model".into()));
    }
    let scenarios = sample_many(&cfg.training_domain()?, seed::substream(cfg.seed, TRAIN_STREAM), cfg.training.count)?;
    scenarios
        .par_iter()
        .map(|s| Ok(generate_sim_dataset(s, &cfg.sim)?))
        .collect()
}

fn offline_row(c: &Controller, ds: &LabeledDataset) -> Result<OfflineRow, CliError> {
    let r = evaluate_offline(c, ds)?;
    Ok(OfflineRow {
        dataset_id: ds.source_id.clone(),
        scenario_id: ds.scenario.as_ref().map_or_else(|| ds.source_id.clone(), |s| s.id.clone()),
        frames: ds.len(),
        mae: r.mae,
        rmse: r.rmse,
    })
}

pub fn cmd_offline(cfg: &CampaignConfig, datasets: &Path) -> Result<String, CliError> {
    let c = load_controller(cfg)?;
    let sets = read_datasets(datasets)?;
    let mut rows = sets.par_iter().map(|ds| offline_row(&c, ds)).collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.dataset_id.cmp(&b.dataset_id));
    let path = cfg.out.join("offline.csv");
    write_csv(&path, &rows)?;
    let mean = rows.iter().map(|r| r.mae).sum::<f64>() / rows.len() as f64;
    Ok(format!("{} datasets, mean MAE {mean:.4}, rows in {}", rows.len(), path.display()))
}

fn online_row(c: &Controller, s: &Scenario, cfg: &CampaignConfig) -> Result<OnlineRow, CliError> {
    let trace = run_closed_loop(c, s, &cfg.sim)?;
    trace.write_dir(&cfg.out.join("traces").join(&s.id))?;
    let summary = TraceSummary::new(&trace)?;
    Ok(OnlineRow {
        scenario_id: s.id.clone(),
        steps: summary.steps,
        mdcl_raw: summary.mdcl_raw,
        mdcl_normalized: summary.mdcl_normalized,
        aborted: summary.aborted,
        completed_road: summary.completed_road,
    })
}

pub fn cmd_online(cfg: &CampaignConfig, scenarios: &Path) -> Result<String, CliError> {
    let c = load_controller(cfg)?;
    let scenarios = read_scenarios(scenarios)?;
    let mut rows = scenarios
        .par_iter()
        .map(|s| online_row(&c, s, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    let path = cfg.out.join("online.csv");
    write_csv(&path, &rows)?;
    let failing = rows.iter().filter(|r| r.mdcl_normalized >= cfg.thresholds.mdcl).count();
    Ok(format!(
        "{} scenarios, {failing} at or above the MDCL threshold, rows in {}",
        rows.len(),
        path.display()
    ))
}

fn match_all(
    cfg: &CampaignConfig,
    sims: &[LabeledDataset],
    real: &LabeledDataset,
    c: Option<&Controller>,
) -> Result<Vec<MatchRecord>, CliError> {
    let mut pairs = sims
        .par_iter()
        .enumerate()
        .map(|(i, ds)| {
            let m = find_comparable(ds, real, cfg.matching.epsilon, seed::per_item(cfg.seed, i as u64))?;
            let (mae_sim, mae_real) = match c {
                Some(c) => (
                    evaluate_offline(c, ds)?.mae,
                    evaluate_offline(c, &real.subsequence(m.offset_x, m.length_l)?)?.mae,
                ),
                None => (f64::NAN, f64::NAN),
            };
            Ok(MatchRecord {
                sim_id: ds.source_id.clone(),
                real_id: real.source_id.clone(),
                result: m,
                mae_sim,
                mae_real,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    pairs.sort_by(|a, b| a.sim_id.cmp(&b.sim_id));
    Ok(pairs)
}

fn write_matches(cfg: &CampaignConfig, pairs: &[MatchRecord]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("matches.csv");
    for p in pairs {
        append_match_row(&path, &p.sim_id, &p.real_id, &p.result)?;
    }
    Ok(path)
}

fn match_summary(pairs: &[MatchRecord], path: &Path) -> String {
    let comparable = pairs.iter().filter(|p| p.result.comparable).count();
    format!("{comparable}/{} comparable, rows appended to {}", pairs.len(), path.display())
}

pub fn cmd_match(cfg: &CampaignConfig, sim: &Path, real: &Path) -> Result<String, CliError> {
    let sims = read_datasets(sim)?;
    let mut reals = read_datasets(real)?;
    if reals.len() != 1 {
        return Err(CliError::Invalid(format!("{} must hold exactly one recording", real.display())));
    }
    let real = reals.remove(0);
    // Offline scores for the pairs need a usable controller.
    let c = match cfg.controller.kind {
        ControllerKind::Learned | ControllerKind::Windowed if cfg.controller.model.is_none() => None,
        _ => Some(load_controller(cfg)?),
    };
    let pairs = match_all(cfg, &sims, &real, c.as_ref())?;
    let path = write_matches(cfg, &pairs)?;
    if c.is_some() {
        write_json(&cfg.out.join("pairs.json"), &pairs)?;
    }
    Ok(match_summary(&pairs, &path))
}

fn records_from(cfg: &CampaignConfig, offline: &[OfflineRow], online: &[OnlineRow]) -> Result<Vec<AgreementRecord>, CliError> {
    online
        .iter()
        .map(|on| {
            let off = offline
                .iter()
                .find(|o| o.scenario_id == on.scenario_id)
                .ok_or_else(|| CliError::Invalid(format!("no offline result for {}", on.scenario_id)))?;
            Ok(classify(on.scenario_id.clone(), off.mae, on.mdcl_normalized, &cfg.thresholds))
        })
        .collect()
}

fn report_summary(report: &lanebench_core::analysis::Report, dir: &Path) -> String {
    let t = &report.table;
    format!(
        "n11={} n12={} n21={} n22={} (offline more optimistic: {}), report in {}",
        t.n11,
        t.n12,
        t.n21,
        t.n22,
        report.summary.offline_more_optimistic,
        dir.display()
    )
}

pub fn cmd_analyze(cfg: &CampaignConfig, offline: &Path, online: &Path, pairs: Option<&Path>) -> Result<String, CliError> {
    let records = records_from(cfg, &read_csv(offline)?, &read_csv(online)?)?;
    let pairs: Vec<MatchRecord> = match pairs {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    let dir = cfg.out.join("report");
    let report = emit_report(&records, &pairs, cfg.thresholds, &dir)?;
    Ok(report_summary(&report, &dir))
}

/// Sampling, training (when needed), offline and online evaluation,
/// recording matching and the final report, all under `cfg.out`.
pub fn cmd_campaign(cfg: &CampaignConfig) -> Result<Vec<String>, CliError> {
    let mut log = Vec::new();
    std::fs::create_dir_all(&cfg.out)?;
    for stale in ["matches.csv", "pairs.json"] {
        let p = cfg.out.join(stale);
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }
    write_json(&cfg.out.join("campaign.json"), cfg)?;

    log.push(cmd_sample(cfg)?);
    let needs_training = matches!(cfg.controller.kind, ControllerKind::Learned | ControllerKind::Windowed)
        && cfg.controller.model.is_none();
    let controller = if needs_training {
        let (c, msg) = train_and_save(cfg, &generated_training_sets(cfg)?)?;
        log.push(msg);
        c
    } else {
        load_controller(cfg)?
    };

    let scenarios = read_scenarios(&cfg.out.join("scenarios"))?;
    let mut rows = scenarios
        .par_iter()
        .map(|s| {
            let ds = generate_sim_dataset(s, &cfg.sim)?;
            if cfg.save_datasets {
                ds.write_dir(&cfg.out.join("datasets").join("sim").join(&s.id))?;
            }
            Ok((offline_row(&controller, &ds)?, online_row(&controller, s, cfg)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    rows.sort_by(|a, b| a.0.scenario_id.cmp(&b.0.scenario_id));
    let (offline, online): (Vec<OfflineRow>, Vec<OnlineRow>) = rows.into_iter().unzip();
    write_csv(&cfg.out.join("offline.csv"), &offline)?;
    write_csv(&cfg.out.join("online.csv"), &online)?;
    log.push(format!("evaluated {} scenarios offline and online", online.len()));

    let mut pairs = Vec::new();
    if cfg.matching.count > 0 {
        let rc = &cfg.matching.recording;
        let rec_seed = seed::substream(cfg.seed, RECORDING_STREAM);
        let domain = cfg.matching_domain()?;
        let route = plan_recording(&domain, &cfg.sim, rc, rec_seed)?;
        let recording = generate_recording(&route, &cfg.sim, rc, rec_seed)?;
        if cfg.save_datasets {
            let dir = cfg.out.join("datasets").join("real").join(&route.id);
            recording.write_dir(&dir)?;
            write_json(&dir.join("route.json"), &route)?;
        }
        let matched = sample_many(&domain, seed::substream(cfg.seed, MATCH_STREAM), cfg.matching.count)?;
        let sims = matched
            .par_iter()
            .map(|s| Ok(generate_sim_dataset(s, &cfg.sim)?))
            .collect::<Result<Vec<_>, CliError>>()?;
        pairs = match_all(cfg, &sims, &recording, Some(&controller))?;
        write_json(&cfg.out.join("pairs.json"), &pairs)?;
        log.push(match_summary(&pairs, &write_matches(cfg, &pairs)?));
    }

    let records = records_from(cfg, &offline, &online)?;
    let dir = cfg.out.join("report");
    let report = emit_report(&records, &pairs, cfg.thresholds, &dir)?;
    log.push(report_summary(&report, &dir));
    Ok(log)
}
