//! `lanebench`: reproducible offline-versus-online testing campaigns.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::DatasetKind;
use config::CampaignConfig;
use error::CliError;
use lanebench_core::ControllerKind;

#[derive(Debug, Parser)]
#[command(name = "lanebench", version, about = "Compare offline and online testing of a lane-keeping controller")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Campaign configuration (JSON). Defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; per-scenario seeds are derived as seed XOR index.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-scenario work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Number of scenarios.
    #[arg(long, global = true)]
    count: Option<usize>,
    /// Controller kind: oracle, learned, windowed, biased or noisy.
    #[arg(long, global = true, value_parser = parse_kind)]
    controller: Option<ControllerKind>,
    /// Trained model file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Steering offset of a biased controller.
    #[arg(long, global = true, allow_negative_numbers = true)]
    bias: Option<f64>,
    /// Noise standard deviation of a noisy controller.
    #[arg(long, global = true)]
    sigma: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample scenarios from the domain model into OUT/scenarios.
    Sample,
    /// Generate labeled datasets into OUT/datasets.
    Dataset {
        #[arg(long, value_enum, default_value_t = DatasetKind::Sim)]
        kind: DatasetKind,
        /// Scenario directory (default OUT/scenarios).
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Label jitter standard deviation for pseudo-real data.
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Train the learned controller into OUT/model.bin.
    Train {
        /// Dataset directory; training scenarios are generated when absent.
        #[arg(long)]
        datasets: Option<PathBuf>,
    },
    /// Open-loop evaluation into OUT/offline.csv.
    Offline {
        /// Dataset directory (default OUT/datasets/sim).
        #[arg(long)]
        datasets: Option<PathBuf>,
    },
    /// Closed-loop evaluation into OUT/traces and OUT/online.csv.
    Online {
        /// Scenario directory (default OUT/scenarios).
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
    /// Match generated datasets against a recording into OUT/matches.csv.
    Match {
        /// Generated datasets (default OUT/datasets/sim).
        #[arg(long)]
        sim: Option<PathBuf>,
        /// The recording's dataset directory, or a directory holding only it.
        #[arg(long)]
        real: Option<PathBuf>,
    },
    /// Agreement table and plots into OUT/report.
    Analyze {
        #[arg(long)]
        offline: Option<PathBuf>,
        #[arg(long)]
        online: Option<PathBuf>,
        /// Matched pairs with offline scores (OUT/pairs.json when present).
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Every step above in sequence.
    Campaign,
}

fn parse_kind(s: &str) -> Result<ControllerKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .map_err(|_| format!("unknown controller kind `{s}` (oracle, learned, windowed, biased, noisy)"))
}

fn resolve_config(common: &Common) -> Result<CampaignConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.training.config.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = Some(jobs);
    }
    if let Some(count) = common.count {
        cfg.count = count;
    }
    if let Some(kind) = common.controller {
        cfg.controller.kind = kind;
    }
    if let Some(model) = &common.model {
        cfg.controller.model = Some(model.clone());
    }
    if let Some(bias) = common.bias {
        cfg.controller.bias = bias;
    }
    if let Some(sigma) = common.sigma {
        cfg.controller.sigma = sigma;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let cfg = resolve_config(&cli.common)?;
    if let Some(jobs) = cfg.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cfg.out.clone();
    let or = |p: Option<PathBuf>, default: &[&str]| p.unwrap_or_else(|| default.iter().fold(out.clone(), |a, b| a.join(b)));
    let line = match cli.command {
        Command::Sample => commands::cmd_sample(&cfg)?,
        Command::Dataset { kind, scenarios, jitter } => {
            commands::cmd_dataset(&cfg, &or(scenarios, &["scenarios"]), kind, jitter)?
        }
        Command::Train { datasets } => commands::cmd_train(&cfg, datasets.as_deref())?,
        Command::Offline { datasets } => commands::cmd_offline(&cfg, &or(datasets, &["datasets", "sim"]))?,
        Command::Online { scenarios } => commands::cmd_online(&cfg, &or(scenarios, &["scenarios"]))?,
        Command::Match { sim, real } => {
            commands::cmd_match(&cfg, &or(sim, &["datasets", "sim"]), &or(real, &["datasets", "real"]))?
        }
        Command::Analyze { offline, online, pairs } => {
            let pairs = pairs.or_else(|| Some(out.join("pairs.json")).filter(|p| p.exists()));
            commands::cmd_analyze(
                &cfg,
                &or(offline, &["offline.csv"]),
                &or(online, &["online.csv"]),
                pairs.as_deref(),
            )?
        }
        Command::Campaign => return commands::cmd_campaign(&cfg),
    };
    Ok(vec![line])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
