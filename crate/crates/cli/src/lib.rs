//! `smol`: synthesize frames, localize and calibrate, and run characterization campaigns.

pub mod frame;
pub mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use smol_lab::campaigns::{Campaign, RunOptions};
use smol_lab::config::{DeviceConfig, ExperimentConfig};
use smol_lab::report::{hash_json, write_campaign};

use frame::FrameConfig;
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "smol",
    version,
    about = "Magneto-oscillatory localization simulator"
)]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "SMOL_OUT_DIR", default_value = "smol-out")]
    pub out: PathBuf,
    /// Worker threads for independent trials (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Exit 0 even when some trials failed; failures stay flagged in the reports.
    #[arg(long, global = true)]
    pub partial: bool,
    /// Record per-trial wall time (reports are then no longer byte-reproducible).
    #[arg(long, global = true)]
    pub timings: bool,
    /// Device file (e.g. written by `calibrate`) replacing the config's device section.
    #[arg(long, global = true)]
    pub device: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a noisy raw frame of a static device.
    Simulate { config: PathBuf },
    /// Localize a raw frame.
    Localize {
        config: PathBuf,
        #[arg(long)]
        frame: PathBuf,
    },
    /// Fit θ_max and η from a frame recorded at a known depth.
    Calibrate {
        config: PathBuf,
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        known_z_mm: Option<f64>,
    },
    /// Translation, rotation, precision-vs-N, damping or scaling campaign.
    Sweep { config: PathBuf },
    /// Segment-wise localization of a stepped trajectory.
    Superfast { config: PathBuf },
    /// Static dipole fit versus oscillatory localization next to a moving tool.
    Interference { config: PathBuf },
    /// Closed-loop actuation along a waypoint path.
    Control { config: PathBuf },
    /// Print version information.
    Version,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Localize { .. } => "localize",
            Command::Calibrate { .. } => "calibrate",
            Command::Sweep { .. } => "sweep",
            Command::Superfast { .. } => "superfast",
            Command::Interference { .. } => "interference",
            Command::Control { .. } => "control",
            Command::Version => "version",
        }
    }

    fn accepts(&self, c: &Campaign) -> bool {
        match self {
            Command::Sweep { .. } => matches!(
                c,
                Campaign::Translation(_)
                    | Campaign::Rotation(_)
                    | Campaign::PrecisionVsN(_)
                    | Campaign::Damping(_)
                    | Campaign::Scaling(_)
            ),
            Command::Superfast { .. } => matches!(c, Campaign::Superfast(_)),
            Command::Interference { .. } => matches!(c, Campaign::Interference(_)),
            Command::Control { .. } => matches!(c, Campaign::ClosedLoop(_)),
            _ => false,
        }
    }
}

/// TOML, or JSON for a `.json` extension.
fn parse_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("config {}", path.display()))
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_device(path: &Option<PathBuf>) -> Result<Option<DeviceConfig>> {
    path.as_ref().map(|p| parse_file(p)).transpose()
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn run(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let device = load_device(&cli.device)?;
    match &cli.command {
        Command::Version => {
            println!("smol {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::Simulate { config }
        | Command::Localize { config, .. }
        | Command::Calibrate { config, .. } => {
            let mut cfg: FrameConfig = parse_file(config)?;
            if let Some(d) = device {
                cfg.device = d;
            }
            cfg.validate()?;
            let base = base_dir(config);
            create_out(&cli.out)?;
            let manifest = RunManifest::new(cli.command.name(), config, hash_json(&cfg)?, cfg.seed);
            let files = match &cli.command {
                Command::Simulate { .. } => frame::simulate(&cfg, &base, &cli.out)?,
                Command::Localize { frame, .. } => {
                    frame::localize_frame(&cfg, &base, frame, &cli.out, cli.timings)?
                }
                Command::Calibrate {
                    frame, known_z_mm, ..
                } => frame::calibrate_frame(&cfg, &base, frame, *known_z_mm, &cli.out)?,
                _ => unreachable!(),
            };
            manifest.finish(&cli.out, &files)?;
            report_files(&files);
            Ok(())
        }
        Command::Sweep { config }
        | Command::Superfast { config }
        | Command::Interference { config }
        | Command::Control { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(d) = device {
                cfg.device = d;
                cfg.validate()?;
            }
            if !cli.command.accepts(&cfg.campaign) {
                bail!(
                    "`smol {}` cannot run a `{}` campaign",
                    cli.command.name(),
                    cfg.campaign.name()
                );
            }
            let env = cfg.environment(&base_dir(config))?;
            let manifest = RunManifest::new(cli.command.name(), config, hash_json(&cfg)?, cfg.seed);
            let report = cfg.campaign.run(
                &env,
                RunOptions {
                    timings: cli.timings,
                },
            )?;
            let files = write_campaign(&cli.out, cfg.campaign.name(), &report)?;
            manifest.finish(&cli.out, &files)?;
            report_files(&files);
            let failures = report.failures();
            if failures > 0 {
                if cli.partial {
                    eprintln!("warning: {failures} trial(s) failed; see the reports");
                } else {
                    bail!("{failures} trial(s) failed; outputs were written, rerun with --partial to accept them");
                }
            }
            Ok(())
        }
    }
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}
