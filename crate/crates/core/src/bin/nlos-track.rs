use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlos_track::config::{effective_config, load_config, DEFAULT_CONFIG, parse_config};
use nlos_track::pipeline::{run_campaign, run_tagged, scene_frames, Mode, RunConfig};
use nlos_track::report::{load_traces, write_trace, write_traces, ReportBundle};
use nlos_track::scene::write_scene_csv;

#[derive(Parser)]
#[command(name = "nlos-track", version, about = "Two-stage NLOS mmWave vehicle tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed and write trace.csv and scene.csv.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run several seeds in both modes and write traces plus summary.json.
    Campaign {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute the summary from stored traces (a directory or a single CSV).
    Report {
        traces: PathBuf,
        /// Config used for the detection deadline.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a config and print it with derived quantities.
    ValidateConfig {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// two_stage or single_stage; campaign runs both when omitted.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,
    /// First-order AR coefficient of the angle model.
    #[arg(long)]
    a1: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> nlos_track::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => parse_config(DEFAULT_CONFIG)?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(steps) = self.steps {
            cfg.n_steps = Some(steps);
        }
        if let Some(snr) = self.snr_db {
            cfg.snr_db = snr;
        }
        if let Some(a1) = self.a1 {
            cfg.channel.ar = vec![a1];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json(bundle: &ReportBundle, path: &Path) -> nlos_track::Result<()> {
    fs::write(path, bundle.to_json()? + "\n")?;
    Ok(())
}

fn execute(cli: Cli) -> nlos_track::Result<()> {
    match cli.command {
        Command::Simulate { run, out } => {
            let cfg = run.resolve()?;
            fs::create_dir_all(&out)?;
            let records = run_tagged(&cfg, 0)?;
            write_trace(&records, BufWriter::new(File::create(out.join("trace.csv"))?))?;
            write_scene_csv(&scene_frames(&cfg)?, BufWriter::new(File::create(out.join("scene.csv"))?))?;
            let tail = records.iter().rev().find(|r| r.pos_error.is_finite());
            eprintln!(
                "{} steps, final position error {}",
                records.len(),
                tail.map_or("n/a".into(), |r| format!("{:.2} m", r.pos_error))
            );
        }
        Command::Campaign { run, seeds, out } => {
            let cfg = run.resolve()?;
            let modes: Vec<Mode> = match run.mode {
                Some(m) => vec![m],
                None => Mode::ALL.to_vec(),
            };
            let runs = run_campaign(&cfg, seeds, &modes)?;
            write_traces(&runs, &out.join("traces"))?;
            let bundle = ReportBundle::from_runs(&runs, cfg.reacquisition.deadline)?;
            write_json(&bundle, &out.join("summary.json"))?;
            for m in &bundle.modes {
                eprintln!("{:<13} median {:.2} m, p90 {:.2} m", m.mode.as_str(), m.median_m, m.p90_m);
            }
        }
        Command::Report { traces, config, out } => {
            let deadline = match config {
                Some(path) => load_config(&path)?.reacquisition.deadline,
                None => RunConfig::default().reacquisition.deadline,
            };
            let runs = load_traces(&traces)?;
            let bundle = ReportBundle::from_runs(&runs, deadline)?;
            match out {
                Some(path) => {
                    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                        fs::create_dir_all(parent)?;
                    }
                    write_json(&bundle, &path)?;
                }
                None => println!("{}", bundle.to_json()?),
            }
        }
        Command::ValidateConfig { run } => print!("{}", effective_config(&run.resolve()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
