// One full run of the two-stage tracker against the single-stage baseline.
// Pass a directory as the first argument to keep the CSV traces.

use std::path::PathBuf;

use nlos_track::pipeline::{run_campaign, Mode, RunConfig};
use nlos_track::report::{write_traces, ReportBundle};

pub fn run_example() -> nlos_track::Result<()> {
    run(None)
}

fn run(trace_dir: Option<PathBuf>) -> nlos_track::Result<()> {
    let cfg = RunConfig { seed: 3, n_steps: Some(200), ..RunConfig::default() };
    let runs = run_campaign(&cfg, 1, &Mode::ALL)?;
    let report = ReportBundle::from_runs(&runs, cfg.reacquisition.deadline)?;
    for m in &report.modes {
        println!(
            "{:<13} median {:6.2} m  p90 {:6.2} m  failed steps {}",
            m.mode.as_str(),
            m.median_m,
            m.p90_m,
            m.failed_steps
        );
    }
    let d = &report.detection;
    println!("re-acquired within {} steps at {}/{} boundaries", d.deadline, d.timely, d.boundaries);
    if let Some(dir) = trace_dir {
        for path in write_traces(&runs, &dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run(std::env::args().nth(1).map(PathBuf::from))
}
