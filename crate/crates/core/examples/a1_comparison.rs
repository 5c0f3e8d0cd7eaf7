// Paired campaigns with a random-walk (a₁ = 1) and a mean-reverting
// (a₁ = 0.95) angle model, printed as error CDF tables. Same seeds, same
// scenes, only the filter's AR coefficient differs.

use nlos_track::pipeline::{run_campaign, Mode, RunConfig};
use nlos_track::report::{cdf_quantile, ReportBundle};

const SEEDS: usize = 6;

pub fn run_example() -> nlos_track::Result<()> {
    let mut table = Vec::new();
    for a1 in [1.0, 0.95] {
        let mut cfg = RunConfig { n_steps: Some(300), ..RunConfig::default() };
        cfg.channel.ar = vec![a1];
        let runs = run_campaign(&cfg, SEEDS, &Mode::ALL)?;
        table.push((a1, ReportBundle::from_runs(&runs, cfg.reacquisition.deadline)?));
    }
    println!("{:>5} {:<13} {:>7} {:>7} {:>7} {:>7}", "a1", "mode", "p25", "p50", "p75", "p90");
    for (a1, report) in &table {
        for m in &report.modes {
            let q = |p| cdf_quantile(&m.cdf, p);
            println!(
                "{a1:>5.2} {:<13} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
                m.mode.as_str(),
                q(0.25),
                q(0.5),
                q(0.75),
                q(0.9)
            );
        }
    }
    for (a1, report) in &table {
        let d = &report.detection;
        println!("a1 = {a1:.2}: false-alarm rate {:.3}, liveness {:.2}", d.false_alarm_rate, d.liveness);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run_example()
}
