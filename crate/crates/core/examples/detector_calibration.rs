// Change test on a channel that never changes: the false-alarm rate should
// sit near the nominal level and the NIS should look chi-square.

use nlos_track::calibration::{detector_calibration, DetectorRunConfig};
use nlos_track::chi2;

pub fn run_example() -> nlos_track::Result<()> {
    let cfg = DetectorRunConfig { steps: 400, ..DetectorRunConfig::default() };
    let cal = detector_calibration(&cfg)?;
    let mean = cal.nis.iter().sum::<f64>() / cal.nis.len() as f64;
    println!("dof {} (after the gain fit), threshold {:.1}", cal.dof, cal.threshold);
    println!("mean NIS {mean:.1}, KS distance to chi-square {:.3}", cal.ks_distance);
    println!(
        "false alarms {}/{} = {:.3} (nominal {:.3})",
        cal.triggers,
        cfg.steps,
        cal.false_alarm_rate,
        cfg.change.p_fa
    );
    println!("reference: 95% quantile of chi-square(2) = {:.4}", chi2::quantile(0.95, 2.0));
    Ok(())
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run_example()
}
