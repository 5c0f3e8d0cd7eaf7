// NEES of both filters on data drawn from their own models.

use nlos_track::calibration::{channel_surrogate_nees, position_kf_nees, NeesSeries};
use nlos_track::position::PositionKFConfig;

fn show(name: &str, s: &NeesSeries) {
    let (lo, hi) = s.band();
    println!(
        "{name:<16} dim {:>2}: mean NEES {:6.2}, band [{lo:.2}, {hi:.2}], {:4.1}% of steps inside",
        s.dim,
        s.overall_mean(),
        100.0 * s.fraction_in_band()
    );
}

pub fn run_example() -> nlos_track::Result<()> {
    let pos = PositionKFConfig { dt: 1.0, ..PositionKFConfig::default() };
    show("position KF", &position_kf_nees(&pos, 50, 100, 1)?);
    let sigma_u = 0.5f64.to_radians();
    show("channel EKF", &channel_surrogate_nees(4, 1.0, sigma_u * sigma_u, 32, 1e-4, 50, 100, 1)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run_example()
}
