// Coarse pose from path lines: exact and perturbed angles, with and without
// a heading prior.

use nlos_track::rng::{stream, Stream};
use nlos_track::scene::{compute_geometry, place_scatterers, wrap_to_pi, Point2};
use nlos_track::triangulate::{solve_pose, PathMeasurement, SolveOptions};
use rand::Rng;

pub fn run_example() -> nlos_track::Result<()> {
    let bs = Point2::ORIGIN;
    let ue = Point2::new(310.0, -240.0);
    let heading = 0.6;
    let mut rng = stream(5, Stream::Scene);
    let scatterers = place_scatterers(ue, bs, 4, 100.0, &mut rng)?;
    let geo = compute_geometry(bs, ue, heading, &scatterers)?;
    let exact: Vec<PathMeasurement> = (0..4)
        .map(|l| PathMeasurement { aod: geo.aod[l], aoa: geo.aoa[l], length: geo.path_lengths[l], weight: 1.0 })
        .collect();

    let opts = SolveOptions::default();
    let est = solve_pose(&exact, bs, None, &opts);
    println!(
        "exact angles, no prior : error {:.2e} m, heading error {:.2e} rad ({:?})",
        est.position().distance(&ue),
        wrap_to_pi(est.gamma - heading).abs(),
        est.status
    );

    let noisy: Vec<PathMeasurement> = exact
        .iter()
        .map(|p| PathMeasurement {
            aod: p.aod + rng.random_range(-1.0..1.0) * 0.2f64.to_radians(),
            aoa: p.aoa + rng.random_range(-1.0..1.0) * 1.0f64.to_radians(),
            ..*p
        })
        .collect();
    let est = solve_pose(&noisy, bs, Some(heading + 0.05), &opts);
    println!(
        "perturbed angles, prior: error {:.2} m, heading error {:.2}°, cost {:.3} m²",
        est.position().distance(&ue),
        wrap_to_pi(est.gamma - heading).abs().to_degrees(),
        est.cost
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run_example()
}
