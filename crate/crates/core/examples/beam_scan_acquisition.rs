// Non-genie acquisition: pick the strongest beam pairs of one sweep and
// compare their grid angles with the true (folded) path angles.

use nlos_track::channel::{make_codebook, observe, synthesize_gains, AngleState};
use nlos_track::pipeline::{scene_frames, RunConfig};
use nlos_track::rng::{stream, Stream};
use nlos_track::scene::array_angle;
use nlos_track::tracker::beam_scan_acquire;

pub fn run_example() -> nlos_track::Result<()> {
    let cfg = RunConfig { n_steps: Some(1), ..RunConfig::default() };
    let frame = &scene_frames(&cfg)?[0];
    let cb = make_codebook(&cfg.arrays, cfg.codebook);
    let truth = AngleState::new(&frame.true_aod, &frame.true_aoa, synthesize_gains(frame, &cfg.arrays, cfg.gain_model))?;
    let obs = observe(&truth, &cb, cfg.noise_var()?, 0, &mut stream(cfg.seed, Stream::Noise))?;
    println!("true (AoD, AoA) folded to [0, 180]°:");
    for l in 0..frame.num_paths() {
        println!("  ({:6.1}, {:6.1})", array_angle(frame.true_aod[l]).to_degrees(), array_angle(frame.true_aoa[l]).to_degrees());
    }
    println!("strongest beam pairs:");
    for (aod, aoa) in beam_scan_acquire(&obs, &cb, frame.num_paths()) {
        println!("  ({:6.1}, {:6.1})", aod.to_degrees(), aoa.to_degrees());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run_example()
}
