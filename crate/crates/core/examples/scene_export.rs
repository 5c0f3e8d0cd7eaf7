// Generates the S-curve drive with scatterer re-draws and writes the ground
// truth to CSV (stdout, or the path given as the first argument).

use std::fs::File;
use std::io::{self, Write};

use nlos_track::pipeline::{scene_frames, RunConfig};
use nlos_track::scene::write_scene_csv;

pub fn run_example() -> nlos_track::Result<()> {
    run(None)
}

fn run(path: Option<String>) -> nlos_track::Result<()> {
    let cfg = RunConfig { seed: 7, ..RunConfig::default() };
    let frames = scene_frames(&cfg)?;
    let last = frames.last().expect("at least one frame");
    eprintln!(
        "{} frames over {:.0} s, {} scatterer epochs, final position ({:.1}, {:.1})",
        frames.len(),
        last.t as f64 * cfg.trajectory.dt,
        last.epoch_id + 1,
        last.ue_pos.x,
        last.ue_pos.y
    );
    let out: Box<dyn Write> = match path {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::sink()),
    };
    write_scene_csv(&frames, out)
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run(std::env::args().nth(1))
}
