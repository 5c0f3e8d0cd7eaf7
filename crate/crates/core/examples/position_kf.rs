// Position KF on the S-curve, fed with truth plus Gaussian pose noise and
// IMU samples, compared with the raw noisy poses.

use nalgebra::DVector;
use nlos_track::pipeline::{scene_frames, RunConfig};
use nlos_track::position::{kf_predict, kf_update, synthesize_imu, ImuConfig, GAMMA};
use nlos_track::rng::{stream, Stream};
use nlos_track::GaussianBelief;
use rand_distr::{Distribution, Normal};

pub fn run_example() -> nlos_track::Result<()> {
    let cfg = RunConfig { n_steps: Some(300), ..RunConfig::default() };
    let frames = scene_frames(&cfg)?;
    let kf = cfg.position_kf();
    let pose_noise = Normal::new(0.0, 1.0).expect("valid std");
    let mut rng = stream(11, Stream::Imu);
    let mut belief: Option<GaussianBelief> = None;
    let (mut raw_sq, mut kf_sq) = (0.0, 0.0);
    for f in &frames {
        let imu = synthesize_imu(f, &ImuConfig::default(), &mut rng);
        let (x, y) = (f.ue_pos.x + pose_noise.sample(&mut rng), f.ue_pos.y + pose_noise.sample(&mut rng));
        let gamma = f.ue_orientation + 0.01 * pose_noise.sample(&mut rng);
        let z = DVector::from_vec(vec![x, y, imu.vx, imu.vy, imu.ax, imu.ay, gamma]);
        let post = match belief.take() {
            None => GaussianBelief::isotropic(z.clone(), 1.0),
            Some(b) => kf_update(&kf_predict(&b, &kf)?, &z, &kf)?.posterior,
        };
        raw_sq += (x - f.ue_pos.x).powi(2) + (y - f.ue_pos.y).powi(2);
        kf_sq += (post.mean[0] - f.ue_pos.x).powi(2) + (post.mean[1] - f.ue_pos.y).powi(2);
        belief = Some(post);
    }
    let n = frames.len() as f64;
    let b = belief.expect("filter ran");
    println!("RMS position error: raw poses {:.2} m, KF {:.2} m", (raw_sq / n).sqrt(), (kf_sq / n).sqrt());
    println!("final heading estimate {:.3} rad (truth {:.3})", b.mean[GAMMA], frames.last().unwrap().ue_orientation);
    Ok(())
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run_example()
}
