// Steering vectors, the DFT codebook and the beam-space view of a channel.
//
// A single path that falls exactly on a codebook grid angle lights up one
// beam pair; off-grid paths leak into neighbours.

use nlos_track::channel::{
    beam_space_response, make_codebook, steering_tx, AngleState, ArrayConfig, CodebookKind, PathGain,
};

pub fn run_example() -> nlos_track::Result<()> {
    let arrays = ArrayConfig { n_tx: 16, n_rx: 4, ..ArrayConfig::default() };
    println!("carrier {:.0} GHz, wavelength {:.3} mm", arrays.carrier_freq / 1e9, arrays.wavelength() * 1e3);

    let a = steering_tx(std::f64::consts::FRAC_PI_3, arrays.n_tx);
    println!("|a_t(60°)| = {:.6}, first entries {:.3} {:.3}", a.norm(), a[0], a[1]);

    let cb = make_codebook(&arrays, CodebookKind::Dft);
    let unitary = (cb.b.adjoint() * &cb.b - nalgebra::DMatrix::identity(16, 16)).norm();
    println!("‖BᴴB − I‖ = {unitary:.2e}");

    for (label, aod, aoa) in [
        ("on grid ", cb.grid_angles_tx[5], cb.grid_angles_rx[2]),
        ("off grid", cb.grid_angles_tx[5] + 0.04, cb.grid_angles_rx[2] + 0.1),
    ] {
        let gain = PathGain::from_parts(1.0, 12.5, &arrays);
        let state = AngleState::new(&[aod], &[aoa], vec![gain])?;
        let y = beam_space_response(&state, &cb);
        let total: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        let peak = y.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        let lit = y.iter().filter(|v| v.norm_sqr() > 1e-9 * total).count();
        println!("{label}: strongest beam holds {:5.1}% of the energy, {lit} beams above -90 dB", 100.0 * peak / total);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nlos_track::Result<()> {
    run_example()
}
