//! Narrowband L-scatterer MIMO channel between two uniform linear arrays,
//! steering-vector codebooks and noisy beam-sweep observations.
//!
//! Vectorization of the `N_r × N_t` observation matrix is column-major:
//! entry `(n_r, n_t)` lands at index `n_r + N_r·n_t`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SceneFrame;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    /// Transmit (BS) antennas.
    pub n_tx: usize,
    /// Receive (UE) antennas.
    pub n_rx: usize,
    /// Hz
    pub carrier_freq: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            n_tx: 64,
            n_rx: 8,
            carrier_freq: 40e9,
        }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::InvalidConfig("antenna counts must be >= 1".into()));
        }
        if !(self.carrier_freq > 0.0) || !self.carrier_freq.is_finite() {
            return Err(Error::InvalidConfig("carrier_freq must be > 0".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Number of complex beam-sweep entries, `N_r·N_t`.
    pub fn num_observations(&self) -> usize {
        self.n_tx * self.n_rx
    }
}

/// Half-wavelength ULA response: entry `k` is `exp(-jπk·cos(angle)) / √n`.
pub fn steering(angle: f64, n: usize) -> CVector {
    let scale = 1.0 / (n as f64).sqrt();
    let c = angle.cos();
    CVector::from_fn(n, |k, _| Complex64::from_polar(scale, -PI * k as f64 * c))
}

pub fn steering_tx(aod: f64, n_tx: usize) -> CVector {
    steering(aod, n_tx)
}

pub fn steering_rx(aoa: f64, n_rx: usize) -> CVector {
    steering(aoa, n_rx)
}

/// Derivative of [`steering`] with respect to the angle.
pub fn steering_derivative(angle: f64, n: usize) -> CVector {
    let scale = 1.0 / (n as f64).sqrt();
    let (s, c) = angle.sin_cos();
    CVector::from_fn(n, |k, _| {
        let k = k as f64;
        Complex64::new(0.0, PI * k * s) * Complex64::from_polar(scale, -PI * k * c)
    })
}

/// Complex gain of one path, `α = ρ·√(N_t N_r)·exp(-j2πΔ/λ_c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGain {
    pub alpha: Complex64,
    pub rho: f64,
    /// Propagation distance, meters. Estimated gains carry the equivalent
    /// distance modulo one wavelength.
    pub delta: f64,
}

impl PathGain {
    pub fn from_parts(rho: f64, delta: f64, arrays: &ArrayConfig) -> Self {
        let scale = (arrays.num_observations() as f64).sqrt();
        let phase = -2.0 * PI * delta / arrays.wavelength();
        Self {
            alpha: Complex64::from_polar(rho * scale, phase),
            rho,
            delta,
        }
    }

    /// Decomposes an arbitrary complex gain into attenuation and wrapped distance.
    pub fn from_alpha(alpha: Complex64, arrays: &ArrayConfig) -> Self {
        let scale = (arrays.num_observations() as f64).sqrt();
        let lambda = arrays.wavelength();
        let delta = (-alpha.arg() * lambda / (2.0 * PI)).rem_euclid(lambda);
        Self {
            alpha,
            rho: alpha.norm() / scale,
            delta,
        }
    }
}

/// Stacked path angles `ψ = [φ_1..φ_L, θ_1..θ_L]` plus per-path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleState {
    pub psi: DVector<f64>,
    pub gains: Vec<PathGain>,
}

impl AngleState {
    pub fn new(aod: &[f64], aoa: &[f64], gains: Vec<PathGain>) -> Result<Self> {
        if aod.len() != aoa.len() || aod.len() != gains.len() || aod.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "angle state",
                expected: aod.len(),
                found: aoa.len().min(gains.len()),
            });
        }
        let psi = DVector::from_iterator(2 * aod.len(), aod.iter().chain(aoa).copied());
        Self::from_psi(psi, gains)
    }

    pub fn from_psi(psi: DVector<f64>, gains: Vec<PathGain>) -> Result<Self> {
        if psi.len() != 2 * gains.len() || gains.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "angle state",
                expected: 2 * gains.len(),
                found: psi.len(),
            });
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite angle".into()));
        }
        Ok(Self { psi, gains })
    }

    pub fn num_paths(&self) -> usize {
        self.gains.len()
    }

    pub fn aod(&self, l: usize) -> f64 {
        self.psi[l]
    }

    pub fn aoa(&self, l: usize) -> f64 {
        self.psi[self.num_paths() + l]
    }

    pub fn alphas(&self) -> Vec<Complex64> {
        self.gains.iter().map(|g| g.alpha).collect()
    }
}

/// `H = Σ α_l a_r(θ_l) a_t(φ_l)ᴴ`, an `N_r × N_t` matrix.
pub fn build_channel(state: &AngleState, arrays: &ArrayConfig) -> CMatrix {
    let mut h = CMatrix::zeros(arrays.n_rx, arrays.n_tx);
    for l in 0..state.num_paths() {
        let ar = steering_rx(state.aoa(l), arrays.n_rx);
        let at = steering_tx(state.aod(l), arrays.n_tx);
        h += (ar * at.adjoint()) * state.gains[l].alpha;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookKind {
    /// Grid cosines spaced by `2/N` over `(-1, 1]`; the codebook is unitary.
    Dft,
    /// Grid angles at the midpoints of `N` equal slices of `(0, π)`.
    UniformAngle,
}

/// Beamforming (`B`, columns `b_{n_t}`) and combining (`C`, columns `c_{n_r}`) codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub b: CMatrix,
    pub c: CMatrix,
    pub grid_angles_tx: Vec<f64>,
    pub grid_angles_rx: Vec<f64>,
}

fn grid_angles(n: usize, kind: CodebookKind) -> Vec<f64> {
    match kind {
        CodebookKind::Dft => (0..n)
            .map(|k| {
                let c = -1.0 + 2.0 * (k + 1) as f64 / n as f64;
                c.clamp(-1.0, 1.0).acos()
            })
            .collect(),
        CodebookKind::UniformAngle => (0..n).map(|k| (k as f64 + 0.5) * PI / n as f64).collect(),
    }
}

fn steering_matrix(angles: &[f64], n: usize) -> CMatrix {
    let cols: Vec<CVector> = angles.iter().map(|&a| steering(a, n)).collect();
    CMatrix::from_columns(&cols)
}

pub fn make_codebook(arrays: &ArrayConfig, kind: CodebookKind) -> Codebook {
    let grid_angles_tx = grid_angles(arrays.n_tx, kind);
    let grid_angles_rx = grid_angles(arrays.n_rx, kind);
    Codebook {
        b: steering_matrix(&grid_angles_tx, arrays.n_tx),
        c: steering_matrix(&grid_angles_rx, arrays.n_rx),
        grid_angles_tx,
        grid_angles_rx,
    }
}

impl Codebook {
    pub fn n_tx(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_rx(&self) -> usize {
        self.c.nrows()
    }

    /// Beam-domain response of one path: `(Cᴴ a_r(θ), Bᴴ a_t(φ))`.
    pub fn beam_responses(&self, aod: f64, aoa: f64) -> (CVector, CVector) {
        (
            self.c.adjoint() * steering_rx(aoa, self.n_rx()),
            self.b.adjoint() * steering_tx(aod, self.n_tx()),
        )
    }
}

/// Column-major vectorization of `u vᴴ`, scaled by `alpha`, accumulated into `out`.
pub(crate) fn add_outer_vec(out: &mut CVector, u: &CVector, v: &CVector, alpha: Complex64) {
    let nr = u.len();
    for (j, vj) in v.iter().enumerate() {
        let w = alpha * vj.conj();
        for (i, ui) in u.iter().enumerate() {
            out[i + nr * j] += ui * w;
        }
    }
}

/// Noise-free beam-sweep vector `vec(Cᴴ H B)`.
pub fn beam_space_response(state: &AngleState, cb: &Codebook) -> CVector {
    let mut out = CVector::zeros(cb.n_rx() * cb.n_tx());
    for l in 0..state.num_paths() {
        let (u, v) = cb.beam_responses(state.aod(l), state.aoa(l));
        add_outer_vec(&mut out, &u, &v, state.gains[l].alpha);
    }
    out
}

/// One beam sweep: the `N_r × N_t` matrix `Y` and its column-major vector `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y_mat: CMatrix,
    pub y: CVector,
    pub t: usize,
}

impl Observation {
    pub fn from_vector(y: CVector, n_rx: usize, n_tx: usize, t: usize) -> Self {
        let y_mat = CMatrix::from_column_slice(n_rx, n_tx, y.as_slice());
        Self { y_mat, y, t }
    }

    /// Stacked `[Re(y); Im(y)]`.
    pub fn stacked_real(&self) -> DVector<f64> {
        stack_real(&self.y)
    }

    /// Interleaved `re, im` pairs in vectorization order, for dumps.
    pub fn interleaved(&self) -> Vec<f64> {
        self.y.iter().flat_map(|z| [z.re, z.im]).collect()
    }
}

pub fn stack_real(v: &CVector) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Draws a circular complex Gaussian sample of the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// `Y = Cᴴ H B + Cᴴ W` with `W` white, `CN(0, σ_w²)` per entry.
///
/// With a unitary (DFT) combining codebook the beam-domain noise stays white.
pub fn observe<R: Rng + ?Sized>(
    state: &AngleState,
    cb: &Codebook,
    noise_var: f64,
    t: usize,
    rng: &mut R,
) -> Result<Observation> {
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidConfig("noise variance must be >= 0".into()));
    }
    let (nr, nt) = (cb.n_rx(), cb.n_tx());
    let mut y = beam_space_response(state, cb);
    if noise_var > 0.0 {
        let w = CMatrix::from_fn(nr, nt, |_, _| complex_gaussian(noise_var, rng));
        let v = cb.c.adjoint() * w;
        for (yi, vi) in y.iter_mut().zip(v.iter()) {
            *yi += vi;
        }
    }
    Ok(Observation::from_vector(y, nr, nt, t))
}

pub fn snr_db_to_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// `σ_w² = N_r N_t / SNR`.
pub fn noise_variance_from_snr(snr_linear: f64, arrays: &ArrayConfig) -> Result<f64> {
    if !(snr_linear > 0.0) {
        return Err(Error::InvalidConfig(format!("SNR must be > 0, got {snr_linear}")));
    }
    Ok(arrays.num_observations() as f64 / snr_linear)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModel {
    /// `ρ_l = 1/√(N_t N_r)`, so `|α_l| = 1`.
    UnitRho,
    /// `ρ_l = 1`, so `|α_l| = √(N_t N_r)`: the beamformed per-path SNR equals the nominal SNR.
    UnitAttenuation,
    /// `ρ_l ∝ 1/R_l`, normalized so that `Σ|α_l|² = L`.
    InverseRange,
}

/// Gains for the paths of `frame`, with `Δ_l = R_l`.
pub fn synthesize_gains(frame: &SceneFrame, arrays: &ArrayConfig, model: GainModel) -> Vec<PathGain> {
    let scale = (arrays.num_observations() as f64).sqrt();
    let l = frame.num_paths();
    let inv_norm = frame
        .path_lengths
        .iter()
        .map(|r| 1.0 / (r * r))
        .sum::<f64>()
        .sqrt();
    frame
        .path_lengths
        .iter()
        .map(|&r| {
            let rho = match model {
                GainModel::UnitRho => 1.0 / scale,
                GainModel::UnitAttenuation => 1.0,
                GainModel::InverseRange => (l as f64).sqrt() * (1.0 / r) / inv_norm / scale,
            };
            PathGain::from_parts(rho, r, arrays)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_cvec(a: &CVector, b: &[Complex64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() <= tol, "{x} vs {y}");
        }
    }

    fn arrays(n_tx: usize, n_rx: usize) -> ArrayConfig {
        ArrayConfig {
            n_tx,
            n_rx,
            ..Default::default()
        }
    }

    fn unit_gain(alpha: Complex64) -> PathGain {
        PathGain::from_alpha(alpha, &arrays(1, 1))
    }

    #[test]
    fn steering_examples() {
        assert_cvec(&steering_tx(PI / 2.0, 4), &[c(0.5, 0.0); 4], 1e-15);
        let r = 1.0 / 2f64.sqrt();
        assert_cvec(&steering_tx(0.0, 2), &[c(r, 0.0), c(-r, 0.0)], 1e-15);
        let s = 1.0 / 8f64.sqrt();
        let expect: Vec<Complex64> = (0..8)
            .map(|k| [c(s, 0.0), c(0.0, -s), c(-s, 0.0), c(0.0, s)][k % 4])
            .collect();
        assert_cvec(&steering_tx(PI / 3.0, 8), &expect, 1e-14);
        assert_cvec(&steering_rx(PI / 2.0, 8), &[c(s, 0.0); 8], 1e-15);
        assert_cvec(&steering_rx(1.234, 1), &[c(1.0, 0.0)], 0.0);
    }

    #[test]
    fn steering_orthogonality_on_dft_spacing() {
        let n = 8;
        let c1: f64 = 0.3;
        let c2 = c1 - 2.0 / n as f64;
        let ip = steering_rx(c1.acos(), n).dotc(&steering_rx(c2.acos(), n));
        assert!(ip.norm() < 1e-14);
    }

    #[test]
    fn steering_derivative_matches_finite_difference() {
        let h = 1e-6;
        for &a in &[0.3, 1.1, 2.5, -0.7] {
            let fd = (steering(a + h, 16) - steering(a - h, 16)) / Complex64::new(2.0 * h, 0.0);
            let an = steering_derivative(a, 16);
            assert!((fd - an).norm() < 1e-8);
        }
        assert!(steering_derivative(0.0, 16).norm() == 0.0);
    }

    #[test]
    fn channel_examples() {
        let st = AngleState::new(&[0.4], &[1.3], vec![unit_gain(c(2.0, 0.0))]).unwrap();
        let h = build_channel(&st, &arrays(1, 1));
        assert_abs_diff_eq!((h[(0, 0)] - c(2.0, 0.0)).norm(), 0.0, epsilon = 1e-15);

        let alpha = c(0.6, -1.7);
        let st = AngleState::new(&[0.4], &[1.3], vec![unit_gain(alpha)]).unwrap();
        assert_abs_diff_eq!(build_channel(&st, &arrays(16, 4)).norm(), alpha.norm(), epsilon = 1e-12);

        let st = AngleState::new(
            &[0.4, 0.4],
            &[1.3, 1.3],
            vec![unit_gain(alpha), unit_gain(-alpha)],
        )
        .unwrap();
        assert!(build_channel(&st, &arrays(16, 4)).norm() < 1e-14);
    }

    #[test]
    fn channel_rank_and_linearity() {
        let a = arrays(16, 4);
        let g1 = vec![unit_gain(c(1.0, 0.5)), unit_gain(c(-0.3, 0.2))];
        let g2 = vec![unit_gain(c(0.1, -0.9)), unit_gain(c(0.7, 0.7))];
        let gs: Vec<PathGain> = g1.iter().zip(&g2).map(|(x, y)| unit_gain(x.alpha + y.alpha)).collect();
        let aod = [0.5, 2.0];
        let aoa = [1.0, -1.9];
        let h1 = build_channel(&AngleState::new(&aod, &aoa, g1).unwrap(), &a);
        let h2 = build_channel(&AngleState::new(&aod, &aoa, g2).unwrap(), &a);
        let hs = build_channel(&AngleState::new(&aod, &aoa, gs).unwrap(), &a);
        assert!((hs.clone() - h1 - h2).norm() < 1e-14);
        let sv = hs.singular_values();
        assert!(sv.iter().filter(|s| **s > 1e-10).count() <= 2);
    }

    #[test]
    fn codebook_examples() {
        for n in [1usize, 4, 8, 64] {
            let cb = make_codebook(&arrays(n, n), CodebookKind::Dft);
            let gram = cb.b.adjoint() * &cb.b;
            assert!((gram - CMatrix::identity(n, n)).norm() < 1e-12, "n={n}");
            for col in cb.b.column_iter() {
                assert_abs_diff_eq!(col.norm(), 1.0, epsilon = 1e-12);
            }
        }
        let cb = make_codebook(&arrays(1, 1), CodebookKind::Dft);
        assert_abs_diff_eq!((cb.b[(0, 0)] - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let cb = make_codebook(&arrays(2, 2), CodebookKind::UniformAngle);
        assert_abs_diff_eq!(cb.grid_angles_tx[0], PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cb.grid_angles_tx[1], 3.0 * PI / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn on_grid_path_selects_one_beam_pair() {
        let a = arrays(16, 4);
        let cb = make_codebook(&a, CodebookKind::Dft);
        let alpha = c(0.8, -0.6);
        let st = AngleState::new(&[cb.grid_angles_tx[5]], &[cb.grid_angles_rx[2]], vec![unit_gain(alpha)]).unwrap();
        let obs = observe(&st, &cb, 0.0, 0, &mut stream(1, Stream::Noise)).unwrap();
        for i in 0..4 {
            for j in 0..16 {
                let v = obs.y_mat[(i, j)].norm();
                if (i, j) == (2, 5) {
                    assert_abs_diff_eq!(v, alpha.norm(), epsilon = 1e-12);
                } else {
                    assert!(v < 1e-12);
                }
            }
        }
    }

    #[test]
    fn noiseless_observation_equals_definition() {
        let a = arrays(16, 4);
        let cb = make_codebook(&a, CodebookKind::Dft);
        let st = AngleState::new(&[0.3, 1.9], &[-1.2, 2.2], vec![unit_gain(c(1.0, 0.2)), unit_gain(c(-0.4, 0.9))]).unwrap();
        let obs = observe(&st, &cb, 0.0, 3, &mut stream(1, Stream::Noise)).unwrap();
        let direct = cb.c.adjoint() * build_channel(&st, &a) * &cb.b;
        assert!((obs.y_mat.clone() - direct).norm() < 1e-12);
        // vec/unvec
        for j in 0..16 {
            for i in 0..4 {
                assert_eq!(obs.y[i + 4 * j], obs.y_mat[(i, j)]);
            }
        }
        assert_eq!(obs.t, 3);
    }

    #[test]
    fn noise_variance_monte_carlo() {
        let a = arrays(16, 4);
        let cb = make_codebook(&a, CodebookKind::Dft);
        let st = AngleState::new(&[0.7], &[1.1], vec![unit_gain(c(1.0, 0.0))]).unwrap();
        let clean = beam_space_response(&st, &cb);
        let var = 2.5;
        let mut rng = stream(5, Stream::Noise);
        let draws = 10_000;
        let mut acc = 0.0;
        // per-entry covariance check of the combined noise Cᴴ W (white when C is unitary)
        let mut cross = Complex64::new(0.0, 0.0);
        for _ in 0..draws {
            let obs = observe(&st, &cb, var, 0, &mut rng).unwrap();
            let v = &obs.y - &clean;
            acc += v.norm_squared() / 64.0;
            cross += v[0] * v[1].conj();
        }
        let est = acc / draws as f64;
        assert!((est - var).abs() / var < 0.05, "{est}");
        assert!((cross / draws as f64).norm() < 0.05 * var);
    }

    #[test]
    fn snr_to_noise_variance() {
        let defaults = ArrayConfig::default();
        assert_eq!(noise_variance_from_snr(snr_db_to_linear(20.0), &defaults).unwrap(), 5.12);
        assert_eq!(noise_variance_from_snr(1.0, &arrays(1, 1)).unwrap(), 1.0);
        assert_abs_diff_eq!(noise_variance_from_snr(10.0, &arrays(16, 4)).unwrap(), 6.4, epsilon = 1e-12);
        assert!(noise_variance_from_snr(0.0, &defaults).is_err());
        assert!(noise_variance_from_snr(-1.0, &defaults).is_err());
    }

    fn frame_with_lengths(lengths: &[f64]) -> SceneFrame {
        let n = lengths.len();
        SceneFrame {
            t: 0,
            ue_pos: crate::scene::Point2::ORIGIN,
            ue_orientation: 0.0,
            ue_vel: Vector2::zeros(),
            ue_acc: Vector2::zeros(),
            scatterers: vec![crate::scene::Point2::ORIGIN; n],
            true_aod: vec![0.0; n],
            true_aoa: vec![0.0; n],
            path_lengths: lengths.to_vec(),
            epoch_id: 0,
        }
    }

    #[test]
    fn gain_synthesis() {
        let a = ArrayConfig::default();
        let f = frame_with_lengths(&[120.0, 87.5, 300.25]);
        for g in synthesize_gains(&f, &a, GainModel::UnitRho) {
            assert_abs_diff_eq!(g.alpha.norm(), 1.0, epsilon = 1e-12);
            let back = Complex64::from_polar(g.rho * 512f64.sqrt(), -2.0 * PI * g.delta / a.wavelength());
            assert!((back - g.alpha).norm() < 1e-12);
        }
        let lam = a.wavelength();
        let g = synthesize_gains(&frame_with_lengths(&[lam]), &a, GainModel::UnitRho)[0];
        assert!((g.alpha - c(1.0, 0.0)).norm() < 1e-9);
        for g in synthesize_gains(&frame_with_lengths(&[50.0, 50.0, 50.0]), &a, GainModel::InverseRange) {
            assert_abs_diff_eq!(g.alpha.norm(), 1.0, epsilon = 1e-12);
        }
        let gs = synthesize_gains(&frame_with_lengths(&[10.0, 40.0]), &a, GainModel::InverseRange);
        let energy: f64 = gs.iter().map(|g| g.alpha.norm_sqr()).sum();
        assert_abs_diff_eq!(energy, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gs[0].alpha.norm() / gs[1].alpha.norm(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn gain_decomposition_round_trip() {
        let a = ArrayConfig::default();
        let alpha = c(-3.0, 4.5);
        let g = PathGain::from_alpha(alpha, &a);
        let back = PathGain::from_parts(g.rho, g.delta, &a);
        assert!((back.alpha - alpha).norm() < 1e-12);
    }
}
