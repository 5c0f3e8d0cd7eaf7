//! Matched-model simulations for filter and detector consistency checks.
//!
//! Each harness simulates data from exactly the model the filter assumes, so
//! NEES and NIS should follow their chi-square laws.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::belief::GaussianBelief;
use crate::channel::{make_codebook, observe, AngleState, ArrayConfig, CodebookKind, GainModel, PathGain};
use crate::chi2;
use crate::error::Result;
use crate::position::{kf_predict, kf_update, state_error, transition_matrix, PositionKFConfig};
use crate::rng::{stream, Stream};
use crate::scene::{Point2, SceneFrame};
use crate::tracker::{
    predict, update, ArModel, ChangeTestConfig, ChannelProcessConfig, ChannelTracker, LinearMeasurement,
};

fn gaussian_vec<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let e: f64 = StandardNormal.sample(rng);
        std * e
    })
}

/// Per-step NEES averaged over Monte Carlo runs.
#[derive(Debug, Clone, PartialEq)]
pub struct NeesSeries {
    pub dim: usize,
    pub runs: usize,
    pub per_step: Vec<f64>,
}

impl NeesSeries {
    pub fn overall_mean(&self) -> f64 {
        self.per_step.iter().sum::<f64>() / self.per_step.len() as f64
    }

    /// Two-sided 95% band for a `runs`-run average.
    pub fn band(&self) -> (f64, f64) {
        chi2::mean_interval(self.dim, self.runs, 0.05)
    }

    pub fn fraction_in_band(&self) -> f64 {
        let (lo, hi) = self.band();
        let inside = self.per_step.iter().filter(|v| (lo..=hi).contains(*v)).count();
        inside as f64 / self.per_step.len() as f64
    }
}

/// Position KF on data drawn from its own constant-acceleration model.
pub fn position_kf_nees(cfg: &PositionKFConfig, runs: usize, steps: usize, seed: u64) -> Result<NeesSeries> {
    let f = transition_matrix(cfg.dt);
    let f = DMatrix::from_column_slice(7, 7, f.as_slice());
    let q_std = cfg.process_var.sqrt();
    let r_chol = Cholesky::new(DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.meas_var)))
        .ok_or(crate::Error::NotPositiveDefinite("position measurement covariance"))?;
    let x0 = DVector::from_column_slice(&[100.0, -200.0, 15.0, 0.0, 0.0, 0.0, 0.2]);
    let p0 = 1.0;
    let mut total = vec![0.0; steps];
    for run in 0..runs {
        let mut rng = stream(seed.wrapping_add(run as u64), Stream::Process);
        let mut truth = &x0 + gaussian_vec(7, p0, &mut rng);
        let mut belief = GaussianBelief::isotropic(x0.clone(), p0 * p0);
        for acc in total.iter_mut() {
            truth = &f * truth + gaussian_vec(7, q_std, &mut rng);
            let z = &truth + r_chol.l() * gaussian_vec(7, 1.0, &mut rng);
            belief = kf_predict(&belief, cfg)?;
            belief = kf_update(&belief, &z, cfg)?.posterior;
            *acc += belief.nees_of_error(&state_error(&belief.mean, &truth))?;
        }
    }
    Ok(NeesSeries {
        dim: 7,
        runs,
        per_step: total.into_iter().map(|t| t / runs as f64).collect(),
    })
}

/// Channel EKF predict/update code on a linear surrogate `z = H ψ + v` with
/// AR(1) angle dynamics.
#[allow(clippy::too_many_arguments)]
pub fn channel_surrogate_nees(
    num_paths: usize,
    a1: f64,
    process_var: f64,
    meas_dim: usize,
    meas_var: f64,
    runs: usize,
    steps: usize,
    seed: u64,
) -> Result<NeesSeries> {
    let n = 2 * num_paths;
    let process = ChannelProcessConfig {
        ar: ArModel::Scalar(vec![a1]),
        process_var,
        noise_var: 2.0 * meas_var,
    };
    let q_std = process_var.sqrt();
    let init_std = q_std.max(1e-3);
    let mut h_rng = stream(seed, Stream::Scene);
    let h = DMatrix::from_fn(meas_dim, n, |_, _| {
        let e: f64 = StandardNormal.sample(&mut h_rng);
        e
    });
    let model = LinearMeasurement { h: h.clone(), var: meas_var };
    let mut total = vec![0.0; steps];
    for run in 0..runs {
        let mut rng = stream(seed.wrapping_add(1 + run as u64), Stream::Process);
        let start = DVector::from_element(n, std::f64::consts::FRAC_PI_2);
        let mut truth = &start + gaussian_vec(n, init_std, &mut rng);
        let mut belief = GaussianBelief::isotropic(start, init_std * init_std);
        for acc in total.iter_mut() {
            truth = truth * a1 + gaussian_vec(n, q_std, &mut rng);
            let z = &h * &truth + gaussian_vec(meas_dim, meas_var.sqrt(), &mut rng);
            belief = predict(&belief, &process)?;
            belief = update(&belief, &z, &model)?.posterior;
            *acc += belief.nees(&truth)?;
        }
    }
    Ok(NeesSeries {
        dim: n,
        runs,
        per_step: total.into_iter().map(|t| t / runs as f64).collect(),
    })
}

/// Matched-model detector run: angles follow the filter's AR(1) model from
/// near-broadside starts, gains stay fixed, and nothing ever changes abruptly.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRunConfig {
    pub arrays: ArrayConfig,
    pub codebook: CodebookKind,
    /// Path attenuation; `InverseRange` has no meaning here and falls back to `UnitRho`.
    pub gain_model: GainModel,
    pub num_paths: usize,
    pub a1: f64,
    pub process_var: f64,
    pub noise_var: f64,
    pub change: ChangeTestConfig,
    pub steps: usize,
    pub seed: u64,
}

impl Default for DetectorRunConfig {
    fn default() -> Self {
        let sigma_u = 0.5f64.to_radians();
        Self {
            arrays: ArrayConfig::default(),
            codebook: CodebookKind::Dft,
            gain_model: GainModel::UnitRho,
            num_paths: 4,
            a1: 1.0,
            process_var: sigma_u * sigma_u,
            noise_var: 5.12,
            change: ChangeTestConfig::default(),
            steps: 2000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorCalibration {
    pub nis: Vec<f64>,
    /// Degrees of freedom the detector tests against, after the gain fit.
    pub dof: usize,
    pub threshold: f64,
    pub triggers: usize,
    pub false_alarm_rate: f64,
    /// Kolmogorov–Smirnov distance between the NIS sample and `χ²(dof)`.
    pub ks_distance: f64,
}

pub fn ks_distance_chi2(samples: &[f64], dof: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = chi2::cdf(x, dof);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

pub fn detector_calibration(cfg: &DetectorRunConfig) -> Result<DetectorCalibration> {
    let process = ChannelProcessConfig {
        ar: ArModel::Scalar(vec![cfg.a1]),
        process_var: cfg.process_var,
        noise_var: cfg.noise_var,
    };
    let cb = make_codebook(&cfg.arrays, cfg.codebook);
    let mut tracker = ChannelTracker::new(process, cfg.change, cfg.arrays, cb.clone())?;
    let mut scene_rng = stream(cfg.seed, Stream::Scene);
    let mut noise_rng = stream(cfg.seed, Stream::Noise);
    let mut init_rng = stream(cfg.seed, Stream::Init);
    let mut proc_rng = stream(cfg.seed, Stream::Process);

    let l = cfg.num_paths;
    let rho = match cfg.gain_model {
        GainModel::UnitAttenuation => 1.0,
        GainModel::UnitRho | GainModel::InverseRange => {
            1.0 / (cfg.arrays.num_observations() as f64).sqrt()
        }
    };
    let gains: Vec<PathGain> = (0..l)
        .map(|_| PathGain::from_parts(rho, scene_rng.random_range(0.0..1.0), &cfg.arrays))
        .collect();
    // Distinct near-broadside angles keep the paths resolvable and away from endfire.
    let spread = |k: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        std::f64::consts::FRAC_PI_2 + 0.5 * (k as f64 - (l as f64 - 1.0) / 2.0) / l.max(1) as f64
            + rng.random_range(-0.02..0.02)
    };
    let aod: Vec<f64> = (0..l).map(|k| spread(k, &mut scene_rng)).collect();
    let aoa: Vec<f64> = (0..l).map(|k| spread(k, &mut scene_rng)).collect();
    let mut truth = AngleState::new(&aod, &aoa, gains)?;
    let q_std = cfg.process_var.sqrt();

    let frame = |state: &AngleState| SceneFrame {
        t: 0,
        ue_pos: Point2::ORIGIN,
        ue_orientation: 0.0,
        ue_vel: Default::default(),
        ue_acc: Default::default(),
        scatterers: vec![],
        true_aod: (0..l).map(|k| state.aod(k)).collect(),
        true_aoa: (0..l).map(|k| state.aoa(k)).collect(),
        path_lengths: vec![],
        epoch_id: 0,
    };
    let obs = observe(&truth, &cb, cfg.noise_var, 0, &mut noise_rng)?;
    tracker.acquire(&frame(&truth), &obs, q_std, &mut init_rng)?;

    let mut nis = Vec::with_capacity(cfg.steps);
    let mut triggers = 0;
    let mut threshold = f64::NAN;
    for t in 1..=cfg.steps {
        truth.psi = &truth.psi * cfg.a1 + gaussian_vec(2 * l, q_std, &mut proc_rng);
        let obs = observe(&truth, &cb, cfg.noise_var, t, &mut noise_rng)?;
        let step = tracker.step(&obs)?;
        nis.push(step.decision.statistic);
        threshold = step.decision.threshold;
        triggers += step.decision.triggered as usize;
    }
    let dof = ChangeTestConfig::fitted_dof(&cfg.arrays, l);
    let ks_distance = if cfg.change.window == 1 {
        ks_distance_chi2(&nis, dof as f64)
    } else {
        f64::NAN
    };
    Ok(DetectorCalibration {
        false_alarm_rate: triggers as f64 / cfg.steps as f64,
        nis,
        dof,
        threshold,
        triggers,
        ks_distance,
    })
}
