//! Two-stage tracking loop and campaign driver.
//!
//! Per step: synthesize the beam sweep, run the channel EKF and change test,
//! re-acquire on a trigger, triangulate the coarse pose from the tracked
//! angles, then (two-stage mode) fuse it with IMU data in the position KF.

use log::warn;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::GaussianBelief;
use crate::channel::{
    make_codebook, noise_variance_from_snr, observe, snr_db_to_linear, synthesize_gains, AngleState,
    ArrayConfig, CodebookKind, GainModel,
};
use crate::error::{Error, Result};
use crate::position::{
    assemble_measurement, kf_predict, kf_update, state_error, synthesize_imu, true_state, ImuConfig,
    PositionKFConfig, GAMMA,
};
use crate::rng::{derive_seeds, stream, Stream};
use crate::scene::{simulate_scene, wrap_to_pi, Point2, ScattererPolicy, SceneFrame, TrajectoryConfig};
use crate::tracker::{ArModel, ChangeTestConfig, ChannelProcessConfig, ChannelTracker};
use crate::triangulate::{path_weights, solve_pose, PathMeasurement, PoseEstimate, PoseStatus, SolveOptions, WeightPolicy};

/// Env var capping campaign parallelism.
pub const THREADS_ENV: &str = "NLOS_TRACK_THREADS";

/// Smallest prior variance used when seeding the position KF from a measurement.
const MIN_INIT_VAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TwoStage,
    SingleStage,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::TwoStage, Mode::SingleStage];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::TwoStage => "two_stage",
            Mode::SingleStage => "single_stage",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage" => Ok(Mode::TwoStage),
            "single_stage" => Ok(Mode::SingleStage),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode '{other}' (expected two_stage or single_stage)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReacquirePolicy {
    /// Re-acquire whenever the change test fires.
    Detector,
    /// Re-acquire exactly at scatterer re-draws, ignoring the detector.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSettings {
    /// AR coefficients `a_1 … a_p`, each applied as `a_i·I`.
    pub ar: Vec<f64>,
    /// `σ_u²`, rad².
    pub process_var: f64,
    /// Std of the genie acquisition error, rad.
    pub init_std: f64,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        let sigma_u = 0.5f64.to_radians();
        Self {
            ar: vec![0.95],
            process_var: sigma_u * sigma_u,
            init_std: sigma_u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReacquireSettings {
    pub policy: ReacquirePolicy,
    /// Steps after a re-draw within which a re-acquisition counts as timely.
    pub deadline: usize,
}

impl Default for ReacquireSettings {
    fn default() -> Self {
        Self {
            policy: ReacquirePolicy::Detector,
            deadline: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriangulationSettings {
    pub weights: WeightPolicy,
    pub gamma_bracket_deg: f64,
    pub grid_points: usize,
}

impl Default for TriangulationSettings {
    fn default() -> Self {
        Self {
            weights: WeightPolicy::Uniform,
            gamma_bracket_deg: 10.0,
            grid_points: 720,
        }
    }
}

impl TriangulationSettings {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            gamma_bracket: self.gamma_bracket_deg.to_radians(),
            grid_points: self.grid_points,
            ..SolveOptions::default()
        }
    }
}

/// Everything one run needs. Scalars come first so the TOML form keeps them
/// above the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    /// Number of steps; all trajectory frames when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Per-observation SNR in dB; `inf` disables measurement noise.
    pub snr_db: f64,
    pub codebook: CodebookKind,
    pub gain_model: GainModel,
    pub trajectory: TrajectoryConfig,
    pub scatterers: ScattererPolicy,
    pub arrays: ArrayConfig,
    pub channel: ChannelSettings,
    pub change: ChangeTestConfig,
    pub reacquisition: ReacquireSettings,
    pub triangulation: TriangulationSettings,
    pub poskf: PositionKFConfig,
    pub imu: ImuConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: Mode::TwoStage,
            n_steps: None,
            snr_db: 20.0,
            codebook: CodebookKind::Dft,
            gain_model: GainModel::UnitAttenuation,
            trajectory: TrajectoryConfig::default(),
            scatterers: ScattererPolicy::default(),
            arrays: ArrayConfig::default(),
            channel: ChannelSettings::default(),
            change: ChangeTestConfig::default(),
            reacquisition: ReacquireSettings::default(),
            triangulation: TriangulationSettings::default(),
            poskf: PositionKFConfig::default(),
            imu: ImuConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.scatterers.validate()?;
        self.arrays.validate()?;
        self.change.validate()?;
        self.imu.validate()?;
        self.position_kf().validate()?;
        self.process()?.validate()?;
        if self.snr_db.is_nan() {
            return Err(Error::InvalidConfig("snr_db must be a number".into()));
        }
        if self.channel.ar.is_empty() || self.channel.ar.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig("channel.ar needs at least one finite coefficient".into()));
        }
        if !(self.channel.init_std >= 0.0) || !self.channel.init_std.is_finite() {
            return Err(Error::InvalidConfig("channel.init_std must be finite and >= 0".into()));
        }
        if !(self.triangulation.gamma_bracket_deg >= 0.0) || self.triangulation.grid_points < 8 {
            return Err(Error::InvalidConfig(
                "triangulation needs gamma_bracket_deg >= 0 and grid_points >= 8".into(),
            ));
        }
        match self.n_steps {
            Some(0) => return Err(Error::InvalidConfig("n_steps must be >= 1".into())),
            Some(n) if n > self.trajectory.num_frames() => {
                return Err(Error::InvalidConfig(format!(
                    "n_steps = {n} exceeds the {} trajectory frames",
                    self.trajectory.num_frames()
                )))
            }
            _ => {}
        }
        Ok(())
    }

    /// Circular measurement-noise variance `σ_w² = N_r N_t / SNR`.
    pub fn noise_var(&self) -> Result<f64> {
        if self.snr_db == f64::INFINITY {
            return Ok(0.0);
        }
        noise_variance_from_snr(snr_db_to_linear(self.snr_db), &self.arrays)
    }

    pub fn process(&self) -> Result<ChannelProcessConfig> {
        Ok(ChannelProcessConfig {
            ar: ArModel::Scalar(self.channel.ar.clone()),
            process_var: self.channel.process_var,
            noise_var: self.noise_var()?,
        })
    }

    /// Position-KF settings with the step size taken from the trajectory.
    pub fn position_kf(&self) -> PositionKFConfig {
        PositionKFConfig {
            dt: self.trajectory.dt,
            ..self.poskf.clone()
        }
    }

    pub fn steps(&self) -> usize {
        self.n_steps.unwrap_or_else(|| self.trajectory.num_frames())
    }

    pub fn max_paths(&self) -> usize {
        self.scatterers.max_paths()
    }
}

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub run: usize,
    pub seed: u64,
    pub mode: Mode,
    pub step: usize,
    /// Seconds since the start of the run.
    pub t: f64,
    pub epoch_id: usize,
    pub num_paths: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub true_gamma: f64,
    pub coarse_x: f64,
    pub coarse_y: f64,
    pub coarse_gamma: f64,
    pub coarse_cost: f64,
    pub coarse_status: PoseStatus,
    /// Position-KF posterior; `NaN` in single-stage mode.
    pub kf_x: f64,
    pub kf_y: f64,
    pub kf_gamma: f64,
    pub kf_nees: f64,
    /// The mode's estimate: KF posterior or the latest valid coarse pose.
    pub est_x: f64,
    pub est_y: f64,
    pub est_gamma: f64,
    pub pos_error: f64,
    pub gamma_error: f64,
    /// `NaN` on acquisition steps, where no EKF update ran.
    pub nis: f64,
    pub threshold: f64,
    pub triggered: bool,
    pub reacquired: bool,
    pub gain_fallback: bool,
    /// Tracker has been acquired on the current scatterer epoch and this is not
    /// the acquisition step.
    pub within_epoch: bool,
    pub aod_est: Vec<f64>,
    pub aoa_est: Vec<f64>,
    pub aod_sq_err: Vec<f64>,
    pub aoa_sq_err: Vec<f64>,
}

impl StepRecord {
    pub fn max_paths(&self) -> usize {
        self.aod_est.len()
    }
}

fn padded(values: impl Iterator<Item = f64>, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.take(len).collect();
    v.resize(len, f64::NAN);
    v
}

/// Single run of `cfg.mode`. `run` tags the records.
pub fn run(cfg: &RunConfig) -> Result<Vec<StepRecord>> {
    run_tagged(cfg, 0)
}

pub fn run_tagged(cfg: &RunConfig, run_index: usize) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    let bs = Point2::ORIGIN;
    let seed = cfg.seed;
    let mut scene_rng = stream(seed, Stream::Scene);
    let mut noise_rng = stream(seed, Stream::Noise);
    let mut init_rng = stream(seed, Stream::Init);
    let mut imu_rng = stream(seed, Stream::Imu);

    let frames = simulate_scene(bs, &cfg.trajectory, &cfg.scatterers, &mut scene_rng)?;
    let n_steps = cfg.steps();
    let cb = make_codebook(&cfg.arrays, cfg.codebook);
    let process = cfg.process()?;
    let noise_var = process.noise_var;
    let mut tracker = ChannelTracker::new(process, cfg.change, cfg.arrays, cb.clone())?;
    let kf_cfg = cfg.position_kf();
    let opts = cfg.triangulation.solve_options();
    let l_max = cfg.max_paths();

    let mut pos_belief: Option<GaussianBelief> = None;
    let mut last_coarse: Option<PoseEstimate> = None;
    let mut acq_epoch: Option<usize> = None;
    let mut records = Vec::with_capacity(n_steps);

    for (t, frame) in frames.iter().enumerate().take(n_steps) {
        let gains = synthesize_gains(frame, &cfg.arrays, cfg.gain_model);
        let truth = AngleState::new(&frame.true_aod, &frame.true_aoa, gains)?;
        let obs = observe(&truth, &cb, noise_var, t, &mut noise_rng)?;
        let imu = synthesize_imu(frame, &cfg.imu, &mut imu_rng);
        let boundary = t > 0 && frame.epoch_id != frames[t - 1].epoch_id;

        let mut nis = f64::NAN;
        let mut threshold = f64::NAN;
        let mut triggered = false;
        let mut gain_fallback = false;
        let forced = !tracker.is_acquired()
            || (cfg.reacquisition.policy == ReacquirePolicy::Oracle && boundary);
        let mut reacquired = forced;
        if !forced {
            match tracker.step(&obs) {
                Ok(s) => {
                    nis = s.decision.statistic;
                    threshold = s.decision.threshold;
                    triggered = s.decision.triggered;
                    gain_fallback = s.gain_fallback;
                    reacquired = triggered && cfg.reacquisition.policy == ReacquirePolicy::Detector;
                }
                Err(e) => {
                    warn!("run {run_index} step {t}: channel update failed ({e}); re-acquiring");
                    reacquired = true;
                }
            }
        }
        if reacquired {
            tracker.acquire(frame, &obs, cfg.channel.init_std, &mut init_rng)?;
            acq_epoch = Some(frame.epoch_id);
        }
        let within_epoch = !reacquired && acq_epoch == Some(frame.epoch_id);

        let angles = tracker.angles();
        let l_est = tracker.num_paths();
        let variances = tracker.angle_variances();
        let usable = l_est.min(frame.num_paths());
        let per_path_var: Vec<f64> = (0..usable).map(|l| variances[l] + variances[l_est + l]).collect();
        let weights = path_weights(cfg.triangulation.weights, &per_path_var);
        let paths: Vec<PathMeasurement> = (0..usable)
            .map(|l| PathMeasurement {
                aod: angles[l],
                aoa: angles[l_est + l],
                length: frame.path_lengths[l],
                weight: weights[l],
            })
            .collect();

        let (coarse, kf_post) = match cfg.mode {
            Mode::TwoStage => {
                let prior = pos_belief.as_ref().map(|b| kf_predict(b, &kf_cfg)).transpose()?;
                let gamma_init = prior.as_ref().map(|p| p.mean[GAMMA]);
                let pose = solve_pose(&paths, bs, gamma_init, &opts);
                let posterior = match (prior, assemble_measurement(&pose, &imu)) {
                    (Some(p), Some(z)) => Some(kf_update(&p, &z, &kf_cfg)?.posterior),
                    (Some(p), None) => Some(p),
                    (None, Some(z)) => Some(initial_belief(z, &kf_cfg)),
                    (None, None) => None,
                };
                pos_belief = posterior.clone();
                (pose, posterior)
            }
            Mode::SingleStage => {
                let gamma_init = last_coarse.map(|p| p.gamma);
                let pose = solve_pose(&paths, bs, gamma_init, &opts);
                (pose, None)
            }
        };
        if coarse.is_valid() {
            last_coarse = Some(coarse);
        }

        let truth_state = true_state(frame);
        let (kf_x, kf_y, kf_gamma, kf_nees) = match &kf_post {
            Some(b) => {
                let nees = b
                    .nees_of_error(&state_error(&b.mean, &truth_state))
                    .unwrap_or(f64::NAN);
                (b.mean[0], b.mean[1], b.mean[GAMMA], nees)
            }
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        let (est_x, est_y, est_gamma) = match cfg.mode {
            Mode::TwoStage => (kf_x, kf_y, kf_gamma),
            Mode::SingleStage => last_coarse.map_or((f64::NAN, f64::NAN, f64::NAN), |p| (p.x, p.y, p.gamma)),
        };
        let pos_error = (est_x - frame.ue_pos.x).hypot(est_y - frame.ue_pos.y);
        let gamma_error = wrap_to_pi(est_gamma - frame.ue_orientation).abs();

        let sq = |est: f64, truth: f64| wrap_to_pi(est - truth).powi(2);
        let aod_est = padded((0..l_est).map(|l| angles[l]), l_max);
        let aoa_est = padded((0..l_est).map(|l| angles[l_est + l]), l_max);
        let aod_sq_err = padded((0..usable).map(|l| sq(angles[l], frame.true_aod[l])), l_max);
        let aoa_sq_err = padded((0..usable).map(|l| sq(angles[l_est + l], frame.true_aoa[l])), l_max);

        records.push(StepRecord {
            run: run_index,
            seed,
            mode: cfg.mode,
            step: t,
            t: t as f64 * cfg.trajectory.dt,
            epoch_id: frame.epoch_id,
            num_paths: frame.num_paths(),
            true_x: frame.ue_pos.x,
            true_y: frame.ue_pos.y,
            true_gamma: frame.ue_orientation,
            coarse_x: coarse.x,
            coarse_y: coarse.y,
            coarse_gamma: coarse.gamma,
            coarse_cost: coarse.cost,
            coarse_status: coarse.status,
            kf_x,
            kf_y,
            kf_gamma,
            kf_nees,
            est_x,
            est_y,
            est_gamma,
            pos_error,
            gamma_error,
            nis,
            threshold,
            triggered,
            reacquired,
            gain_fallback,
            within_epoch,
            aod_est,
            aoa_est,
            aod_sq_err,
            aoa_sq_err,
        });
    }
    Ok(records)
}

fn initial_belief(z: DVector<f64>, cfg: &PositionKFConfig) -> GaussianBelief {
    let var = DVector::from_iterator(7, cfg.meas_var.iter().map(|v| v.max(MIN_INIT_VAR)));
    GaussianBelief {
        mean: z,
        cov: nalgebra::DMatrix::from_diagonal(&var),
    }
}

/// Ground-truth frames of a run, as the pipeline sees them.
pub fn scene_frames(cfg: &RunConfig) -> Result<Vec<SceneFrame>> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, Stream::Scene);
    let mut frames = simulate_scene(Point2::ORIGIN, &cfg.trajectory, &cfg.scatterers, &mut rng)?;
    frames.truncate(cfg.steps());
    Ok(frames)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub run: usize,
    pub seed: u64,
    pub mode: Mode,
    pub records: Vec<StepRecord>,
}

/// `n_seeds` runs per mode. Seeds derive from `cfg.seed`; output is ordered by
/// mode, then run index, whatever the worker count.
pub fn run_campaign(cfg: &RunConfig, n_seeds: usize, modes: &[Mode]) -> Result<Vec<RunOutput>> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("campaign needs at least one seed".into()));
    }
    cfg.validate()?;
    let seeds = derive_seeds(cfg.seed, n_seeds);
    let jobs: Vec<(Mode, usize, u64)> = modes
        .iter()
        .flat_map(|&m| seeds.iter().enumerate().map(move |(i, &s)| (m, i, s)))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(mode, run, seed)| {
                let c = RunConfig { seed, mode, ..cfg.clone() };
                run_tagged(&c, run).map(|records| RunOutput { run, seed, mode, records })
            })
            .collect::<Result<Vec<_>>>()
    };
    match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn thread_cap() -> Option<usize> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            warn!("ignoring {THREADS_ENV}={raw:?}; expected a positive integer");
            None
        }
    }
}
