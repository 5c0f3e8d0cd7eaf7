//! Extended Kalman filter over the stacked path angles.
//!
//! The state is `ψ = [φ_1..φ_L, θ_1..θ_L]` (for AR order `p > 1`, the last `p`
//! angle vectors stacked newest first). Complex beam-sweep measurements are
//! handled as a real vector `[Re(y); Im(y)]` of length `2·N_r·N_t`, each
//! component carrying half the circular noise variance.
//!
//! Path gains are not part of the state. Each step they are fitted by linear
//! least squares at the predicted angles and then held fixed for the update.
//!
//! The measurement update never forms the `2N_rN_t × 2N_rN_t` innovation
//! covariance `S = J P Jᵀ + r I`. With `W = (r I + JᵀJ P)⁻¹` the push-through
//! identity gives `S⁻¹ = (I − J P W Jᵀ)/r` and `K = P W Jᵀ`, so every solve is
//! in state dimension.

use std::collections::VecDeque;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::belief::GaussianBelief;
use crate::channel::{
    add_outer_vec, beam_space_response, stack_real, steering_derivative, ArrayConfig, AngleState,
    CVector, Codebook, Observation, PathGain,
};
use crate::chi2;
use crate::error::{Error, Result};
use crate::scene::{array_angle, SceneFrame};

/// Smallest per-component measurement variance used in the update.
const MIN_MEAS_VAR: f64 = 1e-24;

/// Largest singular-value ratio accepted for the gain regressor.
const MAX_GAIN_COND: f64 = 1e8;

/// Transition matrices of the AR(p) angle process.
#[derive(Debug, Clone, PartialEq)]
pub enum ArModel {
    /// `A_i = a_i·I`, valid for any number of paths.
    Scalar(Vec<f64>),
    /// Explicit `2L × 2L` matrices.
    Matrices(Vec<DMatrix<f64>>),
}

/// Angle process model used by the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProcessConfig {
    pub ar: ArModel,
    /// `σ_u²`, rad².
    pub process_var: f64,
    /// `σ_w²`, circular complex measurement-noise variance.
    pub noise_var: f64,
}

impl Default for ChannelProcessConfig {
    fn default() -> Self {
        let sigma_u = 0.5f64.to_radians();
        Self {
            ar: ArModel::Scalar(vec![0.95]),
            process_var: sigma_u * sigma_u,
            noise_var: 5.12,
        }
    }
}

impl ChannelProcessConfig {
    pub fn order(&self) -> usize {
        match &self.ar {
            ArModel::Scalar(a) => a.len(),
            ArModel::Matrices(m) => m.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order() == 0 {
            return Err(Error::InvalidConfig("AR order must be >= 1".into()));
        }
        if let ArModel::Matrices(m) = &self.ar {
            let n = m[0].nrows();
            if n % 2 != 0 || m.iter().any(|a| a.nrows() != n || a.ncols() != n) {
                return Err(Error::InvalidConfig(
                    "AR matrices must all be square of size 2L".into(),
                ));
            }
        }
        if !(self.process_var >= 0.0) || !(self.noise_var >= 0.0) {
            return Err(Error::InvalidConfig("variances must be >= 0".into()));
        }
        Ok(())
    }

    fn block(&self, i: usize, n: usize) -> Result<DMatrix<f64>> {
        match &self.ar {
            ArModel::Scalar(a) => Ok(DMatrix::identity(n, n) * a[i]),
            ArModel::Matrices(m) => {
                if m[i].nrows() != n {
                    return Err(Error::DimensionMismatch {
                        context: "AR matrix",
                        expected: n,
                        found: m[i].nrows(),
                    });
                }
                Ok(m[i].clone())
            }
        }
    }

    /// Companion-form transition for `n` angles per block.
    pub fn transition(&self, n: usize) -> Result<DMatrix<f64>> {
        let p = self.order();
        let mut f = DMatrix::zeros(n * p, n * p);
        for i in 0..p {
            f.view_mut((0, i * n), (n, n)).copy_from(&self.block(i, n)?);
        }
        for i in 1..p {
            f.view_mut((i * n, (i - 1) * n), (n, n))
                .fill_diagonal(1.0);
        }
        Ok(f)
    }

    /// Spectral radius of the companion matrix; below one means stationary.
    pub fn spectral_radius(&self, n: usize) -> Result<f64> {
        let f = self.transition(n)?;
        Ok(f.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max))
    }
}

/// Time update `m ← F m`, `P ← F P Fᵀ + Q` with `Q = σ_u² I` on the newest block.
pub fn predict(belief: &GaussianBelief, cfg: &ChannelProcessConfig) -> Result<GaussianBelief> {
    let p = cfg.order();
    let dim = belief.dim();
    if dim == 0 || !dim.is_multiple_of(p) {
        return Err(Error::DimensionMismatch {
            context: "channel predict",
            expected: p * (dim / p).max(1),
            found: dim,
        });
    }
    let n = dim / p;
    let f = cfg.transition(n)?;
    let mean = &f * &belief.mean;
    let mut cov = &f * &belief.cov * f.transpose();
    for i in 0..n {
        cov[(i, i)] += cfg.process_var;
    }
    let mut out = GaussianBelief { mean, cov };
    out.condition();
    Ok(out)
}

/// A real-valued measurement model `z = h(x) + v`, `v ~ N(0, r I)`.
///
/// `x` is the newest angle block only; the filter pads the Jacobian with zeros
/// for the older AR blocks.
pub trait MeasurementModel {
    fn dim(&self) -> usize;
    /// Size of the angle block the model reads.
    fn state_dim(&self) -> usize;
    fn predict(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Variance per real component.
    fn component_var(&self) -> f64;
}

/// Beam-sweep measurement at fixed gains.
pub struct ChannelMeasurement<'a> {
    pub cb: &'a Codebook,
    pub gains: &'a [PathGain],
    /// `σ_w²` of the circular complex noise.
    pub noise_var: f64,
}

impl ChannelMeasurement<'_> {
    fn state(&self, x: &DVector<f64>) -> AngleState {
        AngleState {
            psi: x.clone(),
            gains: self.gains.to_vec(),
        }
    }
}

impl MeasurementModel for ChannelMeasurement<'_> {
    fn dim(&self) -> usize {
        2 * self.cb.n_rx() * self.cb.n_tx()
    }

    fn state_dim(&self) -> usize {
        2 * self.gains.len()
    }

    fn predict(&self, x: &DVector<f64>) -> DVector<f64> {
        stack_real(&measurement_fn(&self.state(x), self.cb))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        measurement_jacobian(&self.state(x), self.cb)
    }

    fn component_var(&self) -> f64 {
        self.noise_var / 2.0
    }
}

/// Linear measurement `z = H x + v`, used for consistency surrogates.
pub struct LinearMeasurement {
    pub h: DMatrix<f64>,
    pub var: f64,
}

impl MeasurementModel for LinearMeasurement {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    fn predict(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.h.clone()
    }

    fn component_var(&self) -> f64 {
        self.var
    }
}

/// `h̃(ψ) = vec(Cᴴ H(ψ) B)`.
pub fn measurement_fn(state: &AngleState, cb: &Codebook) -> CVector {
    beam_space_response(state, cb)
}

/// Stacked real/imaginary Jacobian of `h̃` with respect to `ψ`, `(2N_rN_t) × (2L)`.
pub fn measurement_jacobian(state: &AngleState, cb: &Codebook) -> DMatrix<f64> {
    let l_count = state.num_paths();
    let m = cb.n_rx() * cb.n_tx();
    let mut jac = DMatrix::zeros(2 * m, 2 * l_count);
    for l in 0..l_count {
        let alpha = state.gains[l].alpha;
        let (u, v) = cb.beam_responses(state.aod(l), state.aoa(l));
        let dv = cb.b.adjoint() * steering_derivative(state.aod(l), cb.n_tx());
        let du = cb.c.adjoint() * steering_derivative(state.aoa(l), cb.n_rx());

        let mut d_aod = CVector::zeros(m);
        add_outer_vec(&mut d_aod, &u, &dv, alpha);
        let mut d_aoa = CVector::zeros(m);
        add_outer_vec(&mut d_aoa, &du, &v, alpha);

        jac.column_mut(l).copy_from(&stack_real(&d_aod));
        jac.column_mut(l_count + l).copy_from(&stack_real(&d_aoa));
    }
    jac
}

/// Innovation covariance `S = J P Jᵀ + r I`, kept in factored form.
#[derive(Debug, Clone)]
pub struct InnovationCovariance {
    jac: DMatrix<f64>,
    /// `P W`, with `W = (r I + JᵀJ P)⁻¹`.
    pw: DMatrix<f64>,
    r: f64,
}

impl InnovationCovariance {
    fn new(jac: DMatrix<f64>, cov: &DMatrix<f64>, r: f64) -> Result<Self> {
        let n = cov.nrows();
        let inner = DMatrix::identity(n, n) * r + jac.tr_mul(&jac) * cov;
        let w = inner
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite("innovation covariance"))?;
        Ok(Self {
            pw: cov * w,
            jac,
            r,
        })
    }

    pub fn dim(&self) -> usize {
        self.jac.nrows()
    }

    /// `νᵀ S⁻¹ ν`.
    pub fn mahalanobis(&self, nu: &DVector<f64>) -> Result<f64> {
        let jt_nu = self.jac.tr_mul(nu);
        let v = (nu.norm_squared() - jt_nu.dot(&(&self.pw * &jt_nu))) / self.r;
        if !v.is_finite() || v < -1e-9 * nu.norm_squared().max(1.0) / self.r {
            return Err(Error::NotPositiveDefinite("innovation covariance"));
        }
        Ok(v.max(0.0))
    }

    /// Dense `S`, for diagnostics and tests.
    pub fn to_dense(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.dim();
        &self.jac * cov * self.jac.transpose() + DMatrix::identity(m, m) * self.r
    }
}

/// Result of one EKF measurement update.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub posterior: GaussianBelief,
    /// `ν = z − h(x̂⁻)`, stacked real.
    pub innovation: DVector<f64>,
    pub innovation_cov: InnovationCovariance,
    /// `νᵀ S⁻¹ ν`.
    pub nis: f64,
}

/// EKF correction with a Joseph-form covariance update.
pub fn update<M: MeasurementModel>(
    prior: &GaussianBelief,
    z: &DVector<f64>,
    model: &M,
) -> Result<UpdateOutcome> {
    if z.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "measurement",
            expected: model.dim(),
            found: z.len(),
        });
    }
    let dim = prior.dim();
    let block = model.state_dim();
    if block == 0 || !dim.is_multiple_of(block) {
        return Err(Error::DimensionMismatch {
            context: "measurement jacobian",
            expected: dim,
            found: block,
        });
    }
    let x = prior.mean.rows(0, block).into_owned();
    let mut jac = DMatrix::zeros(model.dim(), dim);
    jac.view_mut((0, 0), (model.dim(), block))
        .copy_from(&model.jacobian(&x));
    let innovation = z - model.predict(&x);
    let r = model.component_var().max(MIN_MEAS_VAR);

    let s = InnovationCovariance::new(jac, &prior.cov, r)?;
    let nis = s.mahalanobis(&innovation)?;
    let jt_nu = s.jac.tr_mul(&innovation);
    let mean = &prior.mean + &s.pw * &jt_nu;

    // K J = P W JᵀJ and K Kᵀ = P W JᵀJ Wᵀ P
    let jtj = s.jac.tr_mul(&s.jac);
    let kj = &s.pw * &jtj;
    let ikj = DMatrix::identity(dim, dim) - &kj;
    let cov = &ikj * &prior.cov * ikj.transpose() + &kj * s.pw.transpose() * r;
    let mut posterior = GaussianBelief { mean, cov };
    posterior.condition();
    Ok(UpdateOutcome {
        posterior,
        innovation,
        innovation_cov: s,
        nis,
    })
}

/// Least-squares path gains for fixed angles: `α = argmin ‖y − G α‖`, where
/// column `l` of `G` is `vec(Cᴴ a_r(θ_l) a_t(φ_l)ᴴ B)`.
pub fn estimate_gains(
    psi: &DVector<f64>,
    obs: &Observation,
    cb: &Codebook,
    arrays: &ArrayConfig,
) -> Result<Vec<PathGain>> {
    let l_count = psi.len() / 2;
    let m = cb.n_rx() * cb.n_tx();
    if psi.len() != 2 * l_count || l_count == 0 || obs.y.len() != m {
        return Err(Error::DimensionMismatch {
            context: "gain regression",
            expected: m,
            found: obs.y.len(),
        });
    }
    let mut g = nalgebra::DMatrix::<Complex64>::zeros(m, l_count);
    for l in 0..l_count {
        let (u, v) = cb.beam_responses(psi[l], psi[l_count + l]);
        let mut col = CVector::zeros(m);
        add_outer_vec(&mut col, &u, &v, Complex64::new(1.0, 0.0));
        g.column_mut(l).copy_from(&col);
    }
    let svd = g.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_GAIN_COND) {
        return Err(Error::RankDeficient(cond));
    }
    let alpha = svd
        .solve(&obs.y, 0.0)
        .map_err(|_| Error::RankDeficient(cond))?;
    Ok(alpha
        .iter()
        .map(|a| PathGain::from_alpha(*a, arrays))
        .collect())
}

/// Change-test settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChangeTestConfig {
    /// Probability of false alarm per test.
    pub p_fa: f64,
    /// Number of consecutive NIS values summed into the statistic.
    pub window: usize,
}

impl Default for ChangeTestConfig {
    fn default() -> Self {
        Self {
            p_fa: 0.05,
            window: 1,
        }
    }
}

impl ChangeTestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(Error::InvalidConfig("p_fa must lie in (0, 1)".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("change-test window must be >= 1".into()));
        }
        Ok(())
    }

    /// Degrees of freedom of one beam-sweep innovation, `2·N_r·N_t`.
    pub fn dof(arrays: &ArrayConfig) -> usize {
        2 * arrays.num_observations()
    }

    /// Degrees of freedom left once `L` complex gains have been fitted to the
    /// same sweep, `2·N_r·N_t − 2L`. The tracker's detector uses this count.
    pub fn fitted_dof(arrays: &ArrayConfig, num_paths: usize) -> usize {
        Self::dof(arrays).saturating_sub(2 * num_paths).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeDecision {
    pub triggered: bool,
    pub statistic: f64,
    pub threshold: f64,
}

/// Single-step chi-square test of the innovation against its covariance.
pub fn change_test(
    innovation: &DVector<f64>,
    s: &InnovationCovariance,
    cfg: &ChangeTestConfig,
) -> Result<ChangeDecision> {
    let statistic = s.mahalanobis(innovation)?;
    let threshold = chi2::quantile(1.0 - cfg.p_fa, innovation.len() as f64);
    Ok(ChangeDecision {
        triggered: statistic > threshold,
        statistic,
        threshold,
    })
}

/// Windowed NIS detector: sums the last `window` statistics and compares them
/// with the chi-square quantile of the pooled degrees of freedom.
#[derive(Debug, Clone)]
pub struct ChangeDetector {
    cfg: ChangeTestConfig,
    dof: usize,
    history: VecDeque<f64>,
    thresholds: Vec<f64>,
}

impl ChangeDetector {
    pub fn new(cfg: ChangeTestConfig, dof: usize) -> Self {
        let thresholds = (1..=cfg.window)
            .map(|k| chi2::quantile(1.0 - cfg.p_fa, (k * dof) as f64))
            .collect();
        Self {
            cfg,
            dof,
            history: VecDeque::with_capacity(cfg.window),
            thresholds,
        }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn push(&mut self, nis: f64) -> ChangeDecision {
        if self.history.len() == self.cfg.window {
            self.history.pop_front();
        }
        self.history.push_back(nis);
        let statistic: f64 = self.history.iter().sum();
        let threshold = self.thresholds[self.history.len() - 1];
        ChangeDecision {
            triggered: statistic > threshold,
            statistic,
            threshold,
        }
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }
}

/// Genie acquisition: true angles plus `N(0, init_std²)` errors, with gains
/// fitted to `obs` at the perturbed angles.
///
/// For AR order `p > 1` the angle vector is replicated into every block.
pub fn reacquire<R: Rng + ?Sized>(
    frame: &SceneFrame,
    obs: &Observation,
    cb: &Codebook,
    arrays: &ArrayConfig,
    ar_order: usize,
    init_std: f64,
    rng: &mut R,
) -> Result<(AngleState, GaussianBelief)> {
    let truth = frame.angle_vector();
    let n = truth.len();
    let psi = DVector::from_iterator(
        n,
        truth.iter().map(|&a| {
            let e: f64 = StandardNormal.sample(rng);
            a + init_std * e
        }),
    );
    let gains = estimate_gains(&psi, obs, cb, arrays)?;
    let var = init_std * init_std;
    let p = ar_order.max(1);
    let mean = DVector::from_fn(n * p, |i, _| psi[i % n]);
    let belief = GaussianBelief::isotropic(mean, var);
    Ok((AngleState::from_psi(psi, gains)?, belief))
}

/// Non-genie acquisition: picks the `num_paths` strongest beam pairs of `obs`
/// (no two sharing a transmit or receive beam) and returns their grid angles
/// `(φ, θ)` folded onto `[0, π]`.
pub fn beam_scan_acquire(obs: &Observation, cb: &Codebook, num_paths: usize) -> Vec<(f64, f64)> {
    let mut cells: Vec<(f64, usize, usize)> = (0..cb.n_rx())
        .flat_map(|i| (0..cb.n_tx()).map(move |j| (i, j)))
        .map(|(i, j)| (obs.y_mat[(i, j)].norm_sqr(), i, j))
        .collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut used_rx = vec![false; cb.n_rx()];
    let mut used_tx = vec![false; cb.n_tx()];
    let mut out = Vec::with_capacity(num_paths);
    for (_, i, j) in cells {
        if out.len() == num_paths {
            break;
        }
        if used_rx[i] && used_tx[j] {
            continue;
        }
        used_rx[i] = true;
        used_tx[j] = true;
        out.push((
            array_angle(cb.grid_angles_tx[j]),
            array_angle(cb.grid_angles_rx[i]),
        ));
    }
    out
}

/// Per-step output of [`ChannelTracker::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerStep {
    pub decision: ChangeDecision,
    /// The gain fit was rank deficient and the previous gains were kept.
    pub gain_fallback: bool,
}

/// Stateful channel tracker: predict, gain fit, EKF update and change test.
#[derive(Debug, Clone)]
pub struct ChannelTracker {
    process: ChannelProcessConfig,
    arrays: ArrayConfig,
    cb: Codebook,
    detector: ChangeDetector,
    change: ChangeTestConfig,
    belief: GaussianBelief,
    gains: Vec<PathGain>,
}

impl ChannelTracker {
    pub fn new(
        process: ChannelProcessConfig,
        change: ChangeTestConfig,
        arrays: ArrayConfig,
        cb: Codebook,
    ) -> Result<Self> {
        process.validate()?;
        change.validate()?;
        arrays.validate()?;
        Ok(Self {
            detector: ChangeDetector::new(change, ChangeTestConfig::dof(&arrays)),
            change,
            process,
            arrays,
            cb,
            belief: GaussianBelief::isotropic(DVector::zeros(0), 0.0),
            gains: Vec::new(),
        })
    }

    pub fn is_acquired(&self) -> bool {
        !self.gains.is_empty()
    }

    pub fn num_paths(&self) -> usize {
        self.gains.len()
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn gains(&self) -> &[PathGain] {
        &self.gains
    }

    pub fn codebook(&self) -> &Codebook {
        &self.cb
    }

    /// Current angle estimate (newest block).
    pub fn angles(&self) -> DVector<f64> {
        self.belief.mean.rows(0, 2 * self.num_paths()).into_owned()
    }

    /// Posterior variance of every angle of the newest block.
    pub fn angle_variances(&self) -> Vec<f64> {
        (0..2 * self.num_paths()).map(|i| self.belief.cov[(i, i)]).collect()
    }

    pub fn state(&self) -> AngleState {
        AngleState {
            psi: self.angles(),
            gains: self.gains.clone(),
        }
    }

    /// Starts (or restarts) tracking from a genie acquisition.
    pub fn acquire<R: Rng + ?Sized>(
        &mut self,
        frame: &SceneFrame,
        obs: &Observation,
        init_std: f64,
        rng: &mut R,
    ) -> Result<()> {
        let order = self.process.order();
        if order > 1 || matches!(self.process.ar, ArModel::Matrices(_)) {
            let n = 2 * frame.num_paths();
            let radius = self.process.spectral_radius(n)?;
            if radius >= 1.0 {
                warn!("AR process is not stationary (spectral radius {radius:.4})");
            }
        } else if let ArModel::Scalar(a) = &self.process.ar {
            if a[0].abs() >= 1.0 {
                warn!("AR process is not stationary (a1 = {})", a[0]);
            }
        }
        let (state, belief) =
            reacquire(frame, obs, &self.cb, &self.arrays, order, init_std, rng)?;
        self.gains = state.gains;
        self.belief = belief;
        let dof = ChangeTestConfig::fitted_dof(&self.arrays, self.gains.len());
        if dof == self.detector.dof() {
            self.detector.reset();
        } else {
            self.detector = ChangeDetector::new(self.change, dof);
        }
        Ok(())
    }

    /// One tracking step on a new observation.
    pub fn step(&mut self, obs: &Observation) -> Result<TrackerStep> {
        if !self.is_acquired() {
            return Err(Error::InvalidConfig("tracker stepped before acquisition".into()));
        }
        let prior = predict(&self.belief, &self.process)?;
        let predicted = prior.mean.rows(0, 2 * self.num_paths()).into_owned();
        let gain_fallback = match estimate_gains(&predicted, obs, &self.cb, &self.arrays) {
            Ok(g) => {
                self.gains = g;
                false
            }
            Err(Error::RankDeficient(_)) => true,
            Err(e) => return Err(e),
        };
        let model = ChannelMeasurement {
            cb: &self.cb,
            gains: &self.gains,
            noise_var: self.process.noise_var,
        };
        let out = update(&prior, &obs.stacked_real(), &model)?;
        self.belief = out.posterior;
        let decision = self.detector.push(out.nis);
        Ok(TrackerStep {
            decision,
            gain_fallback,
        })
    }
}
