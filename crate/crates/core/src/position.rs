//! Linear Kalman filter on `s = [x, y, ẋ, ẏ, ẍ, ÿ, γ]`.
//!
//! Constant-acceleration kinematics per axis, random-walk heading, and a full
//! state measurement (`H = I₇`) assembled from the coarse pose and IMU.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::belief::GaussianBelief;
use crate::error::{Error, Result};
use crate::scene::{wrap_to_pi, SceneFrame};
use crate::triangulate::PoseEstimate;

pub const STATE_DIM: usize = 7;
pub const GAMMA: usize = 6;

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Vector7 = SVector<f64, 7>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositionKFConfig {
    /// Step size; run configs take it from the trajectory.
    #[serde(skip)]
    pub dt: f64,
    /// `σ_e²`, applied to every state component.
    pub process_var: f64,
    /// Per-component `σ_r²` in state order.
    pub meas_var: [f64; 7],
}

impl Default for PositionKFConfig {
    fn default() -> Self {
        let deg = 1f64.to_radians();
        Self {
            dt: 0.1,
            process_var: 0.01,
            meas_var: [1.0, 1.0, 0.04, 0.04, 0.04, 0.04, deg * deg],
        }
    }
}

impl PositionKFConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("poskf.dt must be > 0, got {}", self.dt)));
        }
        if !(self.process_var >= 0.0) || !self.process_var.is_finite() {
            return Err(Error::InvalidConfig("poskf.process_var must be finite and >= 0".into()));
        }
        if self.meas_var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("poskf.meas_var entries must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn with_scalar_meas_var(mut self, var: f64) -> Self {
        self.meas_var = [var; 7];
        self
    }
}

pub fn transition_matrix(dt: f64) -> Matrix7 {
    let mut f = Matrix7::identity();
    for axis in 0..2 {
        let (p, v, a) = (axis, axis + 2, axis + 4);
        f[(p, v)] = dt;
        f[(p, a)] = 0.5 * dt * dt;
        f[(v, a)] = dt;
    }
    f
}

fn check_dim(belief: &GaussianBelief) -> Result<()> {
    if belief.dim() != STATE_DIM {
        return Err(Error::DimensionMismatch {
            context: "position belief",
            expected: STATE_DIM,
            found: belief.dim(),
        });
    }
    Ok(())
}

pub fn kf_predict(belief: &GaussianBelief, cfg: &PositionKFConfig) -> Result<GaussianBelief> {
    check_dim(belief)?;
    let f = DMatrix::from_column_slice(7, 7, transition_matrix(cfg.dt).as_slice());
    let mut mean = &f * &belief.mean;
    mean[GAMMA] = wrap_to_pi(mean[GAMMA]);
    let cov = &f * &belief.cov * f.transpose() + DMatrix::identity(7, 7) * cfg.process_var;
    Ok(GaussianBelief { mean, cov: (&cov + cov.transpose()) * 0.5 })
}

#[derive(Debug, Clone)]
pub struct KfUpdate {
    pub posterior: GaussianBelief,
    /// Innovation with its heading component wrapped.
    pub innovation: DVector<f64>,
    pub nis: f64,
}

/// Update with `z = s + r`, `r ~ N(0, diag(σ_r²))`.
pub fn kf_update(belief: &GaussianBelief, z: &DVector<f64>, cfg: &PositionKFConfig) -> Result<KfUpdate> {
    check_dim(belief)?;
    if z.len() != STATE_DIM {
        return Err(Error::DimensionMismatch {
            context: "position measurement",
            expected: STATE_DIM,
            found: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("position measurement has non-finite entries".into()));
    }
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.meas_var));
    let mut nu = z - &belief.mean;
    nu[GAMMA] = wrap_to_pi(nu[GAMMA]);
    let s = &belief.cov + &r;
    let s = (&s + s.transpose()) * 0.5;
    let chol = s
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("position innovation covariance"))?;
    let nis = nu.dot(&chol.solve(&nu));
    // K = P S⁻¹ (S and P symmetric)
    let k = chol.solve(&belief.cov).transpose();
    let mut mean = &belief.mean + &k * &nu;
    mean[GAMMA] = wrap_to_pi(mean[GAMMA]);
    let ikh = DMatrix::identity(7, 7) - &k;
    let cov = &ikh * &belief.cov * ikh.transpose() + &k * &r * k.transpose();
    Ok(KfUpdate {
        posterior: GaussianBelief { mean, cov: (&cov + cov.transpose()) * 0.5 },
        innovation: nu,
        nis,
    })
}

/// State error with the heading component wrapped.
pub fn state_error(estimate: &DVector<f64>, truth: &DVector<f64>) -> DVector<f64> {
    let mut e = truth - estimate;
    e[GAMMA] = wrap_to_pi(e[GAMMA]);
    e
}

pub fn true_state(frame: &SceneFrame) -> DVector<f64> {
    DVector::from_vec(vec![
        frame.ue_pos.x,
        frame.ue_pos.y,
        frame.ue_vel.x,
        frame.ue_vel.y,
        frame.ue_acc.x,
        frame.ue_acc.y,
        frame.ue_orientation,
    ])
}

/// Global-frame velocity and acceleration as delivered by the IMU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuConfig {
    pub vel_std: f64,
    pub acc_std: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self { vel_std: 0.2, acc_std: 0.2 }
    }
}

impl ImuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.vel_std >= 0.0 && self.acc_std >= 0.0) || !(self.vel_std + self.acc_std).is_finite() {
            return Err(Error::InvalidConfig("imu standard deviations must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn synthesize_imu<R: Rng + ?Sized>(frame: &SceneFrame, cfg: &ImuConfig, rng: &mut R) -> ImuSample {
    let mut draw = |std: f64| {
        if std > 0.0 {
            Normal::new(0.0, std).expect("std is finite and positive").sample(rng)
        } else {
            0.0
        }
    };
    ImuSample {
        vx: frame.ue_vel.x + draw(cfg.vel_std),
        vy: frame.ue_vel.y + draw(cfg.vel_std),
        ax: frame.ue_acc.x + draw(cfg.acc_std),
        ay: frame.ue_acc.y + draw(cfg.acc_std),
    }
}

/// `z = [x, y, vx, vy, ax, ay, γ]`, or `None` for a degenerate pose.
pub fn assemble_measurement(pose: &PoseEstimate, imu: &ImuSample) -> Option<DVector<f64>> {
    if !pose.is_valid() {
        return None;
    }
    Some(DVector::from_vec(vec![
        pose.x, pose.y, imu.vx, imu.vy, imu.ax, imu.ay, pose.gamma,
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::triangulate::PoseStatus;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn belief(mean: &[f64], var: f64) -> GaussianBelief {
        GaussianBelief::isotropic(DVector::from_column_slice(mean), var)
    }

    fn cfg(q: f64, r: f64, dt: f64) -> PositionKFConfig {
        PositionKFConfig { dt, process_var: q, meas_var: [r; 7] }
    }

    #[test]
    fn transition_examples() {
        let s = Vector7::from_column_slice(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let p = transition_matrix(1.0) * s;
        assert_eq!(p[0], 1.0);
        assert_eq!(p[2], 1.0);
        let s = Vector7::from_column_slice(&[0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let p = transition_matrix(1.0) * s;
        assert_eq!(p[0], 1.0);
        assert_eq!(p[2], 2.0);
        for dt in [0.01, 0.1, 0.7, 3.0] {
            let diff = transition_matrix(dt) * transition_matrix(dt) - transition_matrix(2.0 * dt);
            assert!(diff.amax() < 1e-12);
        }
    }

    #[test]
    fn predict_examples() {
        let b = belief(&[3.0, -4.0, 0.0, 0.0, 0.0, 0.0, 0.5], 2.0);
        let p = kf_predict(&b, &cfg(0.0, 1.0, 0.1)).unwrap();
        assert_eq!(p.mean, b.mean);

        let b = belief(&[0.0; 7], 0.0);
        let p = kf_predict(&b, &cfg(0.3, 1.0, 0.1)).unwrap();
        assert_eq!(p.cov, DMatrix::identity(7, 7) * 0.3);

        let mut b = belief(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 0.0);
        for _ in 0..10 {
            b = kf_predict(&b, &cfg(0.0, 1.0, 0.1)).unwrap();
        }
        assert_abs_diff_eq!(b.mean[0], 1.0, epsilon = 1e-12);

        let b = belief(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, PI - 0.01], 1.0);
        let mut c = cfg(0.0, 1.0, 0.1);
        c.meas_var = [1.0; 7];
        assert!(kf_predict(&b, &c).unwrap().mean[GAMMA] <= PI);
        assert!(kf_predict(&belief(&[0.0; 3], 1.0), &c).is_err());
    }

    #[test]
    fn update_limits() {
        let prior = belief(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.1], 4.0);
        let z = DVector::from_column_slice(&[0.5, 2.5, 2.0, 4.5, 5.5, 5.0, 0.3]);
        let exact = kf_update(&prior, &z, &cfg(0.0, 1e-14, 0.1)).unwrap();
        assert!((&exact.posterior.mean - &z).amax() < 1e-12);
        let vague = kf_update(&prior, &z, &cfg(0.0, 1e14, 0.1)).unwrap();
        assert!((&vague.posterior.mean - &prior.mean).amax() < 1e-12);
        assert!((&vague.posterior.cov - &prior.cov).amax() < 1e-10);
    }

    #[test]
    fn scalar_slice_matches_closed_form() {
        // Static state, random walk q, measurement noise r: gain sequence is p/(p+r).
        let (q, r) = (0.2, 1.5);
        let c = PositionKFConfig { dt: 1e-12, process_var: q, meas_var: [r; 7] };
        let mut b = belief(&[0.0; 7], 3.0);
        let mut p = 3.0;
        let mut m = 0.0;
        for k in 0..20 {
            let zk = 0.1 * k as f64;
            b = kf_predict(&b, &c).unwrap();
            p += q;
            let z = DVector::from_element(7, zk);
            b = kf_update(&b, &z, &c).unwrap().posterior;
            let gain = p / (p + r);
            m += gain * (zk - m);
            p *= 1.0 - gain;
            assert_abs_diff_eq!(b.mean[0], m, epsilon = 1e-9);
            assert_abs_diff_eq!(b.cov[(0, 0)], p, epsilon = 1e-9);
        }
    }

    #[test]
    fn heading_innovation_goes_short_way() {
        let prior = belief(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, PI - 0.01], 1.0);
        let mut z = prior.mean.clone();
        z[GAMMA] = -PI + 0.01;
        let up = kf_update(&prior, &z, &cfg(0.0, 1.0, 0.1)).unwrap();
        assert_abs_diff_eq!(up.innovation[GAMMA], 0.02, epsilon = 1e-12);
        let moved = wrap_to_pi(up.posterior.mean[GAMMA] - (PI - 0.01));
        assert!(moved > 0.0 && moved < 0.02);
    }

    #[test]
    fn tighter_measurements_never_grow_trace() {
        let prior = GaussianBelief::new(
            DVector::from_element(7, 0.3),
            DMatrix::from_fn(7, 7, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 }),
        )
        .unwrap();
        let z = DVector::from_element(7, 1.0);
        let mut r = 8.0;
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let tr = kf_update(&prior, &z, &cfg(0.0, r, 0.1)).unwrap().posterior.cov.trace();
            assert!(tr <= last + 1e-12);
            last = tr;
            r *= 0.5;
        }
    }

    #[test]
    fn joseph_form_matches_standard() {
        let prior = belief(&[0.0; 7], 2.0);
        let z = DVector::from_element(7, 1.0);
        let up = kf_update(&prior, &z, &cfg(0.0, 0.5, 0.1)).unwrap();
        // (I − K) P with K = 2/2.5
        assert!((up.posterior.cov.clone() - DMatrix::identity(7, 7) * 0.4).amax() < 1e-12);
    }

    #[test]
    fn assemble_examples() {
        let pose = PoseEstimate { x: 1.0, y: 2.0, gamma: 0.3, cost: 0.0, status: PoseStatus::Converged };
        let imu = ImuSample { vx: 3.0, vy: 4.0, ax: 5.0, ay: 6.0 };
        let z = assemble_measurement(&pose, &imu).unwrap();
        assert_eq!(z.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.3]);
        let bad = PoseEstimate { status: PoseStatus::Degenerate, ..pose };
        assert!(assemble_measurement(&bad, &imu).is_none());
    }

    #[test]
    fn imu_noise_tail_count() {
        use crate::scene::Point2;
        use nalgebra::Vector2;
        let frame = SceneFrame {
            t: 0,
            ue_pos: Point2::new(1.0, 1.0),
            ue_orientation: 0.0,
            ue_vel: Vector2::new(15.0, 0.0),
            ue_acc: Vector2::new(0.0, 1.5),
            scatterers: vec![],
            true_aod: vec![],
            true_aoa: vec![],
            path_lengths: vec![],
            epoch_id: 0,
        };
        let cfg = ImuConfig { vel_std: 0.1, acc_std: 0.1 };
        let mut rng = stream(4, Stream::Imu);
        let mut outliers = 0;
        for _ in 0..10_000 {
            let s = synthesize_imu(&frame, &cfg, &mut rng);
            for (v, t) in [(s.vx, 15.0), (s.vy, 0.0), (s.ax, 0.0), (s.ay, 1.5)] {
                if (v - t).abs() > 0.5 {
                    outliers += 1;
                }
            }
        }
        // P(|N| > 5σ) ≈ 5.7e-7 per draw, 4e4 draws: expect 0.02; allow a handful.
        assert!(outliers <= 6);
    }

    #[test]
    fn matched_model_nees_in_band() {
        let series = crate::calibration::position_kf_nees(&PositionKFConfig::default(), 50, 100, 1000).unwrap();
        let (lo, hi) = series.band();
        let inside = series.fraction_in_band();
        // per-step 95% band: expect ~95% of steps inside
        assert!(inside >= 0.88, "{inside} of steps in band [{lo}, {hi}]");
    }
}
