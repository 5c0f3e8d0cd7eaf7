//! Vehicular positioning over multipath NLoS mmWave channels with a two-stage
//! Kalman filter.
//!
//! The first stage tracks the angles of departure and arrival of every
//! single-bounce path with an extended Kalman filter on beam-sweep
//! observations, watching the innovation for abrupt channel changes. Each
//! path, together with its length, pins the vehicle to a line; a weighted
//! least-squares fit of those lines gives a coarse pose, which the second
//! stage smooths with a constant-acceleration Kalman filter fed by an IMU.
//!
//! Module map:
//!
//! * [`scene`]: trajectory, scatterer epochs and ground-truth geometry
//! * [`channel`]: steering vectors, channel matrix, codebooks, observations
//! * [`tracker`]: angle EKF, gain fitting, change detection, re-acquisition
//! * [`triangulate`]: coarse pose from path lines
//! * [`position`]: kinematic position filter
//! * [`pipeline`]: per-step orchestration and Monte Carlo campaigns
//! * [`config`] and [`report`]: configuration files, traces and summaries
//! * [`calibration`]: matched-model consistency harnesses

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod calibration;
pub mod channel;
pub mod chi2;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod position;
pub mod report;
pub mod rng;
pub mod scene;
pub mod tracker;
pub mod triangulate;

pub use belief::GaussianBelief;
pub use error::{Error, Result};
