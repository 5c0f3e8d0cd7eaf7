//! TOML run configuration and the effective-config echo.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::chi2;
use crate::error::{Error, Result};
use crate::pipeline::RunConfig;
use crate::tracker::ChangeTestConfig;

/// The configuration shipped with the crate, equal to [`RunConfig::default`].
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    Ok(toml::to_string(cfg)?)
}

/// Quantities implied by a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    /// `σ_w² = N_r N_t / SNR`.
    pub noise_var: f64,
    pub wavelength_m: f64,
    /// Degrees of freedom of one change test, `2 N_r N_t`.
    pub change_test_dof: usize,
    /// Degrees of freedom left after fitting the first epoch's `L` gains; the
    /// tracker's detector thresholds against this.
    pub change_test_dof_fitted: usize,
    pub change_test_threshold: f64,
    pub n_steps: usize,
}

impl Derived {
    pub fn of(cfg: &RunConfig) -> Result<Self> {
        let dof = ChangeTestConfig::dof(&cfg.arrays);
        let fitted = ChangeTestConfig::fitted_dof(&cfg.arrays, cfg.scatterers.num_paths);
        Ok(Self {
            noise_var: cfg.noise_var()?,
            wavelength_m: cfg.arrays.wavelength(),
            change_test_dof: dof,
            change_test_dof_fitted: fitted,
            change_test_threshold: chi2::quantile(
                1.0 - cfg.change.p_fa,
                (fitted * cfg.change.window) as f64,
            ),
            n_steps: cfg.steps(),
        })
    }
}

/// The configuration followed by a `[derived]` table.
pub fn effective_config(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Wrapper {
        derived: Derived,
    }
    let derived = toml::to_string(&Wrapper { derived: Derived::of(cfg)? })?;
    Ok(format!("{}\n{derived}", to_toml(cfg)?))
}
