use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Mean and covariance of a Gaussian state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "belief covariance",
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        Ok(Self { mean, cov })
    }

    /// Isotropic belief `N(mean, var·I)`.
    pub fn isotropic(mean: DVector<f64>, var: f64) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: DMatrix::identity(n, n) * var,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.cov
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Symmetrizes the covariance and clamps negative eigenvalues to zero.
    pub fn condition(&mut self) {
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        if self.dim() == 0 {
            return;
        }
        let eig = self.cov.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| v < 0.0) {
            let clamped = eig.eigenvalues.map(|v| v.max(0.0));
            let q = &eig.eigenvectors;
            let c = q * DMatrix::from_diagonal(&clamped) * q.transpose();
            self.cov = (&c + c.transpose()) * 0.5;
        }
    }

    /// Normalized estimation error squared `eᵀ P⁻¹ e` for a precomputed error vector.
    pub fn nees_of_error(&self, err: &DVector<f64>) -> Result<f64> {
        let chol = self
            .cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("belief covariance"))?;
        Ok(err.dot(&chol.solve(err)))
    }

    pub fn nees(&self, truth: &DVector<f64>) -> Result<f64> {
        self.nees_of_error(&(truth - &self.mean))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_symmetrizes_and_clamps() {
        let mut b = GaussianBelief::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-9, 1.0]),
        )
        .unwrap();
        b.condition();
        assert_eq!(b.cov, b.cov.transpose());
        assert!(b.min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn nees_scalar() {
        let b = GaussianBelief::isotropic(DVector::from_element(1, 1.0), 4.0);
        let v = b.nees(&DVector::from_element(1, 3.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_dims() {
        assert!(GaussianBelief::new(DVector::zeros(3), DMatrix::zeros(2, 2)).is_err());
    }
}
