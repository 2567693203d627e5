//! Affine whitening `z = L⁻¹(x − μ̂)` with `Σ̂ = L Lᵀ`, `L` lower-triangular.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SnpError};

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    inverse_factor: DMatrix<f64>,
    log_abs_det_inverse: f64,
}

impl WhiteningTransform {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            factor: DMatrix::identity(d, d),
            inverse_factor: DMatrix::identity(d, d),
            log_abs_det_inverse: 0.0,
        }
    }

    /// Cholesky-factors `covariance`; fails when it is not symmetric positive definite.
    pub fn from_moments(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(SnpError::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        let chol = covariance.clone().cholesky().ok_or_else(|| {
            SnpError::DegenerateEnsemble("sample covariance is not positive definite".into())
        })?;
        Self::from_factor(mean, chol.l())
    }

    /// Builds the transform from an explicit lower-triangular factor.
    pub fn from_factor(mean: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if factor.nrows() != d || factor.ncols() != d {
            return Err(SnpError::DimensionMismatch {
                expected: d,
                got: factor.nrows(),
            });
        }
        for i in 0..d {
            let diag = factor[(i, i)];
            if !(diag > 0.0 && diag.is_finite()) {
                return Err(SnpError::DegenerateEnsemble(format!(
                    "whitening factor has non-positive diagonal entry {diag} at {i}"
                )));
            }
            for j in (i + 1)..d {
                if factor[(i, j)] != 0.0 {
                    return Err(SnpError::InvalidConfig(
                        "whitening factor must be lower-triangular".into(),
                    ));
                }
            }
        }
        let inverse_factor = invert_lower(&factor);
        let log_abs_det_inverse = -(0..d).map(|i| factor[(i, i)].ln()).sum::<f64>();
        Ok(Self {
            mean,
            factor,
            inverse_factor,
            log_abs_det_inverse,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn inverse_factor(&self) -> &DMatrix<f64> {
        &self.inverse_factor
    }

    pub fn log_abs_det_inverse(&self) -> f64 {
        self.log_abs_det_inverse
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dimension();
        (0..d).all(|i| (0..i).all(|j| self.factor[(i, j)] == 0.0))
    }

    /// `L⁻¹(x − μ̂)` by forward substitution.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dimension();
        debug_assert_eq!(x.len(), d);
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut acc = x[i] - self.mean[i];
            for j in 0..i {
                acc -= self.factor[(i, j)] * z[j];
            }
            z[i] = acc / self.factor[(i, i)];
        }
        z
    }

    pub fn unwhiten(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dimension();
        debug_assert_eq!(z.len(), d);
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|j| self.factor[(i, j)] * z[j]).sum::<f64>())
            .collect()
    }

    /// Row-major copy of `L`, the on-disk layout.
    pub fn factor_row_major(&self) -> Vec<f64> {
        let d = self.dimension();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| self.factor[(i, j)])
            .collect()
    }
}

fn invert_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    let d = l.nrows();
    let mut inv = DMatrix::zeros(d, d);
    for col in 0..d {
        for i in col..d {
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                acc -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = acc / l[(i, i)];
        }
    }
    inv
}
