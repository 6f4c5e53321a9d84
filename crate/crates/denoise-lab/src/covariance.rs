//! Covariance construction, validation, decomposition, and estimation.
//!
//! Every covariance used by the filters, the closed-form predictions, the
//! optimizer, and the Monte Carlo engine goes through [`CovarianceModel`], a
//! declarative recipe that materializes to a symmetric positive-semidefinite
//! `d x d` matrix. Materialization is deterministic: the Wishart variant
//! draws from its own seeded generator, so the same `(model, d)` pair always
//! produces the same matrix, entry for entry.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative eigenvalue tolerance for positive-semidefiniteness checks:
/// eigenvalues above `-PSD_TOLERANCE * lambda_max` are accepted, and
/// eigenvalues below `PSD_TOLERANCE * lambda_max` are clamped to zero before
/// taking square roots.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Declarative recipe for a `d x d` covariance matrix.
///
/// `Isotropic` is `variance * I` while `ScalarNormalized` is `(c / d) * I`;
/// both exist because different conventions are natural in different places
/// (unnormalized identity noise versus scalar covariances whose trace stays
/// bounded as `d` grows) and the caller picks explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceModel {
    /// `variance * I_d`. The variance may be zero (noiseless).
    Isotropic { variance: f64 },
    /// `(c / d) * I_d`.
    ScalarNormalized { c: f64 },
    /// Diagonal with entry `i^(-exponent)` at 1-based index `i`. No
    /// normalization is applied, so the first entry is always 1.
    #[serde(rename = "power_law")]
    PowerLawDiagonal { exponent: f64 },
    /// `c^2 * G * G^T` for `G` a `d x d` matrix with i.i.d. standard normal
    /// entries drawn from a generator seeded with `seed`. Deliberately not
    /// normalized by `d`, so the trace grows like `c^2 d^2`.
    ScaledWishart { c: f64, seed: u64 },
    /// Caller-provided symmetric PSD matrix, stored as rows.
    Explicit { rows: Vec<Vec<f64>> },
}

impl CovarianceModel {
    /// Wraps an existing matrix as an explicit model.
    pub fn explicit(matrix: &DMatrix<f64>) -> Self {
        let rows = (0..matrix.nrows())
            .map(|i| matrix.row(i).iter().cloned().collect())
            .collect();
        CovarianceModel::Explicit { rows }
    }

    /// Materializes the model at dimension `d`.
    ///
    /// The output is symmetric entry-for-entry and passes [`validate_psd`].
    pub fn materialize(&self, d: usize) -> Result<DMatrix<f64>> {
        if d == 0 {
            return Err(Error::Dimension("dimension must be at least 1".into()));
        }
        match self {
            CovarianceModel::Isotropic { variance } => {
                check_nonnegative("variance", *variance)?;
                Ok(DMatrix::identity(d, d) * *variance)
            }
            CovarianceModel::ScalarNormalized { c } => {
                check_nonnegative("c", *c)?;
                Ok(DMatrix::identity(d, d) * (*c / d as f64))
            }
            CovarianceModel::PowerLawDiagonal { exponent } => {
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "power-law exponent must be positive, got {exponent}"
                    )));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_iterator(
                    d,
                    (1..=d).map(|i| (i as f64).powf(-exponent)),
                )))
            }
            CovarianceModel::ScaledWishart { c, seed } => {
                check_nonnegative("c", *c)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut g = DMatrix::<f64>::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        g[(i, j)] = StandardNormal.sample(&mut rng);
                    }
                }
                let mut m = &g * g.transpose();
                m *= c * c;
                linalg::mirror_lower(&mut m);
                Ok(m)
            }
            CovarianceModel::Explicit { rows } => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Dimension(format!(
                        "explicit covariance is {}x{:?}, expected {d}x{d}",
                        rows.len(),
                        rows.first().map(|r| r.len()).unwrap_or(0),
                    )));
                }
                let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
                // An explicit matrix must already be symmetric entry-for-entry.
                let asym = linalg::max_asymmetry(&m);
                if asym != 0.0 {
                    return Err(Error::NotSymmetric {
                        max_asymmetry: asym,
                    });
                }
                validate_psd(&m)?;
                Ok(m)
            }
        }
    }

    /// Rebinds the model's scale parameter (the `c` of sweeps over signal or
    /// noise strength). Applies to `Isotropic`, `ScalarNormalized`, and
    /// `ScaledWishart`; other variants have no scalar scale.
    pub fn set_scale(&mut self, value: f64) -> Result<()> {
        check_nonnegative("scale", value)?;
        match self {
            CovarianceModel::Isotropic { variance } => *variance = value,
            CovarianceModel::ScalarNormalized { c } => *c = value,
            CovarianceModel::ScaledWishart { c, .. } => *c = value,
            CovarianceModel::PowerLawDiagonal { .. } | CovarianceModel::Explicit { .. } => {
                return Err(Error::InvalidParameter(
                    "model has no scalar scale parameter to sweep".into(),
                ));
            }
        }
        Ok(())
    }
}

fn check_nonnegative(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and nonnegative, got {value}"
        )));
    }
    Ok(())
}

/// Checks symmetry (up to floating-point noise) and that the smallest
/// eigenvalue is at least `-PSD_TOLERANCE * lambda_max`.
pub fn validate_psd(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
    let asym = linalg::max_asymmetry(m);
    if asym > PSD_TOLERANCE * scale.max(1.0) {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = PSD_TOLERANCE * max;
    if min < -tol {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Symmetric PSD square root via eigendecomposition.
///
/// Eigenvalues below `PSD_TOLERANCE * lambda_max` are clamped to zero before
/// the square root; anything below `-PSD_TOLERANCE * lambda_max` is an error.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate_psd(m)?;
    let (mut values, vectors) = linalg::sorted_symmetric_eigen(m);
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let floor = PSD_TOLERANCE * max;
    for v in values.iter_mut() {
        *v = if *v < floor { 0.0 } else { v.sqrt() };
    }
    Ok(linalg::from_eigen_pairs(&vectors, &values))
}

/// Sample covariance with mean centering and Bessel's `1/(n-1)` correction:
/// `(1/(n-1)) X^T (I - 11^T/n) X`.
pub fn empirical_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "empirical covariance needs at least 2 samples, got {n}"
        )));
    }
    let d = x.ncols();
    let mut centered = x.clone();
    for j in 0..d {
        let mean = x.column(j).sum() / n as f64;
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let mut s = centered.transpose() * &centered;
    s /= (n - 1) as f64;
    linalg::mirror_lower(&mut s);
    Ok(s)
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvector columns, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn compute(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let (eigenvalues, eigenvectors) = linalg::sorted_symmetric_eigen(m);
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    /// `Q diag(lambda) Q^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        linalg::from_eigen_pairs(&self.eigenvectors, &self.eigenvalues)
    }
}
