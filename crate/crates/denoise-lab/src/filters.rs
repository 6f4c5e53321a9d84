//! Denoiser construction and exact risk evaluation.
//!
//! A denoiser is a `d x d` matrix `W` applied to a noisy column vector as
//! `W^T (x + z)`; equivalently, stacking samples as rows, training data is
//! denoised as `X_hat W`. All constructors here solve linear systems rather
//! than forming explicit inverses.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdSolver};

/// Which construction produced a [`Denoiser`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    Wiener,
    EmpiricalWiener,
    LeastSquares,
    Identity,
    Zero,
    Custom,
}

impl DenoiserKind {
    pub fn name(&self) -> &'static str {
        match self {
            DenoiserKind::Wiener => "wiener",
            DenoiserKind::EmpiricalWiener => "empirical_wiener",
            DenoiserKind::LeastSquares => "least_squares",
            DenoiserKind::Identity => "identity",
            DenoiserKind::Zero => "zero",
            DenoiserKind::Custom => "custom",
        }
    }
}

/// Provenance attached to a trained denoiser.
#[derive(Debug, Clone, Default)]
pub struct DenoiserMeta {
    /// `(n, d)` of the training set, when trained from data.
    pub train_shape: Option<(usize, usize)>,
    /// Training-noise covariance used to build the noisy inputs, when known.
    pub sigma1: Option<DMatrix<f64>>,
}

/// A linear denoiser: the matrix `W`, its provenance tag, and optional
/// training metadata. Every entry of `W` is finite.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub matrix: DMatrix<f64>,
    pub kind: DenoiserKind,
    pub metadata: Option<DenoiserMeta>,
}

impl Denoiser {
    fn checked(matrix: DMatrix<f64>, kind: DenoiserKind) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension(format!(
                "denoiser matrix is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "denoiser matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self {
            matrix,
            kind,
            metadata: None,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            kind: DenoiserKind::Identity,
            metadata: None,
        }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(d, d),
            kind: DenoiserKind::Zero,
            metadata: None,
        }
    }

    pub fn custom(matrix: DMatrix<f64>) -> Result<Self> {
        Self::checked(matrix, DenoiserKind::Custom)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Writes the matrix as CSV, row-major, full round-trip precision.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for i in 0..self.matrix.nrows() {
            let row: Vec<String> = (0..self.matrix.ncols())
                .map(|j| format!("{}", self.matrix[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// The population-optimal linear denoiser `W = (Sigma + Sigma_z)^{-1} Sigma`,
/// computed by a linear solve.
pub fn wiener(sigma: &DMatrix<f64>, sigma_z: &DMatrix<f64>) -> Result<Denoiser> {
    same_square("wiener", sigma, sigma_z)?;
    let solver = SpdSolver::new(&(sigma + sigma_z), "wiener filter denominator")?;
    let mut d = Denoiser::checked(solver.solve(sigma), DenoiserKind::Wiener)?;
    d.metadata = None;
    Ok(d)
}

/// Plug-in variant of [`wiener`] built from a sample covariance.
pub fn empirical_wiener(sigma_hat: &DMatrix<f64>, sigma_z: &DMatrix<f64>) -> Result<Denoiser> {
    same_square("empirical_wiener", sigma_hat, sigma_z)?;
    let solver = SpdSolver::new(&(sigma_hat + sigma_z), "empirical Wiener denominator")?;
    let mut d = Denoiser::checked(solver.solve(sigma_hat), DenoiserKind::EmpiricalWiener)?;
    d.metadata = None;
    Ok(d)
}

/// Trains `W = argmin || X_hat W - X ||_F^2` by solving the normal equations
/// `(X_hat^T X_hat) W = X_hat^T X` from one symmetric factorization; all `d`
/// columns share it.
pub fn train_least_squares(x_hat: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<Denoiser> {
    let (n, d) = x_hat.shape();
    if x.shape() != (n, d) {
        return Err(Error::Dimension(format!(
            "noisy data is {}x{} but clean data is {}x{}",
            n,
            d,
            x.nrows(),
            x.ncols()
        )));
    }
    if n <= d {
        return Err(Error::Underdetermined { n, d });
    }
    let mut gram = x_hat.transpose() * x_hat;
    linalg::mirror_lower(&mut gram);
    let solver = SpdSolver::new(&gram, "least-squares normal equations")?;
    let rhs = x_hat.transpose() * x;
    let mut trained = Denoiser::checked(solver.solve(&rhs), DenoiserKind::LeastSquares)?;
    trained.metadata = Some(DenoiserMeta {
        train_shape: Some((n, d)),
        sigma1: None,
    });
    Ok(trained)
}

/// Exact population risk of a denoiser:
/// `Tr((W^T - I) Sigma (W^T - I)^T) + Tr(W^T Sigma_z W)`.
///
/// No sampling is involved; this is the trace form of the squared-error
/// objective under `x ~ (0, Sigma)` and `z ~ (0, Sigma_z)`.
pub fn generalization_error(
    w: &Denoiser,
    sigma: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
) -> Result<f64> {
    generalization_error_matrix(&w.matrix, sigma, sigma_z)
}

pub(crate) fn generalization_error_matrix(
    w: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
) -> Result<f64> {
    let d = w.nrows();
    if w.ncols() != d || sigma.shape() != (d, d) || sigma_z.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "shape mismatch: W {}x{}, Sigma {}x{}, Sigma_z {}x{}",
            w.nrows(),
            w.ncols(),
            sigma.nrows(),
            sigma.ncols(),
            sigma_z.nrows(),
            sigma_z.ncols()
        )));
    }
    let a = w.transpose() - DMatrix::identity(d, d);
    let signal = (&a * sigma).dot(&a);
    let noise = (sigma_z * w).dot(w);
    Ok(signal + noise)
}

fn same_square(context: &str, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let d = a.nrows();
    if a.ncols() != d || b.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "{context}: expected two {d}x{d} matrices, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}
