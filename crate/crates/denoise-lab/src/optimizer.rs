//! Projected gradient descent over the training-noise covariance.
//!
//! The search space is the eigenvalue vector of `Sigma_1` in a frozen
//! orthonormal basis: the eigenbasis of `Sigma` (oracle mode) or of the
//! sample covariance `Sigma_hat` (data-driven mode). Freezing the basis
//! keeps `Sigma_1` PSD under a plain clamp-to-nonnegative projection. In
//! that basis the objective collapses to sums over coordinates, so one
//! evaluation costs O(d) after a single O(d^3) decomposition.
//!
//! Oracle mode minimizes the single-batch risk prediction. Data-driven mode
//! minimizes the same expression with the sample covariance in place of the
//! true one; a bias-only variant that drops the final cross term exists for
//! comparison via [`EmpiricalObjective::BiasOnlySurrogate`], but it is
//! degenerate (see the enum docs) and not the default.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{empirical_covariance, SpectralDecomposition};
use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalue cap, relative to the largest signal eigenvalue, applied where
/// the optimal training noise is unbounded.
const EIGENVALUE_CAP_FACTOR: f64 = 1e6;
/// Condition limit on `Sigma + Sigma_1` along the search path; steps beyond
/// it are rejected by the line search.
const OBJECTIVE_CONDITION_LIMIT: f64 = 1e14;
const ARMIJO_SLOPE: f64 = 1e-4;
const MIN_STEP: f64 = 1e-18;

/// Projected-gradient-descent knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdConfig {
    /// Step size each line search starts from.
    pub initial_step: f64,
    /// Multiplicative backtracking factor.
    pub backtracking_factor: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than
    /// `relative_tolerance * (1 + |f|)`.
    pub relative_tolerance: f64,
    /// Central-difference step for coordinate `i` is
    /// `fd_scale * (1 + lambda_i)`.
    pub fd_scale: f64,
    /// Record the accepted-objective sequence in the result.
    pub record_trajectory: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtracking_factor: 0.5,
            max_iterations: 2000,
            relative_tolerance: 1e-10,
            fd_scale: 1e-6,
            record_trajectory: true,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_step", self.initial_step),
            ("backtracking_factor", self.backtracking_factor),
            ("relative_tolerance", self.relative_tolerance),
            ("fd_scale", self.fd_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.relative_tolerance >= 1.0 {
            return Err(Error::InvalidParameter(
                "relative_tolerance must be below 1".into(),
            ));
        }
        if self.backtracking_factor >= 1.0 {
            return Err(Error::InvalidParameter(
                "backtracking_factor must be below 1".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `Sigma_1 = Q diag(lambda) Q^T` with a frozen orthonormal basis and
/// nonnegative eigenvalues.
#[derive(Debug, Clone)]
pub struct Sigma1Parametrization {
    pub basis: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl Sigma1Parametrization {
    pub fn new(basis: DMatrix<f64>, eigenvalues: DVector<f64>) -> Result<Self> {
        let d = basis.nrows();
        if basis.ncols() != d || eigenvalues.len() != d {
            return Err(Error::Dimension(format!(
                "basis is {}x{} with {} eigenvalues",
                basis.nrows(),
                basis.ncols(),
                eigenvalues.len()
            )));
        }
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::identity(d, d)).norm();
        if defect > 1e-10 * (d as f64).sqrt() {
            return Err(Error::InvalidParameter(format!(
                "basis is not orthonormal (||Q^T Q - I||_F = {defect:.3e})"
            )));
        }
        if eigenvalues.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(
                "eigenvalues must be nonnegative".into(),
            ));
        }
        Ok(Self { basis, eigenvalues })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        linalg::from_eigen_pairs(&self.basis, &self.eigenvalues)
    }
}

/// Outcome of a PGD run. The trajectory, when recorded, is the accepted
/// objective sequence and is non-increasing.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizationResult {
    #[serde(skip)]
    pub sigma1: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// At least 1% of the eigenvalues stopped at the cap, indicating the
    /// optimum runs off to infinity.
    pub unbounded: bool,
    pub trajectory: Option<Vec<f64>>,
}

/// Which data-driven objective to minimize.
///
/// The bias-only surrogate (the risk expression without its final cross
/// term) is globally minimized by zero training noise: its second factor is
/// `Tr[Sigma_hat (Sigma_hat + Sigma_1)^{-1} Sigma_1] >= 0` with equality at
/// `Sigma_1 = 0`, so descent from any start slides to the degenerate
/// interpolating denoiser. The full plug-in keeps the cross term and is the
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmpiricalObjective {
    /// The full risk expression with the sample covariance plugged in.
    #[default]
    FullPlugIn,
    /// Bias factor only, no cross term.
    BiasOnlySurrogate,
}

/// The risk objective reduced to the frozen eigenbasis.
///
/// With `Sigma = Q diag(s) Q^T` and `Sigma_1 = Q diag(lambda) Q^T`, every
/// trace in the single-batch prediction depends on `Sigma_z` only through
/// `z = diag(Q^T Sigma_z Q)`, so the objective is exactly
///
/// `(1 + sum_i (s_i + z_i)/(s_i + lambda_i) / (n - d))
///    * sum_i s_i lambda_i / (s_i + lambda_i)
///  [+ sum_i (z_i - lambda_i) s_i^2 / (s_i + lambda_i)^2]`
///
/// with the bracketed cross term present in the full objective and absent in
/// the surrogate.
struct EigObjective {
    s: Vec<f64>,
    z: Vec<f64>,
    inv_gap: f64,
    cross_term: bool,
}

impl EigObjective {
    fn eval(&self, lambda: &[f64]) -> f64 {
        let mut c_min = f64::INFINITY;
        let mut c_max = 0.0f64;
        let mut mix = 0.0;
        let mut residual_risk = 0.0;
        let mut cross = 0.0;
        for i in 0..self.s.len() {
            let c = self.s[i] + lambda[i];
            if c <= 0.0 {
                return f64::INFINITY;
            }
            c_min = c_min.min(c);
            c_max = c_max.max(c);
            mix += (self.s[i] + self.z[i]) / c;
            residual_risk += self.s[i] * lambda[i] / c;
            if self.cross_term {
                cross += (self.z[i] - lambda[i]) * self.s[i] * self.s[i] / (c * c);
            }
        }
        if c_max / c_min > OBJECTIVE_CONDITION_LIMIT {
            return f64::INFINITY;
        }
        (1.0 + self.inv_gap * mix) * residual_risk + cross
    }

    /// Central differences, falling back to a forward difference when the
    /// backward point leaves the domain.
    fn gradient(&self, lambda: &[f64], fd_scale: f64, out: &mut [f64]) {
        let f0 = self.eval(lambda);
        let mut probe = lambda.to_vec();
        for i in 0..lambda.len() {
            let h = fd_scale * (1.0 + lambda[i]);
            probe[i] = lambda[i] + h;
            let plus = self.eval(&probe);
            probe[i] = lambda[i] - h;
            let minus = self.eval(&probe);
            probe[i] = lambda[i];
            out[i] = if minus.is_finite() && plus.is_finite() {
                (plus - minus) / (2.0 * h)
            } else if plus.is_finite() {
                (plus - f0) / h
            } else {
                f64::NAN
            };
        }
    }
}

fn project(lambda: &mut [f64], cap: f64) {
    for v in lambda.iter_mut() {
        *v = v.clamp(0.0, cap);
    }
}

fn run_pgd(
    objective: &EigObjective,
    init: Vec<f64>,
    cap: f64,
    config: &PgdConfig,
) -> Result<(Vec<f64>, f64, usize, bool, Vec<f64>)> {
    let d = init.len();
    let mut lambda = init;
    project(&mut lambda, cap);
    let mut f = objective.eval(&lambda);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut trajectory = vec![f];
    let mut gradient = vec![0.0; d];
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..config.max_iterations {
        objective.gradient(&lambda, config.fd_scale, &mut gradient);
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteObjective { iteration: iter });
        }
        if gradient.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }
        let mut step = config.initial_step;
        let mut accepted = false;
        while step >= MIN_STEP {
            let mut candidate: Vec<f64> = lambda
                .iter()
                .zip(&gradient)
                .map(|(&l, &g)| l - step * g)
                .collect();
            project(&mut candidate, cap);
            let f_new = objective.eval(&candidate);
            if f_new.is_finite() {
                let predicted: f64 = gradient
                    .iter()
                    .zip(lambda.iter().zip(&candidate))
                    .map(|(&g, (&l, &c))| g * (l - c))
                    .sum();
                if f_new <= f - ARMIJO_SLOPE * predicted.max(0.0) && f_new < f {
                    let improvement = f - f_new;
                    lambda = candidate;
                    f = f_new;
                    trajectory.push(f);
                    iterations = iter + 1;
                    accepted = true;
                    if improvement <= config.relative_tolerance * (1.0 + f.abs()) {
                        converged = true;
                    }
                    break;
                }
            }
            step *= config.backtracking_factor;
        }
        if !accepted {
            // No descent direction within the step budget: stationary.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Ok((lambda, f, iterations, converged, trajectory))
}

fn finish(
    basis: &DMatrix<f64>,
    lambda: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    cap: f64,
    trajectory: Vec<f64>,
    config: &PgdConfig,
) -> OptimizationResult {
    let d = lambda.len();
    let at_cap = lambda.iter().filter(|&&v| v >= cap * (1.0 - 1e-9)).count();
    let unbounded = cap.is_finite() && at_cap as f64 >= 0.01 * d as f64 && at_cap > 0;
    let eigenvalues = DVector::from_vec(lambda.clone());
    let sigma1 = linalg::from_eigen_pairs(basis, &eigenvalues);
    OptimizationResult {
        sigma1,
        eigenvalues: lambda,
        objective,
        iterations,
        converged,
        unbounded,
        trajectory: config.record_trajectory.then_some(trajectory),
    }
}

/// Minimizes the single-batch risk prediction over the spectrum of
/// `Sigma_1` in the eigenbasis of `Sigma`, starting from `Sigma_1 = Sigma_z`
/// (its diagonal in that basis when it does not commute).
pub fn optimize_sigma1_oracle(
    sigma: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
    n: usize,
    d: usize,
    config: &PgdConfig,
) -> Result<OptimizationResult> {
    config.validate()?;
    if sigma.shape() != (d, d) || sigma_z.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "expected {d}x{d} covariances, got {}x{} and {}x{}",
            sigma.nrows(),
            sigma.ncols(),
            sigma_z.nrows(),
            sigma_z.ncols()
        )));
    }
    if n <= d {
        return Err(Error::ProportionalRegime { n, d });
    }
    let dec = SpectralDecomposition::compute(sigma)?;
    build_and_run(&dec, sigma_z, n, d, true, config)
}

/// Forms the sample covariance of `x`, then minimizes the plugged-in risk
/// expression over the spectrum of `Sigma_1` in the eigenbasis of the sample
/// covariance.
pub fn optimize_sigma1_empirical(
    x: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
    config: &PgdConfig,
) -> Result<OptimizationResult> {
    optimize_sigma1_empirical_with(x, sigma_z, config, EmpiricalObjective::default())
}

/// As [`optimize_sigma1_empirical`] with an explicit objective choice.
pub fn optimize_sigma1_empirical_with(
    x: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
    config: &PgdConfig,
    objective: EmpiricalObjective,
) -> Result<OptimizationResult> {
    config.validate()?;
    let (n, d) = x.shape();
    if d == 0 || n <= d {
        return Err(Error::Underdetermined { n, d });
    }
    if sigma_z.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "sigma_z is {}x{}, expected {d}x{d}",
            sigma_z.nrows(),
            sigma_z.ncols()
        )));
    }
    let sigma_hat = empirical_covariance(x)?;
    let mut dec = SpectralDecomposition::compute(&sigma_hat)?;
    // The sample covariance can be singular; clamp rounding noise at zero.
    for v in dec.eigenvalues.iter_mut() {
        *v = v.max(0.0);
    }
    build_and_run(
        &dec,
        sigma_z,
        n,
        d,
        objective == EmpiricalObjective::FullPlugIn,
        config,
    )
}

fn build_and_run(
    dec: &SpectralDecomposition,
    sigma_z: &DMatrix<f64>,
    n: usize,
    d: usize,
    cross_term: bool,
    config: &PgdConfig,
) -> Result<OptimizationResult> {
    let s: Vec<f64> = dec.eigenvalues.iter().cloned().collect();
    let rotated = dec.eigenvectors.transpose() * sigma_z * &dec.eigenvectors;
    let z: Vec<f64> = (0..d).map(|i| rotated[(i, i)]).collect();
    let objective = EigObjective {
        s: s.clone(),
        z: z.clone(),
        inv_gap: 1.0 / (n - d) as f64,
        cross_term,
    };
    let s_max = s.iter().cloned().fold(0.0f64, f64::max);
    let cap = if s_max > 0.0 {
        EIGENVALUE_CAP_FACTOR * s_max
    } else {
        f64::INFINITY
    };
    let (lambda, f, iterations, converged, trajectory) = run_pgd(&objective, z, cap, config)?;
    Ok(finish(
        &dec.eigenvectors,
        lambda,
        f,
        iterations,
        converged,
        cap,
        trajectory,
        config,
    ))
}
