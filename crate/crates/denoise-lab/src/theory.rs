//! Closed-form asymptotic risk predictions for the least-squares denoiser.
//!
//! In the proportional regime the exact risk of the trained denoiser
//! concentrates on a deterministic value. For a single training batch the
//! prediction is an explicit trace formula ([`thm1_error`]). For several
//! batches with distinct noise covariances the prediction is computed in
//! three stages ([`thm2_error`]): a damped fixed point for the scalars
//! `theta_t`, an `(N+2) x (N+2)` linear system for the aggregated squared
//! scale factors, and a final trace assembly. The single-batch formula is the
//! `N = 1` specialization of the multi-batch pipeline, which makes it a sharp
//! internal consistency oracle; the test suite holds the two to 1e-8
//! relative agreement.
//!
//! Conventions for the multi-batch system, which the implementation keeps
//! consistent throughout (the linear system and the final assembly must use
//! the same normalization or nothing reduces correctly):
//!
//! - `M = sum_t theta_t n_t (Sigma_t + Sigma)` carries all batch structure.
//! - Every equation is written against `M^{-1}`; powers of
//!   `zeta = 1/(2(n-d))` and `theta` appear explicitly in coefficients.
//! - Squared norms of the length-`n_t` Gaussian couplings are replaced by
//!   their almost-sure limits `n_t`.
//! - Row `t` of the middle block carries the batch size `n_t` of its own
//!   row on every off-diagonal entry (this is what makes merging two
//!   identical batches of different sizes exactly equivalent to one pooled
//!   batch).
//! - The final risk is `zeta^2 x_lambda` plus a trace against `M^{-1}` with
//!   an overall `1/theta^2` carried by the per-coordinate error term.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::linalg::{self, SpdSolver};

/// One training batch: a sample count and the covariance of the noise
/// injected into that batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    /// Number of samples in the batch.
    pub n: usize,
    /// Training-noise covariance for the batch.
    pub sigma: CovarianceModel,
}

/// Solution of the multi-batch fixed-point system.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointSolution {
    /// One `theta_t` per batch, each in `(0, 2)`.
    pub theta_t: Vec<f64>,
    /// `theta = 2 - 4 Tr[M^{-1} Sigma]`.
    pub theta: f64,
    /// `zeta = 1 / (2 (n - d))`, exact.
    pub zeta: f64,
    /// Iterations of the damped update that were applied.
    pub iterations: usize,
    /// Max absolute residual of the `theta_t` equations at the returned
    /// point.
    pub residual: f64,
}

/// The assembled `(N+2) x (N+2)` system `A x = b` whose solution stacks the
/// coordinate sums `[sum_j tau^(j)^2, sum_j tau_1^(j)^2, ..,
/// sum_j tau_N^(j)^2, sum_j tau_lambda^(j)^2]`.
#[derive(Debug, Clone)]
pub struct LinearSystemSolution {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub solution: DVector<f64>,
}

/// Scalar-case phase regions. Off region II the optimum is degenerate: in
/// region I the best training noise is unbounded (the denoiser collapses to
/// zero, risk `c`), in region III it is zero (the denoiser stays the
/// identity, risk `c_z`). Region II has a finite interior optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseRegion {
    I,
    II,
    III,
}

impl std::fmt::Display for PhaseRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PhaseRegion::I => write!(f, "I"),
            PhaseRegion::II => write!(f, "II"),
            PhaseRegion::III => write!(f, "III"),
        }
    }
}

/// Optimal training-noise scale in the scalar case: finite (possibly zero)
/// or unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SigmaStar {
    Finite(f64),
    #[serde(serialize_with = "serialize_unbounded")]
    Unbounded,
}

fn serialize_unbounded<S: serde::Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str("unbounded")
}

impl SigmaStar {
    pub fn as_finite(&self) -> Option<f64> {
        match self {
            SigmaStar::Finite(v) => Some(*v),
            SigmaStar::Unbounded => None,
        }
    }
}

/// Output of [`cor2_optimal`].
#[derive(Debug, Clone, Serialize)]
pub struct Cor2Optimal {
    pub region: PhaseRegion,
    pub sigma_star: SigmaStar,
    /// Minimal risk over the training-noise scale, total (not per
    /// coordinate) under the `(c/d) I` convention.
    pub error: f64,
    /// Set when the input sits on a boundary curve; the error is then the
    /// continuous limit.
    pub boundary: bool,
}

/// A closed-form risk prediction with its bias/variance split and the
/// `(n, d)` it was evaluated at.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryPrediction {
    pub error: f64,
    /// Signal-distortion part `lim Tr[(W^T - I)^T Sigma (W^T - I)]`.
    pub bias: f64,
    /// Noise-passthrough part `lim Tr[W^T Sigma_z W]`.
    pub variance: f64,
    pub kappa: f64,
    pub n: usize,
    pub d: usize,
}

fn check_square(name: &str, m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {d}x{d}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Risk of the population Wiener filter: `Tr Sigma - Tr[(Sigma +
/// Sigma_z)^{-1} Sigma^2]`.
pub fn wiener_error(sigma: &DMatrix<f64>, sigma_z: &DMatrix<f64>) -> Result<f64> {
    let d = sigma.nrows();
    check_square("sigma", sigma, d)?;
    check_square("sigma_z", sigma_z, d)?;
    let solver = SpdSolver::new(&(sigma + sigma_z), "wiener error denominator")?;
    Ok(sigma.trace() - solver.solve(&(sigma * sigma)).trace())
}

/// Asymptotic risk of the single-batch least-squares denoiser trained with
/// noise covariance `sigma1` and tested against noise `sigma_z`:
///
/// `(1 + Tr[(Sigma+Sigma_1)^{-1}(Sigma+Sigma_z)] / (n-d))
///    * (Tr Sigma - Tr[(Sigma+Sigma_1)^{-1} Sigma^2])
///  + Tr[(Sigma+Sigma_1)^{-1} (Sigma_z - Sigma_1) (Sigma+Sigma_1)^{-1} Sigma^2]`
pub fn thm1_error(
    sigma: &DMatrix<f64>,
    sigma1: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
    n: usize,
    d: usize,
) -> Result<TheoryPrediction> {
    check_square("sigma", sigma, d)?;
    check_square("sigma1", sigma1, d)?;
    check_square("sigma_z", sigma_z, d)?;
    if n <= d {
        return Err(Error::ProportionalRegime { n, d });
    }
    let gap = (n - d) as f64;
    let solver = SpdSolver::new(&(sigma + sigma1), "thm1 denominator")?;
    let sig2 = sigma * sigma;
    let c_sig2 = solver.solve(&sig2);
    let residual_risk = sigma.trace() - c_sig2.trace();
    let mix = solver.solve(&(sigma + sigma_z)).trace();
    let cross = solver.solve(&((sigma_z - sigma1) * &c_sig2)).trace();
    let error = (1.0 + mix / gap) * residual_risk + cross;
    let bias = thm1_bias(sigma, &solver, n, d);
    Ok(TheoryPrediction {
        error,
        bias,
        variance: error - bias,
        kappa: n as f64 / d as f64,
        n,
        d,
    })
}

/// Limit of the signal-distortion term for the single-batch denoiser:
/// `Tr[(R - I)(R - g I) Sigma]` with `R = (Sigma+Sigma_1)^{-1} Sigma` and
/// `g = (n - d + Tr R) / (n - d)`.
fn thm1_bias(sigma: &DMatrix<f64>, solver: &SpdSolver, n: usize, d: usize) -> f64 {
    let r = solver.solve(sigma);
    let g = (n as f64 - d as f64 + r.trace()) / (n - d) as f64;
    let id = DMatrix::identity(d, d);
    ((&r - &id) * (&r - id * g) * sigma).trace()
}

/// Single-batch risk when the training noise matches the test noise and the
/// two covariances commute: `kappa/(kappa-1)` times the Wiener risk.
pub fn cor1_error(
    sigma: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
    n: usize,
    d: usize,
) -> Result<TheoryPrediction> {
    check_square("sigma", sigma, d)?;
    check_square("sigma_z", sigma_z, d)?;
    if n <= d {
        return Err(Error::ProportionalRegime { n, d });
    }
    let commutator = (sigma * sigma_z - sigma_z * sigma).norm();
    if commutator > 1e-8 * sigma.norm() * sigma_z.norm() {
        return Err(Error::InvalidParameter(format!(
            "covariances do not commute (||[Sigma, Sigma_z]||_F = {commutator:.3e})"
        )));
    }
    let ratio = n as f64 / (n - d) as f64;
    let error = ratio * wiener_error(sigma, sigma_z)?;
    let solver = SpdSolver::new(&(sigma + sigma_z), "cor1 denominator")?;
    let bias = thm1_bias(sigma, &solver, n, d);
    Ok(TheoryPrediction {
        error,
        bias,
        variance: error - bias,
        kappa: n as f64 / d as f64,
        n,
        d,
    })
}

struct ScalarPhase {
    region: PhaseRegion,
    boundary: bool,
    /// Which expression vanished, when `boundary` is set.
    vanished: &'static str,
}

fn scalar_phase(c: f64, c_z: f64, kappa: f64) -> Result<ScalarPhase> {
    if !(c.is_finite() && c > 0.0) || !(c_z.is_finite() && c_z > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "c and c_z must be positive, got c = {c}, c_z = {c_z}"
        )));
    }
    if !(kappa.is_finite() && kappa > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa must exceed 1, got {kappa}"
        )));
    }
    let s = 3.0 - 2.0 * kappa;
    let e1 = s * c + c_z;
    let e2 = c + s * c_z;
    let tol = 1e-12 * (c + c_z) * s.abs().max(1.0);
    if e1.abs() <= tol {
        return Ok(ScalarPhase {
            region: if c_z > c { PhaseRegion::I } else { PhaseRegion::III },
            boundary: true,
            vanished: "(3 - 2 kappa) c + c_z",
        });
    }
    if e2.abs() <= tol {
        return Ok(ScalarPhase {
            region: if c_z > c { PhaseRegion::I } else { PhaseRegion::III },
            boundary: true,
            vanished: "c + (3 - 2 kappa) c_z",
        });
    }
    if e1 < 0.0 && e2 < 0.0 {
        return Ok(ScalarPhase {
            region: PhaseRegion::II,
            boundary: false,
            vanished: "",
        });
    }
    if (c - c_z).abs() <= 1e-12 * (c + c_z) {
        // On the degenerate ray between I and III the risk is continuous but
        // the optimal scale jumps between 0 and infinity.
        return Ok(ScalarPhase {
            region: PhaseRegion::I,
            boundary: true,
            vanished: "c - c_z",
        });
    }
    Ok(ScalarPhase {
        region: if c_z > c { PhaseRegion::I } else { PhaseRegion::III },
        boundary: false,
        vanished: "",
    })
}

/// Classifies a scalar configuration `Sigma = (c/d) I`, `Sigma_z = (c_z/d) I`
/// into phase regions I, II, or III. Points on a boundary curve are
/// rejected with [`Error::PhaseBoundary`].
pub fn classify_phase(c: f64, c_z: f64, kappa: f64) -> Result<PhaseRegion> {
    let phase = scalar_phase(c, c_z, kappa)?;
    if phase.boundary {
        return Err(Error::PhaseBoundary {
            expression: phase.vanished,
        });
    }
    Ok(phase.region)
}

/// Minimal asymptotic risk over the training-noise scale in the scalar case
/// `Sigma = (c/d) I`, `Sigma_z = (c_z/d) I`, together with the optimal scale
/// and region.
///
/// Inside region II the optimum is interior:
/// `sigma* = c (c + (3-2 kappa) c_z) / ((3-2 kappa) c + c_z)` with risk
/// `(-(c+c_z)^2 + 4 (kappa-1)^2 c c_z) / (4 (kappa-2)(kappa-1)(c+c_z))`.
/// Otherwise the risk is `min(c, c_z)`, attained at scale 0 when `c_z < c`
/// and in the unbounded-scale limit when `c_z > c`.
pub fn cor2_optimal(c: f64, c_z: f64, kappa: f64) -> Result<Cor2Optimal> {
    let phase = scalar_phase(c, c_z, kappa)?;
    let s = 3.0 - 2.0 * kappa;
    match phase.region {
        PhaseRegion::II if !phase.boundary => {
            let e1 = s * c + c_z;
            let e2 = c + s * c_z;
            let sigma_star = c * e2 / e1;
            let error = (-(c + c_z) * (c + c_z) + 4.0 * (kappa - 1.0) * (kappa - 1.0) * c * c_z)
                / (4.0 * (kappa - 2.0) * (kappa - 1.0) * (c + c_z));
            Ok(Cor2Optimal {
                region: PhaseRegion::II,
                sigma_star: SigmaStar::Finite(sigma_star),
                error,
                boundary: false,
            })
        }
        region => {
            let error = c.min(c_z);
            let sigma_star = if c_z < c {
                SigmaStar::Finite(0.0)
            } else {
                SigmaStar::Unbounded
            };
            Ok(Cor2Optimal {
                region,
                sigma_star,
                error,
                boundary: phase.boundary,
            })
        }
    }
}

/// Single-batch risk as a function of the scalar training-noise scale, with
/// `Sigma = (c/d) I` and `Sigma_z = (c_z/d) I`. This is the exact
/// `d`-independent reduction of [`thm1_error`] and is what [`cor2_optimal`]
/// minimizes in closed form.
pub fn scalar_thm1_error(c: f64, sigma1_scale: f64, c_z: f64, kappa: f64) -> f64 {
    let cs = c + sigma1_scale;
    (1.0 + (c + c_z) / ((kappa - 1.0) * cs)) * (c * sigma1_scale / cs)
        + c * c * (c_z - sigma1_scale) / (cs * cs)
}

/// Materialized batch data shared by the multi-batch routines.
pub(crate) struct Batches {
    pub n_t: Vec<usize>,
    pub sigma_t: Vec<DMatrix<f64>>,
}

impl Batches {
    pub(crate) fn materialize(batches: &[BatchSpec], d: usize) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::InvalidParameter("at least one batch required".into()));
        }
        let mut n_t = Vec::with_capacity(batches.len());
        let mut sigma_t = Vec::with_capacity(batches.len());
        for b in batches {
            if b.n == 0 {
                return Err(Error::InvalidParameter(
                    "batch sample counts must be at least 1".into(),
                ));
            }
            n_t.push(b.n);
            sigma_t.push(b.sigma.materialize(d)?);
        }
        Ok(Self { n_t, sigma_t })
    }

    fn total(&self) -> usize {
        self.n_t.iter().sum()
    }

    /// `M(theta) = sum_t theta_t n_t (Sigma_t + Sigma)`.
    fn system_matrix(&self, theta_t: &[f64], sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let d = sigma.nrows();
        let mut m = DMatrix::zeros(d, d);
        for (t, sig_t) in self.sigma_t.iter().enumerate() {
            let w = theta_t[t] * self.n_t[t] as f64;
            m += (sig_t + sigma) * w;
        }
        m
    }
}

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 10_000;
const FIXED_POINT_DAMPING: f64 = 0.5;

/// Solves the multi-batch fixed-point system
/// `theta_t = 2 - 2 theta_t Tr[M^{-1} Sigma_t]` with
/// `M = sum_t theta_t n_t (Sigma_t + Sigma)`, by damped iteration of the
/// rearranged update `theta_t <- 2 / (1 + 2 Tr[M^{-1} Sigma_t])` (damping
/// 0.5, initialized at 1), then reads off `theta = 2 - 4 Tr[M^{-1} Sigma]`
/// and `zeta = 1/(2(n-d))`.
pub fn thm2_fixed_point(
    batches: &[BatchSpec],
    sigma: &DMatrix<f64>,
    n: usize,
    d: usize,
) -> Result<FixedPointSolution> {
    let mats = Batches::materialize(batches, d)?;
    thm2_fixed_point_mat(&mats, sigma, n, d)
}

pub(crate) fn thm2_fixed_point_mat(
    mats: &Batches,
    sigma: &DMatrix<f64>,
    n: usize,
    d: usize,
) -> Result<FixedPointSolution> {
    check_square("sigma", sigma, d)?;
    if mats.total() != n {
        return Err(Error::InvalidParameter(format!(
            "batch sizes sum to {}, expected n = {n}",
            mats.total()
        )));
    }
    if n <= d {
        return Err(Error::ProportionalRegime { n, d });
    }
    let count = mats.n_t.len();
    let mut theta_t = vec![1.0; count];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for iter in 0..=FIXED_POINT_MAX_ITER {
        let m = mats.system_matrix(&theta_t, sigma);
        let chol = nalgebra::Cholesky::new(m).ok_or(Error::Singular {
            context: "fixed-point system matrix",
            condition: f64::INFINITY,
            limit: linalg::CONDITION_LIMIT,
        })?;
        let traces: Vec<f64> = mats.sigma_t.iter().map(|s| chol.solve(s).trace()).collect();
        residual = theta_t
            .iter()
            .zip(&traces)
            .map(|(&th, &tr)| (th * (1.0 + 2.0 * tr) - 2.0).abs())
            .fold(0.0f64, f64::max);
        if residual <= FIXED_POINT_TOL {
            iterations = iter;
            let theta = 2.0 - 4.0 * chol.solve(sigma).trace();
            let zeta = 1.0 / (2.0 * (n - d) as f64);
            return Ok(FixedPointSolution {
                theta_t,
                theta,
                zeta,
                iterations,
                residual,
            });
        }
        for (th, &tr) in theta_t.iter_mut().zip(&traces) {
            let target = 2.0 / (1.0 + 2.0 * tr);
            *th = FIXED_POINT_DAMPING * *th + (1.0 - FIXED_POINT_DAMPING) * target;
        }
        iterations = iter + 1;
    }
    Err(Error::Convergence {
        iterations,
        residual,
    })
}

/// Builds and solves the `(N+2) x (N+2)` linear system for the aggregated
/// squared scale factors given a converged fixed point.
pub fn thm2_assemble(
    fp: &FixedPointSolution,
    batches: &[BatchSpec],
    sigma: &DMatrix<f64>,
    d: usize,
) -> Result<LinearSystemSolution> {
    let mats = Batches::materialize(batches, d)?;
    thm2_assemble_mat(fp, &mats, sigma, d)
}

pub(crate) fn thm2_assemble_mat(
    fp: &FixedPointSolution,
    mats: &Batches,
    sigma: &DMatrix<f64>,
    d: usize,
) -> Result<LinearSystemSolution> {
    check_square("sigma", sigma, d)?;
    if fp.residual > 1e-6 {
        return Err(Error::InvalidParameter(
            "fixed point has not converged; refusing to assemble".into(),
        ));
    }
    let count = mats.n_t.len();
    if fp.theta_t.len() != count {
        return Err(Error::Dimension(format!(
            "fixed point has {} thetas but {} batches were given",
            fp.theta_t.len(),
            count
        )));
    }
    let theta = fp.theta;
    let zeta = fp.zeta;
    let m = mats.system_matrix(&fp.theta_t, sigma);
    let solver = SpdSolver::new(&m, "multi-batch system matrix")?;

    // All rows are traces against M^{-1}; precompute the solved blocks once.
    let minv_sigma = solver.solve(sigma);
    let minv_sigma_t: Vec<DMatrix<f64>> = mats.sigma_t.iter().map(|s| solver.solve(s)).collect();
    let sig2 = sigma * sigma;
    let minv_sig2 = solver.solve(&sig2);
    let tr_minv_sig2 = minv_sig2.trace();
    let tr_sigma = sigma.trace();

    let size = count + 2;
    let mut a = DMatrix::zeros(size, size);
    let mut b = DVector::zeros(size);

    // Row 0: (theta/2) X_tau = Tr Sigma / (zeta theta)
    //                          - 2 Tr[M^{-1} Sigma^2] / (zeta theta)^2.
    a[(0, 0)] = theta / 2.0;
    b[0] = tr_sigma / (zeta * theta) - 2.0 / (zeta * zeta * theta * theta) * tr_minv_sig2;

    // Middle rows: batch i sandwiches (Sigma + Sigma_i) between two M^{-1}.
    for i in 0..count {
        let n_i = mats.n_t[i] as f64;
        let sandwich = &minv_sigma + &minv_sigma_t[i]; // M^{-1} (Sigma + Sigma_i)
        a[(i + 1, 0)] = -4.0 * n_i * (&sandwich * &minv_sigma).trace();
        for s in 0..count {
            let coupling = n_i * fp.theta_t[s] * fp.theta_t[s] * (&sandwich * &minv_sigma_t[s]).trace();
            a[(i + 1, s + 1)] = if s == i { 1.0 - coupling } else { -coupling };
        }
        a[(i + 1, count + 1)] = 0.0;
        b[i + 1] = n_i * tr_sigma
            + 4.0 * n_i / (zeta * zeta * theta * theta) * (&sandwich * &minv_sig2).trace()
            - 4.0 * n_i / (zeta * theta) * tr_minv_sig2;
    }

    // Last row: the tau_lambda equation, normalized so its diagonal is 1.
    let last = count + 1;
    a[(last, 0)] = -4.0 / (zeta * zeta) * (&minv_sigma * &minv_sigma).trace();
    for s in 0..count {
        a[(last, s + 1)] = -fp.theta_t[s] * fp.theta_t[s] / (zeta * zeta)
            * (&minv_sigma * &minv_sigma_t[s]).trace();
    }
    a[(last, last)] = 1.0;
    b[last] = tr_sigma / (zeta * zeta)
        + 4.0 / (zeta.powi(4) * theta * theta) * (&minv_sigma * &minv_sig2).trace()
        - 4.0 / (zeta.powi(3) * theta) * tr_minv_sig2;

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(smin > 0.0 && smax / smin <= linalg::CONDITION_LIMIT) {
        return Err(Error::Singular {
            context: "multi-batch linear system",
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
            limit: linalg::CONDITION_LIMIT,
        });
    }
    let solution = svd
        .solve(&b, 0.0)
        .map_err(|_| Error::Singular {
            context: "multi-batch linear system",
            condition: f64::INFINITY,
            limit: linalg::CONDITION_LIMIT,
        })?;
    Ok(LinearSystemSolution { a, b, solution })
}

/// Asymptotic risk of the least-squares denoiser trained on several batches
/// with distinct noise covariances. Runs the fixed point, assembles and
/// solves the linear system, and evaluates the final trace formula.
pub fn thm2_error(
    batches: &[BatchSpec],
    sigma: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
    n: usize,
    d: usize,
) -> Result<TheoryPrediction> {
    let mats = Batches::materialize(batches, d)?;
    thm2_error_mat(&mats, sigma, sigma_z, n, d)
}

pub(crate) fn thm2_error_mat(
    mats: &Batches,
    sigma: &DMatrix<f64>,
    sigma_z: &DMatrix<f64>,
    n: usize,
    d: usize,
) -> Result<TheoryPrediction> {
    check_square("sigma_z", sigma_z, d)?;
    let fp = thm2_fixed_point_mat(mats, sigma, n, d)?;
    let ls = thm2_assemble_mat(&fp, mats, sigma, d)?;
    let count = mats.n_t.len();
    let x = &ls.solution;

    let m = mats.system_matrix(&fp.theta_t, sigma);
    let solver = SpdSolver::new(&m, "multi-batch system matrix")?;
    let minv_sigma_z = solver.solve(sigma_z);
    let minv_sigma = solver.solve(sigma);
    let sig2 = sigma * sigma;
    let minv_sig2 = solver.solve(&sig2);

    // Per-coordinate error: zeta^2 tau_lambda^2 plus (1/theta^2) times the
    // trace of M^{-1} Sigma_z M^{-1} against
    // 4 theta^2 tau^2 Sigma + (4/zeta^2) Sigma e_j e_j^T Sigma
    //   + theta^2 sum_t theta_t^2 tau_t^2 Sigma_t;
    // summed over coordinates the middle term contributes Sigma^2.
    let zeta = fp.zeta;
    let bias = zeta * zeta * x[count + 1];
    let mut variance = 4.0 * x[0] * (&minv_sigma_z * &minv_sigma).trace();
    variance += 4.0 / (zeta * zeta * fp.theta * fp.theta) * (&minv_sigma_z * &minv_sig2).trace();
    for t in 0..count {
        let minv_sigma_t = solver.solve(&mats.sigma_t[t]);
        variance +=
            fp.theta_t[t] * fp.theta_t[t] * x[t + 1] * (&minv_sigma_z * minv_sigma_t).trace();
    }
    let error = bias + variance;
    Ok(TheoryPrediction {
        error,
        bias,
        variance,
        kappa: n as f64 / d as f64,
        n,
        d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{random_diagonal, random_psd, rng};
    use rand::Rng;

    fn identity_batch(n: usize) -> BatchSpec {
        BatchSpec {
            n,
            sigma: CovarianceModel::Isotropic { variance: 1.0 },
        }
    }

    #[test]
    fn wiener_error_examples() {
        let id = DMatrix::identity(10, 10);
        assert!((wiener_error(&id, &id).unwrap() - 5.0).abs() < 1e-12);
        assert!(wiener_error(&id, &DMatrix::zeros(10, 10)).unwrap().abs() < 1e-12);
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let err = wiener_error(&sigma, &DMatrix::identity(2, 2)).unwrap();
        assert!((err - 7.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn thm1_identity_case() {
        let d = 12;
        let id = DMatrix::identity(d, d);
        let p = thm1_error(&id, &id, &id, 2 * d, d).unwrap();
        assert!((p.error - d as f64).abs() < 1e-10);
        // bias and variance split evenly here
        assert!((p.bias - d as f64 / 2.0).abs() < 1e-10);
        assert!((p.variance - d as f64 / 2.0).abs() < 1e-10);
    }

    #[test]
    fn thm1_requires_proportional_regime() {
        let id = DMatrix::identity(4, 4);
        assert!(matches!(
            thm1_error(&id, &id, &id, 4, 4),
            Err(Error::ProportionalRegime { .. })
        ));
    }

    #[test]
    fn thm1_reduces_to_cor1_when_noise_matches() {
        let mut r = rng(61);
        for _ in 0..15 {
            let d = r.random_range(2..=12);
            let n = 2 * d + r.random_range(1..=20);
            let sigma = random_diagonal(&mut r, d, 0.2, 3.0);
            let sigma_z = random_diagonal(&mut r, d, 0.2, 3.0);
            let t = thm1_error(&sigma, &sigma_z, &sigma_z, n, d).unwrap();
            let c = cor1_error(&sigma, &sigma_z, n, d).unwrap();
            assert!((t.error - c.error).abs() <= 1e-10 * t.error.abs());
        }
    }

    #[test]
    fn cor1_examples_and_commuting_check() {
        let d = 10;
        let id = DMatrix::identity(d, d);
        let p = cor1_error(&id, &id, 2 * d, d).unwrap();
        assert!((p.error - d as f64).abs() < 1e-12);

        let p = cor1_error(&id, &id, 3 * d / 2, d).unwrap();
        assert!((p.error - 1.5 * d as f64).abs() < 1e-12);

        // kappa -> infinity recovers the Wiener risk
        let p = cor1_error(&id, &id, 1_000_000, 10).unwrap();
        let ew = wiener_error(&id, &id).unwrap();
        assert!((p.error / ew - 1.0).abs() < 1e-4);

        let mut r = rng(71);
        let a = random_psd(&mut r, 6, 1.0);
        let b = random_psd(&mut r, 6, 1.0);
        assert!(matches!(
            cor1_error(&a, &b, 20, 6),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn thm1_dominates_wiener() {
        let mut r = rng(73);
        for _ in 0..25 {
            let d = r.random_range(2..=10);
            let n = d + r.random_range(1..=30);
            let sigma = random_psd(&mut r, d, 1.0);
            let sigma1 = random_psd(&mut r, d, 0.8);
            let sigma_z = random_psd(&mut r, d, 1.2);
            let t = thm1_error(&sigma, &sigma1, &sigma_z, n, d).unwrap();
            let ew = wiener_error(&sigma, &sigma_z).unwrap();
            assert!(t.error >= ew - 1e-10 * ew.abs(), "{} < {}", t.error, ew);
        }
    }

    #[test]
    fn classify_phase_examples() {
        assert_eq!(classify_phase(1.0, 1.0, 3.0).unwrap(), PhaseRegion::II);
        assert_eq!(classify_phase(1.0, 5.0, 1.2).unwrap(), PhaseRegion::I);
        assert_eq!(classify_phase(5.0, 1.0, 1.2).unwrap(), PhaseRegion::III);
        assert!(matches!(
            classify_phase(1.0, 1.0, 2.0),
            Err(Error::PhaseBoundary { .. })
        ));
        assert!(classify_phase(1.0, 1.0, 0.9).is_err());
    }

    #[test]
    fn cor2_examples() {
        let r = cor2_optimal(1.0, 1.0, 3.0).unwrap();
        assert_eq!(r.region, PhaseRegion::II);
        assert_eq!(r.sigma_star, SigmaStar::Finite(1.0));
        assert!((r.error - 0.75).abs() < 1e-14);

        let r = cor2_optimal(1.0, 2.0, 3.0).unwrap();
        assert_eq!(r.region, PhaseRegion::II);
        assert!((r.sigma_star.as_finite().unwrap() - 5.0).abs() < 1e-12);
        assert!((r.error - 23.0 / 24.0).abs() < 1e-14);

        let r = cor2_optimal(1.0, 3.0, 2.0).unwrap();
        assert_eq!(r.region, PhaseRegion::I);
        assert_eq!(r.sigma_star, SigmaStar::Unbounded);
        assert!((r.error - 1.0).abs() < 1e-14);

        let r = cor2_optimal(2.0, 0.5, 1.4).unwrap();
        assert_eq!(r.region, PhaseRegion::III);
        assert_eq!(r.sigma_star, SigmaStar::Finite(0.0));
        assert!((r.error - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cor2_is_continuous_across_boundaries() {
        // Cross the region II <-> III boundary at fixed kappa by moving c_z.
        let c = 1.0;
        let kappa = 3.0;
        // Boundary where c + (3-2k) c_z = 0: c_z = 1/3.
        let below = cor2_optimal(c, 1.0 / 3.0 - 1e-7, kappa).unwrap();
        let above = cor2_optimal(c, 1.0 / 3.0 + 1e-7, kappa).unwrap();
        assert!((below.error - above.error).abs() < 1e-6);
        // Cross the II <-> I boundary: (3-2k) c + c_z = 0 at c_z = 3.
        let below = cor2_optimal(c, 3.0 - 1e-7, kappa).unwrap();
        let above = cor2_optimal(c, 3.0 + 1e-7, kappa).unwrap();
        assert!((below.error - above.error).abs() < 1e-6);
    }

    #[test]
    fn cor2_matches_thm1_on_scalar_inputs() {
        for (c, c_z, kappa) in [(1.0, 1.0, 3.0), (1.0, 2.0, 3.0), (2.0, 3.0, 4.0)] {
            let opt = cor2_optimal(c, c_z, kappa).unwrap();
            let sigma_star = opt.sigma_star.as_finite().unwrap();
            for d in [20usize, 50] {
                let n = (kappa * d as f64).round() as usize;
                let sigma = DMatrix::identity(d, d) * (c / d as f64);
                let sigma1 = DMatrix::identity(d, d) * (sigma_star / d as f64);
                let sigma_z = DMatrix::identity(d, d) * (c_z / d as f64);
                let t = thm1_error(&sigma, &sigma1, &sigma_z, n, d).unwrap();
                assert!(
                    (t.error - opt.error).abs() <= 1e-8 * opt.error,
                    "d {d}: thm1 {} cor2 {}",
                    t.error,
                    opt.error
                );
                let scalar = scalar_thm1_error(c, sigma_star, c_z, kappa);
                assert!((scalar - opt.error).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fixed_point_closed_form_n1() {
        let d = 50;
        let n = 100;
        let sigma = DMatrix::identity(d, d);
        let fp = thm2_fixed_point(&[identity_batch(n)], &sigma, n, d).unwrap();
        assert!((fp.theta_t[0] - 1.5).abs() < 1e-9, "theta_1 {}", fp.theta_t[0]);
        assert!((fp.theta - 4.0 / 3.0).abs() < 1e-9, "theta {}", fp.theta);
        assert_eq!(fp.zeta, 0.01);
        assert!(fp.residual <= 1e-10);
        assert!(fp.theta_t.iter().all(|&t| t > 0.0 && t < 2.0));
    }

    #[test]
    fn fixed_point_residuals_hold_on_random_instances() {
        let mut r = rng(83);
        for _ in 0..10 {
            let d = r.random_range(2..=20);
            let count = r.random_range(1..=3);
            let mut batches = Vec::new();
            let mut n = 0;
            for _ in 0..count {
                let n_t = d + r.random_range(1..=30);
                n += n_t;
                batches.push(BatchSpec {
                    n: n_t,
                    sigma: CovarianceModel::explicit(&random_diagonal(&mut r, d, 0.1, 2.0)),
                });
            }
            let sigma = random_diagonal(&mut r, d, 0.2, 2.0);
            let fp = thm2_fixed_point(&batches, &sigma, n, d).unwrap();
            assert!(fp.residual <= 1e-10);
            // verify the residual definition independently
            let mats = Batches::materialize(&batches, d).unwrap();
            let m = mats.system_matrix(&fp.theta_t, &sigma);
            let solver = SpdSolver::new(&m, "test").unwrap();
            for (t, sig_t) in mats.sigma_t.iter().enumerate() {
                let tr = solver.solve(sig_t).trace();
                let lhs = fp.theta_t[t];
                let rhs = 2.0 - 2.0 * fp.theta_t[t] * tr;
                assert!((lhs - rhs).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn assemble_solution_satisfies_system_and_bias_identity() {
        let d = 16;
        let n = 2 * d;
        let sigma = DMatrix::identity(d, d);
        let batches = [identity_batch(n)];
        let fp = thm2_fixed_point(&batches, &sigma, n, d).unwrap();
        let ls = thm2_assemble(&fp, &batches, &sigma, d).unwrap();
        let residual = (&ls.a * &ls.solution - &ls.b).norm();
        assert!(residual <= 1e-8 * ls.b.norm());
        let max_entry = ls.solution.iter().cloned().fold(0.0f64, f64::max);
        assert!(ls.solution.iter().all(|&v| v >= -1e-8 * max_entry));
        assert_eq!(ls.a[(d_index(&ls), d_index(&ls))], 1.0);

        // zeta^2 sum_j tau_lambda^2 equals the closed-form signal-distortion
        // limit Tr[(R - I)(R - g I) Sigma] with g = (n - d + Tr R)/(n - d).
        let solver = SpdSolver::new(&(2.0 * DMatrix::identity(d, d)), "test").unwrap();
        let r = solver.solve(&sigma);
        let g = (n as f64 - d as f64 + r.trace()) / (n - d) as f64;
        let id = DMatrix::identity(d, d);
        let bias = ((&r - &id) * (&r - id * g) * &sigma).trace();
        let from_system = fp.zeta * fp.zeta * ls.solution[ls.solution.len() - 1];
        assert!(
            (bias - from_system).abs() <= 1e-8 * bias.abs(),
            "closed form {bias}, system {from_system}"
        );
    }

    fn d_index(ls: &LinearSystemSolution) -> usize {
        ls.a.nrows() - 1
    }

    #[test]
    fn assemble_first_rhs_entry_matches_closed_form() {
        let mut r = rng(97);
        let d = 8;
        let n = 20;
        let sigma = random_diagonal(&mut r, d, 0.3, 2.0);
        let batches = [BatchSpec {
            n,
            sigma: CovarianceModel::explicit(&random_diagonal(&mut r, d, 0.2, 1.5)),
        }];
        let fp = thm2_fixed_point(&batches, &sigma, n, d).unwrap();
        let ls = thm2_assemble(&fp, &batches, &sigma, d).unwrap();
        let mats = Batches::materialize(&batches, d).unwrap();
        let m = mats.system_matrix(&fp.theta_t, &sigma);
        let solver = SpdSolver::new(&m, "test").unwrap();
        let expected = sigma.trace() / (fp.zeta * fp.theta)
            - 2.0 / (fp.zeta * fp.zeta * fp.theta * fp.theta)
                * solver.solve(&(&sigma * &sigma)).trace();
        assert!((ls.b[0] - expected).abs() <= 1e-9 * expected.abs());
    }

    #[test]
    fn thm2_reduces_to_thm1_on_single_batch() {
        let mut r = rng(101);
        for _ in 0..20 {
            let d = r.random_range(2..=30);
            let kappa = r.random_range(1.3..5.0);
            let n = ((kappa * d as f64).ceil() as usize).max(d + 1);
            let sigma = random_diagonal(&mut r, d, 0.1, 3.0);
            let sigma1 = random_diagonal(&mut r, d, 0.1, 3.0);
            let sigma_z = random_diagonal(&mut r, d, 0.1, 3.0);
            let batches = [BatchSpec {
                n,
                sigma: CovarianceModel::explicit(&sigma1),
            }];
            let t2 = thm2_error(&batches, &sigma, &sigma_z, n, d).unwrap();
            let t1 = thm1_error(&sigma, &sigma1, &sigma_z, n, d).unwrap();
            let rel = (t2.error - t1.error).abs() / t1.error.abs();
            assert!(rel <= 1e-8, "rel {rel} at d {d} n {n}");
            // the bias/variance split agrees too
            assert!((t2.bias - t1.bias).abs() <= 1e-7 * t1.bias.abs().max(1e-12));
        }
    }

    #[test]
    fn thm2_reduction_holds_for_non_commuting_covariances() {
        let mut r = rng(103);
        for _ in 0..5 {
            let d = r.random_range(2..=15);
            let n = 3 * d;
            let sigma = random_psd(&mut r, d, 1.0);
            let sigma1 = random_psd(&mut r, d, 0.6);
            let sigma_z = random_psd(&mut r, d, 1.1);
            let batches = [BatchSpec {
                n,
                sigma: CovarianceModel::explicit(&sigma1),
            }];
            let t2 = thm2_error(&batches, &sigma, &sigma_z, n, d).unwrap();
            let t1 = thm1_error(&sigma, &sigma1, &sigma_z, n, d).unwrap();
            assert!((t2.error - t1.error).abs() <= 1e-8 * t1.error.abs());
        }
    }

    #[test]
    fn thm2_merges_identical_batches() {
        let mut r = rng(107);
        for (n1, n2) in [(30usize, 30usize), (10, 50), (25, 35)] {
            let d = 20;
            let n = n1 + n2;
            let sigma = random_diagonal(&mut r, d, 0.3, 2.0);
            let sigma1 = random_diagonal(&mut r, d, 0.2, 1.5);
            let sigma_z = random_diagonal(&mut r, d, 0.2, 1.5);
            let split = [
                BatchSpec {
                    n: n1,
                    sigma: CovarianceModel::explicit(&sigma1),
                },
                BatchSpec {
                    n: n2,
                    sigma: CovarianceModel::explicit(&sigma1),
                },
            ];
            let pooled = [BatchSpec {
                n,
                sigma: CovarianceModel::explicit(&sigma1),
            }];
            let a = thm2_error(&split, &sigma, &sigma_z, n, d).unwrap();
            let b = thm2_error(&pooled, &sigma, &sigma_z, n, d).unwrap();
            let rel = (a.error - b.error).abs() / b.error.abs();
            assert!(rel <= 1e-8, "rel {rel} for split ({n1},{n2})");
        }
    }

    #[test]
    fn thm2_rejects_batch_total_mismatch() {
        let sigma = DMatrix::identity(4, 4);
        let batches = [identity_batch(10)];
        assert!(thm2_fixed_point(&batches, &sigma, 12, 4).is_err());
    }
}
