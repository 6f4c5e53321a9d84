//! Linear denoisers trained from noisy samples in the proportional regime.
//!
//! Data lives in dimension `d` and only `n` clean samples are available, with
//! `n / d -> kappa > 1`. A linear denoiser `W` maps a noisy observation
//! `x + z` to `W^T (x + z)` and is scored by the population risk
//! `Tr((W^T - I) Sigma (W^T - I)^T) + Tr(W^T Sigma_z W)`. The crate provides:
//!
//! - [`filters`]: the Wiener filter, its plug-in empirical variant, and the
//!   least-squares denoiser trained on synthetically noised samples, plus the
//!   exact risk evaluation.
//! - [`theory`]: closed-form asymptotic risk predictions for the trained
//!   denoiser (single batch and multi batch, via a damped fixed point and a
//!   small linear system), the scalar-case optimum with its phase diagram,
//!   and the Wiener baseline.
//! - [`optimizer`]: projected gradient descent over the training-noise
//!   spectrum, in oracle (true covariance) and data-driven (sample
//!   covariance surrogate) modes.
//! - [`simulate`]: a seeded, reproducible Monte Carlo harness that trains
//!   every denoiser, scores it exactly, and sweeps parameters.
//! - [`cli`]: config-file front end behind the `denoise-lab` binary.
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `theory_vs_simulation`.

pub mod cli;
pub mod covariance;
pub mod error;
pub mod filters;
mod linalg;
pub mod optimizer;
pub mod simulate;
pub mod theory;

#[cfg(test)]
pub(crate) mod test_util;

pub use covariance::{empirical_covariance, psd_sqrt, CovarianceModel, SpectralDecomposition};
pub use error::{Error, Result};
pub use filters::{
    empirical_wiener, generalization_error, train_least_squares, wiener, Denoiser, DenoiserKind,
};
pub use optimizer::{
    optimize_sigma1_empirical, optimize_sigma1_oracle, OptimizationResult, PgdConfig,
};
pub use simulate::{
    run_experiment, run_trial, sample_data, sweep, DenoiserSelect, ExperimentConfig,
    FeatureDistribution, ResultRow, ResultTable, SweepKey,
};
pub use theory::{
    classify_phase, cor1_error, cor2_optimal, thm1_error, thm2_assemble, thm2_error,
    thm2_fixed_point, wiener_error, BatchSpec, Cor2Optimal, FixedPointSolution,
    LinearSystemSolution, PhaseRegion, SigmaStar, TheoryPrediction,
};
