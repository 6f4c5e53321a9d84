//! The multi-batch prediction: train one denoiser on two batches carrying
//! different noise levels and compare the predicted risk with Monte Carlo.
//! Also demonstrates the internal consistency checks: two identical batches
//! merge into one, and a single batch reduces to the explicit single-batch
//! formula.
//!
//! Run with: cargo run --example multi_batch

use nalgebra::DMatrix;

use denoise_lab::simulate::BatchNoise;
use denoise_lab::{
    run_experiment, thm1_error, thm2_error, thm2_fixed_point, BatchSpec, CovarianceModel,
    DenoiserSelect, ExperimentConfig, FeatureDistribution, PgdConfig,
};

fn main() -> denoise_lab::Result<()> {
    let d = 20;
    let sigma = DMatrix::identity(d, d);
    let sigma_z = DMatrix::identity(d, d);
    let batches = [
        BatchSpec {
            n: 30,
            sigma: CovarianceModel::Isotropic { variance: 1.0 },
        },
        BatchSpec {
            n: 30,
            sigma: CovarianceModel::Isotropic { variance: 2.0 },
        },
    ];
    let n = 60;

    let fp = thm2_fixed_point(&batches, &sigma, n, d)?;
    println!(
        "fixed point: theta_t = {:?}, theta = {:.6}, zeta = {}, {} iterations (residual {:.2e})",
        fp.theta_t, fp.theta, fp.zeta, fp.iterations, fp.residual
    );

    let prediction = thm2_error(&batches, &sigma, &sigma_z, n, d)?;
    println!(
        "two-batch prediction: risk {:.6} (bias {:.6} + variance {:.6})",
        prediction.error, prediction.bias, prediction.variance
    );

    let config = ExperimentConfig {
        d,
        kappa: None,
        n: Some(n),
        batches: vec![
            BatchNoise {
                n: Some(30),
                sigma: CovarianceModel::Isotropic { variance: 1.0 },
            },
            BatchNoise {
                n: Some(30),
                sigma: CovarianceModel::Isotropic { variance: 2.0 },
            },
        ],
        sigma: CovarianceModel::Isotropic { variance: 1.0 },
        sigma_z: CovarianceModel::Isotropic { variance: 1.0 },
        feature_distribution: FeatureDistribution::Gaussian,
        denoisers: vec![DenoiserSelect::LeastSquares],
        trials: 50,
        master_seed: 11,
        sigma1_scale: 1.0,
        pgd: PgdConfig::default(),
    };
    let table = run_experiment(&config)?;
    let row = &table.rows[0];
    println!(
        "monte carlo ({} trials): mean {:.6} +- {:.6}  (rel dev {:.4})",
        row.trials,
        row.mean_error,
        row.std_error,
        (row.mean_error - prediction.error).abs() / prediction.error
    );

    // Consistency: a single pooled batch reduces to the single-batch formula.
    let pooled = [BatchSpec {
        n,
        sigma: CovarianceModel::Isotropic { variance: 1.0 },
    }];
    let via_pipeline = thm2_error(&pooled, &sigma, &sigma_z, n, d)?.error;
    let direct = thm1_error(&sigma, &DMatrix::identity(d, d), &sigma_z, n, d)?.error;
    println!(
        "single-batch reduction: pipeline {via_pipeline:.12} vs explicit formula {direct:.12}"
    );
    Ok(())
}
