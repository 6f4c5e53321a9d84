//! Verifies the single-batch risk prediction against Monte Carlo on a
//! power-law covariance: d = 50, training and test noise both identity,
//! kappa swept. Cross marks in the paper-style figure correspond to the
//! `mc_mean` column here, the solid line to `theory`.
//!
//! Run with: cargo run --example theory_vs_simulation

use denoise_lab::simulate::BatchNoise;
use denoise_lab::{
    sweep, CovarianceModel, DenoiserSelect, ExperimentConfig, FeatureDistribution, PgdConfig,
    SweepKey,
};

fn main() -> denoise_lab::Result<()> {
    let config = ExperimentConfig {
        d: 50,
        kappa: Some(2.0),
        n: None,
        batches: vec![BatchNoise {
            n: None,
            sigma: CovarianceModel::Isotropic { variance: 1.0 },
        }],
        sigma: CovarianceModel::PowerLawDiagonal { exponent: 4.0 },
        sigma_z: CovarianceModel::Isotropic { variance: 1.0 },
        feature_distribution: FeatureDistribution::Gaussian,
        denoisers: vec![DenoiserSelect::LeastSquares, DenoiserSelect::Wiener],
        trials: 20,
        master_seed: 1,
        sigma1_scale: 1.0,
        pgd: PgdConfig::default(),
    };
    let table = sweep(&config, SweepKey::Kappa, &[1.5, 2.0, 3.0, 4.0, 6.0])?;

    println!("{:>6} {:>22} {:>12} {:>12} {:>8}", "kappa", "denoiser", "mc_mean", "theory", "rel");
    for row in &table.rows {
        let theory = row.theory_error.unwrap_or(f64::NAN);
        let rel = (row.mean_error - theory).abs() / theory;
        println!(
            "{:>6} {:>22} {:>12.6} {:>12.6} {:>8.4}",
            row.sweep_key, row.denoiser, row.mean_error, theory, rel
        );
    }
    Ok(())
}
