//! Swaps the Gaussian features for Rademacher (+-1) features with the same
//! first and second moments and reruns the corollary-1 sweep: the risks
//! match point for point, suggesting the asymptotics only see the moments.
//!
//! Run with: cargo run --example rademacher_universality

use denoise_lab::simulate::BatchNoise;
use denoise_lab::{
    sweep, CovarianceModel, DenoiserSelect, ExperimentConfig, FeatureDistribution, PgdConfig,
    SweepKey,
};

fn main() -> denoise_lab::Result<()> {
    let base = ExperimentConfig {
        d: 50,
        kappa: Some(2.0),
        n: None,
        batches: vec![BatchNoise {
            n: None,
            sigma: CovarianceModel::Isotropic { variance: 1.0 },
        }],
        sigma: CovarianceModel::Isotropic { variance: 1.0 },
        sigma_z: CovarianceModel::Isotropic { variance: 1.0 },
        feature_distribution: FeatureDistribution::Gaussian,
        denoisers: vec![DenoiserSelect::LeastSquares],
        trials: 20,
        master_seed: 1,
        sigma1_scale: 1.0,
        pgd: PgdConfig::default(),
    };
    let kappas = [1.5, 2.0, 3.0, 4.0];
    let gaussian = sweep(&base, SweepKey::Kappa, &kappas)?;
    let mut flipped = base.clone();
    flipped.feature_distribution = FeatureDistribution::Rademacher;
    let rademacher = sweep(&flipped, SweepKey::Kappa, &kappas)?;

    println!(
        "{:>6} {:>14} {:>14} {:>10} {:>12}",
        "kappa", "gaussian", "rademacher", "rel_gap", "theory"
    );
    for (g, r) in gaussian.rows.iter().zip(&rademacher.rows) {
        println!(
            "{:>6} {:>14.6} {:>14.6} {:>10.4} {:>12.6}",
            g.sweep_key,
            g.mean_error,
            r.mean_error,
            (g.mean_error - r.mean_error).abs() / g.mean_error,
            g.theory_error.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
