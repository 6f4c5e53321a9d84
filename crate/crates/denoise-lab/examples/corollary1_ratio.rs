//! When the training noise matches the test noise, the trained denoiser's
//! asymptotic risk is exactly kappa/(kappa-1) times the Wiener risk. This
//! example measures that ratio by simulation on the isotropic case.
//!
//! Run with: cargo run --example corollary1_ratio

use nalgebra::DMatrix;

use denoise_lab::simulate::BatchNoise;
use denoise_lab::{
    sweep, wiener_error, CovarianceModel, DenoiserSelect, ExperimentConfig, FeatureDistribution,
    PgdConfig, SweepKey,
};

fn main() -> denoise_lab::Result<()> {
    let d = 50;
    let id = DMatrix::identity(d, d);
    let e_wiener = wiener_error(&id, &id)?;
    println!("wiener risk: {e_wiener} (d = {d})");

    let config = ExperimentConfig {
        d,
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
    let table = sweep(&config, SweepKey::Kappa, &[1.25, 1.5, 2.0, 3.0, 4.0, 8.0])?;

    println!(
        "{:>6} {:>14} {:>14} {:>14}",
        "kappa", "mc_mean", "mc/wiener", "kappa/(kappa-1)"
    );
    for row in &table.rows {
        let kappa = row.sweep_key;
        println!(
            "{:>6} {:>14.6} {:>14.6} {:>14.6}",
            kappa,
            row.mean_error,
            row.mean_error / e_wiener,
            kappa / (kappa - 1.0)
        );
    }
    println!("the ratio approaches 1 as kappa grows: more samples recover the Wiener filter");
    Ok(())
}
