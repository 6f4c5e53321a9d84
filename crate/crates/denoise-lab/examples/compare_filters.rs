//! Can a denoiser trained on synthetically noised samples beat the
//! empirical Wiener filter? With a non-diagonal Wishart signal covariance
//! (hard to estimate from Theta(d) samples) and optimized training noise:
//! yes, in the high-SNR regime. Sweeps the signal scale and prints all four
//! filters' exact risks.
//!
//! Run with: cargo run --example compare_filters
//! (pass --full for the d = 100 variant; a minute or so)

use denoise_lab::cli::{cmd_compare, parse_config, CompareConfig, OutputFormat};
use denoise_lab::ResultTable;

fn main() -> denoise_lab::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let (d, n, trials) = if full { (100, 160, 20) } else { (40, 64, 10) };
    let config: CompareConfig = parse_config(
        &format!(
            r#"
d = {d}
n = {n}
c_values = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0]
wishart_seed = 3
trials = {trials}
master_seed = 17
sigma_z = {{ kind = "isotropic", variance = 1.0 }}
"#
        ),
        &[],
    )?;
    let output = cmd_compare(&config, OutputFormat::Csv, None)?;
    let table = ResultTable::from_csv(&output.content)?;

    println!("d = {d}, n = {n}, {trials} trials; identity risk = {d}");
    println!(
        "{:>7} {:>30} {:>14} {:>12}",
        "c", "denoiser", "mean_risk", "std"
    );
    for row in &table.rows {
        println!(
            "{:>7} {:>30} {:>14.4} {:>12.4}",
            row.sweep_key, row.denoiser, row.mean_error, row.std_error
        );
    }
    if let Some(summary) = output.summary {
        println!("\n{summary}");
    }
    Ok(())
}
