//! Tabulates the scalar-case phase diagram: for `Sigma = (c/d) I` and
//! `Sigma_z = (c_z/d) I`, which region each `(c_z, kappa)` point falls in
//! and the optimal risk there. Region I: unbounded optimal training noise
//! (denoiser collapses to zero, risk c). Region III: zero training noise
//! (denoiser stays the identity, risk c_z). Region II: finite interior
//! optimum strictly better than both.
//!
//! Run with: cargo run --example phase_diagram [out.csv]

use std::collections::BTreeMap;

use denoise_lab::{cor2_optimal, SigmaStar};

fn main() -> denoise_lab::Result<()> {
    let c = 1.0;
    let c_zs: Vec<f64> = (0..30).map(|i| 0.2 + (6.0 - 0.2) * i as f64 / 29.0).collect();
    let kappas: Vec<f64> = (0..30).map(|i| 1.01 + (5.0 - 1.01) * i as f64 / 29.0).collect();

    let mut csv = String::from("c_z,kappa,region,sigma_star,error\n");
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for &c_z in &c_zs {
        for &kappa in &kappas {
            let opt = cor2_optimal(c, c_z, kappa)?;
            let sigma_star = match opt.sigma_star {
                SigmaStar::Finite(v) => format!("{v}"),
                SigmaStar::Unbounded => "unbounded".to_string(),
            };
            csv.push_str(&format!(
                "{c_z},{kappa},{},{sigma_star},{}\n",
                opt.region, opt.error
            ));
            *counts.entry(opt.region.to_string()).or_default() += 1;
        }
    }

    for (region, count) in &counts {
        println!("region {region:>3}: {count} grid points");
    }
    let probe = cor2_optimal(1.0, 1.0, 3.0)?;
    println!(
        "interior example (c = c_z = 1, kappa = 3): sigma* = {:?}, risk {} < min(c, c_z) = 1",
        probe.sigma_star, probe.error
    );

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, csv)?;
        println!("wrote {path}");
    }
    Ok(())
}
