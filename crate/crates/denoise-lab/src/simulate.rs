//! Seeded Monte Carlo engine: sample data, inject batch noise, train every
//! requested denoiser, score it exactly, aggregate over trials, and sweep
//! parameters.
//!
//! Scoring uses the exact population risk (a trace formula against the true
//! covariances), never a held-out test sample, so the only randomness in a
//! result is the training randomness. Random streams are pre-split per
//! `(master_seed, trial, label)` with a SplitMix64 finalizer chain, so the
//! full result table is a pure function of the configuration no matter how
//! trials are scheduled. The trial loop runs in parallel; the
//! `DENOISE_LAB_THREADS` environment variable caps the worker count.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{empirical_covariance, psd_sqrt, CovarianceModel};
use crate::error::{Error, Result};
use crate::filters::{
    empirical_wiener, generalization_error_matrix, train_least_squares, wiener, Denoiser,
};
use crate::optimizer::{optimize_sigma1_empirical, PgdConfig};
use crate::theory::{self, BatchSpec};

/// Marginal law of the feature matrix entries before coloring by the
/// covariance square root. Both choices share first and second moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureDistribution {
    #[default]
    Gaussian,
    /// Uniform on {-1, +1}.
    Rademacher,
}

/// Denoisers the harness can train and score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserSelect {
    Wiener,
    EmpiricalWiener,
    LeastSquares,
    LeastSquaresOptimizedSigma1,
    Identity,
    Zero,
}

impl DenoiserSelect {
    pub fn name(&self) -> &'static str {
        match self {
            DenoiserSelect::Wiener => "wiener",
            DenoiserSelect::EmpiricalWiener => "empirical_wiener",
            DenoiserSelect::LeastSquares => "least_squares",
            DenoiserSelect::LeastSquaresOptimizedSigma1 => "least_squares_optimized_sigma1",
            DenoiserSelect::Identity => "identity",
            DenoiserSelect::Zero => "zero",
        }
    }
}

/// One training batch in a configuration. The sample count may be left out
/// for a single batch (it then takes all `n` rows) or for exactly one batch
/// among several (it takes the remainder).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchNoise {
    #[serde(default)]
    pub n: Option<usize>,
    pub sigma: CovarianceModel,
}

/// Full description of a Monte Carlo experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    /// Sample-to-dimension ratio; `n` is `round(kappa * d)` unless given
    /// explicitly.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    pub batches: Vec<BatchNoise>,
    pub sigma: CovarianceModel,
    pub sigma_z: CovarianceModel,
    #[serde(default)]
    pub feature_distribution: FeatureDistribution,
    pub denoisers: Vec<DenoiserSelect>,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Multiplies every batch noise covariance; the `sigma1-scale` sweep key
    /// rebinds it.
    #[serde(default = "one")]
    pub sigma1_scale: f64,
    /// Settings for the optimized-training-noise denoiser.
    #[serde(default)]
    pub pgd: PgdConfig,
}

fn one() -> f64 {
    1.0
}

/// Parameters a [`sweep`] can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKey {
    Kappa,
    C,
    CZ,
    D,
    Sigma1Scale,
}

impl SweepKey {
    pub fn parse(key: &str) -> Result<Self> {
        match key {
            "kappa" => Ok(SweepKey::Kappa),
            "c" => Ok(SweepKey::C),
            "c_z" => Ok(SweepKey::CZ),
            "d" => Ok(SweepKey::D),
            "sigma1-scale" => Ok(SweepKey::Sigma1Scale),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep key '{other}' (expected kappa, c, c_z, d, or sigma1-scale)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepKey::Kappa => "kappa",
            SweepKey::C => "c",
            SweepKey::CZ => "c_z",
            SweepKey::D => "d",
            SweepKey::Sigma1Scale => "sigma1-scale",
        }
    }
}

/// One aggregated row of a [`ResultTable`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    /// Value of the swept parameter (the resolved `kappa` when nothing is
    /// swept).
    pub sweep_key: f64,
    pub denoiser: String,
    #[serde(with = "nullable_f64")]
    pub mean_error: f64,
    #[serde(with = "nullable_f64")]
    pub std_error: f64,
    pub trials: usize,
    pub theory_error: Option<f64>,
}

/// Aggregated Monte Carlo results, one row per (sweep point, denoiser).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// NaN round-trips as null in JSON (and as an empty CSV field), marking
/// failed sweep points.
mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub const RESULT_TABLE_HEADER: &str =
    "sweep_key,denoiser,mean_error,std_error,trials,theory_error";

fn format_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|e| Error::Config(format!("bad numeric field '{field}': {e}")))
}

impl ResultTable {
    /// CSV with the fixed header, full round-trip precision, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULT_TABLE_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.sweep_key,
                row.denoiser,
                format_opt(Some(row.mean_error)),
                format_opt(Some(row.std_error)),
                row.trials,
                format_opt(row.theory_error),
            ));
        }
        out
    }

    /// Parses the CSV form, ignoring `#` comment lines.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut lines = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some(header) if header == RESULT_TABLE_HEADER => {}
            other => {
                return Err(Error::Config(format!(
                    "unexpected result table header: {other:?}"
                )))
            }
        }
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Config(format!(
                    "expected 6 fields per row, got {}: {line}",
                    fields.len()
                )));
            }
            rows.push(ResultRow {
                sweep_key: parse_opt(fields[0])?.ok_or_else(|| {
                    Error::Config("missing sweep_key".into())
                })?,
                denoiser: fields[1].to_string(),
                mean_error: parse_opt(fields[2])?.unwrap_or(f64::NAN),
                std_error: parse_opt(fields[3])?.unwrap_or(f64::NAN),
                trials: fields[4]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad trials field: {e}")))?,
                theory_error: parse_opt(fields[5])?,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("result rows serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rows = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { rows })
    }

    /// Value equality with NaN treated as equal to NaN.
    pub fn content_eq(&self, other: &Self) -> bool {
        fn feq(a: f64, b: f64) -> bool {
            (a.is_nan() && b.is_nan()) || a == b
        }
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                feq(a.sweep_key, b.sweep_key)
                    && a.denoiser == b.denoiser
                    && feq(a.mean_error, b.mean_error)
                    && feq(a.std_error, b.std_error)
                    && a.trials == b.trials
                    && match (a.theory_error, b.theory_error) {
                        (None, None) => true,
                        (Some(x), Some(y)) => feq(x, y),
                        _ => false,
                    }
            })
    }
}

/// Derives an independent stream seed from the master seed, the trial
/// index, and a stream label, by chaining the SplitMix64 finalizer. Pure,
/// documented, and stable across platforms, so trial scheduling can never
/// change a result.
pub fn stream_seed(master_seed: u64, trial: u64, label: &str) -> u64 {
    let mut h = splitmix64(master_seed);
    h = splitmix64(h ^ trial);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sub_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Draws an `n x d` data matrix `R * sqrt(Sigma)` where `R` has i.i.d.
/// entries of the requested distribution, filled row-major from a ChaCha8
/// stream seeded with `stream_seed`. Bit-deterministic.
pub fn sample_data(
    sigma: &DMatrix<f64>,
    n: usize,
    d: usize,
    distribution: FeatureDistribution,
    stream_seed: u64,
) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::Dimension("n and d must be at least 1".into()));
    }
    if sigma.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "sigma is {}x{}, expected {d}x{d}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let root = psd_sqrt(sigma)?;
    Ok(sample_with_root(&root, n, distribution, stream_seed))
}

fn sample_with_root(
    root: &DMatrix<f64>,
    n: usize,
    distribution: FeatureDistribution,
    stream_seed: u64,
) -> DMatrix<f64> {
    let d = root.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mut r = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            r[(i, j)] = match distribution {
                FeatureDistribution::Gaussian => StandardNormal.sample(&mut rng),
                FeatureDistribution::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
        }
    }
    r * root
}

/// Adds batch noise to `x`: rows are partitioned in order into blocks of the
/// batch sizes, and block `t` receives `R_t * sqrt(Sigma_t)` drawn from its
/// own sub-stream of `stream_seed`.
pub fn inject_noise(x: &DMatrix<f64>, batches: &[BatchSpec], stream_seed: u64) -> Result<DMatrix<f64>> {
    let d = x.ncols();
    let total: usize = batches.iter().map(|b| b.n).sum();
    if total != x.nrows() {
        return Err(Error::InvalidParameter(format!(
            "batch sizes sum to {total} but the data has {} rows",
            x.nrows()
        )));
    }
    let roots: Result<Vec<DMatrix<f64>>> = batches
        .iter()
        .map(|b| psd_sqrt(&b.sigma.materialize(d)?))
        .collect();
    Ok(inject_noise_with_roots(x, batches, &roots?, stream_seed))
}

fn inject_noise_with_roots(
    x: &DMatrix<f64>,
    batches: &[BatchSpec],
    roots: &[DMatrix<f64>],
    stream_seed: u64,
) -> DMatrix<f64> {
    let mut noisy = x.clone();
    let mut offset = 0;
    for (t, batch) in batches.iter().enumerate() {
        let z = sample_with_root(
            &roots[t],
            batch.n,
            FeatureDistribution::Gaussian,
            sub_seed(stream_seed, t as u64),
        );
        let mut block = noisy.rows_mut(offset, batch.n);
        block += z;
        offset += batch.n;
    }
    noisy
}

/// Assigns concrete sample counts to a batch list against a total `n`: at
/// most one batch may omit its count (it takes the remainder); explicit
/// counts must sum to `n`.
pub fn resolve_batch_sizes(batches: &[BatchNoise], n: usize) -> Result<Vec<BatchSpec>> {
    if batches.is_empty() {
        return Err(Error::InvalidParameter("at least one batch required".into()));
    }
    let explicit: usize = batches.iter().filter_map(|b| b.n).sum();
    let holes = batches.iter().filter(|b| b.n.is_none()).count();
    match holes {
        0 => {
            if explicit != n {
                return Err(Error::InvalidParameter(format!(
                    "batch sizes sum to {explicit}, expected n = {n}"
                )));
            }
        }
        1 => {
            if explicit >= n {
                return Err(Error::InvalidParameter(format!(
                    "explicit batch sizes already reach {explicit} >= n = {n}"
                )));
            }
        }
        _ => {
            return Err(Error::InvalidParameter(
                "at most one batch may omit its sample count".into(),
            ))
        }
    }
    Ok(batches
        .iter()
        .map(|b| BatchSpec {
            n: b.n.unwrap_or(n - explicit),
            sigma: b.sigma.clone(),
        })
        .collect())
}

/// Everything materialized once per experiment and shared across trials.
struct TrialContext {
    d: usize,
    n: usize,
    batches: Vec<BatchSpec>,
    sigma: DMatrix<f64>,
    sigma_z: DMatrix<f64>,
    sigma_root: DMatrix<f64>,
    batch_roots: Vec<DMatrix<f64>>,
    feature_distribution: FeatureDistribution,
    denoisers: Vec<DenoiserSelect>,
    master_seed: u64,
    pgd: PgdConfig,
}

impl ExperimentConfig {
    /// Resolved total sample count.
    pub fn resolved_n(&self) -> Result<usize> {
        let from_kappa = self.kappa.map(|k| {
            if !(k.is_finite() && k > 1.0) {
                Err(Error::InvalidParameter(format!("kappa must exceed 1, got {k}")))
            } else {
                Ok((k * self.d as f64).round() as usize)
            }
        });
        match (self.n, from_kappa) {
            (Some(n), None) => Ok(n),
            (None, Some(k)) => k,
            (Some(n), Some(k)) => {
                let k = k?;
                if n != k {
                    return Err(Error::InvalidParameter(format!(
                        "explicit n = {n} conflicts with kappa * d = {k}"
                    )));
                }
                Ok(n)
            }
            (None, None) => Err(Error::InvalidParameter(
                "either n or kappa must be given".into(),
            )),
        }
    }

    /// Assigns concrete sample counts to batches against the resolved `n`
    /// and applies `sigma1_scale`.
    pub fn resolved_batches(&self) -> Result<Vec<BatchSpec>> {
        let n = self.resolved_n()?;
        let mut out = resolve_batch_sizes(&self.batches, n)?;
        if self.sigma1_scale != 1.0 {
            for batch in &mut out {
                // Express the scale through the materialized matrix so every
                // model variant supports it.
                let scaled = batch.sigma.materialize(self.d)? * self.sigma1_scale;
                batch.sigma = CovarianceModel::explicit(&scaled);
            }
        }
        Ok(out)
    }

    fn context(&self) -> Result<TrialContext> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.denoisers.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one denoiser must be requested".into(),
            ));
        }
        if !(self.sigma1_scale.is_finite() && self.sigma1_scale >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma1_scale must be nonnegative, got {}",
                self.sigma1_scale
            )));
        }
        self.pgd.validate()?;
        let n = self.resolved_n()?;
        if n <= self.d {
            return Err(Error::ProportionalRegime { n, d: self.d });
        }
        let batches = self.resolved_batches()?;
        let sigma = self.sigma.materialize(self.d)?;
        let sigma_z = self.sigma_z.materialize(self.d)?;
        let sigma_root = psd_sqrt(&sigma)?;
        let batch_roots: Result<Vec<_>> = batches
            .iter()
            .map(|b| psd_sqrt(&b.sigma.materialize(self.d)?))
            .collect();
        Ok(TrialContext {
            d: self.d,
            n,
            batches,
            sigma,
            sigma_z,
            sigma_root,
            batch_roots: batch_roots?,
            feature_distribution: self.feature_distribution,
            denoisers: self.denoisers.clone(),
            master_seed: self.master_seed,
            pgd: self.pgd.clone(),
        })
    }
}

fn build_denoisers(ctx: &TrialContext, trial: usize) -> Result<Vec<(DenoiserSelect, Denoiser)>> {
    let trial_u = trial as u64;
    let x = sample_with_root(
        &ctx.sigma_root,
        ctx.n,
        ctx.feature_distribution,
        stream_seed(ctx.master_seed, trial_u, "data"),
    );
    let needs_noisy = ctx.denoisers.contains(&DenoiserSelect::LeastSquares);
    let x_hat = needs_noisy.then(|| {
        inject_noise_with_roots(
            &x,
            &ctx.batches,
            &ctx.batch_roots,
            stream_seed(ctx.master_seed, trial_u, "noise"),
        )
    });

    let mut out = Vec::with_capacity(ctx.denoisers.len());
    for &select in &ctx.denoisers {
        let denoiser: Denoiser = match select {
            DenoiserSelect::Wiener => wiener(&ctx.sigma, &ctx.sigma_z)?,
            DenoiserSelect::EmpiricalWiener => {
                let sigma_hat = empirical_covariance(&x)?;
                empirical_wiener(&sigma_hat, &ctx.sigma_z)?
            }
            DenoiserSelect::LeastSquares => {
                train_least_squares(x_hat.as_ref().expect("noisy data prepared"), &x)?
            }
            DenoiserSelect::LeastSquaresOptimizedSigma1 => {
                let optimized = optimize_sigma1_empirical(&x, &ctx.sigma_z, &ctx.pgd)?;
                // Fresh synthetic noise drawn from the optimized covariance;
                // the test-noise realization is never reused.
                let root = psd_sqrt(&optimized.sigma1)?;
                let z = sample_with_root(
                    &root,
                    ctx.n,
                    FeatureDistribution::Gaussian,
                    stream_seed(ctx.master_seed, trial_u, "sigma1_noise"),
                );
                train_least_squares(&(&x + z), &x)?
            }
            DenoiserSelect::Identity => Denoiser::identity(ctx.d),
            DenoiserSelect::Zero => Denoiser::zero(ctx.d),
        };
        out.push((select, denoiser));
    }
    Ok(out)
}

fn run_trial_inner(ctx: &TrialContext, trial: usize) -> Result<BTreeMap<DenoiserSelect, f64>> {
    let mut scores = BTreeMap::new();
    for (select, denoiser) in build_denoisers(ctx, trial)? {
        let error = generalization_error_matrix(&denoiser.matrix, &ctx.sigma, &ctx.sigma_z)?;
        scores.insert(select, error);
    }
    Ok(scores)
}

/// Trains every requested denoiser for one trial and hands the matrices
/// back, for CSV export and debugging.
pub(crate) fn train_once(
    config: &ExperimentConfig,
    trial: usize,
) -> Result<Vec<(DenoiserSelect, Denoiser)>> {
    let ctx = config.context()?;
    build_denoisers(&ctx, trial)
}

/// Runs one seeded trial: sample, train every requested denoiser, score each
/// against the true covariances.
pub fn run_trial(
    config: &ExperimentConfig,
    trial_index: usize,
) -> Result<BTreeMap<DenoiserSelect, f64>> {
    let ctx = config.context()?;
    run_trial_inner(&ctx, trial_index)
}

static POOL: Lazy<rayon::ThreadPool> = Lazy::new(|| {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = std::env::var("DENOISE_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        builder = builder.num_threads(threads.max(1));
    }
    builder.build().expect("worker pool")
});

fn theory_for(ctx: &TrialContext, select: DenoiserSelect) -> Option<f64> {
    match select {
        DenoiserSelect::Wiener => theory::wiener_error(&ctx.sigma, &ctx.sigma_z).ok(),
        DenoiserSelect::Identity => Some(ctx.sigma_z.trace()),
        DenoiserSelect::Zero => Some(ctx.sigma.trace()),
        DenoiserSelect::LeastSquares => {
            if ctx.batches.len() == 1 {
                let sigma1 = ctx.batches[0].sigma.materialize(ctx.d).ok()?;
                theory::thm1_error(&ctx.sigma, &sigma1, &ctx.sigma_z, ctx.n, ctx.d)
                    .ok()
                    .map(|p| p.error)
            } else {
                theory::thm2_error(&ctx.batches, &ctx.sigma, &ctx.sigma_z, ctx.n, ctx.d)
                    .ok()
                    .map(|p| p.error)
            }
        }
        DenoiserSelect::EmpiricalWiener | DenoiserSelect::LeastSquaresOptimizedSigma1 => None,
    }
}

fn aggregate(ctx: &TrialContext, sweep_value: f64, trials: usize) -> Result<Vec<ResultRow>> {
    let per_trial: Result<Vec<BTreeMap<DenoiserSelect, f64>>> = POOL.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial_inner(ctx, t))
            .collect()
    });
    let per_trial = per_trial?;
    let mut seen = Vec::new();
    let mut rows = Vec::new();
    for &select in &ctx.denoisers {
        if seen.contains(&select) {
            continue;
        }
        seen.push(select);
        let values: Vec<f64> = per_trial.iter().map(|m| m[&select]).collect();
        let mean = values.iter().sum::<f64>() / trials as f64;
        let std = if trials > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (trials - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        rows.push(ResultRow {
            sweep_key: sweep_value,
            denoiser: select.name().to_string(),
            mean_error: mean,
            std_error: std,
            trials,
            theory_error: theory_for(ctx, select),
        });
    }
    Ok(rows)
}

/// Runs every trial of the experiment and aggregates means and sample
/// standard deviations per denoiser. The row order follows the requested
/// denoiser order; the `sweep_key` column carries the resolved `kappa`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    let ctx = config.context()?;
    let kappa = ctx.n as f64 / ctx.d as f64;
    Ok(ResultTable {
        rows: aggregate(&ctx, kappa, config.trials)?,
    })
}

fn apply_sweep_value(config: &ExperimentConfig, key: SweepKey, value: f64) -> Result<ExperimentConfig> {
    let mut point = config.clone();
    match key {
        SweepKey::Kappa => {
            point.kappa = Some(value);
            point.n = None;
            // Explicit batch sizes are rescaled proportionally; the last
            // batch absorbs rounding so the total matches.
            let all_explicit = config.batches.iter().all(|b| b.n.is_some());
            if all_explicit && config.batches.len() > 1 {
                let old: Vec<usize> = config.batches.iter().map(|b| b.n.unwrap()).collect();
                let old_total: usize = old.iter().sum();
                let new_total = (value * config.d as f64).round() as usize;
                let mut assigned = 0usize;
                for (i, b) in point.batches.iter_mut().enumerate() {
                    let n_t = if i + 1 == old.len() {
                        new_total - assigned
                    } else {
                        ((old[i] as f64 / old_total as f64) * new_total as f64).round() as usize
                    };
                    assigned += n_t;
                    b.n = Some(n_t);
                }
            } else if all_explicit && config.batches.len() == 1 {
                point.batches[0].n = None;
            }
        }
        SweepKey::C => point.sigma.set_scale(value)?,
        SweepKey::CZ => point.sigma_z.set_scale(value)?,
        SweepKey::D => {
            if !(value.is_finite() && value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "swept d must be a positive integer, got {value}"
                )));
            }
            if point.kappa.is_none() {
                return Err(Error::InvalidParameter(
                    "sweeping d requires kappa so n can follow".into(),
                ));
            }
            point.d = value as usize;
            point.n = None;
        }
        SweepKey::Sigma1Scale => point.sigma1_scale = value,
    }
    Ok(point)
}

/// Clones the configuration once per sweep value and aggregates each point.
/// A point that fails numerically contributes a marked row (`denoiser =
/// "failed"`, empty statistics) instead of aborting the sweep.
pub fn sweep(config: &ExperimentConfig, key: SweepKey, values: &[f64]) -> Result<ResultTable> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep values must be non-empty".into()));
    }
    let mut rows = Vec::new();
    for &value in values {
        let point = apply_sweep_value(config, key, value)?;
        match point.context().and_then(|ctx| aggregate(&ctx, value, point.trials)) {
            Ok(mut point_rows) => rows.append(&mut point_rows),
            Err(err) => {
                eprintln!("sweep point {key:?} = {value} failed: {err}");
                rows.push(ResultRow {
                    sweep_key: value,
                    denoiser: "failed".to_string(),
                    mean_error: f64::NAN,
                    std_error: f64::NAN,
                    trials: 0,
                    theory_error: None,
                });
            }
        }
    }
    Ok(ResultTable { rows })
}
