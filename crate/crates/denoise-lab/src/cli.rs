//! Config-file front end behind the `denoise-lab` binary.
//!
//! Every subcommand reads one TOML document, validated strictly: unknown
//! keys are a hard error, so a typo never silently falls back to a default.
//! `--set key=value` overrides (dotted paths) apply after the file parses.
//! Tables are written as CSV or JSON with identical numeric content; exit
//! codes are 0 on success, 2 for configuration errors, 3 for numerical
//! failures.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::optimizer::{optimize_sigma1_empirical, optimize_sigma1_oracle, PgdConfig};
use crate::simulate::{
    resolve_batch_sizes, run_experiment, sample_data, sweep, BatchNoise, DenoiserSelect,
    ExperimentConfig, FeatureDistribution, ResultTable, SweepKey,
};
use crate::theory::{self, SigmaStar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// A scalar or a list of scalars; config files may write either.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

/// Loads a TOML config, applies `--set key=value` overrides (dotted paths),
/// and deserializes strictly.
pub fn load_config<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

pub fn parse_config<T: DeserializeOwned>(text: &str, overrides: &[String]) -> Result<T> {
    let mut value: toml::Value =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for entry in overrides {
        apply_override(&mut value, entry)?;
    }
    let rendered = toml::to_string(&value).map_err(|e| Error::Config(e.to_string()))?;
    toml::from_str(&rendered).map_err(|e| Error::Config(e.to_string()))
}

fn apply_override(root: &mut toml::Value, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{entry}' is not KEY=VALUE")))?;
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut table) => table.remove("v").expect("key v just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let table = cursor.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override path '{path}' does not address a table"))
        })?;
        if i + 1 == segments.len() {
            table.insert(segment.to_string(), parsed);
            return Ok(());
        }
        cursor = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

/// Output of a subcommand: the file content plus an optional human summary
/// printed to stdout.
pub struct CommandOutput {
    pub content: String,
    pub summary: Option<String>,
}

// ---------------------------------------------------------------------------
// generic table rendering

pub(crate) enum Cell {
    Num(f64),
    Text(String),
}

pub(crate) struct TextTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl TextTable {
    fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) if v.is_finite() => format!("{v}"),
                    Cell::Num(_) => String::new(),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut object = serde_json::Map::new();
                for (key, cell) in self.header.iter().zip(row) {
                    let value = match cell {
                        Cell::Num(v) => serde_json::Number::from_f64(*v)
                            .map(serde_json::Value::Number)
                            .unwrap_or(serde_json::Value::Null),
                        Cell::Text(t) => serde_json::Value::String(t.clone()),
                    };
                    object.insert((*key).to_string(), value);
                }
                serde_json::Value::Object(object)
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("table serializes")
    }

    fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

fn render_result_table(table: &ResultTable, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Json => table.to_json(),
    }
}

// ---------------------------------------------------------------------------
// theory

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoryMode {
    Thm1,
    Thm2,
    Cor2,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    pub mode: TheoryMode,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub kappa: Option<OneOrMany>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub sigma: Option<CovarianceModel>,
    #[serde(default)]
    pub sigma1: Option<CovarianceModel>,
    #[serde(default)]
    pub sigma_z: Option<CovarianceModel>,
    #[serde(default)]
    pub batches: Option<Vec<BatchNoise>>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub c_z: Option<OneOrMany>,
}

fn require<T>(value: Option<T>, name: &str, mode: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("{mode} mode requires '{name}'")))
}

fn kappa_grid(config: &TheoryConfig, d: usize) -> Result<Vec<(f64, usize)>> {
    match (&config.kappa, config.n) {
        (Some(kappas), None) => kappas
            .values()
            .iter()
            .map(|&k| {
                if !(k.is_finite() && k > 1.0) {
                    return Err(Error::Config(format!("kappa must exceed 1, got {k}")));
                }
                let n = (k * d as f64).round() as usize;
                Ok((k, n))
            })
            .collect(),
        (None, Some(n)) => Ok(vec![(n as f64 / d as f64, n)]),
        (Some(_), Some(_)) => Err(Error::Config(
            "give either kappa or n, not both".into(),
        )),
        (None, None) => Err(Error::Config("either kappa or n is required".into())),
    }
}

/// One row of closed-form predictions per grid point.
pub fn cmd_theory(config: &TheoryConfig, format: OutputFormat) -> Result<CommandOutput> {
    let table = match config.mode {
        TheoryMode::Thm1 => {
            let d = require(config.d, "d", "thm1")?;
            let sigma = require(config.sigma.as_ref(), "sigma", "thm1")?.materialize(d)?;
            let sigma1 = require(config.sigma1.as_ref(), "sigma1", "thm1")?.materialize(d)?;
            let sigma_z = require(config.sigma_z.as_ref(), "sigma_z", "thm1")?.materialize(d)?;
            let mut table =
                TextTable::new(vec!["kappa", "n", "d", "error", "bias", "variance"]);
            for (kappa, n) in kappa_grid(config, d)? {
                let p = theory::thm1_error(&sigma, &sigma1, &sigma_z, n, d)?;
                table.push(vec![
                    Cell::Num(kappa),
                    Cell::Num(n as f64),
                    Cell::Num(d as f64),
                    Cell::Num(p.error),
                    Cell::Num(p.bias),
                    Cell::Num(p.variance),
                ]);
            }
            table
        }
        TheoryMode::Thm2 => {
            let d = require(config.d, "d", "thm2")?;
            let sigma = require(config.sigma.as_ref(), "sigma", "thm2")?.materialize(d)?;
            let sigma_z = require(config.sigma_z.as_ref(), "sigma_z", "thm2")?.materialize(d)?;
            let batches = require(config.batches.clone(), "batches", "thm2")?;
            let mut table =
                TextTable::new(vec!["kappa", "n", "d", "error", "bias", "variance"]);
            for (kappa, n) in kappa_grid(config, d)? {
                let resolved = resolve_batch_sizes(&batches, n)?;
                let p = theory::thm2_error(&resolved, &sigma, &sigma_z, n, d)?;
                table.push(vec![
                    Cell::Num(kappa),
                    Cell::Num(n as f64),
                    Cell::Num(d as f64),
                    Cell::Num(p.error),
                    Cell::Num(p.bias),
                    Cell::Num(p.variance),
                ]);
            }
            table
        }
        TheoryMode::Cor2 => {
            let c = require(config.c, "c", "cor2")?;
            let c_z = require(config.c_z.as_ref(), "c_z", "cor2")?.values();
            let kappas = require(config.kappa.as_ref(), "kappa", "cor2")?.values();
            let mut table = TextTable::new(vec![
                "c",
                "c_z",
                "kappa",
                "region",
                "sigma_star",
                "error",
                "boundary",
            ]);
            for &cz in &c_z {
                for &kappa in &kappas {
                    let opt = theory::cor2_optimal(c, cz, kappa)?;
                    table.push(vec![
                        Cell::Num(c),
                        Cell::Num(cz),
                        Cell::Num(kappa),
                        Cell::Text(opt.region.to_string()),
                        match opt.sigma_star {
                            SigmaStar::Finite(v) => Cell::Num(v),
                            SigmaStar::Unbounded => Cell::Text("unbounded".into()),
                        },
                        Cell::Num(opt.error),
                        Cell::Num(if opt.boundary { 1.0 } else { 0.0 }),
                    ]);
                }
            }
            table
        }
    };
    Ok(CommandOutput {
        content: table.render(format),
        summary: None,
    })
}

// ---------------------------------------------------------------------------
// phase diagram

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridRange {
    pub fn points(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::Config("grid count must be at least 1".into()));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.max >= self.min) {
            return Err(Error::Config(format!(
                "bad grid range [{}, {}]",
                self.min, self.max
            )));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        Ok((0..self.count).map(|i| self.min + step * i as f64).collect())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    pub c: f64,
    pub c_z: GridRange,
    pub kappa: GridRange,
}

/// Row-major grid over `(c_z, kappa)` with the region tag and the optimal
/// risk at each point.
pub fn cmd_phase_diagram(
    config: &PhaseDiagramConfig,
    format: OutputFormat,
) -> Result<CommandOutput> {
    let c_z = config.c_z.points()?;
    let kappa = config.kappa.points()?;
    let mut table = TextTable::new(vec!["c_z", "kappa", "region", "error"]);
    for &cz in &c_z {
        for &k in &kappa {
            let opt = theory::cor2_optimal(config.c, cz, k)?;
            table.push(vec![
                Cell::Num(cz),
                Cell::Num(k),
                Cell::Text(opt.region.to_string()),
                Cell::Num(opt.error),
            ]);
        }
    }
    Ok(CommandOutput {
        content: table.render(format),
        summary: None,
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

/// Runs the experiment (or sweep) and renders the result table.
pub fn cmd_simulate(
    config: &SimulateConfig,
    format: OutputFormat,
    seed: Option<u64>,
) -> Result<CommandOutput> {
    let mut experiment = config.experiment.clone();
    if let Some(seed) = seed {
        experiment.master_seed = seed;
    }
    let table = match &config.sweep {
        Some(sweep_config) => {
            let key = SweepKey::parse(&sweep_config.key)?;
            sweep(&experiment, key, &sweep_config.values)?
        }
        None => run_experiment(&experiment)?,
    };
    Ok(CommandOutput {
        content: render_result_table(&table, format),
        summary: None,
    })
}

/// Trains each requested denoiser once (trial 0) and writes every matrix as
/// a CSV file under `dir`, row-major at full precision.
pub fn dump_denoisers(config: &SimulateConfig, seed: Option<u64>, dir: &Path) -> Result<()> {
    let mut experiment = config.experiment.clone();
    if let Some(seed) = seed {
        experiment.master_seed = seed;
    }
    std::fs::create_dir_all(dir)?;
    let trained = crate::simulate::train_once(&experiment, 0)?;
    for (select, denoiser) in trained {
        let path = dir.join(format!("{}.csv", select.name()));
        let mut file = std::fs::File::create(path)?;
        denoiser.write_csv(&mut file)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// optimize

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMode {
    Oracle,
    Empirical,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub mode: OptimizeMode,
    pub d: usize,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    /// Shortcut for `sigma = (c/d) I`.
    #[serde(default)]
    pub c: Option<f64>,
    /// Shortcut for `sigma_z = (c_z/d) I`.
    #[serde(default)]
    pub c_z: Option<f64>,
    #[serde(default)]
    pub sigma: Option<CovarianceModel>,
    #[serde(default)]
    pub sigma_z: Option<CovarianceModel>,
    #[serde(default)]
    pub feature_distribution: FeatureDistribution,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub pgd: PgdConfig,
}

impl OptimizeConfig {
    fn resolved_n(&self) -> Result<usize> {
        match (self.n, self.kappa) {
            (Some(n), None) => Ok(n),
            (None, Some(k)) => Ok((k * self.d as f64).round() as usize),
            (Some(n), Some(k)) => {
                if n == (k * self.d as f64).round() as usize {
                    Ok(n)
                } else {
                    Err(Error::Config("n conflicts with kappa * d".into()))
                }
            }
            (None, None) => Err(Error::Config("either n or kappa is required".into())),
        }
    }

    fn signal_model(&self) -> Result<CovarianceModel> {
        match (&self.sigma, self.c) {
            (Some(model), None) => Ok(model.clone()),
            (None, Some(c)) => Ok(CovarianceModel::ScalarNormalized { c }),
            (Some(_), Some(_)) => Err(Error::Config("give either sigma or c, not both".into())),
            (None, None) => Err(Error::Config("either sigma or c is required".into())),
        }
    }

    fn noise_model(&self) -> Result<CovarianceModel> {
        match (&self.sigma_z, self.c_z) {
            (Some(model), None) => Ok(model.clone()),
            (None, Some(c)) => Ok(CovarianceModel::ScalarNormalized { c }),
            (Some(_), Some(_)) => {
                Err(Error::Config("give either sigma_z or c_z, not both".into()))
            }
            (None, None) => Err(Error::Config("either sigma_z or c_z is required".into())),
        }
    }
}

/// Runs the optimizer and reports the spectrum, objective, and the implied
/// scalar training-noise scale `d * mean(lambda)`.
pub fn cmd_optimize(
    config: &OptimizeConfig,
    format: OutputFormat,
    seed: Option<u64>,
) -> Result<CommandOutput> {
    let d = config.d;
    let n = config.resolved_n()?;
    let sigma = config.signal_model()?.materialize(d)?;
    let sigma_z = config.noise_model()?.materialize(d)?;
    let result = match config.mode {
        OptimizeMode::Oracle => optimize_sigma1_oracle(&sigma, &sigma_z, n, d, &config.pgd)?,
        OptimizeMode::Empirical => {
            let master_seed = seed.unwrap_or(config.master_seed);
            let x = sample_data(
                &sigma,
                n,
                d,
                config.feature_distribution,
                crate::simulate::stream_seed(master_seed, 0, "data"),
            )?;
            optimize_sigma1_empirical(&x, &sigma_z, &config.pgd)?
        }
    };
    let sigma_star =
        result.eigenvalues.iter().sum::<f64>() / result.eigenvalues.len() as f64 * d as f64;
    let summary = format!(
        "objective {:.6e}, sigma_star {:.6} ({} iterations, converged: {}{})",
        result.objective,
        sigma_star,
        result.iterations,
        result.converged,
        if result.unbounded { ", boundary: unbounded" } else { "" },
    );
    let content = match format {
        OutputFormat::Json => {
            let mut value = serde_json::to_value(&result).expect("result serializes");
            value
                .as_object_mut()
                .expect("object")
                .insert("sigma_star".into(), serde_json::json!(sigma_star));
            serde_json::to_string_pretty(&value).expect("result serializes")
        }
        OutputFormat::Csv => {
            let mut table = TextTable::new(vec![
                "index",
                "eigenvalue",
                "objective",
                "sigma_star",
                "iterations",
                "converged",
            ]);
            for (i, &lambda) in result.eigenvalues.iter().enumerate() {
                table.push(vec![
                    Cell::Num(i as f64),
                    Cell::Num(lambda),
                    Cell::Num(result.objective),
                    Cell::Num(sigma_star),
                    Cell::Num(result.iterations as f64),
                    Cell::Num(if result.converged { 1.0 } else { 0.0 }),
                ]);
            }
            table.to_csv()
        }
    };
    Ok(CommandOutput {
        content,
        summary: Some(summary),
    })
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub d: usize,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    /// Signal scale values for the non-diagonal Wishart covariance sweep.
    pub c_values: Vec<f64>,
    #[serde(default)]
    pub wishart_seed: u64,
    #[serde(default = "default_noise")]
    pub sigma_z: CovarianceModel,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub pgd: PgdConfig,
}

fn default_noise() -> CovarianceModel {
    CovarianceModel::Isotropic { variance: 1.0 }
}

/// Sweeps the Wishart signal scale and pits the optimized-training-noise
/// denoiser against the empirical Wiener filter, the true Wiener filter,
/// and the identity.
pub fn cmd_compare(
    config: &CompareConfig,
    format: OutputFormat,
    seed: Option<u64>,
) -> Result<CommandOutput> {
    if config.c_values.is_empty() {
        return Err(Error::Config("c_values must be non-empty".into()));
    }
    let experiment = ExperimentConfig {
        d: config.d,
        kappa: config.kappa,
        n: config.n,
        batches: vec![BatchNoise {
            n: None,
            sigma: config.sigma_z.clone(),
        }],
        sigma: CovarianceModel::ScaledWishart {
            c: 1.0,
            seed: config.wishart_seed,
        },
        sigma_z: config.sigma_z.clone(),
        feature_distribution: FeatureDistribution::Gaussian,
        denoisers: vec![
            DenoiserSelect::LeastSquaresOptimizedSigma1,
            DenoiserSelect::EmpiricalWiener,
            DenoiserSelect::Wiener,
            DenoiserSelect::Identity,
        ],
        trials: config.trials,
        master_seed: seed.unwrap_or(config.master_seed),
        sigma1_scale: 1.0,
        pgd: config.pgd.clone(),
    };
    let table = sweep(&experiment, SweepKey::C, &config.c_values)?;
    let mut winning = Vec::new();
    for &c in &config.c_values {
        let mean_of = |name: &str| {
            table
                .rows
                .iter()
                .find(|r| r.sweep_key == c && r.denoiser == name)
                .map(|r| r.mean_error)
        };
        if let (Some(optimized), Some(empirical)) =
            (mean_of("least_squares_optimized_sigma1"), mean_of("empirical_wiener"))
        {
            if optimized < empirical {
                winning.push(format!("{c}"));
            }
        }
    }
    let summary = if winning.is_empty() {
        "optimized least-squares never beats the empirical Wiener filter on this sweep"
            .to_string()
    } else {
        format!(
            "optimized least-squares beats the empirical Wiener filter at c = {}",
            winning.join(", ")
        )
    };
    let mut content = render_result_table(&table, format);
    if format == OutputFormat::Csv {
        let _ = writeln!(content, "# {summary}");
    }
    Ok(CommandOutput {
        content,
        summary: Some(summary),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_paths_apply_after_parse() {
        let text = "mode = \"cor2\"\nc = 1.0\nc_z = 1.0\nkappa = 3.0\n";
        let config: TheoryConfig =
            parse_config(text, &["c_z=2.0".to_string(), "kappa=[3.0, 4.0]".to_string()])
                .unwrap();
        assert_eq!(config.c_z.unwrap().values(), vec![2.0]);
        assert_eq!(config.kappa.unwrap().values(), vec![3.0, 4.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "mode = \"cor2\"\nc = 1.0\nc_z = 1.0\nkappa = 3.0\ntypo_key = 1\n";
        let err = parse_config::<TheoryConfig>(text, &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("typo_key"), "{err}");
    }

    #[test]
    fn theory_cor2_row_matches_closed_form() {
        let config: TheoryConfig = parse_config(
            "mode = \"cor2\"\nc = 1.0\nc_z = 1.0\nkappa = 3.0\n",
            &[],
        )
        .unwrap();
        let output = cmd_theory(&config, OutputFormat::Csv).unwrap();
        let line = output.content.lines().nth(1).unwrap();
        assert_eq!(line, "1,1,3,II,1,0.75,0");
    }

    #[test]
    fn theory_thm1_identity_case() {
        let text = r#"
mode = "thm1"
d = 50
kappa = 2.0
sigma = { kind = "isotropic", variance = 1.0 }
sigma1 = { kind = "isotropic", variance = 1.0 }
sigma_z = { kind = "isotropic", variance = 1.0 }
"#;
        let config: TheoryConfig = parse_config(text, &[]).unwrap();
        let output = cmd_theory(&config, OutputFormat::Csv).unwrap();
        let error: f64 = output
            .content
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(3)
            .unwrap()
            .parse()
            .unwrap();
        assert!((error - 50.0).abs() < 1e-9);
    }

    #[test]
    fn theory_thm2_matches_thm1_for_single_batch() {
        let thm1: TheoryConfig = parse_config(
            r#"
mode = "thm1"
d = 20
kappa = 2.5
sigma = { kind = "power_law", exponent = 4.0 }
sigma1 = { kind = "isotropic", variance = 1.0 }
sigma_z = { kind = "isotropic", variance = 0.5 }
"#,
            &[],
        )
        .unwrap();
        let thm2: TheoryConfig = parse_config(
            r#"
mode = "thm2"
d = 20
kappa = 2.5
sigma = { kind = "power_law", exponent = 4.0 }
sigma_z = { kind = "isotropic", variance = 0.5 }
batches = [{ sigma = { kind = "isotropic", variance = 1.0 } }]
"#,
            &[],
        )
        .unwrap();
        let a = cmd_theory(&thm1, OutputFormat::Csv).unwrap().content;
        let b = cmd_theory(&thm2, OutputFormat::Csv).unwrap().content;
        let parse_error = |s: &str| -> f64 {
            s.lines()
                .nth(1)
                .unwrap()
                .split(',')
                .nth(3)
                .unwrap()
                .parse()
                .unwrap()
        };
        let (e1, e2) = (parse_error(&a), parse_error(&b));
        assert!((e1 - e2).abs() <= 1e-8 * e1.abs(), "{e1} vs {e2}");
    }

    #[test]
    fn phase_diagram_grid_covers_all_regions() {
        let config: PhaseDiagramConfig = parse_config(
            "c = 1.0\nc_z = { min = 0.2, max = 6.0, count = 10 }\nkappa = { min = 1.1, max = 5.0, count = 10 }\n",
            &[],
        )
        .unwrap();
        let output = cmd_phase_diagram(&config, OutputFormat::Csv).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for line in output.content.lines().skip(1) {
            let region = line.split(',').nth(2).unwrap();
            assert!(["I", "II", "III"].contains(&region), "region {region}");
            seen.insert(region.to_string());
        }
        assert_eq!(seen.len(), 3, "expected all three regions on the grid");
        assert_eq!(output.content.lines().count(), 101);
    }

    #[test]
    fn phase_diagram_named_point() {
        let config: PhaseDiagramConfig = parse_config(
            "c = 1.0\nc_z = { min = 5.0, max = 5.0, count = 1 }\nkappa = { min = 1.2, max = 1.2, count = 1 }\n",
            &[],
        )
        .unwrap();
        let output = cmd_phase_diagram(&config, OutputFormat::Csv).unwrap();
        assert_eq!(output.content.lines().nth(1).unwrap(), "5,1.2,I,1");
    }

    #[test]
    fn phase_diagram_rejects_empty_grid() {
        let config = PhaseDiagramConfig {
            c: 1.0,
            c_z: GridRange {
                min: 0.2,
                max: 6.0,
                count: 0,
            },
            kappa: GridRange {
                min: 1.1,
                max: 5.0,
                count: 4,
            },
        };
        assert!(cmd_phase_diagram(&config, OutputFormat::Csv).is_err());
    }

    #[test]
    fn csv_and_json_carry_identical_numbers() {
        let config: TheoryConfig = parse_config(
            "mode = \"cor2\"\nc = 1.0\nc_z = [1.0, 2.0]\nkappa = [3.0, 4.0]\n",
            &[],
        )
        .unwrap();
        let csv = cmd_theory(&config, OutputFormat::Csv).unwrap().content;
        let json = cmd_theory(&config, OutputFormat::Json).unwrap().content;
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&json).unwrap();
        let csv_rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(parsed.len(), csv_rows.len());
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        for (row_json, row_csv) in parsed.iter().zip(csv_rows) {
            for (key, field) in header.iter().zip(row_csv.split(',')) {
                match &row_json[key] {
                    serde_json::Value::Number(num) => {
                        let from_csv: f64 = field.parse().unwrap();
                        assert_eq!(from_csv, num.as_f64().unwrap());
                    }
                    serde_json::Value::String(s) => assert_eq!(s, field),
                    serde_json::Value::Null => assert!(field.is_empty()),
                    other => panic!("unexpected cell {other:?}"),
                }
            }
        }
    }

    #[test]
    fn optimize_scalar_reports_sigma_star() {
        let config: OptimizeConfig = parse_config(
            "mode = \"oracle\"\nd = 40\nkappa = 3.0\nc = 1.0\nc_z = 2.0\n",
            &[],
        )
        .unwrap();
        let output = cmd_optimize(&config, OutputFormat::Json, None).unwrap();
        let value: serde_json::Value = serde_json::from_str(&output.content).unwrap();
        let sigma_star = value["sigma_star"].as_f64().unwrap();
        assert!((sigma_star - 5.0).abs() < 5e-3, "sigma_star {sigma_star}");
        assert!(value["trajectory"].is_array());
        assert!(value["eigenvalues"].as_array().unwrap().len() == 40);
    }
}
