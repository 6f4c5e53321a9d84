//! End-to-end tests of the `denoise-lab` binary: exit codes, output
//! formats, and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use denoise_lab::ResultTable;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_denoise-lab"))
}

struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!(
            "denoise-lab-test-{tag}-{}",
            std::process::id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        Self { dir }
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let path = self.dir.join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

const COR2_CONFIG: &str = "mode = \"cor2\"\nc = 1.0\nc_z = 1.0\nkappa = 3.0\n";

#[test]
fn theory_cor2_succeeds_with_expected_row() {
    let ws = Workspace::new("cor2");
    let config = ws.write("cor2.toml", COR2_CONFIG);
    let out = ws.path("cor2.csv");
    let output = run(&[
        "theory",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let text = read(&out);
    assert_eq!(text.lines().nth(1).unwrap(), "1,1,3,II,1,0.75,0");
}

#[test]
fn unknown_config_key_exits_2() {
    let ws = Workspace::new("unknown-key");
    let config = ws.write("bad.toml", &format!("{COR2_CONFIG}oops = 1\n"));
    let out = ws.path("bad.csv");
    let output = run(&[
        "theory",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
}

#[test]
fn missing_required_field_exits_2() {
    let ws = Workspace::new("missing-field");
    let config = ws.write("bad.toml", "mode = \"cor2\"\nc = 1.0\nkappa = 3.0\n");
    let out = ws.path("bad.csv");
    let output = run(&[
        "theory",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("c_z"));
}

#[test]
fn singular_covariance_exits_3() {
    let ws = Workspace::new("singular");
    let config = ws.write(
        "singular.toml",
        r#"
mode = "thm1"
d = 2
kappa = 2.0
sigma = { kind = "explicit", rows = [[0.0, 0.0], [0.0, 0.0]] }
sigma1 = { kind = "isotropic", variance = 0.0 }
sigma_z = { kind = "isotropic", variance = 1.0 }
"#,
    );
    let out = ws.path("singular.csv");
    let output = run(&[
        "theory",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 3);
    assert!(String::from_utf8_lossy(&output.stderr).contains("singular"));
}

#[test]
fn set_overrides_apply_after_file() {
    let ws = Workspace::new("override");
    let config = ws.write("cor2.toml", COR2_CONFIG);
    let out = ws.path("cor2.csv");
    let output = run(&[
        "theory",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "c_z=2.0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let text = read(&out);
    // (c, c_z, kappa) = (1, 2, 3): sigma_star 5, error 23/24
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("1,2,3,II,5,0.958333333"), "row: {row}");
}

const SIM_CONFIG: &str = r#"
[experiment]
d = 12
kappa = 3.0
trials = 5
master_seed = 9
denoisers = ["wiener", "least_squares", "identity"]
sigma = { kind = "power_law", exponent = 4.0 }
sigma_z = { kind = "isotropic", variance = 1.0 }
batches = [{ sigma = { kind = "isotropic", variance = 1.0 } }]

[sweep]
key = "kappa"
values = [2.0, 3.0]
"#;

#[test]
fn simulate_is_deterministic_and_round_trips() {
    let ws = Workspace::new("simulate");
    let config = ws.write("sim.toml", SIM_CONFIG);
    let out_a = ws.path("a.csv");
    let out_b = ws.path("b.csv");
    for out in [&out_a, &out_b] {
        let output = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_exit(&output, 0);
    }
    let text_a = read(&out_a);
    assert_eq!(text_a, read(&out_b), "same seed must give identical bytes");
    assert!(text_a.ends_with('\n'));
    assert!(!text_a.contains('\r'), "LF line endings only");

    let table = ResultTable::from_csv(&text_a).unwrap();
    assert_eq!(table.rows.len(), 6);
    assert!(table.content_eq(&ResultTable::from_csv(&table.to_csv()).unwrap()));

    // JSON carries the same numbers.
    let out_json = ws.path("a.json");
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "json",
        "--out",
        out_json.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let from_json = ResultTable::from_json(&read(&out_json)).unwrap();
    assert!(table.content_eq(&from_json));
}

#[test]
fn thread_cap_does_not_change_results() {
    let ws = Workspace::new("threads");
    let config = ws.write("sim.toml", SIM_CONFIG);
    let out_par = ws.path("par.csv");
    let out_one = ws.path("one.csv");
    assert_exit(
        &run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_par.to_str().unwrap(),
        ]),
        0,
    );
    let output = bin()
        .env("DENOISE_LAB_THREADS", "1")
        .args([
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_one.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert_exit(&output, 0);
    assert_eq!(read(&out_par), read(&out_one));
}

#[test]
fn simulate_seed_flag_changes_results() {
    let ws = Workspace::new("seed-flag");
    let config = ws.write("sim.toml", SIM_CONFIG);
    let out_a = ws.path("a.csv");
    let out_b = ws.path("b.csv");
    assert_exit(
        &run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_a.to_str().unwrap(),
        ]),
        0,
    );
    assert_exit(
        &run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "1234",
            "--out",
            out_b.to_str().unwrap(),
        ]),
        0,
    );
    assert_ne!(read(&out_a), read(&out_b));
}

#[test]
fn simulate_dumps_denoiser_matrices() {
    let ws = Workspace::new("dump");
    let config = ws.write("sim.toml", SIM_CONFIG);
    let out = ws.path("table.csv");
    let dump = ws.path("matrices");
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dump-denoisers",
        dump.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    for name in ["wiener", "least_squares", "identity"] {
        let matrix = read(&dump.join(format!("{name}.csv")));
        let rows: Vec<&str> = matrix.lines().collect();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0].split(',').count(), 12);
        for field in rows.iter().flat_map(|r| r.split(',')) {
            field.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn optimize_scalar_reports_sigma_star_five() {
    let ws = Workspace::new("optimize");
    let config = ws.write(
        "opt.toml",
        "mode = \"oracle\"\nd = 40\nkappa = 3.0\nc = 1.0\nc_z = 2.0\n",
    );
    let out = ws.path("opt.json");
    let output = run(&[
        "optimize",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let value: serde_json::Value = serde_json::from_str(&read(&out)).unwrap();
    let sigma_star = value["sigma_star"].as_f64().unwrap();
    assert!((sigma_star - 5.0).abs() < 5e-3, "sigma_star {sigma_star}");
    assert!(String::from_utf8_lossy(&output.stdout).contains("sigma_star"));
}

#[test]
fn phase_diagram_rows_and_empty_grid() {
    let ws = Workspace::new("phase");
    let config = ws.write(
        "phase.toml",
        "c = 1.0\nc_z = { min = 5.0, max = 5.0, count = 1 }\nkappa = { min = 1.2, max = 1.2, count = 1 }\n",
    );
    let out = ws.path("phase.csv");
    let output = run(&[
        "phase-diagram",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let text = read(&out);
    assert_eq!(text.lines().next().unwrap(), "c_z,kappa,region,error");
    assert_eq!(text.lines().nth(1).unwrap(), "5,1.2,I,1");

    let empty = ws.write(
        "empty.toml",
        "c = 1.0\nc_z = { min = 5.0, max = 5.0, count = 0 }\nkappa = { min = 1.2, max = 1.2, count = 1 }\n",
    );
    let output = run(&[
        "phase-diagram",
        "--config",
        empty.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
}

#[test]
fn compare_emits_summary_comment() {
    let ws = Workspace::new("compare");
    // Small instance: just exercises the plumbing and the summary line.
    let config = ws.write(
        "compare.toml",
        r#"
d = 12
n = 30
c_values = [0.5, 4.0]
wishart_seed = 2
trials = 3
master_seed = 5
"#,
    );
    let out = ws.path("compare.csv");
    let output = run(&[
        "compare",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let text = read(&out);
    let comment = text.lines().last().unwrap();
    assert!(comment.starts_with("# "), "summary comment missing: {comment}");
    // The comment does not break re-parsing.
    let table = ResultTable::from_csv(&text).unwrap();
    assert_eq!(table.rows.len(), 8);
    for c in [0.5, 4.0] {
        for name in [
            "least_squares_optimized_sigma1",
            "empirical_wiener",
            "wiener",
            "identity",
        ] {
            assert!(
                table
                    .rows
                    .iter()
                    .any(|r| r.sweep_key == c && r.denoiser == name),
                "missing row {name} at c {c}"
            );
        }
    }
}
