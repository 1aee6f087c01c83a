//! End-to-end checks of the installed binary: argument handling, output
//! files, exit codes, and byte-level determinism of repeated runs.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_npt-search"))
}

/// Fresh scratch directory, unique per test and per process.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("npt-search-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &PathBuf, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

const SMALL_SWEEP: &str = r#"
schema_version = 1

[family]
name = "tmsv"

[sweep]
values = [0.25, 0.5]

[search]
d_max = 5
n_max = 2

[noise]
eta = [0.8]
n_bar = [0.0]

[budget]
m_tot = [200.0]

[montecarlo]
criterion = "D_I"
"#;

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn catalog_lists_named_criteria() {
    let output = binary().arg("catalog").output().unwrap();
    assert!(output.status.success());
    let stdout = stdout_of(&output);
    assert!(stdout.lines().any(|l| l == "D_I\t(3,5)"), "{stdout}");
    assert!(stdout.lines().any(|l| l == "S_III\t(1,5,13)"), "{stdout}");
}

#[test]
fn enumerate_prints_every_spec_in_bounds() {
    let dir = scratch("enumerate");
    let config = write_config(&dir, SMALL_SWEEP);
    let output = binary()
        .args(["enumerate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = stdout_of(&output);
    assert_eq!(stdout.lines().count(), 31, "{stdout}");
    assert!(stdout.lines().any(|l| l == "(3,5)\tD_I"), "{stdout}");
}

#[test]
fn sweep_writes_every_table_and_is_byte_deterministic() {
    let dir = scratch("sweep");
    let config = write_config(&dir, SMALL_SWEEP);
    let run = |out: &str| {
        let out_dir = dir.join(out);
        let output = binary()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        out_dir
    };
    let first = run("first");
    for file in ["results.csv", "allocations.csv", "ranked.csv", "manifest.json"] {
        assert!(first.join(file).is_file(), "{file} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "npt-search");
    assert_eq!(manifest["family"], "tmsv");
    assert!(manifest["survivors"].as_array().is_some_and(|s| !s.is_empty()));

    let second = run("second");
    for file in ["results.csv", "allocations.csv", "ranked.csv"] {
        assert_eq!(
            fs::read(first.join(file)).unwrap(),
            fs::read(second.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn montecarlo_writes_trial_tables() {
    let dir = scratch("montecarlo");
    let config = write_config(&dir, SMALL_SWEEP);
    let out_dir = dir.join("out");
    let output = binary()
        .args(["montecarlo", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .args(["--trials", "5"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    for file in ["trials.csv", "operators.csv", "manifest.json"] {
        assert!(out_dir.join(file).is_file(), "{file} missing");
    }
    let trials = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 6, "header plus five trials:\n{trials}");
}

#[test]
fn rejected_config_exits_with_code_2() {
    let dir = scratch("badconfig");
    let config = write_config(&dir, "schema_version = 1\n\n[family]\nname = \"warp-core\"\n");
    let output = binary()
        .args(["enumerate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&output.stderr).is_empty());
}

#[test]
fn missing_config_exits_with_code_4() {
    let dir = scratch("missingconfig");
    let output = binary()
        .args(["sweep", "--config"])
        .arg(dir.join("nope.toml"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
}
