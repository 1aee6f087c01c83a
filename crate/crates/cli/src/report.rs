//! Result serialization: fixed-layout CSV tables, optional JSON
//! mirrors, and the JSON run manifest.
//!
//! Column order is part of the CLI contract; downstream plotting keys on
//! the header names.  Reruns with the same config and seed must produce
//! byte-identical tables, so every float goes through the shortest
//! round-trip formatting of the standard library.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::json;

use crate::config::SweepConfig;
use crate::pipeline::{Evaluation, MonteCarloOutput, RankedRow, SweepOutput};
use crate::CliError;

/// File format for the tabular outputs; the manifest is always JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Which tables a subcommand emits; the manifest is always written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableSet {
    /// Evaluation rows and their allocations (the evaluate subcommand).
    Results,
    /// The per-point ranking only (the rank subcommand).
    Ranked,
    /// Everything (the sweep subcommand).
    Full,
}

pub const RESULTS_COLUMNS: [&str; 12] = [
    "sweep_param",
    "sweep_value",
    "eta",
    "n_bar",
    "m_tot",
    "criterion",
    "spec",
    "det",
    "gamma",
    "delta_det",
    "confidence",
    "decision",
];

pub const ALLOCATIONS_COLUMNS: [&str; 8] = [
    "sweep_param",
    "sweep_value",
    "eta",
    "n_bar",
    "m_tot",
    "spec",
    "operator",
    "count",
];

pub const RANKED_COLUMNS: [&str; 13] = [
    "sweep_param",
    "sweep_value",
    "eta",
    "n_bar",
    "m_tot",
    "rank",
    "criterion",
    "spec",
    "det",
    "gamma",
    "delta_det",
    "confidence",
    "decision",
];

pub const TRIALS_COLUMNS: [&str; 4] = ["trial", "seed", "det", "delta_det"];

pub const OPERATORS_COLUMNS: [&str; 5] =
    ["trial", "operator", "count", "mean", "variance"];

/// Shortest representation that parses back to the same f64; empty for
/// the placeholder rows that carry no number.
fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn io_error(path: &Path, source: io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source }
}

fn csv_error(path: &Path, source: csv::Error) -> CliError {
    io_error(path, io::Error::other(source))
}

fn open_csv(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<'a, I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut writer = open_csv(path)?;
    writer.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| io_error(path, e))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| io_error(path, io::Error::other(e)))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn point_fields(row: &Evaluation, sweep_param: &str) -> Vec<String> {
    vec![
        sweep_param.to_string(),
        fmt(row.point.sweep_value),
        fmt(row.point.eta),
        fmt(row.point.n_bar),
        fmt(row.point.m_tot),
    ]
}

pub fn write_results_csv(
    path: &Path,
    sweep_param: &str,
    rows: &[Evaluation],
) -> Result<(), CliError> {
    write_rows(
        path,
        &RESULTS_COLUMNS,
        rows.iter().map(|row| {
            let mut record = point_fields(row, sweep_param);
            record.extend([
                row.criterion.clone(),
                row.spec.to_string(),
                fmt(row.det),
                fmt(row.gamma),
                fmt(row.delta_det),
                fmt(row.confidence),
                row.decision.as_str().to_string(),
            ]);
            record
        }),
    )
}

pub fn write_allocations_csv(
    path: &Path,
    sweep_param: &str,
    rows: &[Evaluation],
) -> Result<(), CliError> {
    write_rows(
        path,
        &ALLOCATIONS_COLUMNS,
        rows.iter().flat_map(|row| {
            let prefix = point_fields(row, sweep_param);
            row.allocation.iter().map(move |(key, count)| {
                let mut record = prefix.clone();
                record.extend([row.spec.to_string(), key.to_string(), fmt(*count)]);
                record
            })
        }),
    )
}

pub fn write_ranked_csv(
    path: &Path,
    sweep_param: &str,
    rows: &[RankedRow],
) -> Result<(), CliError> {
    write_rows(
        path,
        &RANKED_COLUMNS,
        rows.iter().map(|row| {
            vec![
                sweep_param.to_string(),
                fmt(row.point.sweep_value),
                fmt(row.point.eta),
                fmt(row.point.n_bar),
                fmt(row.point.m_tot),
                row.rank.to_string(),
                row.criterion.clone(),
                row.spec.clone(),
                fmt(row.det),
                fmt(row.gamma),
                fmt(row.delta_det),
                fmt(row.confidence),
                row.decision.as_str().to_string(),
            ]
        }),
    )
}

fn results_json(sweep_param: &str, rows: &[Evaluation]) -> serde_json::Value {
    json!(rows
        .iter()
        .map(|row| {
            json!({
                "sweep_param": sweep_param,
                "sweep_value": row.point.sweep_value,
                "eta": row.point.eta,
                "n_bar": row.point.n_bar,
                "m_tot": row.point.m_tot,
                "criterion": row.criterion,
                "spec": row.spec.to_string(),
                "det": row.det,
                "gamma": row.gamma,
                "delta_det": row.delta_det,
                "confidence": row.confidence,
                "decision": row.decision.as_str(),
                "allocation": row
                    .allocation
                    .iter()
                    .map(|(key, count)| json!({
                        "operator": key.to_string(),
                        "count": count,
                    }))
                    .collect::<Vec<_>>(),
            })
        })
        .collect::<Vec<_>>())
}

fn ranked_json(sweep_param: &str, rows: &[RankedRow]) -> serde_json::Value {
    json!(rows
        .iter()
        .map(|row| {
            json!({
                "sweep_param": sweep_param,
                "sweep_value": row.point.sweep_value,
                "eta": row.point.eta,
                "n_bar": row.point.n_bar,
                "m_tot": row.point.m_tot,
                "rank": row.rank,
                "criterion": row.criterion,
                "spec": row.spec,
                "det": finite_or_null(row.det),
                "gamma": finite_or_null(row.gamma),
                "delta_det": finite_or_null(row.delta_det),
                "confidence": finite_or_null(row.confidence),
                "decision": row.decision.as_str(),
            })
        })
        .collect::<Vec<_>>())
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() { json!(x) } else { serde_json::Value::Null }
}

/// The run manifest: everything needed to reproduce the tables.
fn manifest(
    config: &SweepConfig,
    output: &SweepOutput,
    seed: u64,
    threads: Option<usize>,
    wall_time: Duration,
    files: &[PathBuf],
) -> serde_json::Value {
    json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "tool": "npt-search",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "threads": threads,
        "wall_time_ms": wall_time.as_millis() as u64,
        "config": config,
        "family": output.context.family_id,
        "sweep_param": output.context.sweep_parameter,
        "truncation": output
            .context
            .values
            .iter()
            .zip(&output.context.configs)
            .map(|(value, config)| json!({
                "sweep_value": value,
                "dim_a": config.dim_a,
                "dim_b": config.dim_b,
                "tail_tolerance": config.tail_tolerance,
            }))
            .collect::<Vec<_>>(),
        "survivors": output
            .survivors
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
        "result_rows": output.evaluations.len(),
        "ranked_rows": output.ranked.len(),
        "outputs": files
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>(),
    })
}

/// Writes the sweep tables plus the manifest into `out_dir`, returning
/// the paths written.  On failure every file this call created is
/// removed, so a bad run never leaves partial outputs behind.
#[allow(clippy::too_many_arguments)]
pub fn write_sweep(
    out_dir: &Path,
    format: OutputFormat,
    tables: TableSet,
    config: &SweepConfig,
    output: &SweepOutput,
    seed: u64,
    threads: Option<usize>,
    wall_time: Duration,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let mut written = Vec::new();
    let result = write_sweep_files(
        out_dir, format, tables, config, output, seed, threads, wall_time, &mut written,
    );
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        written.clear();
    }
    result.map(|()| written)
}

#[allow(clippy::too_many_arguments)]
fn write_sweep_files(
    out_dir: &Path,
    format: OutputFormat,
    tables: TableSet,
    config: &SweepConfig,
    output: &SweepOutput,
    seed: u64,
    threads: Option<usize>,
    wall_time: Duration,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let param = &output.context.sweep_parameter;
    let results_wanted = matches!(tables, TableSet::Results | TableSet::Full);
    let ranked_wanted = matches!(tables, TableSet::Ranked | TableSet::Full);
    match format {
        OutputFormat::Csv => {
            if results_wanted {
                let results = out_dir.join("results.csv");
                written.push(results.clone());
                write_results_csv(&results, param, &output.evaluations)?;

                let allocations = out_dir.join("allocations.csv");
                written.push(allocations.clone());
                write_allocations_csv(&allocations, param, &output.evaluations)?;
            }
            if ranked_wanted {
                let ranked = out_dir.join("ranked.csv");
                written.push(ranked.clone());
                write_ranked_csv(&ranked, param, &output.ranked)?;
            }
        }
        OutputFormat::Json => {
            if results_wanted {
                let results = out_dir.join("results.json");
                written.push(results.clone());
                write_json(&results, &results_json(param, &output.evaluations))?;
            }
            if ranked_wanted {
                let ranked = out_dir.join("ranked.json");
                written.push(ranked.clone());
                write_json(&ranked, &ranked_json(param, &output.ranked))?;
            }
        }
    }
    let manifest_path = out_dir.join("manifest.json");
    written.push(manifest_path.clone());
    write_json(
        &manifest_path,
        &manifest(config, output, seed, threads, wall_time, written),
    )?;
    Ok(())
}

/// Writes the Monte Carlo audit trail: one row per trial plus one row
/// per (trial, measured operator).
pub fn write_montecarlo(
    out_dir: &Path,
    output: &MonteCarloOutput,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let mut written = Vec::new();
    let result = write_montecarlo_files(out_dir, output, &mut written);
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        written.clear();
    }
    result.map(|()| written)
}

fn write_montecarlo_files(
    out_dir: &Path,
    output: &MonteCarloOutput,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let trials = out_dir.join("trials.csv");
    written.push(trials.clone());
    write_rows(
        &trials,
        &TRIALS_COLUMNS,
        output.trials.iter().map(|t| {
            vec![
                t.trial.to_string(),
                output.master_seed.to_string(),
                fmt(t.determinant),
                fmt(t.delta_det),
            ]
        }),
    )?;

    let operators = out_dir.join("operators.csv");
    written.push(operators.clone());
    write_rows(
        &operators,
        &OPERATORS_COLUMNS,
        output.trials.iter().flat_map(|t| {
            t.operators.iter().map(|op| {
                vec![
                    t.trial.to_string(),
                    op.key.to_string(),
                    op.count.to_string(),
                    fmt(op.mean),
                    fmt(op.variance),
                ]
            })
        }),
    )?;

    let manifest_path = out_dir.join("manifest.json");
    written.push(manifest_path.clone());
    write_json(
        &manifest_path,
        &json!({
            "schema_version": crate::config::SCHEMA_VERSION,
            "tool": "npt-search",
            "version": env!("CARGO_PKG_VERSION"),
            "criterion": output.criterion,
            "spec": output.spec.to_string(),
            "sweep_value": output.point.sweep_value,
            "eta": output.point.eta,
            "n_bar": output.point.n_bar,
            "m_tot": output.point.m_tot,
            "seed": output.master_seed,
            "trials": output.trials.len(),
            "predicted_det": output.det,
            "predicted_delta_det": output.delta_det,
        }),
    )?;
    Ok(())
}
