//! Run-directory plumbing: the manifest is written *before* any computation,
//! result files after. Result files carry no timestamps, so identical
//! configurations reproduce them byte for byte.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use spde::{ErrorReport, ExperimentConfig, Result};

/// Round-trip-exact float formatting (17 significant digits) for all numeric
/// text output.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn join_floats(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
}

fn join_usize(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// The run directory for one invocation: `<base>/<model>_<axis>_seed<seed>`.
pub fn run_dir(base: &Path, model: &str, axis: &str, seed: u64) -> PathBuf {
    base.join(format!("{model}_{axis}_seed{seed}"))
}

/// Canonical `key=value` lines describing the science-relevant configuration.
/// Sorted, joined with newlines, and hashed; the hash is therefore stable
/// across runs, machines, and thread counts for identical configurations.
/// Plumbing (output directory, thread count, timestamps) is excluded.
pub fn config_lines(command: &str, axis: Option<&str>, cfg: &ExperimentConfig, sigma: f64) -> Vec<String> {
    let mut lines = vec![
        format!("command={command}"),
        format!("datum={}", cfg.datum.label()),
        format!("error_time={}", cfg.error_time.label()),
        format!("holder_lags={}", join_floats(&cfg.holder_lags)),
        format!("horizon={}", fmt_f64(cfg.horizon)),
        format!("j_modes={}", cfg.j_modes),
        format!("k_ref={}", cfg.k_ref),
        format!("m_factor={}", cfg.m_factor),
        format!("model={}", cfg.model),
        format!("n_ref={}", cfg.n_ref),
        format!("p={}", cfg.p),
        format!("samples={}", cfg.samples),
        format!("seed={}", cfg.seed),
        format!("sigma={}", fmt_f64(sigma)),
        format!("sweep_k={}", join_usize(&cfg.sweep_k)),
        format!("sweep_n={}", join_usize(&cfg.sweep_n)),
    ];
    if let Some(axis) = axis {
        lines.push(format!("mode={axis}"));
    }
    lines.sort();
    lines
}

pub fn config_hash(lines: &[String]) -> String {
    let blob = lines.join("\n");
    let digest = Sha256::digest(blob.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<&'a str>,
    config: &'a ExperimentConfig,
    sigma: f64,
    config_hash: String,
    created: String,
    output_dir: String,
    threads: usize,
    version: &'a str,
}

/// Write `manifest.json` into the run directory; returns the config hash.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    axis: Option<&str>,
    cfg: &ExperimentConfig,
    sigma: f64,
    threads: usize,
) -> Result<String> {
    let lines = config_lines(command, axis, cfg, sigma);
    let hash = config_hash(&lines);
    let manifest = Manifest {
        command,
        mode: axis,
        config: cfg,
        sigma,
        config_hash: hash.clone(),
        created: chrono::Utc::now().to_rfc3339(),
        output_dir: dir.display().to_string(),
        threads,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(hash)
}

/// Serialize any report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| spde::SpdeError::Format(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// `rates_<axis>.csv`: one row per sweep point.
pub fn write_rates_csv(dir: &Path, report: &ErrorReport) -> Result<PathBuf> {
    let path = dir.join(format!("rates_{}.csv", report.axis));
    let mut text = String::from("h,rms_error,ci_half_width\n");
    for point in &report.points {
        text.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(point.h),
            fmt_f64(point.rms_error),
            fmt_f64(point.ci_half_width)
        ));
    }
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Generic numeric table writer: a header line plus rows of 17-digit floats.
pub fn write_table_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        let line = row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",");
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
