//! Black-box tests of the `spde` binary: exit codes, file layout,
//! reproducibility, and configuration precedence.

use std::path::Path;
use std::process::{Command, Output};

fn spde() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spde"))
}

fn run(args: &[&str]) -> Output {
    spde().args(args).output().expect("binary should spawn")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn stderr_json(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {text}"))
}

/// Tiny but non-degenerate convergence setup used by several tests.
fn small_temporal_args<'a>(outdir: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "convergence",
        "--mode",
        "temporal",
        "--model",
        "paper-ex",
        "--n-ref",
        "16",
        "--k-ref",
        "128",
        "--j-modes",
        "16",
        "--sweep-k",
        "16,32",
        "--samples",
        "6",
        "--seed",
        "11",
        "--outdir",
        outdir,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn identical_configs_reproduce_results_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let (out_a, out_b) = (out_a.to_str().unwrap(), out_b.to_str().unwrap());
    assert!(run(&small_temporal_args(out_a, &[])).status.success());
    assert!(run(&small_temporal_args(out_b, &[])).status.success());

    let run_a = Path::new(out_a).join("paper-ex_temporal_seed11");
    let run_b = Path::new(out_b).join("paper-ex_temporal_seed11");
    assert_eq!(
        read(&run_a.join("report.json")),
        read(&run_b.join("report.json"))
    );
    assert_eq!(
        read(&run_a.join("rates_temporal.csv")),
        read(&run_b.join("rates_temporal.csv"))
    );
    // Manifests differ in timestamp but must agree on the config hash.
    let manifest = |p: &Path| -> serde_json::Value {
        serde_json::from_str(&read(&p.join("manifest.json"))).unwrap()
    };
    assert_eq!(
        manifest(&run_a)["config_hash"],
        manifest(&run_b)["config_hash"]
    );
}

#[test]
fn invalid_config_exits_2_with_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "convergence",
        "--mode",
        "temporal",
        "--model",
        "heat",
        "--n-ref",
        "8",
        "--k-ref",
        "64",
        "--j-modes",
        "8",
        "--sweep-k",
        "48",
        "--samples",
        "3",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("48"));
}

#[test]
fn manifest_is_written_before_results() {
    // A run that fails validation after the manifest stage must leave the
    // manifest (provenance) but no report.
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "convergence",
        "--mode",
        "temporal",
        "--model",
        "heat",
        "--n-ref",
        "8",
        "--k-ref",
        "64",
        "--j-modes",
        "8",
        "--sweep-k",
        "48",
        "--samples",
        "3",
        "--seed",
        "2",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let run_dir = dir.path().join("heat_temporal_seed2");
    assert!(run_dir.join("manifest.json").exists());
    assert!(!run_dir.join("report.json").exists());
}

#[test]
fn numerical_overflow_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "path",
        "--model",
        "linear-additive",
        "--sigma",
        "1e308",
        "--n-ref",
        "32",
        "--j-modes",
        "32",
        "--k-ref",
        "4",
        "--horizon",
        "16",
        "--datum",
        "zero",
        "--seed",
        "1",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "non-finite");
}

#[test]
fn unwritable_output_directory_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "a plain file").unwrap();
    let nested = blocker.join("sub");
    let out = run(&[
        "path",
        "--model",
        "heat",
        "--n-ref",
        "4",
        "--k-ref",
        "8",
        "--j-modes",
        "4",
        "--outdir",
        nested.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");
}

#[test]
fn zero_datum_heat_path_is_identically_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "path",
        "--model",
        "heat",
        "--datum",
        "zero",
        "--n-ref",
        "8",
        "--k-ref",
        "32",
        "--j-modes",
        "8",
        "--every",
        "8",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = read(&dir.path().join("heat_path_seed1").join("path.csv"));
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        rows += 1;
        for cell in line.split(',').skip(1) {
            assert_eq!(cell.parse::<f64>().unwrap(), 0.0, "row: {line}");
        }
    }
    assert_eq!(rows, 5);
}

#[test]
fn single_mode_heat_path_decays_at_the_first_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "path",
        "--model",
        "heat",
        "--datum",
        "e1",
        "--n-ref",
        "4",
        "--k-ref",
        "64",
        "--j-modes",
        "4",
        "--every",
        "16",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = read(&dir.path().join("heat_path_seed1").join("path.csv"));
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    for line in csv.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let t = cells[0];
        assert!(
            (cells[1] - (-pi2 * t).exp()).abs() < 1e-12,
            "c1 at t={t}: {}",
            cells[1]
        );
        for c in &cells[2..] {
            assert_eq!(*c, 0.0);
        }
    }
}

#[test]
fn nonlinear_path_is_finite_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "path",
        "--model",
        "paper-ex",
        "--n-ref",
        "32",
        "--k-ref",
        "256",
        "--j-modes",
        "32",
        "--every",
        "16",
        "--grid",
        "33",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in ["path.csv", "field.csv"] {
        let csv = read(&dir.path().join("paper-ex_path_seed1").join(file));
        for line in csv.lines().skip(1) {
            for cell in line.split(',') {
                assert!(cell.parse::<f64>().unwrap().is_finite(), "{file}: {line}");
            }
        }
    }
}

#[test]
fn grid_evaluation_matches_the_sine_expansion() {
    let dir = tempfile::tempdir().unwrap();
    let points = 9usize;
    let out = run(&[
        "path",
        "--model",
        "heat",
        "--datum",
        "e1",
        "--n-ref",
        "4",
        "--k-ref",
        "16",
        "--j-modes",
        "4",
        "--every",
        "8",
        "--grid",
        "9",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let run_dir = dir.path().join("heat_path_seed1");
    let paths = read(&run_dir.join("path.csv"));
    let fields = read(&run_dir.join("field.csv"));
    for (prow, frow) in paths.lines().skip(1).zip(fields.lines().skip(1)) {
        let coeffs: Vec<f64> = prow.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        let values: Vec<f64> = frow.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        assert_eq!(values.len(), points);
        for (i, v) in values.iter().enumerate() {
            let xi = (i + 1) as f64 / (points + 1) as f64;
            let expected: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(jm1, c)| {
                    c * std::f64::consts::SQRT_2
                        * ((jm1 + 1) as f64 * std::f64::consts::PI * xi).sin()
                })
                .sum();
            assert!((v - expected).abs() < 1e-12, "t-row {prow}, point {i}");
        }
    }
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        "# small heat study\n\
         model = heat\n\
         n_ref = 16\n\
         k_ref = 32\n\
         j_modes = 16\n\
         sweep_k = 4,8\n\
         samples = 4\n\
         seed = 5\n",
    )
    .unwrap();
    let out = run(&[
        "convergence",
        "--mode",
        "temporal",
        "--config",
        config.to_str().unwrap(),
        "--samples",
        "6",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // Directory name embeds the file's model and seed; manifest shows the
    // flag-overridden sample count.
    let run_dir = dir.path().join("heat_temporal_seed5");
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&run_dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["samples"], 6);
    assert_eq!(manifest["config"]["seed"], 5);
    assert_eq!(manifest["config"]["n_ref"], 16);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "modes = 16\n").unwrap();
    let out = run(&[
        "convergence",
        "--mode",
        "temporal",
        "--config",
        config.to_str().unwrap(),
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("unknown config key"));
}

#[test]
fn environment_variable_sets_output_base_but_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let env_base = dir.path().join("from-env");
    let flag_base = dir.path().join("from-flag");

    let out = spde()
        .args([
            "path", "--model", "heat", "--datum", "zero", "--n-ref", "4", "--k-ref", "8",
            "--j-modes", "4",
        ])
        .env("SPDE_OUT_DIR", &env_base)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_base.join("heat_path_seed1").join("path.csv").exists());

    let out = spde()
        .args([
            "path", "--model", "heat", "--datum", "zero", "--n-ref", "4", "--k-ref", "8",
            "--j-modes", "4", "--outdir",
        ])
        .arg(&flag_base)
        .env("SPDE_OUT_DIR", &env_base)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_base.join("heat_path_seed1").join("path.csv").exists());
}

#[test]
fn rates_csv_has_header_and_one_row_per_sweep_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&small_temporal_args(dir.path().to_str().unwrap(), &[]));
    assert!(out.status.success());
    let csv = read(
        &dir.path()
            .join("paper-ex_temporal_seed11")
            .join("rates_temporal.csv"),
    );
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,rms_error,ci_half_width");
    assert_eq!(lines.len(), 3, "header plus two sweep points");
    // 17-significant-digit fixed-exponent formatting.
    assert!(lines[1].split(',').all(|cell| cell.contains('e')));
}

#[test]
fn convergence_prints_the_fitted_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&small_temporal_args(dir.path().to_str().unwrap(), &[]));
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("fitted rate:"), "stdout: {stdout}");
}

#[test]
fn zero_sigma_reduces_the_linear_model_to_pure_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "convergence",
        "--mode",
        "temporal",
        "--model",
        "linear-additive",
        "--sigma",
        "0",
        "--n-ref",
        "8",
        "--k-ref",
        "64",
        "--j-modes",
        "8",
        "--sweep-k",
        "8,16",
        "--samples",
        "3",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&read(
        &dir.path()
            .join("linear-additive_temporal_seed1")
            .join("report.json"),
    ))
    .unwrap();
    assert!(report["fitted_rate"].is_null());
    for point in report["points"].as_array().unwrap() {
        assert!(point["rms_error"].as_f64().unwrap() <= 1e-12);
    }
}
