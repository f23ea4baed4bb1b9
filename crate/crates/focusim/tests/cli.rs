use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{
  "geometry": { "main_length_um": 3000, "junction_um": 1000 },
  "tracer": { "particles": 12, "seed": 5 },
  "species": [{ "preset": "lymphocyte" }, { "preset": "mcf7" }],
  "impedance": { "frequencies_hz": [0, 1000000], "band_points": 2, "samples": 4 }
}"#;

fn focusim(args: &[&str], config: &str, out: &Path) -> Output {
    let cfg = out.with_extension("json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_focusim"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn out_dir(tmp: &TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

#[test]
fn unknown_key_is_rejected_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let o = focusim(&["flow"], r#"{ "geometry": { "chanel_width": 50 } }"#, &out);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(
        e.contains("UNKNOWN_KEY") && e.contains("chanel_width"),
        "{e}"
    );
    assert!(!out.exists());
}

#[test]
fn syntax_error_reports_position() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let o = focusim(
        &["flow"],
        "# comment\n{\n  \"flow\": { \"v1_um_per_s\": 500,, }\n}\n",
        &out,
    );
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("SYNTAX_ERROR") && e.contains("line 3"), "{e}");
}

#[test]
fn invalid_geometry_fails_before_writing() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let o = focusim(
        &["flow"],
        r#"{ "geometry": { "main_width_um": -5 } }"#,
        &out,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("VALIDATION_ERROR"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn sheath_velocity_sweep_writes_rows_and_report() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let cfg =
        fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/sweep_v2.json"))
            .unwrap();
    let o = focusim(&["sweep"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = read(&out, "sweep.csv");
    assert_eq!(data_lines(&sweep).len(), 7);
    let report = read(&out, "trend_report.txt");
    assert!(
        report.contains("dy_max,DECREASING,DECREASING,PASS"),
        "{report}"
    );
    assert!(report.contains("selected,V2,"), "{report}");
}

#[test]
fn trace_is_reproducible_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    assert!(focusim(&["trace", "--workers", "1"], SMALL, &a)
        .status
        .success());
    assert!(focusim(&["trace", "--workers", "3"], SMALL, &b)
        .status
        .success());
    for name in [
        "trajectories.csv",
        "crossings.csv",
        "metrics.csv",
        "resolved_config.json",
    ] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/crossings_small.csv");
    let got = read(&a, "crossings.csv");
    if std::env::var_os("FOCUSIM_BLESS").is_some() {
        fs::write(&golden, &got).unwrap();
    }
    assert_eq!(got, fs::read_to_string(&golden).unwrap());
}

#[test]
fn seed_override_is_recorded_in_headers() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let o = focusim(&["trace", "--seed", "77"], SMALL, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["crossings.csv", "metrics.csv"] {
        let first = read(&out, name).lines().next().unwrap().to_owned();
        assert!(
            first.starts_with("# focusim ") && first.ends_with(" seed=77"),
            "{first}"
        );
    }
    let metrics = read(&out, "metrics.csv");
    assert!(metrics.contains("seed77"), "{metrics}");
}

#[test]
fn spectra_share_one_frequency_grid() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let o = focusim(&["impedance"], SMALL, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let freqs = |name: &str| -> Vec<String> {
        data_lines(&read(&out, name))
            .iter()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().to_owned())
            .collect()
    };
    let a = freqs("spectrum_lymphocyte.csv");
    assert_eq!(a, ["0", "1000000"]);
    assert_eq!(a, freqs("spectrum_mcf7.csv"));
}

#[test]
fn small_classification_runs() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let o = focusim(&["classify"], SMALL, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_lines(&read(&out, "classification.csv")).len(), 5);
    assert!(read(&out, "classification_summary.txt").contains("samples,4"));
}

#[test]
fn short_horizon_is_a_solver_error() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "o");
    let cfg = SMALL.replace(r#""seed": 5"#, r#""seed": 5, "t_max_s": 0.001"#);
    let o = focusim(&["trace"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.join("metrics.csv").exists());
}
