//! End-to-end tests of the `cavitynet` binary: determinism, the
//! derive-rates round-trip, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cavitynet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn spectrum_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let st = run(&[
            "spectrum",
            "--preset",
            "fig2",
            "--in",
            "A",
            "--g-eff",
            "5",
            "5",
            "--points",
            "101",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    }
    assert_eq!(read(&a), read(&b));
}

#[test]
fn derive_rates_round_trip_reproduces_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let rates = dir.path().join("rates.json");
    let st = run(&[
        "derive-rates",
        "--preset",
        "fig2",
        "--out",
        rates.to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    // Reference: spectrum from the inline geometry.
    let geometry_cfg = dir.path().join("geom.json");
    std::fs::write(
        &geometry_cfg,
        r#"{"geometry": {"l1": 0.92, "l2": 1.38, "lf": 1.40,
             "r1": 0.85, "r2": 0.57, "r3": 0.72, "r4": 0.85},
            "v_scaling": 1.075}"#,
    )
    .unwrap();
    // Round trip: the emitted rates re-ingested as an override.
    let override_cfg = dir.path().join("override.json");
    std::fs::write(
        &override_cfg,
        format!(
            r#"{{"rates_override": {}, "v_scaling": 1.075}}"#,
            read(&rates)
        ),
    )
    .unwrap();

    let from_geometry = dir.path().join("g.csv");
    let from_override = dir.path().join("o.csv");
    for (cfg, out) in [(&geometry_cfg, &from_geometry), (&override_cfg, &from_override)] {
        let st = run(&[
            "spectrum",
            "--config",
            cfg.to_str().unwrap(),
            "--in",
            "A",
            "--g-eff",
            "5",
            "5",
            "--points",
            "101",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    }
    assert_eq!(read(&from_geometry), read(&from_override));
}

#[test]
fn invalid_reflectance_exits_1_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"geometry": {"l1": 0.92, "l2": 1.38, "lf": 1.40,
             "r1": 0.85, "r2": 1.2, "r3": 0.72, "r4": 0.85}}"#,
    )
    .unwrap();
    let st = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--in", "A"]);
    assert_eq!(st.status.code(), Some(1));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("r2"), "diagnostic names the field: {err}");
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.json");
    std::fs::write(&cfg, r#"{"preset": "fig2", "sweeep": {"points": 10}}"#).unwrap();
    let st = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--in", "A"]);
    assert_eq!(st.status.code(), Some(1));
}

#[test]
fn unknown_preset_exits_1() {
    let st = run(&["modes", "--preset", "fig9"]);
    assert_eq!(st.status.code(), Some(1));
}

#[test]
fn modes_flags_match_expected_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("modes.csv");
    let st = run(&["modes", "--g", "5", "5", "--v", "9", "9", "--out", out.to_str().unwrap()]);
    assert!(st.status.success());
    let text = read(&out);
    let freqs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let expected = [-13.674794331177344, -5.0, 0.0, 5.0, 13.674794331177344];
    assert_eq!(freqs.len(), 5);
    for (f, e) in freqs.iter().zip(expected) {
        assert!((f - e).abs() < 1e-9, "{f} vs {e}");
    }
}

#[test]
fn empty_spectrum_writes_plot_script_with_detuning_axis() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec.csv");
    let st = run(&[
        "spectrum",
        "--preset",
        "fig2",
        "--in",
        "A",
        "--empty",
        "--points",
        "51",
        "--out",
        out.to_str().unwrap(),
        "--plot-script",
    ]);
    assert!(st.status.success());
    let script = read(&out.with_extension("gp"));
    assert!(script.contains("probe detuning (MHz)"));
    let header = read(&out).lines().next().unwrap().to_string();
    assert!(header.starts_with("delta_mhz,flux_A,flux_B,flux_C,re_sigma1"));
}

#[test]
fn default_output_directory_env_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["modes", "--g", "5", "5", "--v", "9", "9"])
        .env("CAVITYNET_OUT_DIR", dir.path())
        .output()
        .expect("binary runs");
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(dir.path().join("modes.csv").exists());
}
