use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn chipbeam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chipbeam"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

/// Errors are one JSON object on the last stderr line.
fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or_default()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn help_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let out = chipbeam(dir.path(), &["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "modes",
        "cutoff",
        "taper",
        "ionchain",
        "design",
        "image",
        "crosstalk",
        "slitscan",
        "run",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let out = chipbeam(dir.path(), &["--version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn ionchain_csv_lists_every_ion() {
    let dir = tempfile::tempdir().unwrap();
    let out = chipbeam(dir.path(), &["ionchain", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,u,x_m"));
    let x: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(x.len(), 8);
    for i in 0..8 {
        assert!((x[i] + x[7 - i]).abs() < 1e-15);
    }
    // Barium at 34 kHz: the central gap is about 17.84 um.
    assert!((x[4] - x[3] - 17.84e-6).abs() < 0.01e-6, "{}", x[4] - x[3]);
}

#[test]
fn design_solves_and_round_trips_through_its_own_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = chipbeam(
        dir.path(),
        &[
            "design",
            "--set",
            "M=0.187",
            "--set",
            "s_c=73.4um",
            "--set",
            "w_q=2um",
            "--wavelength",
            "650nm",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = stdout_json(&out);
    assert!((d["s_q"].as_f64().unwrap() - 13.7258e-6).abs() < 1e-12);
    assert!((d["w_c"].as_f64().unwrap() - 2e-6 / 0.187).abs() < 1e-15);
    assert!((d["na_qubit"].as_f64().unwrap() - 650e-9 / (std::f64::consts::PI * 2e-6)).abs() < 1e-15);
    std::fs::write(dir.path().join("d.json"), &out.stdout).unwrap();

    // A different independent triple taken from the first answer gives it back.
    let again = chipbeam(
        dir.path(),
        &[
            "design", "--set", "w_c", "--set", "s_q", "--set", "s_c", "--from", "d.json",
        ],
    );
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    let e = stdout_json(&again);
    for key in ["w_c", "s_c", "na_chip", "w_q", "s_q", "na_qubit", "M"] {
        let (a, b) = (d[key].as_f64().unwrap(), e[key].as_f64().unwrap());
        assert!(((a - b) / a).abs() < 1e-9, "{key}: {a} vs {b}");
    }
}

#[test]
fn usage_and_validation_errors_have_their_own_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = chipbeam(dir.path(), &["ionchain", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = chipbeam(
        dir.path(),
        &[
            "design",
            "--set",
            "w_c=10um",
            "--set",
            "na_c=0.05",
            "--set",
            "M=0.2",
            "--wavelength",
            "650nm",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "validation");
    assert!(e["message"].as_str().unwrap().contains("inconsistent"));

    let out = chipbeam(
        dir.path(),
        &[
            "design",
            "--set",
            "M=0.2",
            "--set",
            "na_c=0.05",
            "--wavelength",
            "650nm",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_exit_codes_name_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"imaging": {"numerical_aperture": 2}}"#).unwrap();
    let out = chipbeam(dir.path(), &["run", "bad.json"]);
    assert_eq!(out.status.code(), Some(10));
    assert_eq!(stderr_json(&out)["stage"], "config");

    // Mode solving succeeds; the coarse facet grid then fails the imaging sampling check.
    std::fs::write(
        dir.path().join("coarse.json"),
        r#"{"mode_grid": {"dx": "20nm", "dy": "20nm", "margin": "3um"},
            "facet_grid": {"step": "2um", "pad": "10um", "half_height": "10um"}}"#,
    )
    .unwrap();
    let out = chipbeam(dir.path(), &["run", "coarse.json", "--no-metrology"]);
    assert_eq!(out.status.code(), Some(14));
    assert_eq!(stderr_json(&out)["stage"], "imaging");
}

#[test]
fn default_scenario_prints_and_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = chipbeam(dir.path(), &["run", "--print-default"]);
    assert!(out.status.success());
    let cfg = stdout_json(&out);
    assert_eq!(cfg["ion_chain"]["n_ions"], 8);
}

#[test]
fn slit_scan_commands_chain_together() {
    // Two peaks 3 mm apart on a -45 dB pedestal, scanned in three segments with a gain
    // drop of 0.79 per segment, then stitched, deconvolved and read out.
    let dir = tempfile::tempdir().unwrap();
    let segments = [
        ("-1700um", "-1400um", "1"),
        ("-1600um", "1600um", "0.79"),
        ("1400um", "1700um", "0.6241"),
    ];
    for (k, (start, end, gain)) in segments.iter().enumerate() {
        let out = chipbeam(
            dir.path(),
            &[
                "slitscan",
                "simulate",
                "--two-peaks",
                "3mm,5um",
                "--pedestal-db=-45",
                &format!("--start={start}"),
                &format!("--end={end}"),
                "--gain",
                gain,
                "--out",
                &format!("seg{k}.csv"),
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = chipbeam(
        dir.path(),
        &[
            "slitscan",
            "stitch",
            "--trace",
            "seg0.csv",
            "--trace",
            "seg1.csv",
            "--trace",
            "seg2.csv",
            "--min-overlap",
            "100um",
            "--out",
            "st.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gains: Vec<f64> = stdout_json(&out)["gains"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g.as_f64().unwrap())
        .collect();
    for (g, want) in gains.iter().zip([1.0, 1.0 / 0.79, 1.0 / 0.6241]) {
        assert!((g / want - 1.0).abs() < 1e-6, "{g} vs {want}");
    }

    let out = chipbeam(
        dir.path(),
        &["slitscan", "deconvolve", "--trace", "st.csv", "--out", "dec.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["converged"], true);

    let out = chipbeam(
        dir.path(),
        &[
            "slitscan",
            "extract",
            "--profile",
            "dec.csv",
            "--peak-a=-1500um",
            "--peak-b",
            "1500um",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = stdout_json(&out);
    let v = r["value_db"].as_f64().unwrap();
    assert!((v + 45.0).abs() < 0.5, "{v}");
    assert_eq!(r["n_window_points"], 1000);
    assert_eq!(r["floor_limited"], false);
}

#[test]
fn modes_reports_a_guided_fundamental() {
    let dir = tempfile::tempdir().unwrap();
    let out = chipbeam(
        dir.path(),
        &["modes", "--dx", "20nm", "--max-modes", "1", "--format", "json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["count"], 1);
    let n = v["modes"][0]["n_eff"].as_f64().unwrap();
    assert!(n > 1.457 && n < 2.02, "{n}");
}
