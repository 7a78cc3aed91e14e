//! End-to-end behavior of the `vsa` binary: output bundles, error paths
//! with machine-readable error lines, and config snapshot handling.

use std::path::Path;
use std::process::{Command, Output};

fn vsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsa"))
        .args(args)
        .output()
        .expect("spawn vsa")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Small, fast settings shared by the tests.
const FAST: &[&str] = &[
    "--set",
    "grid.points_per_axis=4",
    "--set",
    "gp.restarts=1",
    "--set",
    "gp.max_iterations=15",
    "--set",
    "gp.init=[1.0, 1.0, 1e-4]",
];

#[test]
fn generate_train_track_bundle_and_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    let models = tmp.path().join("models");

    let out = vsa(&[&["generate-data", "--out-dir", &s(&gen), "--seed", "9"], FAST].concat());
    assert!(out.status.success());
    assert!(gen.join("dataset.csv").exists());
    assert!(gen.join("dataset.meta.json").exists());
    assert!(gen.join("config.toml").exists());

    let out = vsa(&[
        &[
            "train",
            "--dataset",
            &s(&gen.join("dataset.csv")),
            "--out-dir",
            &s(&models),
            "--seed",
            "9",
        ],
        FAST,
    ]
    .concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("signal_variance"), "hyperparameters printed: {stdout}");

    // A persisted model predicts like the in-memory one (checked through
    // the library API elsewhere); here: the documents parse and the
    // tracking command consumes them.
    let track = tmp.path().join("track");
    let out = vsa(&[
        &[
            "track",
            "--model-i",
            &s(&models.join("model_i.json")),
            "--model-ii",
            &s(&models.join("model_ii.json")),
            "--out-dir",
            &s(&track),
            "--seed",
            "9",
            "--set",
            "schedule.angles_deg=[2.0]",
            "--set",
            "schedule.hold_s=1.0",
        ],
        FAST,
    ]
    .concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(track.join("tracking.csv")).unwrap();
    assert!(csv.starts_with("t_s,q_d_deg,q_meas_deg,s_d,p1_ff,p2_ff,dp_fb,p1_d,p2_d,p1,p2\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(track.join("tracking_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["per_setpoint"].as_array().unwrap().len(), 2);
    assert_eq!(summary["pure_feedforward"], serde_json::Value::Bool(false));
}

#[test]
fn default_grid_writes_529_records() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    let out = vsa(&["generate-data", "--out-dir", &s(&gen)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(gen.join("dataset.csv")).unwrap();
    // Header plus 23x23 records.
    assert_eq!(csv.lines().count(), 530);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(gen.join("dataset.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["records"], serde_json::json!(529));
    assert!(meta["wall_time_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn zero_gains_flag_pure_feedforward() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    let models = tmp.path().join("models");
    assert!(vsa(&[&["generate-data", "--out-dir", &s(&gen), "--seed", "1"], FAST].concat())
        .status
        .success());
    assert!(vsa(&[
        &[
            "train",
            "--dataset",
            &s(&gen.join("dataset.csv")),
            "--out-dir",
            &s(&models),
            "--seed",
            "1",
        ],
        FAST,
    ]
    .concat())
    .status
    .success());

    let track = tmp.path().join("track");
    let out = vsa(&[
        &[
            "track",
            "--model-i",
            &s(&models.join("model_i.json")),
            "--model-ii",
            &s(&models.join("model_ii.json")),
            "--out-dir",
            &s(&track),
            "--seed",
            "1",
            "--set",
            "controller.kp_bar_per_deg=0.0",
            "--set",
            "controller.ki_bar_per_s_deg=0.0",
            "--set",
            "schedule.angles_deg=[0.0]",
            "--set",
            "schedule.stiffness_levels=[0.3]",
            "--set",
            "schedule.hold_s=0.5",
            "--set",
            "tracking.measure_stiffness=false",
        ],
        FAST,
    ]
    .concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pure feedforward"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(track.join("tracking_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["pure_feedforward"], serde_json::Value::Bool(true));
}

#[test]
fn malformed_dataset_row_fails_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(
        &bad,
        "q_deg,s_nm_per_rad,p1_bar,p2_bar\n1.0,0.2,0.1,0.05\n2.0,broken,0.1,0.05\n",
    )
    .unwrap();
    let out = vsa(&[
        "train",
        "--dataset",
        &s(&bad),
        "--out-dir",
        &s(&tmp.path().join("out")),
    ]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(line).expect("machine-readable error");
    assert!(
        parsed["error"].as_str().unwrap().contains("line 3"),
        "error names the row: {err}"
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.toml");
    std::fs::write(&cfg, "definitely_not_a_knob = true\n").unwrap();
    let out = vsa(&[
        "generate-data",
        "--config",
        &s(&cfg),
        "--out-dir",
        &s(&tmp.path().join("out")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value =
        serde_json::from_str(err.lines().last().unwrap()).expect("machine-readable error");
    assert!(parsed["error"].as_str().unwrap().contains("definitely_not_a_knob"));
}

#[test]
fn config_file_is_copied_verbatim_into_the_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.toml");
    let text = "# bench probe settings\nseed = 5\n\n[grid]\npoints_per_axis = 4\n";
    std::fs::write(&cfg, text).unwrap();
    let out_dir = tmp.path().join("probe");
    let out = vsa(&[
        "measure-stiffness",
        "--p1",
        "0.2",
        "--p2",
        "0.2",
        "--config",
        &s(&cfg),
        "--out-dir",
        &s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let snapshot = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert_eq!(snapshot, text);

    let measurement: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("measurement.json")).unwrap())
            .unwrap();
    let stiffness = measurement["stiffness_nm_per_rad"].as_f64().unwrap();
    assert!((stiffness - 0.5).abs() / 0.5 < 0.02, "stiffness {stiffness}");
}

#[test]
fn missing_dataset_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vsa(&[
        "cross-validate",
        "--dataset",
        &s(&tmp.path().join("nope.csv")),
        "--out-dir",
        &s(&tmp.path().join("out")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(serde_json::from_str::<serde_json::Value>(err.lines().last().unwrap()).is_ok());
}
