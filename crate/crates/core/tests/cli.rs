use std::process::{Command, Output};

fn detcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detcap"))
        .args(args)
        .env("DETCAP_THREADS", "2")
        .output()
        .expect("spawn detcap")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn exact_demo_two_fair_detectors() {
    let v = json(&detcap(&["exact", "--demo"]));
    assert_eq!(v["pmf"], serde_json::json!([0.5, 0.25]));
    assert_eq!(v["mass_at_infinity"], 0.25);
    assert_eq!(v["expected_truncated_time"], 1.0);
    assert_eq!(v["success_probability"], 0.75);
}

#[test]
fn exact_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = dir.path().join("s.json");
    let config = dir.path().join("c.json");
    std::fs::write(&scheme, r#"{"assignment": [2, 1, 2]}"#).unwrap();
    std::fs::write(&config, r#"{"probs": [0.5, 0.25]}"#).unwrap();
    let v = json(&detcap(&[
        "exact",
        "--scheme-file",
        scheme.to_str().unwrap(),
        "--config-file",
        config.to_str().unwrap(),
    ]));
    // slots see 0.25, 0.5, 0.25
    let pmf: Vec<f64> = serde_json::from_value(v["pmf"].clone()).unwrap();
    let want = [0.25, 0.75 * 0.5, 0.75 * 0.5 * 0.25];
    for (a, b) in pmf.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn out_of_range_detector_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = dir.path().join("s.json");
    let config = dir.path().join("c.json");
    std::fs::write(&scheme, r#"{"assignment": [3]}"#).unwrap();
    std::fs::write(&config, r#"{"probs": [0.5, 0.25]}"#).unwrap();
    let out = detcap(&[
        "exact",
        "--scheme-file",
        scheme.to_str().unwrap(),
        "--config-file",
        config.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn simulate_is_close_to_exact() {
    let v = json(&detcap(&["simulate", "--demo", "--replicates", "200000", "--seed", "3"]));
    let emp: Vec<f64> = serde_json::from_value(v["empirical"]["pmf"].clone()).unwrap();
    let exact: Vec<f64> = serde_json::from_value(v["exact"]["pmf"].clone()).unwrap();
    // binomial standard error is about 1.1e-3 at this size
    for (a, b) in emp.iter().zip(&exact) {
        assert!((a - b).abs() < 6e-3, "{emp:?} vs {exact:?}");
    }
}

#[test]
fn scheme_stats_injective_is_all_ones() {
    let v = json(&detcap(&["scheme-stats", "--family", "uniform_injective", "--n", "4", "--r", "3"]));
    for entry in v["a_k"].as_array().unwrap() {
        assert_eq!(entry["a_k"], 1.0);
    }
}

#[test]
fn ensemble_csv_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = detcap(&[
        "ensemble",
        "--family",
        "uniform_injective",
        "--alphabet",
        "0.2,0.8",
        "--n",
        "100",
        "--r",
        "10",
        "--replicates",
        "500",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ensemble.csv")).unwrap();
    assert!(csv.starts_with("n,r,mean_T,se_mean,var_T,se_var,mean_S"));
    let bounds: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bounds.json")).unwrap())
            .unwrap();
    assert!(bounds.is_object());
}

#[test]
fn missing_config_exits_2() {
    let out = detcap(&["run", "no_such_config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_alphabet_exits_2() {
    let out = detcap(&[
        "ensemble", "--family", "uniform_injective", "--alphabet", "1.5", "--n", "10", "--r", "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_fast_passes() {
    let out = detcap(&["verify", "--fast"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("[PASS]") && !text.contains("[FAIL]"));
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        r#"
name = "small"
seed = 5
replicates = 300
families = ["uniform_injective", "hot_start(1,uniform_injective)"]
alphabet = { values = [0.2, 0.8] }
grid = { n = [100, 400] }
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = detcap(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("verdict.json").exists());
    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("uniform_injective/sweep.csv").exists());
}
