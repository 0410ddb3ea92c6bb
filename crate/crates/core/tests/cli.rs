use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use observalab::cli::RunConfig;
use observalab::geometry::DomainKind;
use tempfile::TempDir;

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn observalab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_observalab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("OBSERVALAB_CACHE")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, value: serde_json::Value) -> PathBuf {
    let path = dir.path().join("config.json");
    std::fs::write(&path, value.to_string()).unwrap();
    path
}

fn small_interval(horizons: &[f64]) -> serde_json::Value {
    serde_json::json!({
        "domain": {"kind": "interval", "length": std::f64::consts::PI},
        "modes": 6,
        "horizons": horizons,
        "riesz_counts": [3, 6],
        "draws": 10,
        "seed": 1
    })
}

#[test]
fn spectrum_writes_reports_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = manifest("configs/interval.json");
    let o = observalab(&["spectrum", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("# observalab spectrum generated_at="));
    assert_eq!(csv.lines().count(), 2 + 20);
    assert!(out.join("spectrum_summary.json").exists());
    assert!(!out.join(".observalab.lock").exists());
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_interval(&[7.0]);
    cfg["mode"] = 3.into();
    let path = write_config(&dir, cfg);
    let o = observalab(&["spectrum", "--config", path.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = observalab(&["riesz"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn control_needs_a_riesz_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = manifest("configs/interval.json");
    let problem = manifest("configs/control_interval.json");
    let args = [
        "control",
        "--config",
        cfg.to_str().unwrap(),
        "--problem",
        problem.to_str().unwrap(),
    ];
    let o = observalab(&args, &out);
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("riesz"));

    let mut with_ten = serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    with_ten["riesz_counts"] = serde_json::json!([5, 10, 20]);
    let cfg10 = write_config(&dir, with_ten);
    let r = observalab(&["riesz", "--config", cfg10.to_str().unwrap()], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let args = [
        "control",
        "--config",
        cfg10.to_str().unwrap(),
        "--problem",
        problem.to_str().unwrap(),
    ];
    let o = observalab(&args, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("control.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
}

#[test]
fn short_horizon_is_reported_unless_strict() {
    let dir = tempfile::tempdir().unwrap();
    // 2R = pi on this interval.
    let path = write_config(&dir, small_interval(&[3.0]));
    let out = dir.path().join("out");
    let o = observalab(&["observe", "--config", path.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = observalab(&["observe", "--strict", "--config", path.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("observe_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["outside_hypothesis"], serde_json::Value::Bool(true));
}

#[test]
fn held_lock_blocks_a_second_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".observalab.lock"), "1").unwrap();
    let path = write_config(&dir, small_interval(&[7.0]));
    let o = observalab(&["spectrum", "--config", path.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn cache_path_follows_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("elsewhere").join("modes.json");
    let path = write_config(&dir, serde_json::json!({"domain": {"kind": "disk", "radius": 1.0}, "modes": 5}));
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_observalab"))
        .args(["spectrum", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("OBSERVALAB_CACHE", &cache)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cache.exists());
    assert!(!out.join("cache.json").exists());
    let text = std::fs::read_to_string(&cache).unwrap();
    assert!(text.contains("bessel_zeros"));
}

#[test]
fn jobs_zero_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(&dir, small_interval(&[7.0]));
    let o = observalab(&["spectrum", "--jobs", "0", "--config", path.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn schema_lists_every_config_key() {
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest("schema/run_config.schema.json")).unwrap()).unwrap();
    let listed: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
    let config = serde_json::to_value(RunConfig::for_domain(DomainKind::Interval { length: 1.0 })).unwrap();
    let mut keys: Vec<&String> = config.as_object().unwrap().keys().collect();
    let mut listed_sorted = listed.clone();
    listed_sorted.sort();
    keys.sort();
    assert_eq!(listed_sorted, keys);
    assert_eq!(schema["additionalProperties"], serde_json::Value::Bool(false));
}

#[test]
fn shipped_configs_load() {
    for name in ["interval", "rectangle", "disk"] {
        RunConfig::load(&manifest(&format!("configs/{name}.json"))).unwrap();
    }
}
