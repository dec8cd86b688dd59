use std::path::Path;
use std::process::{Command, Output};

fn sdvisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdvisc")).args(args).output().unwrap()
}

const SMALL: &str = r#"
name = "small"
duration_s = 0.3
preroll_s = 0.5

[plant]
turbines = 2

[[turbine]]
id = 0
mode = "visc"
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_outputs_and_metrics_recompute() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let r = sdvisc(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["series.csv", "events.ndjson", "metrics.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let m = sdvisc(&["metrics", out.join("series.csv").to_str().unwrap()]);
    assert!(m.status.success());
    let saved = std::fs::read_to_string(out.join("metrics.json")).unwrap();
    assert_eq!(String::from_utf8(m.stdout).unwrap(), saved);
}

#[test]
fn validate_reports_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let ok = sdvisc(&["validate", &cfg]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("small: 2 turbines"));
    let bad = sdvisc(&["validate", &cfg, "--override", "plant.turbines=0"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("plant.turbines"));
    let missing = sdvisc(&["validate", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn sweep_is_the_same_on_one_thread() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = |o: &Path| vec!["sweep".to_string(), cfg.clone(), "--param".into(), "visc.inertia.h_s".into(), "--values".into(), "3,5".into(), "--out".into(), o.to_str().unwrap().into()];
    let ra = sdvisc(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    let mut seq = args(&b);
    seq.push("--sequential".into());
    let rb = sdvisc(&seq.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(ra.status.success() && rb.status.success());
    assert_eq!(ra.stdout, rb.stdout);
    for v in ["3", "5"] {
        let f = format!("visc.inertia.h_s={v}/series.csv");
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap());
    }
}

#[test]
fn divergence_exit_code_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/trapezoidal_baseline.toml");
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    let plain = sdvisc(&["run", cfg, "--out", out]);
    assert!(plain.status.success());
    assert!(String::from_utf8_lossy(&plain.stderr).contains("diverged at t = "));
    let strict = sdvisc(&["run", cfg, "--out", out, "--fail-on-divergence"]);
    assert_eq!(strict.status.code(), Some(2));
}
