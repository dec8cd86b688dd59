use sdvisc::runner::{compute_metrics, load_scenario, run, run_text, Series};

fn shipped(name: &str) -> String {
    let p = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.toml"));
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn metrics_are_a_function_of_the_csv() {
    let out = run_text(&shipped("link_failure"), &[]).unwrap();
    let back = Series::from_csv(&out.csv()).unwrap();
    assert_eq!(compute_metrics(&back).unwrap(), out.metrics);
    assert_eq!(back.to_csv(), out.csv());
}

#[test]
fn override_equals_edited_file() {
    let text = shipped("droop_sharing");
    let edited = text.replacen("duration_s = 5.0", "duration_s = 1.5", 1);
    assert_ne!(edited, text);
    let a = run(&load_scenario(&text, &["duration_s=1.5".into()]).unwrap()).unwrap();
    let b = run(&load_scenario(&edited, &[]).unwrap()).unwrap();
    assert_eq!(a.csv(), b.csv());
    assert_eq!(a.ndjson(), b.ndjson());
}

#[test]
fn divergence_stops_the_run_and_is_logged() {
    let out = run_text(&shipped("trapezoidal_baseline"), &[]).unwrap();
    let (t, why) = out.diverged.clone().unwrap();
    assert!(why.contains("dc link"), "{why}");
    assert_eq!(out.metrics.diverged_at, Some(t));
    let last = out.log.last().unwrap();
    assert_eq!(last.kind, "diverged");
    assert_eq!(*out.series.col("sim.diverged").unwrap().last().unwrap(), 1.0);
}
