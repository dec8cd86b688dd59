use super::*;

const BASIC: &str = r#"
name = "basic"
duration_s = 0.2
preroll_s = 0.5

[plant]
turbines = 2
"#;

#[test]
fn zero_event_run_is_flat() {
    let out = run_text(BASIC, &[]).unwrap();
    assert!(out.diverged.is_none());
    let v = out.series.col("pcc.v").unwrap();
    let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |a, &x| (a.0.min(x), a.1.max(x)));
    assert!(hi - lo < 1e-4, "{lo} {hi}");
}

fn load(extra: &str, overrides: &[&str]) -> Result<Scenario, RunError> {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    load_scenario(&format!("{BASIC}{extra}"), &o)
}

#[test]
fn controller_period_rounds_up_to_plant_steps() {
    let sc = load("", &["controller.ts_s=0.00067"]).unwrap();
    assert_eq!(sc.ratio(), 67);
    let sc = load("", &["controller.ts_s=0.000675"]).unwrap();
    assert_eq!(sc.ratio(), 68);
    assert!((sc.ts_s - 0.00068).abs() < 1e-15);
}

#[test]
fn overrides_reach_nested_and_indexed_keys() {
    let extra = "[[turbine]]\nid = 1\nmode = \"visc\"\n";
    let sc = load(extra, &["visc.avr.mq=0.07", "turbine.0.mode=pq", "plant.grid.scr=3.5"]).unwrap();
    assert_eq!(sc.visc[0].avr.mq, 0.07);
    assert_eq!(sc.modes[1], Mode::GridFollowingPQ);
    assert_eq!(sc.plant.grid.scr, 3.5);
}

#[test]
fn per_turbine_table_overrides_shared_one() {
    let extra = "[visc.avr]\nmq = 0.04\n[[turbine]]\nid = 1\nvisc = { avr = { mq = 0.09 } }\n";
    let sc = load(extra, &[]).unwrap();
    assert_eq!((sc.visc[0].avr.mq, sc.visc[1].avr.mq), (0.04, 0.09));
    assert_eq!(sc.visc[1].avr.kpv, sc.visc[0].avr.kpv);
}

#[test]
fn bad_overrides_are_rejected() {
    assert!(matches!(load("", &["novalue"]), Err(RunError::Parse(_))));
    assert!(matches!(load("", &["plant..turbines=2"]), Err(RunError::Parse(_))));
    assert!(matches!(load("", &["bogus_key=1"]), Err(RunError::Parse(_))));
    let extra = "[[turbine]]\nid = 0\n";
    assert!(matches!(load(extra, &["turbine.3.mode=pq"]), Err(RunError::Parse(_))));
}

#[test]
fn validation_names_the_key() {
    let key = |r: Result<Scenario, RunError>| match r {
        Err(RunError::Validation { key, .. }) => key,
        other => panic!("{other:?}"),
    };
    assert_eq!(key(load("", &["plant.turbines=0"])), "plant.turbines");
    assert_eq!(key(load("", &["controller.ts_s=1e-6"])), "controller.ts_s");
    let late = "[[event]]\nt_s = 9.0\nkind = \"clear_fault\"\n";
    assert_eq!(key(load(late, &[])), "event[0].t_s");
    let unsorted = "[[event]]\nt_s = 0.1\nkind = \"clear_fault\"\n[[event]]\nt_s = 0.05\nkind = \"clear_fault\"\n";
    assert_eq!(key(load(unsorted, &[])), "event[1].t_s");
    let ghost = "[[event]]\nt_s = 0.1\nkind = \"request_visc\"\nturbine = 5\n";
    assert_eq!(key(load(ghost, &[])), "event[0].turbine");
    assert_eq!(key(load("[outputs]\nchannels = [\"zz\"]\n", &[])), "outputs.channels");
}

#[test]
fn channel_selection_limits_columns() {
    let out = run_text(&format!("{BASIC}[outputs]\nchannels = [\"p\"]\n"), &[]).unwrap();
    let wt: Vec<&String> = out.series.columns.iter().filter(|c| c.starts_with("wt")).collect();
    assert_eq!(wt, ["wt0.p", "wt1.p"]);
}

#[test]
fn sweep_order_and_modes_agree() {
    let values: Vec<String> = ["0.03", "0.05"].map(String::from).to_vec();
    let a = sweep(BASIC, &[], "visc.avr.mq", &values, Exec::Auto);
    let b = sweep(BASIC, &[], "visc.avr.mq", &values, Exec::Sequential);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.value, y.value);
        assert_eq!(x.result.as_ref().unwrap().csv(), y.result.as_ref().unwrap().csv());
    }
}

#[test]
fn unreachable_operating_point_fails_in_preroll() {
    let text = format!("{BASIC}[[turbine]]\nid = 0\nmode = \"visc\"\n");
    match run_text(&text, &["plant.turbine.x_tr_pu=2.0".into()]) {
        Err(RunError::PrerollDiverged { t, .. }) => assert!(t < 0.0),
        other => panic!("{other:?}"),
    }
}
