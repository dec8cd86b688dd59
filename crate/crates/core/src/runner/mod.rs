//! Scenario runner: the fixed-step master loop tying plant, controllers and
//! communication plane together, plus CSV / event-log output and metrics.
//!
//! Turbines in ViSC mode are controlled remotely: measurements travel to the
//! SDC unit as packets, the controller runs there on delivery, and the
//! command travels back. Grid-following turbines run their controller
//! locally. Between deliveries the converter holds the last command.

mod config;
mod metrics;
mod output;

use std::path::Path;

use thiserror::Error;

use crate::netsim::{ns, secs, CommPlane, Detection, FailoverReason, FlowKind, Nanos, Node};
use crate::par::{self, Exec};
use crate::plant::{dq_power, Plant, PlantError, FREQ_BAND};
use crate::visc::{control_step, ControlOutput, Measurements, Mode, ViscState};

pub use config::{
    apply_override, load_scenario, Action, ControllerSection, EventSpec, InitialMode, Outputs,
    PlantSection, Scenario, TurbineSpec, SIGNALS,
};
pub use metrics::{compute_metrics, turbine_ids, RunMetrics};
pub use output::{fmt9, to_ndjson, LogLine, Series};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {msg}")]
    Validation { key: String, msg: String },
    #[error("series has {0} rows; at least 2 are needed")]
    SeriesTooShort(usize),
    #[error("series lacks column `{0}`")]
    MissingColumn(String),
    #[error("diverged during preroll at t = {t:.4} s: {reason}")]
    PrerollDiverged { t: f64, reason: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: Series,
    pub log: Vec<LogLine>,
    pub metrics: RunMetrics,
    /// Time and reason, when the run stopped early.
    pub diverged: Option<(f64, String)>,
}

impl RunOutput {
    pub fn csv(&self) -> String {
        self.series.to_csv()
    }

    pub fn ndjson(&self) -> String {
        to_ndjson(&self.log)
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("series.csv"), self.csv()).map_err(io)?;
        std::fs::write(dir.join("events.ndjson"), self.ndjson()).map_err(io)?;
        std::fs::write(dir.join("metrics.json"), self.metrics.to_json() + "\n").map_err(io)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Control {
    Local,
    Remote,
    /// ViSC controller running at the turbine after losing every path.
    LocalBackup,
}

#[derive(Debug, Clone)]
enum Packet {
    Meas(Measurements),
    Cmd(ControlOutput),
}

struct Turbine {
    ctl: Control,
    local: ViscState,
    /// SDC-side instance, seeded from the first measurement it receives.
    sdc: Option<ViscState>,
    sdc_alive: bool,
    out: ControlOutput,
}

struct Sim<'a> {
    sc: &'a Scenario,
    plant: Plant,
    net: CommPlane<Packet>,
    wt: Vec<Turbine>,
    t0: Nanos,
    dt: Nanos,
}

impl Sim<'_> {
    fn now(&self) -> Nanos {
        self.plant.steps() * self.dt
    }

    fn note(&mut self, kind: &'static str, turbine: Option<usize>, detail: String) {
        let now = self.now();
        self.net.record(now, kind, turbine, detail);
    }

    fn measure(&self, j: usize) -> Measurements {
        self.plant.measure(j).expect("turbine index in range")
    }

    fn apply(&mut self, j: usize, out: ControlOutput) {
        self.plant.apply(j, &out).expect("turbine index in range");
        self.wt[j].out = out;
    }

    fn go_local(&mut self, j: usize, mode: Mode) -> Result<(), RunError> {
        let m = self.measure(j);
        let s = ViscState::from_measurements(&self.sc.visc[j], mode, &m).map_err(|e| RunError::Validation {
            key: format!("turbine {j} controller"),
            msg: e.to_string(),
        })?;
        self.wt[j].local = s;
        self.wt[j].ctl = if mode == Mode::ViSC { Control::LocalBackup } else { Control::Local };
        Ok(())
    }

    fn request(&mut self, j: usize) {
        let now = self.now();
        match self.net.request_visc(j, now) {
            Ok(()) => {
                let w = &mut self.wt[j];
                w.ctl = Control::Remote;
                w.sdc = None;
                w.sdc_alive = true;
            }
            Err(e) => self.note("visc_request_rejected", Some(j), e.to_string()),
        }
    }

    fn action(&mut self, i: usize, a: &Action) -> Result<(), RunError> {
        let now = self.now();
        let bad = |msg: String| RunError::Validation {
            key: format!("event[{i}]"),
            msg,
        };
        if let Some(ev) = a.plant_event() {
            self.plant.inject_event(&ev).map_err(|e| bad(e.to_string()))?;
            self.note("plant_event", None, format!("{ev:?}"));
            return Ok(());
        }
        match a {
            Action::LinkDown { a, b } => self.link(a, b, false).map_err(bad)?,
            Action::LinkUp { a, b } => self.link(a, b, true).map_err(bad)?,
            Action::MasterFailure { turbine } => {
                for j in 0..self.wt.len() {
                    if turbine.is_none_or(|t| t == j) {
                        self.wt[j].sdc_alive = false;
                        self.wt[j].sdc = None;
                    }
                }
                self.note("master_failure", *turbine, String::new());
            }
            Action::RequestVisc { turbine } => self.request(*turbine),
            Action::Release { turbine } => {
                self.net.release(*turbine, now);
                self.go_local(*turbine, Mode::GridFollowingPQ)?;
            }
            _ => unreachable!("plant events handled above"),
        }
        Ok(())
    }

    fn link(&mut self, a: &str, b: &str, up: bool) -> Result<(), String> {
        let now = self.now();
        let na: Node = a.parse().map_err(|e: crate::netsim::NetError| e.to_string())?;
        let nb: Node = b.parse().map_err(|e: crate::netsim::NetError| e.to_string())?;
        self.net.set_link(na, nb, up, now).map_err(|e| e.to_string())
    }

    fn detect(&mut self, j: usize) -> Result<(), RunError> {
        if self.wt[j].ctl != Control::Remote {
            return Ok(());
        }
        let now = self.now();
        let Detection::Failover(reason) = self.net.poll(j, now) else {
            return Ok(());
        };
        if !self.sc.comm.failover_enabled {
            self.note("command_hold", Some(j), "no backup controller".into());
            return Ok(());
        }
        if let Err(e) = self.net.failover(j, reason, now) {
            self.note("failover_failed", Some(j), e.to_string());
            return Ok(());
        }
        match reason {
            FailoverReason::MasterControllerFailure => {
                let w = &mut self.wt[j];
                w.ctl = Control::Remote;
                w.sdc = None;
                w.sdc_alive = true;
            }
            FailoverReason::NoPath => self.go_local(j, Mode::ViSC)?,
        }
        Ok(())
    }

    fn sample(&mut self) -> Result<(), RunError> {
        for j in 0..self.wt.len() {
            self.detect(j)?;
        }
        let now = self.now();
        for j in 0..self.wt.len() {
            let m = self.measure(j);
            match self.wt[j].ctl {
                Control::Local | Control::LocalBackup => {
                    let p = &self.sc.visc[j];
                    match control_step(p, &mut self.wt[j].local, &m) {
                        Ok(out) => self.apply(j, out),
                        Err(e) => self.note("controller_error", Some(j), e.to_string()),
                    }
                }
                Control::Remote => {
                    self.net.send(j, FlowKind::Measurement, Packet::Meas(m), now);
                }
            }
        }
        Ok(())
    }

    fn transport(&mut self) {
        let now = self.now();
        for pkt in self.net.transport_step(now) {
            let j = pkt.turbine;
            match pkt.payload {
                Packet::Meas(m) => {
                    if !self.wt[j].sdc_alive {
                        continue;
                    }
                    let p = &self.sc.visc[j];
                    let out = match &mut self.wt[j].sdc {
                        Some(s) => control_step(p, s, &m),
                        slot @ None => ViscState::from_measurements(p, Mode::ViSC, &m).map(|s| {
                            let o = *s.last_output();
                            *slot = Some(s);
                            o
                        }),
                    };
                    match out {
                        Ok(o) => {
                            self.net.send(j, FlowKind::ControlCommand, Packet::Cmd(o), now);
                        }
                        Err(e) => self.note("controller_error", Some(j), e.to_string()),
                    }
                }
                Packet::Cmd(o) => {
                    if self.wt[j].ctl == Control::Remote {
                        self.apply(j, o);
                    }
                }
            }
        }
    }

    fn row(&self) -> Vec<f64> {
        let mut r = vec![
            secs(self.now()) - secs(self.t0),
            self.plant.v_pcc().norm(),
            self.plant.grid_freq(),
        ];
        for (j, w) in self.wt.iter().enumerate() {
            let v = self.plant.v_o(j);
            let i = self.plant.i_o(j);
            let (p, q) = dq_power((v.re, v.im), (i.re, i.im));
            for c in &self.sc.channels {
                r.push(match c.as_str() {
                    "v" => v.norm(),
                    "p" => p,
                    "q" => q,
                    "omega" => w.out.omega,
                    "iref" => w.out.i_ref.0.hypot(w.out.i_ref.1),
                    "mode" => (w.ctl != Control::Local) as u8 as f64,
                    "mq" => self.sc.visc[j].avr.mq,
                    "v_dc" => self.plant.v_dc(j),
                    _ => unreachable!("validated channel"),
                });
            }
        }
        let s = self.net.stats();
        r.extend([s.sent, s.delivered, s.dropped, s.dr_count, s.failover_count].map(|x| x as f64));
        r.push(0.0);
        r
    }

    /// Pole slip of an emulated rotor shows up as its speed leaving the band.
    fn frame_check(&self) -> Option<String> {
        self.wt.iter().enumerate().find_map(|(j, w)| {
            let f = w.out.omega;
            (w.out.mode == Mode::ViSC && !(FREQ_BAND.0..=FREQ_BAND.1).contains(&f))
                .then(|| format!("turbine {j} frame frequency {f:.4} pu"))
        })
    }
}

fn columns(sc: &Scenario) -> Vec<String> {
    let mut c: Vec<String> = ["t_s", "pcc.v", "grid.freq"].map(String::from).to_vec();
    for j in 0..sc.n() {
        c.extend(sc.channels.iter().map(|s| format!("wt{j}.{s}")));
    }
    c.extend(
        ["net.sent", "net.delivered", "net.dropped", "net.dr", "net.failover", "sim.diverged"]
            .map(String::from),
    );
    c
}

/// Runs one scenario to completion or divergence.
pub fn run(sc: &Scenario) -> Result<RunOutput, RunError> {
    let n = sc.n();
    let cfg_err = |e: PlantError| RunError::Validation {
        key: "plant".into(),
        msg: e.to_string(),
    };
    let plant = Plant::new(sc.plant.clone()).map_err(cfg_err)?;
    let graph = sc.comm.build_graph(n).map_err(|e| RunError::Validation {
        key: "comm.edges".into(),
        msg: e.to_string(),
    })?;
    let mut net = CommPlane::new(sc.comm.clone(), graph, sc.ts_s, sc.seed);
    for j in 0..n {
        net.register(j, sc.visc_enabled[j]);
    }
    let ratio = sc.ratio();
    let dt = ns(sc.plant.dt);
    let pre_steps = ((sc.preroll_s / sc.plant.dt).round() as u64).div_ceil(ratio) * ratio;
    let total = pre_steps + (sc.duration_s / sc.plant.dt).round() as u64;
    let wt = (0..n)
        .map(|j| {
            Ok(Turbine {
                ctl: Control::Local,
                local: ViscState::new(&sc.visc[j]).map_err(|e| RunError::Validation {
                    key: format!("turbine {j} controller"),
                    msg: e.to_string(),
                })?,
                sdc: None,
                sdc_alive: true,
                out: ControlOutput {
                    omega: 1.0,
                    ..ControlOutput::default()
                },
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let mut sim = Sim {
        sc,
        plant,
        net,
        wt,
        t0: pre_steps * dt,
        dt,
    };
    for j in 0..n {
        sim.go_local(j, Mode::GridFollowingPQ)?;
    }
    // The grid stays at nominal frequency until the recorded run starts.
    sim.plant.freeze_frequency();
    let requested_at = (pre_steps / 2).div_ceil(ratio) * ratio;
    if (sc.controller.ts_s - sc.ts_s).abs() > 1e-15 {
        sim.note(
            "clock_alignment",
            None,
            format!("controller period {} s rounded to {} s", sc.controller.ts_s, fmt9(sc.ts_s)),
        );
    }

    let event_steps: Vec<u64> = sc
        .events
        .iter()
        .map(|e| pre_steps + (e.t_s / sc.plant.dt).round() as u64)
        .collect();
    let mut next_event = 0;
    let mut series = Series {
        columns: columns(sc),
        rows: Vec::new(),
    };
    let mut diverged = None;
    for g in 0..=total {
        if g == requested_at {
            for j in 0..n {
                if sc.modes[j] == Mode::ViSC {
                    sim.request(j);
                }
            }
        }
        if g == pre_steps {
            sim.plant.set_frequency_reference();
        }
        while next_event < event_steps.len() && event_steps[next_event] == g {
            sim.action(next_event, &sc.events[next_event].action)?;
            next_event += 1;
        }
        if g % ratio == 0 {
            sim.sample()?;
            if g >= pre_steps {
                series.rows.push(sim.row());
            }
            if let Some(reason) = sim.frame_check() {
                diverged = Some((secs(sim.now()) - secs(sim.t0), reason));
                break;
            }
        }
        if g == total {
            break;
        }
        sim.transport();
        if let Err(e) = sim.plant.step() {
            let reason = match e {
                PlantError::Diverged { reason, .. } => reason,
                other => other.to_string(),
            };
            diverged = Some((secs(sim.now()) - secs(sim.t0), reason));
            break;
        }
    }
    if let Some((t, reason)) = &diverged {
        if *t < 0.0 {
            return Err(RunError::PrerollDiverged { t: *t, reason: reason.clone() });
        }
        sim.note("diverged", None, reason.clone());
        let mut r = sim.row();
        *r.last_mut().expect("row") = 1.0;
        if series.rows.last().is_some_and(|l| l[0] == r[0]) {
            series.rows.pop();
        }
        series.rows.push(r);
    }
    sim.net.tear_down_all();

    let t0 = sim.t0 as i128;
    let log = sim
        .net
        .log()
        .iter()
        .map(|e| LogLine {
            t_s: fmt9((e.t as i128 - t0) as f64 * 1e-9),
            kind: e.kind.to_string(),
            turbine: e.turbine,
            detail: e.detail.clone(),
        })
        .collect();
    let series = series.quantized();
    let metrics = compute_metrics(&series)?;
    Ok(RunOutput {
        series,
        log,
        metrics,
        diverged,
    })
}

/// Loads and runs a scenario file's text.
pub fn run_text(text: &str, overrides: &[String]) -> Result<RunOutput, RunError> {
    run(&load_scenario(text, overrides)?)
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: String,
    pub result: Result<RunOutput, RunError>,
}

/// One run per value of `param`, in parallel when enabled. Results come
/// back in the order of `values`.
pub fn sweep(
    text: &str,
    overrides: &[String],
    param: &str,
    values: &[String],
    exec: Exec,
) -> Vec<SweepRun> {
    par::map_collect(values, exec, |v| {
        let mut o = overrides.to_vec();
        o.push(format!("{param}={v}"));
        SweepRun {
            value: v.clone(),
            result: run_text(text, &o),
        }
    })
}

#[cfg(test)]
mod tests;
