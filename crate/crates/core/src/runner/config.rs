//! Scenario files: TOML with unit-suffixed keys. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dsp::WPath;
use crate::netsim::CommConfig;
use crate::plant::{GridParams, PlantConfig, PlantEvent, Topology, TurbineElecParams};
use crate::visc::{Mode, ViscParams};

use super::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub dt_s: f64,
    pub turbines: usize,
    /// Rating of each turbine on the farm base; `1/turbines` when absent.
    pub rating_pu: Option<f64>,
    pub p_wind_pu: f64,
    pub base_frequency_hz: f64,
    pub grid: GridParams,
    pub turbine: TurbineElecParams,
    /// Radial (one cluster per turbine) when absent.
    pub topology: Option<Topology>,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            dt_s: 1e-5,
            turbines: 1,
            rating_pu: None,
            p_wind_pu: 0.0,
            base_frequency_hz: 50.0,
            grid: GridParams::default(),
            turbine: TurbineElecParams::default(),
            topology: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub ts_s: f64,
    pub w_path: WPath,
    /// Per-step stored-sum disturbance, used only by the trapezoidal forms.
    pub trap_perturbation_pu: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            ts_s: 0.00067,
            w_path: WPath::default(),
            trap_perturbation_pu: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialMode {
    #[default]
    Pq,
    Visc,
}

impl From<InitialMode> for Mode {
    fn from(m: InitialMode) -> Self {
        match m {
            InitialMode::Pq => Mode::GridFollowingPQ,
            InitialMode::Visc => Mode::ViSC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurbineSpec {
    pub id: usize,
    #[serde(default)]
    pub mode: InitialMode,
    #[serde(default = "yes")]
    pub visc_enabled: bool,
    pub p_wind_pu: Option<f64>,
    /// Merged over the shared `[visc]` table.
    pub visc: Option<Table>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Fault { retained_v_pu: f64 },
    ClearFault,
    SetScr { scr: f64 },
    LoadStep { dp_pu: f64 },
    SetWind { turbine: Option<usize>, p_pu: f64 },
    LinkDown { a: String, b: String },
    LinkUp { a: String, b: String },
    /// The SDC-side controller instances stop; all turbines when absent.
    MasterFailure { turbine: Option<usize> },
    RequestVisc { turbine: usize },
    Release { turbine: usize },
}

impl Action {
    pub fn plant_event(&self) -> Option<PlantEvent> {
        Some(match *self {
            Action::Fault { retained_v_pu } => PlantEvent::Fault { retained_v_pu },
            Action::ClearFault => PlantEvent::ClearFault,
            Action::SetScr { scr } => PlantEvent::SetScr { scr },
            Action::LoadStep { dp_pu } => PlantEvent::LoadStep { dp_pu },
            Action::SetWind { turbine, p_pu } => PlantEvent::SetWind { turbine, p_pu },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub t_s: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Per-turbine signals to write; all when absent.
    pub channels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    duration_s: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_preroll")]
    preroll_s: f64,
    #[serde(default)]
    plant: PlantSection,
    #[serde(default)]
    controller: ControllerSection,
    #[serde(default)]
    visc: Table,
    #[serde(default)]
    turbine: Vec<TurbineSpec>,
    #[serde(default)]
    comm: CommConfig,
    #[serde(default)]
    event: Vec<EventSpec>,
    #[serde(default)]
    outputs: Outputs,
}

fn default_preroll() -> f64 {
    3.0
}

pub const SIGNALS: [&str; 8] = ["v", "p", "q", "omega", "iref", "mode", "mq", "v_dc"];

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    /// Settling time before `t = 0`, simulated but not recorded.
    pub preroll_s: f64,
    pub plant: PlantConfig,
    pub controller: ControllerSection,
    /// Controller period after alignment to the plant step.
    pub ts_s: f64,
    pub visc: Vec<ViscParams>,
    pub modes: Vec<Mode>,
    pub visc_enabled: Vec<bool>,
    pub comm: CommConfig,
    pub events: Vec<EventSpec>,
    pub channels: Vec<String>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.visc.len()
    }

    /// Plant steps per controller sample.
    pub fn ratio(&self) -> u64 {
        (self.ts_s / self.plant.dt).round() as u64
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> RunError {
    RunError::Validation {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

/// Parses `text`, applies `key=value` overrides and validates.
pub fn load_scenario(text: &str, overrides: &[String]) -> Result<Scenario, RunError> {
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| RunError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    from_table(root)
}

/// Sets a dotted key in the value tree, creating tables on the way. The
/// value is read as a TOML literal, or as a bare string if that fails.
pub fn apply_override(root: &mut Table, spec: &str) -> Result<(), RunError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| RunError::Parse(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(RunError::Parse(format!("override key `{key}` is malformed")));
    }
    let mut node = root
        .entry(parts[0].to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    for p in &parts[1..] {
        node = match node {
            Value::Table(t) => t
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new())),
            Value::Array(a) => {
                let i: usize = p
                    .parse()
                    .map_err(|_| RunError::Parse(format!("override `{key}`: `{p}` is not an index")))?;
                let len = a.len();
                a.get_mut(i).ok_or_else(|| {
                    RunError::Parse(format!("override `{key}`: index {i} out of range ({len})"))
                })?
            }
            _ => return Err(RunError::Parse(format!("override `{key}`: `{p}` has no parent table"))),
        };
    }
    *node = value;
    Ok(())
}

fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn from_table(root: Table) -> Result<Scenario, RunError> {
    let f: ScenarioFile = Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| RunError::Parse(e.to_string()))?;
    let p = &f.plant;
    let n = p.turbines;
    if n == 0 {
        return Err(invalid("plant.turbines", "must be at least 1"));
    }
    if !(p.dt_s > 0.0) {
        return Err(invalid("plant.dt_s", "must be > 0"));
    }
    if !(f.controller.ts_s >= p.dt_s) {
        return Err(invalid("controller.ts_s", "must be at least plant.dt_s"));
    }
    if !(f.duration_s > 0.0) {
        return Err(invalid("duration_s", "must be > 0"));
    }
    if !(f.preroll_s >= 0.0) {
        return Err(invalid("preroll_s", "must be >= 0"));
    }
    let k = (f.controller.ts_s / p.dt_s - 1e-9).ceil().max(1.0);
    let ts = k * p.dt_s;

    let mut plant = PlantConfig::uniform(n, p.topology.clone().unwrap_or_else(|| Topology::radial(n)));
    plant.grid = p.grid;
    plant.turbines = vec![p.turbine; n];
    plant.ratings = vec![p.rating_pu.unwrap_or(1.0 / n as f64); n];
    plant.p_wind = vec![p.p_wind_pu; n];
    plant.dt = p.dt_s;
    plant.omega_base = 2.0 * std::f64::consts::PI * p.base_frequency_hz;

    let mut visc = Vec::with_capacity(n);
    let mut modes = vec![Mode::GridFollowingPQ; n];
    let mut enabled = vec![true; n];
    let mut seen = vec![false; n];
    let mut per: Vec<Option<&Table>> = vec![None; n];
    for (i, t) in f.turbine.iter().enumerate() {
        let key = format!("turbine[{i}].id");
        if t.id >= n {
            return Err(invalid(&key, format!("turbine {} does not exist", t.id)));
        }
        if std::mem::replace(&mut seen[t.id], true) {
            return Err(invalid(&key, format!("turbine {} listed twice", t.id)));
        }
        modes[t.id] = t.mode.into();
        enabled[t.id] = t.visc_enabled;
        if t.mode == InitialMode::Visc && !t.visc_enabled {
            return Err(invalid(&format!("turbine[{i}].mode"), "visc mode on a disabled turbine"));
        }
        if let Some(w) = t.p_wind_pu {
            plant.p_wind[t.id] = w;
        }
        per[t.id] = t.visc.as_ref();
    }
    for (j, over) in per.into_iter().enumerate() {
        let mut tbl = f.visc.clone();
        if let Some(o) = over {
            merge(&mut tbl, o);
        }
        let key = if over.is_some() { format!("turbine.visc (turbine {j})") } else { "visc".into() };
        let mut vp: ViscParams = Value::Table(tbl)
            .try_into()
            .map_err(|e: toml::de::Error| RunError::Parse(format!("{key}: {e}")))?;
        vp.ts = ts;
        vp.discretizer = f.comm.discretizer;
        vp.w_path = f.controller.w_path;
        vp.trap_perturbation = f.controller.trap_perturbation_pu;
        vp.seed = f.seed.wrapping_add(j as u64);
        vp.omega_base = plant.omega_base;
        vp.validate().map_err(|e| invalid(&key, e))?;
        visc.push(vp);
    }
    plant.validate().map_err(|e| invalid("plant", e))?;

    let mut last = f64::NEG_INFINITY;
    for (i, e) in f.event.iter().enumerate() {
        let key = format!("event[{i}].t_s");
        if !(e.t_s >= 0.0) {
            return Err(invalid(&key, "must be >= 0"));
        }
        if e.t_s < last {
            return Err(invalid(&key, "events must be sorted by time"));
        }
        last = e.t_s;
        if e.t_s > f.duration_s {
            return Err(invalid(&key, "event after the end of the run (duration_s)"));
        }
        let tur = match &e.action {
            Action::SetWind { turbine, .. } | Action::MasterFailure { turbine } => *turbine,
            Action::RequestVisc { turbine } | Action::Release { turbine } => Some(*turbine),
            Action::LinkDown { a, b } | Action::LinkUp { a, b } => {
                for s in [a, b] {
                    s.parse::<crate::netsim::Node>()
                        .map_err(|err| invalid(&format!("event[{i}]"), err))?;
                }
                None
            }
            _ => None,
        };
        if tur.is_some_and(|t| t >= n) {
            return Err(invalid(&format!("event[{i}].turbine"), "turbine does not exist"));
        }
        if let Action::RequestVisc { turbine } = e.action {
            if !enabled[turbine] {
                return Err(invalid(&format!("event[{i}]"), "ViSC request for a disabled turbine"));
            }
        }
    }
    f.comm
        .build_graph(n)
        .map_err(|e| invalid("comm.edges", e))?;

    let channels = f
        .outputs
        .channels
        .unwrap_or_else(|| SIGNALS.iter().map(|s| s.to_string()).collect());
    if let Some(c) = channels.iter().find(|c| !SIGNALS.contains(&c.as_str())) {
        return Err(invalid("outputs.channels", format!("unknown signal `{c}`")));
    }

    Ok(Scenario {
        name: f.name,
        duration_s: f.duration_s,
        seed: f.seed,
        preroll_s: f.preroll_s,
        plant,
        controller: f.controller,
        ts_s: ts,
        visc,
        modes,
        visc_enabled: enabled,
        comm: f.comm,
        events: f.event,
        channels,
    })
}
