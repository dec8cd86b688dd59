use serde::{Deserialize, Serialize};

use super::PlantError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub scr: f64,
    pub rx_ratio: f64,
    pub v_grid_pu: f64,
    /// Aggregate frequency model; off means a fixed-frequency source.
    pub freq_model: bool,
    pub h_grid_s: f64,
    pub d_grid_pu: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            scr: 7.14,
            rx_ratio: 0.1,
            v_grid_pu: 1.0,
            freq_model: false,
            h_grid_s: 4.0,
            d_grid_pu: 1.0,
        }
    }
}

impl GridParams {
    /// Thevenin impedance `(r, x)` on the farm base: `|z| = 1/scr`.
    pub fn thevenin(&self) -> (f64, f64) {
        thevenin(self.scr, self.rx_ratio)
    }
}

pub fn thevenin(scr: f64, rx_ratio: f64) -> (f64, f64) {
    let x = 1.0 / (scr * (1.0 + rx_ratio * rx_ratio).sqrt());
    (rx_ratio * x, x)
}

/// Electrical and machine constants of one turbine, on its own base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbineElecParams {
    pub l_f_pu: f64,
    pub r_f_pu: f64,
    /// Filter capacitor susceptance at nominal frequency.
    pub c_f_pu: f64,
    /// Series damping resistor of the filter capacitor.
    pub r_d_pu: f64,
    pub r_tr_pu: f64,
    pub x_tr_pu: f64,
    /// DC-link stored-energy constant: `c v dv/dt = p_machine - p_conv`.
    pub c_dc_s: f64,
    pub machine_tau_s: f64,
    /// Power the machine side can absorb when the DC link is over-charged.
    pub p_brake_pu: f64,
}

impl Default for TurbineElecParams {
    fn default() -> Self {
        Self {
            l_f_pu: 0.08,
            r_f_pu: 0.003,
            c_f_pu: 0.1,
            r_d_pu: 0.3,
            r_tr_pu: 0.002,
            x_tr_pu: 0.06,
            c_dc_s: 0.05,
            machine_tau_s: 0.02,
            p_brake_pu: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    #[serde(default = "default_cable_r")]
    pub cable_r_pu: f64,
    #[serde(default = "default_cable_x")]
    pub cable_x_pu: f64,
    pub turbines: Vec<usize>,
}

fn default_cable_r() -> f64 {
    0.001
}

fn default_cable_x() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub clusters: Vec<Cluster>,
    pub pcc_cable_r_pu: f64,
    pub pcc_cable_x_pu: f64,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            clusters: Vec::new(),
            pcc_cable_r_pu: 0.001,
            pcc_cable_x_pu: 0.01,
        }
    }
}

impl Topology {
    /// Every turbine in its own cluster.
    pub fn radial(n: usize) -> Self {
        Self {
            clusters: (0..n)
                .map(|i| Cluster {
                    cable_r_pu: default_cable_r(),
                    cable_x_pu: default_cable_x(),
                    turbines: vec![i],
                })
                .collect(),
            ..Self::default()
        }
    }

    /// Cluster index of every turbine.
    pub fn membership(&self, n: usize) -> Result<Vec<usize>, PlantError> {
        let mut owner = vec![usize::MAX; n];
        for (c, cl) in self.clusters.iter().enumerate() {
            if cl.cable_r_pu == 0.0 && cl.cable_x_pu == 0.0 {
                return Err(PlantError::InvalidConfig(format!(
                    "topology.clusters[{c}]: cable impedance is zero"
                )));
            }
            for &t in &cl.turbines {
                if t >= n {
                    return Err(PlantError::InvalidConfig(format!(
                        "topology.clusters[{c}]: turbine {t} does not exist"
                    )));
                }
                if owner[t] != usize::MAX {
                    return Err(PlantError::InvalidConfig(format!(
                        "topology: turbine {t} is in more than one cluster"
                    )));
                }
                owner[t] = c;
            }
        }
        if let Some(t) = owner.iter().position(|&c| c == usize::MAX) {
            return Err(PlantError::InvalidConfig(format!(
                "topology: turbine {t} is in no cluster"
            )));
        }
        if self.pcc_cable_r_pu == 0.0 && self.pcc_cable_x_pu == 0.0 {
            return Err(PlantError::InvalidConfig(
                "topology.pcc_cable: impedance is zero".into(),
            ));
        }
        Ok(owner)
    }
}

/// Everything the plant needs to build its matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub grid: GridParams,
    pub topology: Topology,
    pub turbines: Vec<TurbineElecParams>,
    /// Turbine ratings as fractions of the farm base.
    pub ratings: Vec<f64>,
    /// Available wind power per turbine, turbine base.
    pub p_wind: Vec<f64>,
    pub dt: f64,
    pub omega_base: f64,
}

impl PlantConfig {
    /// `n` identical turbines sharing the farm base equally.
    pub fn uniform(n: usize, topology: Topology) -> Self {
        Self {
            grid: GridParams::default(),
            topology,
            turbines: vec![TurbineElecParams::default(); n],
            ratings: vec![1.0 / n as f64; n],
            p_wind: vec![1.0; n],
            dt: 50e-6,
            omega_base: 2.0 * std::f64::consts::PI * 50.0,
        }
    }

    pub fn validate(&self) -> Result<Vec<usize>, PlantError> {
        let n = self.turbines.len();
        let bad = |s: String| Err(PlantError::InvalidConfig(s));
        if n == 0 {
            return bad("at least one turbine is required".into());
        }
        if self.ratings.len() != n || self.p_wind.len() != n {
            return bad("ratings and wind inputs must match the turbine count".into());
        }
        if !(self.grid.scr > 0.0) || !(self.grid.rx_ratio >= 0.0) {
            return bad("grid: need scr > 0 and rx_ratio >= 0".into());
        }
        if self.grid.freq_model && !(self.grid.h_grid_s > 0.0) {
            return bad("grid.h_grid_s must be > 0".into());
        }
        if !(self.dt > 0.0) {
            return bad("plant dt must be > 0".into());
        }
        for (i, t) in self.turbines.iter().enumerate() {
            if !(t.c_f_pu > 0.0) || !(t.l_f_pu > 0.0) || !(t.x_tr_pu > 0.0) || !(t.c_dc_s > 0.0)
            {
                return bad(format!(
                    "turbines[{i}]: c_f, l_f, x_tr and c_dc must be > 0"
                ));
            }
            if !(self.ratings[i] > 0.0) {
                return bad(format!("turbines[{i}]: rating must be > 0"));
            }
        }
        self.topology.membership(n)
    }
}
