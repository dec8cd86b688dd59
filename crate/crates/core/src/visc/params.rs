use serde::{Deserialize, Serialize};

use crate::dsp::{Discretizer, PiParams, WPath};

use super::ViscError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InertiaConfig {
    pub h_s: f64,
    pub d_pu: f64,
}

impl Default for InertiaConfig {
    fn default() -> Self {
        Self { h_s: 3.0, d_pu: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvrParams {
    pub kpv: f64,
    pub kiv: f64,
    /// Reactive droop, pu voltage per pu reactive power.
    pub mq: f64,
    pub v_ref_pu: f64,
    pub q_ref_pu: f64,
    pub e_ref_pu: f64,
}

impl Default for AvrParams {
    fn default() -> Self {
        Self {
            kpv: 0.5,
            kiv: 20.0,
            mq: 0.05,
            v_ref_pu: 1.0,
            q_ref_pu: 0.0,
            e_ref_pu: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElecParams {
    pub r_vir_pu: f64,
    pub l_vir_pu: f64,
    pub omega_s_pu: f64,
}

impl Default for ElecParams {
    fn default() -> Self {
        Self {
            r_vir_pu: 0.05,
            l_vir_pu: 0.3,
            omega_s_pu: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimiterParams {
    pub i_max_pu: f64,
}

impl Default for LimiterParams {
    fn default() -> Self {
        Self { i_max_pu: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupplementaryParams {
    pub enabled: bool,
    pub t_lpf_s: f64,
    pub t_v1_s: f64,
    pub t_v2_s: f64,
    pub t_1_s: f64,
    pub t_2_s: f64,
    pub k_f1: f64,
    pub k_f2: f64,
}

impl Default for SupplementaryParams {
    fn default() -> Self {
        Self {
            enabled: false,
            t_lpf_s: 0.01,
            t_v1_s: 0.5,
            t_v2_s: 0.05,
            t_1_s: 0.1,
            t_2_s: 0.05,
            k_f1: 5.0,
            k_f2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerParams {
    pub kpc: f64,
    pub kic: f64,
    pub k_ffv: f64,
    pub k_ad: f64,
    pub l_f_pu: f64,
    pub r_f_pu: f64,
    /// Modulation magnitude limit.
    pub v_max_pu: f64,
}

impl Default for InnerParams {
    fn default() -> Self {
        Self {
            kpc: 0.2,
            kic: 10.0,
            k_ffv: 1.0,
            k_ad: 0.0,
            l_f_pu: 0.08,
            r_f_pu: 0.003,
            v_max_pu: 1.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    pub kp_dc: f64,
    pub ki_dc: f64,
    pub v_dc_ref_pu: f64,
    /// Symmetric clamp on the stator d-axis current command.
    pub i_sd_max_pu: f64,
    pub kp_pitch: f64,
    pub ki_pitch: f64,
    pub pitch_rate_deg_s: f64,
    pub pitch_max_deg: f64,
}

impl Default for MachineParams {
    fn default() -> Self {
        Self {
            kp_dc: 2.0,
            ki_dc: 30.0,
            v_dc_ref_pu: 1.0,
            i_sd_max_pu: 1.2,
            kp_pitch: 5.0,
            ki_pitch: 20.0,
            pitch_rate_deg_s: 10.0,
            pitch_max_deg: 90.0,
        }
    }
}

/// Grid-following active/reactive power mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PqParams {
    pub kp_p: f64,
    pub ki_p: f64,
    pub kp_q: f64,
    pub ki_q: f64,
    /// Active power setpoint; the delivered reference is also capped by the
    /// available wind power.
    pub p_ref_pu: f64,
    pub q_ref_pu: f64,
    /// Low-pass time constant of the frame-frequency estimate.
    pub t_pll_s: f64,
}

impl Default for PqParams {
    fn default() -> Self {
        Self {
            kp_p: 0.2,
            ki_p: 20.0,
            kp_q: 0.2,
            ki_q: 20.0,
            p_ref_pu: 1.0,
            q_ref_pu: 0.0,
            t_pll_s: 0.02,
        }
    }
}

/// Every tunable of one turbine's controller stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViscParams {
    pub inertia: InertiaConfig,
    pub avr: AvrParams,
    pub elec: ElecParams,
    pub limiter: LimiterParams,
    pub supplementary: SupplementaryParams,
    pub inner: InnerParams,
    pub machine: MachineParams,
    pub pq: PqParams,
    /// Conditional integration on every regulator.
    pub anti_windup: bool,
    /// Controller sampling period; set from the run configuration.
    #[serde(skip)]
    pub ts: f64,
    #[serde(skip)]
    pub discretizer: Discretizer,
    #[serde(skip)]
    pub w_path: WPath,
    /// Per-step stored-sum disturbance for the cumulative-sum forms.
    #[serde(skip)]
    pub trap_perturbation: f64,
    #[serde(skip)]
    pub seed: u64,
    /// Base angular frequency, rad/s.
    #[serde(skip)]
    pub omega_base: f64,
}

impl Default for ViscParams {
    fn default() -> Self {
        Self {
            inertia: InertiaConfig::default(),
            avr: AvrParams::default(),
            elec: ElecParams::default(),
            limiter: LimiterParams::default(),
            supplementary: SupplementaryParams::default(),
            inner: InnerParams::default(),
            machine: MachineParams::default(),
            pq: PqParams::default(),
            anti_windup: true,
            ts: 0.00065,
            discretizer: Discretizer::Tustin,
            w_path: WPath::Central,
            trap_perturbation: 0.0,
            seed: 0,
            omega_base: 2.0 * std::f64::consts::PI * 50.0,
        }
    }
}

impl ViscParams {
    pub fn validate(&self) -> Result<(), ViscError> {
        let bad = |what: &str| Err(ViscError::InvalidParams(what.to_string()));
        if !(self.avr.mq > 0.0) {
            return bad("avr.mq must be > 0");
        }
        if !(self.pq.t_pll_s >= 0.0) {
            return bad("pq.t_pll_s must be >= 0");
        }
        if !(self.limiter.i_max_pu > 0.0) {
            return bad("limiter.i_max_pu must be > 0");
        }
        if self.elec.r_vir_pu.powi(2) + self.elec.l_vir_pu.powi(2) <= 0.0 {
            return bad("elec: r_vir^2 + l_vir^2 must be > 0");
        }
        if !(self.ts > 0.0) || !self.ts.is_finite() {
            return bad("ts must be > 0");
        }
        if !(self.inertia.h_s > 0.0) || !(self.inertia.d_pu >= 0.0) {
            return bad("inertia: need h_s > 0 and d_pu >= 0");
        }
        let s = &self.supplementary;
        if s.enabled
            && [s.t_lpf_s, s.t_v1_s, s.t_v2_s, s.t_1_s, s.t_2_s]
                .iter()
                .any(|t| !(*t > 0.0))
        {
            return bad("supplementary time constants must be > 0 when enabled");
        }
        for (name, p) in [
            ("avr", self.avr_pi()),
            ("inner", self.inner_pi()),
            ("machine.dc", self.dc_pi()),
            ("machine.pitch", self.pitch_pi()),
            ("pq.p", PiParams { kp: self.pq.kp_p, ki: self.pq.ki_p }),
            ("pq.q", PiParams { kp: self.pq.kp_q, ki: self.pq.ki_q }),
        ] {
            if p.validate().is_err() {
                return bad(&format!("{name}: ki must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn avr_pi(&self) -> PiParams {
        PiParams {
            kp: self.avr.kpv,
            ki: self.avr.kiv,
        }
    }

    pub fn inner_pi(&self) -> PiParams {
        PiParams {
            kp: self.inner.kpc,
            ki: self.inner.kic,
        }
    }

    pub fn dc_pi(&self) -> PiParams {
        PiParams {
            kp: self.machine.kp_dc,
            ki: self.machine.ki_dc,
        }
    }

    pub fn pitch_pi(&self) -> PiParams {
        PiParams {
            kp: self.machine.kp_pitch,
            ki: self.machine.ki_pitch,
        }
    }
}
