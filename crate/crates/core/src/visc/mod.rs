//! Per-turbine controller: the virtual synchronous condenser stack, the
//! grid-following PQ fallback and bumpless switching between them.
//!
//! Angles exported to the plant are radians of the controller dq frame
//! relative to the nominally rotating network frame. Every measurement
//! carries the frame it was expressed in, so the controller can rotate it.

mod blocks;
mod params;

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::dsp::{
    Discretizer, DspError, InertiaEmulator, InertiaParams, PiParams, PiRegulator, Saturation,
    SumPerturbation, TrapezoidalInertia,
};

pub use blocks::{
    avr_error, avr_step, dynamic_impedance, electrical_model, inner_loop_step, limit_current,
    machine_side_step, supplementary_step, InnerLoop, MachineSide, SupplementaryChain,
};
pub use params::{
    AvrParams, ElecParams, InertiaConfig, InnerParams, LimiterParams, MachineParams, PqParams,
    SupplementaryParams, ViscParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViscError {
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
    #[error("virtual impedance is zero")]
    ZeroImpedance,
    #[error("ViSC mode is disabled for this turbine")]
    ModeDisabled,
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    #[default]
    GridFollowingPQ,
    ViSC,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::GridFollowingPQ => 0,
            Mode::ViSC => 1,
        }
    }
}

/// Sampled plant quantities in the dq frame at `frame_angle`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurements {
    pub v_od: f64,
    pub v_oq: f64,
    pub i_cvd: f64,
    pub i_cvq: f64,
    pub i_od: f64,
    pub i_oq: f64,
    pub p_out: f64,
    pub q_out: f64,
    pub t_e: f64,
    pub v_dc: f64,
    pub omega_r: f64,
    pub p_mppt: f64,
    pub p_me: f64,
    /// Frame of the dq quantities, rad relative to the network frame.
    pub frame_angle: f64,
    /// Speed of that frame, pu.
    pub omega_frame: f64,
    /// Modulation currently applied by the converter, same frame.
    pub v_invd_applied: f64,
    pub v_invq_applied: f64,
    pub i_sd_applied: f64,
    pub pitch_applied: f64,
}

fn rot(d: f64, q: f64, by: f64) -> (f64, f64) {
    let z = Complex64::new(d, q) * Complex64::from_polar(1.0, -by);
    (z.re, z.im)
}

impl Measurements {
    /// Re-expresses every dq pair in the frame at `angle`.
    pub fn rotated(&self, angle: f64) -> Measurements {
        let by = angle - self.frame_angle;
        if by == 0.0 {
            return *self;
        }
        let (v_od, v_oq) = rot(self.v_od, self.v_oq, by);
        let (i_cvd, i_cvq) = rot(self.i_cvd, self.i_cvq, by);
        let (i_od, i_oq) = rot(self.i_od, self.i_oq, by);
        let (v_invd_applied, v_invq_applied) = rot(self.v_invd_applied, self.v_invq_applied, by);
        Measurements {
            v_od,
            v_oq,
            i_cvd,
            i_cvq,
            i_od,
            i_oq,
            v_invd_applied,
            v_invq_applied,
            frame_angle: angle,
            ..*self
        }
    }

    pub fn v_mag(&self) -> f64 {
        self.v_od.hypot(self.v_oq)
    }

    pub fn is_sane(&self) -> bool {
        let all = [
            self.v_od, self.v_oq, self.i_cvd, self.i_cvq, self.i_od, self.i_oq, self.p_out,
            self.q_out, self.t_e, self.v_dc,
        ];
        all.iter().all(|x| x.is_finite()) && self.v_mag() <= 2.0
    }
}

/// One sample of controller output.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    pub v_invd: f64,
    pub v_invq: f64,
    pub i_sd: f64,
    pub i_sq: f64,
    pub pitch: f64,
    /// Controller frame angle, rad.
    pub delta: f64,
    /// Frame speed, pu.
    pub omega: f64,
    /// Current reference after the limiter.
    pub i_ref: (f64, f64),
    pub limited: bool,
    pub mode: Mode,
}

impl ControlOutput {
    /// Modulation reference in the network frame.
    pub fn v_inv_network(&self) -> Complex64 {
        Complex64::new(self.v_invd, self.v_invq) * Complex64::from_polar(1.0, self.delta)
    }
}

#[derive(Debug, Clone)]
enum Inertia {
    Recursive(InertiaEmulator),
    /// Carries absolute speed; the deviation angle subtracts the nominal ramp.
    Trapezoidal(TrapezoidalInertia),
}

#[derive(Debug, Clone)]
struct PqLoops {
    p: PiRegulator,
    q: PiRegulator,
}

/// Complete controller memory for one turbine.
#[derive(Debug, Clone)]
pub struct ViscState {
    mode: Mode,
    inertia: Inertia,
    /// Emulated rotor angle minus the nominal ramp, pu seconds.
    delta_dev: f64,
    omega: f64,
    avr: PiRegulator,
    supp: SupplementaryChain,
    inner: InnerLoop,
    machine: MachineSide,
    pq: PqLoops,
    limited: bool,
    /// `E - v_od` at the previous sample, the direction the limiter resists.
    e_gap: f64,
    last_angle: f64,
    last: ControlOutput,
    pub master_alive: bool,
}

impl ViscState {
    pub fn new(params: &ViscParams) -> Result<Self, ViscError> {
        params.validate()?;
        let ts = params.ts;
        let disc = params.discretizer;
        let mut stream = params.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut perturb = || {
            stream = stream.wrapping_add(1);
            (disc == Discretizer::Trapezoidal && params.trap_perturbation > 0.0)
                .then(|| SumPerturbation::new(params.trap_perturbation, stream))
        };
        let mut pi = |p: PiParams| {
            PiRegulator::new(p, ts, disc)
                .with_anti_windup(params.anti_windup)
                .with_perturbation(perturb())
        };
        let avr = pi(params.avr_pi());
        let inner = InnerLoop::new(pi(params.inner_pi()), pi(params.inner_pi()));
        let m = &params.machine;
        let machine = MachineSide::new(
            pi(params.dc_pi()).with_limits(-m.i_sd_max_pu, m.i_sd_max_pu),
            pi(params.pitch_pi()).with_limits(0.0, m.pitch_max_deg),
        );
        let pq = PqLoops {
            p: pi(PiParams {
                kp: params.pq.kp_p,
                ki: params.pq.ki_p,
            }),
            q: pi(PiParams {
                kp: params.pq.kp_q,
                ki: params.pq.ki_q,
            }),
        };
        let inertia = match disc {
            Discretizer::Tustin => {
                let ip = InertiaParams::new(params.inertia.h_s, params.inertia.d_pu, ts)?;
                Inertia::Recursive(InertiaEmulator::new(ip, ts, params.w_path)?)
            }
            Discretizer::Trapezoidal => Inertia::Trapezoidal(TrapezoidalInertia::new(
                params.inertia.h_s,
                params.inertia.d_pu,
                ts,
                perturb(),
            )),
        };
        Ok(Self {
            mode: Mode::GridFollowingPQ,
            inertia,
            delta_dev: 0.0,
            omega: 1.0,
            avr,
            supp: SupplementaryChain::new(&params.supplementary, ts)?,
            inner,
            machine,
            pq,
            limited: false,
            e_gap: 0.0,
            last_angle: 0.0,
            last: ControlOutput::default(),
            master_alive: true,
        })
    }

    /// Fresh state in `mode`, seeded from `meas`.
    pub fn from_measurements(
        params: &ViscParams,
        mode: Mode,
        meas: &Measurements,
    ) -> Result<Self, ViscError> {
        let mut s = Self::new(params)?;
        s.seed(params, mode, meas)?;
        Ok(s)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn last_output(&self) -> &ControlOutput {
        &self.last
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Re-initializes every history at the operating point in `meas`.
    fn seed(&mut self, params: &ViscParams, mode: Mode, meas: &Measurements) -> Result<(), ViscError> {
        self.mode = mode;
        self.limited = false;
        self.machine.seed(&params.machine, meas);
        match mode {
            Mode::ViSC => self.seed_visc(params, meas)?,
            Mode::GridFollowingPQ => self.seed_pq(params, meas),
        }
        let m = meas.rotated(self.last_angle);
        self.inner.seed(
            &params.inner,
            &m,
            (0.0, 0.0),
            (m.v_invd_applied, m.v_invq_applied),
        );
        self.last = ControlOutput {
            v_invd: m.v_invd_applied,
            v_invq: m.v_invq_applied,
            i_sd: meas.i_sd_applied,
            i_sq: 0.0,
            pitch: meas.pitch_applied,
            delta: self.last_angle,
            omega: self.omega,
            i_ref: (m.i_cvd, m.i_cvq),
            limited: false,
            mode,
        };
        Ok(())
    }

    fn seed_visc(&mut self, params: &ViscParams, meas: &Measurements) -> Result<(), ViscError> {
        let e = &params.elec;
        let omega = meas.omega_frame;
        let x = omega * e.l_vir_pu / e.omega_s_pu;
        let emf = Complex64::new(meas.v_od, meas.v_oq)
            + Complex64::new(e.r_vir_pu, x) * Complex64::new(meas.i_cvd, meas.i_cvq);
        let angle = meas.frame_angle + emf.arg();
        let delta_dev = angle / params.omega_base;
        let omega_dev = omega - 1.0;
        let ws = e.omega_s_pu;
        match &mut self.inertia {
            Inertia::Recursive(em) => em.seed(delta_dev, omega_dev, meas.t_e, ws - 1.0),
            Inertia::Trapezoidal(tr) => {
                // The seed instant is sample 0 of the running sums.
                tr.seed(delta_dev, omega);
                tr.step(meas.t_e, ws);
            }
        }
        self.delta_dev = delta_dev;
        self.omega = omega;
        self.last_angle = angle;
        self.supp.seed(ws - omega);
        let err = avr_error(&params.avr, meas.v_mag(), meas.q_out);
        self.avr.seed(err, emf.norm() - params.avr.e_ref_pu);
        self.e_gap = emf.norm() - meas.rotated(angle).v_od;
        Ok(())
    }

    fn seed_pq(&mut self, params: &ViscParams, meas: &Measurements) {
        let angle = meas.frame_angle + meas.v_oq.atan2(meas.v_od);
        let m = meas.rotated(angle);
        let (ep, eq) = pq_errors(params, &m);
        self.pq.p.seed(ep, m.i_cvd);
        self.pq.q.seed(eq, -m.i_cvq);
        self.omega = meas.omega_frame;
        self.last_angle = angle;
    }
}

fn pq_errors(params: &ViscParams, m: &Measurements) -> (f64, f64) {
    let p_ref = params.pq.p_ref_pu.min(m.p_mppt);
    (p_ref - m.p_out, params.pq.q_ref_pu - m.q_out)
}

fn limiter_saturation(limited: bool, delta_e: f64) -> Saturation {
    match (limited, delta_e > 0.0) {
        (false, _) => Saturation::None,
        (true, true) => Saturation::High,
        (true, false) => Saturation::Low,
    }
}

fn finish(
    params: &ViscParams,
    state: &mut ViscState,
    m: &Measurements,
    raw_ref: (f64, f64),
    angle: f64,
    omega: f64,
) -> ControlOutput {
    let ((id, iq), limited) = limit_current(raw_ref.0, raw_ref.1, params.limiter.i_max_pu);
    state.limited = limited;
    let (vd, vq) = inner_loop_step(&params.inner, &mut state.inner, (id, iq), m);
    let (i_sd, i_sq, pitch) = machine_side_step(&params.machine, &mut state.machine, params.ts, m);
    state.last_angle = angle;
    state.omega = omega;
    let out = ControlOutput {
        v_invd: vd,
        v_invq: vq,
        i_sd,
        i_sq,
        pitch,
        delta: angle,
        omega,
        i_ref: (id, iq),
        limited,
        mode: state.mode,
    };
    state.last = out;
    out
}

/// One ViSC sample: inertia, AVR with supplementary signal, electrical
/// model, current limiter, inner loop, machine side.
pub fn visc_step(
    params: &ViscParams,
    state: &mut ViscState,
    meas: &Measurements,
) -> Result<ControlOutput, ViscError> {
    let ws = params.elec.omega_s_pu;
    let (delta_dev, omega) = match &mut state.inertia {
        Inertia::Recursive(em) => {
            let (d, w) = em.step(meas.t_e, ws - 1.0);
            (d, 1.0 + w)
        }
        Inertia::Trapezoidal(tr) => {
            let (d, w) = tr.step(meas.t_e, ws);
            let elapsed = tr.samples().saturating_sub(1) as f64 * params.ts;
            (d - elapsed, w)
        }
    };
    state.delta_dev = delta_dev;
    let angle = delta_dev * params.omega_base;
    let m = meas.rotated(angle);

    let v_f = supplementary_step(&mut state.supp, ws, omega);
    let e = avr_step(
        &params.avr,
        &mut state.avr,
        m.v_mag(),
        m.q_out,
        v_f,
        limiter_saturation(state.limited, state.e_gap),
    );
    let e_total = e + params.avr.e_ref_pu;
    let raw = electrical_model(&params.elec, e_total, omega, m.v_od, m.v_oq)?;
    let out = finish(params, state, &m, raw, angle, omega);
    state.e_gap = e_total - m.v_od;
    Ok(out)
}

/// One grid-following sample: the frame follows the terminal voltage and
/// outer PI loops set the current references.
pub fn pq_step(
    params: &ViscParams,
    state: &mut ViscState,
    meas: &Measurements,
) -> Result<ControlOutput, ViscError> {
    let angle = meas.frame_angle + meas.v_oq.atan2(meas.v_od);
    let mut step = angle - state.last_angle;
    step -= (2.0 * PI) * (step / (2.0 * PI)).round();
    let angle = state.last_angle + step;
    let raw = 1.0 + step / (params.ts * params.omega_base);
    let a = params.ts / (params.pq.t_pll_s + params.ts);
    let omega = state.omega + a * (raw - state.omega);
    let m = meas.rotated(angle);
    let (ep, eq) = pq_errors(params, &m);
    let sat = |lim: bool, e: f64| limiter_saturation(lim, e);
    let id = state.pq.p.step_with(ep, sat(state.limited, state.last.i_ref.0));
    let iq = -state.pq.q.step_with(eq, sat(state.limited, -state.last.i_ref.1));
    Ok(finish(params, state, &m, (id, iq), angle, omega))
}

/// Dispatches on the current mode.
pub fn control_step(
    params: &ViscParams,
    state: &mut ViscState,
    meas: &Measurements,
) -> Result<ControlOutput, ViscError> {
    match state.mode {
        Mode::ViSC => visc_step(params, state, meas),
        Mode::GridFollowingPQ => pq_step(params, state, meas),
    }
}

/// Changes mode, re-seeding every history from `meas`. `visc_allowed` is the
/// caller's view of the communication tables.
pub fn switch_mode(
    params: &ViscParams,
    state: &mut ViscState,
    target: Mode,
    meas: &Measurements,
    visc_allowed: bool,
) -> Result<(), ViscError> {
    if target == Mode::ViSC && !visc_allowed {
        return Err(ViscError::ModeDisabled);
    }
    if target == state.mode {
        return Ok(());
    }
    state.seed(params, target, meas)
}

#[cfg(test)]
mod tests;
