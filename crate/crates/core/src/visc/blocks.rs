//! Building blocks of the grid-side and machine-side control.

use crate::dsp::{tustin_discretize, DiscreteBlock, PiRegulator, RationalTf, Saturation};

use super::params::{AvrParams, ElecParams, InnerParams, MachineParams, SupplementaryParams};
use super::{Measurements, ViscError};

/// Composite AVR error `(V* - V) + mq (Q* - Q)`.
pub fn avr_error(p: &AvrParams, v_meas: f64, q_meas: f64) -> f64 {
    (p.v_ref_pu - v_meas) + p.mq * (p.q_ref_pu - q_meas)
}

/// Internal EMF deviation `E(k)`: the PI recursion on the composite error plus
/// the supplementary signal. `E*` is added by the caller.
pub fn avr_step(
    p: &AvrParams,
    pi: &mut PiRegulator,
    v_meas: f64,
    q_meas: f64,
    v_f: f64,
    downstream: Saturation,
) -> f64 {
    pi.step_with(avr_error(p, v_meas, q_meas), downstream) + v_f
}

/// `(R_v, X_v)`: the admittance-form dynamic impedance at speed `omega`.
pub fn dynamic_impedance(p: &ElecParams, omega: f64) -> Result<(f64, f64), ViscError> {
    let x = omega * p.l_vir_pu / p.omega_s_pu;
    let den = x * x + p.r_vir_pu * p.r_vir_pu;
    if den == 0.0 || !den.is_finite() {
        return Err(ViscError::ZeroImpedance);
    }
    Ok((p.r_vir_pu / den, x / den))
}

/// Quasi-stationary stator model: current reference from the EMF `e_total`
/// (d-axis scalar in the controller frame) and the terminal voltage.
pub fn electrical_model(
    p: &ElecParams,
    e_total: f64,
    omega: f64,
    v_od: f64,
    v_oq: f64,
) -> Result<(f64, f64), ViscError> {
    let (rv, xv) = dynamic_impedance(p, omega)?;
    let de = e_total - v_od;
    Ok((rv * de - xv * v_oq, -xv * de - rv * v_oq))
}

/// Circular limiter: scales `(i_d, i_q)` onto the `i_max` circle when outside,
/// preserving the angle. Returns the limited pair and whether it clipped.
pub fn limit_current(i_d: f64, i_q: f64, i_max: f64) -> ((f64, f64), bool) {
    let mag = i_d.hypot(i_q);
    if mag <= i_max {
        ((i_d, i_q), false)
    } else {
        let s = i_max / mag;
        ((i_d * s, i_q * s), true)
    }
}

/// Frequency-deviation damping chain: low-pass, two parallel washouts and a
/// squared lead-lag, each factor discretized on its own.
#[derive(Debug, Clone)]
pub struct SupplementaryChain {
    enabled: bool,
    lpf: DiscreteBlock,
    washout1: DiscreteBlock,
    washout2: DiscreteBlock,
    lead_lag: [DiscreteBlock; 2],
}

impl SupplementaryChain {
    pub fn new(p: &SupplementaryParams, ts: f64) -> Result<Self, ViscError> {
        // Disabled chains still carry valid (unused) blocks.
        let pos = |t: f64| if t > 0.0 { t } else { 1.0 };
        let tf = |num: &[f64], den: &[f64]| -> Result<DiscreteBlock, ViscError> {
            let tf = RationalTf::new(num, den)?;
            Ok(tustin_discretize(&tf, ts)?)
        };
        let lead = tf(&[1.0, pos(p.t_1_s)], &[1.0, pos(p.t_2_s)])?;
        Ok(Self {
            enabled: p.enabled,
            lpf: tf(&[1.0], &[1.0, pos(p.t_lpf_s)])?,
            washout1: tf(&[0.0, p.k_f1], &[1.0, pos(p.t_v1_s)])?,
            washout2: tf(&[0.0, p.k_f2], &[1.0, pos(p.t_v2_s)])?,
            lead_lag: [lead.clone(), lead],
        })
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    /// Resets every stage to steady state for a constant input `dw`.
    pub fn seed(&mut self, dw: f64) {
        self.lpf.seed_steady(dw);
        let x = self.lpf.dc_gain().unwrap_or(1.0) * dw;
        self.washout1.seed_steady(x);
        self.washout2.seed_steady(x);
        for b in &mut self.lead_lag {
            b.seed_steady(0.0);
        }
    }

    /// `V_F(k)` for input `omega_s - omega`.
    pub fn step(&mut self, freq_dev: f64) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        let x = self.lpf.step(freq_dev);
        let y = self.washout1.step(x) + self.washout2.step(x);
        let y = self.lead_lag[0].step(y);
        self.lead_lag[1].step(y)
    }
}

/// `omega_s - omega` through the supplementary chain.
pub fn supplementary_step(chain: &mut SupplementaryChain, omega_s: f64, omega: f64) -> f64 {
    chain.step(omega_s - omega)
}

/// Per-axis state of the inner current loop. The regulator carries the PI
/// part of the modulation recursion; decoupling, feedforward and damping are
/// added to its output every sample.
#[derive(Debug, Clone)]
pub struct InnerLoop {
    pub d: PiRegulator,
    pub q: PiRegulator,
    /// Modulation was clipped on the previous sample.
    clipped: bool,
    last: (f64, f64),
}

impl InnerLoop {
    pub fn new(d: PiRegulator, q: PiRegulator) -> Self {
        Self {
            d,
            q,
            clipped: false,
            last: (0.0, 0.0),
        }
    }

    /// Non-recursive terms of the modulation references.
    pub fn algebraic_terms(p: &InnerParams, m: &Measurements) -> (f64, f64) {
        let d = p.l_f_pu * p.r_f_pu * m.i_cvd - p.l_f_pu * m.i_cvq
            + p.k_ffv * m.v_od
            + p.k_ad * (m.i_od - m.i_cvd);
        let q = p.l_f_pu * p.r_f_pu * m.i_cvq
            + p.l_f_pu * m.i_cvd
            + p.k_ffv * m.v_oq
            + p.k_ad * (m.i_oq - m.i_cvq);
        (d, q)
    }

    /// Seeds so that, with zero tracking error, the next output is `v_inv`.
    pub fn seed(&mut self, p: &InnerParams, m: &Measurements, err: (f64, f64), v_inv: (f64, f64)) {
        let (ad, aq) = Self::algebraic_terms(p, m);
        self.d.seed(err.0, v_inv.0 - ad);
        self.q.seed(err.1, v_inv.1 - aq);
        self.clipped = false;
        self.last = v_inv;
    }

    pub fn last(&self) -> (f64, f64) {
        self.last
    }

    pub fn step(&mut self, p: &InnerParams, refs: (f64, f64), m: &Measurements) -> (f64, f64) {
        let sat = |clipped: bool, v: f64| match (clipped, v > 0.0) {
            (false, _) => Saturation::None,
            (true, true) => Saturation::High,
            (true, false) => Saturation::Low,
        };
        let ed = refs.0 - m.i_cvd;
        let eq = refs.1 - m.i_cvq;
        let pd = self.d.step_with(ed, sat(self.clipped, self.last.0));
        let pq = self.q.step_with(eq, sat(self.clipped, self.last.1));
        let (ad, aq) = Self::algebraic_terms(p, m);
        let (vd, vq) = (pd + ad, pq + aq);
        let mag = vd.hypot(vq);
        let out = if mag > p.v_max_pu {
            self.clipped = true;
            (vd * p.v_max_pu / mag, vq * p.v_max_pu / mag)
        } else {
            self.clipped = false;
            (vd, vq)
        };
        self.last = out;
        out
    }
}

pub fn inner_loop_step(
    p: &InnerParams,
    state: &mut InnerLoop,
    refs: (f64, f64),
    meas: &Measurements,
) -> (f64, f64) {
    state.step(p, refs, meas)
}

/// DC-link and pitch regulation.
#[derive(Debug, Clone)]
pub struct MachineSide {
    pub dc: PiRegulator,
    pub pitch: PiRegulator,
    pitch_out: f64,
}

impl MachineSide {
    pub fn new(dc: PiRegulator, pitch: PiRegulator) -> Self {
        Self {
            dc,
            pitch,
            pitch_out: 0.0,
        }
    }

    pub fn seed(&mut self, p: &MachineParams, m: &Measurements) {
        self.dc.seed(p.v_dc_ref_pu - m.v_dc, m.i_sd_applied);
        self.pitch.seed(m.p_me - m.p_mppt, m.pitch_applied);
        self.pitch_out = m.pitch_applied;
    }

    /// Returns `(i_sd*, i_sq*, pitch*)`; `i_sq*` is always zero.
    pub fn step(&mut self, p: &MachineParams, ts: f64, m: &Measurements) -> (f64, f64, f64) {
        let i_sd = self.dc.step(p.v_dc_ref_pu - m.v_dc);
        let target = self.pitch.step(m.p_me - m.p_mppt);
        let max_move = p.pitch_rate_deg_s * ts;
        let moved = self.pitch_out + (target - self.pitch_out).clamp(-max_move, max_move);
        self.pitch_out = moved.clamp(0.0, p.pitch_max_deg);
        (i_sd, 0.0, self.pitch_out)
    }
}

pub fn machine_side_step(
    p: &MachineParams,
    state: &mut MachineSide,
    ts: f64,
    meas: &Measurements,
) -> (f64, f64, f64) {
    state.step(p, ts, meas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{Discretizer, PiParams};
    use approx::assert_relative_eq;

    #[test]
    fn avr_null_error_holds() {
        let p = AvrParams::default();
        let mut pi = PiRegulator::new(PiParams::new(0.5, 20.0).unwrap(), 0.00067, Discretizer::Tustin);
        pi.seed(0.0, 0.37);
        let e = avr_step(&p, &mut pi, p.v_ref_pu, p.q_ref_pu, 0.0, Saturation::None);
        assert_relative_eq!(e, 0.37, epsilon = 1e-15);
    }

    #[test]
    fn avr_single_step_substitution() {
        let p = AvrParams {
            kpv: 0.5,
            kiv: 20.0,
            mq: 0.0,
            v_ref_pu: 1.0,
            q_ref_pu: 0.0,
            e_ref_pu: 1.0,
        };
        let mut pi = PiRegulator::new(PiParams::new(0.5, 20.0).unwrap(), 0.00067, Discretizer::Tustin);
        // V* - V was 0.01 at k-1, E(k-1) = 1.0; now V* - V = 0.02.
        pi.seed(0.01, 1.0);
        let e = avr_step(&p, &mut pi, 0.98, 0.0, 0.0, Saturation::None);
        // 1.0 + 0.000335 * 20 * 0.03 + 0.5 * 0.01
        assert_relative_eq!(e, 1.005201, epsilon = 1e-12);
        assert!((e - 1.0052).abs() <= 1.0e-6 + 1e-12);
    }

    #[test]
    fn droop_equilibrium_reactive_power() {
        let p = AvrParams {
            v_ref_pu: 1.0,
            mq: 0.05,
            ..AvrParams::default()
        };
        // Zero composite error at V = 0.98 requires Q - Q* = 0.4.
        let q = p.q_ref_pu + 0.4;
        assert_relative_eq!(avr_error(&p, 0.98, q), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn electrical_model_resistive() {
        let p = ElecParams {
            r_vir_pu: 0.1,
            l_vir_pu: 0.0,
            omega_s_pu: 1.0,
        };
        let (id, iq) = electrical_model(&p, 1.05, 1.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(id, 0.5, epsilon = 1e-12);
        assert_relative_eq!(iq, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn electrical_model_zero_difference() {
        let p = ElecParams::default();
        let (id, iq) = electrical_model(&p, 0.97, 1.0, 0.97, 0.0).unwrap();
        assert_eq!((id, iq), (0.0, 0.0));
    }

    #[test]
    fn electrical_model_matches_complex_division() {
        let p = ElecParams {
            r_vir_pu: 0.01,
            l_vir_pu: 0.3,
            omega_s_pu: 1.0,
        };
        let (id, iq) = electrical_model(&p, 1.09, 1.0, 1.0, 0.0).unwrap();
        // Oracle: 0.09 / (0.01 + j0.3).
        let z = num_complex::Complex64::new(0.01, 0.3);
        let i = num_complex::Complex64::new(0.09, 0.0) / z;
        assert_relative_eq!(id, i.re, epsilon = 1e-12);
        assert_relative_eq!(iq, i.im, epsilon = 1e-12);
        assert_relative_eq!(id, 0.00999, epsilon = 1e-5);
        assert_relative_eq!(iq, -0.2997, epsilon = 1e-4);
        assert_relative_eq!(id.hypot(iq), 0.2999, epsilon = 1e-4);
    }

    #[test]
    fn zero_impedance_rejected() {
        let p = ElecParams {
            r_vir_pu: 0.0,
            l_vir_pu: 0.0,
            omega_s_pu: 1.0,
        };
        assert!(matches!(
            electrical_model(&p, 1.0, 1.0, 1.0, 0.0),
            Err(ViscError::ZeroImpedance)
        ));
    }

    #[test]
    fn limiter_examples() {
        let ((d, q), hit) = limit_current(1.2, 1.6, 1.5);
        assert!(hit);
        assert_relative_eq!(d, 0.9, epsilon = 1e-12);
        assert_relative_eq!(q, 1.2, epsilon = 1e-12);
        assert_eq!(limit_current(0.5, 0.5, 1.5), ((0.5, 0.5), false));
        assert_eq!(limit_current(1.2, 0.9, 1.5), ((1.2, 0.9), false));
    }

    #[test]
    fn supplementary_zero_input_is_silent() {
        let p = SupplementaryParams {
            enabled: true,
            ..SupplementaryParams::default()
        };
        let mut chain = SupplementaryChain::new(&p, 0.00065).unwrap();
        chain.seed(0.0);
        for _ in 0..100 {
            assert_eq!(supplementary_step(&mut chain, 1.0, 1.0), 0.0);
        }
    }

    #[test]
    fn supplementary_disabled_outputs_zero() {
        let mut chain = SupplementaryChain::new(&SupplementaryParams::default(), 0.00065).unwrap();
        assert_eq!(chain.step(0.3), 0.0);
    }

    #[test]
    fn supplementary_washes_out_constant_deviation() {
        let p = SupplementaryParams {
            enabled: true,
            ..SupplementaryParams::default()
        };
        let ts = 0.00065;
        let mut chain = SupplementaryChain::new(&p, ts).unwrap();
        chain.seed(0.0);
        let horizon = 10.0 * p.t_v1_s.max(p.t_v2_s);
        let n = (horizon / ts).ceil() as usize;
        let mut peak = 0.0f64;
        let mut y = 0.0;
        for _ in 0..n {
            y = chain.step(0.01);
            peak = peak.max(y.abs());
        }
        assert!(peak > 1e-3, "chain should respond transiently");
        assert!(y.abs() < 1e-4, "residual {y}");
    }

    #[test]
    fn inner_loop_d_axis_substitution() {
        let p = InnerParams {
            kpc: 0.8,
            kic: 50.0,
            k_ffv: 1.0,
            k_ad: 0.7,
            l_f_pu: 0.08,
            r_f_pu: 0.003,
            v_max_pu: 10.0,
        };
        let pi = |_| PiRegulator::new(PiParams::new(0.8, 50.0).unwrap(), 0.00067, Discretizer::Tustin);
        let mut inner = InnerLoop::new(pi(()), pi(()));
        inner.d.seed(0.02, 0.9);
        inner.q.seed(0.0, 0.0);
        let m = Measurements {
            v_od: 0.95,
            i_cvd: 0.5,
            i_cvq: 0.1,
            i_od: 0.5,
            ..Measurements::default()
        };
        let (vd, _) = inner_loop_step(&p, &mut inner, (0.53, 0.1), &m);
        // 0.9 + 0.8*0.01 + 50*0.000335*0.05 + 0.08*0.003*0.5 - 0.08*0.1 + 0.95 + 0
        let expected = 0.9 + 0.008 + 0.0008375 + 0.00012 - 0.008 + 0.95;
        assert_relative_eq!(vd, expected, epsilon = 1e-12);
        assert_relative_eq!(vd, 1.8509575, epsilon = 1e-9);
    }

    #[test]
    fn inner_loop_null_error_persists() {
        let p = InnerParams {
            k_ffv: 1.0,
            k_ad: 0.7,
            ..InnerParams::default()
        };
        let pi = || PiRegulator::new(PiParams::new(0.3, 10.0).unwrap(), 0.00065, Discretizer::Tustin);
        let mut inner = InnerLoop::new(pi(), pi());
        inner.d.seed(0.0, 0.2);
        inner.q.seed(0.0, -0.1);
        let m = Measurements {
            i_cvd: 0.4,
            i_cvq: -0.3,
            i_od: 0.4,
            i_oq: -0.3,
            ..Measurements::default()
        };
        let (vd, vq) = inner.step(&p, (0.4, -0.3), &m);
        let (ad, aq) = InnerLoop::algebraic_terms(&p, &m);
        assert_relative_eq!(vd, 0.2 + ad, epsilon = 1e-15);
        assert_relative_eq!(vq, -0.1 + aq, epsilon = 1e-15);
    }

    #[test]
    fn inner_loop_axes_mirror() {
        // Swapping d/q inputs with (d, q) -> (q, -d) rotates the output the
        // same way when only cross-coupling and feedforward are active.
        let p = InnerParams {
            r_f_pu: 0.0,
            k_ad: 0.5,
            ..InnerParams::default()
        };
        let pi = || PiRegulator::new(PiParams::new(0.3, 10.0).unwrap(), 0.00065, Discretizer::Tustin);
        let m = Measurements {
            v_od: 0.9,
            v_oq: 0.2,
            i_cvd: 0.3,
            i_cvq: -0.4,
            i_od: 0.25,
            i_oq: -0.35,
            ..Measurements::default()
        };
        let rot = Measurements {
            v_od: m.v_oq,
            v_oq: -m.v_od,
            i_cvd: m.i_cvq,
            i_cvq: -m.i_cvd,
            i_od: m.i_oq,
            i_oq: -m.i_od,
            ..Measurements::default()
        };
        let mut a = InnerLoop::new(pi(), pi());
        let mut b = InnerLoop::new(pi(), pi());
        let (vd, vq) = a.step(&p, (0.35, -0.3), &m);
        let (rd, rq) = b.step(&p, (-0.3, -0.35), &rot);
        assert_relative_eq!(rd, vq, epsilon = 1e-12);
        assert_relative_eq!(rq, -vd, epsilon = 1e-12);
    }

    #[test]
    fn dc_link_pi_substitution() {
        let p = MachineParams {
            kp_dc: 2.0,
            ki_dc: 30.0,
            ..MachineParams::default()
        };
        let ts = 0.00067;
        let mk = |pp: PiParams| PiRegulator::new(pp, ts, Discretizer::Tustin);
        let mut ms = MachineSide::new(
            mk(PiParams::new(2.0, 30.0).unwrap()),
            mk(PiParams::new(0.0, 0.0).unwrap()),
        );
        ms.dc.seed(0.0, 0.4);
        let m = Measurements {
            v_dc: p.v_dc_ref_pu - 0.02,
            ..Measurements::default()
        };
        let (isd, isq, _) = machine_side_step(&p, &mut ms, ts, &m);
        assert_relative_eq!(isd, 0.4402, epsilon = 1e-5);
        assert_relative_eq!(isd, 0.440201, epsilon = 1e-12);
        assert_eq!(isq, 0.0);
    }

    #[test]
    fn machine_side_holds_at_setpoints() {
        let p = MachineParams::default();
        let ts = 0.00065;
        let mut ms = MachineSide::new(
            PiRegulator::new(PiParams::new(p.kp_dc, p.ki_dc).unwrap(), ts, Discretizer::Tustin),
            PiRegulator::new(PiParams::new(p.kp_pitch, p.ki_pitch).unwrap(), ts, Discretizer::Tustin),
        );
        let m = Measurements {
            v_dc: p.v_dc_ref_pu,
            p_me: 0.6,
            p_mppt: 0.6,
            i_sd_applied: 0.6,
            pitch_applied: 4.0,
            ..Measurements::default()
        };
        ms.seed(&p, &m);
        for _ in 0..10 {
            let (isd, _, pitch) = ms.step(&p, ts, &m);
            assert_relative_eq!(isd, 0.6, epsilon = 1e-15);
            assert_relative_eq!(pitch, 4.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn pitch_is_rate_limited_and_clamped() {
        let p = MachineParams::default();
        let ts = 0.001;
        let mut ms = MachineSide::new(
            PiRegulator::new(PiParams::new(p.kp_dc, p.ki_dc).unwrap(), ts, Discretizer::Tustin),
            PiRegulator::new(PiParams::new(100.0, 0.0).unwrap(), ts, Discretizer::Tustin),
        );
        let m = Measurements {
            v_dc: 1.0,
            p_me: 1.0,
            p_mppt: 0.0,
            ..Measurements::default()
        };
        let (_, _, pitch) = ms.step(&p, ts, &m);
        assert_relative_eq!(pitch, p.pitch_rate_deg_s * ts, epsilon = 1e-15);
        let low = Measurements {
            p_me: 0.0,
            p_mppt: 1.0,
            ..m
        };
        for _ in 0..100 {
            let (_, _, pitch) = ms.step(&p, ts, &low);
            assert!(pitch >= 0.0);
        }
    }
}
