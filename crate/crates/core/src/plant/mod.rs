//! Averaged dq model of the wind farm in the nominally rotating network frame.
//!
//! Each turbine is a converter voltage source behind an LC filter and a
//! transformer; turbine states are on the turbine base, the shared network on
//! the farm base. The collector network and the Thevenin grid are algebraic
//! phasor impedances, so the whole electrical state obeys one linear complex
//! ODE `dx/dt = A x + B u + b E`, integrated by the implicit trapezoidal rule
//! with a precomputed transition matrix.

mod config;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::visc::{ControlOutput, Measurements};

pub use config::{thevenin, Cluster, GridParams, PlantConfig, Topology, TurbineElecParams};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Sanity bounds beyond which a run is declared diverged.
pub const V_LIMIT: f64 = 3.0;
pub const I_LIMIT: f64 = 10.0;
pub const FREQ_BAND: (f64, f64) = (0.9, 1.1);
/// Below the lower edge the converter cannot synthesize rated AC voltage.
pub const DC_BAND: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown turbine {0}")]
    UnknownTurbine(usize),
    #[error("fault cleared while no fault is active")]
    ClearWithoutFault,
    #[error("diverged at t = {t:.6} s: {reason}")]
    Diverged { t: f64, reason: String },
    #[error("network matrix is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantEvent {
    Fault { retained_v_pu: f64 },
    ClearFault,
    SetScr { scr: f64 },
    LoadStep { dp_pu: f64 },
    SetWind { turbine: Option<usize>, p_pu: f64 },
}

/// What the converter of one turbine is currently doing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied {
    pub delta: f64,
    pub omega: f64,
    pub v_inv: (f64, f64),
    pub i_sd: f64,
    pub pitch: f64,
    /// No command has ever arrived: the converter tracks its own terminal
    /// voltage so the filter current decays.
    pub safe_default: bool,
}

#[derive(Debug, Clone)]
struct Discrete {
    a: DMatrix<Complex64>,
    b: DMatrix<Complex64>,
    be: DVector<Complex64>,
    m: DMatrix<Complex64>,
    g: DMatrix<Complex64>,
    h: DVector<Complex64>,
    /// Algebraic network coupling on the farm base.
    z: DMatrix<Complex64>,
}

#[derive(Debug, Clone)]
pub struct Plant {
    cfg: PlantConfig,
    cluster_of: Vec<usize>,
    sys: Discrete,
    x: DVector<Complex64>,
    scratch: DVector<Complex64>,
    u: DVector<Complex64>,
    applied: Vec<Applied>,
    v_dc: Vec<f64>,
    p_machine: Vec<f64>,
    scr: f64,
    fault: Option<f64>,
    load: f64,
    dw: f64,
    grid_angle: f64,
    p_ex0: f64,
    freq_frozen: bool,
    steps: u64,
}

fn ic(j: usize) -> usize {
    3 * j
}
fn vc(j: usize) -> usize {
    3 * j + 1
}
fn io(j: usize) -> usize {
    3 * j + 2
}

impl Plant {
    /// Builds the plant at the unloaded steady state: converters open (zero
    /// filter current), grid at nominal frequency.
    pub fn new(cfg: PlantConfig) -> Result<Self, PlantError> {
        let cluster_of = cfg.validate()?;
        let n = cfg.turbines.len();
        let scr = cfg.grid.scr;
        let sys = build(&cfg, &cluster_of, scr)?;
        let mut p = Self {
            x: DVector::zeros(3 * n),
            scratch: DVector::zeros(3 * n),
            u: DVector::zeros(n),
            applied: vec![
                Applied {
                    delta: 0.0,
                    omega: 1.0,
                    v_inv: (0.0, 0.0),
                    i_sd: 0.0,
                    pitch: 0.0,
                    safe_default: true,
                };
                n
            ],
            v_dc: vec![1.0; n],
            p_machine: vec![0.0; n],
            sys,
            cluster_of,
            scr,
            fault: None,
            load: 0.0,
            dw: 0.0,
            grid_angle: 0.0,
            p_ex0: 0.0,
            freq_frozen: false,
            steps: 0,
            cfg,
        };
        p.open_circuit_steady_state()?;
        p.p_ex0 = p.grid_exchange();
        Ok(p)
    }

    fn open_circuit_steady_state(&mut self) -> Result<(), PlantError> {
        // With i_cv = 0 the capacitor and transformer rows form a closed
        // subsystem driven by the grid EMF.
        let n = self.n();
        let idx: Vec<usize> = (0..n).flat_map(|j| [vc(j), io(j)]).collect();
        let sub = DMatrix::from_fn(2 * n, 2 * n, |r, c| self.sys.a[(idx[r], idx[c])]);
        let e = self.emf();
        let rhs = DVector::from_fn(2 * n, |r, _| -self.sys.be[idx[r]] * e);
        let y = sub.lu().solve(&rhs).ok_or(PlantError::Singular)?;
        self.x.fill(Complex64::new(0.0, 0.0));
        for (k, &i) in idx.iter().enumerate() {
            self.x[i] = y[k];
        }
        for j in 0..n {
            self.u[j] = self.v_o(j);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.cfg.turbines.len()
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn t(&self) -> f64 {
        self.steps as f64 * self.cfg.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn grid_freq(&self) -> f64 {
        1.0 + self.dw
    }

    pub fn grid_angle(&self) -> f64 {
        self.grid_angle
    }

    pub fn scr(&self) -> f64 {
        self.scr
    }

    pub fn fault(&self) -> Option<f64> {
        self.fault
    }

    pub fn load(&self) -> f64 {
        self.load
    }

    pub fn applied(&self, j: usize) -> &Applied {
        &self.applied[j]
    }

    pub fn v_dc(&self, j: usize) -> f64 {
        self.v_dc[j]
    }

    pub fn p_machine(&self, j: usize) -> f64 {
        self.p_machine[j]
    }

    /// Grid EMF in the network frame.
    pub fn emf(&self) -> Complex64 {
        let mag = self.fault.unwrap_or(self.cfg.grid.v_grid_pu);
        Complex64::from_polar(mag, self.grid_angle)
    }

    pub fn i_cv(&self, j: usize) -> Complex64 {
        self.x[ic(j)]
    }

    pub fn i_o(&self, j: usize) -> Complex64 {
        self.x[io(j)]
    }

    pub fn v_o(&self, j: usize) -> Complex64 {
        let r_d = self.cfg.turbines[j].r_d_pu;
        self.x[vc(j)] + (self.x[ic(j)] - self.x[io(j)]) * r_d
    }

    /// Converter voltage actually applied, network frame.
    pub fn v_conv(&self, j: usize) -> Complex64 {
        self.u[j]
    }

    /// Farm-base current of each turbine into the collector network.
    fn injections(&self) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.n()).map(|j| self.x[io(j)] * self.cfg.ratings[j])
    }

    pub fn total_current(&self) -> Complex64 {
        self.injections().sum()
    }

    pub fn v_pcc(&self) -> Complex64 {
        let (r, x) = thevenin(self.scr, self.cfg.grid.rx_ratio);
        self.emf() + Complex64::new(r, x) * self.total_current()
    }

    /// Voltage at the network side of turbine `j`'s transformer.
    pub fn v_bus(&self, j: usize) -> Complex64 {
        let mut v = self.emf();
        for (m, i) in self.injections().enumerate() {
            v += self.sys.z[(j, m)] * i;
        }
        v
    }

    /// Active power received by the grid source, farm base.
    pub fn grid_exchange(&self) -> f64 {
        (self.emf() * self.total_current().conj()).re
    }

    /// Re-references the frequency model at the present exchange and
    /// releases it if frozen.
    pub fn set_frequency_reference(&mut self) {
        self.p_ex0 = self.grid_exchange();
        self.freq_frozen = false;
    }

    /// Holds the grid at its present frequency until the next
    /// [`Plant::set_frequency_reference`].
    pub fn freeze_frequency(&mut self) {
        self.freq_frozen = true;
    }

    /// Active power injected by all turbines, losses in the shared network
    /// and power received by the grid, farm base.
    pub fn power_flows(&self) -> (f64, f64, f64) {
        let n = self.n();
        let inj: f64 = (0..n)
            .map(|j| (self.v_bus(j) * (self.x[io(j)] * self.cfg.ratings[j]).conj()).re)
            .sum();
        let (rth, _) = thevenin(self.scr, self.cfg.grid.rx_ratio);
        let it = self.total_current();
        let mut loss = it.norm_sqr() * (rth + self.cfg.topology.pcc_cable_r_pu);
        for (c, cl) in self.cfg.topology.clusters.iter().enumerate() {
            let ic: Complex64 = (0..n)
                .filter(|&j| self.cluster_of[j] == c)
                .map(|j| self.x[io(j)] * self.cfg.ratings[j])
                .sum();
            loss += ic.norm_sqr() * cl.cable_r_pu;
        }
        (inj, loss, self.grid_exchange())
    }

    /// Applies a controller output from the next step on.
    pub fn apply(&mut self, j: usize, out: &ControlOutput) -> Result<(), PlantError> {
        if j >= self.n() {
            return Err(PlantError::UnknownTurbine(j));
        }
        self.applied[j] = Applied {
            delta: out.delta,
            omega: out.omega,
            v_inv: (out.v_invd, out.v_invq),
            i_sd: out.i_sd,
            pitch: out.pitch,
            safe_default: false,
        };
        self.u[j] = out.v_inv_network();
        Ok(())
    }

    /// Drops back to the no-command behaviour.
    pub fn apply_safe_default(&mut self, j: usize) {
        self.applied[j].safe_default = true;
    }

    pub fn set_wind(&mut self, j: usize, p: f64) {
        self.cfg.p_wind[j] = p;
    }

    pub fn inject_event(&mut self, ev: &PlantEvent) -> Result<(), PlantError> {
        match *ev {
            PlantEvent::Fault { retained_v_pu } => self.fault = Some(retained_v_pu),
            PlantEvent::ClearFault => {
                if self.fault.take().is_none() {
                    return Err(PlantError::ClearWithoutFault);
                }
            }
            PlantEvent::SetScr { scr } => {
                if !(scr > 0.0) {
                    return Err(PlantError::InvalidConfig(format!("scr must be > 0, got {scr}")));
                }
                self.sys = build(&self.cfg, &self.cluster_of, scr)?;
                self.scr = scr;
            }
            PlantEvent::LoadStep { dp_pu } => self.load += dp_pu,
            PlantEvent::SetWind { turbine, p_pu } => match turbine {
                Some(j) if j >= self.n() => return Err(PlantError::UnknownTurbine(j)),
                Some(j) => self.cfg.p_wind[j] = p_pu,
                None => self.cfg.p_wind.iter_mut().for_each(|p| *p = p_pu),
            },
        }
        Ok(())
    }

    fn safe_voltage(&self, j: usize) -> Complex64 {
        self.v_o(j) + J * self.cfg.turbines[j].l_f_pu * self.x[ic(j)]
    }

    /// Advances one plant step.
    pub fn step(&mut self) -> Result<(), PlantError> {
        let dt = self.cfg.dt;
        let wb = self.cfg.omega_base;
        for j in 0..self.n() {
            if self.applied[j].safe_default {
                self.u[j] = self.safe_voltage(j);
            }
        }

        // DC links and machine power (explicit; both are slow next to dt).
        for j in 0..self.n() {
            let t = &self.cfg.turbines[j];
            let p_conv = (self.u[j] * self.x[ic(j)].conj()).re;
            let v2 = self.v_dc[j] * self.v_dc[j] + 2.0 * dt * (self.p_machine[j] - p_conv) / t.c_dc_s;
            self.v_dc[j] = v2.max(1e-6).sqrt();
            let target = self.applied[j].i_sd.clamp(-t.p_brake_pu, self.cfg.p_wind[j]);
            self.p_machine[j] += dt / t.machine_tau_s * (target - self.p_machine[j]);
        }

        let e0 = self.emf();
        if self.cfg.grid.freq_model && !self.freq_frozen {
            let g = &self.cfg.grid;
            let acc = (self.grid_exchange() - self.p_ex0 - self.load - g.d_grid_pu * self.dw)
                / (2.0 * g.h_grid_s);
            self.dw += dt * acc;
        }
        self.grid_angle += wb * self.dw * dt;
        let e1 = self.emf();

        self.scratch.gemv(Complex64::new(1.0, 0.0), &self.sys.m, &self.x, Complex64::new(0.0, 0.0));
        self.scratch.gemv(Complex64::new(1.0, 0.0), &self.sys.g, &self.u, Complex64::new(1.0, 0.0));
        self.scratch.axpy(e0 + e1, &self.sys.h, Complex64::new(1.0, 0.0));
        std::mem::swap(&mut self.x, &mut self.scratch);
        self.steps += 1;
        self.check()
    }

    /// Steady state of the electrical network for fixed converter voltages
    /// (network frame) at the present grid EMF.
    pub fn steady_state_for(&self, u: &[Complex64]) -> Result<DVector<Complex64>, PlantError> {
        let u = DVector::from_column_slice(u);
        let rhs = -(&self.sys.b * &u + &self.sys.be * self.emf());
        self.sys.a.clone().lu().solve(&rhs).ok_or(PlantError::Singular)
    }

    /// Overwrites the electrical state and converter voltages, marking every
    /// converter as commanded.
    pub fn set_electrical_state(&mut self, x: DVector<Complex64>, u: &[Complex64]) {
        self.x = x;
        for (j, v) in u.iter().enumerate() {
            self.u[j] = *v;
            self.applied[j].safe_default = false;
        }
    }

    /// `|dx/dt|_inf` at the present state and inputs.
    pub fn derivative_norm(&self) -> f64 {
        let d = &self.sys.a * &self.x + &self.sys.b * &self.u + &self.sys.be * self.emf();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn check(&self) -> Result<(), PlantError> {
        let t = self.t();
        let fail = |reason: String| Err(PlantError::Diverged { t, reason });
        for j in 0..self.n() {
            let v = self.v_o(j).norm();
            if !v.is_finite() || v > V_LIMIT {
                return fail(format!("turbine {j} voltage {v:.3} pu"));
            }
            for (name, i) in [("i_cv", self.i_cv(j)), ("i_o", self.i_o(j))] {
                let m = i.norm();
                if !m.is_finite() || m > I_LIMIT {
                    return fail(format!("turbine {j} {name} {m:.3} pu"));
                }
            }
            let vdc = self.v_dc[j];
            if !(DC_BAND.0..=DC_BAND.1).contains(&vdc) {
                return fail(format!("turbine {j} dc link {vdc:.3} pu"));
            }
        }
        let f = self.grid_freq();
        if !(FREQ_BAND.0..=FREQ_BAND.1).contains(&f) {
            return fail(format!("grid frequency {f:.4} pu"));
        }
        Ok(())
    }

    /// Terminal quantities of turbine `j` in its applied controller frame,
    /// turbine base.
    pub fn measure(&self, j: usize) -> Result<Measurements, PlantError> {
        if j >= self.n() {
            return Err(PlantError::UnknownTurbine(j));
        }
        let a = &self.applied[j];
        let r = Complex64::from_polar(1.0, -a.delta);
        let v = self.v_o(j) * r;
        let icv = self.i_cv(j) * r;
        let i = self.i_o(j) * r;
        let vinv = self.u[j] * r;
        let (p, q) = dq_power((v.re, v.im), (i.re, i.im));
        Ok(Measurements {
            v_od: v.re,
            v_oq: v.im,
            i_cvd: icv.re,
            i_cvq: icv.im,
            i_od: i.re,
            i_oq: i.im,
            p_out: p,
            q_out: q,
            t_e: p / a.omega,
            v_dc: self.v_dc[j],
            omega_r: 1.0,
            p_mppt: self.cfg.p_wind[j],
            p_me: self.p_machine[j],
            frame_angle: a.delta,
            omega_frame: a.omega,
            v_invd_applied: vinv.re,
            v_invq_applied: vinv.im,
            i_sd_applied: a.i_sd,
            pitch_applied: a.pitch,
        })
    }
}

/// `P = v_d i_d + v_q i_q`, `Q = v_q i_d - v_d i_q` (positive Q is injected).
pub fn dq_power(v: (f64, f64), i: (f64, f64)) -> (f64, f64) {
    (v.0 * i.0 + v.1 * i.1, v.1 * i.0 - v.0 * i.1)
}

fn build(cfg: &PlantConfig, cluster_of: &[usize], scr: f64) -> Result<Discrete, PlantError> {
    let n = cfg.turbines.len();
    let wb = cfg.omega_base;
    let (rth, xth) = thevenin(scr, cfg.grid.rx_ratio);
    let shared = Complex64::new(
        rth + cfg.topology.pcc_cable_r_pu,
        xth + cfg.topology.pcc_cable_x_pu,
    );
    let z = DMatrix::from_fn(n, n, |j, m| {
        let mut z = shared;
        if cluster_of[j] == cluster_of[m] {
            let cl = &cfg.topology.clusters[cluster_of[j]];
            z += Complex64::new(cl.cable_r_pu, cl.cable_x_pu);
        }
        z
    });

    let c = |re: f64| Complex64::new(re, 0.0);
    let mut a = DMatrix::zeros(3 * n, 3 * n);
    let mut b = DMatrix::zeros(3 * n, n);
    let mut be = DVector::zeros(3 * n);
    for j in 0..n {
        let t = &cfg.turbines[j];
        let (lf, cf, lt) = (t.l_f_pu, t.c_f_pu, t.x_tr_pu);
        let kf = wb / lf;
        a[(ic(j), ic(j))] = -Complex64::new(t.r_d_pu + t.r_f_pu, lf) * kf;
        a[(ic(j), vc(j))] = c(-kf);
        a[(ic(j), io(j))] = c(kf * t.r_d_pu);
        b[(ic(j), j)] = c(kf);

        let kc = wb / cf;
        a[(vc(j), ic(j))] = c(kc);
        a[(vc(j), io(j))] = c(-kc);
        a[(vc(j), vc(j))] = Complex64::new(0.0, -wb);

        let kt = wb / lt;
        a[(io(j), vc(j))] = c(kt);
        a[(io(j), ic(j))] = c(kt * t.r_d_pu);
        a[(io(j), io(j))] = -Complex64::new(t.r_d_pu + t.r_tr_pu, lt) * kt;
        for m in 0..n {
            a[(io(j), io(m))] -= z[(j, m)] * (kt * cfg.ratings[m]);
        }
        be[io(j)] = c(-kt);
    }

    let h = cfg.dt;
    let eye = DMatrix::<Complex64>::identity(3 * n, 3 * n);
    let p = (&eye - &a * c(0.5 * h))
        .try_inverse()
        .ok_or(PlantError::Singular)?;
    let m = &p * (&eye + &a * c(0.5 * h));
    let g = &p * &b * c(h);
    let hv = &p * &be * c(0.5 * h);
    Ok(Discrete {
        a,
        b,
        be,
        m,
        g,
        h: hv,
        z,
    })
}
