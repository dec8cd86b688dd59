//! Discrete swing equation producing the emulated rotor angle and speed.
//!
//! Continuous model: `theta = T_err / (2H s^2 + D s) + omega_s / s`, with the
//! torque error `T_err = T_m - T_e` and `T_m = 0`. Angles are in per-unit
//! seconds (the integral of per-unit speed); multiply by the base angular
//! frequency for radians.

use serde::{Deserialize, Serialize};

use super::perturb::SumPerturbation;
use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaParams {
    pub h: f64,
    pub d: f64,
    /// `2 / ts`.
    pub k: f64,
}

impl InertiaParams {
    pub fn new(h: f64, d: f64, ts: f64) -> Result<Self, DspError> {
        if !(h > 0.0) || !(d >= 0.0) || !h.is_finite() || !d.is_finite() {
            return Err(DspError::InvalidInertia { h, d });
        }
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(DspError::InvalidSamplePeriod(ts));
        }
        Ok(Self { h, d, k: 2.0 / ts })
    }

    pub fn check_k(&self, ts: f64) -> Result<(), DspError> {
        let expected = 2.0 / ts;
        if (self.k - expected).abs() > 4.0 * f64::EPSILON * expected {
            return Err(DspError::InconsistentK {
                k: self.k,
                expected,
            });
        }
        Ok(())
    }

    fn norm(&self) -> f64 {
        2.0 * self.h * self.k * self.k + self.d * self.k
    }

    /// Feedback coefficients `(c1, c2)` in `delta(k) = c1 delta(k-1) - c2 delta(k-2) + ...`.
    pub fn feedback(&self) -> (f64, f64) {
        let n = self.norm();
        let hk2 = 2.0 * self.h * self.k * self.k;
        (2.0 * hk2 / n, (hk2 - self.d * self.k) / n)
    }

    /// Numerator taps applied to `omega_s(k), omega_s(k-1), omega_s(k-2)`.
    pub fn w_taps(&self, path: WPath) -> [f64; 3] {
        let k = self.k;
        match path {
            WPath::Central => [1.0 / k, 0.0, -1.0 / k],
            WPath::Exact => {
                let alpha = 2.0 * self.h * k * k;
                let beta = self.d * k;
                let n = k * (alpha + beta);
                [(alpha + beta) / n, 2.0 * beta / n, (beta - alpha) / n]
            }
        }
    }
}

/// Numerator used for the reference-speed path of the angle recursion.
///
/// `Central` is `(1 - z^-2)/K`, which equals the bilinear image of `1/s` only
/// when `D = 0`. `Exact` is the bilinear image for any `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WPath {
    #[default]
    Central,
    Exact,
}

/// One evaluation of the angle recursion.
///
/// `te` holds electrical torque at `k, k-1, k-2`; `omega_s` the reference
/// speed at `k, k-1, k-2`; `delta_hist` is `(delta(k-1), delta(k-2))`.
/// Returns `(delta(k), omega(k))`.
pub fn inertia_step(
    params: &InertiaParams,
    te: [f64; 3],
    omega_s: [f64; 3],
    delta_hist: (f64, f64),
    ts: f64,
    path: WPath,
) -> Result<(f64, f64), DspError> {
    params.check_k(ts)?;
    let (c1, c2) = params.feedback();
    let w = params.w_taps(path);
    // Torque error is -T_e with no mechanical input.
    let torque = -(te[0] + 2.0 * te[1] + te[2]) / params.norm();
    let speed = w[0] * omega_s[0] + w[1] * omega_s[1] + w[2] * omega_s[2];
    let delta = c1 * delta_hist.0 - c2 * delta_hist.1 + torque + speed;
    Ok((delta, (delta - delta_hist.0) / ts))
}

/// Stateful wrapper around [`inertia_step`].
#[derive(Debug, Clone)]
pub struct InertiaEmulator {
    params: InertiaParams,
    ts: f64,
    path: WPath,
    te: [f64; 2],
    omega_s: [f64; 2],
    delta: [f64; 2],
}

impl InertiaEmulator {
    pub fn new(params: InertiaParams, ts: f64, path: WPath) -> Result<Self, DspError> {
        params.check_k(ts)?;
        Ok(Self {
            params,
            ts,
            path,
            te: [0.0; 2],
            omega_s: [0.0; 2],
            delta: [0.0; 2],
        })
    }

    pub fn params(&self) -> &InertiaParams {
        &self.params
    }

    /// Seeds the histories with a constant torque and reference speed and an
    /// angle ramp consistent with `omega0`, ending at `delta0`.
    pub fn seed(&mut self, delta0: f64, omega0: f64, te0: f64, omega_s0: f64) {
        self.te = [te0; 2];
        self.omega_s = [omega_s0; 2];
        self.delta = [delta0, delta0 - omega0 * self.ts];
    }

    pub fn delta(&self) -> f64 {
        self.delta[0]
    }

    pub fn omega(&self) -> f64 {
        (self.delta[0] - self.delta[1]) / self.ts
    }

    pub fn step(&mut self, te: f64, omega_s: f64) -> (f64, f64) {
        let (delta, omega) = inertia_step(
            &self.params,
            [te, self.te[0], self.te[1]],
            [omega_s, self.omega_s[0], self.omega_s[1]],
            (self.delta[0], self.delta[1]),
            self.ts,
            self.path,
        )
        .expect("K checked at construction");
        self.te = [te, self.te[0]];
        self.omega_s = [omega_s, self.omega_s[0]];
        self.delta = [delta, self.delta[0]];
        (delta, omega)
    }
}

/// Cumulative-sum counterpart: speed and angle are trapezoidal integrals
/// accumulated from the first sample, each carried as a running sum.
#[derive(Debug, Clone)]
pub struct TrapezoidalInertia {
    h: f64,
    d: f64,
    ts: f64,
    omega0: f64,
    delta0: f64,
    accel0: f64,
    /// `sum_{k=1}^{n-1}` of the accelerating torque.
    accel_sum: f64,
    /// `sum_{k=1}^{n-1}` of the speed.
    omega_sum: f64,
    n: u64,
    omega: f64,
    delta: f64,
    perturb: Option<SumPerturbation>,
}

impl TrapezoidalInertia {
    pub fn new(h: f64, d: f64, ts: f64, perturb: Option<SumPerturbation>) -> Self {
        Self {
            h,
            d,
            ts,
            omega0: 0.0,
            delta0: 0.0,
            accel0: 0.0,
            accel_sum: 0.0,
            omega_sum: 0.0,
            n: 0,
            omega: 0.0,
            delta: 0.0,
            perturb,
        }
    }

    /// Restarts the sums at the operating point `(delta0, omega0)`.
    pub fn seed(&mut self, delta0: f64, omega0: f64) {
        self.delta0 = delta0;
        self.omega0 = omega0;
        self.accel_sum = 0.0;
        self.omega_sum = 0.0;
        self.n = 0;
        self.omega = omega0;
        self.delta = delta0;
    }

    pub fn samples(&self) -> u64 {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn step(&mut self, te: f64, omega_s: f64) -> (f64, f64) {
        let n = self.n;
        self.n += 1;
        let t_err = -te;
        if n == 0 {
            self.accel0 = t_err - self.d * (self.omega0 - omega_s);
            return (self.delta, self.omega);
        }
        // omega(n) appears in its own damping term; solve the linear relation.
        let c = self.ts / (2.0 * self.h);
        let omega = (self.omega0
            + c * (0.5 * self.accel0 + self.accel_sum + 0.5 * (t_err + self.d * omega_s)))
            / (1.0 + 0.5 * c * self.d);
        let accel = t_err - self.d * (omega - omega_s);
        let delta = self.delta0 + self.ts * (0.5 * (self.omega0 + omega) + self.omega_sum);

        let (pa, pw) = match self.perturb.as_mut() {
            Some(p) => (p.draw(n), p.draw(n)),
            None => (0.0, 0.0),
        };
        self.accel_sum += accel + pa;
        self.omega_sum += omega + pw;
        self.omega = omega;
        self.delta = delta;
        (delta, omega)
    }
}
