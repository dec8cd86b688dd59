//! PI regulators in the two discrete forms: the Tustin velocity recursion and
//! the trapezoidal cumulative-sum baseline.

use serde::{Deserialize, Serialize};

use super::perturb::SumPerturbation;
use super::{Discretizer, DspError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiParams {
    pub kp: f64,
    pub ki: f64,
}

impl PiParams {
    pub fn new(kp: f64, ki: f64) -> Result<Self, DspError> {
        let p = Self { kp, ki };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if !(self.ki >= 0.0) || !self.kp.is_finite() || !self.ki.is_finite() {
            return Err(DspError::InvalidGain {
                kp: self.kp,
                ki: self.ki,
            });
        }
        Ok(())
    }
}

/// One step of the bilinear PI recursion:
/// `g = g_prev + ts/2 * ki * (e_now + e_prev) + kp * (e_now - e_prev)`.
pub fn pi_tustin_step(params: &PiParams, e_now: f64, e_prev: f64, g_prev: f64, ts: f64) -> f64 {
    g_prev + 0.5 * ts * params.ki * (e_now + e_prev) + params.kp * (e_now - e_prev)
}

/// Running state of the cumulative-sum PI.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrapezoidalState {
    /// `e(0)`, unset before the first sample.
    pub e0: Option<f64>,
    /// `sum_{k=1}^{n-1} e(k)`.
    pub sum: f64,
    /// Index of the next sample.
    pub n: u64,
    /// Integral value at `n = 0` (bumpless initialization).
    pub offset: f64,
}

/// `g(n) = kp e(n) + ts ki ((e(0) + e(n))/2 + sum_{k=1}^{n-1} e(k))`.
///
/// `perturb`, when given, disturbs the stored sum each time a sample is
/// appended, in proportion to the samples it holds.
pub fn trapezoidal_pi_step(
    params: &PiParams,
    e_now: f64,
    state: &mut TrapezoidalState,
    ts: f64,
    perturb: Option<&mut SumPerturbation>,
) -> f64 {
    let n = state.n;
    state.n += 1;
    let e0 = match state.e0 {
        None => {
            state.e0 = Some(e_now);
            return params.kp * e_now + state.offset;
        }
        Some(e0) => e0,
    };
    debug_assert!(n >= 1);
    let g = params.kp * e_now
        + state.offset
        + ts * params.ki * (0.5 * (e0 + e_now) + state.sum);
    let extra = perturb.map_or(0.0, |p| p.draw(n));
    state.sum += e_now + extra;
    g
}

/// Direction in which a downstream limiter is currently saturated, expressed
/// relative to this regulator's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Saturation {
    #[default]
    None,
    /// Raising the output deepens the saturation.
    High,
    /// Lowering the output deepens the saturation.
    Low,
}

impl Saturation {
    fn blocks(self, e: f64) -> bool {
        matches!((self, e > 0.0, e < 0.0), (Saturation::High, true, _) | (Saturation::Low, _, true))
    }
}

#[derive(Debug, Clone)]
enum Form {
    Tustin { e_prev: f64, g_prev: f64, perturb: Option<SumPerturbation> },
    Trapezoidal { state: TrapezoidalState, perturb: Option<SumPerturbation> },
}

/// A PI regulator with optional output clamp and conditional integration.
///
/// In the Tustin form the clamped output is fed back as `g(k-1)`, so the
/// recursion cannot wind up past the clamp. The cumulative-sum form keeps the
/// published formula; it is clamped on output only.
#[derive(Debug, Clone)]
pub struct PiRegulator {
    params: PiParams,
    ts: f64,
    form: Form,
    limits: Option<(f64, f64)>,
    anti_windup: bool,
    saturated: Saturation,
    last: f64,
}

impl PiRegulator {
    pub fn new(params: PiParams, ts: f64, discretizer: Discretizer) -> Self {
        let form = match discretizer {
            Discretizer::Tustin => Form::Tustin {
                e_prev: 0.0,
                g_prev: 0.0,
                perturb: None,
            },
            Discretizer::Trapezoidal => Form::Trapezoidal {
                state: TrapezoidalState::default(),
                perturb: None,
            },
        };
        Self {
            params,
            ts,
            form,
            limits: None,
            anti_windup: true,
            saturated: Saturation::None,
            last: 0.0,
        }
    }

    pub fn with_limits(mut self, lo: f64, hi: f64) -> Self {
        self.limits = Some((lo, hi));
        self
    }

    pub fn with_anti_windup(mut self, on: bool) -> Self {
        self.anti_windup = on;
        self
    }

    /// Attaches a stored-state disturbance: the running sum in the
    /// cumulative form, `g(k-1)` in the Tustin form.
    pub fn with_perturbation(mut self, p: Option<SumPerturbation>) -> Self {
        match &mut self.form {
            Form::Tustin { perturb, .. } | Form::Trapezoidal { perturb, .. } => *perturb = p,
        }
        self
    }

    pub fn params(&self) -> &PiParams {
        &self.params
    }

    pub fn discretizer(&self) -> Discretizer {
        match self.form {
            Form::Tustin { .. } => Discretizer::Tustin,
            Form::Trapezoidal { .. } => Discretizer::Trapezoidal,
        }
    }

    /// Last emitted output.
    pub fn output(&self) -> f64 {
        self.last
    }

    /// Re-initializes at the operating point `(e0, g0)`; with `e0 = 0` the
    /// next output is exactly `g0`.
    pub fn seed(&mut self, e0: f64, g0: f64) {
        self.saturated = Saturation::None;
        match &mut self.form {
            Form::Tustin { e_prev, g_prev, .. } => {
                *e_prev = e0;
                *g_prev = g0;
            }
            Form::Trapezoidal { state, .. } => {
                // The seed is sample 0 of the cumulative sum.
                *state = TrapezoidalState {
                    e0: Some(e0),
                    sum: 0.0,
                    n: 1,
                    offset: g0 - self.params.kp * e0,
                };
            }
        }
        self.last = g0;
    }

    pub fn step(&mut self, e: f64) -> f64 {
        self.step_with(e, Saturation::None)
    }

    /// Steps with knowledge of a downstream limiter. Under conditional
    /// integration the integral increment is skipped when the error would
    /// push further into that saturation or into this regulator's own clamp.
    pub fn step_with(&mut self, e: f64, downstream: Saturation) -> f64 {
        let freeze = self.anti_windup && (downstream.blocks(e) || self.saturated.blocks(e));
        let raw = match &mut self.form {
            Form::Tustin { e_prev, g_prev, .. } => {
                let ki = if freeze { 0.0 } else { self.params.ki };
                let p = PiParams { kp: self.params.kp, ki };
                let g = pi_tustin_step(&p, e, *e_prev, *g_prev, self.ts);
                *e_prev = e;
                g
            }
            Form::Trapezoidal { state, perturb } => {
                trapezoidal_pi_step(&self.params, e, state, self.ts, perturb.as_mut())
            }
        };
        let out = self.clamp(raw);
        if let Form::Tustin { g_prev, perturb, .. } = &mut self.form {
            *g_prev = out + perturb.as_mut().map_or(0.0, |p| p.draw(1));
        }
        self.last = out;
        out
    }

    fn clamp(&mut self, g: f64) -> f64 {
        self.saturated = Saturation::None;
        match self.limits {
            Some((lo, _)) if g < lo => {
                self.saturated = Saturation::Low;
                lo
            }
            Some((_, hi)) if g > hi => {
                self.saturated = Saturation::High;
                hi
            }
            _ => g,
        }
    }
}
