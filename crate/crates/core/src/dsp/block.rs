use nalgebra::DMatrix;
use num_complex::Complex64;

use super::tf::poly_eval;
use super::DspError;

/// Normalized recursive difference equation
/// `y(k) = sum b_i u(k-i) - sum_{j>=1} a_j y(k-j)` with `a_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBlock {
    b: Vec<f64>,
    a: Vec<f64>,
    /// `u(k-1), u(k-2), ...`
    u_hist: Vec<f64>,
    /// `y(k-1), y(k-2), ...`
    y_hist: Vec<f64>,
    ts: f64,
}

/// Sum with a running error term, exact to about one rounding of the result
/// even when the terms nearly cancel.
pub(crate) fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Pole placement of a block relative to the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    /// At least one pole on the unit circle, none outside (e.g. an integrator).
    Marginal,
    Unstable,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        self == Stability::Stable
    }
}

const UNIT_CIRCLE_TOL: f64 = 1e-9;

impl DiscreteBlock {
    /// Builds a block from raw coefficients, dividing through by `a[0]` once.
    pub fn from_coefficients(b: &[f64], a: &[f64], ts: f64) -> Result<Self, DspError> {
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(DspError::InvalidSamplePeriod(ts));
        }
        let a0 = *a.first().ok_or(DspError::DegenerateDenominator)?;
        if a0 == 0.0 || !a0.is_finite() {
            return Err(DspError::DegenerateDenominator);
        }
        let b: Vec<f64> = if b.is_empty() {
            vec![0.0]
        } else {
            b.iter().map(|c| c / a0).collect()
        };
        let mut a: Vec<f64> = a.iter().map(|c| c / a0).collect();
        a[0] = 1.0;
        if b.iter().chain(a.iter()).any(|c| !c.is_finite()) {
            return Err(DspError::NonFiniteCoefficient);
        }
        Ok(Self {
            u_hist: vec![0.0; b.len() - 1],
            y_hist: vec![0.0; a.len() - 1],
            b,
            a,
            ts,
        })
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn u_hist(&self) -> &[f64] {
        &self.u_hist
    }

    pub fn y_hist(&self) -> &[f64] {
        &self.y_hist
    }

    /// Fills the histories with a constant operating point so that a block
    /// enabled mid-run starts without a transient when `(u0, y0)` is an
    /// equilibrium of the recursion.
    pub fn seed(&mut self, u0: f64, y0: f64) {
        self.u_hist.iter_mut().for_each(|u| *u = u0);
        self.y_hist.iter_mut().for_each(|y| *y = y0);
    }

    /// Seeds with the input and the matching steady-state output `dc_gain * u0`.
    /// Blocks with infinite DC gain are seeded at zero output.
    pub fn seed_steady(&mut self, u0: f64) {
        let y0 = self.dc_gain().map_or(0.0, |g| g * u0);
        self.seed(u0, y0);
    }

    pub fn step(&mut self, u: f64) -> f64 {
        let mut y = self.b[0] * u;
        for (bi, ui) in self.b[1..].iter().zip(&self.u_hist) {
            y += bi * ui;
        }
        for (aj, yj) in self.a[1..].iter().zip(&self.y_hist) {
            y -= aj * yj;
        }
        if !self.u_hist.is_empty() {
            self.u_hist.rotate_right(1);
            self.u_hist[0] = u;
        }
        if !self.y_hist.is_empty() {
            self.y_hist.rotate_right(1);
            self.y_hist[0] = y;
        }
        y
    }

    /// Transfer function `B(z^-1)/A(z^-1)` evaluated at `z`.
    pub fn eval_z(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        poly_eval(&self.b, zi) / poly_eval(&self.a, zi)
    }

    /// Value at `z = 1`, `None` when `A(1) = 0`.
    pub fn dc_gain(&self) -> Option<f64> {
        let a1 = compensated_sum(&self.a);
        if a1.abs() <= f64::EPSILON * self.a.iter().map(|c| c.abs()).sum::<f64>() {
            None
        } else {
            Some(compensated_sum(&self.b) / a1)
        }
    }

    /// Nudges the smallest numerator coefficient so that `B(1)/A(1)` equals
    /// `gain`. Slow poles put `A(1)` many orders below the coefficients
    /// themselves, and the rounding left by the bilinear map then shows up
    /// directly in the DC gain.
    pub(crate) fn pin_dc_gain(&mut self, gain: f64) {
        let Some(m) = (0..self.b.len()).min_by(|&i, &j| self.b[i].abs().total_cmp(&self.b[j].abs())) else {
            return;
        };
        for _ in 0..2 {
            let target = gain * compensated_sum(&self.a);
            self.b[m] += target - compensated_sum(&self.b);
        }
    }

    /// Roots of `z^n + a_1 z^{n-1} + ... + a_n`.
    pub fn poles(&self) -> Result<Vec<Complex64>, DspError> {
        let n = self.a.len() - 1;
        if n == 0 {
            return Ok(Vec::new());
        }
        if n == 1 {
            return Ok(vec![Complex64::new(-self.a[1], 0.0)]);
        }
        // Companion matrix; first row carries -a_1..-a_n.
        let mut m = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            m[(0, j)] = -self.a[j + 1];
        }
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        let schur = m
            .try_schur(f64::EPSILON, 10_000)
            .ok_or(DspError::RootFindingFailed)?;
        Ok(schur.complex_eigenvalues().iter().copied().collect())
    }

    pub fn check_stability(&self) -> Result<Stability, DspError> {
        let mut class = Stability::Stable;
        for p in self.poles()? {
            let r = p.norm();
            if r > 1.0 + UNIT_CIRCLE_TOL {
                return Ok(Stability::Unstable);
            }
            if r >= 1.0 - UNIT_CIRCLE_TOL {
                class = Stability::Marginal;
            }
        }
        Ok(class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{tustin_discretize, RationalTf};
    use approx::assert_relative_eq;

    #[test]
    fn identity_block() {
        let mut blk = DiscreteBlock::from_coefficients(&[1.0], &[1.0], 0.01).unwrap();
        for u in [0.3, -2.0, 7.5] {
            assert_eq!(blk.step(u), u);
        }
    }

    #[test]
    fn normalizes_leading_coefficient() {
        let blk = DiscreteBlock::from_coefficients(&[2.0, 4.0], &[2.0, -1.0], 0.1).unwrap();
        assert_eq!(blk.a(), &[1.0, -0.5]);
        assert_eq!(blk.b(), &[1.0, 2.0]);
    }

    #[test]
    fn integrator_accumulates_constant() {
        let tf = RationalTf::new(&[1.0], &[0.0, 1.0]).unwrap();
        let mut blk = tustin_discretize(&tf, 0.002).unwrap();
        // u has been 1 forever, the integral is 0 at k = -1.
        blk.seed(1.0, 0.0);
        let mut y = 0.0;
        for _ in 0..500 {
            y = blk.step(1.0);
        }
        assert_relative_eq!(y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_lead_lag_is_transparent() {
        let tf = RationalTf::new(&[1.0, 0.05], &[1.0, 0.05]).unwrap();
        let mut blk = tustin_discretize(&tf, 0.001).unwrap();
        blk.seed_steady(0.0);
        for k in 0..50 {
            let u = (k as f64 * 0.3).sin();
            assert_relative_eq!(blk.step(u), u, epsilon = 1e-12);
        }
    }

    #[test]
    fn stability_classes() {
        let lp = RationalTf::new(&[1.0], &[1.0, 0.1]).unwrap();
        for ts in [1e-4, 0.01, 1.0] {
            let blk = tustin_discretize(&lp, ts).unwrap();
            assert_eq!(blk.check_stability().unwrap(), Stability::Stable);
        }
        let integ = RationalTf::new(&[1.0], &[0.0, 1.0]).unwrap();
        let blk = tustin_discretize(&integ, 0.01).unwrap();
        assert_eq!(blk.check_stability().unwrap(), Stability::Marginal);

        let rhp = RationalTf::new(&[1.0], &[-1.0, 1.0]).unwrap();
        let ts = 0.01;
        let blk = tustin_discretize(&rhp, ts).unwrap();
        assert_eq!(blk.check_stability().unwrap(), Stability::Unstable);
        let expected = (1.0 + ts / 2.0) / (1.0 - ts / 2.0);
        assert_relative_eq!(blk.poles().unwrap()[0].re, expected, epsilon = 1e-12);
    }

    #[test]
    fn second_order_poles_from_companion() {
        // (z - 0.5)(z - 0.25) = z^2 - 0.75 z + 0.125
        let blk = DiscreteBlock::from_coefficients(&[1.0], &[1.0, -0.75, 0.125], 1.0).unwrap();
        let mut re: Vec<f64> = blk.poles().unwrap().iter().map(|p| p.re).collect();
        re.sort_by(f64::total_cmp);
        assert_relative_eq!(re[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(re[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn invalid_sample_period() {
        assert!(DiscreteBlock::from_coefficients(&[1.0], &[1.0], 0.0).is_err());
        assert!(DiscreteBlock::from_coefficients(&[1.0], &[1.0], f64::NAN).is_err());
    }
}
