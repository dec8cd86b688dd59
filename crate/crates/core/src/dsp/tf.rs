//! Continuous-time rational transfer functions and their bilinear image.

use num_complex::Complex64;

use super::block::DiscreteBlock;
use super::DspError;

/// Ratio of two polynomials in `s`, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTf {
    num: Vec<f64>,
    den: Vec<f64>,
    label: String,
}

/// Index of the highest nonzero coefficient, `None` for the zero polynomial.
pub(crate) fn degree(coeffs: &[f64]) -> Option<usize> {
    coeffs.iter().rposition(|c| *c != 0.0)
}

fn trimmed(coeffs: &[f64]) -> Vec<f64> {
    match degree(coeffs) {
        Some(d) => coeffs[..=d].to_vec(),
        None => vec![0.0],
    }
}

/// Horner evaluation of an ascending-power polynomial.
pub(crate) fn poly_eval(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_pow(base: &[f64], n: usize) -> Vec<f64> {
    (0..n).fold(vec![1.0], |acc, _| poly_mul(&acc, base))
}

impl RationalTf {
    pub fn new(num: &[f64], den: &[f64]) -> Result<Self, DspError> {
        let den_deg = degree(den).ok_or(DspError::ZeroDenominator)?;
        let num_deg = degree(num).unwrap_or(0);
        if num_deg > den_deg {
            return Err(DspError::ImproperTf {
                num_degree: num_deg,
                den_degree: den_deg,
            });
        }
        Ok(Self {
            num: trimmed(num),
            den: trimmed(den),
            label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Order of the denominator.
    pub fn order(&self) -> usize {
        degree(&self.den).unwrap_or(0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    /// `tf(0)`, or `None` when there is a pole at the origin.
    pub fn dc_gain(&self) -> Option<f64> {
        if self.den[0] == 0.0 {
            None
        } else {
            Some(self.num[0] / self.den[0])
        }
    }

    /// Product of two transfer functions (series connection).
    pub fn series(&self, other: &RationalTf) -> RationalTf {
        RationalTf {
            num: poly_mul(&self.num, &other.num),
            den: poly_mul(&self.den, &other.den),
            label: format!("{}*{}", self.label, other.label),
        }
    }
}

/// Maps `tf` to a difference equation with `s = (2/ts)(z-1)/(z+1)`.
///
/// Both polynomials are multiplied through by `(1+z^-1)^n` where `n` is the
/// denominator order, so the result is causal and of order `n`.
pub fn tustin_discretize(tf: &RationalTf, ts: f64) -> Result<DiscreteBlock, DspError> {
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(DspError::InvalidSamplePeriod(ts));
    }
    let n = tf.order();
    let k = 2.0 / ts;
    let minus = [1.0, -1.0]; // 1 - z^-1
    let plus = [1.0, 1.0]; // 1 + z^-1

    let map = |coeffs: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n + 1];
        for (i, c) in coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let term = poly_mul(&poly_pow(&minus, i), &poly_pow(&plus, n - i));
            let scale = c * k.powi(i as i32);
            for (o, t) in out.iter_mut().zip(term) {
                *o += scale * t;
            }
        }
        out
    };

    let b = map(tf.num());
    let a = map(tf.den());
    if a.iter().all(|c| *c == 0.0) || a[0] == 0.0 {
        return Err(DspError::DegenerateDenominator);
    }
    let mut block = DiscreteBlock::from_coefficients(&b, &a, ts)?;
    if let (Some(g), Some(_)) = (tf.dc_gain(), block.dc_gain()) {
        block.pin_dc_gain(g);
    }
    Ok(block)
}

/// Frequency response of the block obtained from `tf`, i.e. `tf` evaluated on
/// the bilinear pre-image of `z`.
pub fn tustin_eval(tf: &RationalTf, ts: f64, z: Complex64) -> Complex64 {
    let s = (z - 1.0) / (z + 1.0) * (2.0 / ts);
    tf.eval(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_improper() {
        let err = RationalTf::new(&[0.0, 0.0, 1.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, DspError::ImproperTf { .. }));
    }

    #[test]
    fn rejects_zero_denominator() {
        assert!(matches!(
            RationalTf::new(&[1.0], &[0.0, 0.0]),
            Err(DspError::ZeroDenominator)
        ));
    }

    #[test]
    fn integrator_maps_to_trapezoid() {
        let tf = RationalTf::new(&[1.0], &[0.0, 1.0]).unwrap();
        let blk = tustin_discretize(&tf, 0.002).unwrap();
        assert_relative_eq!(blk.b()[0], 0.001, epsilon = 1e-15);
        assert_relative_eq!(blk.b()[1], 0.001, epsilon = 1e-15);
        assert_eq!(blk.a(), &[1.0, -1.0]);
    }

    #[test]
    fn pi_matches_velocity_recursion() {
        // Kp + Ki/s = (Ki + Kp s)/s
        let (kp, ki, ts) = (0.7, 12.0, 0.00067);
        let tf = RationalTf::new(&[ki, kp], &[0.0, 1.0]).unwrap();
        let blk = tustin_discretize(&tf, ts).unwrap();
        // g(k) = g(k-1) + (ts/2 ki + kp) e(k) + (ts/2 ki - kp) e(k-1)
        assert_relative_eq!(blk.b()[0], ts / 2.0 * ki + kp, epsilon = 1e-14);
        assert_relative_eq!(blk.b()[1], ts / 2.0 * ki - kp, epsilon = 1e-14);
        assert_eq!(blk.a(), &[1.0, -1.0]);
    }

    #[test]
    fn lowpass_keeps_unit_dc_gain() {
        let tf = RationalTf::new(&[1.0], &[1.0, 0.1]).unwrap();
        for ts in [1e-4, 0.00067, 0.01, 0.3] {
            let blk = tustin_discretize(&tf, ts).unwrap();
            assert_relative_eq!(blk.dc_gain().unwrap(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn slow_resonance_keeps_dc_gain() {
        let wn: f64 = 3.0;
        let tf = RationalTf::new(&[0.9 * wn * wn, 0.04 * wn * wn], &[wn * wn, 0.6 * wn, 1.0]).unwrap();
        let blk = tustin_discretize(&tf, 0.00067).unwrap();
        assert_relative_eq!(blk.dc_gain().unwrap(), 0.9, max_relative = 1e-13);
    }

    #[test]
    fn degenerate_mapping_is_reported() {
        // den = 2/ts - s vanishes at z = infinity: leading coefficient is zero.
        let ts = 0.5;
        let tf = RationalTf::new(&[1.0], &[2.0 / ts, -1.0]).unwrap();
        assert!(matches!(
            tustin_discretize(&tf, ts),
            Err(DspError::DegenerateDenominator)
        ));
    }

    #[test]
    fn block_response_equals_prewarped_tf() {
        let tf = RationalTf::new(&[1.0, 0.3], &[2.0, 0.5, 0.01]).unwrap();
        let ts = 0.01;
        let blk = tustin_discretize(&tf, ts).unwrap();
        for w in [0.1, 3.0, 40.0] {
            let z = Complex64::from_polar(1.0, w * ts);
            let d = blk.eval_z(z) - tustin_eval(&tf, ts, z);
            assert!(d.norm() < 1e-10, "w={w} diff={d}");
        }
    }
}
