//! Numerical Laplace inversion by the Euler algorithm of Abate and Whitt.
//!
//! `f(x) ≈ (10^{M/3}/x) Σ_{k=0}^{2M} η_k Re F(β_k/x)` with
//! `β_k = M ln 10 / 3 + iπk`. Only `F` on `Re s > 0` is needed.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default precision parameter `M`.
pub const DEFAULT_PRECISION: usize = 18;

#[derive(Debug, Clone)]
pub struct EulerInversion {
    m: usize,
    eta: Vec<f64>,
    beta: Vec<Complex64>,
    prefactor: f64,
}

impl EulerInversion {
    pub fn new(m: usize) -> Result<Self> {
        if !(4..=40).contains(&m) {
            return Err(Error::Config(format!("inversion precision must lie in [4, 40], got {m}")));
        }
        let two_m = 2 * m;
        let scale = 0.5f64.powi(m as i32);
        let mut xi = vec![0.0; two_m + 1];
        xi[0] = 0.5;
        for x in xi.iter_mut().take(m + 1).skip(1) {
            *x = 1.0;
        }
        xi[two_m] = scale;
        let mut binom = 1.0; // C(M, k)
        let mut binoms = vec![1.0; m + 1];
        for (k, b) in binoms.iter_mut().enumerate().skip(1) {
            binom = binom * (m + 1 - k) as f64 / k as f64;
            *b = binom;
        }
        for k in 1..m {
            xi[two_m - k] = xi[two_m - k + 1] + scale * binoms[k];
        }
        let eta = xi.iter().enumerate().map(|(k, x)| if k % 2 == 0 { *x } else { -*x }).collect();
        let a = m as f64 * std::f64::consts::LN_10 / 3.0;
        let beta = (0..=two_m).map(|k| Complex64::new(a, std::f64::consts::PI * k as f64)).collect();
        Ok(Self { m, eta, beta, prefactor: 10f64.powf(m as f64 / 3.0) })
    }

    pub fn precision(&self) -> usize {
        self.m
    }

    /// Inverts `F` at `x > 0`.
    pub fn invert<F: Fn(Complex64) -> Complex64>(&self, f: F, x: f64) -> f64 {
        self.invert_scaled(f, x).0
    }

    /// Value and the magnitude `(10^{M/3}/x) Σ |η_k Re F(β_k/x)|` that sets
    /// the round-off floor.
    fn invert_scaled<F: Fn(Complex64) -> Complex64>(&self, f: F, x: f64) -> (f64, f64) {
        let mut sum = 0.0;
        let mut mag = 0.0;
        for (eta, beta) in self.eta.iter().zip(&self.beta) {
            let term = eta * f(beta / x).re;
            sum += term;
            mag += term.abs();
        }
        let p = self.prefactor / x;
        (p * sum, p * mag)
    }
}

/// Inverts at precision `hi` and accepts the value when the `lo`-precision
/// result agrees within `rel_tol` (plus the round-off floor).
pub fn invert_checked<F: Fn(Complex64) -> Complex64>(
    hi: &EulerInversion,
    lo: &EulerInversion,
    f: F,
    x: f64,
    rel_tol: f64,
) -> Result<f64> {
    let (a, mag) = hi.invert_scaled(&f, x);
    let b = lo.invert(&f, x);
    let spread = (a - b).abs();
    if !a.is_finite() || spread > rel_tol * a.abs() + 16.0 * f64::EPSILON * mag {
        return Err(Error::Inversion { x, precision: hi.precision(), spread });
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_weights_sum_like_the_reference() {
        // Σ η_k must vanish up to the 2^{-M} tail: the rule integrates f ≡ 0 exactly.
        let e = EulerInversion::new(12).unwrap();
        assert_eq!(e.eta.len(), 25);
        assert_eq!(e.eta[0], 0.5);
        assert_eq!(e.eta[24], 0.5f64.powi(12));
    }

    #[test]
    fn recovers_classic_pairs() {
        let e = EulerInversion::new(DEFAULT_PRECISION).unwrap();
        for &x in &[1e-3, 0.1, 1.0, 4.0, 20.0] {
            // 1/(s+1) ↔ e^{-x}
            let v = e.invert(|s| 1.0 / (s + 1.0), x);
            assert!((v - (-x).exp()).abs() < 1e-10, "x={x}: {v}");
            // s^{-3/2} ↔ 2 sqrt(x/π)
            let v = e.invert(|s| s.powf(-1.5), x);
            let exact = 2.0 * (x / std::f64::consts::PI).sqrt();
            assert!((v / exact - 1.0).abs() < 1e-9, "x={x}: {v} vs {exact}");
        }
    }

    #[test]
    fn reports_non_convergence() {
        // A jump at x = 1 defeats the rule near the discontinuity.
        let hi = EulerInversion::new(18).unwrap();
        let lo = EulerInversion::new(14).unwrap();
        let r = invert_checked(&hi, &lo, |s| (-s).exp() / s, 1.0, 1e-6);
        assert!(matches!(r, Err(Error::Inversion { precision: 18, .. })));
    }
}
