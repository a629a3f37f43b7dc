//! Extinction calculus: `φ(λ) = ∫_λ^∞ du/ψ(u)`, its inverse `varphi`, the
//! flow `u_t(λ) = varphi(t + φ(λ))` and the law of the extinction time.
//!
//! Everything is computed in the variable `y = ln λ`, where
//! `φ(e^y) = ∫_y^∞ ds / (ψ(e^s)/e^s)`. This keeps subcritical values such
//! as `varphi(1000) ≈ e^{-1000}` representable through their logarithm.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::BranchingMechanism;
use crate::quad::{integrate, integrate_to_inf, Quad, QuadOpts};

/// Upper cap on returned `varphi` values (reached as `t → 0+`).
pub const VARPHI_CAP: f64 = 1e12;

const Y_ANCHOR: f64 = 2.772_588_722_239_781; // ln 16
const QUAD_REL: f64 = 1e-13;

/// How a `varphi` value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarphiFlag {
    Exact,
    /// `t` below `φ(VARPHI_CAP)`; the value is clamped to the cap.
    Capped,
    /// `varphi(t)` is below the smallest normal double; `ln_value` stays exact.
    Underflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Varphi {
    pub value: f64,
    pub ln_value: f64,
    pub flag: VarphiFlag,
}

/// A value with an a posteriori absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub est_error: f64,
}

struct PhiCache {
    // Increasing in `ln_phi`, so `y` decreases along the table.
    ln_phi: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

/// `φ`, `varphi`, `u_t` and the extinction-time law for one mechanism.
pub struct ExtinctionKernel {
    mech: Arc<BranchingMechanism>,
    tol: f64,
    phi_anchor: f64,
    ln_phi_cap: f64,
    cache: OnceLock<PhiCache>,
}

impl std::fmt::Debug for ExtinctionKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtinctionKernel").field("mech", &self.mech).field("tol", &self.tol).finish()
    }
}

impl ExtinctionKernel {
    pub fn new(mech: Arc<BranchingMechanism>) -> Result<Self> {
        Self::with_tol(mech, 1e-9)
    }

    pub fn with_tol(mech: Arc<BranchingMechanism>, tol: f64) -> Result<Self> {
        let p = mech.growth_exponent();
        if p <= 1.0 {
            return Err(Error::NonExtinguishing);
        }
        let mut k = Self { mech, tol, phi_anchor: 0.0, ln_phi_cap: 0.0, cache: OnceLock::new() };
        k.phi_anchor = k.tail_integral(Y_ANCHOR)?;
        k.ln_phi_cap = k.phi_log(VARPHI_CAP.ln())?.ln();
        Ok(k)
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mech
    }

    pub fn mechanism_arc(&self) -> Arc<BranchingMechanism> {
        self.mech.clone()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn integrand(&self, s: f64) -> f64 {
        1.0 / self.mech.psi_over_lambda(s.exp())
    }

    fn tail_quad(&self, y: f64) -> Result<Quad<f64>> {
        integrate_to_inf(|s| self.integrand(s), y, QuadOpts::rel(QUAD_REL).with_abs(0.0))
    }

    fn segment_quad(&self, lo: f64, hi: f64) -> Result<Quad<f64>> {
        integrate(|s| self.integrand(s), lo, hi, QuadOpts::rel(QUAD_REL).with_abs(0.0))
    }

    fn tail_integral(&self, y: f64) -> Result<f64> {
        Ok(self.tail_quad(y)?.value)
    }

    fn segment(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.segment_quad(lo, hi)?.value)
    }

    /// `φ(e^y)`.
    pub fn phi_log(&self, y: f64) -> Result<f64> {
        if y.is_nan() {
            return Err(Error::Domain("phi: NaN argument".into()));
        }
        if y >= Y_ANCHOR {
            self.tail_integral(y)
        } else {
            Ok(self.segment(y, Y_ANCHOR)? + self.phi_anchor)
        }
    }

    /// `φ(λ) = ∫_λ^∞ du/ψ(u)`.
    pub fn phi(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("phi needs lambda > 0, got {lambda}")));
        }
        if lambda.is_infinite() {
            return Ok(0.0);
        }
        self.phi_log(lambda.ln())
    }

    /// `φ(λ)` with the summed quadrature error estimates.
    pub fn phi_estimate(&self, lambda: f64) -> Result<Estimate> {
        let value = self.phi(lambda)?;
        let y = lambda.ln();
        let err = if y >= Y_ANCHOR {
            self.tail_quad(y)?.error
        } else {
            self.segment_quad(y, Y_ANCHOR)?.error + self.tail_quad(Y_ANCHOR)?.error
        };
        Ok(Estimate { value, est_error: err })
    }

    /// `varphi(s)` with the root residual `|φ(varphi(s)) - s|` carried to
    /// the value by `|dvarphi/ds| = ψ(varphi(s))`; `extra` is an error
    /// already present in `s`.
    fn varphi_estimate_at(&self, s: f64, extra: f64) -> Result<Estimate> {
        let v = self.varphi_flagged(s)?;
        if v.flag != VarphiFlag::Exact {
            return Ok(Estimate { value: v.value, est_error: f64::INFINITY });
        }
        let residual = (self.phi(v.value)? - s).abs();
        Ok(Estimate { value: v.value, est_error: (residual + extra) * self.mech.psi_at(v.value) })
    }

    pub fn varphi_estimate(&self, t: f64) -> Result<Estimate> {
        self.varphi_estimate_at(t, 0.0)
    }

    pub fn u_t_estimate(&self, t: f64, lambda: f64) -> Result<Estimate> {
        if t == 0.0 && lambda > 0.0 {
            return Ok(Estimate { value: lambda, est_error: 0.0 });
        }
        let p = self.phi_estimate(lambda)?;
        if !(t > 0.0) {
            return Err(Error::Domain(format!("u_t needs t >= 0 and lambda > 0, got t={t}, lambda={lambda}")));
        }
        self.varphi_estimate_at(t + p.value, p.est_error)
    }

    /// `P_x(ζ ≤ t)` with the error of `varphi(t)` propagated.
    pub fn extinction_cdf_estimate(&self, x: f64, t: f64) -> Result<Estimate> {
        let value = self.extinction_cdf(x, t)?;
        let v = self.varphi_estimate(t)?;
        Ok(Estimate { value, est_error: x * value * v.est_error })
    }

    fn cache(&self) -> &PhiCache {
        self.cache.get_or_init(|| {
            // λ_j = 10^{-8 + j/8}, accumulated downward from the top node.
            let n = 129;
            let ys: Vec<f64> = (0..n).map(|j| (-8.0 + j as f64 / 8.0) * std::f64::consts::LN_10).collect();
            let mut phis = vec![0.0; n];
            let mut ok = true;
            match self.phi_log(ys[n - 1]) {
                Ok(v) => phis[n - 1] = v,
                Err(_) => ok = false,
            }
            for j in (0..n - 1).rev() {
                if !ok {
                    break;
                }
                match self.segment(ys[j], ys[j + 1]) {
                    Ok(v) => phis[j] = phis[j + 1] + v,
                    Err(_) => ok = false,
                }
            }
            if !ok || phis.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return PhiCache { ln_phi: vec![], y: vec![], slopes: vec![] };
            }
            let ln_phi: Vec<f64> = phis.iter().rev().map(|p| p.ln()).collect();
            let y: Vec<f64> = ys.into_iter().rev().collect();
            let slopes = pchip_slopes(&ln_phi, &y);
            PhiCache { ln_phi, y, slopes }
        })
    }

    /// Tabulated `(ln λ, φ(λ))` pairs backing the initial guesses of `varphi`.
    pub fn warm_up(&self) {
        let _ = self.cache();
    }

    fn guess(&self, t: f64) -> f64 {
        let c = self.cache();
        let lt = t.ln();
        if c.ln_phi.len() < 2 {
            return 0.0;
        }
        let n = c.ln_phi.len();
        if lt <= c.ln_phi[0] {
            return c.y[0];
        }
        if lt >= c.ln_phi[n - 1] {
            return c.y[n - 1];
        }
        pchip_eval(&c.ln_phi, &c.y, &c.slopes, lt)
    }

    /// `ln varphi(t)`: the root `y` of `φ(e^y) = t`, unclamped.
    pub fn ln_varphi(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || t.is_infinite() {
            return Err(Error::Domain(format!("varphi needs finite t > 0, got {t}")));
        }
        let scale = t.max(1.0);
        let f = |y: f64| self.phi_log(y).map(|p| p - t);
        let mut y = self.guess(t);
        let mut fy = f(y)?;
        if fy == 0.0 {
            return Ok(y);
        }
        // Geometric expansion until the sign changes; φ decreases in y.
        let (mut lo, mut hi, mut flo, mut fhi);
        let mut step = 0.5;
        if fy > 0.0 {
            lo = y;
            flo = fy;
            loop {
                let cand = lo + step;
                let fc = f(cand)?;
                if fc <= 0.0 {
                    hi = cand;
                    fhi = fc;
                    break;
                }
                lo = cand;
                flo = fc;
                step *= 2.0;
                if step > 1e6 {
                    return Err(Error::Bracket { target: t, lo, hi: cand });
                }
            }
        } else {
            hi = y;
            fhi = fy;
            loop {
                let cand = hi - step;
                let fc = f(cand)?;
                if fc >= 0.0 {
                    lo = cand;
                    flo = fc;
                    break;
                }
                hi = cand;
                fhi = fc;
                step *= 2.0;
                if step > 1e6 {
                    return Err(Error::Bracket { target: t, lo: cand, hi });
                }
            }
        }
        if flo == 0.0 {
            return Ok(lo);
        }
        if fhi == 0.0 {
            return Ok(hi);
        }
        // Safeguarded Newton; dφ(e^y)/dy = -1/(ψ(e^y)/e^y).
        y = if (lo..=hi).contains(&y) { y } else { 0.5 * (lo + hi) };
        fy = f(y)?;
        for _ in 0..200 {
            if fy.abs() <= 1e-14 * scale {
                return Ok(y);
            }
            if fy > 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let newton = y + fy * self.mech.psi_over_lambda(y.exp());
            let next = if newton > lo && newton < hi && newton.is_finite() { newton } else { 0.5 * (lo + hi) };
            if (next - y).abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0)
                || hi - lo <= 4.0 * f64::EPSILON * y.abs().max(1.0)
            {
                let fn_ = f(next)?;
                if fn_.abs() <= 1e-10 * scale {
                    return Ok(next);
                }
                return Err(Error::RootStalled { target: t, at: next.exp(), residual: fn_ });
            }
            y = next;
            fy = f(y)?;
        }
        Err(Error::RootStalled { target: t, at: y.exp(), residual: fy })
    }

    /// `varphi(t) = φ^{-1}(t)` with its cap/underflow flag.
    pub fn varphi_flagged(&self, t: f64) -> Result<Varphi> {
        if !(t > 0.0) || t.is_infinite() {
            return Err(Error::Domain(format!("varphi needs finite t > 0, got {t}")));
        }
        if t.ln() < self.ln_phi_cap {
            return Ok(Varphi { value: VARPHI_CAP, ln_value: VARPHI_CAP.ln(), flag: VarphiFlag::Capped });
        }
        let y = self.ln_varphi(t)?;
        let v = y.exp();
        if v < f64::MIN_POSITIVE {
            return Ok(Varphi { value: f64::MIN_POSITIVE, ln_value: y, flag: VarphiFlag::Underflow });
        }
        Ok(Varphi { value: v, ln_value: y, flag: VarphiFlag::Exact })
    }

    pub fn varphi(&self, t: f64) -> Result<f64> {
        Ok(self.varphi_flagged(t)?.value)
    }

    /// `varphi(t + s) / varphi(t)`, evaluated through logarithms.
    pub fn varphi_ratio(&self, t: f64, s: f64) -> Result<f64> {
        Ok((self.ln_varphi(t + s)? - self.ln_varphi(t)?).exp())
    }

    /// `u_t(λ) = varphi(t + φ(λ))`; `u_0(λ) = λ`.
    pub fn u_t(&self, t: f64, lambda: f64) -> Result<f64> {
        Ok(self.u_t_flagged(t, lambda)?.value)
    }

    pub fn u_t_flagged(&self, t: f64, lambda: f64) -> Result<Varphi> {
        if !(t >= 0.0) || !(lambda > 0.0) {
            return Err(Error::Domain(format!("u_t needs t >= 0 and lambda > 0, got t={t}, lambda={lambda}")));
        }
        if t == 0.0 {
            return Ok(Varphi { value: lambda, ln_value: lambda.ln(), flag: VarphiFlag::Exact });
        }
        self.varphi_flagged(t + self.phi(lambda)?)
    }

    /// `u_t(λ)` by integrating `du/dt = -ψ(u)` (in `ln u`) with Dormand–Prince 5(4).
    pub fn u_t_ode(&self, t: f64, lambda: f64) -> Result<f64> {
        if !(t >= 0.0) || !(lambda > 0.0) {
            return Err(Error::Domain(format!("u_t needs t >= 0 and lambda > 0, got t={t}, lambda={lambda}")));
        }
        let rhs = |w: f64| -self.mech.psi_over_lambda(w.exp());
        let w = dopri5(rhs, lambda.ln(), t, 1e-11, 1e-13);
        Ok(w.exp())
    }

    /// `u_t(λ)` with the ODE solution as an independent check (≤ 1e-6 relative).
    pub fn u_t_crosscheck(&self, t: f64, lambda: f64) -> Result<f64> {
        let a = self.u_t(t, lambda)?;
        let b = self.u_t_ode(t, lambda)?;
        if (a - b).abs() > 1e-6 * a.abs() {
            return Err(Error::Crosscheck { what: format!("u_t(t={t}, lambda={lambda})"), primary: a, secondary: b });
        }
        Ok(a)
    }

    /// `P_x(ζ ≤ t) = e^{-x varphi(t)}`.
    pub fn extinction_cdf(&self, x: f64, t: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("extinction_cdf needs x > 0, got {x}")));
        }
        Ok((-x * self.varphi(t)?).exp())
    }

    /// Density of `ζ` under `P_x`: `x e^{-x varphi(t)} ψ(varphi(t))`.
    pub fn extinction_pdf(&self, x: f64, t: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("extinction_pdf needs x > 0, got {x}")));
        }
        let v = self.varphi(t)?;
        Ok(x * (-x * v).exp() * self.mech.psi_at(v))
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    m
}

fn pchip_eval(x: &[f64], y: &[f64], m: &[f64], t: f64) -> f64 {
    let i = (x.partition_point(|&v| v <= t)).clamp(1, x.len() - 1) - 1;
    let h = x[i + 1] - x[i];
    let s = (t - x[i]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1]
}

/// Autonomous scalar ODE `w' = f(w)` on `[0, t]`.
fn dopri5<F: Fn(f64) -> f64>(f: F, w0: f64, t: f64, rtol: f64, atol: f64) -> f64 {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    if t == 0.0 {
        return w0;
    }
    let mut w = w0;
    let mut s = 0.0;
    let mut h = (t * 1e-3).min(1e-3 / f(w0).abs().max(1e-300)).max(1e-12 * t);
    let mut k = [0.0; 7];
    k[0] = f(w);
    while s < t {
        if s + h > t {
            h = t - s;
        }
        for i in 1..7 {
            let mut acc = w;
            for j in 0..i {
                acc += h * C[i - 1][j] * k[j];
            }
            k[i] = f(acc);
        }
        let w5: f64 = w + h * (0..7).map(|i| B5[i] * k[i]).sum::<f64>();
        let w4: f64 = w + h * (0..7).map(|i| B4[i] * k[i]).sum::<f64>();
        let err = (w5 - w4).abs() / (atol + rtol * w5.abs().max(w.abs()));
        if err <= 1.0 {
            s += h;
            w = w5;
            k[0] = k[6];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    w
}
