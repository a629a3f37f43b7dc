//! Scale function `W` (`∫ e^{-λx} W(x) dx = 1/ψ(λ)`), its derivative, the
//! stationary density `W(x)/x` and the potential density
//! `g(x, y) = (W(y) - W(y - x))/y`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::extinction::ExtinctionKernel;
use crate::inversion::{invert_checked, EulerInversion, DEFAULT_PRECISION};
use crate::mechanism::{BranchingMechanism, ClosedForm};
use crate::quad::{integrate_to_inf, tanh_sinh, QuadOpts};
use crate::special::{comp1, gamma};

/// Below this `x` the inverted values give way to the small-`x` asymptote.
pub const SMALL_X: f64 = 1e-9;

const INVERSION_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleBackend {
    Inversion { precision: usize },
    ClosedForm,
}

/// `W(x) ≈ coef · x^power` as `x → 0+`.
#[derive(Debug, Clone, Copy)]
struct Asymptote {
    coef: f64,
    power: f64,
}

/// `E_x[ζ] = ∫ G(x, dy)`, or infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMass {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone)]
pub struct ScaleFunction {
    mech: Arc<BranchingMechanism>,
    backend: ScaleBackend,
    hi: EulerInversion,
    lo: EulerInversion,
    asymptote: Option<Asymptote>,
}

impl ScaleFunction {
    /// Closed form when the mechanism carries one, inversion otherwise.
    pub fn new(mech: Arc<BranchingMechanism>) -> Result<Self> {
        if mech.closed_form().is_some() {
            Self::build(mech, ScaleBackend::ClosedForm)
        } else {
            Self::inversion(mech, DEFAULT_PRECISION)
        }
    }

    /// Forces numerical inversion with precision parameter `M`.
    pub fn inversion(mech: Arc<BranchingMechanism>, precision: usize) -> Result<Self> {
        Self::build(mech, ScaleBackend::Inversion { precision })
    }

    fn build(mech: Arc<BranchingMechanism>, backend: ScaleBackend) -> Result<Self> {
        let m = match backend {
            ScaleBackend::Inversion { precision } => precision,
            ScaleBackend::ClosedForm => DEFAULT_PRECISION,
        };
        if m < 8 {
            return Err(Error::Config(format!("inversion precision must be at least 8, got {m}")));
        }
        let hi = EulerInversion::new(m)?;
        let lo = EulerInversion::new(m - 4)?;
        let asymptote = if mech.sigma2() > 0.0 {
            Some(Asymptote { coef: 2.0 / mech.sigma2(), power: 1.0 })
        } else if let Some(ClosedForm::Stable(b)) = mech.closed_form() {
            Some(Asymptote { coef: 1.0 / gamma(b), power: b - 1.0 })
        } else {
            match mech.levy() {
                crate::mechanism::LevyMeasure::PowerLaw { c, a } => {
                    // ψ(λ) ~ c K λ^a at infinity, K = Γ(-a).
                    let k = crate::mechanism::power_law_constant(*a)?;
                    Some(Asymptote { coef: 1.0 / (c * k * gamma(*a)), power: a - 1.0 })
                }
                _ => None,
            }
        };
        Ok(Self { mech, backend, hi, lo, asymptote })
    }

    pub fn backend(&self) -> ScaleBackend {
        self.backend
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mech
    }

    fn closed(&self) -> Option<ClosedForm> {
        match self.backend {
            ScaleBackend::ClosedForm => self.mech.closed_form(),
            ScaleBackend::Inversion { .. } => None,
        }
    }

    fn blend<F: Fn() -> Result<f64>>(&self, x: f64, asym: Option<f64>, inv: F) -> Result<f64> {
        match asym {
            Some(a) if x < SMALL_X => Ok(a),
            Some(a) if x < 2.0 * SMALL_X => {
                let w = (x - SMALL_X) / SMALL_X;
                Ok((1.0 - w) * a + w * inv()?)
            }
            _ => inv(),
        }
    }

    /// `W(x)`, zero for `x ≤ 0`.
    pub fn w(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Domain("W: NaN argument".into()));
        }
        if x <= 0.0 {
            return Ok(0.0);
        }
        if let Some(cf) = self.closed() {
            return Ok(match cf {
                ClosedForm::Quadratic => x,
                ClosedForm::LinearPlusQuadratic => comp1(x),
                ClosedForm::Stable(b) => x.powf(b - 1.0) / gamma(b),
            });
        }
        let asym = self.asymptote.map(|a| a.coef * x.powf(a.power));
        self.blend(x, asym, || {
            invert_checked(&self.hi, &self.lo, |s| 1.0 / self.mech.psi_complex(s), x, INVERSION_REL_TOL)
        })
    }

    /// `W'(x)` from the transform `λ/ψ(λ)`.
    pub fn w_prime(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("W' needs x > 0, got {x}")));
        }
        if let Some(cf) = self.closed() {
            return Ok(match cf {
                ClosedForm::Quadratic => 1.0,
                ClosedForm::LinearPlusQuadratic => (-x).exp(),
                ClosedForm::Stable(b) => (b - 1.0) * x.powf(b - 2.0) / gamma(b),
            });
        }
        let asym = self.asymptote.map(|a| a.coef * a.power * x.powf(a.power - 1.0));
        self.blend(x, asym, || {
            invert_checked(&self.hi, &self.lo, |s| s / self.mech.psi_complex(s), x, INVERSION_REL_TOL)
        })
    }

    /// Stationary density `W(x)/x`.
    pub fn stationary_density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("stationary density needs x > 0, got {x}")));
        }
        Ok(self.w(x)? / x)
    }

    /// Potential density `g(x, y) = (W(y) - W(y - x))/y`.
    pub fn potential_density(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::Domain(format!("potential density needs x, y > 0, got x={x}, y={y}")));
        }
        let lower = if y <= x { 0.0 } else { self.w(y - x)? };
        Ok((self.w(y)? - lower) / y)
    }

    /// `∫_0^∞ e^{-λx} W(x) dx` by quadrature; equals `1/ψ(λ)`.
    pub fn laplace_w(&self, lambda: f64) -> Result<f64> {
        let f = |x: f64| (-lambda * x).exp() * self.w(x).unwrap_or(f64::NAN);
        let head = tanh_sinh(|x, _, _| f(x), 0.0, 1.0, 1e-11)?.value;
        let tail = integrate_to_inf(f, 1.0, QuadOpts::rel(1e-11))?.value;
        Ok(head + tail)
    }

    /// `∫_0^∞ e^{-λy} μ(dy)` with `μ(dy) = W(y)/y dy`; equals `φ(λ)`.
    pub fn stationary_laplace(&self, lambda: f64) -> Result<f64> {
        let f = |y: f64| (-lambda * y).exp() * self.w(y).unwrap_or(f64::NAN) / y;
        let head = tanh_sinh(|y, _, _| f(y), 0.0, 1.0, 1e-11)?.value;
        let tail = integrate_to_inf(f, 1.0, QuadOpts::rel(1e-11))?.value;
        Ok(head + tail)
    }

    /// `∫_0^∞ e^{-λy} g(x, y) dy`.
    pub fn potential_laplace(&self, x: f64, lambda: f64) -> Result<f64> {
        if !(x > 0.0 && lambda > 0.0) {
            return Err(Error::Domain(format!("potential transform needs x, lambda > 0, got x={x}, lambda={lambda}")));
        }
        let f = |y: f64| (-lambda * y).exp() * self.w(y).unwrap_or(f64::NAN) / y;
        let head = tanh_sinh(|y, _, _| f(y), 0.0, x, 1e-11)?.value;
        let g = |y: f64| {
            let d = (self.w(y).unwrap_or(f64::NAN) - self.w(y - x).unwrap_or(f64::NAN)) / y;
            (-lambda * y).exp() * d
        };
        let tail = integrate_to_inf(g, x, QuadOpts::rel(1e-11).with_abs(1e-15))?.value;
        Ok(head + tail)
    }

    /// `E_x[ζ] = ∫_0^∞ (1 - e^{-x varphi(t)}) dt = ∫_0^∞ (1 - e^{-xu})/ψ(u) du`.
    pub fn potential_mass(&self, x: f64) -> Result<PotentialMass> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("potential mass needs x > 0, got {x}")));
        }
        if !self.mech.classify()?.potential_finite {
            return Ok(PotentialMass::Infinite);
        }
        let m = &self.mech;
        let head = tanh_sinh(|_, u, _| comp1(x * u) / u / m.psi_over_lambda(u), 0.0, 1.0, 1e-12)?.value;
        let tail = integrate_to_inf(|u: f64| comp1(x * u) / m.psi_at(u), 1.0, QuadOpts::rel(1e-12))?.value;
        Ok(PotentialMass::Finite(head + tail))
    }
}

/// `(e^{-x varphi(t + φ(λ))} - e^{-x varphi(t)}) / (x ψ(varphi(t)))`, the
/// transform of `P_x(Z_t ∈ dy)/(x ψ(varphi(t)))` on `(0, ∞)`.
pub fn normalized_transition_lt(k: &ExtinctionKernel, x: f64, t: f64, lambda: f64) -> Result<f64> {
    if !(x > 0.0 && t > 0.0 && lambda > 0.0) {
        return Err(Error::Domain(format!(
            "normalized transition needs x, t, lambda > 0, got x={x}, t={t}, lambda={lambda}"
        )));
    }
    let v = k.varphi(t)?;
    let u = k.u_t(t, lambda)?;
    let psi = k.mechanism().psi_at(v);
    Ok((-x * u).exp() * comp1(x * (v - u)) / (x * psi))
}
