//! Conditional and limit laws of the extinction-conditioned process, given
//! through their Laplace transforms: the quasi-stationary family, the
//! Yaglom law, the size-biased stationary law `μ_s`, `W_s`, `V_q` and `V_∞`.

use std::cell::RefCell;
use std::sync::{Arc, OnceLock};

use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::extinction::ExtinctionKernel;
use crate::mechanism::{BranchingMechanism, ClosedForm, Criticality, LevyMeasure};
use crate::quad::{integrate_to_inf, tanh_sinh, tanh_sinh_tol, QuadOpts};
use crate::scale::ScaleFunction;
use crate::special::comp1;

/// Agreement required between the two evaluations of `l_q`.
pub const VQ_CROSSCHECK_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn finite(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawKind {
    Qsd { beta: f64 },
    Yaglom,
    MuS { s: f64 },
    Ws { s: f64 },
    Vq { q: f64 },
    Vinf,
}

impl std::fmt::Display for LawKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LawKind::Qsd { beta } => write!(f, "qsd(beta={beta})"),
            LawKind::Yaglom => write!(f, "yaglom"),
            LawKind::MuS { s } => write!(f, "mu_s(s={s})"),
            LawKind::Ws { s } => write!(f, "w_s(s={s})"),
            LawKind::Vq { q } => write!(f, "v_q(q={q})"),
            LawKind::Vinf => write!(f, "v_inf"),
        }
    }
}

/// A law on `(0, ∞)` known through its Laplace transform.
pub trait Transform {
    fn lt(&self, lambda: f64) -> Result<f64>;
    fn mean(&self) -> Result<Moment>;
}

/// Gamma law with the given shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaLaw {
    pub shape: f64,
    pub rate: f64,
}

impl GammaLaw {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::Domain(format!("gamma law needs positive shape and rate, got ({shape}, {rate})")));
        }
        Ok(Self { shape, rate })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(1.0, rate)
    }

    fn dist(&self) -> statrs::distribution::Gamma {
        statrs::distribution::Gamma::new(self.shape, self.rate).expect("validated parameters")
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.dist().pdf(x)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.dist().cdf(x)
        }
    }

    pub fn laplace(&self, lambda: f64) -> f64 {
        (1.0 + lambda / self.rate).powf(-self.shape)
    }
}

impl Transform for GammaLaw {
    fn lt(&self, lambda: f64) -> Result<f64> {
        Ok(self.laplace(lambda))
    }

    fn mean(&self) -> Result<Moment> {
        Ok(Moment::Finite(self.shape / self.rate))
    }
}

fn require_subcritical(k: &ExtinctionKernel, what: &str) -> Result<f64> {
    let m = k.mechanism();
    match m.criticality() {
        Criticality::Critical => Err(Error::Domain(format!("{what}: the mechanism is critical"))),
        Criticality::Subcritical => Ok(m.alpha()),
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Quasi-stationary transform `1 - e^{-βφ(λ)}`, `0 < β ≤ α`.
pub fn qsd_lt(k: &ExtinctionKernel, beta: f64, lambda: f64) -> Result<f64> {
    let alpha = require_subcritical(k, "no QSD")?;
    if !(beta > 0.0 && beta <= alpha * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("QSD index must lie in (0, {alpha}], got {beta}")));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    positive("lambda", lambda)?;
    Ok(comp1(beta * k.phi(lambda)?))
}

/// Yaglom transform `1 - e^{-αφ(λ)}`.
pub fn yaglom_lt(k: &ExtinctionKernel, lambda: f64) -> Result<f64> {
    let alpha = require_subcritical(k, "no Yaglom law in this normalization")?;
    qsd_lt(k, alpha, lambda)
}

/// Mean of the Yaglom law, `lim e^{-αφ(λ)}/λ` as `λ → 0`. Taking logs,
/// `ln E = -αφ(1) + ∫_0^1 (ψ(u) - αu)/(u ψ(u)) du`.
pub fn yaglom_mean(k: &ExtinctionKernel) -> Result<Moment> {
    let alpha = require_subcritical(k, "no Yaglom law in this normalization")?;
    let m = k.mechanism();
    if !m.classify()?.xlogx_holds {
        return Ok(Moment::Infinite);
    }
    let body = tanh_sinh(|_, u, _| (m.psi_over_lambda(u) - alpha) / m.psi_at(u), 0.0, 1.0, 1e-12)?.value;
    Ok(Moment::Finite((body - alpha * k.phi(1.0)?).exp()))
}

/// Density of `μ_s(dx) = e^{-varphi(s)x} W(x)/(s x) dx`.
pub fn mu_s_density(sf: &ScaleFunction, k: &ExtinctionKernel, s: f64, x: f64) -> Result<f64> {
    positive("s", s)?;
    positive("x", x)?;
    let v = k.varphi(s)?;
    Ok((-v * x).exp() * sf.w(x)? / (s * x))
}

/// `μ̂_s(λ) = φ(λ + varphi(s))/s`.
pub fn mu_s_lt(k: &ExtinctionKernel, s: f64, lambda: f64) -> Result<f64> {
    positive("s", s)?;
    if lambda == 0.0 {
        return Ok(1.0);
    }
    positive("lambda", lambda)?;
    Ok(k.phi(lambda + k.varphi(s)?)? / s)
}

/// Transform of `W_s`.
pub fn ws_lt(k: &ExtinctionKernel, s: f64, lambda: f64) -> Result<f64> {
    positive("s", s)?;
    if lambda == 0.0 {
        return Ok(1.0);
    }
    positive("lambda", lambda)?;
    let alpha = k.mechanism().alpha();
    let p = k.phi(lambda + k.varphi(s)?)?;
    if alpha > 0.0 {
        Ok(comp1(alpha * p) / comp1(alpha * s))
    } else {
        Ok(p / s)
    }
}

/// `E[W_s]`: `α/((e^{αs} - 1) ψ(varphi(s)))`, or `1/(s ψ(varphi(s)))` when critical.
pub fn ws_mean(k: &ExtinctionKernel, s: f64) -> Result<f64> {
    positive("s", s)?;
    let m = k.mechanism();
    let psi = m.psi_at(k.varphi(s)?);
    let alpha = m.alpha();
    Ok(if alpha > 0.0 { alpha / ((alpha * s).exp_m1() * psi) } else { 1.0 / (s * psi) })
}

/// `l_q(λ) = α(φ(λ + v) - q) + ln ψ(λ + v) - ln ψ(v)`, `v = varphi(q)`.
pub fn vq_laplace_exponent(k: &ExtinctionKernel, q: f64, lambda: f64) -> Result<f64> {
    positive("q", q)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    positive("lambda", lambda)?;
    let v = k.varphi(q)?;
    let m = k.mechanism();
    let alpha = m.alpha();
    let drift = if alpha > 0.0 { alpha * (k.phi(lambda + v)? - q) } else { 0.0 };
    Ok(drift + m.ln_psi(lambda + v) - m.ln_psi(v))
}

/// `∫_a^b (ψ'(s) - α)/ψ(s) ds`.
fn log_derivative_integral(m: &BranchingMechanism, a: f64, b: f64) -> Result<f64> {
    Ok(tanh_sinh(|s, _, _| m.psi_prime_minus_alpha(s) / m.psi_at(s), a, b, 1e-12)?.value)
}

/// `l_q(λ)` as `∫_v^{λ+v} (ψ'(s) - α)/ψ(s) ds`.
pub fn vq_laplace_exponent_integral(k: &ExtinctionKernel, q: f64, lambda: f64) -> Result<f64> {
    positive("q", q)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    positive("lambda", lambda)?;
    let v = k.varphi(q)?;
    log_derivative_integral(k.mechanism(), v, lambda + v)
}

/// Closed form, confirmed against the integral form.
pub fn vq_laplace_exponent_checked(k: &ExtinctionKernel, q: f64, lambda: f64) -> Result<f64> {
    let primary = vq_laplace_exponent(k, q, lambda)?;
    let secondary = vq_laplace_exponent_integral(k, q, lambda)?;
    if (primary - secondary).abs() > VQ_CROSSCHECK_TOL * primary.abs().max(1.0) {
        return Err(Error::Crosscheck { what: format!("l_q(q={q}, lambda={lambda})"), primary, secondary });
    }
    Ok(primary)
}

pub fn vq_lt(k: &ExtinctionKernel, q: f64, lambda: f64) -> Result<f64> {
    Ok((-vq_laplace_exponent(k, q, lambda)?).exp())
}

/// Runs `f` with an error trap for closures that must return plain `f64`.
fn trapped<T>(f: impl FnOnce(&dyn Fn(Result<f64>) -> f64) -> Result<T>) -> Result<T> {
    let slot: RefCell<Option<Error>> = RefCell::new(None);
    let catch = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            slot.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let out = f(&catch);
    match slot.into_inner() {
        Some(e) => Err(e),
        None => out,
    }
}

/// Bracket `σ²W'(x) + ∫_0^x (W(x) - W(x-r)) r π(dr) + W(x) ∫_x^∞ r π(dr)`.
fn lk_bracket(sf: &ScaleFunction, x: f64) -> Result<f64> {
    let m = sf.mechanism();
    let mut total = 0.0;
    if m.sigma2() > 0.0 {
        total += m.sigma2() * sf.w_prime(x)?;
    }
    if matches!(m.levy(), LevyMeasure::None) {
        return Ok(total);
    }
    let wx = sf.w(x)?;
    let (bar, bbar) = m.levy_tails(x)?;
    total += wx * (bbar + x * bar);
    let mut cuts = vec![0.0];
    cuts.extend(m.levy_breakpoints().iter().copied().filter(|&r| r > 0.0 && r < x));
    cuts.push(x);
    // Inverted W carries absolute noise of order 1e-12 W(x).
    let floor = 1e-10 * (total.abs() + wx);
    let body = trapped(|catch| {
        let mut sum = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let last = b == x;
            let piece = tanh_sinh_tol(
                |r, da, db| {
                    let rest = if last { db } else { x - r };
                    let r = if a == 0.0 { da } else { r };
                    let slope =
                        if r < 1e-4 * x { catch(sf.w_prime(x - 0.5 * r)) } else { (wx - catch(sf.w(rest))) / r };
                    slope * m.levy_moment_density(r, 2)
                },
                a,
                b,
                1e-10,
                floor,
            )?;
            sum += piece.value;
        }
        Ok(sum)
    })?;
    Ok(total + body)
}

/// `v_q(x)`; the Lévy measure of `V_q` is `v_q(x)/x dx` with zero drift.
pub fn vq_levy_density(sf: &ScaleFunction, k: &ExtinctionKernel, q: f64, x: f64) -> Result<f64> {
    positive("q", q)?;
    positive("x", x)?;
    let v = k.varphi(q)?;
    Ok((-v * x).exp() * lk_bracket(sf, x)?)
}

/// `v_∞(x)`, the `q → ∞` limit of `v_q(x)`.
pub fn vinf_levy_density(sf: &ScaleFunction, x: f64) -> Result<f64> {
    positive("x", x)?;
    lk_bracket(sf, x)
}

/// `∫_0^∞ (1 - e^{-λx}) v(x)/x dx` for a Lévy density `v(x)/x`.
pub fn frullani_exponent<F: Fn(f64) -> Result<f64>>(v: F, lambda: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    trapped(|catch| {
        let g = |x: f64| comp1(lambda * x) / x * catch(v(x));
        let head = tanh_sinh(|x, _, _| g(x), 0.0, 1.0, 1e-10)?.value;
        let tail = integrate_to_inf(g, 1.0, QuadOpts::rel(1e-10).with_abs(1e-13))?.value;
        Ok(head + tail)
    })
}

/// Large-`x` limit of `E_x[e^{-λ Z_{ζ-q}}; ζ > q]`, equal to
/// `ψ(v) ∫ e^{-(λ+v)y} W(y) dy = ψ(v)/ψ(λ + v)` with `v = varphi(q)`.
/// It agrees with the `V_q` transform only when `α = 0`.
pub fn reversed_limit_lt(k: &ExtinctionKernel, q: f64, lambda: f64) -> Result<f64> {
    positive("q", q)?;
    if lambda == 0.0 {
        return Ok(1.0);
    }
    positive("lambda", lambda)?;
    let v = k.varphi(q)?;
    let m = k.mechanism();
    Ok((m.ln_psi(v) - m.ln_psi(lambda + v)).exp())
}

/// Whether `V_∞` is a proper law (`α > 0` and `x log x`).
pub fn vinf_exists(m: &BranchingMechanism) -> Result<bool> {
    Ok(m.classify()?.xlogx_holds)
}

/// `l_∞(λ) = ∫_0^λ (ψ'(s) - α)/ψ(s) ds`.
pub fn vinf_laplace_exponent(k: &ExtinctionKernel, lambda: f64) -> Result<f64> {
    if !vinf_exists(k.mechanism())? {
        return Err(Error::Domain("V_inf degenerate at infinity: x log x fails or the mechanism is critical".into()));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    positive("lambda", lambda)?;
    log_derivative_integral(k.mechanism(), 0.0, lambda)
}

pub fn vinf_lt(k: &ExtinctionKernel, lambda: f64) -> Result<f64> {
    Ok((-vinf_laplace_exponent(k, lambda)?).exp())
}

/// Conditional transform of `Z_t/t` given survival under `P_x`,
/// `(e^{-x u_t(θ/t)} - e^{-x varphi(t)})/(1 - e^{-x varphi(t)})`.
pub fn rescaled_survival_lt(k: &ExtinctionKernel, x: f64, t: f64, theta: f64) -> Result<f64> {
    positive("x", x)?;
    positive("t", t)?;
    positive("theta", theta)?;
    let v = k.varphi(t)?;
    let u = k.u_t(t, theta / t)?;
    Ok((-x * u).exp() * comp1(x * (v - u)) / comp1(x * v))
}

/// `sup_λ |L_A(λ) + L_B'(λ)/E[B]|` over a log grid on `[10^{-1.5}, 10^{1.5}]`;
/// zero when `A` is the size-biased version of `B`.
pub fn size_bias_check(a: &dyn Transform, b: &dyn Transform) -> Result<f64> {
    let eb = b.mean()?.finite().ok_or_else(|| Error::Domain("size biasing needs a finite mean".into()))?;
    let mut worst: f64 = 0.0;
    for j in 0..=12 {
        let l = 10f64.powf(-1.5 + 0.25 * j as f64);
        let h = 1e-4 * (1.0 + l);
        let d = (b.lt(l + h)? - b.lt(l - h)?) / (2.0 * h);
        worst = worst.max((a.lt(l)? + d / eb).abs());
    }
    Ok(worst)
}

/// One of the laws above bound to a kernel.
pub struct LimitLaw {
    kind: LawKind,
    kernel: Arc<ExtinctionKernel>,
    scale: OnceLock<Result<ScaleFunction>>,
}

impl std::fmt::Debug for LimitLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LimitLaw").field("kind", &self.kind).finish()
    }
}

impl LimitLaw {
    pub fn new(kind: LawKind, kernel: Arc<ExtinctionKernel>) -> Result<Self> {
        let k = &kernel;
        match kind {
            LawKind::Qsd { beta } => {
                qsd_lt(k, beta, 1.0)?;
            }
            LawKind::Yaglom => {
                require_subcritical(k, "no Yaglom law in this normalization")?;
            }
            LawKind::MuS { s } | LawKind::Ws { s } => positive("s", s)?,
            LawKind::Vq { q } => positive("q", q)?,
            LawKind::Vinf => {
                vinf_laplace_exponent(k, 0.0)?;
            }
        }
        Ok(Self { kind, kernel, scale: OnceLock::new() })
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn kernel(&self) -> &ExtinctionKernel {
        &self.kernel
    }

    fn scale(&self) -> Result<&ScaleFunction> {
        self.scale.get_or_init(|| ScaleFunction::new(self.kernel.mechanism_arc())).as_ref().map_err(Clone::clone)
    }

    /// Closed-form gamma identification for the oracle mechanisms.
    pub fn gamma_form(&self) -> Result<Option<GammaLaw>> {
        let Some(cf) = self.kernel.mechanism().closed_form() else {
            return Ok(None);
        };
        let k = &self.kernel;
        Ok(match (cf, self.kind) {
            (ClosedForm::LinearPlusQuadratic, LawKind::Yaglom) => Some(GammaLaw::exponential(1.0)?),
            (ClosedForm::LinearPlusQuadratic, LawKind::Qsd { beta }) if beta == 1.0 => {
                Some(GammaLaw::exponential(1.0)?)
            }
            (ClosedForm::LinearPlusQuadratic, LawKind::Ws { s }) => Some(GammaLaw::exponential(1.0 + k.varphi(s)?)?),
            (ClosedForm::LinearPlusQuadratic, LawKind::Vq { q }) => Some(GammaLaw::new(2.0, 1.0 + k.varphi(q)?)?),
            (ClosedForm::LinearPlusQuadratic, LawKind::Vinf) => Some(GammaLaw::new(2.0, 1.0)?),
            (ClosedForm::Quadratic | ClosedForm::Stable(_), kind) => {
                let b = match cf {
                    ClosedForm::Stable(b) => b,
                    _ => 2.0,
                };
                match kind {
                    LawKind::MuS { s } | LawKind::Ws { s } => Some(GammaLaw::new(b - 1.0, k.varphi(s)?)?),
                    LawKind::Vq { q } => Some(GammaLaw::new(b, k.varphi(q)?)?),
                    _ => None,
                }
            }
            _ => None,
        })
    }

    /// Density, where a closed form is available.
    pub fn density(&self, x: f64) -> Result<Option<f64>> {
        if let LawKind::MuS { s } = self.kind {
            return mu_s_density(self.scale()?, &self.kernel, s, x).map(Some);
        }
        Ok(self.gamma_form()?.map(|g| g.density(x)))
    }

    /// Drift of the Lévy–Khintchine triplet (zero for `V_q`, `V_∞`).
    pub fn drift(&self) -> Option<f64> {
        matches!(self.kind, LawKind::Vq { .. } | LawKind::Vinf).then_some(0.0)
    }

    /// Lévy density `v(x)/x` of the triplet.
    pub fn levy_density(&self, x: f64) -> Result<Option<f64>> {
        match self.kind {
            LawKind::Vq { q } => Ok(Some(vq_levy_density(self.scale()?, &self.kernel, q, x)? / x)),
            LawKind::Vinf => Ok(Some(vinf_levy_density(self.scale()?, x)? / x)),
            _ => Ok(None),
        }
    }
}

impl Transform for LimitLaw {
    fn lt(&self, lambda: f64) -> Result<f64> {
        let k = &self.kernel;
        match self.kind {
            LawKind::Qsd { beta } => qsd_lt(k, beta, lambda),
            LawKind::Yaglom => yaglom_lt(k, lambda),
            LawKind::MuS { s } => mu_s_lt(k, s, lambda),
            LawKind::Ws { s } => ws_lt(k, s, lambda),
            LawKind::Vq { q } => vq_lt(k, q, lambda),
            LawKind::Vinf => vinf_lt(k, lambda),
        }
    }

    fn mean(&self) -> Result<Moment> {
        let k = &self.kernel;
        let m = k.mechanism();
        match self.kind {
            LawKind::Qsd { beta } => {
                if beta < m.alpha() * (1.0 - 1e-12) {
                    Ok(Moment::Infinite)
                } else {
                    yaglom_mean(k)
                }
            }
            LawKind::Yaglom => yaglom_mean(k),
            LawKind::MuS { s } => Ok(Moment::Finite(1.0 / (s * m.psi_at(k.varphi(s)?)))),
            LawKind::Ws { s } => Ok(Moment::Finite(ws_mean(k, s)?)),
            LawKind::Vq { q } => {
                let v = k.varphi(q)?;
                Ok(Moment::Finite(m.psi_prime_minus_alpha(v) / m.psi_at(v)))
            }
            // l_∞'(0) = ψ''(0)/α, finite only without jumps (jump tails here are heavier than r^{-3}).
            LawKind::Vinf => Ok(match m.levy() {
                LevyMeasure::None => Moment::Finite(m.sigma2() / m.alpha()),
                _ => Moment::Infinite,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(m: BranchingMechanism) -> Arc<ExtinctionKernel> {
        Arc::new(ExtinctionKernel::new(Arc::new(m)).unwrap())
    }

    fn lq() -> Arc<ExtinctionKernel> {
        kernel(BranchingMechanism::linear_plus_quadratic())
    }

    fn quad() -> Arc<ExtinctionKernel> {
        kernel(BranchingMechanism::quadratic())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn qsd_examples() {
        let k = lq();
        assert!(close(qsd_lt(&k, 1.0, 1.0).unwrap(), 0.5, 1e-10));
        assert!(close(qsd_lt(&k, 0.5, 1.0).unwrap(), 1.0 - 0.5f64.sqrt(), 1e-10));
        assert!(qsd_lt(&k, 1.0, 1e-12).unwrap() > 1.0 - 1e-11);
        assert!(qsd_lt(&k, 1.0, 1e8).unwrap() < 1e-7);
        assert_eq!(qsd_lt(&k, 1.0, 0.0).unwrap(), 1.0);
        assert!(qsd_lt(&k, 1.5, 1.0).is_err());
        assert!(qsd_lt(&quad(), 1.0, 1.0).is_err());
    }

    #[test]
    fn yaglom_examples() {
        let k = lq();
        assert!(close(yaglom_lt(&k, 2.0).unwrap(), 1.0 / 3.0, 1e-10));
        for &l in &[0.5, 1.0, 2.0] {
            assert!(close(yaglom_lt(&k, l).unwrap(), 1.0 / (1.0 + l), 1e-10));
        }
        assert!(close(yaglom_mean(&k).unwrap().finite().unwrap(), 1.0, 1e-9));
        assert!(yaglom_lt(&quad(), 1.0).is_err());
    }

    #[test]
    fn yaglom_mean_matches_small_lambda_ratio() {
        let m = BranchingMechanism::new(0.5, 1.0, LevyMeasure::PowerLaw { c: 0.3, a: 1.5 }).unwrap();
        let k = kernel(m);
        let mean = yaglom_mean(&k).unwrap().finite().unwrap();
        let alpha = 0.5;
        let l = 1e-7;
        let approx = (-alpha * k.phi(l).unwrap()).exp() / l;
        assert!(close(approx, mean, 1e-3), "{approx} vs {mean}");
    }

    #[test]
    fn mu_s_examples() {
        let k = quad();
        let sf = ScaleFunction::new(k.mechanism_arc()).unwrap();
        assert!(close(mu_s_density(&sf, &k, 1.0, 1.0).unwrap(), (-1.0f64).exp(), 1e-10));
        assert!(close(mu_s_lt(&k, 1.0, 1.0).unwrap(), 0.5, 1e-10));
        for kk in [quad(), lq()] {
            let sf = ScaleFunction::new(kk.mechanism_arc()).unwrap();
            let f = |x: f64| mu_s_density(&sf, &kk, 1.5, x).unwrap();
            let mass = tanh_sinh(|x, _, _| f(x), 0.0, 1.0, 1e-12).unwrap().value
                + integrate_to_inf(f, 1.0, QuadOpts::rel(1e-12)).unwrap().value;
            assert!(close(mass, 1.0, 1e-8), "{mass}");
        }
    }

    #[test]
    fn ws_examples() {
        let k = lq();
        assert!(close(ws_lt(&k, std::f64::consts::LN_2, 2.0).unwrap(), 0.5, 1e-10));
        assert!(close(ws_mean(&k, std::f64::consts::LN_2).unwrap(), 0.5, 1e-10));
        let q = quad();
        assert!(close(ws_lt(&q, 1.0, 1.0).unwrap(), 0.5, 1e-10));
        assert_eq!(ws_lt(&q, 1.0, 0.0).unwrap(), 1.0);
        assert!(ws_lt(&q, 1.0, 1e-12).unwrap() > 1.0 - 1e-10);
        let st = kernel(BranchingMechanism::stable(1.5).unwrap());
        // Gamma(β-1, rate [q(β-1)]^{-1/(β-1)})
        let q = 2.0;
        let g = GammaLaw::new(0.5, (q * 0.5f64).powf(-2.0)).unwrap();
        for &l in &[0.3, 1.0, 3.0] {
            assert!(close(ws_lt(&st, q, l).unwrap(), g.laplace(l), 1e-9));
        }
    }

    #[test]
    fn vq_exponent_examples() {
        let q = quad();
        assert!(close(vq_laplace_exponent(&q, 1.0, 1.0).unwrap(), 2.0 * std::f64::consts::LN_2, 1e-10));
        assert_eq!(vq_laplace_exponent(&q, 1.0, 0.0).unwrap(), 0.0);
        let k = lq();
        let v = vq_laplace_exponent_checked(&k, std::f64::consts::LN_2, 2.0).unwrap();
        assert!(close(v, 2.0 * std::f64::consts::LN_2, 1e-10));
        for &qq in &[0.1, 1.0, 5.0, 25.0] {
            for &l in &[1e-3, 0.5, 4.0, 100.0] {
                vq_laplace_exponent_checked(&k, qq, l).unwrap();
                vq_laplace_exponent_checked(&q, qq, l).unwrap();
            }
        }
    }

    #[test]
    fn vq_levy_density_examples() {
        let q = quad();
        let sf = ScaleFunction::new(q.mechanism_arc()).unwrap();
        assert!(close(vq_levy_density(&sf, &q, 1.0, 1.0).unwrap(), 2.0 * (-1.0f64).exp(), 1e-12));
        for &qq in &[0.5, 1.0, 2.0] {
            for &l in &[0.5, 1.0, 2.0] {
                let lhs = frullani_exponent(|x| vq_levy_density(&sf, &q, qq, x), l).unwrap();
                let rhs = vq_laplace_exponent(&q, qq, l).unwrap();
                assert!((lhs - rhs).abs() <= 1e-4, "q={qq} l={l}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn triplet_matches_exponent_with_jumps() {
        // Mixed mechanism: Gaussian part, power-law jumps and linear drift.
        let m = BranchingMechanism::new(0.5, 1.0, LevyMeasure::PowerLaw { c: 0.4, a: 1.5 }).unwrap();
        let k = kernel(m);
        let sf = ScaleFunction::new(k.mechanism_arc()).unwrap();
        for &(qq, l) in &[(1.0, 1.0), (0.5, 2.0)] {
            let lhs = frullani_exponent(|x| vq_levy_density(&sf, &k, qq, x), l).unwrap();
            let rhs = vq_laplace_exponent_checked(&k, qq, l).unwrap();
            assert!((lhs - rhs).abs() <= 1e-4, "q={qq} l={l}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn stable_triplet_vq_is_gamma() {
        let st = kernel(BranchingMechanism::stable_triplet(1.5).unwrap());
        let v = st.varphi(1.0).unwrap();
        let g = GammaLaw::new(1.5, v).unwrap();
        for &l in &[0.5, 1.0, 2.0] {
            assert!(close(vq_lt(&st, 1.0, l).unwrap(), g.laplace(l), 1e-8));
        }
        let sf = ScaleFunction::new(st.mechanism_arc()).unwrap();
        let lhs = frullani_exponent(|x| vq_levy_density(&sf, &st, 1.0, x), 1.0).unwrap();
        assert!((lhs - vq_laplace_exponent(&st, 1.0, 1.0).unwrap()).abs() < 1e-4, "{lhs}");
    }

    #[test]
    fn vinf_examples() {
        let k = lq();
        assert!(close(vinf_lt(&k, 1.0).unwrap(), 0.25, 1e-10));
        assert_eq!(vinf_lt(&k, 0.0).unwrap(), 1.0);
        assert!(!vinf_exists(quad().mechanism()).unwrap());
        assert!(vinf_lt(&quad(), 1.0).is_err());
        assert!(vinf_exists(k.mechanism()).unwrap());
    }

    #[test]
    fn size_bias_examples() {
        let q = quad();
        let vq = LimitLaw::new(LawKind::Vq { q: 1.0 }, q.clone()).unwrap();
        let wq = LimitLaw::new(LawKind::Ws { s: 1.0 }, q).unwrap();
        assert!(size_bias_check(&vq, &wq).unwrap() <= 1e-4);
        let k = lq();
        let vinf = LimitLaw::new(LawKind::Vinf, k.clone()).unwrap();
        let theta = LimitLaw::new(LawKind::Yaglom, k.clone()).unwrap();
        assert!(size_bias_check(&vinf, &theta).unwrap() <= 1e-4);
        let vq = LimitLaw::new(LawKind::Vq { q: 0.7 }, k.clone()).unwrap();
        let wq = LimitLaw::new(LawKind::Ws { s: 0.7 }, k).unwrap();
        assert!(size_bias_check(&vq, &wq).unwrap() <= 1e-4);
        // Exp(1) is not its own size bias: the residual is sup λ/(1+λ)² = 1/4 at λ = 1.
        let e = GammaLaw::exponential(1.0).unwrap();
        assert!((size_bias_check(&e, &e).unwrap() - 0.25).abs() < 1e-6);
        let g2 = GammaLaw::new(2.0, 1.0).unwrap();
        assert!(size_bias_check(&g2, &e).unwrap() < 1e-7);
    }

    #[test]
    fn gamma_forms_match_transforms() {
        for k in [lq(), quad(), kernel(BranchingMechanism::stable(1.5).unwrap())] {
            let crit = k.mechanism().alpha() == 0.0;
            let mut kinds = vec![LawKind::MuS { s: 1.3 }, LawKind::Ws { s: 0.8 }, LawKind::Vq { q: 0.6 }];
            if !crit {
                kinds.extend([LawKind::Yaglom, LawKind::Vinf, LawKind::Qsd { beta: 1.0 }]);
            }
            for kind in kinds {
                let law = LimitLaw::new(kind, k.clone()).unwrap();
                if let Some(g) = law.gamma_form().unwrap() {
                    for &l in &[0.2, 1.0, 5.0] {
                        assert!(close(law.lt(l).unwrap(), g.laplace(l), 1e-8), "{kind} at {l}");
                    }
                    assert!(close(law.mean().unwrap().finite().unwrap(), g.shape / g.rate, 1e-7), "{kind}");
                }
            }
        }
    }

    #[test]
    fn mu_s_density_integrates_against_transform() {
        let k = lq();
        let law = LimitLaw::new(LawKind::MuS { s: 1.0 }, k).unwrap();
        let f = |x: f64| (-2.0 * x).exp() * law.density(x).unwrap().unwrap();
        let lt = tanh_sinh(|x, _, _| f(x), 0.0, 1.0, 1e-12).unwrap().value
            + integrate_to_inf(f, 1.0, QuadOpts::rel(1e-12)).unwrap().value;
        assert!(close(lt, law.lt(2.0).unwrap(), 1e-9));
        let g = |x: f64| x * law.density(x).unwrap().unwrap();
        let mean = tanh_sinh(|x, _, _| g(x), 0.0, 1.0, 1e-12).unwrap().value
            + integrate_to_inf(g, 1.0, QuadOpts::rel(1e-12)).unwrap().value;
        assert!(close(law.mean().unwrap().finite().unwrap(), mean, 1e-9));
    }

    #[test]
    fn triplet_drift_is_zero() {
        let law = LimitLaw::new(LawKind::Vq { q: 1.0 }, quad()).unwrap();
        assert_eq!(law.drift(), Some(0.0));
        assert!(close(law.levy_density(2.0).unwrap().unwrap(), 2.0 * (-2.0f64).exp() / 2.0, 1e-12));
        let y = LimitLaw::new(LawKind::Yaglom, lq()).unwrap();
        assert_eq!(y.drift(), None);
    }

    #[test]
    fn reversed_limit_matches_vq_only_when_critical() {
        let q = quad();
        for &l in &[0.5, 1.0, 2.0] {
            assert!(close(reversed_limit_lt(&q, 1.0, l).unwrap(), vq_lt(&q, 1.0, l).unwrap(), 1e-10));
        }
        let k = lq();
        let r = reversed_limit_lt(&k, std::f64::consts::LN_2, 2.0).unwrap();
        assert!(close(r, 1.0 / 6.0, 1e-10));
        assert!((vq_lt(&k, std::f64::consts::LN_2, 2.0).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn double_limit_coincides() {
        let k = lq();
        for &l in &[0.5, 1.0, 2.0] {
            let a = vq_lt(&k, 30.0, l).unwrap();
            let b = vinf_lt(&k, l).unwrap();
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn stationarity_identity() {
        for k in [lq(), quad()] {
            for &t in &[0.1, 0.5, 1.0, 5.0, 20.0] {
                for &l in &[0.1, 0.5, 1.0, 5.0, 50.0] {
                    let lhs = k.phi(k.u_t(t, l).unwrap()).unwrap() - t;
                    assert!((lhs - k.phi(l).unwrap()).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn critical_rescaled_survival() {
        let k = quad();
        for &th in &[0.5, 1.0, 2.0] {
            let v = rescaled_survival_lt(&k, 1.0, 1e4, th).unwrap();
            assert!((v - 1.0 / (1.0 + th)).abs() < 1e-3);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn alternating(f: &dyn Fn(f64) -> f64, l: f64, h: f64) -> bool {
            let v: Vec<f64> = (0..4).map(|i| f(l + i as f64 * h)).collect();
            let d1 = v[1] - v[0];
            let d2 = v[2] - 2.0 * v[1] + v[0];
            let d3 = v[3] - 3.0 * v[2] + 3.0 * v[1] - v[0];
            let slack = 1e-12;
            d1 <= slack && d2 >= -slack && d3 <= slack
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn transforms_completely_monotone(l in 0.01f64..20.0, h in 0.01f64..1.0, which in 0usize..6) {
                let k = lq();
                let kind = [
                    LawKind::Qsd { beta: 0.6 },
                    LawKind::Yaglom,
                    LawKind::MuS { s: 1.0 },
                    LawKind::Ws { s: 2.0 },
                    LawKind::Vq { q: 0.5 },
                    LawKind::Vinf,
                ][which];
                let law = LimitLaw::new(kind, k).unwrap();
                prop_assert!(alternating(&|x| law.lt(x).unwrap(), l, h));
                prop_assert!((law.lt(1e-10).unwrap() - 1.0).abs() < 1e-6);
            }

            #[test]
            fn vq_exponent_is_bernstein(q in 0.05f64..10.0, l in 0.01f64..20.0, h in 0.01f64..2.0) {
                for k in [lq(), quad()] {
                    let f = |x: f64| vq_laplace_exponent(&k, q, x).unwrap();
                    let (a, b, c) = (f(l), f(l + h), f(l + 2.0 * h));
                    prop_assert!(b > a);
                    prop_assert!(c - 2.0 * b + a <= 1e-12 * c.abs().max(1.0));
                }
            }

            #[test]
            fn qsd_ordered_in_index(b1 in 0.05f64..1.0, b2 in 0.05f64..1.0, l in 0.01f64..50.0) {
                let k = lq();
                let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
                prop_assert!(qsd_lt(&k, lo, l).unwrap() <= qsd_lt(&k, hi, l).unwrap() + 1e-15);
            }
        }
    }
}
