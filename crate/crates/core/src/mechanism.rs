//! Branching mechanisms `ψ(λ) = αλ + ½σ²λ² + ∫(e^{-λr} - 1 + λr) π(dr)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{gk15, integrate, integrate_to_inf, tanh_sinh, QuadOpts, QuadValue};
use crate::special::{comp1, comp2, comp2_c, gamma, tail_comp1, tail_comp2, tail_comp2_over_z};

/// Lévy measure `π` of the mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyMeasure {
    None,
    /// `π(dr) = c r^{-(1+a)} dr` on `(0, ∞)`, `a ∈ (1, 2)`.
    PowerLaw {
        c: f64,
        a: f64,
    },
    /// Piecewise-linear density on `[r[0], r[n-1]]`, zero below `r[0] > 0`.
    /// With `tail_exponent = a_t` the density continues as
    /// `density[n-1] (r / r[n-1])^{-1-a_t}` beyond the grid.
    Table {
        r: Vec<f64>,
        density: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_exponent: Option<f64>,
    },
}

/// Registry of closed-form mechanisms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    /// `ψ(λ) = λ²`
    Quadratic,
    /// `ψ(λ) = λ^β`, `β ∈ (1, 2]`
    Stable(f64),
    /// `ψ(λ) = λ + λ²`
    LinearPlusQuadratic,
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClosedForm::Quadratic => write!(f, "quadratic"),
            ClosedForm::Stable(b) => write!(f, "stable({b})"),
            ClosedForm::LinearPlusQuadratic => write!(f, "linear_plus_quadratic"),
        }
    }
}

impl FromStr for ClosedForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "quadratic" => return Ok(ClosedForm::Quadratic),
            "linear_plus_quadratic" => return Ok(ClosedForm::LinearPlusQuadratic),
            _ => {}
        }
        if let Some(inner) = s.strip_prefix("stable(").and_then(|r| r.strip_suffix(')')) {
            let beta: f64 =
                inner.trim().parse().map_err(|_| Error::Config(format!("closed_form: cannot parse beta in {s:?}")))?;
            if !(beta > 1.0 && beta <= 2.0) {
                return Err(Error::InvalidMechanism(format!("stable index must lie in (1, 2], got {beta}")));
            }
            return Ok(ClosedForm::Stable(beta));
        }
        Err(Error::Config(format!(
            "unknown closed_form {s:?}; expected quadratic, linear_plus_quadratic or stable(beta)"
        )))
    }
}

impl Serialize for ClosedForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ClosedForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl ClosedForm {
    /// The `(α, σ², π)` triplet that this closed form stands for.
    pub fn triplet(&self) -> (f64, f64, LevyMeasure) {
        match *self {
            ClosedForm::Quadratic => (0.0, 2.0, LevyMeasure::None),
            ClosedForm::LinearPlusQuadratic => (1.0, 2.0, LevyMeasure::None),
            ClosedForm::Stable(b) if b == 2.0 => (0.0, 2.0, LevyMeasure::None),
            ClosedForm::Stable(b) => (0.0, 0.0, LevyMeasure::PowerLaw { c: stable_c(b), a: b }),
        }
    }

    fn psi(&self, l: f64) -> f64 {
        match *self {
            ClosedForm::Quadratic => l * l,
            ClosedForm::LinearPlusQuadratic => l + l * l,
            ClosedForm::Stable(b) => l.powf(b),
        }
    }

    fn psi_over_lambda(&self, l: f64) -> f64 {
        match *self {
            ClosedForm::Quadratic => l,
            ClosedForm::LinearPlusQuadratic => 1.0 + l,
            ClosedForm::Stable(b) => l.powf(b - 1.0),
        }
    }

    fn psi_prime(&self, l: f64) -> f64 {
        match *self {
            ClosedForm::Quadratic => 2.0 * l,
            ClosedForm::LinearPlusQuadratic => 1.0 + 2.0 * l,
            ClosedForm::Stable(b) => b * l.powf(b - 1.0),
        }
    }

    fn psi_c(&self, s: Complex64) -> Complex64 {
        match *self {
            ClosedForm::Quadratic => s * s,
            ClosedForm::LinearPlusQuadratic => s + s * s,
            ClosedForm::Stable(b) if b == 2.0 => s * s,
            ClosedForm::Stable(b) => s.powf(b),
        }
    }
}

/// Constant `c = β(β-1)/Γ(2-β)` for which the power-law measure gives `ψ = λ^β`.
pub fn stable_c(beta: f64) -> f64 {
    beta * (beta - 1.0) / gamma(2.0 - beta)
}

/// Mechanism as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levy: Option<LevyMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl MechanismConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("mechanism config: {e} (line {}, column {})", e.line(), e.column())))
    }
}

#[derive(Debug, Clone)]
struct Table {
    r: Vec<f64>,
    d: Vec<f64>,
    tail: Option<f64>,
}

impl Table {
    fn rn(&self) -> f64 {
        *self.r.last().unwrap()
    }

    fn dn(&self) -> f64 {
        *self.d.last().unwrap()
    }

    fn density(&self, r: f64) -> f64 {
        let n = self.r.len();
        if r < self.r[0] {
            return 0.0;
        }
        if r >= self.r[n - 1] {
            return match self.tail {
                Some(at) => self.dn() * (r / self.rn()).powf(-1.0 - at),
                None if r == self.r[n - 1] => self.dn(),
                None => 0.0,
            };
        }
        let i = self.r.partition_point(|&x| x <= r) - 1;
        let w = (r - self.r[i]) / (self.r[i + 1] - self.r[i]);
        self.d[i] + w * (self.d[i + 1] - self.d[i])
    }

    /// `∫_lo^hi r^k d(r) dr` over the tabulated body, exact for linear pieces.
    fn body_moment(&self, k: i32, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.r.len() - 1 {
            let (a, b) = (self.r[i].max(lo), self.r[i + 1].min(hi));
            if b <= a {
                continue;
            }
            let slope = (self.d[i + 1] - self.d[i]) / (self.r[i + 1] - self.r[i]);
            let intercept = self.d[i] - slope * self.r[i];
            // ∫ (intercept + slope r) r^k dr
            let p = |x: f64| intercept * x.powi(k + 1) / (k + 1) as f64 + slope * x.powi(k + 2) / (k + 2) as f64;
            total += p(b) - p(a);
        }
        total
    }

    /// `∫_{max(lo, r_n)}^∞ r^k π(dr)` over the power tail.
    fn tail_moment(&self, k: i32, lo: f64) -> f64 {
        match self.tail {
            None => 0.0,
            Some(at) => {
                let m = lo.max(self.rn());
                let kk = k as f64;
                self.dn() * self.rn().powf(1.0 + at) * m.powf(kk - at) / (at - kk)
            }
        }
    }

    fn moment(&self, k: i32, lo: f64, hi: f64) -> f64 {
        let body = self.body_moment(k, lo, hi);
        if hi.is_infinite() {
            body + self.tail_moment(k, lo)
        } else {
            body
        }
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    None,
    /// `k` is `K(a) = ∫_0^∞ (e^{-s} - 1 + s) s^{-1-a} ds`.
    PowerLaw {
        c: f64,
        a: f64,
        k: f64,
    },
    Table(Table),
}

/// `K(a) = ∫_0^∞ (e^{-s} - 1 + s) s^{-1-a} ds` by quadrature, split at `s = 1`.
pub fn power_law_constant(a: f64) -> Result<f64> {
    // e^{-s} - 1 + s - s²/2 by series on [0, 1]; the s²/2 part is integrated exactly.
    let comp3 = |s: f64| {
        let mut term = -s * s * s / 6.0;
        let mut sum = term;
        for k in 4..24 {
            term *= -s / k as f64;
            sum += term;
        }
        sum
    };
    let head = tanh_sinh(|_, s, _| comp3(s) * s.powf(-1.0 - a), 0.0, 1.0, 1e-13)?.value + 0.5 / (2.0 - a);
    // ∫_1^∞ (s - 1) s^{-1-a} ds in closed form; the e^{-s} part by quadrature.
    let linear = 1.0 / (a - 1.0) - 1.0 / a;
    let expo = integrate_to_inf(|s: f64| (-s).exp() * s.powf(-1.0 - a), 1.0, QuadOpts::rel(1e-13))?.value;
    Ok(head + linear + expo)
}

/// Verdicts on the integral conditions of a mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    Critical,
    Subcritical,
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criticality::Critical => write!(f, "Critical"),
            Criticality::Subcritical => write!(f, "Subcritical"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismClass {
    pub criticality: Criticality,
    pub grey_holds: bool,
    pub potential_finite: bool,
    pub xlogx_holds: bool,
}

/// Numeric values behind [`MechanismClass`]; `None` marks a divergent integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralReport {
    /// `∫_1^∞ dλ/ψ(λ)`
    pub grey: Option<f64>,
    /// `∫_0^1 u/ψ(u) du`
    pub potential: Option<f64>,
    /// `∫_1^∞ r ln r π(dr)`
    pub xlogx: Option<f64>,
    /// Growth exponent `p` with `ψ(λ) ≍ λ^p` as `λ → ∞`.
    pub growth_exponent: f64,
}

/// Splitting of `π` at a cutoff `ε`, used by the Euler simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSplit {
    pub eps: f64,
    /// `∫_0^ε r² π(dr)`
    pub small_variance: f64,
    /// `π̄(ε)`
    pub big_rate: f64,
    /// `∫_ε^∞ r π(dr)`
    pub big_mean: f64,
}

/// An immutable branching mechanism.
#[derive(Debug, Clone)]
pub struct BranchingMechanism {
    alpha: f64,
    sigma2: f64,
    levy: LevyMeasure,
    prepared: Prepared,
    closed_form: Option<ClosedForm>,
    tol: f64,
}

const DEFAULT_TOL: f64 = 1e-10;

impl BranchingMechanism {
    pub fn new(alpha: f64, sigma2: f64, levy: LevyMeasure) -> Result<Self> {
        Self::build(alpha, sigma2, levy, None, DEFAULT_TOL)
    }

    pub fn from_config(cfg: &MechanismConfig) -> Result<Self> {
        let tol = cfg.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol < 1e-2) {
            return Err(Error::Config(format!("tol must lie in (0, 1e-2), got {tol}")));
        }
        match cfg.closed_form {
            Some(cf) => {
                let (a0, s0, l0) = cf.triplet();
                let alpha = cfg.alpha.unwrap_or(a0);
                let sigma2 = cfg.sigma2.unwrap_or(s0);
                let levy = cfg.levy.clone().unwrap_or(l0);
                Self::build(alpha, sigma2, levy, Some(cf), tol)
            }
            None => {
                let alpha = cfg.alpha.ok_or_else(|| Error::Config("missing field `alpha`".into()))?;
                let sigma2 = cfg.sigma2.ok_or_else(|| Error::Config("missing field `sigma2`".into()))?;
                let levy = cfg.levy.clone().unwrap_or(LevyMeasure::None);
                Self::build(alpha, sigma2, levy, None, tol)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_config(&MechanismConfig::from_json(text)?)
    }

    /// `ψ(λ) = λ²`
    pub fn quadratic() -> Self {
        Self::with_closed_form(ClosedForm::Quadratic).expect("canonical mechanism")
    }

    /// `ψ(λ) = λ + λ²`
    pub fn linear_plus_quadratic() -> Self {
        Self::with_closed_form(ClosedForm::LinearPlusQuadratic).expect("canonical mechanism")
    }

    /// `ψ(λ) = λ^β` with the closed form attached.
    pub fn stable(beta: f64) -> Result<Self> {
        if !(beta > 1.0 && beta <= 2.0) {
            return Err(Error::InvalidMechanism(format!("stable index must lie in (1, 2], got {beta}")));
        }
        Self::with_closed_form(ClosedForm::Stable(beta))
    }

    /// `ψ(λ) = λ^β` built from its triplet `(0, 0, c r^{-1-β})`, evaluated by quadrature.
    pub fn stable_triplet(beta: f64) -> Result<Self> {
        if !(beta > 1.0 && beta < 2.0) {
            return Err(Error::InvalidMechanism(format!("stable triplet needs beta in (1, 2), got {beta}")));
        }
        Self::new(0.0, 0.0, LevyMeasure::PowerLaw { c: stable_c(beta), a: beta })
    }

    pub fn with_closed_form(cf: ClosedForm) -> Result<Self> {
        let (a, s, l) = cf.triplet();
        Self::build(a, s, l, Some(cf), DEFAULT_TOL)
    }

    fn build(alpha: f64, sigma2: f64, levy: LevyMeasure, closed_form: Option<ClosedForm>, tol: f64) -> Result<Self> {
        if !alpha.is_finite() || !sigma2.is_finite() {
            return Err(Error::InvalidMechanism("alpha and sigma2 must be finite".into()));
        }
        if alpha < 0.0 {
            return Err(Error::Supercritical { alpha });
        }
        if sigma2 < 0.0 {
            return Err(Error::InvalidMechanism(format!("sigma2 must be nonnegative, got {sigma2}")));
        }
        let prepared = prepare(&levy)?;
        if alpha == 0.0 && sigma2 == 0.0 && matches!(prepared, Prepared::None) {
            return Err(Error::InvalidMechanism("psi vanishes identically".into()));
        }
        let m = Self { alpha, sigma2, levy, prepared, closed_form: None, tol };
        let Some(cf) = closed_form else {
            return Ok(m);
        };
        let (a0, _, _) = cf.triplet();
        if (alpha - a0).abs() > tol * a0.max(1.0) {
            return Err(Error::InvalidMechanism(format!("closed form {cf} has psi'(0+) = {a0} but alpha = {alpha}")));
        }
        for i in 0..16 {
            let l = 10f64.powf(-3.0 + 6.0 * i as f64 / 15.0);
            let (t, c) = (m.psi_triplet(l), cf.psi(l));
            if (t - c).abs() > 1e-8 * c.abs() {
                return Err(Error::InvalidMechanism(format!(
                    "closed form {cf} disagrees with the triplet at lambda = {l}: {c} vs {t}"
                )));
            }
        }
        Ok(Self { closed_form: Some(cf), ..m })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn levy(&self) -> &LevyMeasure {
        &self.levy
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        self.closed_form
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn config(&self) -> MechanismConfig {
        MechanismConfig {
            alpha: Some(self.alpha),
            sigma2: Some(self.sigma2),
            levy: Some(self.levy.clone()),
            closed_form: self.closed_form,
            tol: Some(self.tol),
        }
    }

    pub fn criticality(&self) -> Criticality {
        if self.alpha == 0.0 {
            Criticality::Critical
        } else {
            Criticality::Subcritical
        }
    }

    /// `γ`, the largest root of `ψ`; always 0 for accepted mechanisms.
    pub fn gamma(&self) -> f64 {
        0.0
    }

    /// `ψ(λ)`. Negative `λ` is a domain error.
    pub fn psi(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("psi needs lambda >= 0, got {lambda}")));
        }
        Ok(self.psi_at(lambda))
    }

    /// `ψ(λ)` for `λ ≥ 0` without argument checks.
    pub fn psi_at(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        match self.closed_form {
            Some(cf) => cf.psi(lambda),
            None => self.psi_triplet(lambda),
        }
    }

    fn psi_triplet(&self, l: f64) -> f64 {
        if l.is_infinite() {
            return f64::INFINITY;
        }
        self.alpha * l + 0.5 * self.sigma2 * l * l + self.levy_psi(l)
    }

    /// `ψ(λ)/λ`, accurate for tiny `λ`.
    pub fn psi_over_lambda(&self, l: f64) -> f64 {
        if let Some(cf) = self.closed_form {
            return cf.psi_over_lambda(l);
        }
        if l.is_infinite() {
            return f64::INFINITY;
        }
        let levy = match &self.prepared {
            Prepared::None => 0.0,
            Prepared::PowerLaw { c, a, k } => c * k * l.powf(a - 1.0),
            Prepared::Table(_) if l == 0.0 => 0.0,
            Prepared::Table(t) => {
                let body = table_body(t, l, |r| comp2(l * r) / l);
                let tail = match t.tail {
                    Some(at) => t.dn() * t.rn() * t.rn() * tail_comp2_over_z(at, l * t.rn()),
                    None => 0.0,
                };
                body + tail
            }
        };
        self.alpha + 0.5 * self.sigma2 * l + levy
    }

    /// `ln ψ(λ)` without underflow for tiny `λ`.
    pub fn ln_psi(&self, l: f64) -> f64 {
        l.ln() + self.psi_over_lambda(l).ln()
    }

    /// `ψ'(λ) = α + σ²λ + ∫(1 - e^{-λr}) r π(dr)`.
    pub fn psi_prime(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("psi_prime needs lambda > 0, got {lambda}")));
        }
        Ok(self.psi_prime_at(lambda))
    }

    pub fn psi_prime_at(&self, l: f64) -> f64 {
        match self.closed_form {
            Some(cf) => cf.psi_prime(l),
            None => self.alpha + self.psi_prime_minus_alpha(l),
        }
    }

    /// `ψ'(λ) - α`, free of cancellation near 0.
    pub fn psi_prime_minus_alpha(&self, l: f64) -> f64 {
        if let Some(cf) = self.closed_form {
            return match cf {
                ClosedForm::Quadratic => 2.0 * l,
                ClosedForm::LinearPlusQuadratic => 2.0 * l,
                ClosedForm::Stable(b) => b * l.powf(b - 1.0),
            };
        }
        self.sigma2 * l + self.levy_psi_prime(l)
    }

    fn levy_psi(&self, l: f64) -> f64 {
        match &self.prepared {
            Prepared::None => 0.0,
            Prepared::PowerLaw { c, a, k } => c * k * l.powf(*a),
            Prepared::Table(t) => {
                let body = table_body(t, l, |r| comp2(l * r));
                let tail = match t.tail {
                    Some(at) => t.dn() * t.rn() * tail_comp2(at, Complex64::new(l * t.rn(), 0.0)).re,
                    None => 0.0,
                };
                body + tail
            }
        }
    }

    fn levy_psi_prime(&self, l: f64) -> f64 {
        match &self.prepared {
            Prepared::None => 0.0,
            Prepared::PowerLaw { c, a, k } => c * a * k * l.powf(a - 1.0),
            Prepared::Table(t) => {
                let body = table_body(t, l, |r| comp1(l * r) * r);
                let tail = match t.tail {
                    Some(at) => t.dn() * t.rn() * t.rn() * tail_comp1(at, Complex64::new(l * t.rn(), 0.0)).re,
                    None => 0.0,
                };
                body + tail
            }
        }
    }

    /// `ψ(s)` continued analytically to `Re s > 0`.
    pub fn psi_complex(&self, s: Complex64) -> Complex64 {
        if let Some(cf) = self.closed_form {
            return cf.psi_c(s);
        }
        let levy = match &self.prepared {
            Prepared::None => Complex64::new(0.0, 0.0),
            Prepared::PowerLaw { c, a, k } => s.powf(*a) * (c * k),
            Prepared::Table(t) => {
                let body = table_body(t, s.norm(), |r| comp2_c(s * r));
                let tail = match t.tail {
                    Some(at) => tail_comp2(at, s * t.rn()) * (t.dn() * t.rn()),
                    None => Complex64::new(0.0, 0.0),
                };
                body + tail
            }
        };
        s * self.alpha + s * s * (0.5 * self.sigma2) + levy
    }

    /// Exponent `p` with `ψ(λ) ≍ λ^p` as `λ → ∞`. Small jumps set it: a
    /// table starts at `r[0] > 0`, so without `σ²` it grows linearly.
    pub fn growth_exponent(&self) -> f64 {
        if let Some(cf) = self.closed_form {
            return match cf {
                ClosedForm::Stable(b) => b,
                _ => 2.0,
            };
        }
        if self.sigma2 > 0.0 {
            return 2.0;
        }
        match &self.prepared {
            Prepared::PowerLaw { a, .. } => *a,
            Prepared::None | Prepared::Table(_) => 1.0,
        }
    }

    /// Density of `π` at `r > 0`.
    pub fn levy_density(&self, r: f64) -> f64 {
        match &self.prepared {
            Prepared::None => 0.0,
            Prepared::PowerLaw { c, a, .. } => c * r.powf(-1.0 - a),
            Prepared::Table(t) => t.density(r),
        }
    }

    /// `r^k` times the density of `π`, without overflow at tiny `r`.
    pub fn levy_moment_density(&self, r: f64, k: i32) -> f64 {
        match &self.prepared {
            Prepared::None => 0.0,
            Prepared::PowerLaw { c, a, .. } => c * r.powf(k as f64 - 1.0 - a),
            Prepared::Table(t) => r.powi(k) * t.density(r),
        }
    }

    /// Points where the density of `π` has kinks (table nodes).
    pub fn levy_breakpoints(&self) -> &[f64] {
        match &self.prepared {
            Prepared::Table(t) => &t.r,
            _ => &[],
        }
    }

    /// `(π̄(r), π̄̄(r))`.
    pub fn levy_tails(&self, r: f64) -> Result<(f64, f64)> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("levy_tails needs r > 0, got {r}")));
        }
        Ok(match &self.prepared {
            Prepared::None => (0.0, 0.0),
            Prepared::PowerLaw { c, a, .. } => (c * r.powf(-a) / a, c * r.powf(1.0 - a) / (a * (a - 1.0))),
            Prepared::Table(t) => {
                let bar = t.moment(0, r, f64::INFINITY);
                let first = t.moment(1, r, f64::INFINITY);
                (bar, first - r * bar)
            }
        })
    }

    /// Moments of `π` split at `eps`.
    pub fn jump_split(&self, eps: f64) -> Result<JumpSplit> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("small-jump cutoff must be positive, got {eps}")));
        }
        let (small_variance, big_rate, big_mean) = match &self.prepared {
            Prepared::None => (0.0, 0.0, 0.0),
            Prepared::PowerLaw { c, a, .. } => {
                (c * eps.powf(2.0 - a) / (2.0 - a), c * eps.powf(-a) / a, c * eps.powf(1.0 - a) / (a - 1.0))
            }
            Prepared::Table(t) => {
                (t.moment(2, 0.0, eps), t.moment(0, eps, f64::INFINITY), t.moment(1, eps, f64::INFINITY))
            }
        };
        Ok(JumpSplit { eps, small_variance, big_rate, big_mean })
    }

    /// Draws a jump of size `≥ eps` from `π` restricted and normalized;
    /// `u`, `v` are independent uniforms on `(0, 1)`.
    pub fn sample_big_jump(&self, eps: f64, u: f64, v: f64) -> f64 {
        match &self.prepared {
            Prepared::None => 0.0,
            Prepared::PowerLaw { a, .. } => eps * u.powf(-1.0 / a),
            Prepared::Table(t) => sample_table_jump(t, eps, u, v),
        }
    }

    /// Decides Grey's condition, potential finiteness and the `x log x` condition.
    pub fn classify(&self) -> Result<MechanismClass> {
        let report = self.integrals()?;
        let class = MechanismClass {
            criticality: self.criticality(),
            grey_holds: report.grey.is_some(),
            potential_finite: report.potential.is_some(),
            xlogx_holds: self.alpha > 0.0 && report.xlogx.is_some(),
        };
        Ok(class)
    }

    /// Numeric values of the integrals behind [`classify`](Self::classify).
    pub fn integrals(&self) -> Result<IntegralReport> {
        if let Prepared::Table(Table { tail: None, .. }) = self.prepared {
            return Err(Error::Undecidable("tabulated Levy measure has no declared tail exponent".into()));
        }
        let p = self.growth_exponent();
        let grey = if p > 1.0 {
            // ∫_1^U numerically, beyond U by the power tail ψ(λ) ≈ ψ(U)(λ/U)^p.
            let u: f64 = 1e6;
            let body =
                integrate(|y: f64| 1.0 / self.psi_at(y.exp()) * y.exp(), 0.0, u.ln(), QuadOpts::rel(1e-10))?.value;
            Some(body + u / (self.psi_at(u) * (p - 1.0)))
        } else {
            None
        };
        // Near 0: ψ(u) ≈ αu, else ψ(u) ≍ u^q with q the small-λ exponent.
        let potential = if self.alpha > 0.0 || self.small_lambda_exponent() < 2.0 {
            let q = tanh_sinh(|_, u, _| 1.0 / self.psi_over_lambda(u), 0.0, 1.0, 1e-10)?;
            Some(q.value)
        } else {
            None
        };
        let xlogx = match &self.prepared {
            Prepared::None => Some(0.0),
            Prepared::PowerLaw { c, a, .. } => Some(c / ((a - 1.0) * (a - 1.0))),
            Prepared::Table(t) => {
                let body: f64 = table_body(t, 0.0, |r| r * r.ln().max(0.0));
                let tail = match t.tail {
                    Some(at) => {
                        let m = t.rn().max(1.0);
                        // ∫_m^∞ r ln r d_n (r/r_n)^{-1-at} dr
                        let k = t.dn() * t.rn().powf(1.0 + at);
                        let e = at - 1.0;
                        k * m.powf(-e) * (m.ln() / e + 1.0 / (e * e))
                    }
                    None => 0.0,
                };
                Some(body + tail)
            }
        };
        Ok(IntegralReport { grey, potential, xlogx, growth_exponent: p })
    }

    /// Exponent `q` with `ψ(u) ≍ u^q` as `u → 0` for critical mechanisms.
    fn small_lambda_exponent(&self) -> f64 {
        if let Some(ClosedForm::Stable(b)) = self.closed_form {
            return b;
        }
        match &self.prepared {
            Prepared::PowerLaw { a, .. } => *a,
            Prepared::Table(Table { tail: Some(at), .. }) if *at < 2.0 => *at,
            _ => 2.0,
        }
    }
}

fn prepare(levy: &LevyMeasure) -> Result<Prepared> {
    match levy {
        LevyMeasure::None => Ok(Prepared::None),
        LevyMeasure::PowerLaw { c, a } => {
            if !(c.is_finite() && *c > 0.0) {
                return Err(Error::InvalidMechanism(format!("power-law constant c must be positive, got {c}")));
            }
            if !(*a > 1.0 && *a < 2.0) {
                return Err(Error::InvalidMechanism(format!("power-law exponent must lie in (1, 2), got {a}")));
            }
            Ok(Prepared::PowerLaw { c: *c, a: *a, k: power_law_constant(*a)? })
        }
        LevyMeasure::Table { r, density, tail_exponent } => {
            if r.len() < 2 || r.len() != density.len() {
                return Err(Error::InvalidMechanism(
                    "Levy table needs at least two points and equal-length r and density".into(),
                ));
            }
            if !(r[0] > 0.0) || r.windows(2).any(|w| !(w[1] > w[0])) || r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMechanism("Levy table grid must be positive and strictly increasing".into()));
            }
            if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return Err(Error::InvalidMechanism("Levy table density must be finite and nonnegative".into()));
            }
            if let Some(at) = tail_exponent {
                if !(*at > 1.0) {
                    // ∫^∞ r π(dr) diverges.
                    return Err(Error::Quadrature { lo: *r.last().unwrap(), hi: f64::INFINITY, error: f64::INFINITY });
                }
                if *at >= 2.0 {
                    return Err(Error::InvalidMechanism(format!("tail exponent must lie in (1, 2), got {at}")));
                }
            }
            Ok(Prepared::Table(Table { r: r.clone(), d: density.clone(), tail: *tail_exponent }))
        }
    }
}

/// `∫ f(r) d(r) dr` over the tabulated body. Cells narrower than `2/scale`
/// take a single Kronrod panel; wider ones are refined adaptively.
fn table_body<T: QuadValue, F: Fn(f64) -> T>(t: &Table, scale: f64, f: F) -> T {
    let mut total = T::zero();
    for i in 0..t.r.len() - 1 {
        let (a, b) = (t.r[i], t.r[i + 1]);
        let g = |r: f64| f(r) * t.density(r);
        let (v, _) = gk15(&g, a, b);
        total = total
            + if scale * (b - a) <= 2.0 {
                v
            } else {
                integrate(g, a, b, QuadOpts::rel(1e-13).with_abs(1e-300)).map(|q| q.value).unwrap_or(v)
            };
    }
    total
}

fn sample_table_jump(t: &Table, eps: f64, u: f64, v: f64) -> f64 {
    let total = t.moment(0, eps, f64::INFINITY);
    let mut target = u * total;
    for i in 0..t.r.len() - 1 {
        let (a, b) = (t.r[i].max(eps), t.r[i + 1]);
        if b <= a {
            continue;
        }
        let mass = t.body_moment(0, a, b);
        if target < mass || (i == t.r.len() - 2 && t.tail.is_none()) {
            // Invert the quadratic CDF of a linear density on [a, b].
            let (da, db) = (t.density(a), t.density(b));
            let h = b - a;
            let s = (db - da) / h;
            let m = v * mass;
            if s.abs() < 1e-14 * (da + db).max(1e-300) / h {
                return a + m / da.max(1e-300);
            }
            let disc = (da * da + 2.0 * s * m).max(0.0);
            return (a + (disc.sqrt() - da) / s).clamp(a, b);
        }
        target -= mass;
    }
    // Power tail beyond max(eps, r_n).
    let at = t.tail.unwrap_or(1.5);
    t.rn().max(eps) * v.powf(-1.0 / at)
}
