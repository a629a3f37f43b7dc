//! Closed-form oracle families `ψ(λ) = λ^β` (`1 < β ≤ 2`) and `ψ(λ) = λ + λ²`.
//! Every quantity here is a direct formula; the numerical modules are tested
//! against these values.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::laws::GammaLaw;
use crate::mechanism::{BranchingMechanism, ClosedForm};
use crate::special::gamma;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleFamily {
    /// `ψ(λ) = λ^β`; `β = 2` is the quadratic mechanism.
    Stable(f64),
    LinearPlusQuadratic,
}

impl OracleFamily {
    pub fn new(cf: ClosedForm) -> Self {
        match cf {
            ClosedForm::Quadratic => OracleFamily::Stable(2.0),
            ClosedForm::Stable(b) => OracleFamily::Stable(b),
            ClosedForm::LinearPlusQuadratic => OracleFamily::LinearPlusQuadratic,
        }
    }

    pub fn closed_form(&self) -> ClosedForm {
        match *self {
            OracleFamily::Stable(b) if b == 2.0 => ClosedForm::Quadratic,
            OracleFamily::Stable(b) => ClosedForm::Stable(b),
            OracleFamily::LinearPlusQuadratic => ClosedForm::LinearPlusQuadratic,
        }
    }

    pub fn mechanism(&self) -> Result<BranchingMechanism> {
        BranchingMechanism::with_closed_form(self.closed_form())
    }

    pub fn alpha(&self) -> f64 {
        match self {
            OracleFamily::Stable(_) => 0.0,
            OracleFamily::LinearPlusQuadratic => 1.0,
        }
    }

    pub fn psi(&self, l: f64) -> f64 {
        match *self {
            OracleFamily::Stable(b) => l.powf(b),
            OracleFamily::LinearPlusQuadratic => l + l * l,
        }
    }

    pub fn psi_prime(&self, l: f64) -> f64 {
        match *self {
            OracleFamily::Stable(b) => b * l.powf(b - 1.0),
            OracleFamily::LinearPlusQuadratic => 1.0 + 2.0 * l,
        }
    }

    pub fn phi(&self, l: f64) -> f64 {
        match *self {
            OracleFamily::Stable(b) => l.powf(1.0 - b) / (b - 1.0),
            OracleFamily::LinearPlusQuadratic => (1.0 / l).ln_1p(),
        }
    }

    pub fn varphi(&self, t: f64) -> f64 {
        match *self {
            OracleFamily::Stable(b) => ((b - 1.0) * t).powf(-1.0 / (b - 1.0)),
            OracleFamily::LinearPlusQuadratic => 1.0 / t.exp_m1(),
        }
    }

    /// `u_t(λ) = varphi(t + φ(λ))`, simplified.
    pub fn u_t(&self, t: f64, l: f64) -> f64 {
        match *self {
            OracleFamily::Stable(b) => (l.powf(1.0 - b) + (b - 1.0) * t).powf(-1.0 / (b - 1.0)),
            OracleFamily::LinearPlusQuadratic => l / (t.exp() + l * t.exp_m1()),
        }
    }

    pub fn w(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            OracleFamily::Stable(b) => x.powf(b - 1.0) / gamma(b),
            OracleFamily::LinearPlusQuadratic => -(-x).exp_m1(),
        }
    }

    pub fn w_prime(&self, x: f64) -> f64 {
        match *self {
            OracleFamily::Stable(b) => (b - 1.0) * x.powf(b - 2.0) / gamma(b),
            OracleFamily::LinearPlusQuadratic => (-x).exp(),
        }
    }

    fn subcritical(&self, what: &str) -> Result<()> {
        match self {
            OracleFamily::Stable(_) => {
                Err(Error::Domain(format!("{what} is undefined for the critical family {self}")))
            }
            OracleFamily::LinearPlusQuadratic => Ok(()),
        }
    }

    /// The Yaglom law, `Exp(1)` for `λ + λ²`.
    pub fn yaglom_law(&self) -> Result<GammaLaw> {
        self.subcritical("the Yaglom law")?;
        GammaLaw::exponential(1.0)
    }

    /// `W_s`: `Gamma(β - 1, varphi(s))`, or `Exp(1 + varphi(s))` for `λ + λ²`.
    pub fn ws_law(&self, s: f64) -> Result<GammaLaw> {
        match *self {
            OracleFamily::Stable(b) => GammaLaw::new(b - 1.0, self.varphi(s)),
            OracleFamily::LinearPlusQuadratic => GammaLaw::exponential(1.0 + self.varphi(s)),
        }
    }

    /// `V_q`: `Gamma(β, varphi(q))`, or `Gamma(2, 1 + varphi(q))` for `λ + λ²`.
    pub fn vq_law(&self, q: f64) -> Result<GammaLaw> {
        match *self {
            OracleFamily::Stable(b) => GammaLaw::new(b, self.varphi(q)),
            OracleFamily::LinearPlusQuadratic => GammaLaw::new(2.0, 1.0 + self.varphi(q)),
        }
    }

    pub fn vinf_law(&self) -> Result<GammaLaw> {
        self.subcritical("V_inf")?;
        GammaLaw::new(2.0, 1.0)
    }
}

impl fmt::Display for OracleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.closed_form())
    }
}

impl FromStr for OracleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Self::new(s.parse()?))
    }
}

impl Serialize for OracleFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Psi,
    PsiPrime,
    Phi,
    Varphi,
    Ut,
    W,
    Wprime,
    YaglomLt,
    WsLt,
    VqLt,
    VinfLt,
}

impl Quantity {
    pub const ALL: [Quantity; 11] = [
        Quantity::Psi,
        Quantity::PsiPrime,
        Quantity::Phi,
        Quantity::Varphi,
        Quantity::Ut,
        Quantity::W,
        Quantity::Wprime,
        Quantity::YaglomLt,
        Quantity::WsLt,
        Quantity::VqLt,
        Quantity::VinfLt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Psi => "psi",
            Quantity::PsiPrime => "psi_prime",
            Quantity::Phi => "phi",
            Quantity::Varphi => "varphi",
            Quantity::Ut => "ut",
            Quantity::W => "W",
            Quantity::Wprime => "Wprime",
            Quantity::YaglomLt => "yaglom_lt",
            Quantity::WsLt => "ws_lt",
            Quantity::VqLt => "vq_lt",
            Quantity::VinfLt => "vinf_lt",
        }
    }

    /// Argument names, in order.
    pub fn args(&self) -> &'static [&'static str] {
        match self {
            Quantity::Psi | Quantity::PsiPrime | Quantity::Phi | Quantity::YaglomLt | Quantity::VinfLt => &["lambda"],
            Quantity::Varphi => &["t"],
            Quantity::Ut => &["t", "lambda"],
            Quantity::W | Quantity::Wprime => &["x"],
            Quantity::WsLt => &["s", "lambda"],
            Quantity::VqLt => &["q", "lambda"],
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown oracle quantity '{s}'")))
    }
}

/// Evaluates `quantity` for `family` at `args` (see [`Quantity::args`]).
pub fn oracle_eval(family: OracleFamily, quantity: Quantity, args: &[f64]) -> Result<f64> {
    let names = quantity.args();
    if args.len() != names.len() {
        return Err(Error::Config(format!(
            "{quantity} takes {} argument(s) ({}), got {}",
            names.len(),
            names.join(", "),
            args.len()
        )));
    }
    let f = family;
    Ok(match quantity {
        Quantity::Psi => f.psi(args[0]),
        Quantity::PsiPrime => f.psi_prime(args[0]),
        Quantity::Phi => f.phi(args[0]),
        Quantity::Varphi => f.varphi(args[0]),
        Quantity::Ut => f.u_t(args[0], args[1]),
        Quantity::W => f.w(args[0]),
        Quantity::Wprime => f.w_prime(args[0]),
        Quantity::YaglomLt => f.yaglom_law()?.laplace(args[0]),
        Quantity::WsLt => f.ws_law(args[0])?.laplace(args[1]),
        Quantity::VqLt => f.vq_law(args[0])?.laplace(args[1]),
        Quantity::VinfLt => f.vinf_law()?.laplace(args[0]),
    })
}
