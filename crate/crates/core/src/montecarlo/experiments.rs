//! Conditioned experiments on the exactly sampled Feller mechanisms.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::Serialize;

use super::exact::FellerParams;
use super::exec::{map_chunks, stream};
use super::stats::{McEstimate, WeightedSample};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::extinction::ExtinctionKernel;

/// Rejection below this acceptance rate is abandoned.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Importance-weighted estimators need at least this effective sample size.
pub const MIN_ESS: f64 = 100.0;
/// Largest tolerated share of paths still alive at the horizon.
pub const MAX_UNABSORBED: f64 = 0.01;

const PILOT: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub proposals: u64,
    pub accepted: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    pub ess: f64,
    /// Paths with `ζ` beyond the horizon.
    pub unabsorbed: u64,
    /// Paths outside the conditioning event.
    pub excluded: u64,
    /// Sample mean of the normalized martingale weights (should be 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_mean: Option<McEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutcome {
    pub sample: WeightedSample,
    pub diagnostics: Diagnostics,
}

fn check_ess(sample: &WeightedSample) -> Result<f64> {
    let ess = sample.ess();
    if ess < MIN_ESS {
        return Err(Error::Estimator(format!("effective sample size {ess:.1} is below {MIN_ESS}")));
    }
    Ok(ess)
}

fn start(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("start must be positive, got {x}")))
    }
}

/// Law of `Z_t` under `P_x(· | t ≤ ζ < t + s)`: positive draws of `Z_t`
/// accepted with probability `P_z(ζ < s) = e^{-z varphi(s)}`.
/// `cfg.n_paths` is the number of accepted draws.
pub fn mc_near_extinction(k: &ExtinctionKernel, x: f64, t: f64, s: f64, cfg: &SimConfig) -> Result<McOutcome> {
    cfg.validate()?;
    start(x)?;
    if !(t > 0.0 && s > 0.0) {
        return Err(Error::Domain(format!("near-extinction needs t, s > 0, got t={t}, s={s}")));
    }
    let p = FellerParams::from_mechanism(k.mechanism())?;
    let tr = p.transition(x, t);
    let v = p.varphi(s);
    let abort = |rate: f64| {
        Error::Estimator(format!("acceptance rate {rate:.2e} is below {MIN_ACCEPTANCE:e}; increase s or reduce t"))
    };
    let mut pilot = stream(cfg.seed, u64::MAX);
    let hits = (0..PILOT).filter(|_| pilot.random::<f64>() < (-v * tr.draw_positive(&mut pilot)).exp()).count();
    let pilot_rate = hits as f64 / PILOT as f64;
    if pilot_rate < MIN_ACCEPTANCE {
        return Err(abort(pilot_rate));
    }
    let chunks = map_chunks(cfg, cfg.n_paths, |rng, n| {
        let budget = (100.0 * n as f64 / pilot_rate).ceil() as u64;
        let mut out = Vec::with_capacity(n);
        let mut proposals = 0u64;
        while out.len() < n {
            if proposals >= budget {
                return Err(abort(out.len() as f64 / proposals as f64));
            }
            proposals += 1;
            let z = tr.draw_positive(rng);
            if rng.random::<f64>() < (-v * z).exp() {
                out.push(z);
            }
        }
        Ok((out, proposals))
    })?;
    let proposals: u64 = chunks.iter().map(|c| c.1).sum();
    let values: Vec<f64> = chunks.into_iter().flat_map(|c| c.0).collect();
    let accepted = values.len() as u64;
    let rate = accepted as f64 / proposals as f64;
    if rate < MIN_ACCEPTANCE {
        return Err(abort(rate));
    }
    let sample = WeightedSample::unweighted(values);
    Ok(McOutcome {
        diagnostics: Diagnostics {
            proposals,
            accepted,
            acceptance_rate: Some(rate),
            ess: sample.ess(),
            ..Diagnostics::default()
        },
        sample,
    })
}

/// Law of `Z_{t-q}` under `P_x(· | ζ = t)`: positive draws of `Z_{t-q}`
/// with self-normalized weights `z e^{-varphi(q) z}`.
pub fn mc_fixed_time(k: &ExtinctionKernel, x: f64, t: f64, q: f64, cfg: &SimConfig) -> Result<McOutcome> {
    cfg.validate()?;
    start(x)?;
    if !(q > 0.0 && q < t) {
        return Err(Error::Domain(format!("fixed-time conditioning needs 0 < q < t, got q={q}, t={t}")));
    }
    let p = FellerParams::from_mechanism(k.mechanism())?;
    let tr = p.transition(x, t - q);
    let v = p.varphi(q);
    let chunks = map_chunks(cfg, cfg.n_paths, |rng, n| Ok((0..n).map(|_| tr.draw_positive(rng)).collect::<Vec<_>>()))?;
    let values = chunks.concat();
    let weights = values.iter().map(|&z| z * (-v * z).exp()).collect();
    let sample = WeightedSample::weighted(values, weights)?;
    let ess = check_ess(&sample)?;
    Ok(McOutcome {
        diagnostics: Diagnostics {
            proposals: cfg.n_paths as u64,
            accepted: cfg.n_paths as u64,
            ess,
            ..Diagnostics::default()
        },
        sample,
    })
}

/// Law of `Z_{ζ-q}` on `{ζ > q}` under `P_x`. `ζ` is drawn exactly from
/// `P_x(ζ ≤ r) = e^{-x varphi(r)}`; given `ζ`, `Z_{ζ-q}` has the transition
/// law over `τ = ζ - q` tilted by `y e^{-y varphi(q)}`, which is again a
/// Poisson mixture: `1 + Poisson(x varphi(τ)/c)` clusters and a
/// `Gamma(n + 1, m(τ)/c)` total with `c = 1 + varphi(q) m(τ)`.
pub fn mc_reverse_from_extinction(k: &ExtinctionKernel, x: f64, q: f64, cfg: &SimConfig) -> Result<McOutcome> {
    cfg.validate()?;
    start(x)?;
    if !(q > 0.0) {
        return Err(Error::Domain(format!("reverse experiment needs q > 0, got {q}")));
    }
    let p = FellerParams::from_mechanism(k.mechanism())?;
    let vq = p.varphi(q);
    let chunks = map_chunks(cfg, cfg.n_paths, |rng, n| {
        let mut out = Vec::with_capacity(n);
        let (mut excluded, mut unabsorbed) = (0u64, 0u64);
        for _ in 0..n {
            let u = 1.0 - rng.random::<f64>();
            let zeta = p.phi(-u.ln() / x);
            if zeta <= q {
                excluded += 1;
                continue;
            }
            if !(zeta <= cfg.horizon) {
                unabsorbed += 1;
                continue;
            }
            let tau = zeta - q;
            let m = p.cluster_mean(tau);
            let c = 1.0 + vq * m;
            let mu = x * p.varphi(tau) / c;
            let extra = if mu > 0.0 { Poisson::new(mu).expect("positive rate").sample(rng) } else { 0.0 };
            let y = Gamma::new(extra + 2.0, m / c).expect("positive parameters").sample(rng);
            out.push(y);
        }
        Ok((out, excluded, unabsorbed))
    })?;
    let excluded: u64 = chunks.iter().map(|c| c.1).sum();
    let unabsorbed: u64 = chunks.iter().map(|c| c.2).sum();
    if unabsorbed as f64 > MAX_UNABSORBED * cfg.n_paths as f64 {
        return Err(Error::Estimator(format!(
            "{unabsorbed} of {} paths not absorbed by the horizon {}",
            cfg.n_paths, cfg.horizon
        )));
    }
    let values: Vec<f64> = chunks.into_iter().flat_map(|c| c.0).collect();
    if values.len() < 2 {
        return Err(Error::Estimator("no path survived past q".into()));
    }
    let sample = WeightedSample::unweighted(values);
    Ok(McOutcome {
        diagnostics: Diagnostics {
            proposals: cfg.n_paths as u64,
            accepted: sample.len() as u64,
            ess: sample.ess(),
            unabsorbed,
            excluded,
            ..Diagnostics::default()
        },
        sample,
    })
}

/// Law of the Q-process at time `t`: draws of `Z_t` weighted by
/// `M_t/M_0 = Z_t e^{αt}/x`. Only positive draws carry weight, so those
/// are drawn directly and the mean-one check rescales by `P_x(ζ > t)`.
pub fn mc_qprocess(k: &ExtinctionKernel, x: f64, t: f64, cfg: &SimConfig) -> Result<McOutcome> {
    cfg.validate()?;
    start(x)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Q-process needs t > 0, got {t}")));
    }
    let p = FellerParams::from_mechanism(k.mechanism())?;
    let tr = p.transition(x, t);
    let survive = -(-tr.rate).exp_m1();
    let chunks = map_chunks(cfg, cfg.n_paths, |rng, n| Ok((0..n).map(|_| tr.draw_positive(rng)).collect::<Vec<_>>()))?;
    let values = chunks.concat();
    let growth = (p.a * t).exp() / x;
    let weights: Vec<f64> = values.iter().map(|&z| z * growth).collect();
    let weight_mean = McEstimate::mean_of(weights.iter().map(|w| w * survive))?;
    let sample = WeightedSample::weighted(values, weights)?;
    let ess = check_ess(&sample)?;
    Ok(McOutcome {
        diagnostics: Diagnostics {
            proposals: cfg.n_paths as u64,
            accepted: cfg.n_paths as u64,
            ess,
            weight_mean: Some(weight_mean),
            ..Diagnostics::default()
        },
        sample,
    })
}

/// Draws of `Z_t / t` under `P_x(· | ζ > t)`.
pub fn mc_rescaled_survival(k: &ExtinctionKernel, x: f64, t: f64, cfg: &SimConfig) -> Result<McOutcome> {
    cfg.validate()?;
    start(x)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("rescaled survival needs t > 0, got {t}")));
    }
    let tr = FellerParams::from_mechanism(k.mechanism())?.transition(x, t);
    let chunks =
        map_chunks(cfg, cfg.n_paths, |rng, n| Ok((0..n).map(|_| tr.draw_positive(rng) / t).collect::<Vec<_>>()))?;
    let sample = WeightedSample::unweighted(chunks.concat());
    Ok(McOutcome {
        diagnostics: Diagnostics {
            proposals: cfg.n_paths as u64,
            accepted: cfg.n_paths as u64,
            ess: sample.ess(),
            ..Diagnostics::default()
        },
        sample,
    })
}
