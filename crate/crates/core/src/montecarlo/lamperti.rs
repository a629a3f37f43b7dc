//! Euler scheme for the Lamperti representation `Z_t = X_{θ_t}`,
//! `θ_t = ∫_0^t Z_s ds`. Each step of length `dt` on the branching clock
//! advances the Lévy clock by `h = Z dt`. The Lévy increment over `h` has
//! drift `-(α + ∫_{r≥ε} r π(dr)) h`, Gaussian variance
//! `(σ² + ∫_{r<ε} r² π(dr)) h` and compound-Poisson jumps of size `≥ ε`.
//! Paths are killed at the first step ending at or below zero, or by the
//! Brownian-bridge crossing probability `exp(-2 X X' / (s² h))`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;

use super::exec::map_chunks;
use super::SimConfig;
use crate::error::{Error, Result};
use crate::mechanism::BranchingMechanism;

/// Largest admissible rate of jumps of size `≥ ε` per unit Lévy time.
pub const MAX_JUMP_RATE: f64 = 1e7;

/// Stored steps are capped to keep a single path in memory.
const MAX_PATH_STEPS: f64 = 5e7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LampertiPath {
    pub times: Vec<f64>,
    /// `X` at the Lévy times in `clock`.
    pub x: Vec<f64>,
    /// `θ_t`.
    pub clock: Vec<f64>,
    /// `Z_t`; zero from the absorption index on.
    pub z: Vec<f64>,
    pub absorption_index: Option<usize>,
    pub zeta: Option<f64>,
}

impl LampertiPath {
    /// `M_t = Z_t e^{αt}`.
    pub fn martingale(&self, alpha: f64) -> Vec<f64> {
        self.times.iter().zip(&self.z).map(|(&t, &z)| z * (alpha * t).exp()).collect()
    }
}

/// End state of a path run to a fixed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LampertiEnd {
    pub z: f64,
    pub zeta: Option<f64>,
}

struct Stepper {
    drift: f64,
    var: f64,
    big_rate: f64,
    eps: f64,
    dt: f64,
}

impl Stepper {
    fn new(m: &BranchingMechanism, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let split = m.jump_split(cfg.eps)?;
        if split.big_rate > MAX_JUMP_RATE {
            return Err(Error::Config(format!(
                "jump rate {:.3e} above eps = {} exceeds {MAX_JUMP_RATE:e} per unit time; raise eps",
                split.big_rate, cfg.eps
            )));
        }
        Ok(Self {
            drift: -(m.alpha() + split.big_mean),
            var: m.sigma2() + split.small_variance,
            big_rate: split.big_rate,
            eps: cfg.eps,
            dt: cfg.dt,
        })
    }

    /// One step from `x > 0`; returns the new value and, when killed,
    /// the fraction of the step elapsed before absorption.
    fn step(&self, m: &BranchingMechanism, rng: &mut ChaCha8Rng, x: f64) -> (f64, Option<f64>) {
        let h = x * self.dt;
        let mut next = x + self.drift * h;
        if self.var > 0.0 {
            let g: f64 = StandardNormal.sample(rng);
            next += (self.var * h).sqrt() * g;
        }
        let mu = self.big_rate * h;
        if mu > 0.0 {
            let n = Poisson::new(mu).expect("positive rate").sample(rng) as u64;
            for _ in 0..n {
                next += m.sample_big_jump(self.eps, rng.random::<f64>(), rng.random::<f64>());
            }
        }
        if next <= 0.0 {
            return (0.0, Some(x / (x - next)));
        }
        if self.var > 0.0 {
            let p = (-2.0 * x * next / (self.var * h)).exp();
            if rng.random::<f64>() < p {
                return (0.0, Some(0.5));
            }
        }
        (next, None)
    }
}

/// One path from `x` up to absorption or `cfg.horizon`.
pub fn simulate_lamperti(
    m: &BranchingMechanism,
    x: f64,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LampertiPath> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("start must be positive, got {x}")));
    }
    let st = Stepper::new(m, cfg)?;
    let steps = (cfg.horizon / cfg.dt).ceil();
    if steps > MAX_PATH_STEPS {
        return Err(Error::Config(format!("horizon/dt = {steps:e} steps is too long for a stored path")));
    }
    let steps = steps as usize;
    let mut path =
        LampertiPath { times: vec![0.0], x: vec![x], clock: vec![0.0], z: vec![x], absorption_index: None, zeta: None };
    let mut z = x;
    let mut theta = 0.0;
    for i in 1..=steps {
        let t = i as f64 * cfg.dt;
        let (next, killed) = st.step(m, rng, z);
        match killed {
            None => {
                theta += 0.5 * (z + next) * cfg.dt;
                z = next;
                path.times.push(t);
                path.x.push(z);
                path.clock.push(theta);
                path.z.push(z);
            }
            Some(frac) => {
                theta += 0.5 * z * frac * cfg.dt;
                path.times.push(t);
                path.x.push(next.min(0.0));
                path.clock.push(theta);
                path.z.push(0.0);
                path.absorption_index = Some(i);
                path.zeta = Some(t - (1.0 - frac) * cfg.dt);
                break;
            }
        }
    }
    Ok(path)
}

/// `(Z_t, ζ if ζ ≤ t)` for `cfg.n_paths` Euler paths from `x`.
pub fn lamperti_marginals(m: &BranchingMechanism, x: f64, t: f64, cfg: &SimConfig) -> Result<Vec<LampertiEnd>> {
    if !(x > 0.0 && t > 0.0) {
        return Err(Error::Domain(format!("lamperti marginals need x, t > 0, got x={x}, t={t}")));
    }
    let st = Stepper::new(m, cfg)?;
    let steps = (t / cfg.dt).round().max(1.0) as usize;
    let dt = t / steps as f64;
    let st = Stepper { dt, ..st };
    let chunks = map_chunks(cfg, cfg.n_paths, |rng, n| {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut z = x;
            let mut zeta = None;
            for i in 1..=steps {
                let (next, killed) = st.step(m, rng, z);
                if let Some(frac) = killed {
                    zeta = Some((i as f64 - 1.0 + frac) * dt);
                    z = 0.0;
                    break;
                }
                z = next;
            }
            out.push(LampertiEnd { z, zeta });
        }
        Ok(out)
    })?;
    Ok(chunks.concat())
}
