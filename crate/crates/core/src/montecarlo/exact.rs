//! Exact transitions for `ψ(λ) = aλ + bλ²`: given `Z_0 = x`, `Z_t` is a
//! Poisson(`x varphi(t)`) number of independent exponential clusters with
//! mean `m(t) = b(1 - e^{-at})/a` (`bt` when `a = 0`), since
//! `u_t(λ) = varphi(t) m(t)λ/(1 + m(t)λ)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::exec::map_chunks;
use super::SimConfig;
use crate::error::{Error, Result};
use crate::extinction::ExtinctionKernel;
use crate::mechanism::{BranchingMechanism, LevyMeasure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FellerParams {
    pub a: f64,
    pub b: f64,
}

impl FellerParams {
    pub fn from_mechanism(m: &BranchingMechanism) -> Result<Self> {
        if !matches!(m.levy(), LevyMeasure::None) || m.sigma2() <= 0.0 {
            return Err(Error::Config(
                "exact transition sampling needs psi = a*lambda + b*lambda^2 (no jumps); use simulate_lamperti".into(),
            ));
        }
        Ok(Self { a: m.alpha(), b: 0.5 * m.sigma2() })
    }

    pub fn varphi(&self, t: f64) -> f64 {
        if self.a > 0.0 {
            self.a / (self.b * (self.a * t).exp_m1())
        } else {
            1.0 / (self.b * t)
        }
    }

    pub fn phi(&self, l: f64) -> f64 {
        if self.a > 0.0 {
            (self.a / (self.b * l)).ln_1p() / self.a
        } else {
            1.0 / (self.b * l)
        }
    }

    pub fn cluster_mean(&self, t: f64) -> f64 {
        if self.a > 0.0 {
            -self.b * (-self.a * t).exp_m1() / self.a
        } else {
            self.b * t
        }
    }

    pub fn transition(&self, x: f64, t: f64) -> ExactTransition {
        ExactTransition { rate: x * self.varphi(t), mean: self.cluster_mean(t) }
    }
}

/// Law of `Z_t` from a fixed start: `rate` clusters of mean `mean`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactTransition {
    pub rate: f64,
    pub mean: f64,
}

impl ExactTransition {
    pub fn p_zero(&self) -> f64 {
        (-self.rate).exp()
    }

    fn clusters<R: Rng + ?Sized>(&self, rng: &mut R, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        Gamma::new(n as f64, self.mean).expect("positive shape and scale").sample(rng)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = if self.rate > 0.0 { Poisson::new(self.rate).expect("positive rate").sample(rng) as u64 } else { 0 };
        self.clusters(rng, n)
    }

    /// A draw of `Z_t` given `Z_t > 0`.
    pub fn draw_positive<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = zero_truncated_poisson(rng, self.rate);
        self.clusters(rng, n)
    }
}

/// Poisson(`mu`) conditioned to be at least one.
pub(crate) fn zero_truncated_poisson<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    if mu < 1.0 {
        let target = rng.random::<f64>() * -(-mu).exp_m1();
        let mut p = mu * (-mu).exp();
        let mut cum = p;
        let mut k = 1u64;
        while cum < target && k < 10_000 {
            k += 1;
            p *= mu / k as f64;
            cum += p;
        }
        k
    } else {
        let d = Poisson::new(mu).expect("positive rate");
        loop {
            let n = d.sample(rng) as u64;
            if n > 0 {
                return n;
            }
        }
    }
}

/// `cfg.n_paths` independent draws of `Z_t` under `P_x`.
pub fn sample_transition_exact(k: &ExtinctionKernel, x: f64, t: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(x > 0.0 && t > 0.0) {
        return Err(Error::Domain(format!("exact sampling needs x, t > 0, got x={x}, t={t}")));
    }
    let tr = FellerParams::from_mechanism(k.mechanism())?.transition(x, t);
    let chunks = map_chunks(cfg, cfg.n_paths, |rng, n| Ok((0..n).map(|_| tr.draw(rng)).collect::<Vec<_>>()))?;
    Ok(chunks.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::exec::stream;
    use crate::montecarlo::WeightedSample;
    use std::sync::Arc;

    fn kernel(m: BranchingMechanism) -> ExtinctionKernel {
        ExtinctionKernel::new(Arc::new(m)).unwrap()
    }

    #[test]
    fn feller_closed_forms_match_kernel() {
        for m in [
            BranchingMechanism::quadratic(),
            BranchingMechanism::linear_plus_quadratic(),
            BranchingMechanism::new(0.3, 0.7, LevyMeasure::None).unwrap(),
        ] {
            let p = FellerParams::from_mechanism(&m).unwrap();
            let k = kernel(m);
            for &t in &[0.01, 1.0, 7.0] {
                assert!((p.varphi(t) / k.varphi(t).unwrap() - 1.0).abs() < 1e-9);
                // u_t(λ) = varphi(t) m λ/(1 + m λ)
                let l = 0.8;
                let m = p.cluster_mean(t);
                let u = p.varphi(t) * m * l / (1.0 + m * l);
                assert!((u / k.u_t(t, l).unwrap() - 1.0).abs() < 1e-9);
                assert!((p.phi(l) / k.phi(l).unwrap() - 1.0).abs() < 1e-9);
            }
        }
        assert!(FellerParams::from_mechanism(&BranchingMechanism::stable_triplet(1.5).unwrap()).is_err());
    }

    #[test]
    fn atom_at_zero_and_laplace() {
        let k = kernel(BranchingMechanism::quadratic());
        let cfg = SimConfig::default().with_seed(11);
        let z = sample_transition_exact(&k, 1.0, 1.0, &cfg).unwrap();
        assert_eq!(z.len(), 100_000);
        let atom = WeightedSample::unweighted(z.clone()).expect(|v| if v == 0.0 { 1.0 } else { 0.0 }).unwrap();
        assert!(atom.contains((-1.0f64).exp(), 3.0), "{atom:?}");
        let lt = WeightedSample::unweighted(z).laplace(1.0).unwrap();
        assert!(lt.contains((-0.5f64).exp(), 3.0), "{lt:?}");
    }

    #[test]
    fn exact_law_at_five_points() {
        for m in [BranchingMechanism::quadratic(), BranchingMechanism::linear_plus_quadratic()] {
            let k = kernel(m);
            let cfg = SimConfig::default().with_seed(3);
            let z = WeightedSample::unweighted(sample_transition_exact(&k, 1.5, 0.7, &cfg).unwrap());
            for &l in &[0.1, 0.5, 1.0, 2.0, 5.0] {
                let est = z.laplace(l).unwrap();
                let exact = (-1.5 * k.u_t(0.7, l).unwrap()).exp();
                assert!(est.contains(exact, 3.0), "lambda={l}: {est:?} vs {exact}");
            }
        }
    }

    #[test]
    fn small_time_mean_tends_to_start() {
        let p = FellerParams::from_mechanism(&BranchingMechanism::linear_plus_quadratic()).unwrap();
        let tr = p.transition(2.0, 1e-6);
        assert!((tr.rate * tr.mean / (2.0 * (-1e-6f64).exp()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_poisson_has_right_mean() {
        let mut rng = stream(5, 0);
        for &mu in &[1e-9, 0.3, 2.5] {
            let n = 200_000;
            let mean = (0..n).map(|_| zero_truncated_poisson(&mut rng, mu) as f64).sum::<f64>() / n as f64;
            let exact = mu / -(-mu).exp_m1();
            assert!((mean / exact - 1.0).abs() < 0.01, "mu={mu}: {mean} vs {exact}");
        }
    }
}
