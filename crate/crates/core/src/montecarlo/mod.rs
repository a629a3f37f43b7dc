//! Monte Carlo engine: exact Feller transitions, a Lamperti/Euler path
//! simulator for general mechanisms, and the conditioned experiments.
//!
//! Paths are grouped in chunks of [`CHUNK`]; chunk `c` draws from the
//! ChaCha8 stream `(seed, c)`, and chunk results are combined in chunk
//! order, so estimates do not depend on the number of workers.

mod exact;
mod exec;
mod experiments;
mod lamperti;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::{sample_transition_exact, ExactTransition, FellerParams};
pub use exec::CHUNK;
pub use experiments::{
    mc_fixed_time, mc_near_extinction, mc_qprocess, mc_rescaled_survival, mc_reverse_from_extinction, Diagnostics,
    McOutcome,
};
pub use lamperti::{lamperti_marginals, simulate_lamperti, LampertiEnd, LampertiPath};
pub use stats::{ks_one_sample, ks_two_sample, ks_weighted, McEstimate, WeightedSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_paths: usize,
    /// Euler step on the branching-process clock.
    pub dt: f64,
    /// Jumps below this size are replaced by Gaussian noise.
    pub eps: f64,
    pub horizon: f64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { seed: 0, n_paths: 100_000, dt: 1e-3, eps: 1e-3, horizon: 1e6, workers: 0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_workers(mut self, w: usize) -> Self {
        self.workers = w;
        self
    }
}
