use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SimConfig;
use crate::error::Result;

/// Paths per chunk (one RNG stream each).
pub const CHUNK: usize = 4096;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs `f(rng, count)` over `ceil(n / CHUNK)` chunks and returns the
/// results in chunk order.
pub(crate) fn map_chunks<T, F>(cfg: &SimConfig, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T> + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let job = |c: usize| {
        let count = if c + 1 == chunks { n - c * CHUNK } else { CHUNK };
        let mut rng = stream(cfg.seed, c as u64);
        f(&mut rng, count)
    };
    run(cfg.workers, chunks, job)
}

#[cfg(feature = "parallel")]
fn run<T: Send, J: Fn(usize) -> Result<T> + Sync + Send>(workers: usize, chunks: usize, job: J) -> Result<Vec<T>> {
    use rayon::prelude::*;
    if workers == 1 || chunks == 1 {
        return (0..chunks).map(job).collect();
    }
    let go = || (0..chunks).into_par_iter().map(&job).collect::<Vec<_>>().into_iter().collect();
    if workers == 0 {
        go()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::error::Error::Config(format!("thread pool: {e}")))?
            .install(go)
    }
}

#[cfg(not(feature = "parallel"))]
fn run<T: Send, J: Fn(usize) -> Result<T> + Sync + Send>(_workers: usize, chunks: usize, job: J) -> Result<Vec<T>> {
    (0..chunks).map(job).collect()
}
