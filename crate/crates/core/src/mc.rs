//! Deterministic, chunked Monte-Carlo.
//!
//! Trials are split into fixed-size chunks. Chunk `c` draws from a ChaCha8
//! generator seeded with the run seed and switched to stream `c`, so results
//! depend only on `(seed, chunk_size)` and never on the number of threads or
//! on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default number of trials per chunk.
pub const DEFAULT_CHUNK: usize = 256;

/// Generator for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs `trial` `trials` times and returns the per-trial outputs in trial order.
pub fn map_trials<T, F>(seed: u64, trials: usize, chunk_size: usize, trial: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let chunk_size = chunk_size.max(1);
    let chunks = trials.div_ceil(chunk_size);
    let per_chunk: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let count = chunk_size.min(trials - c * chunk_size);
            (0..count).map(|_| trial(&mut rng)).collect()
        })
        .collect();
    per_chunk.into_iter().flatten().collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, trials: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate { mean, stderr: (var / n as f64).sqrt(), trials: n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn reproducible_across_thread_counts() {
        let f = |rng: &mut ChaCha8Rng| rng.random::<f64>();
        let a = map_trials(7, 1000, 64, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| map_trials(7, 1000, 64, f));
        assert_eq!(a, b);
        let c = map_trials(8, 1000, 64, f);
        assert_ne!(a, c);
    }

    #[test]
    fn estimate_of_constant() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
    }
}
