//! Seeded, chunked execution of Monte Carlo workloads.
//!
//! Every MC routine splits its repetitions into fixed-size chunks. Chunk `i`
//! draws from its own ChaCha8 stream (`set_stream(i)`) under a seed derived
//! from the user seed and a per-routine domain tag, so the results depend only
//! on `(seed, reps, chunk_size)` and never on thread scheduling. With the
//! `parallel` feature chunks run on the rayon pool; without it, or with
//! [`Exec::Sequential`], they run in order on the calling thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Default number of repetitions per chunk.
pub const DEFAULT_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    /// Falls back to sequential execution when built without `parallel`.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Repetition count, seed, chunking policy and execution mode for one MC run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub reps: usize,
    pub seed: u64,
    pub chunk: usize,
    pub exec: Exec,
}

impl McConfig {
    pub fn new(reps: usize, seed: u64) -> Self {
        McConfig {
            reps,
            seed,
            chunk: DEFAULT_CHUNK,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }

    /// Rep ranges of each chunk, in order.
    pub fn chunks(&self) -> Vec<Range<usize>> {
        let chunk = self.chunk.max(1);
        (0..self.reps)
            .step_by(chunk)
            .map(|start| start..(start + chunk).min(self.reps))
            .collect()
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a named routine, so different routines sharing a user seed do not
/// share random tapes.
pub fn derive_seed(seed: u64, domain: &str) -> u64 {
    domain
        .bytes()
        .fold(mix64(seed), |acc, b| mix64(acc ^ u64::from(b)))
}

/// The generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Maps `f` over `items` preserving order, in parallel when requested and available.
pub fn map_ordered<T, R, F>(exec: Exec, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

/// Runs `f(chunk_rng, rep_range)` for every chunk of `cfg` and returns the
/// per-chunk results in chunk order.
pub fn run_chunks<R, F>(cfg: &McConfig, domain: &str, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut ChaCha8Rng, Range<usize>) -> R + Sync + Send,
{
    let seed = derive_seed(cfg.seed, domain);
    let work: Vec<(u64, Range<usize>)> = cfg
        .chunks()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (i as u64, r))
        .collect();
    map_ordered(cfg.exec, work, |(i, range)| {
        let mut rng = stream_rng(seed, i);
        f(&mut rng, range)
    })
}
