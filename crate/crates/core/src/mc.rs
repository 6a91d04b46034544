//! Monte Carlo configuration and the deterministic path fan-out.
//!
//! Work is split across a rayon pool of `workers` threads, but per-path
//! results are collected in path order and reduced sequentially, so every
//! statistic is bit-identical for a fixed seed regardless of worker count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{sample_path, BrownianPath, RngStream, TimeGrid};

#[derive(Clone, Debug)]
pub struct McConfig {
    pub paths: usize,
    pub grid: Arc<TimeGrid>,
    pub seed: u64,
    pub workers: usize,
    /// Draw Brownian-bridge interval maxima alongside the increments
    /// (running-maximum functionals need this for exact-law maxima).
    pub bridge: bool,
}

impl McConfig {
    pub fn new(paths: usize, grid: Arc<TimeGrid>, seed: u64) -> Result<Self> {
        if paths < 2 {
            return Err(Error::invalid(format!(
                "Monte Carlo needs at least two paths for a standard error, got {paths}"
            )));
        }
        Ok(McConfig { paths, grid, seed, workers: 1, bridge: false })
    }

    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        self.workers = workers;
        Ok(self)
    }

    pub fn with_bridge(mut self, bridge: bool) -> Self {
        self.bridge = bridge;
        self
    }
}

/// Runs `f` once per path index, with the path sampled from that index's
/// stream, and returns the outputs in path order.
pub fn map_paths<T, F>(cfg: &McConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&RngStream, &BrownianPath) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    pool.install(|| {
        (0..cfg.paths as u64)
            .into_par_iter()
            .map(|i| {
                let stream = RngStream::new(cfg.seed, i);
                let path = sample_path(&cfg.grid, &stream);
                f(&stream, &path)
            })
            .collect()
    })
}
