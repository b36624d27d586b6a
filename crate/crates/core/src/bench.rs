//! Timing of anchor mean shift against vanilla mean shift across image sizes.

use std::io::Write;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::{
    cluster_with_stats, vanilla_mean_shift_with_stats, MeanShiftConfig, RunStats,
};
use crate::error::{Error, Result};
use crate::synth::sample_centers;
use crate::types::{EmbeddingMap, ImageGrid, PlanarMask};

pub const FAST: &str = "fast";
pub const VANILLA: &str = "vanilla";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub variant: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub workers: usize,
    /// Median wall time of one shift iteration (ms).
    pub iter_ms: f64,
    /// Median wall time of a whole run (ms).
    pub total_ms: f64,
    /// Images per second at `total_ms`.
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    /// `(k, T)` pairs for the anchor variant.
    pub grid: Vec<(usize, usize)>,
    pub repeats: usize,
    pub workers: usize,
    pub dim: usize,
    pub bandwidth: f64,
    /// Shift iterations timed for vanilla mean shift; 0 skips it.
    pub vanilla_iters: usize,
    /// Embedding clusters in the synthetic input.
    pub clusters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![4096, 8192, 16384, 32768, 49152],
            grid: vec![(10, 10)],
            repeats: 3,
            workers: 1,
            dim: 2,
            bandwidth: 0.5,
            vanilla_iters: 1,
            clusters: 8,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 3 {
            return Err(Error::invalid("benchmarks need at least 3 repeats"));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::invalid("benchmark sizes must be positive"));
        }
        if self.grid.is_empty() {
            return Err(Error::invalid("benchmark needs at least one (k, T) pair"));
        }
        if self.clusters == 0 || self.dim == 0 {
            return Err(Error::invalid("benchmark needs clusters and dimensions"));
        }
        for &(k, t) in &self.grid {
            self.mean_shift_config(k, t).validate()?;
        }
        Ok(())
    }

    fn mean_shift_config(&self, k: usize, t: usize) -> MeanShiftConfig {
        MeanShiftConfig {
            anchors_per_dim: k,
            dim: self.dim,
            iterations: t,
            workers: self.workers,
            ..MeanShiftConfig::with_bandwidth(self.bandwidth)
        }
    }
}

/// `n` embeddings around fixed, well separated centers. The centers depend
/// only on the seed, so the surviving anchor count stays comparable across
/// sizes.
pub fn bench_input(
    n: usize,
    dim: usize,
    clusters: usize,
    seed: u64,
) -> Result<(EmbeddingMap, PlanarMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = sample_centers(clusters, dim, 1.5, &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
    let sigma = 0.5 / 3.0;
    let mut values = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        for a in 0..dim {
            let e: f64 = StandardNormal.sample(&mut rng);
            values.push(centers[c * dim + a] + sigma * e);
        }
    }
    let grid = ImageGrid::new(1, n)?;
    Ok((EmbeddingMap::new(grid, dim, values)?, PlanarMask::all(grid)))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs `run` once to warm up, then `repeats` times, and reduces to medians.
fn time_runs(repeats: usize, run: &mut dyn FnMut() -> Result<RunStats>) -> Result<(f64, f64)> {
    run()?;
    let mut iter_ms = Vec::with_capacity(repeats);
    let mut total_ms = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let stats = run()?;
        iter_ms.push(ms(stats.shift_time) / stats.iterations.max(1) as f64);
        total_ms.push(ms(stats.total_time));
    }
    Ok((median(iter_ms), median(total_ms)))
}

/// Times both variants on identical inputs for every size.
pub fn bench_clustering(config: &BenchConfig) -> Result<Vec<BenchResult>> {
    config.validate()?;
    let workers = crate::parallel::resolve_workers(config.workers);
    let mut results = Vec::new();
    for &n in &config.sizes {
        let (emb, mask) = bench_input(n, config.dim, config.clusters, config.seed)?;
        for &(k, t) in &config.grid {
            let ms_config = config.mean_shift_config(k, t);
            let (iter_ms, total_ms) = time_runs(config.repeats, &mut || {
                Ok(cluster_with_stats(&emb, &mask, &ms_config)?.stats)
            })?;
            results.push(BenchResult {
                variant: FAST.into(),
                n,
                k,
                d: config.dim,
                t,
                workers,
                iter_ms,
                total_ms,
                throughput: 1e3 / total_ms,
            });
        }
        if config.vanilla_iters > 0 {
            // Zero tolerance keeps every seed moving, so each iteration costs the same.
            let (iter_ms, total_ms) = time_runs(config.repeats, &mut || {
                Ok(vanilla_mean_shift_with_stats(
                    &emb,
                    &mask,
                    config.bandwidth,
                    config.vanilla_iters,
                    0.0,
                    config.workers,
                )?
                .stats)
            })?;
            results.push(BenchResult {
                variant: VANILLA.into(),
                n,
                k: 0,
                d: config.dim,
                t: config.vanilla_iters,
                workers,
                iter_ms,
                total_ms,
                throughput: 1e3 / total_ms,
            });
        }
    }
    Ok(results)
}

pub const CSV_HEADER: [&str; 8] = [
    "variant", "N", "k", "d", "T", "workers", "iter_ms", "total_ms",
];

pub fn write_csv<W: Write>(results: &[BenchResult], writer: W) -> Result<()> {
    let err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in results {
        w.write_record(&[
            r.variant.clone(),
            r.n.to_string(),
            r.k.to_string(),
            r.d.to_string(),
            r.t.to_string(),
            r.workers.to_string(),
            format!("{:.6}", r.iter_ms),
            format!("{:.6}", r.total_ms),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid(
            "slope fit needs at least two positive points",
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct sizes"));
    }
    Ok(sxy / sxx)
}

/// Per-iteration times of one variant as `(N, iter_ms)` pairs.
pub fn iteration_series(results: &[BenchResult], variant: &str) -> Vec<(f64, f64)> {
    results
        .iter()
        .filter(|r| r.variant == variant)
        .map(|r| (r.n as f64, r.iter_ms))
        .collect()
}
