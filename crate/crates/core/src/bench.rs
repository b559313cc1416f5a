//! Wall-clock scaling of segmentation on synthetic sequences.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refine::segment;
use crate::synth::{generate, SynthSpec};

pub const DEFAULT_SIZES: [usize; 5] = [500, 1000, 2000, 4000, 8000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub dim: usize,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            dim: 64,
            k: 8,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub n: usize,
    /// Median over repeats.
    pub seconds: f64,
    pub all_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of ln(seconds) against ln(n).
    pub slope: f64,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidConfig("slope fit needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::InvalidConfig("slope fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("slope fit needs distinct sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Times one segmentation of an `n`-frame synthetic video.
pub fn time_once(n: usize, dim: usize, k: usize, seed: u64) -> Result<f64> {
    let spec = SynthSpec {
        k,
        n,
        d: dim,
        seed,
        ..SynthSpec::default()
    };
    let (seq, _) = generate(&spec)?;
    let start = Instant::now();
    let out = segment(&seq, k)?;
    let secs = start.elapsed().as_secs_f64();
    std::hint::black_box(out);
    Ok(secs)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.repeats == 0 || cfg.sizes.is_empty() {
        return Err(Error::InvalidConfig("bench needs sizes and at least one repeat".into()));
    }
    let mut points = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let mut all = Vec::with_capacity(cfg.repeats);
        for r in 0..cfg.repeats {
            all.push(time_once(n, cfg.dim, cfg.k, cfg.seed + r as u64)?);
        }
        let mut sorted = all.clone();
        sorted.sort_by(f64::total_cmp);
        points.push(BenchPoint {
            n,
            seconds: sorted[sorted.len() / 2],
            all_seconds: all,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds.max(1e-9)).collect();
    let slope = log_log_slope(&xs, &ys)?;
    Ok(BenchReport {
        config: cfg.clone(),
        points,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_err());
        assert!(log_log_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tiny_bench_runs() {
        let cfg = BenchConfig {
            sizes: vec![50, 100],
            dim: 8,
            k: 4,
            repeats: 1,
            seed: 0,
        };
        let r = run_bench(&cfg).unwrap();
        assert_eq!(r.points.len(), 2);
        assert!(r.slope.is_finite());
    }
}
