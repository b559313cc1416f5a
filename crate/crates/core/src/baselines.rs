//! Comparison methods: equal split, k-means and plain first-neighbor
//! clustering without temporal weighting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy_with, Linkage};
use crate::refine::{refine_to_k_with, select_level};
use crate::types::{relabel_dense, FeatureSequence, Partition, PartitionHierarchy};

/// `k` contiguous blocks; the first `n % k` blocks take one extra frame.
pub fn equal_split(n: usize, k: usize) -> Result<Partition> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if k > n {
        return Err(Error::KTooLarge { k, available: n });
    }
    let (base, extra) = (n / k, n % k);
    let mut labels = Vec::with_capacity(n);
    for block in 0..k {
        let len = base + usize::from(block < extra);
        labels.extend(std::iter::repeat_n(block, len));
    }
    Partition::new(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl KmeansConfig {
    pub fn new(k: usize) -> Self {
        KmeansConfig {
            k,
            max_iters: 100,
            seed: 0,
            restarts: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::ZeroK);
        }
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig(
                "max_iters and restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub partition: Partition,
    /// Within-cluster sum of squares of the returned partition.
    pub wcss: f64,
    /// Objective after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

pub fn kmeans(seq: &FeatureSequence, cfg: &KmeansConfig) -> Result<Partition> {
    kmeans_detailed(seq, cfg).map(|r| r.partition)
}

/// Lloyd iterations from k-means++ seeds, best of `restarts` by WCSS (ties
/// go to the lower restart index).
pub fn kmeans_detailed(seq: &FeatureSequence, cfg: &KmeansConfig) -> Result<KmeansResult> {
    cfg.validate()?;
    let n = seq.len();
    if cfg.k > n {
        return Err(Error::KTooLarge {
            k: cfg.k,
            available: n,
        });
    }
    let points: Vec<f64> = seq.as_slice().iter().map(|&x| f64::from(x)).collect();
    let d = seq.dim();
    let runs: Vec<(Vec<usize>, f64, Vec<f64>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
            lloyd(&points, d, cfg.k, cfg.max_iters, &mut rng)
        })
        .collect();
    let (assign, wcss, history) = runs
        .into_iter()
        .reduce(|best, cand| if cand.1 < best.1 { cand } else { best })
        .expect("restarts >= 1");
    Ok(KmeansResult {
        partition: relabel_dense(&assign)?,
        wcss,
        history,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(points: &[f64], d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / d;
    let row = |i: usize| &points[i * d..(i + 1) * d];
    let mut centers = Vec::with_capacity(k * d);
    centers.extend_from_slice(row(rng.random_range(0..n)));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centers[..d])).collect();
    while centers.len() < k * d {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in closest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = centers.len();
        centers.extend_from_slice(row(pick));
        for (i, cl) in closest.iter_mut().enumerate() {
            *cl = cl.min(sq_dist(row(i), &centers[c..c + d]));
        }
    }
    centers
}

/// Returns each point's center and its squared distance.
fn assign(points: &[f64], d: usize, centers: &[f64], labels: &mut [usize], dists: &mut [f64]) {
    for (i, p) in points.chunks_exact(d).enumerate() {
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.chunks_exact(d).enumerate() {
            let v = sq_dist(p, center);
            if v < best.1 {
                best = (c, v);
            }
        }
        labels[i] = best.0;
        dists[i] = best.1;
    }
}

fn lloyd(
    points: &[f64],
    d: usize,
    k: usize,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, f64, Vec<f64>) {
    let n = points.len() / d;
    let mut centers = kmeans_pp(points, d, k, rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut history = Vec::new();
    assign(points, d, &centers, &mut labels, &mut dists);
    history.push(dists.iter().sum());

    for _ in 0..max_iters {
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, p) in points.chunks_exact(d).enumerate() {
            counts[labels[i]] += 1;
            for (s, &x) in sums[labels[i] * d..(labels[i] + 1) * d].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                for s in &mut sums[c * d..(c + 1) * d] {
                    *s /= counts[c] as f64;
                }
            } else {
                // empty: reseed at the point farthest from its center
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("k <= n");
                taken[far] = true;
                dists[far] = 0.0;
                sums[c * d..(c + 1) * d].copy_from_slice(&points[far * d..(far + 1) * d]);
            }
        }
        let prev = labels.clone();
        centers = sums;
        assign(points, d, &centers, &mut labels, &mut dists);
        history.push(dists.iter().sum());
        if labels == prev {
            break;
        }
    }
    let wcss = *history.last().expect("nonempty");
    (labels, wcss, history)
}

/// Hierarchy plus the `k`-cluster partition of plain first-neighbor
/// clustering: feature distances only, shared-neighbor links, merging the
/// globally closest pair of cluster means during refinement.
pub fn finch(seq: &FeatureSequence, k: usize) -> Result<(PartitionHierarchy, Partition)> {
    finch_with(seq, k, Linkage::FEATURE_ONLY)
}

/// First-neighbor clustering under an arbitrary linkage; returns the finest
/// partition when fewer than `k` clusters are available.
pub fn finch_with(
    seq: &FeatureSequence,
    k: usize,
    linkage: Linkage,
) -> Result<(PartitionHierarchy, Partition)> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    let h = build_hierarchy_with(seq, linkage)?;
    let p = match select_level(&h, k) {
        Ok(level) => refine_to_k_with(seq, level, k, linkage)?.0,
        Err(Error::KUnreachable { .. }) => h.finest().clone(),
        Err(e) => return Err(e),
    };
    Ok((h, p))
}
