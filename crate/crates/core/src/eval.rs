//! Evaluation under one-to-one label matching.
//!
//! Predicted cluster ids are matched to ground-truth labels with the
//! Hungarian method on the frame-overlap matrix, then scored with accuracy
//! over frames, Jaccard index, F1, midpoint hits and cluster purity.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{segments_of, EvalReport, FeatureSequence, GroundTruth, Partition, Segment};

/// Frame co-occurrence counts, `P` predicted clusters × `G` labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMatrix {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
}

impl OverlapMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        OverlapMatrix {
            rows,
            cols,
            counts: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::EmptyInput);
        }
        let mut m = OverlapMatrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::LengthMismatch {
                    what: "overlap row",
                    left: row.len(),
                    other: "row 0",
                    right: c,
                });
            }
            m.counts[i * c..(i + 1) * c].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn from_labels(pred: &Partition, gt: &GroundTruth) -> Result<Self> {
        check_lengths(pred, gt)?;
        let mut m = OverlapMatrix::zeros(pred.num_clusters(), gt.num_labels());
        m.accumulate(pred.labels(), gt.ids());
        Ok(m)
    }

    pub(crate) fn accumulate(&mut self, pred: &[usize], gt: &[usize]) {
        for (&p, &g) in pred.iter().zip(gt) {
            self.counts[p * self.cols + g] += 1;
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, p: usize, g: usize) -> u64 {
        self.counts[p * self.cols + g]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, p: usize) -> u64 {
        self.counts[p * self.cols..(p + 1) * self.cols].iter().sum()
    }

    pub fn col_sum(&self, g: usize) -> u64 {
        (0..self.rows).map(|p| self.get(p, g)).sum()
    }

    /// Total overlap of a mapping.
    pub fn score(&self, mapping: &[Option<usize>]) -> u64 {
        mapping
            .iter()
            .enumerate()
            .filter_map(|(p, g)| g.map(|g| self.get(p, g)))
            .sum()
    }
}

fn check_lengths(pred: &Partition, gt: &GroundTruth) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "prediction",
            left: pred.len(),
            other: "ground truth",
            right: gt.len(),
        });
    }
    Ok(())
}

/// Maximum-overlap one-to-one assignment; entry `p` is the label matched to
/// predicted cluster `p`, or `None` when it has no partner.
pub fn hungarian_match(overlap: &OverlapMatrix) -> Vec<Option<usize>> {
    let (rows, cols) = (overlap.rows, overlap.cols);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    // Minimize negated overlap on the zero-padded square matrix, using the
    // shortest augmenting path formulation with row/column potentials.
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            -(overlap.get(i, j) as i64)
        } else {
            0
        }
    };
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    // col_owner[j] = row (1-based) assigned to column j (1-based); 0 = free
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![None; rows];
    for j in 1..=n {
        let i = col_owner[j];
        if i >= 1 && i <= rows && j <= cols {
            mapping[i - 1] = Some(j - 1);
        }
    }
    mapping
}

/// Fraction of frames whose matched predicted label equals the truth.
pub fn mof(pred: &Partition, gt: &GroundTruth, mapping: &[Option<usize>]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let hits = pred
        .labels()
        .iter()
        .zip(gt.ids())
        .filter(|&(&p, &g)| mapping.get(p).copied().flatten() == Some(g))
        .count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Inverse of a mapping: ground-truth label → matched predicted cluster.
fn invert(mapping: &[Option<usize>], num_labels: usize) -> Vec<Option<usize>> {
    let mut inv = vec![None; num_labels];
    for (p, g) in mapping.iter().enumerate() {
        if let Some(g) = *g {
            if g < num_labels {
                inv[g] = Some(p);
            }
        }
    }
    inv
}

/// Mean over ground-truth labels of `|pred ∩ gt| / |pred ∪ gt|` for the
/// matched cluster; unmatched labels score 0.
pub fn iou(pred: &Partition, gt: &GroundTruth, mapping: &[Option<usize>]) -> Result<f64> {
    let overlap = OverlapMatrix::from_labels(pred, gt)?;
    Ok(iou_from_overlap(&overlap, mapping))
}

fn iou_from_overlap(overlap: &OverlapMatrix, mapping: &[Option<usize>]) -> f64 {
    let g = overlap.cols();
    let inv = invert(mapping, g);
    let sum: f64 = (0..g)
        .map(|label| match inv[label] {
            Some(p) if p < overlap.rows() => {
                let inter = overlap.get(p, label);
                let union = overlap.row_sum(p) + overlap.col_sum(label) - inter;
                if union == 0 {
                    0.0
                } else {
                    inter as f64 / union as f64
                }
            }
            _ => 0.0,
        })
        .sum();
    sum / g as f64
}

/// How per-label precision and recall are pooled into F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    /// Pool intersections and frame counts over labels.
    #[default]
    Micro,
    /// Average per-label precision (matched labels) and recall (all labels).
    Macro,
}

/// F1 from matched-label precision and recall; 0 when both are 0.
pub fn f1(pred: &Partition, gt: &GroundTruth, mapping: &[Option<usize>]) -> Result<f64> {
    f1_with(pred, gt, mapping, F1Average::Micro)
}

pub fn f1_with(
    pred: &Partition,
    gt: &GroundTruth,
    mapping: &[Option<usize>],
    average: F1Average,
) -> Result<f64> {
    let overlap = OverlapMatrix::from_labels(pred, gt)?;
    Ok(f1_from_overlap(&overlap, mapping, average))
}

fn f1_from_overlap(overlap: &OverlapMatrix, mapping: &[Option<usize>], average: F1Average) -> f64 {
    let g = overlap.cols();
    let matched: Vec<(usize, usize)> = mapping
        .iter()
        .enumerate()
        .filter_map(|(p, l)| l.filter(|&l| l < g).map(|l| (p, l)))
        .collect();
    let (precision, recall) = match average {
        F1Average::Micro => {
            let inter: u64 = matched.iter().map(|&(p, l)| overlap.get(p, l)).sum();
            let pred_frames: u64 = matched.iter().map(|&(p, _)| overlap.row_sum(p)).sum();
            let gt_frames = overlap.total();
            (ratio(inter, pred_frames), ratio(inter, gt_frames))
        }
        F1Average::Macro => {
            let p = if matched.is_empty() {
                0.0
            } else {
                matched
                    .iter()
                    .map(|&(p, l)| ratio(overlap.get(p, l), overlap.row_sum(p)))
                    .sum::<f64>()
                    / matched.len() as f64
            };
            let r = matched
                .iter()
                .map(|&(p, l)| ratio(overlap.get(p, l), overlap.col_sum(l)))
                .sum::<f64>()
                / g as f64;
            (p, r)
        }
    };
    harmonic(precision, recall)
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Midpoint-hit precision and recall.
///
/// A predicted segment hits when its midpoint frame lies inside a
/// ground-truth segment carrying its matched label that no earlier
/// predicted segment has claimed.
pub fn midpoint_hit(
    pred_segments: &[Segment],
    gt_segments: &[Segment],
    mapping: &[Option<usize>],
) -> (f64, f64) {
    let mut claimed = vec![false; gt_segments.len()];
    let mut hits = 0usize;
    for seg in pred_segments {
        let mid = seg.midpoint();
        let Some(target) = mapping.get(seg.label).copied().flatten() else {
            continue;
        };
        // gt segments are sorted and disjoint
        let idx = gt_segments.partition_point(|g| g.end < mid);
        if let Some(g) = gt_segments.get(idx) {
            if g.contains(mid) && g.label == target && !claimed[idx] {
                claimed[idx] = true;
                hits += 1;
            }
        }
    }
    let matched = claimed.iter().filter(|&&c| c).count();
    (
        ratio(hits as u64, pred_segments.len() as u64),
        ratio(matched as u64, gt_segments.len() as u64),
    )
}

/// Size-weighted majority-label purity of the predicted clusters.
pub fn purity(pred: &Partition, gt: &GroundTruth) -> Result<f64> {
    let overlap = OverlapMatrix::from_labels(pred, gt)?;
    Ok(purity_from_overlap(&overlap))
}

fn purity_from_overlap(overlap: &OverlapMatrix) -> f64 {
    let majority: u64 = (0..overlap.rows())
        .map(|p| (0..overlap.cols()).map(|g| overlap.get(p, g)).max().unwrap_or(0))
        .sum();
    ratio(majority, overlap.total())
}

/// Frames kept after background filtering, with their original indices.
#[derive(Debug, Clone)]
pub struct Filtered {
    pub seq: FeatureSequence,
    pub gt: GroundTruth,
    pub kept: Vec<usize>,
}

/// Indices of the frames that survive removing `⌊tau · #background⌋`
/// background frames chosen uniformly at random under `seed`.
pub fn background_keep_indices(gt: &GroundTruth, tau: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("tau {tau} outside [0, 1]")));
    }
    let background: Vec<usize> = (0..gt.len()).filter(|&i| gt.is_background(i)).collect();
    let remove = (tau * background.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drop = vec![false; gt.len()];
    for k in rand::seq::index::sample(&mut rng, background.len(), remove) {
        drop[background[k]] = true;
    }
    Ok((0..gt.len()).filter(|&i| !drop[i]).collect())
}

pub fn filter_background(
    seq: &FeatureSequence,
    gt: &GroundTruth,
    tau: f64,
    seed: u64,
) -> Result<Filtered> {
    if seq.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "features",
            left: seq.len(),
            other: "labels",
            right: gt.len(),
        });
    }
    let kept = background_keep_indices(gt, tau, seed)?;
    Ok(Filtered {
        seq: seq.select(&kept)?,
        gt: gt.select(&kept)?,
        kept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    /// Unweighted mean over videos.
    #[default]
    Video,
    /// Mean weighted by frame count.
    Frame,
}

/// Combines per-video reports; the aggregate carries no mapping.
pub fn aggregate(reports: &[EvalReport], mode: AggregateMode) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let weights: Vec<f64> = match mode {
        AggregateMode::Video => vec![1.0; reports.len()],
        AggregateMode::Frame => reports.iter().map(|r| r.frames as f64).collect(),
    };
    let total: f64 = weights.iter().sum();
    let mean = |f: fn(&EvalReport) -> f64| -> f64 {
        if total == 0.0 {
            return 0.0;
        }
        reports.iter().zip(&weights).map(|(r, w)| f(r) * w).sum::<f64>() / total
    };
    Ok(EvalReport {
        frames: reports.iter().map(|r| r.frames).sum(),
        mof: mean(|r| r.mof),
        iou: mean(|r| r.iou),
        f1: mean(|r| r.f1),
        midpoint_precision: mean(|r| r.midpoint_precision),
        midpoint_recall: mean(|r| r.midpoint_recall),
        purity: mean(|r| r.purity),
        mapping: Vec::new(),
    })
}

/// Scores one video under a given mapping (cluster id → label id).
pub fn evaluate_with_mapping(
    pred: &Partition,
    gt: &GroundTruth,
    mapping: &[Option<usize>],
    average: F1Average,
) -> Result<EvalReport> {
    let overlap = OverlapMatrix::from_labels(pred, gt)?;
    let (mp, mr) = midpoint_hit(&segments_of(pred.labels()), &gt.segments(), mapping);
    Ok(EvalReport {
        frames: gt.len(),
        mof: mof(pred, gt, mapping)?,
        iou: iou_from_overlap(&overlap, mapping),
        f1: f1_from_overlap(&overlap, mapping, average),
        midpoint_precision: mp,
        midpoint_recall: mr,
        purity: purity_from_overlap(&overlap),
        mapping: (0..pred.num_clusters())
            .map(|p| {
                mapping
                    .get(p)
                    .copied()
                    .flatten()
                    .map(|g| gt.name(g).to_string())
            })
            .collect(),
    })
}

/// Per-video matching followed by all metrics.
pub fn evaluate(pred: &Partition, gt: &GroundTruth, average: F1Average) -> Result<EvalReport> {
    let overlap = OverlapMatrix::from_labels(pred, gt)?;
    let mapping = hungarian_match(&overlap);
    evaluate_with_mapping(pred, gt, &mapping, average)
}

/// One matching shared by a group of videos (e.g. all videos of an
/// activity): overlaps are pooled by cluster id and label name before
/// matching, then every video is scored under the shared mapping.
pub fn evaluate_pooled(
    videos: &[(&Partition, &GroundTruth)],
    average: F1Average,
) -> Result<Vec<EvalReport>> {
    if videos.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut vocab: HashMap<&str, usize> = HashMap::new();
    let mut names: Vec<&str> = Vec::new();
    for (_, gt) in videos {
        for name in gt.names() {
            vocab.entry(name.as_str()).or_insert_with(|| {
                names.push(name.as_str());
                names.len() - 1
            });
        }
    }
    let clusters = videos.iter().map(|(p, _)| p.num_clusters()).max().unwrap_or(0);
    let mut pooled = OverlapMatrix::zeros(clusters, names.len());
    for (pred, gt) in videos {
        check_lengths(pred, gt)?;
        let global: Vec<usize> = gt.ids().iter().map(|&id| vocab[gt.name(id)]).collect();
        pooled.accumulate(pred.labels(), &global);
    }
    let shared = hungarian_match(&pooled);
    videos
        .iter()
        .map(|(pred, gt)| {
            let local: Vec<Option<usize>> = shared[..pred.num_clusters()]
                .iter()
                .map(|g| g.and_then(|g| gt.names().iter().position(|n| n == names[g])))
                .collect();
            evaluate_with_mapping(pred, gt, &local, average)
        })
        .collect()
}
