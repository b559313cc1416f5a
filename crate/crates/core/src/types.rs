//! Domain types shared by every stage of the pipeline.
//!
//! All of these are plain data: they validate on construction and are
//! immutable afterwards, so they can be shared freely across threads.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-video frame features, `n` rows of `d` values stored row-major.
///
/// Timestamps are implicit: frame `i` (0-based) sits at time `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    video_id: String,
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::BadBufferLength {
                rows: n,
                cols: d,
                got: data.len(),
            });
        }
        let seq = FeatureSequence {
            video_id: video_id.into(),
            n,
            d,
            data,
        };
        validate_sequence(&seq)?;
        Ok(seq)
    }

    /// Builds a sequence from equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(video_id: impl Into<String>, rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::LengthMismatch {
                    what: "row",
                    left: r.len(),
                    other: "row 0",
                    right: d,
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(video_id, rows.len(), d, data)
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Keeps the frames listed in `keep` (in the given order).
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(keep.len() * self.d);
        for &i in keep {
            data.extend_from_slice(self.row(i));
        }
        Self::new(self.video_id.clone(), keep.len(), self.d, data)
    }
}

/// Checks the sequence is nonempty and every value is finite.
pub fn validate_sequence(seq: &FeatureSequence) -> Result<()> {
    if seq.n == 0 || seq.d == 0 {
        return Err(Error::EmptySequence);
    }
    if let Some(pos) = seq.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / seq.d,
            col: pos % seq.d,
        });
    }
    Ok(())
}

/// Assignment of frames to dense 0-based cluster ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    num_clusters: usize,
}

impl Partition {
    /// Wraps labels that are already dense; fails if ids have gaps.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let num_clusters = labels.iter().max().map_or(0, |m| m + 1);
        let p = Partition {
            labels,
            num_clusters,
        };
        p.validate()?;
        Ok(p)
    }

    /// Every frame in cluster 0.
    pub fn single(n: usize) -> Self {
        Partition {
            labels: vec![0; n],
            num_clusters: usize::from(n > 0),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// O(N) check that ids are exactly `0..num_clusters`.
    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::InvalidPartition("no frames".into()));
        }
        let mut seen = vec![false; self.num_clusters];
        for &l in &self.labels {
            match seen.get_mut(l) {
                Some(s) => *s = true,
                None => {
                    return Err(Error::InvalidPartition(format!(
                        "label {l} out of range for {} clusters",
                        self.num_clusters
                    )))
                }
            }
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("cluster id {gap} unused")));
        }
        Ok(())
    }

    /// Frame count per cluster.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Number of maximal runs of equal labels.
    pub fn num_runs(&self) -> usize {
        count_runs(&self.labels)
    }

    /// True when every cluster occupies one contiguous run of frames.
    pub fn is_temporally_contiguous(&self) -> bool {
        self.num_runs() == self.num_clusters
    }

    /// True when `self` merges whole clusters of `finer`.
    pub fn is_coarsening_of(&self, finer: &Partition) -> bool {
        if self.len() != finer.len() {
            return false;
        }
        let mut image = vec![usize::MAX; finer.num_clusters];
        for (&f, &c) in finer.labels.iter().zip(&self.labels) {
            if image[f] == usize::MAX {
                image[f] = c;
            } else if image[f] != c {
                return false;
            }
        }
        true
    }

    /// Maps each cluster of `self` through `cluster_labels` (a partition of
    /// the clusters themselves) and returns the resulting frame partition.
    pub fn compose(&self, cluster_labels: &Partition) -> Result<Partition> {
        if cluster_labels.len() != self.num_clusters {
            return Err(Error::LengthMismatch {
                what: "cluster partition",
                left: cluster_labels.len(),
                other: "clusters",
                right: self.num_clusters,
            });
        }
        let raw: Vec<usize> = self
            .labels
            .iter()
            .map(|&l| cluster_labels.labels[l])
            .collect();
        relabel_dense(&raw)
    }
}

pub(crate) fn count_runs<T: PartialEq>(labels: &[T]) -> usize {
    if labels.is_empty() {
        return 0;
    }
    1 + labels.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Remaps arbitrary ids to `0..C` in order of first occurrence.
pub fn relabel_dense<T: Copy + Eq + std::hash::Hash>(raw: &[T]) -> Result<Partition> {
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut ids: HashMap<T, usize> = HashMap::new();
    let labels = raw
        .iter()
        .map(|r| {
            let next = ids.len();
            *ids.entry(*r).or_insert(next)
        })
        .collect();
    Ok(Partition {
        labels,
        num_clusters: ids.len(),
    })
}

/// Nested partitions, finest first, with strictly decreasing cluster counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionHierarchy {
    partitions: Vec<Partition>,
}

impl PartitionHierarchy {
    pub fn new(partitions: Vec<Partition>) -> Result<Self> {
        let h = PartitionHierarchy { partitions };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.partitions.is_empty() {
            return Err(Error::InvalidHierarchy("no levels".into()));
        }
        for (i, w) in self.partitions.windows(2).enumerate() {
            if w[1].num_clusters() >= w[0].num_clusters() {
                return Err(Error::InvalidHierarchy(format!(
                    "level {} has {} clusters, level {} has {}",
                    i,
                    w[0].num_clusters(),
                    i + 1,
                    w[1].num_clusters()
                )));
            }
            if !w[1].is_coarsening_of(&w[0]) {
                return Err(Error::InvalidHierarchy(format!(
                    "level {} is not a coarsening of level {i}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn finest(&self) -> &Partition {
        &self.partitions[0]
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        self.partitions.iter().map(Partition::num_clusters).collect()
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }
}

/// Frame-aligned ground-truth action labels, interned to dense ids in order
/// of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    labels: Vec<usize>,
    names: Vec<String>,
    background_label: String,
}

impl GroundTruth {
    pub fn from_names<S: AsRef<str>>(labels: &[S], background_label: impl Into<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut names = Vec::new();
        let ids = labels
            .iter()
            .map(|s| {
                let s = s.as_ref();
                *index.entry(s).or_insert_with(|| {
                    names.push(s.to_string());
                    names.len() - 1
                })
            })
            .collect();
        Ok(GroundTruth {
            labels: ids,
            names,
            background_label: background_label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Interned label ids, one per frame.
    pub fn ids(&self) -> &[usize] {
        &self.labels
    }

    /// Label names indexed by id.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn num_labels(&self) -> usize {
        self.names.len()
    }

    pub fn background_label(&self) -> &str {
        &self.background_label
    }

    pub fn background_id(&self) -> Option<usize> {
        self.names.iter().position(|n| *n == self.background_label)
    }

    pub fn is_background(&self, frame: usize) -> bool {
        self.background_id() == Some(self.labels[frame])
    }

    pub fn num_background(&self) -> usize {
        match self.background_id() {
            Some(b) => self.labels.iter().filter(|&&l| l == b).count(),
            None => 0,
        }
    }

    /// Distinct labels present, optionally ignoring the background label.
    pub fn distinct_labels(&self, count_background: bool) -> usize {
        let bg = self.background_id();
        (0..self.names.len())
            .filter(|&id| count_background || Some(id) != bg)
            .count()
    }

    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let names: Vec<&str> = keep.iter().map(|&i| self.name(self.labels[i])).collect();
        GroundTruth::from_names(&names, self.background_label.clone())
    }

    pub fn label_names(&self) -> impl Iterator<Item = &str> + '_ {
        self.labels.iter().map(|&l| self.names[l].as_str())
    }

    /// Maximal runs of equal labels.
    pub fn segments(&self) -> Vec<Segment> {
        segments_of(&self.labels)
    }
}

/// A maximal run `[start, end]` (inclusive) of one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn midpoint(&self) -> usize {
        (self.start + self.end) / 2
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame <= self.end
    }
}

pub fn segments_of(labels: &[usize]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            out.push(Segment {
                label: labels[start],
                start,
                end: i - 1,
            });
            start = i;
        }
    }
    out
}

/// Metric bundle for one video (or an aggregate over videos).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub mof: f64,
    pub iou: f64,
    pub f1: f64,
    pub midpoint_precision: f64,
    pub midpoint_recall: f64,
    pub purity: f64,
    /// Predicted cluster id → matched ground-truth label name, `None` when
    /// the cluster has no partner.
    pub mapping: Vec<Option<String>>,
}
