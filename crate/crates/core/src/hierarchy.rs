//! Recursive first-neighbor partitioning into a nested hierarchy.
//!
//! The first level links frames; every later level links the clusters of
//! the previous one through their mean features and mean timestamps, both
//! taken over the original frames. Recursion stops before the level that
//! would collapse everything into a single cluster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    connected_components, nearest_neighbors, shared_neighbor_graph, OneNnGraph, UnitVectors,
};
use crate::types::{FeatureSequence, Partition, PartitionHierarchy};

/// How nodes are linked at every level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linkage {
    /// Multiply feature distances by normalized time gaps.
    pub temporal: bool,
    /// Also link nodes that share a first neighbor.
    pub shared_neighbor: bool,
}

impl Linkage {
    /// Temporally weighted links, first neighbors only.
    pub const TEMPORAL: Linkage = Linkage {
        temporal: true,
        shared_neighbor: false,
    };

    /// Plain first-neighbor clustering in feature space.
    pub const FEATURE_ONLY: Linkage = Linkage {
        temporal: false,
        shared_neighbor: true,
    };
}

impl Default for Linkage {
    fn default() -> Self {
        Linkage::TEMPORAL
    }
}

/// Per-cluster averages over the original frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    dim: usize,
    /// Row-major `C × d` cluster means.
    pub means: Vec<f64>,
    /// Mean 1-based timestamp of each cluster.
    pub mean_times: Vec<f64>,
    pub sizes: Vec<usize>,
}

impl LevelSummary {
    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn unit_vectors(&self) -> UnitVectors {
        UnitVectors::new(
            (0..self.num_clusters()).map(|c| self.mean(c).iter().copied()),
            self.dim,
        )
    }
}

/// Mean features and mean timestamps of every cluster of `p`.
pub fn summarize(seq: &FeatureSequence, p: &Partition) -> Result<LevelSummary> {
    if p.len() != seq.len() {
        return Err(Error::LengthMismatch {
            what: "partition",
            left: p.len(),
            other: "sequence",
            right: seq.len(),
        });
    }
    let d = seq.dim();
    let c = p.num_clusters();
    let mut sums = vec![0.0f64; c * d];
    let mut time_sums = vec![0.0f64; c];
    let mut sizes = vec![0usize; c];
    for (i, (row, &l)) in seq.rows().zip(p.labels()).enumerate() {
        for (s, &x) in sums[l * d..(l + 1) * d].iter_mut().zip(row) {
            *s += f64::from(x);
        }
        time_sums[l] += (i + 1) as f64;
        sizes[l] += 1;
    }
    for (l, &size) in sizes.iter().enumerate() {
        let size = size as f64;
        for s in &mut sums[l * d..(l + 1) * d] {
            *s /= size;
        }
        time_sums[l] /= size;
    }
    Ok(LevelSummary {
        dim: d,
        means: sums,
        mean_times: time_sums,
        sizes,
    })
}

pub(crate) fn frame_units(seq: &FeatureSequence) -> UnitVectors {
    UnitVectors::new(
        seq.rows().map(|r| r.iter().map(|&x| f64::from(x))),
        seq.dim(),
    )
}

pub(crate) fn frame_times(n: usize) -> Vec<f64> {
    (1..=n).map(|t| t as f64).collect()
}

fn link(nn: Vec<usize>, linkage: Linkage) -> OneNnGraph {
    if linkage.shared_neighbor {
        shared_neighbor_graph(nn)
    } else {
        OneNnGraph::from_neighbors(nn)
    }
}

/// First partition: components of the first-neighbor graph over frames.
pub fn first_partition(seq: &FeatureSequence, linkage: Linkage) -> Result<Partition> {
    let n = seq.len();
    if n < 2 {
        return Err(Error::TooFewFrames(n));
    }
    let units = frame_units(seq);
    let times = frame_times(n);
    let (nn, _) = nearest_neighbors(&units, linkage.temporal.then_some((&times[..], n)))?;
    Ok(connected_components(&link(nn, linkage)))
}

/// Groups the clusters of `p` by linking their means; returns a partition
/// of the clusters.
fn group_clusters(seq: &FeatureSequence, p: &Partition, linkage: Linkage) -> Result<Partition> {
    let summary = summarize(seq, p)?;
    let units = summary.unit_vectors();
    let times = linkage
        .temporal
        .then_some((&summary.mean_times[..], seq.len()));
    let (nn, _) = nearest_neighbors(&units, times)?;
    Ok(connected_components(&link(nn, linkage)))
}

/// Temporally weighted hierarchy over the frames of `seq`.
pub fn build_hierarchy(seq: &FeatureSequence) -> Result<PartitionHierarchy> {
    build_hierarchy_with(seq, Linkage::TEMPORAL)
}

pub fn build_hierarchy_with(seq: &FeatureSequence, linkage: Linkage) -> Result<PartitionHierarchy> {
    let first = first_partition(seq, linkage)?;
    let mut levels = vec![first];
    loop {
        let current = levels.last().expect("nonempty");
        if current.num_clusters() < 2 {
            break;
        }
        let grouping = group_clusters(seq, current, linkage)?;
        if grouping.num_clusters() == 1 {
            break;
        }
        let next = current.compose(&grouping)?;
        // every node links to some other node, so each component has at least two members
        debug_assert!(next.num_clusters() <= current.num_clusters() / 2);
        levels.push(next);
    }
    PartitionHierarchy::new(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[[f32; 2]]) -> FeatureSequence {
        FeatureSequence::from_rows("t", rows).unwrap()
    }

    #[test]
    fn summarize_examples() {
        let s = seq(&[[0.0, 0.0], [2.0, 0.0], [4.0, 4.0]]);
        let p = Partition::new(vec![0, 0, 1]).unwrap();
        let m = summarize(&s, &p).unwrap();
        assert_eq!(m.mean(0), &[1.0, 0.0]);
        assert_eq!(m.mean(1), &[4.0, 4.0]);
        assert_eq!(m.mean_times, vec![1.5, 3.0]);
        assert_eq!(m.sizes, vec![2, 1]);

        let m = summarize(&s, &Partition::single(3)).unwrap();
        assert_eq!(m.mean(0), &[2.0, 4.0 / 3.0]);
        assert_eq!(m.mean_times, vec![2.0]);

        let m = summarize(&s, &Partition::new(vec![0, 1, 2]).unwrap()).unwrap();
        assert_eq!(m.means, vec![0.0, 0.0, 2.0, 0.0, 4.0, 4.0]);
        assert_eq!(m.mean_times, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_frames_give_single_level() {
        let h = build_hierarchy(&seq(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(h.cluster_counts(), vec![1]);
        assert_eq!(h.finest().labels(), &[0, 0]);
    }

    #[test]
    fn one_frame_is_rejected() {
        assert!(matches!(
            build_hierarchy(&seq(&[[1.0, 0.0]])),
            Err(Error::TooFewFrames(1))
        ));
    }

    #[test]
    fn two_blocks_are_recovered() {
        // Deterministic jitter around two orthogonal directions.
        let rows: Vec<[f32; 2]> = (0..100)
            .map(|i| {
                let j = ((i * 37 % 17) as f32 - 8.0) * 0.01;
                if i < 50 {
                    [1.0, j.abs()]
                } else {
                    [j.abs(), 1.0]
                }
            })
            .collect();
        let h = build_hierarchy(&seq(&rows)).unwrap();
        let coarsest = h.levels().last().unwrap();
        assert!(h.cluster_counts().windows(2).all(|w| w[1] < w[0]));
        assert_eq!(coarsest.num_clusters(), 2, "counts {:?}", h.cluster_counts());
        let expected: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
        assert_eq!(coarsest.labels(), &expected[..]);
    }

    #[test]
    fn hierarchy_is_deterministic() {
        let rows: Vec<[f32; 2]> = (0..300)
            .map(|i| [((i * 31) % 97) as f32, ((i * 17) % 89) as f32 + 1.0])
            .collect();
        let s = seq(&rows);
        assert_eq!(build_hierarchy(&s).unwrap(), build_hierarchy(&s).unwrap());
    }
}
