//! Level selection and pairwise merging down to exactly `k` clusters.
//!
//! Each merge step summarizes the current clusters over the original frames,
//! links every cluster to its first neighbor under the weighted distance and
//! keeps only the single closest link, whose two clusters are merged. Ties
//! go to the lexicographically smallest `(id, id)` pair in first-occurrence
//! labeling.
//!
//! A merge only changes the row of the merged cluster, so distances and
//! per-row neighbors are updated in place; the result is identical to
//! recomputing everything at every step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{dot, normalize_into};
use crate::hierarchy::{build_hierarchy_with, Linkage};
use crate::types::{relabel_dense, FeatureSequence, Partition, PartitionHierarchy};

/// One merge: clusters `a < b` (ids at that step) joined at distance `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub a: usize,
    pub b: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub start_level_clusters: usize,
    pub merges: Vec<MergeRecord>,
}

/// The level with the fewest clusters that still has at least `k`.
pub fn select_level(h: &PartitionHierarchy, k: usize) -> Result<&Partition> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    h.levels()
        .iter()
        .rev()
        .find(|p| p.num_clusters() >= k)
        .ok_or(Error::KUnreachable {
            k,
            max_available: h.finest().num_clusters(),
        })
}

/// Merges clusters of `p` pairwise under temporally weighted distances until
/// `k` remain.
pub fn refine_to_k(
    seq: &FeatureSequence,
    p: &Partition,
    k: usize,
) -> Result<(Partition, RefinementTrace)> {
    refine_to_k_with(seq, p, k, Linkage::TEMPORAL)
}

pub fn refine_to_k_with(
    seq: &FeatureSequence,
    p: &Partition,
    k: usize,
    linkage: Linkage,
) -> Result<(Partition, RefinementTrace)> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if p.len() != seq.len() {
        return Err(Error::LengthMismatch {
            what: "partition",
            left: p.len(),
            other: "sequence",
            right: seq.len(),
        });
    }
    let c = p.num_clusters();
    if k > c {
        return Err(Error::KTooLarge { k, available: c });
    }
    let mut trace = RefinementTrace {
        start_level_clusters: c,
        merges: Vec::with_capacity(c - k),
    };
    if k == c {
        return Ok((p.clone(), trace));
    }

    let canonical = relabel_dense(p.labels())?;
    let mut state = MergeState::new(seq, &canonical, linkage);
    for _ in 0..c - k {
        trace.merges.push(state.merge_closest());
    }
    Ok((state.into_partition(seq.len()), trace))
}

struct MergeState<'a> {
    seq: &'a FeatureSequence,
    temporal: bool,
    n_total: f64,
    /// Original frames of each slot, ascending.
    members: Vec<Vec<usize>>,
    units: Vec<Vec<f64>>,
    times: Vec<f64>,
    /// Alive slots in first-occurrence order; slot ids start equal to the
    /// canonical cluster ids, so ordering slots by id is ordering by first
    /// frame.
    order: Vec<usize>,
    dist: Vec<f64>,
    cap: usize,
    nn: Vec<usize>,
    nn_dist: Vec<f64>,
}

impl<'a> MergeState<'a> {
    fn new(seq: &'a FeatureSequence, p: &Partition, linkage: Linkage) -> Self {
        let c = p.num_clusters();
        let mut members = vec![Vec::new(); c];
        for (i, &l) in p.labels().iter().enumerate() {
            members[l].push(i);
        }
        let mut state = MergeState {
            seq,
            temporal: linkage.temporal,
            n_total: seq.len() as f64,
            units: vec![Vec::new(); c],
            times: vec![0.0; c],
            members,
            order: (0..c).collect(),
            dist: vec![1.0; c * c],
            cap: c,
            nn: vec![usize::MAX; c],
            nn_dist: vec![f64::INFINITY; c],
        };
        for s in 0..c {
            state.refresh_summary(s);
        }
        for a in 0..c {
            for b in 0..a {
                let d = state.pair_distance(a, b);
                state.dist[a * c + b] = d;
                state.dist[b * c + a] = d;
            }
        }
        for s in 0..c {
            state.rescan(s);
        }
        state
    }

    /// Mean feature (normalized) and mean time of a slot, summed over its
    /// frames in order exactly as `hierarchy::summarize` does.
    fn refresh_summary(&mut self, s: usize) {
        let d = self.seq.dim();
        let mut sum = vec![0.0f64; d];
        let mut tsum = 0.0f64;
        for &i in &self.members[s] {
            for (acc, &x) in sum.iter_mut().zip(self.seq.row(i)) {
                *acc += f64::from(x);
            }
            tsum += (i + 1) as f64;
        }
        let size = self.members[s].len() as f64;
        let mut unit = Vec::with_capacity(d);
        normalize_into(sum.into_iter().map(|v| v / size), &mut unit);
        self.units[s] = unit;
        self.times[s] = tsum / size;
    }

    fn pair_distance(&self, a: usize, b: usize) -> f64 {
        let gf = 1.0 - dot(&self.units[a], &self.units[b]);
        if self.temporal {
            gf * ((self.times[a] - self.times[b]).abs() / self.n_total)
        } else {
            gf
        }
    }

    fn rescan(&mut self, r: usize) {
        let mut best = (usize::MAX, f64::INFINITY);
        for &s in &self.order {
            if s == r {
                continue;
            }
            let v = self.dist[r * self.cap + s];
            if best.0 == usize::MAX || v < best.1 {
                best = (s, v);
            }
        }
        self.nn[r] = best.0;
        self.nn_dist[r] = best.1;
    }

    fn merge_closest(&mut self) -> MergeRecord {
        let mut pick: Option<(f64, usize, usize)> = None;
        for &r in &self.order {
            let (lo, hi) = (r.min(self.nn[r]), r.max(self.nn[r]));
            let v = self.nn_dist[r];
            let better = match pick {
                None => true,
                Some((pv, pl, ph)) => v < pv || (v == pv && (lo, hi) < (pl, ph)),
            };
            if better {
                pick = Some((v, lo, hi));
            }
        }
        let (w, a, b) = pick.expect("at least two clusters");
        let pos_a = self.order.binary_search(&a).expect("alive");
        let pos_b = self.order.binary_search(&b).expect("alive");

        let absorbed = std::mem::take(&mut self.members[b]);
        let mut merged = Vec::with_capacity(self.members[a].len() + absorbed.len());
        let (mut x, mut y) = (self.members[a].iter().peekable(), absorbed.iter().peekable());
        while let (Some(&&u), Some(&&v)) = (x.peek(), y.peek()) {
            if u < v {
                merged.push(u);
                x.next();
            } else {
                merged.push(v);
                y.next();
            }
        }
        merged.extend(x);
        merged.extend(y);
        self.members[a] = merged;
        self.order.remove(pos_b);
        self.refresh_summary(a);

        let cap = self.cap;
        for i in 0..self.order.len() {
            let s = self.order[i];
            if s != a {
                let d = self.pair_distance(a, s);
                self.dist[a * cap + s] = d;
                self.dist[s * cap + a] = d;
            }
        }
        for i in 0..self.order.len() {
            let r = self.order[i];
            if r == a {
                continue;
            }
            if self.nn[r] == a || self.nn[r] == b {
                self.rescan(r);
            } else {
                let d = self.dist[r * cap + a];
                if d < self.nn_dist[r] || (d == self.nn_dist[r] && a < self.nn[r]) {
                    self.nn[r] = a;
                    self.nn_dist[r] = d;
                }
            }
        }
        self.rescan(a);

        MergeRecord {
            a: pos_a,
            b: pos_b,
            w,
        }
    }

    fn into_partition(self, n: usize) -> Partition {
        let mut labels = vec![0usize; n];
        for (id, &s) in self.order.iter().enumerate() {
            for &i in &self.members[s] {
                labels[i] = id;
            }
        }
        Partition::new(labels).expect("merged labels are dense")
    }
}

/// Result of a full segmentation run on one video.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub partition: Partition,
    pub hierarchy: Option<PartitionHierarchy>,
    pub trace: Option<RefinementTrace>,
    /// False when fewer than `k` clusters were available and the finest
    /// partition was returned instead.
    pub reached_k: bool,
}

/// Hierarchy, level selection and refinement with temporally weighted
/// links.
pub fn segment(seq: &FeatureSequence, k: usize) -> Result<SegmentOutcome> {
    segment_with(seq, k, Linkage::TEMPORAL)
}

pub fn segment_with(seq: &FeatureSequence, k: usize, linkage: Linkage) -> Result<SegmentOutcome> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    let hierarchy = build_hierarchy_with(seq, linkage)?;
    match select_level(&hierarchy, k) {
        Ok(level) => {
            let (partition, trace) = refine_to_k_with(seq, level, k, linkage)?;
            Ok(SegmentOutcome {
                partition,
                hierarchy: Some(hierarchy),
                trace: Some(trace),
                reached_k: true,
            })
        }
        Err(Error::KUnreachable { .. }) => Ok(SegmentOutcome {
            partition: hierarchy.finest().clone(),
            hierarchy: Some(hierarchy),
            trace: None,
            reached_k: false,
        }),
        Err(e) => Err(e),
    }
}
