//! Temporally modulated distances and the symmetric first-neighbor graph.
//!
//! Feature distance between nodes `i != j` is `1 - <x̂_i, x̂_j>` on
//! L2-normalized vectors, temporal distance is `|t_i - t_j| / n_total`, and
//! the weighted distance is their product. Diagonals are fixed at 1 so a node
//! is never its own neighbor. Each node links to its closest node under the
//! weighted distance (lowest index on ties); links are then made symmetric
//! and the connected components form clusters.
//!
//! Two routes compute the same neighbors: [`weighted_distances`] +
//! [`one_nn_graph`] materialize the full matrix, while [`nearest_neighbors`]
//! scans rows without storing it. Both evaluate the same expressions in the
//! same order and so agree bit for bit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{relabel_dense, Partition};

/// Dense square matrix of distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f(i, j);
                }
            });
        DistanceMatrix { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// The product of feature and temporal distances, plus the temporal
/// normalizer it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDistances {
    pub w: DistanceMatrix,
    pub n_total: usize,
}

/// Directed first neighbors and their symmetric closure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneNnGraph {
    pub nn: Vec<usize>,
    /// Sorted, deduplicated directed pairs; `(i, j)` present iff `(j, i)` is.
    pub edges: Vec<(usize, usize)>,
}

impl OneNnGraph {
    pub fn num_nodes(&self) -> usize {
        self.nn.len()
    }

    /// Symmetric closure of `{(i, nn[i])}`.
    pub fn from_neighbors(nn: Vec<usize>) -> Self {
        let mut edges = Vec::with_capacity(2 * nn.len());
        for (i, &j) in nn.iter().enumerate() {
            edges.push((i, j));
            edges.push((j, i));
        }
        edges.sort_unstable();
        edges.dedup();
        OneNnGraph { nn, edges }
    }
}

/// L2-normalizes a vector into `out`; zero vectors stay zero.
pub(crate) fn normalize_into(v: impl IntoIterator<Item = f64>, out: &mut Vec<f64>) {
    let start = out.len();
    out.extend(v);
    let norm = out[start..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut out[start..] {
            *x /= norm;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators; the summation order is fixed, so the
    // result does not depend on argument order or on the caller.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in chunks * 4..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Row-major matrix of unit-norm vectors (zero rows for zero inputs).
#[derive(Debug, Clone)]
pub struct UnitVectors {
    dim: usize,
    data: Vec<f64>,
}

impl UnitVectors {
    pub fn new<R, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = f64>,
    {
        let mut data = Vec::new();
        for r in rows {
            normalize_into(r, &mut data);
        }
        debug_assert!(dim == 0 || data.len() % dim == 0);
        UnitVectors { dim, data }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub(crate) fn feature_distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            1.0 - dot(self.row(i), self.row(j))
        }
    }
}

#[inline]
pub(crate) fn temporal_distance(times: &[f64], n_total: f64, i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        (times[i] - times[j]).abs() / n_total
    }
}

/// Combined distance between nodes `i` and `j`; `times == None` disables
/// temporal modulation.
#[inline]
pub(crate) fn combined_distance(
    units: &UnitVectors,
    times: Option<(&[f64], f64)>,
    i: usize,
    j: usize,
) -> f64 {
    let gf = units.feature_distance(i, j);
    match times {
        Some((t, n_total)) => gf * temporal_distance(t, n_total, i, j),
        None => gf,
    }
}

fn check_finite(vectors: &[Vec<f64>]) -> Result<usize> {
    let d = vectors.first().map_or(0, Vec::len);
    for (row, v) in vectors.iter().enumerate() {
        if v.len() != d {
            return Err(Error::LengthMismatch {
                what: "vector",
                left: v.len(),
                other: "vector 0",
                right: d,
            });
        }
        if let Some(col) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(d)
}

/// Feature-space distances `1 - <x̂_i, x̂_j>` with unit diagonal.
///
/// Values are not clamped: signed features can yield distances above 1.
pub fn feature_distances(vectors: &[Vec<f64>]) -> Result<DistanceMatrix> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = check_finite(vectors)?;
    let units = UnitVectors::new(vectors.iter().map(|v| v.iter().copied()), d);
    Ok(DistanceMatrix::from_fn(vectors.len(), |i, j| {
        units.feature_distance(i, j)
    }))
}

/// Time-space distances `|t_i - t_j| / n_total` with unit diagonal.
pub fn temporal_distances(timestamps: &[f64], n_total: usize) -> Result<DistanceMatrix> {
    if timestamps.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n_total == 0 {
        return Err(Error::ZeroLength);
    }
    if n_total < timestamps.len() {
        return Err(Error::NormalizerTooSmall {
            n: timestamps.len(),
            n_total,
        });
    }
    let nt = n_total as f64;
    Ok(DistanceMatrix::from_fn(timestamps.len(), |i, j| {
        temporal_distance(timestamps, nt, i, j)
    }))
}

/// Elementwise product of feature and temporal distances.
pub fn weighted_distances(
    gf: &DistanceMatrix,
    gt: &DistanceMatrix,
    n_total: usize,
) -> Result<WeightedDistances> {
    if gf.size() != gt.size() {
        return Err(Error::ShapeMismatch {
            expected: gf.size(),
            got: gt.size(),
        });
    }
    let w = DistanceMatrix::from_fn(gf.size(), |i, j| {
        if i == j {
            1.0
        } else {
            gf.get(i, j) * gt.get(i, j)
        }
    });
    Ok(WeightedDistances { w, n_total })
}

/// Index of the smallest entry of `row` other than `skip`; lowest index wins
/// ties.
pub(crate) fn argmin_excluding(row: impl Iterator<Item = f64>, skip: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, v) in row.enumerate() {
        if j != skip && (v < best.1 || best.0 == usize::MAX) {
            best = (j, v);
        }
    }
    best
}

/// First neighbor of every node under a materialized distance matrix.
pub fn one_nn_graph(w: &WeightedDistances) -> Result<OneNnGraph> {
    let n = w.w.size();
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    let nn = (0..n)
        .into_par_iter()
        .map(|i| argmin_excluding(w.w.row(i).iter().copied(), i).0)
        .collect();
    Ok(OneNnGraph::from_neighbors(nn))
}

/// First neighbors and their distances computed row by row, without
/// materializing the N×N matrix.
pub fn nearest_neighbors(
    units: &UnitVectors,
    times: Option<(&[f64], usize)>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = units.len();
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    if let Some((t, n_total)) = times {
        if n_total == 0 {
            return Err(Error::ZeroLength);
        }
        if t.len() != n {
            return Err(Error::LengthMismatch {
                what: "timestamps",
                left: t.len(),
                other: "nodes",
                right: n,
            });
        }
    }
    let times = times.map(|(t, nt)| (t, nt as f64));
    let (nn, dist) = (0..n)
        .into_par_iter()
        .with_min_len(16)
        .map(|i| argmin_excluding((0..n).map(|j| combined_distance(units, times, i, j)), i))
        .unzip();
    Ok((nn, dist))
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Dense labels ordered by each set's smallest member.
    pub fn labels(&mut self) -> Partition {
        let roots: Vec<usize> = (0..self.parent.len()).map(|i| self.find(i)).collect();
        relabel_dense(&roots).expect("disjoint set is nonempty")
    }
}

/// Components of an undirected edge list over `n` nodes.
pub fn components_of_edges(n: usize, edges: &[(usize, usize)]) -> Partition {
    let mut ds = DisjointSet::new(n);
    for &(a, b) in edges {
        ds.union(a, b);
    }
    ds.labels()
}

/// Connected components of the symmetric first-neighbor graph.
pub fn connected_components(g: &OneNnGraph) -> Partition {
    components_of_edges(g.num_nodes(), &g.edges)
}

/// Symmetric adjacency of the original first-neighbor clustering rule: `i`
/// and `j` are linked when one is the other's first neighbor or when they
/// share a first neighbor.
///
/// Nodes sharing a neighbor are chained pairwise instead of forming a
/// clique; components are the same.
pub fn shared_neighbor_graph(nn: Vec<usize>) -> OneNnGraph {
    let n = nn.len();
    let mut last_with_nn = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(4 * n);
    for (i, &j) in nn.iter().enumerate() {
        edges.push((i, j));
        edges.push((j, i));
        let prev = last_with_nn[j];
        if prev != usize::MAX {
            edges.push((prev, i));
            edges.push((i, prev));
        }
        last_with_nn[j] = i;
    }
    edges.sort_unstable();
    edges.dedup();
    OneNnGraph { nn, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn feature_distance_examples() {
        let d = feature_distances(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(d.get(0, 1).abs() < EPS);
        assert_eq!(d.get(0, 0), 1.0);

        let d = feature_distances(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((d.get(0, 1) - 1.0).abs() < EPS);

        // 1 - 1/sqrt(2)
        let d = feature_distances(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!((d.get(0, 1) - 0.292_893_218_813_452_5).abs() < EPS);
    }

    #[test]
    fn feature_distance_zero_vector_and_negative() {
        let d = feature_distances(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![-3.0, -4.0]]).unwrap();
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(0, 2), 1.0);
        // opposite directions: no clamping
        assert!((d.get(1, 2) - 2.0).abs() < EPS);
        assert!(d.is_symmetric());
    }

    #[test]
    fn feature_distance_rejects_non_finite() {
        let r = feature_distances(&[vec![1.0, f64::NAN]]);
        assert!(matches!(r, Err(Error::NonFinite { row: 0, col: 1 })));
    }

    #[test]
    fn temporal_distance_examples() {
        let t = temporal_distances(&[1.0, 3.0], 10).unwrap();
        assert!((t.get(0, 1) - 0.2).abs() < EPS);
        assert_eq!(t.get(1, 1), 1.0);
        let t = temporal_distances(&[1.0, 1.0], 10).unwrap();
        assert_eq!(t.get(0, 1), 0.0);
        let t = temporal_distances(&[1.0, 10.0], 10).unwrap();
        assert!((t.get(0, 1) - 0.9).abs() < EPS);
        assert!(matches!(temporal_distances(&[1.0], 0), Err(Error::ZeroLength)));
    }

    #[test]
    fn weighted_distance_examples() {
        let gf = DistanceMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let gt = DistanceMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 1.0]]).unwrap();
        let w = weighted_distances(&gf, &gt, 10).unwrap();
        assert!((w.w.get(0, 1) - 0.1).abs() < EPS);
        assert_eq!(w.w.get(0, 0), 1.0);

        let gf0 = DistanceMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(weighted_distances(&gf0, &gt, 10).unwrap().w.get(0, 1), 0.0);
        let gt0 = DistanceMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(weighted_distances(&gf, &gt0, 10).unwrap().w.get(1, 0), 0.0);

        let big = DistanceMatrix::from_fn(3, |_, _| 1.0);
        assert!(matches!(
            weighted_distances(&gf, &big, 10),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn wd(rows: &[Vec<f64>]) -> WeightedDistances {
        WeightedDistances {
            w: DistanceMatrix::from_rows(rows).unwrap(),
            n_total: rows.len(),
        }
    }

    #[test]
    fn one_nn_examples() {
        let g = one_nn_graph(&wd(&[
            vec![1.0, 0.5, 0.1],
            vec![0.5, 1.0, 0.3],
            vec![0.1, 0.3, 1.0],
        ]))
        .unwrap();
        assert_eq!(g.nn[0], 2);
        assert!(g.edges.contains(&(0, 2)) && g.edges.contains(&(2, 0)));

        let g = one_nn_graph(&wd(&[
            vec![1.0, 0.4, 0.4],
            vec![0.4, 1.0, 0.4],
            vec![0.4, 0.4, 1.0],
        ]))
        .unwrap();
        assert_eq!(g.nn, vec![1, 0, 0]);

        // A-B close, B-C close, A-C far
        let g = one_nn_graph(&wd(&[
            vec![1.0, 0.1, 0.9],
            vec![0.1, 1.0, 0.2],
            vec![0.9, 0.2, 1.0],
        ]))
        .unwrap();
        assert_eq!(connected_components(&g).labels(), &[0, 0, 0]);

        assert!(matches!(
            one_nn_graph(&wd(&[vec![1.0]])),
            Err(Error::TooFewNodes(1))
        ));
    }

    #[test]
    fn component_examples() {
        let g = OneNnGraph::from_neighbors(vec![1, 0, 1]);
        assert_eq!(connected_components(&g).labels(), &[0, 0, 0]);

        let g = OneNnGraph::from_neighbors(vec![1, 0, 3, 2]);
        assert_eq!(connected_components(&g).labels(), &[0, 0, 1, 1]);

        let g = OneNnGraph::from_neighbors(vec![1, 0]);
        assert_eq!(connected_components(&g).labels(), &[0, 0]);
    }

    #[test]
    fn fused_route_matches_matrix_route() {
        let vectors: Vec<Vec<f64>> = (0..37)
            .map(|i| {
                (0..5)
                    .map(|k| ((i * 7 + k * 13) % 11) as f64 - 4.0)
                    .collect()
            })
            .collect();
        let times: Vec<f64> = (1..=37).map(f64::from).collect();
        let gf = feature_distances(&vectors).unwrap();
        let gt = temporal_distances(&times, 37).unwrap();
        let w = weighted_distances(&gf, &gt, 37).unwrap();
        let g = one_nn_graph(&w).unwrap();

        let units = UnitVectors::new(vectors.iter().map(|v| v.iter().copied()), 5);
        let (nn, dist) = nearest_neighbors(&units, Some((&times, 37))).unwrap();
        assert_eq!(nn, g.nn);
        for (i, &j) in nn.iter().enumerate() {
            assert_eq!(dist[i].to_bits(), w.w.get(i, j).to_bits());
        }
    }

    #[test]
    fn shared_neighbor_components_match_first_neighbor_components() {
        let nn = vec![1, 0, 1, 4, 3, 4, 1];
        let a = connected_components(&OneNnGraph::from_neighbors(nn.clone()));
        let b = connected_components(&shared_neighbor_graph(nn));
        assert_eq!(a, b);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
            (2usize..40, 1usize..6).prop_flat_map(|(n, d)| {
                proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, d), n)
            })
        }

        proptest! {
            #[test]
            fn weighted_is_symmetric_with_unit_diagonal(v in vectors()) {
                let n = v.len();
                let times: Vec<f64> = (1..=n).map(|t| t as f64).collect();
                let gf = feature_distances(&v).unwrap();
                let gt = temporal_distances(&times, n).unwrap();
                let w = weighted_distances(&gf, &gt, n).unwrap();
                prop_assert!(w.w.is_symmetric());
                for i in 0..n {
                    prop_assert_eq!(w.w.get(i, i), 1.0);
                }
            }

            #[test]
            fn graph_edge_counts_and_nn_membership(v in vectors()) {
                let n = v.len();
                let times: Vec<f64> = (1..=n).map(|t| t as f64).collect();
                let units = UnitVectors::new(v.iter().map(|r| r.iter().copied()), v[0].len());
                let (nn, _) = nearest_neighbors(&units, Some((&times, n))).unwrap();
                prop_assert_eq!(nn.len(), n);
                prop_assert!(nn.iter().enumerate().all(|(i, &j)| i != j));
                let g = OneNnGraph::from_neighbors(nn);
                prop_assert!(g.edges.len() >= n && g.edges.len() <= 2 * n);
                for &(a, b) in &g.edges {
                    prop_assert!(g.edges.binary_search(&(b, a)).is_ok());
                }
                let p = connected_components(&g);
                for (i, &j) in g.nn.iter().enumerate() {
                    prop_assert_eq!(p.labels()[i], p.labels()[j]);
                }
            }
        }
    }
}
