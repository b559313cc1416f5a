//! Synthetic videos with planted contiguous segments, plus brute-force
//! oracles for matching and graph components.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::OverlapMatrix;
use crate::types::{relabel_dense, FeatureSequence, GroundTruth, Partition};

pub const BACKGROUND_LABEL: &str = "SIL";
const MIN_SEGMENT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Planted action segments.
    pub k: usize,
    pub n: usize,
    pub d: usize,
    /// Distance between class centers, in units of `noise_sigma`.
    pub sep: f64,
    pub noise_sigma: f64,
    pub background_frac: f64,
    /// Dirichlet concentration of segment lengths; larger is more even.
    #[serde(default = "default_concentration")]
    pub length_concentration: f64,
    /// Visual class of each segment, e.g. `["A", "B", "A"]`; repeated
    /// tokens share a center. Defaults to `k` distinct classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_pattern: Option<Vec<String>>,
    pub seed: u64,
}

fn default_concentration() -> f64 {
    8.0
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            k: 4,
            n: 400,
            d: 32,
            sep: 8.0,
            noise_sigma: 1.0,
            background_frac: 0.0,
            length_concentration: default_concentration(),
            repeat_pattern: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Segment tokens, one per planted segment.
    pub fn tokens(&self) -> Vec<String> {
        match &self.repeat_pattern {
            Some(p) => p.clone(),
            None => (0..self.k).map(|i| format!("a{i}")).collect(),
        }
    }

    /// Parses a whitespace-separated pattern such as `"A B A"`.
    pub fn with_pattern(mut self, pattern: &str) -> Self {
        let tokens: Vec<String> = pattern.split_whitespace().map(str::to_string).collect();
        self.k = tokens.len();
        self.repeat_pattern = Some(tokens);
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if let Some(p) = &self.repeat_pattern {
            if p.len() != self.k {
                return bad(format!("pattern has {} segments, k = {}", p.len(), self.k));
            }
            if p.iter().any(|t| t == BACKGROUND_LABEL) {
                return bad(format!("{BACKGROUND_LABEL} is reserved for background"));
            }
        }
        if !(self.sep >= 0.0 && self.noise_sigma >= 0.0) || !self.sep.is_finite() || !self.noise_sigma.is_finite() {
            return bad("sep and noise_sigma must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.background_frac) {
            return bad("background_frac must be in [0, 1)".into());
        }
        let classes = self.num_classes() + usize::from(self.background_frac > 0.0);
        if self.d < classes {
            return bad(format!("d = {} cannot hold {classes} orthogonal centers", self.d));
        }
        if self.action_frames() < MIN_SEGMENT * self.k {
            return bad(format!(
                "{} action frames cannot hold {} segments of length >= {MIN_SEGMENT}",
                self.action_frames(),
                self.k
            ));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        let mut t = self.tokens();
        t.sort();
        t.dedup();
        t.len()
    }

    fn background_frames(&self) -> usize {
        (self.background_frac * self.n as f64).round() as usize
    }

    fn action_frames(&self) -> usize {
        self.n.saturating_sub(self.background_frames())
    }
}

/// Splits `total` into `parts` lengths of at least `min`, with
/// Dirichlet(`alpha`)-distributed excess.
fn random_lengths(
    rng: &mut ChaCha8Rng,
    total: usize,
    parts: usize,
    min: usize,
    alpha: f64,
) -> Vec<usize> {
    let gamma = Gamma::new(alpha, 1.0).expect("valid shape");
    let weights: Vec<f64> = (0..parts).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = weights.iter().sum();
    let excess = total - min * parts;
    let mut lengths: Vec<usize> = weights
        .iter()
        .map(|w| min + (w / sum * excess as f64).floor() as usize)
        .collect();
    let mut short = total - lengths.iter().sum::<usize>();
    let mut i = 0;
    while short > 0 {
        lengths[i % parts] += 1;
        short -= 1;
        i += 1;
    }
    lengths
}

/// Generates features and frame labels for `spec`.
///
/// Ground-truth labels name segment instances: a token used once keeps its
/// name, a repeated token `A` becomes `A#1`, `A#2`, ... in temporal order.
pub fn generate(spec: &SynthSpec) -> Result<(FeatureSequence, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tokens = spec.tokens();

    let mut class_of: HashMap<&str, usize> = HashMap::new();
    for t in &tokens {
        let next = class_of.len();
        class_of.entry(t.as_str()).or_insert(next);
    }
    let mut totals: HashMap<&str, usize> = HashMap::new();
    for t in &tokens {
        *totals.entry(t.as_str()).or_default() += 1;
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let names: Vec<String> = tokens
        .iter()
        .map(|t| {
            let c = seen.entry(t.as_str()).or_default();
            *c += 1;
            if totals[t.as_str()] > 1 {
                format!("{t}#{c}")
            } else {
                t.clone()
            }
        })
        .collect();

    let lengths = random_lengths(
        &mut rng,
        spec.action_frames(),
        spec.k,
        MIN_SEGMENT,
        spec.length_concentration,
    );
    let bg_total = spec.background_frames();
    let gaps = if bg_total > 0 {
        random_lengths(&mut rng, bg_total, spec.k + 1, 0, spec.length_concentration)
    } else {
        vec![0; spec.k + 1]
    };

    // (class, label) per frame
    let bg_class = class_of.len();
    let mut frames: Vec<(usize, &str)> = Vec::with_capacity(spec.n);
    for seg in 0..spec.k {
        frames.extend(std::iter::repeat_n((bg_class, BACKGROUND_LABEL), gaps[seg]));
        let class = class_of[tokens[seg].as_str()];
        frames.extend(std::iter::repeat_n((class, names[seg].as_str()), lengths[seg]));
    }
    frames.extend(std::iter::repeat_n((bg_class, BACKGROUND_LABEL), gaps[spec.k]));

    // orthogonal centers with pairwise distance sep * sigma
    let scale = spec.sep * spec.noise_sigma / std::f64::consts::SQRT_2;
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma is finite");
    let mut data = Vec::with_capacity(spec.n * spec.d);
    for &(class, _) in &frames {
        for dim in 0..spec.d {
            let center = if dim == class { scale } else { 0.0 };
            data.push((center + noise.sample(&mut rng)) as f32);
        }
    }
    let seq = FeatureSequence::new(format!("synth-{}", spec.seed), spec.n, spec.d, data)?;
    let labels: Vec<&str> = frames.iter().map(|&(_, l)| l).collect();
    let gt = GroundTruth::from_names(&labels, BACKGROUND_LABEL)?;
    Ok((seq, gt))
}

/// Draws a spec for the benchmark-style suite: `k` in `4..=10`, `n` frames,
/// and roughly one segment in three reusing the look of an earlier,
/// non-adjacent segment.
pub fn suite_spec(n: usize, seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let k = rng.random_range(4..=10);
    let mut pattern: Vec<String> = Vec::with_capacity(k);
    let mut fresh = 0;
    for i in 0..k {
        let reuse = i >= 2 && rng.random::<f64>() < 1.0 / 3.0;
        let candidates: Vec<&String> = if reuse {
            pattern[..i - 1].iter().filter(|t| **t != pattern[i - 1]).collect()
        } else {
            Vec::new()
        };
        if !candidates.is_empty() {
            let t = candidates[rng.random_range(0..candidates.len())].clone();
            pattern.push(t);
        } else {
            pattern.push(format!("c{fresh}"));
            fresh += 1;
        }
    }
    SynthSpec {
        k,
        n,
        d: 32,
        seed,
        repeat_pattern: Some(pattern),
        ..SynthSpec::default()
    }
}

/// Exhaustive maximum-overlap assignment over all permutations of the
/// zero-padded square matrix. First best permutation in lexicographic
/// order wins.
pub fn brute_force_assignment(overlap: &OverlapMatrix) -> Result<Vec<Option<usize>>> {
    const LIMIT: usize = 8;
    let (rows, cols) = (overlap.rows(), overlap.cols());
    let n = rows.max(cols);
    if n > LIMIT {
        return Err(Error::TooLarge(n, LIMIT));
    }
    let value = |perm: &[usize]| -> u64 {
        perm.iter()
            .enumerate()
            .filter(|&(r, &c)| r < rows && c < cols)
            .map(|(r, &c)| overlap.get(r, c))
            .sum()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (value(&perm), perm.clone());
    while next_permutation(&mut perm) {
        let v = value(&perm);
        if v > best.0 {
            best = (v, perm.clone());
        }
    }
    Ok((0..rows)
        .map(|r| Some(best.1[r]).filter(|&c| c < cols))
        .collect())
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Component labels by repeated breadth-first search, numbered in order of
/// each component's smallest node.
pub fn brute_force_components(n: usize, edges: &[(usize, usize)]) -> Result<Partition> {
    const LIMIT: usize = 10_000;
    if n > LIMIT {
        return Err(Error::TooLarge(n, LIMIT));
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if label[v] == usize::MAX {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    relabel_dense(&label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{connected_components, OneNnGraph};
    use crate::types::count_runs;

    #[test]
    fn planted_runs() {
        let spec = SynthSpec {
            k: 4,
            n: 400,
            sep: 10.0,
            ..SynthSpec::default()
        };
        let (seq, gt) = generate(&spec).unwrap();
        assert_eq!(seq.len(), 400);
        assert_eq!(gt.num_labels(), 4);
        assert_eq!(count_runs(gt.ids()), 4);
        assert!(gt.segments().iter().all(|s| s.len() >= MIN_SEGMENT));
    }

    #[test]
    fn repeated_pattern() {
        let spec = SynthSpec::default().with_pattern("A B A");
        assert_eq!(spec.num_classes(), 2);
        let (seq, gt) = generate(&spec).unwrap();
        let segs = gt.segments();
        assert_eq!(segs.len(), 3);
        assert_eq!(gt.names(), &["A#1", "B", "A#2"]);
        // both A segments sit on the same axis
        let axis = |s: &crate::types::Segment| {
            let mid = seq.row(s.midpoint());
            (0..mid.len())
                .max_by(|&a, &b| mid[a].total_cmp(&mid[b]))
                .unwrap()
        };
        assert_eq!(axis(&segs[0]), axis(&segs[2]));
        assert_ne!(axis(&segs[0]), axis(&segs[1]));
    }

    #[test]
    fn background_fraction() {
        let spec = SynthSpec {
            background_frac: 0.6,
            n: 500,
            ..SynthSpec::default()
        };
        let (_, gt) = generate(&spec).unwrap();
        assert_eq!(gt.num_background(), 300);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            seed: 11,
            background_frac: 0.2,
            ..SynthSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 12, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn infeasible_specs() {
        let too_short = SynthSpec { k: 5, n: 9, ..SynthSpec::default() };
        assert!(matches!(generate(&too_short), Err(Error::InfeasibleSpec(_))));
        let narrow = SynthSpec { k: 5, d: 4, ..SynthSpec::default() };
        assert!(matches!(generate(&narrow), Err(Error::InfeasibleSpec(_))));
        let zero = SynthSpec { k: 0, ..SynthSpec::default() };
        assert!(generate(&zero).is_err());
    }

    #[test]
    fn suite_specs_are_valid() {
        for seed in 0..50 {
            let spec = suite_spec(800, seed);
            assert!((4..=10).contains(&spec.k));
            let (_, gt) = generate(&spec).unwrap();
            assert_eq!(count_runs(gt.ids()), spec.k);
            assert_eq!(gt.num_labels(), spec.k);
        }
    }

    #[test]
    fn brute_force_assignment_examples() {
        let m = OverlapMatrix::from_rows(&[vec![9, 1], vec![2, 8]]).unwrap();
        assert_eq!(brute_force_assignment(&m).unwrap(), vec![Some(0), Some(1)]);
        let m = OverlapMatrix::from_rows(&[vec![1, 7, 3]]).unwrap();
        assert_eq!(brute_force_assignment(&m).unwrap(), vec![Some(1)]);
        let big = OverlapMatrix::zeros(9, 2);
        assert!(matches!(brute_force_assignment(&big), Err(Error::TooLarge(9, 8))));
    }

    #[test]
    fn brute_force_components_examples() {
        for nn in [vec![1, 0, 1], vec![1, 0, 3, 2], vec![1, 0]] {
            let g = OneNnGraph::from_neighbors(nn);
            assert_eq!(
                brute_force_components(g.num_nodes(), &g.edges).unwrap(),
                connected_components(&g)
            );
        }
    }
}
