//! Dataset-level driver: method dispatch, per-video `k` resolution, batch
//! segmentation and batch evaluation.
//!
//! Videos are processed in parallel on the caller's thread pool; results
//! are always collected in manifest order, so outputs do not depend on the
//! worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{equal_split, finch, kmeans, KmeansConfig};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, background_keep_indices, evaluate, evaluate_pooled, AggregateMode, F1Average,
};
use crate::io::{compute_activity_k, load_partition, DatasetManifest, ManifestEntry};
use crate::refine::segment;
use crate::types::{EvalReport, FeatureSequence, GroundTruth, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Twfinch,
    Finch,
    Kmeans,
    Equalsplit,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Twfinch,
        Method::Finch,
        Method::Kmeans,
        Method::Equalsplit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Twfinch => "twfinch",
            Method::Finch => "finch",
            Method::Kmeans => "kmeans",
            Method::Equalsplit => "equalsplit",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Output of one method on one video.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub partition: Partition,
    /// False when the method could not produce `k` clusters.
    pub reached_k: bool,
}

/// Runs `method` on a single sequence. `seed` only affects k-means.
pub fn run_method(seq: &FeatureSequence, k: usize, method: Method, seed: u64) -> Result<MethodOutput> {
    let n = seq.len();
    // Clustering methods need two frames; a single frame is trivially one cluster.
    if n == 1 && k == 1 && method != Method::Equalsplit {
        return Ok(MethodOutput {
            partition: Partition::single(1),
            reached_k: true,
        });
    }
    match method {
        Method::Twfinch => {
            let out = segment(seq, k)?;
            Ok(MethodOutput {
                partition: out.partition,
                reached_k: out.reached_k,
            })
        }
        Method::Finch => {
            let (_, partition) = finch(seq, k)?;
            let reached_k = partition.num_clusters() == k;
            Ok(MethodOutput {
                partition,
                reached_k,
            })
        }
        Method::Kmeans => {
            let cfg = KmeansConfig {
                seed,
                ..KmeansConfig::new(k)
            };
            let partition = kmeans(seq, &cfg)?;
            let reached_k = partition.num_clusters() == k;
            Ok(MethodOutput {
                partition,
                reached_k,
            })
        }
        Method::Equalsplit => Ok(MethodOutput {
            partition: equal_split(n, k)?,
            reached_k: true,
        }),
    }
}

/// How the number of segments is chosen per video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    Fixed(usize),
    /// Rounded mean distinct-label count over the video's activity.
    ActivityAverage,
    /// Distinct labels of the video's own ground truth.
    PerVideoGt,
}

/// Deterministic per-video seed.
pub fn video_seed(seed: u64, video_id: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in video_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOptions {
    pub method: Method,
    pub k_policy: KPolicy,
    /// Fraction of background frames removed before segmenting.
    pub tau: f64,
    pub seed: u64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            method: Method::Twfinch,
            k_policy: KPolicy::ActivityAverage,
            tau: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSegmentation {
    pub video_id: String,
    pub activity: String,
    pub k: usize,
    pub frames: usize,
    pub num_clusters: usize,
    pub reached_k: bool,
    #[serde(skip)]
    pub partition: Option<Partition>,
}

fn resolve_k(
    e: &ManifestEntry,
    policy: KPolicy,
    activity_k: &BTreeMap<String, usize>,
    gt: Option<&GroundTruth>,
    count_background: bool,
) -> Result<usize> {
    if let Some(k) = e.k_override {
        return Ok(k);
    }
    match policy {
        KPolicy::Fixed(k) => Ok(k),
        KPolicy::ActivityAverage => activity_k
            .get(&e.activity)
            .copied()
            .ok_or_else(|| Error::Manifest(format!("no k for activity {}", e.activity))),
        KPolicy::PerVideoGt => Ok(gt
            .expect("labels loaded for per-video k")
            .distinct_labels(count_background)
            .max(1)),
    }
}

/// Segments every manifest entry; results follow manifest order.
pub fn segment_dataset(m: &DatasetManifest, opts: &SegmentOptions) -> Result<Vec<VideoSegmentation>> {
    let activity_k = match opts.k_policy {
        KPolicy::ActivityAverage => compute_activity_k(m)?,
        _ => BTreeMap::new(),
    };
    let needs_labels = opts.tau > 0.0 || opts.k_policy == KPolicy::PerVideoGt;
    m.entries
        .par_iter()
        .map(|e| {
            let run = || -> Result<VideoSegmentation> {
                let mut seq = m.load_features(e)?;
                let gt = if needs_labels {
                    let gt = m.load_labels(e)?;
                    check_aligned(&seq, &gt)?;
                    Some(gt)
                } else {
                    None
                };
                let k = resolve_k(e, opts.k_policy, &activity_k, gt.as_ref(), m.count_background_in_k)?;
                if opts.tau > 0.0 {
                    let keep = background_keep_indices(
                        gt.as_ref().expect("loaded"),
                        opts.tau,
                        video_seed(opts.seed, &e.video_id),
                    )?;
                    seq = seq.select(&keep)?;
                }
                // more segments than frames cannot be produced; clamp and flag
                let run_k = k.min(seq.len());
                let out = run_method(&seq, run_k, opts.method, opts.seed)?;
                Ok(VideoSegmentation {
                    video_id: e.video_id.clone(),
                    activity: e.activity.clone(),
                    k,
                    frames: seq.len(),
                    num_clusters: out.partition.num_clusters(),
                    reached_k: out.reached_k && run_k == k,
                    partition: Some(out.partition),
                })
            };
            run().map_err(|err| err.in_video(&e.video_id))
        })
        .collect()
}

fn check_aligned(seq: &FeatureSequence, gt: &GroundTruth) -> Result<()> {
    if seq.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "features",
            left: seq.len(),
            other: "labels",
            right: gt.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub tau: f64,
    pub seed: u64,
    pub match_per_activity: bool,
    pub aggregate: AggregateMode,
    pub f1: F1Average,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            tau: 0.0,
            seed: 0,
            match_per_activity: false,
            aggregate: AggregateMode::Video,
            f1: F1Average::Micro,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub activity: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Machine-readable evaluation document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDocument {
    pub config: EvalOptions,
    pub videos: Vec<VideoRecord>,
    pub aggregate: EvalReport,
}

/// A prediction paired with its ground truth, before filtering.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub video_id: String,
    pub activity: String,
    pub pred: Partition,
    pub gt: GroundTruth,
}

/// Path of a video's partition file inside an output directory.
pub fn partition_path(dir: &Path, video_id: &str) -> PathBuf {
    dir.join(format!("{video_id}.txt"))
}

/// Loads predictions from `pred_dir` for every manifest entry.
pub fn load_eval_items(m: &DatasetManifest, pred_dir: &Path) -> Result<Vec<EvalItem>> {
    m.entries
        .par_iter()
        .map(|e| {
            let load = || -> Result<EvalItem> {
                Ok(EvalItem {
                    video_id: e.video_id.clone(),
                    activity: e.activity.clone(),
                    pred: load_partition(partition_path(pred_dir, &e.video_id))?,
                    gt: m.load_labels(e)?,
                })
            };
            load().map_err(|err| err.in_video(&e.video_id))
        })
        .collect()
}

/// Applies background filtering to one item. Predictions may cover either
/// all frames or only the frames that survive filtering.
fn filtered(item: &EvalItem, opts: &EvalOptions) -> Result<(Partition, GroundTruth)> {
    if opts.tau == 0.0 {
        if item.pred.len() != item.gt.len() {
            return Err(Error::LengthMismatch {
                what: "prediction",
                left: item.pred.len(),
                other: "ground truth",
                right: item.gt.len(),
            });
        }
        return Ok((item.pred.clone(), item.gt.clone()));
    }
    let keep = background_keep_indices(&item.gt, opts.tau, video_seed(opts.seed, &item.video_id))?;
    let gt = item.gt.select(&keep)?;
    let pred = if item.pred.len() == keep.len() {
        item.pred.clone()
    } else if item.pred.len() == item.gt.len() {
        let raw: Vec<usize> = keep.iter().map(|&i| item.pred.labels()[i]).collect();
        crate::types::relabel_dense(&raw)?
    } else {
        return Err(Error::LengthMismatch {
            what: "prediction",
            left: item.pred.len(),
            other: "ground truth (full or filtered)",
            right: keep.len(),
        });
    };
    Ok((pred, gt))
}

pub fn evaluate_items(items: &[EvalItem], opts: &EvalOptions) -> Result<EvalDocument> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let prepared: Vec<(Partition, GroundTruth)> = items
        .par_iter()
        .map(|it| {
            filtered(it, opts).map_err(|e| e.in_video(&it.video_id))
        })
        .collect::<Result<_>>()?;

    let reports: Vec<EvalReport> = if opts.match_per_activity {
        let mut reports: Vec<Option<EvalReport>> = vec![None; items.len()];
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            groups.entry(it.activity.as_str()).or_default().push(i);
        }
        for idx in groups.values() {
            let videos: Vec<(&Partition, &GroundTruth)> =
                idx.iter().map(|&i| (&prepared[i].0, &prepared[i].1)).collect();
            for (&i, r) in idx.iter().zip(evaluate_pooled(&videos, opts.f1)?) {
                reports[i] = Some(r);
            }
        }
        reports.into_iter().map(|r| r.expect("every video grouped")).collect()
    } else {
        prepared
            .par_iter()
            .zip(items)
            .map(|((p, g), it)| {
                evaluate(p, g, opts.f1).map_err(|e| e.in_video(&it.video_id))
            })
            .collect::<Result<_>>()?
    };

    let aggregate = aggregate(&reports, opts.aggregate)?;
    let videos = items
        .iter()
        .zip(reports)
        .map(|(it, report)| VideoRecord {
            video_id: it.video_id.clone(),
            activity: it.activity.clone(),
            report,
        })
        .collect();
    Ok(EvalDocument {
        config: opts.clone(),
        videos,
        aggregate,
    })
}

/// Line-oriented rendering of an evaluation document.
pub fn render_text(doc: &EvalDocument) -> String {
    let mut out = String::new();
    let line = |name: &str, r: &EvalReport| {
        format!(
            "{name}\tframes={}\tmof={:.4}\tiou={:.4}\tf1={:.4}\tmid_p={:.4}\tmid_r={:.4}\tpurity={:.4}\n",
            r.frames, r.mof, r.iou, r.f1, r.midpoint_precision, r.midpoint_recall, r.purity
        )
    };
    for v in &doc.videos {
        out.push_str(&line(&v.video_id, &v.report));
    }
    let f1 = match doc.config.f1 {
        F1Average::Micro => "micro",
        F1Average::Macro => "macro",
    };
    let agg = match doc.config.aggregate {
        AggregateMode::Video => "video",
        AggregateMode::Frame => "frame",
    };
    out.push_str(&line(&format!("AGGREGATE[{agg}-mean,f1={f1}]"), &doc.aggregate));
    out
}
