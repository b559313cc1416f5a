use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use twseg::bench::{run_bench, BenchConfig};
use twseg::io::{
    load_labels, load_manifest, load_partition, save_features, save_labels, save_manifest,
    save_partition, DatasetManifest, ManifestEntry,
};
use twseg::pipeline::{
    evaluate_items, load_eval_items, partition_path, render_text, segment_dataset, EvalItem,
    EvalOptions, KPolicy, SegmentOptions, VideoSegmentation,
};
use twseg::plot::render_svg;
use twseg::synth::{generate, suite_spec, SynthSpec};

use crate::{BenchArgs, EvalArgs, Failure, PlotArgs, SegmentArgs, SynthArgs};

type CmdResult = Result<(), Failure>;

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    if workers == 0 {
        return Err(Failure::input("--workers must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::input(format!("cannot start {workers} workers: {e}")))
}

fn check_tau(tau: f64) -> CmdResult {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Failure::input(format!("--tau must be in [0, 1], got {tau}")))
    }
}

/// Writes are output failures regardless of the underlying error kind.
fn written(r: twseg::Result<()>) -> CmdResult {
    r.map_err(Failure::output)
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::output(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::output(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::output(format!("{}: {e}", dir.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn single_video_manifest(a: &SegmentArgs, features: &Path) -> Result<DatasetManifest, Failure> {
    let needs_labels = a.tau > 0.0 || !matches!(a.k.policy(), KPolicy::Fixed(_));
    if needs_labels && a.labels.is_none() {
        return Err(Failure::input(
            "--labels is required with --features unless --k is given and --tau is 0",
        ));
    }
    let video_id = features
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Failure::input(format!("{}: not a file path", features.display())))?;
    let mut m = DatasetManifest::new(vec![ManifestEntry {
        video_id,
        activity: "default".into(),
        feature_path: features.to_path_buf(),
        label_path: a.labels.clone().unwrap_or_default(),
        k_override: None,
    }]);
    m.background_label = a.background.clone();
    Ok(m)
}

#[derive(Serialize)]
struct SegmentSummary<'a> {
    config: &'a SegmentOptions,
    videos: &'a [VideoSegmentation],
}

pub fn segment(a: SegmentArgs) -> CmdResult {
    check_tau(a.tau)?;
    let manifest = match (&a.input.manifest, &a.input.features) {
        (Some(path), _) => load_manifest(path)?,
        (None, Some(features)) => single_video_manifest(&a, features)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    let opts = SegmentOptions {
        method: a.method.into(),
        k_policy: a.k.policy(),
        tau: a.tau,
        seed: a.seed,
    };
    let videos = pool(a.workers)?.install(|| segment_dataset(&manifest, &opts))?;

    create_dir(&a.out)?;
    for v in &videos {
        let p = v.partition.as_ref().expect("segment_dataset fills partitions");
        written(save_partition(p, partition_path(&a.out, &v.video_id)))?;
        println!(
            "{}\tframes={}\tk={}\tclusters={}",
            v.video_id, v.frames, v.k, v.num_clusters
        );
        if !v.reached_k {
            eprintln!(
                "twseg: warning: {}: only {} clusters available for k={}",
                v.video_id, v.num_clusters, v.k
            );
        }
    }
    write_file(
        &a.out.join("summary.json"),
        &to_json(&SegmentSummary {
            config: &opts,
            videos: &videos,
        }),
    )
}

fn warn_unknown_labels(m: &DatasetManifest, items: &[EvalItem]) -> CmdResult {
    let Some(map) = m.label_map()? else {
        return Ok(());
    };
    let known: BTreeSet<&str> = map.iter().map(String::as_str).collect();
    for it in items {
        let unknown: BTreeSet<&str> = it
            .gt
            .names()
            .iter()
            .map(String::as_str)
            .filter(|n| !known.contains(n))
            .collect();
        if !unknown.is_empty() {
            let list: Vec<&str> = unknown.into_iter().collect();
            eprintln!(
                "twseg: warning: {}: labels not in label map: {}",
                it.video_id,
                list.join(", ")
            );
        }
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    check_tau(a.tau)?;
    let manifest = load_manifest(&a.manifest)?;
    if !a.pred.is_dir() {
        return Err(Failure::input(format!(
            "{}: prediction directory not found",
            a.pred.display()
        )));
    }
    let opts = EvalOptions {
        tau: a.tau,
        seed: a.seed,
        match_per_activity: a.match_per_activity,
        aggregate: a.aggregate.into(),
        f1: a.f1.into(),
    };
    let doc = pool(a.workers)?.install(|| -> Result<_, Failure> {
        let items = load_eval_items(&manifest, &a.pred)?;
        warn_unknown_labels(&manifest, &items)?;
        Ok(evaluate_items(&items, &opts)?)
    })?;
    print!("{}", render_text(&doc));
    if let Some(out) = &a.out {
        write_file(out, &to_json(&doc))?;
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> CmdResult {
    let cfg = BenchConfig {
        sizes: a.sizes,
        dim: a.dim,
        k: a.k,
        repeats: a.repeats,
        seed: a.seed,
    };
    let report = pool(a.workers)?.install(|| run_bench(&cfg))?;
    for p in &report.points {
        println!("n={}\tseconds={:.6}", p.n, p.seconds);
    }
    println!("log-log slope={:.4}", report.slope);
    if let Some(out) = &a.out {
        write_file(out, &to_json(&report))?;
    }
    Ok(())
}

fn parse_pred(spec: &str) -> Result<(String, PathBuf), Failure> {
    if let Some((name, path)) = spec.split_once('=') {
        if name.is_empty() || path.is_empty() {
            return Err(Failure::input(format!("--pred {spec:?}: expected NAME=PATH")));
        }
        return Ok((name.to_string(), PathBuf::from(path)));
    }
    let path = PathBuf::from(spec);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Failure::input(format!("--pred {spec:?}: not a file path")))?;
    Ok((name, path))
}

pub fn plot(a: PlotArgs) -> CmdResult {
    let gt = load_labels(&a.gt, &a.background)?;
    let mut preds = Vec::with_capacity(a.preds.len());
    for spec in &a.preds {
        let (name, path) = parse_pred(spec)?;
        preds.push((name, load_partition(&path)?));
    }
    let svg = render_svg(&gt, &preds)?;
    write_file(&a.out, &svg)
}

pub fn synth(a: SynthArgs) -> CmdResult {
    if a.videos == 0 {
        return Err(Failure::input("--videos must be at least 1"));
    }
    create_dir(&a.out)?;
    let mut entries = Vec::with_capacity(a.videos);
    for i in 0..a.videos {
        let seed = a.seed + i as u64;
        let base = if a.suite {
            suite_spec(a.n, seed)
        } else {
            SynthSpec {
                k: a.k,
                n: a.n,
                seed,
                ..SynthSpec::default()
            }
        };
        let mut spec = SynthSpec {
            d: a.d,
            sep: a.sep,
            noise_sigma: a.noise,
            background_frac: a.background_frac,
            ..base
        };
        if let Some(p) = &a.pattern {
            spec = spec.with_pattern(p);
        }
        let (seq, gt) = generate(&spec)?;
        let id = format!("video{i:03}");
        let feature_path = PathBuf::from(format!("{id}.bin"));
        let label_path = PathBuf::from(format!("{id}.txt"));
        written(save_features(&seq, a.out.join(&feature_path)))?;
        written(save_labels(&gt, a.out.join(&label_path)))?;
        entries.push(ManifestEntry {
            video_id: id,
            activity: if a.suite { "suite".into() } else { "synthetic".into() },
            feature_path,
            label_path,
            k_override: None,
        });
    }
    let manifest_path = a.out.join("manifest.json");
    written(save_manifest(&DatasetManifest::new(entries), &manifest_path))?;
    println!("wrote {} videos and {}", a.videos, manifest_path.display());
    Ok(())
}
