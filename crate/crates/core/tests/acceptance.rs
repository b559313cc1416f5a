//! End-to-end acceptance checks. Criteria run one after another inside a
//! single test so that timing budgets are not skewed by other tests, and
//! each prints one PASS/FAIL line.

use std::io::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use twseg::baselines::{equal_split, finch, kmeans, KmeansConfig};
use twseg::bench::{log_log_slope, time_once, DEFAULT_SIZES};
use twseg::eval::{
    evaluate, f1, hungarian_match, iou, midpoint_hit, mof, purity, F1Average, OverlapMatrix,
};
use twseg::graph::{
    connected_components, feature_distances, temporal_distances, weighted_distances, OneNnGraph,
};
use twseg::hierarchy::summarize;
use twseg::io::{format_partition, save_features, save_labels, save_manifest, DatasetManifest, ManifestEntry};
use twseg::pipeline::{
    evaluate_items, render_text, segment_dataset, EvalItem, EvalOptions, KPolicy, Method,
    SegmentOptions,
};
use twseg::plot::render_svg;
use twseg::synth::{brute_force_assignment, brute_force_components, generate, suite_spec, SynthSpec};
use twseg::types::segments_of;
use twseg::{build_hierarchy, refine_to_k, relabel_dense, segment, select_level, GroundTruth, Partition};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=6);
        let m: Vec<Vec<u64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(0..50)).collect())
            .collect();
        let overlap = OverlapMatrix::from_rows(&m).unwrap();
        let fast = overlap.score(&hungarian_match(&overlap));
        let slow = overlap.score(&brute_force_assignment(&overlap).unwrap());
        if fast != slow {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 5.0,
        format!("1000 matrices, {mismatches} mismatches, {secs:.2}s (< 5s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=2000);
        let nn: Vec<usize> = (0..n)
            .map(|i| {
                let j = rng.random_range(0..n - 1);
                if j >= i {
                    j + 1
                } else {
                    j
                }
            })
            .collect();
        let g = OneNnGraph::from_neighbors(nn);
        let fast = connected_components(&g);
        let slow = brute_force_components(n, &g.edges).unwrap();
        let a = relabel_dense(fast.labels()).unwrap();
        let b = relabel_dense(slow.labels()).unwrap();
        if a != b {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 10.0,
        format!("500 graphs, {mismatches} mismatches, {secs:.2}s (< 10s)"),
    )
}

/// Replays every merge against literal recomputation of all pairwise
/// weighted distances. Returns the number of violations.
fn replay_violations(seq: &twseg::FeatureSequence, start: &Partition, k: usize) -> usize {
    let (out, trace) = refine_to_k(seq, start, k).unwrap();
    let mut violations = 0;
    let mut cur = relabel_dense(start.labels()).unwrap();
    for m in &trace.merges {
        let s = summarize(seq, &cur).unwrap();
        let c = s.num_clusters();
        let vecs: Vec<Vec<f64>> = (0..c).map(|i| s.mean(i).to_vec()).collect();
        let gf = feature_distances(&vecs).unwrap();
        let gt = temporal_distances(&s.mean_times, seq.len()).unwrap();
        let w = weighted_distances(&gf, &gt, seq.len()).unwrap().w;
        let mut min = f64::INFINITY;
        for i in 0..c {
            for j in 0..c {
                if i != j {
                    min = min.min(w.get(i, j));
                }
            }
        }
        if !(m.a < m.b && m.b < c && w.get(m.a, m.b) == min && m.w == min) {
            violations += 1;
        }
        let raw: Vec<usize> = cur.labels().iter().map(|&l| if l == m.b { m.a } else { l }).collect();
        cur = relabel_dense(&raw).unwrap();
    }
    if cur != out || out.num_clusters() != k {
        violations += 1;
    }
    violations
}

fn criterion_3() -> Outcome {
    let results: Vec<(usize, bool)> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = rng.random_range(100..=3000);
            let spec = SynthSpec {
                k: rng.random_range(2..=10),
                n,
                d: 32,
                seed,
                ..SynthSpec::default()
            };
            let (seq, _) = generate(&spec).unwrap();
            let h = build_hierarchy(&seq).unwrap();
            let mut violations = 0;
            let levels = h.levels();
            for pair in levels.windows(2) {
                if pair[1].num_clusters() >= pair[0].num_clusters() || !pair[1].is_coarsening_of(&pair[0]) {
                    violations += 1;
                }
            }
            // every tenth sequence asks for one segment per frame, which no
            // level can supply
            let k = if seed % 10 == 9 { n } else { rng.random_range(1..=15) };
            let out = segment(&seq, k).unwrap();
            let flagged = !out.reached_k;
            if out.reached_k {
                if out.partition.num_clusters() != k {
                    violations += 1;
                }
                let level = select_level(&h, k).unwrap();
                violations += replay_violations(&seq, level, k);
            } else if select_level(&h, k).is_ok() {
                violations += 1;
            }
            (violations, flagged)
        })
        .collect();
    let violations: usize = results.iter().map(|r| r.0).sum();
    let flagged = results.iter().filter(|r| r.1).count();
    check(
        violations == 0,
        format!("200 sequences, {violations} violations ({flagged} flagged unreachable)"),
    )
}

fn mof_of(p: &Partition, gt: &GroundTruth) -> f64 {
    evaluate(p, gt, F1Average::Micro).unwrap().mof
}

fn criterion_4() -> Outcome {
    let plain: Vec<(f64, bool)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let spec = SynthSpec {
                k: 4 + (seed as usize % 7),
                n: 800,
                sep: 8.0,
                seed,
                ..SynthSpec::default()
            };
            let (seq, gt) = generate(&spec).unwrap();
            let out = segment(&seq, spec.k).unwrap();
            (mof_of(&out.partition, &gt), out.partition.is_temporally_contiguous())
        })
        .collect();
    let mean = plain.iter().map(|r| r.0).sum::<f64>() / 50.0;
    let contiguous = plain.iter().filter(|r| r.1).count();

    let aba: Vec<(f64, f64)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let spec = SynthSpec {
                n: 800,
                seed,
                ..SynthSpec::default()
            }
            .with_pattern("A B A");
            let (seq, gt) = generate(&spec).unwrap();
            let k = gt.distinct_labels(true);
            let tw = segment(&seq, k).unwrap().partition;
            let (_, fi) = finch(&seq, k).unwrap();
            (mof_of(&tw, &gt), mof_of(&fi, &gt))
        })
        .collect();
    let tw = aba.iter().map(|r| r.0).sum::<f64>() / 50.0;
    let fi = aba.iter().map(|r| r.1).sum::<f64>() / 50.0;
    check(
        mean >= 0.95 && contiguous >= 45 && tw - fi >= 0.15,
        format!(
            "plain MoF {mean:.4} (>= 0.95), contiguous {contiguous}/50 (>= 45); A-B-A TW-FINCH {tw:.4} vs FINCH {fi:.4}, gap {:.4} (>= 0.15)",
            tw - fi
        ),
    )
}

struct SuiteRow {
    equal: f64,
    kmeans: f64,
    finch: f64,
    tw: f64,
}

fn criterion_5() -> (Outcome, Vec<(Partition, GroundTruth)>) {
    let rows: Vec<(SuiteRow, Vec<(Partition, GroundTruth)>)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let spec = suite_spec(800, seed);
            let (seq, gt) = generate(&spec).unwrap();
            let k = gt.distinct_labels(true);
            let eq = equal_split(seq.len(), k).unwrap();
            let km = kmeans(&seq, &KmeansConfig::new(k)).unwrap();
            let (_, fi) = finch(&seq, k).unwrap();
            let tw = segment(&seq, k).unwrap().partition;
            let row = SuiteRow {
                equal: mof_of(&eq, &gt),
                kmeans: mof_of(&km, &gt),
                finch: mof_of(&fi, &gt),
                tw: mof_of(&tw, &gt),
            };
            let preds = vec![eq, km, fi, tw].into_iter().map(|p| (p, gt.clone())).collect();
            (row, preds)
        })
        .collect();
    let mean = |f: fn(&SuiteRow) -> f64| rows.iter().map(|r| f(&r.0)).sum::<f64>() / rows.len() as f64;
    let (eq, km, fi, tw) = (
        mean(|r| r.equal),
        mean(|r| r.kmeans),
        mean(|r| r.finch),
        mean(|r| r.tw),
    );
    let best_other = eq.max(km).max(fi);
    let outcome = check(
        eq <= km && km <= tw && tw - best_other >= 0.05,
        format!(
            "equal split {eq:.4} <= k-means {km:.4} <= TW-FINCH {tw:.4} (FINCH {fi:.4}); margin {:.4} (>= 0.05)",
            tw - best_other
        ),
    );
    (outcome, rows.into_iter().flat_map(|r| r.1).collect())
}

fn hand_examples() -> bool {
    const EPS: f64 = 1e-9;
    let g = GroundTruth::from_names(&["a", "a", "a", "b"], "SIL").unwrap();
    let p = Partition::new(vec![0, 0, 1, 1]).unwrap();
    let map = vec![Some(0), Some(1)];
    let mut ok = (mof(&p, &g, &map).unwrap() - 0.75).abs() < EPS
        && (iou(&p, &g, &map).unwrap() - (2.0 / 3.0 + 0.5) / 2.0).abs() < EPS
        && (f1(&p, &g, &map).unwrap() - 0.75).abs() < EPS;
    let g = GroundTruth::from_names(&["a", "a", "b", "b", "b"], "SIL").unwrap();
    let p = Partition::new(vec![0, 0, 1, 1, 1]).unwrap();
    let (mp, mr) = midpoint_hit(&segments_of(p.labels()), &g.segments(), &[Some(0), Some(1)]);
    ok &= (mp - 1.0).abs() < EPS && (mr - 1.0).abs() < EPS;
    let g = GroundTruth::from_names(&["a", "a", "b", "b"], "SIL").unwrap();
    ok &= (purity(&Partition::new(vec![0, 0, 0, 0]).unwrap(), &g).unwrap() - 0.5).abs() < EPS;
    ok
}

fn criterion_6(instances: &[(Partition, GroundTruth)]) -> Outcome {
    let purity_violations = instances
        .par_iter()
        .filter(|(p, g)| {
            let r = evaluate(p, g, F1Average::Micro).unwrap();
            r.purity + 1e-12 < r.mof
        })
        .count();

    let relabel_violations: usize = instances
        .par_iter()
        .take(20)
        .enumerate()
        .map(|(i, (p, g))| {
            let base = evaluate(p, g, F1Average::Micro).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(600 + i as u64);
            let mut bad = 0;
            for _ in 0..100 {
                let mut perm: Vec<usize> = (0..p.num_clusters()).collect();
                perm.shuffle(&mut rng);
                let q = Partition::new(p.labels().iter().map(|&l| perm[l]).collect()).unwrap();
                let r = evaluate(&q, g, F1Average::Micro).unwrap();
                let same = [
                    (r.mof, base.mof),
                    (r.iou, base.iou),
                    (r.f1, base.f1),
                    (r.midpoint_precision, base.midpoint_precision),
                    (r.midpoint_recall, base.midpoint_recall),
                    (r.purity, base.purity),
                ]
                .iter()
                .all(|(a, b)| (a - b).abs() < 1e-12);
                if !same {
                    bad += 1;
                }
            }
            bad
        })
        .sum();
    let hand = hand_examples();
    check(
        purity_violations == 0 && relabel_violations == 0 && hand,
        format!(
            "{} instances, purity < MoF in {purity_violations}; relabeling changed metrics in {relabel_violations}/2000; hand examples {}",
            instances.len(),
            if hand { "match" } else { "differ" }
        ),
    )
}

fn criterion_7() -> Outcome {
    // warm-up so the first size does not pay for page faults
    time_once(500, 64, 8, 99).unwrap();
    let mut secs = Vec::new();
    for &n in &DEFAULT_SIZES {
        let mut t: Vec<f64> = (0..3).map(|r| time_once(n, 64, 8, r).unwrap()).collect();
        t.sort_by(f64::total_cmp);
        secs.push(t[1]);
    }
    let xs: Vec<f64> = DEFAULT_SIZES.iter().map(|&n| n as f64).collect();
    let slope = log_log_slope(&xs, &secs).unwrap();
    let one = time_once(2000, 64, 8, 7).unwrap();
    let times: Vec<String> = DEFAULT_SIZES
        .iter()
        .zip(&secs)
        .map(|(n, s)| format!("{n}:{s:.3}s"))
        .collect();
    check(
        (slope - 2.0).abs() <= 0.3 && one < 1.0,
        format!(
            "slope {slope:.3} (2.0 +/- 0.3) over [{}]; 2000x64 in {one:.3}s (< 1s)",
            times.join(", ")
        ),
    )
}

/// Every output of one segment+eval+plot run, as bytes.
fn pipeline_outputs(m: &DatasetManifest, workers: usize) -> Vec<String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
    pool.install(|| {
        let mut out = Vec::new();
        for method in Method::ALL {
            let opts = SegmentOptions {
                method,
                k_policy: KPolicy::PerVideoGt,
                tau: 0.5,
                seed: 3,
            };
            let seg = segment_dataset(m, &opts).unwrap();
            out.push(serde_json::to_string(&seg).unwrap());
            let items: Vec<EvalItem> = seg
                .iter()
                .zip(&m.entries)
                .map(|(s, e)| EvalItem {
                    video_id: s.video_id.clone(),
                    activity: s.activity.clone(),
                    pred: s.partition.clone().unwrap(),
                    gt: m.load_labels(e).unwrap(),
                })
                .collect();
            for s in &seg {
                out.push(format_partition(s.partition.as_ref().unwrap()));
            }
            for per_activity in [false, true] {
                let eval_opts = EvalOptions {
                    tau: 0.5,
                    seed: 3,
                    match_per_activity: per_activity,
                    ..EvalOptions::default()
                };
                let doc = evaluate_items(&items, &eval_opts).unwrap();
                out.push(serde_json::to_string_pretty(&doc).unwrap());
                out.push(render_text(&doc));
            }
        }
        let e = &m.entries[0];
        let gt = m.load_labels(e).unwrap();
        let seq = m.load_features(e).unwrap();
        let k = gt.distinct_labels(true);
        let preds = vec![
            ("twfinch".to_string(), segment(&seq, k).unwrap().partition),
            ("kmeans".to_string(), kmeans(&seq, &KmeansConfig::new(k)).unwrap()),
        ];
        out.push(render_svg(&gt, &preds).unwrap());
        out
    })
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();
    for i in 0..6u64 {
        let spec = SynthSpec {
            k: 3 + i as usize,
            n: 300 + 50 * i as usize,
            background_frac: 0.2,
            seed: i,
            ..SynthSpec::default()
        };
        let (seq, gt) = generate(&spec).unwrap();
        let id = format!("vid{i}");
        save_features(&seq, dir.path().join(format!("{id}.bin"))).unwrap();
        save_labels(&gt, dir.path().join(format!("{id}.txt"))).unwrap();
        entries.push(ManifestEntry {
            video_id: id.clone(),
            activity: if i % 2 == 0 { "even".into() } else { "odd".into() },
            feature_path: format!("{id}.bin").into(),
            label_path: format!("{id}.txt").into(),
            k_override: None,
        });
    }
    let manifest_path = dir.path().join("manifest.json");
    save_manifest(&DatasetManifest::new(entries), &manifest_path).unwrap();
    let m = twseg::io::load_manifest(&manifest_path).unwrap();

    let a = pipeline_outputs(&m, 1);
    let b = pipeline_outputs(&m, 1);
    let c = pipeline_outputs(&m, 8);
    let differing = a.iter().zip(&b).zip(&c).filter(|((x, y), z)| x != y || x != z).count();
    check(
        differing == 0 && a.len() == b.len() && a.len() == c.len(),
        format!("{} artifacts compared across 2 runs and 1 vs 8 workers, {differing} differ", a.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    // written to the stderr handle directly so the lines show without --nocapture
    let mut report = |n: usize, outcome: Outcome| {
        let line = match outcome {
            Ok(msg) => format!("criterion {n}: PASS  {msg}"),
            Err(msg) => {
                failed.push(n);
                format!("criterion {n}: FAIL  {msg}")
            }
        };
        let _ = writeln!(std::io::stderr(), "{line}");
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    let (c5, instances) = criterion_5();
    report(5, c5);
    report(6, criterion_6(&instances));
    report(7, criterion_7());
    report(8, criterion_8());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
