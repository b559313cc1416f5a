//! File formats: feature matrices, label files, partitions and dataset
//! manifests.
//!
//! Binary feature layout (all little-endian):
//!
//! ```text
//! offset 0   8 bytes   magic "TWSEGF01"
//! offset 8   u32       rows N
//! offset 12  u32       cols d
//! offset 16  N*d f32   row-major values
//! ```
//!
//! Files ending in `.csv` are read as text instead: one frame per line, `d`
//! comma-separated reals.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureSequence, GroundTruth, Partition};

pub const FEATURE_MAGIC: &[u8; 8] = b"TWSEGF01";
const HEADER_LEN: usize = 16;

fn video_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a feature matrix; the format is chosen by extension.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, 0, "not UTF-8"))?;
        parse_csv_features(path, &text)
    } else {
        parse_binary_features(path, &bytes)
    }
}

fn parse_binary_features(path: &Path, bytes: &[u8]) -> Result<FeatureSequence> {
    if bytes.len() < FEATURE_MAGIC.len() || &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            path: path.into(),
            detail: format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
        });
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::TruncatedFile {
            path: path.into(),
            detail: "header dimensions overflow".into(),
        })?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::TruncatedFile {
            path: path.into(),
            detail: format!("{rows}x{cols} needs {expected} data bytes, found {}", body.len()),
        });
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureSequence::new(video_id_of(path), rows, cols, data)
}

fn parse_csv_features(path: &Path, text: &str) -> Result<FeatureSequence> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let start = data.len();
        for field in line.split(',') {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad number {field:?}")))?;
            data.push(v);
        }
        let width = data.len() - start;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected {c} columns, found {width}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    FeatureSequence::new(video_id_of(path), rows, cols.unwrap_or(0), data)
}

/// Writes the binary feature format.
pub fn save_features(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(HEADER_LEN + seq.as_slice().len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    for v in seq.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Converts a CSV feature file into the binary format.
pub fn convert_csv_to_binary(csv: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<()> {
    let seq = load_features(csv)?;
    save_features(&seq, out)
}

/// One label token per line; surrounding whitespace is trimmed.
pub fn load_labels(path: impl AsRef<Path>, background_label: &str) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            // allow trailing blank lines only
            if text.lines().skip(lineno).all(|l| l.trim().is_empty()) {
                break;
            }
            return Err(Error::parse(path, lineno + 1, "empty label"));
        }
        labels.push(token);
    }
    if labels.is_empty() {
        return Err(Error::parse(path, 1, "no labels"));
    }
    GroundTruth::from_names(&labels, background_label)
}

pub fn save_labels(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for name in gt.label_names() {
        out.push_str(name);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One integer per line.
pub fn format_partition(p: &Partition) -> String {
    let mut out = String::with_capacity(p.len() * 3);
    for l in p.labels() {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

pub fn save_partition(p: &Partition, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_partition(p)).map_err(|e| Error::io(path, e))
}

pub fn load_partition(path: impl AsRef<Path>) -> Result<Partition> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(
            line.parse::<usize>()
                .map_err(|_| Error::parse(path, lineno + 1, format!("not a cluster id: {line:?}")))?,
        );
    }
    if labels.is_empty() {
        return Err(Error::parse(path, 1, "no labels"));
    }
    Partition::new(labels).map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn default_background() -> String {
    "SIL".to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub activity: String,
    pub feature_path: PathBuf,
    pub label_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_override: Option<usize>,
}

/// Dataset description. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map_path: Option<PathBuf>,
    #[serde(default = "default_background")]
    pub background_label: String,
    /// Whether the background label counts toward an activity's `k`.
    #[serde(default = "default_true")]
    pub count_background_in_k: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            entries,
            label_map_path: None,
            background_label: default_background(),
            count_background_in_k: true,
            base_dir: PathBuf::new(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn feature_path(&self, e: &ManifestEntry) -> PathBuf {
        self.resolve(&e.feature_path)
    }

    pub fn label_path(&self, e: &ManifestEntry) -> PathBuf {
        self.resolve(&e.label_path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Manifest("no entries".into()));
        }
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "entry {i} ({}): duplicate video_id",
                    e.video_id
                )));
            }
            if e.k_override == Some(0) {
                return Err(Error::Manifest(format!(
                    "entry {i} ({}): k_override must be positive",
                    e.video_id
                )));
            }
            for (what, p) in [("feature_path", self.feature_path(e)), ("label_path", self.label_path(e))] {
                if !p.is_file() {
                    return Err(Error::Manifest(format!(
                        "entry {i} ({}): {what} {} not found",
                        e.video_id,
                        p.display()
                    )));
                }
            }
        }
        if let Some(m) = &self.label_map_path {
            let m = self.resolve(m);
            if !m.is_file() {
                return Err(Error::Manifest(format!("label map {} not found", m.display())));
            }
        }
        Ok(())
    }

    pub fn load_labels(&self, e: &ManifestEntry) -> Result<GroundTruth> {
        load_labels(self.label_path(e), &self.background_label)
    }

    pub fn load_features(&self, e: &ManifestEntry) -> Result<FeatureSequence> {
        load_features(self.feature_path(e))
    }

    /// Label vocabulary from the label map file, in file order.
    pub fn label_map(&self) -> Result<Option<Vec<String>>> {
        let Some(m) = &self.label_map_path else {
            return Ok(None);
        };
        let path = self.resolve(m);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut names = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next()) {
                (None, _) => continue,
                (Some(name), None) => names.push(name.to_string()),
                (Some(idx), Some(name)) => {
                    idx.parse::<usize>().map_err(|_| {
                        Error::parse(&path, lineno + 1, "expected `<index> <label>`")
                    })?;
                    names.push(name.to_string());
                }
            }
        }
        Ok(Some(names))
    }

    /// Activities in order of first appearance.
    pub fn activities(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .map(|e| e.activity.as_str())
            .filter(|a| seen.insert(*a))
            .collect()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate()?;
    Ok(m)
}

pub fn save_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Mean of `counts` rounded half-up.
pub fn rounded_mean(counts: &[usize]) -> usize {
    let sum: usize = counts.iter().sum();
    let n = counts.len();
    // floor(sum / n + 1/2) in integers
    (2 * sum + n) / (2 * n)
}

/// Per-activity `k`: rounded mean of distinct labels per video.
pub fn compute_activity_k(m: &DatasetManifest) -> Result<BTreeMap<String, usize>> {
    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for e in &m.entries {
        let gt = m.load_labels(e)?;
        counts
            .entry(e.activity.clone())
            .or_default()
            .push(gt.distinct_labels(m.count_background_in_k).max(1));
    }
    Ok(counts
        .into_iter()
        .map(|(a, c)| (a, rounded_mean(&c)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let seq = FeatureSequence::new("v", 3, 2, vec![1.0, 2.0, 3.0, 4.5, -5.0, 6.25]).unwrap();
        let bin = dir.path().join("v.bin");
        save_features(&seq, &bin).unwrap();
        let back = load_features(&bin).unwrap();
        assert_eq!(back, seq);

        let csv = dir.path().join("w.csv");
        fs::write(&csv, "1,0\n0,1\n").unwrap();
        let s = load_features(&csv).unwrap();
        assert_eq!((s.len(), s.dim()), (2, 2));
        assert_eq!(s.video_id(), "w");

        let conv = dir.path().join("w.bin");
        convert_csv_to_binary(&csv, &conv).unwrap();
        assert_eq!(load_features(&conv).unwrap().as_slice(), s.as_slice());
    }

    #[test]
    fn feature_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.bin");
        fs::write(&bad, b"XXXXXXXX\x01\0\0\0\x01\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(load_features(&bad), Err(Error::BadMagic { .. })));

        let short = dir.path().join("short.bin");
        let mut bytes = FEATURE_MAGIC.to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        fs::write(&short, bytes).unwrap();
        assert!(matches!(load_features(&short), Err(Error::TruncatedFile { .. })));

        let csv = dir.path().join("bad.csv");
        fs::write(&csv, "1,2\n3,x\n").unwrap();
        assert!(matches!(load_features(&csv), Err(Error::Parse { line: 2, .. })));

        let nan = dir.path().join("nan.csv");
        fs::write(&nan, "1,NaN\n").unwrap();
        assert!(matches!(load_features(&nan), Err(Error::NonFinite { row: 0, col: 1 })));
    }

    #[test]
    fn label_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        fs::write(&p, "SIL\npour\npour\nSIL\n").unwrap();
        let gt = load_labels(&p, "SIL").unwrap();
        assert_eq!(gt.len(), 4);
        assert_eq!(gt.background_label(), "SIL");
        assert_eq!(gt.num_background(), 2);

        fs::write(&p, "").unwrap();
        assert!(matches!(load_labels(&p, "SIL"), Err(Error::Parse { .. })));

        fs::write(&p, "pour  \n cut\t\n").unwrap();
        let gt = load_labels(&p, "SIL").unwrap();
        assert_eq!(gt.names(), &["pour".to_string(), "cut".to_string()]);
    }

    #[test]
    fn partition_files() {
        let p = Partition::new(vec![0, 0, 1]).unwrap();
        assert_eq!(format_partition(&p), "0\n0\n1\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        save_partition(&p, &path).unwrap();
        assert_eq!(load_partition(&path).unwrap(), p);
        fs::write(&path, "0\n1.5\n").unwrap();
        assert!(matches!(load_partition(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(rounded_mean(&[4, 6, 8]), 6);
        assert_eq!(rounded_mean(&[7]), 7);
        assert_eq!(rounded_mean(&[5, 6]), 6);
        assert_eq!(rounded_mean(&[5, 5, 6]), 5);
    }

    fn write_video(dir: &Path, id: &str, labels: &[&str]) -> ManifestEntry {
        let seq = FeatureSequence::new(id, labels.len(), 1, vec![1.0; labels.len()]).unwrap();
        save_features(&seq, dir.join(format!("{id}.bin"))).unwrap();
        fs::write(dir.join(format!("{id}.txt")), labels.join("\n")).unwrap();
        ManifestEntry {
            video_id: id.into(),
            activity: "coffee".into(),
            feature_path: format!("{id}.bin").into(),
            label_path: format!("{id}.txt").into(),
            k_override: None,
        }
    }

    #[test]
    fn manifest_and_activity_k() {
        let dir = tempfile::tempdir().unwrap();
        let e1 = write_video(dir.path(), "v1", &["SIL", "a", "b", "c", "SIL"]);
        let e2 = write_video(dir.path(), "v2", &["a", "b", "c", "d", "e"]);
        let m = DatasetManifest::new(vec![e1.clone(), e2]);
        let path = dir.path().join("m.json");
        save_manifest(&m, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.entries, m.entries);
        // 4 and 5 distinct labels -> 4.5 -> 5
        assert_eq!(compute_activity_k(&loaded).unwrap()["coffee"], 5);

        let mut no_bg = loaded.clone();
        no_bg.count_background_in_k = false;
        // 3 and 5 -> 4
        assert_eq!(compute_activity_k(&no_bg).unwrap()["coffee"], 4);

        let dup = DatasetManifest::new(vec![e1.clone(), e1]);
        save_manifest(&dup, &path).unwrap();
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("entry 1 (v1)"), "{err}");
    }

    #[test]
    fn manifest_missing_file_names_entry() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = write_video(dir.path(), "v1", &["a"]);
        e.label_path = "nope.txt".into();
        let path = dir.path().join("m.json");
        save_manifest(&DatasetManifest::new(vec![e]), &path).unwrap();
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("v1") && err.contains("nope.txt"), "{err}");
    }
}
