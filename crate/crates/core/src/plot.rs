//! Static SVG color bars: one row for the ground truth and one per method.
//!
//! Ground-truth labels get palette colors by label id, background is
//! white. Predicted clusters take the color of the label they are matched
//! to; clusters without a match draw from a separate fallback palette.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{hungarian_match, OverlapMatrix};
use crate::types::{segments_of, GroundTruth, Partition};

const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22",
    "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2",
    "#dbdb8d", "#9edae5", "#393b79", "#637939",
];

/// Reserved for predicted clusters with no matched label.
const FALLBACK: [&str; 6] = ["#404040", "#707070", "#a0a0a0", "#5a3d2b", "#2b4a5a", "#4a2b5a"];

const BACKGROUND: &str = "#ffffff";
const BAR_WIDTH: f64 = 1000.0;
const BAR_HEIGHT: f64 = 30.0;
const GAP: f64 = 12.0;
const LABEL_WIDTH: f64 = 140.0;

fn label_color(gt: &GroundTruth, id: usize) -> &'static str {
    if gt.background_id() == Some(id) {
        return BACKGROUND;
    }
    // skip the background slot so colors stay stable when it is present
    let rank = match gt.background_id() {
        Some(b) if id > b => id - 1,
        _ => id,
    };
    PALETTE[rank % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn bar(out: &mut String, row: usize, name: &str, labels: &[usize], color: &dyn Fn(usize) -> String) {
    let n = labels.len() as f64;
    let y = GAP + row as f64 * (BAR_HEIGHT + GAP);
    let _ = writeln!(
        out,
        r#"  <text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="14" text-anchor="end">{}</text>"#,
        LABEL_WIDTH - 8.0,
        y + BAR_HEIGHT * 0.65,
        escape(name)
    );
    for seg in segments_of(labels) {
        let x0 = LABEL_WIDTH + seg.start as f64 * BAR_WIDTH / n;
        let x1 = LABEL_WIDTH + (seg.end + 1) as f64 * BAR_WIDTH / n;
        let _ = writeln!(
            out,
            r#"  <rect x="{:.3}" y="{:.1}" width="{:.3}" height="{:.1}" fill="{}"/>"#,
            x0,
            y,
            x1 - x0,
            BAR_HEIGHT,
            color(seg.label)
        );
    }
    let _ = writeln!(
        out,
        r##"  <rect x="{LABEL_WIDTH:.1}" y="{y:.1}" width="{BAR_WIDTH:.1}" height="{BAR_HEIGHT:.1}" fill="none" stroke="#333333" stroke-width="1"/>"##
    );
}

/// Renders the ground truth followed by each named prediction.
pub fn render_svg(gt: &GroundTruth, predictions: &[(String, Partition)]) -> Result<String> {
    for (_, p) in predictions {
        if p.len() != gt.len() {
            return Err(Error::LengthMismatch {
                what: "prediction",
                left: p.len(),
                other: "ground truth",
                right: gt.len(),
            });
        }
    }
    let rows = predictions.len() + 1;
    let width = LABEL_WIDTH + BAR_WIDTH + GAP;
    let height = GAP + rows as f64 * (BAR_HEIGHT + GAP);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r##"  <rect width="100%" height="100%" fill="#ffffff"/>"##);
    bar(&mut out, 0, "ground truth", gt.ids(), &|l| label_color(gt, l).to_string());
    for (row, (name, p)) in predictions.iter().enumerate() {
        let overlap = OverlapMatrix::from_labels(p, gt)?;
        let mapping = hungarian_match(&overlap);
        let mut fallback = vec![None; p.num_clusters()];
        let mut next = 0;
        for (c, m) in mapping.iter().enumerate() {
            if m.is_none() {
                fallback[c] = Some(FALLBACK[next % FALLBACK.len()]);
                next += 1;
            }
        }
        let color = |c: usize| -> String {
            match mapping[c] {
                Some(g) => label_color(gt, g).to_string(),
                None => fallback[c].expect("assigned").to_string(),
            }
        };
        bar(&mut out, row + 1, name, p.labels(), &color);
    }
    out.push_str("</svg>\n");
    Ok(out)
}
