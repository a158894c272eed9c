//! Report emitters: CSV, structured text, SVG heatmaps, and annotated
//! erasure renderings.
//!
//! Every artifact embeds a metadata block (tool version, resolved
//! configuration, seed, sign-convention note) and is byte-deterministic:
//! no timestamps, no hash-order iteration, fixed float formatting.

use std::fmt::Write as _;
use std::path::Path;

use crate::erasure::ImportanceReport;
use crate::error::{Error, Result};

/// Explains the score orientation in every emitted artifact.
pub const SIGN_CONVENTION_NOTE: &str =
    "positive importance = erasure increases the correct-label NLL (the model relied on it); \
     negative = erasure improves the prediction";

pub const TOOL_NAME: &str = "erasure-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance block stamped into every output file.
#[derive(Clone, Debug, Default)]
pub struct OutputMeta {
    pub command: String,
    pub seed: Option<u64>,
    /// Resolved configuration, echoed as `key value` pairs.
    pub config: Vec<(String, String)>,
}

impl OutputMeta {
    pub fn new(command: impl Into<String>) -> Self {
        OutputMeta {
            command: command.into(),
            seed: None,
            config: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_config(mut self, config: Vec<(String, String)>) -> Self {
        self.config = config;
        self
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("tool: {TOOL_NAME} {TOOL_VERSION}"),
            format!("command: {}", self.command),
        ];
        if let Some(seed) = self.seed {
            out.push(format!("seed: {seed}"));
        }
        for (k, v) in &self.config {
            out.push(format!("config: {k} {v}"));
        }
        out.push(format!("sign-convention: {SIGN_CONVENTION_NOTE}"));
        out
    }

    /// The metadata lines with a per-line prefix (`"# "` for CSV/text,
    /// empty inside an XML comment).
    pub fn comment_block(&self, prefix: &str) -> String {
        let mut s = String::new();
        for line in self.lines() {
            s.push_str(prefix);
            s.push_str(&line);
            s.push('\n');
        }
        s
    }
}

/// Nine significant digits, portable formatting.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content.as_bytes())?;
    Ok(())
}

/// Summary CSV: one row per erasure target.
pub fn write_importance_csv(
    path: &Path,
    reports: &[ImportanceReport],
    meta: &OutputMeta,
) -> Result<()> {
    let mut out = meta.comment_block("# ");
    out.push_str("target,I,n,skipped\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{}",
            r.target,
            fmt9(r.importance),
            r.n_examples,
            r.skipped_examples
        )
        .unwrap();
    }
    write_file(path, &out)
}

/// Detail CSV: one row per (target, example) contribution.
pub fn write_detail_csv(
    path: &Path,
    reports: &[ImportanceReport],
    meta: &OutputMeta,
) -> Result<()> {
    let mut out = meta.comment_block("# ");
    out.push_str("target,example_id,s,s_erased,contribution\n");
    for r in reports {
        for e in &r.per_example {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.target,
                e.id,
                fmt9(e.s),
                fmt9(e.s_erased),
                fmt9(e.contribution)
            )
            .unwrap();
        }
    }
    write_file(path, &out)
}

/// Plain structured-text report of the same content as the summary CSV.
pub fn write_report_text(
    path: &Path,
    title: &str,
    reports: &[ImportanceReport],
    meta: &OutputMeta,
) -> Result<()> {
    let mut out = meta.comment_block("# ");
    writeln!(out, "{title}").unwrap();
    for r in reports {
        writeln!(
            out,
            "{}  I={}  n={}  skipped={}",
            r.target,
            fmt9(r.importance),
            r.n_examples,
            r.skipped_examples
        )
        .unwrap();
    }
    write_file(path, &out)
}

/// Histogram CSV with explicit clamp buckets.
pub fn write_histogram_csv(
    path: &Path,
    edges: &[f64],
    counts: &[usize],
    meta: &OutputMeta,
) -> Result<()> {
    if counts.len() != edges.len() + 1 {
        return Err(Error::Contract(format!(
            "{} counts for {} edges",
            counts.len(),
            edges.len()
        )));
    }
    let mut out = meta.comment_block("# ");
    out.push_str("bucket,lo,hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        let lo = if i == 0 {
            "-inf".to_string()
        } else {
            fmt9(edges[i - 1])
        };
        let hi = if i == edges.len() {
            "+inf".to_string()
        } else {
            fmt9(edges[i])
        };
        writeln!(out, "{i},{lo},{hi},{c}").unwrap();
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// Heatmaps

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    /// `sign(x) * ln(1 + |x| / tau)`: keeps sign and order, compresses
    /// magnitude so small scores stay visible next to dominant ones.
    SignedLog,
}

/// Default knee of the signed-log projection.
pub const SIGNED_LOG_TAU: f64 = 1e-3;

pub fn signed_log(x: f64, tau: f64) -> f64 {
    x.signum() * (1.0 + x.abs() / tau).ln()
}

/// Matrix of scores with row/column labels, ready to render.
#[derive(Clone, Debug)]
pub struct HeatmapData {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub scale: Scale,
}

impl HeatmapData {
    pub fn validate(&self) -> Result<()> {
        if self.matrix.is_empty() || self.matrix.iter().any(|r| r.is_empty()) {
            return Err(Error::Contract("heatmap matrix must be non-empty".into()));
        }
        if self.matrix.len() != self.row_labels.len() {
            return Err(Error::Contract(format!(
                "{} matrix rows, {} row labels",
                self.matrix.len(),
                self.row_labels.len()
            )));
        }
        for row in &self.matrix {
            if row.len() != self.col_labels.len() {
                return Err(Error::Contract(format!(
                    "matrix row of {} values, {} column labels",
                    row.len(),
                    self.col_labels.len()
                )));
            }
        }
        Ok(())
    }
}

const BLUE: (f64, f64, f64) = (33.0, 102.0, 172.0);
const WHITE: (f64, f64, f64) = (247.0, 247.0, 247.0);
const RED: (f64, f64, f64) = (178.0, 24.0, 43.0);

/// Diverging blue-white-red map over `t` in [-1, 1], white at zero.
fn diverging_color(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (from, to, a) = if t < 0.0 {
        (WHITE, BLUE, -t)
    } else {
        (WHITE, RED, t)
    };
    let channel = |f: f64, g: f64| -> u8 { (f + (g - f) * a).round() as u8 };
    format!(
        "#{:02x}{:02x}{:02x}",
        channel(from.0, to.0),
        channel(from.1, to.1),
        channel(from.2, to.2)
    )
}

const CELL: usize = 16;

/// Writes a standalone SVG heatmap: one `class="cell"` rect per matrix
/// entry in row-major order, a diverging color map centered at zero, and
/// an embedded legend. `bounds` overrides the symmetric default of
/// plus/minus the largest transformed magnitude.
pub fn emit_svg_heatmap(
    data: &HeatmapData,
    path: &Path,
    meta: &OutputMeta,
    bounds: Option<(f64, f64)>,
) -> Result<()> {
    data.validate()?;
    let transform = |v: f64| match data.scale {
        Scale::Linear => v,
        Scale::SignedLog => signed_log(v, SIGNED_LOG_TAU),
    };
    let transformed: Vec<Vec<f64>> = data
        .matrix
        .iter()
        .map(|row| row.iter().map(|v| transform(*v)).collect())
        .collect();
    let (lo, hi) = match bounds {
        Some((lo, hi)) => {
            if lo >= hi {
                return Err(Error::Config(format!("bad color bounds ({lo}, {hi})")));
            }
            (lo, hi)
        }
        None => {
            let max_abs = transformed
                .iter()
                .flatten()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let m = if max_abs == 0.0 { 1.0 } else { max_abs };
            (-m, m)
        }
    };
    // Map a transformed value into [-1, 1] with 0 fixed at the neutral
    // color even for asymmetric bounds.
    let unit = |v: f64| -> f64 {
        if v >= 0.0 {
            if hi <= 0.0 {
                0.0
            } else {
                (v / hi).clamp(0.0, 1.0)
            }
        } else if lo >= 0.0 {
            0.0
        } else {
            -(v / lo).clamp(0.0, 1.0)
        }
    };

    let rows = data.row_labels.len();
    let cols = data.col_labels.len();
    let row_label_px = 8 * data.row_labels.iter().map(|l| l.len()).max().unwrap_or(1);
    let left = 12 + row_label_px;
    let top = 28;
    let legend_w = 70;
    let width = left + cols * CELL + 16 + legend_w;
    let height = top + rows * CELL + 40;

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"11\">"
    )
    .unwrap();
    svg.push_str("<!--\n");
    svg.push_str(&meta.comment_block(""));
    svg.push_str("-->\n");

    // Column labels, thinned so at most ~25 are printed.
    let step = cols.div_ceil(25).max(1);
    for (c, label) in data.col_labels.iter().enumerate() {
        if c % step == 0 {
            writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                left + c * CELL + CELL / 2,
                top - 8,
                xml_escape(label)
            )
            .unwrap();
        }
    }
    for (r, label) in data.row_labels.iter().enumerate() {
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            left - 6,
            top + r * CELL + CELL / 2 + 4,
            xml_escape(label)
        )
        .unwrap();
    }
    for (r, row) in transformed.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let color = diverging_color(unit(*v));
            writeln!(
                svg,
                "<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{color}\"><title>{} / {}: {}</title></rect>",
                left + c * CELL,
                top + r * CELL,
                xml_escape(&data.row_labels[r]),
                xml_escape(&data.col_labels[c]),
                fmt9(data.matrix[r][c])
            )
            .unwrap();
        }
    }

    // Legend: vertical gradient from hi (top) to lo (bottom).
    let lx = left + cols * CELL + 16;
    let lsteps = 24usize;
    let lh = (rows * CELL).max(48);
    for i in 0..lsteps {
        let t = 1.0 - 2.0 * (i as f64 + 0.5) / lsteps as f64; // 1 -> -1
        let v = if t >= 0.0 { hi * t } else { -lo * t };
        let color = diverging_color(unit(v));
        writeln!(
            svg,
            "<rect class=\"legend\" x=\"{lx}\" y=\"{}\" width=\"14\" height=\"{}\" fill=\"{color}\"/>",
            top + i * lh / lsteps,
            lh.div_ceil(lsteps)
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\">{}</text>",
        lx + 18,
        top + 8,
        fmt9(hi)
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\">{}</text>",
        lx + 18,
        top + lh / 2 + 4,
        fmt9((hi + lo) / 2.0)
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\">{}</text>",
        lx + 18,
        top + lh,
        fmt9(lo)
    )
    .unwrap();
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Writes a heatmap matrix as CSV (first column holds row labels).
pub fn write_matrix_csv(path: &Path, data: &HeatmapData, meta: &OutputMeta) -> Result<()> {
    data.validate()?;
    let mut out = meta.comment_block("# ");
    out.push_str("row");
    for c in &data.col_labels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (r, row) in data.matrix.iter().enumerate() {
        out.push_str(&data.row_labels[r]);
        for v in row {
            out.push(',');
            out.push_str(&fmt9(*v));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Reads a matrix CSV written by [`write_matrix_csv`] (metadata comment
/// lines are skipped). The scale is the caller's rendering choice.
pub fn read_matrix_csv(path: &Path, scale: Scale) -> Result<HeatmapData> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut row_labels = Vec::new();
    let mut col_labels: Option<Vec<String>> = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let first = fields.next().unwrap_or_default().to_string();
        let rest: Vec<&str> = fields.collect();
        match &col_labels {
            None => {
                col_labels = Some(rest.iter().map(|s| s.to_string()).collect());
            }
            Some(cols) => {
                if rest.len() != cols.len() {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("{} fields, expected {}", rest.len(), cols.len()),
                    });
                }
                let values: Vec<f64> = rest
                    .iter()
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse {
                        line: lineno + 1,
                        message: e.to_string(),
                    })?;
                row_labels.push(first);
                rows.push(values);
            }
        }
    }
    let data = HeatmapData {
        row_labels,
        col_labels: col_labels.unwrap_or_default(),
        matrix: rows,
        scale,
    };
    data.validate()?;
    Ok(data)
}

// ---------------------------------------------------------------------------
// Erasure renderings

/// Plain-text rendering with removed tokens bracketed.
pub fn render_erasure_text(
    tokens: &[String],
    removed: &[usize],
    label_before: &str,
    label_after: &str,
) -> String {
    let mut s = format!("label: {label_before} -> {label_after}\n");
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        if removed.contains(&i) {
            s.push_str("[[");
            s.push_str(t);
            s.push_str("]]");
        } else {
            s.push_str(t);
        }
    }
    s.push('\n');
    s
}

/// One erasure outcome, ready for the record writer and SVG renderer.
#[derive(Clone, Debug)]
pub struct ErasureRecord {
    pub example_id: String,
    pub tokens: Vec<String>,
    pub removed: Vec<usize>,
    pub label_before: String,
    pub label_after: String,
    pub reward: f64,
}

/// Structured-text records of erasure outcomes, one block per example.
pub fn write_erasure_records(
    path: &Path,
    records: &[ErasureRecord],
    meta: &OutputMeta,
) -> Result<()> {
    let mut out = meta.comment_block("# ");
    for r in records {
        out.push_str("[record]\n");
        writeln!(out, "example {}", r.example_id).unwrap();
        writeln!(out, "label_before {}", r.label_before).unwrap();
        writeln!(out, "label_after {}", r.label_after).unwrap();
        let idx: Vec<String> = r.removed.iter().map(|i| i.to_string()).collect();
        writeln!(out, "removed_indices {}", idx.join(" ")).unwrap();
        let toks: Vec<&str> = r.removed.iter().map(|i| r.tokens[*i].as_str()).collect();
        writeln!(out, "removed_tokens {}", toks.join(" ")).unwrap();
        writeln!(out, "reward {}", fmt9(r.reward)).unwrap();
        writeln!(out, "size {}", r.removed.len()).unwrap();
        out.push_str(&render_erasure_text(
            &r.tokens,
            &r.removed,
            &r.label_before,
            &r.label_after,
        ));
        out.push('\n');
    }
    write_file(path, &out)
}

/// SVG rendering of erasure records: removed tokens are highlighted and
/// struck through.
pub fn render_erasure_svg(path: &Path, records: &[ErasureRecord], meta: &OutputMeta) -> Result<()> {
    const CHAR_W: usize = 8;
    const LINE_H: usize = 20;
    let mut lines: Vec<String> = Vec::new(); // svg fragments per record
    let mut max_px = 0usize;
    let mut y = 30usize;
    for r in records {
        let mut frags = String::new();
        writeln!(
            frags,
            "<text x=\"10\" y=\"{y}\" fill=\"#444444\">{}: {} -&gt; {}</text>",
            xml_escape(&r.example_id),
            xml_escape(&r.label_before),
            xml_escape(&r.label_after)
        )
        .unwrap();
        y += LINE_H;
        let mut x = 10usize;
        let mut body = String::new();
        for (i, t) in r.tokens.iter().enumerate() {
            let w = t.chars().count() * CHAR_W;
            if r.removed.contains(&i) {
                writeln!(
                    body,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#f4c7c3\"/>",
                    x - 2,
                    y - 14,
                    w + 4,
                    18
                )
                .unwrap();
                writeln!(
                    body,
                    "<text x=\"{x}\" y=\"{y}\" fill=\"#b2182b\" text-decoration=\"line-through\">{}</text>",
                    xml_escape(t)
                )
                .unwrap();
            } else {
                writeln!(body, "<text x=\"{x}\" y=\"{y}\">{}</text>", xml_escape(t)).unwrap();
            }
            x += w + CHAR_W;
        }
        max_px = max_px.max(x);
        y += LINE_H + 8;
        frags.push_str(&body);
        lines.push(frags);
    }
    let width = max_px + 20;
    let height = y + 10;
    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"13\">"
    )
    .unwrap();
    svg.push_str("<!--\n");
    svg.push_str(&meta.comment_block(""));
    svg.push_str("-->\n");
    for l in lines {
        svg.push_str(&l);
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}
