//! Human-readable renderings of results: fixed-width text tables, SVG
//! scatter plots, and the JSON bundle they are derived from.
//!
//! The JSON bundle is the source of truth; every number in the text tables
//! and plots is a rounded view of a bundle value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::{AuditReport, BiasLabel, BiasShare, ScatterPoint};
use crate::captions::{ErrorReport, WinReport};
use crate::corpus::Category;
use crate::correlation::CorrelationRow;
use crate::error::Result;

/// Marker colors by label.
pub const MAN_BIASED_COLOR: &str = "#1f77b4";
pub const WOMAN_BIASED_COLOR: &str = "#2ca02c";
pub const NEUTRAL_COLOR: &str = "#ff7f0e";

/// Points farther than this from the diagonal get a text label.
pub const LABEL_DISTANCE: f64 = 0.1;

pub fn label_color(label: BiasLabel) -> &'static str {
    match label {
        BiasLabel::ManBiased => MAN_BIASED_COLOR,
        BiasLabel::WomanBiased => WOMAN_BIASED_COLOR,
        BiasLabel::Neutral => NEUTRAL_COLOR,
    }
}

/// Gender-error report of one named system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemErrors {
    pub system: String,
    pub report: ErrorReport,
}

/// Metric comparison of two named systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemComparison {
    pub metric: String,
    pub system_a: String,
    pub system_b: String,
    pub report: WinReport,
}

/// Everything a report directory is rendered from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<SystemErrors>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<SystemComparison>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlation: Vec<CorrelationRow>,
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn share_cell(share: Option<&BiasShare>) -> String {
    share.map_or_else(|| "-".to_string(), |s| format!("{:.2}", s.percent))
}

/// Renders all sections present in the bundle as fixed-width text.
pub fn render_tables(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    if let Some(audit) = &bundle.audit {
        render_audit(&mut out, audit);
    }
    if !bundle.errors.is_empty() {
        render_errors(&mut out, &bundle.errors);
    }
    if !bundle.comparisons.is_empty() {
        render_comparisons(&mut out, &bundle.comparisons);
    }
    if !bundle.correlation.is_empty() {
        render_correlation(&mut out, &bundle.correlation);
    }
    out
}

fn render_audit(out: &mut String, audit: &AuditReport) {
    let _ = writeln!(out, "Biased concepts (%)");
    let _ = writeln!(
        out,
        "{:<16} {:>11} {:>11} {:>11} {:>11}",
        "metric", "profession", "activity", "object", "overall"
    );
    for m in &audit.metrics {
        let s = &m.summary;
        let _ = writeln!(
            out,
            "{:<16} {:>11} {:>11} {:>11} {:>11}",
            m.metric.label(),
            share_cell(s.per_category.get(&Category::Profession)),
            share_cell(s.per_category.get(&Category::Activity)),
            share_cell(s.per_category.get(&Category::Object)),
            format!("{:.2}", s.overall.percent),
        );
    }
    if let Some(first) = audit.metrics.first() {
        if !first.summary.excluded.is_empty() {
            let _ = writeln!(out, "excluded concepts: {}", first.summary.excluded.join(", "));
        }
    }
    for m in &audit.metrics {
        let _ = writeln!(out);
        let _ = writeln!(out, "{} per-concept accuracy (alpha {})", m.metric.label(), m.alpha);
        let _ = writeln!(
            out,
            "{:<11} {:<16} {:>8} {:>8} {:>9} {:>6} {:>6}  label",
            "category", "concept", "man %", "woman %", "p", "n_man", "n_wom"
        );
        for v in &m.verdicts {
            let _ = writeln!(
                out,
                "{:<11} {:<16} {:>8} {:>8} {:>9.4} {:>6} {:>6}  {}",
                v.category.as_str(),
                v.concept,
                pct(v.acc_man),
                pct(v.acc_woman),
                v.p_value,
                v.n_man,
                v.n_woman,
                v.label
            );
        }
    }
    out.push('\n');
}

fn render_errors(out: &mut String, errors: &[SystemErrors]) {
    let _ = writeln!(out, "Gender errors");
    let _ = writeln!(
        out,
        "{:<16} {:>10} {:>18} {:>9} {:>8} {:>6} {:>12}",
        "system", "error %", "CI %", "gendered", "neutral", "mixed", "biased %"
    );
    for e in errors {
        let r = &e.report;
        let rate = r.rate.map_or_else(|| "n/a".to_string(), pct);
        let ci = r
            .ci
            .map_or_else(|| "n/a".to_string(), |(lo, hi)| format!("[{}, {}]", pct(lo), pct(hi)));
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>18} {:>9} {:>8} {:>6} {:>12.2}",
            e.system,
            rate,
            ci,
            r.gendered,
            r.neutral,
            r.mixed,
            r.biased_concept_percent()
        );
    }
    out.push('\n');
}

fn render_comparisons(out: &mut String, comparisons: &[SystemComparison]) {
    for c in comparisons {
        let _ = writeln!(out, "{} comparison: {} vs {}", c.metric, c.system_a, c.system_b);
        let _ = writeln!(
            out,
            "{:<11} {:>6} {:>10} {:>10} {:>8} {:>8}",
            "slice", "n", "value A", "value B", "win A %", "win B %"
        );
        let rows = std::iter::once(("overall".to_string(), &c.report.overall))
            .chain(c.report.per_category.iter().map(|(k, v)| (k.as_str().to_string(), v)));
        for (name, w) in rows {
            let _ = writeln!(
                out,
                "{:<11} {:>6} {:>10.4} {:>10.4} {:>8.2} {:>8.2}",
                name, w.n, w.value_a, w.value_b, w.win_a, w.win_b
            );
        }
        out.push('\n');
    }
}

fn render_correlation(out: &mut String, rows: &[CorrelationRow]) {
    let _ = writeln!(out, "Correlation with human judgments (tau-c)");
    let _ = writeln!(out, "{:<24} {:>6} {:>9}", "metric", "n", "tau_c");
    for r in rows {
        let _ = writeln!(out, "{:<24} {:>6} {:>9.3}", r.label, r.n, r.tau_c);
    }
    out.push('\n');
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PLOT: f64 = SIZE - 2.0 * MARGIN;

fn px(v: f64) -> f64 {
    MARGIN + v.clamp(0.0, 1.0) * PLOT
}

fn py(v: f64) -> f64 {
    SIZE - MARGIN - v.clamp(0.0, 1.0) * PLOT
}

/// Man accuracy (x) against woman accuracy (y) on the unit square, with the
/// diagonal of equal accuracy.
///
/// ```
/// use capbias::audit::{BiasLabel, ScatterPoint};
/// use capbias::corpus::Category;
/// use capbias::report::render_scatter;
///
/// let svg = render_scatter(
///     &[ScatterPoint {
///         concept: "washing".into(),
///         category: Category::Activity,
///         acc_man: 0.2,
///         acc_woman: 0.9,
///         label: BiasLabel::WomanBiased,
///     }],
///     "activity / CLIPScore",
/// );
/// assert!(svg.contains("#2ca02c") && svg.contains(">washing<"));
/// ```
pub fn render_scatter(points: &[ScatterPoint], title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>{}</title>", xml_escape(title));
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        SIZE / 2.0,
        MARGIN / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect class="axes" x="{MARGIN}" y="{MARGIN}" width="{PLOT}" height="{PLOT}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.2}</text>"#,
            px(v),
            SIZE - MARGIN + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            MARGIN - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">man accuracy</text>"#,
        SIZE / 2.0,
        SIZE - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">woman accuracy</text>"#,
        SIZE / 2.0
    );
    for p in points {
        let (x, y) = (px(p.acc_man), py(p.acc_woman));
        let _ = writeln!(
            s,
            r#"<circle class="point {}" cx="{x:.2}" cy="{y:.2}" r="4" fill="{}" data-concept="{}"/>"#,
            p.label,
            label_color(p.label),
            xml_escape(&p.concept)
        );
        if (p.acc_woman - p.acc_man).abs() / std::f64::consts::SQRT_2 > LABEL_DISTANCE {
            let _ = writeln!(
                s,
                r#"<text class="label" x="{:.2}" y="{:.2}">{}</text>"#,
                x + 6.0,
                y - 6.0,
                xml_escape(&p.concept)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `report.json`, `tables.txt` and one scatter plot per (category,
/// metric) into `dir`, returning the written paths in a fixed order.
pub fn write_report(dir: &Path, bundle: &ReportBundle) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(bundle)?;
    json.push('\n');
    std::fs::write(&json_path, json)?;
    written.push(json_path);
    let tables_path = dir.join("tables.txt");
    std::fs::write(&tables_path, render_tables(bundle))?;
    written.push(tables_path);
    if let Some(audit) = &bundle.audit {
        for m in &audit.metrics {
            for category in Category::ALL {
                let points: Vec<ScatterPoint> = m
                    .summary
                    .scatter
                    .iter()
                    .filter(|p| p.category == category)
                    .cloned()
                    .collect();
                if points.is_empty() {
                    continue;
                }
                let path = dir.join(format!("scatter_{}_{}.svg", category.as_str(), m.metric.as_str()));
                let title = format!("{} / {}", category.as_str(), m.metric.label());
                std::fs::write(&path, render_scatter(&points, &title))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
