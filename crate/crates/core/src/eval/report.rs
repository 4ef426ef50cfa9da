//! Report files: cell tables, degeneration table, SVG heatmaps and the
//! edge-existence line chart, and a run summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{AccuracyCell, Degeneration};
use crate::encoding::Encoding;
use crate::tasks::{CellKey, Placement, TaskKind};
use crate::tokens::BucketLabel;

pub const REPORT_FORMAT_VERSION: &str = "report-v1";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no cells to report")]
    Empty,
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), ReportError> {
    fs::write(path, bytes).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Serialize)]
struct CellRow<'a> {
    task: &'a str,
    encoding: &'a str,
    cell: String,
    n: usize,
    correct: usize,
    accuracy: String,
    stddev: String,
    degeneration_rate: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    format: &'static str,
    cells: usize,
    instances: usize,
    degeneration: BTreeMap<String, CorpusDegeneration>,
    metadata: &'a BTreeMap<String, String>,
}

#[derive(Serialize)]
struct CorpusDegeneration {
    n: usize,
    rate: f64,
    by_class: BTreeMap<Degeneration, usize>,
}

/// Cell table as comma-separated text with fixed two-decimal percentages.
pub fn cells_csv(cells: &[AccuracyCell]) -> Result<Vec<u8>, csv::Error> {
    let mut table = csv::Writer::from_writer(Vec::new());
    for c in cells {
        table.serialize(CellRow {
            task: c.task.as_str(),
            encoding: c.encoding.as_str(),
            cell: c.cell.to_string(),
            n: c.n,
            correct: c.correct,
            accuracy: format!("{:.2}", c.accuracy),
            stddev: format!("{:.2}", c.stddev),
            degeneration_rate: format!("{:.2}", c.degeneration_rate),
        })?;
    }
    table.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// One JSON object per cell per line.
pub fn cells_jsonl(cells: &[AccuracyCell]) -> String {
    cells
        .iter()
        .map(|c| serde_json::to_string(c).expect("cell serializes") + "\n")
        .collect()
}

/// Writes every report file into `dir` and returns the written file names.
pub fn emit_report(
    cells: &[AccuracyCell],
    metadata: &BTreeMap<String, String>,
    dir: &Path,
) -> Result<Vec<String>, ReportError> {
    if cells.is_empty() {
        return Err(ReportError::Empty);
    }
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();

    write(&dir.join("cells.csv"), cells_csv(cells)?)?;
    write(&dir.join("cells.jsonl"), cells_jsonl(cells))?;
    written.extend(["cells.csv".to_string(), "cells.jsonl".to_string()]);

    let mut degen = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["task".to_string(), "encoding".into(), "cell".into(), "n".into()];
    header.extend(Degeneration::DEGENERATE.iter().map(|d| d.as_str().to_string()));
    header.push("rate".into());
    degen.write_record(&header)?;
    let mut corpus: BTreeMap<String, CorpusDegeneration> = BTreeMap::new();
    for c in cells {
        let mut record = vec![c.task.to_string(), c.encoding.to_string(), c.cell.to_string(), c.n.to_string()];
        record.extend(Degeneration::DEGENERATE.iter().map(|d| c.degenerate.get(d).copied().unwrap_or(0).to_string()));
        record.push(format!("{:.2}", c.degeneration_rate));
        degen.write_record(&record)?;
        let entry = corpus.entry(format!("{}/{}", c.task, c.encoding)).or_insert(CorpusDegeneration {
            n: 0,
            rate: 0.0,
            by_class: Degeneration::DEGENERATE.iter().map(|&d| (d, 0)).collect(),
        });
        entry.n += c.n;
        for (d, count) in &c.degenerate {
            *entry.by_class.entry(*d).or_default() += count;
        }
    }
    for entry in corpus.values_mut() {
        entry.rate = 100.0 * entry.by_class.values().sum::<usize>() as f64 / entry.n.max(1) as f64;
    }
    write(&dir.join("degeneration.csv"), degen.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)?;
    written.push("degeneration.csv".into());

    let mut groups: BTreeMap<(TaskKind, Encoding), Vec<&AccuracyCell>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.task, c.encoding)).or_default().push(c);
    }
    for ((task, encoding), group) in &groups {
        if let Some(svg) = heatmap_svg(*task, *encoding, group) {
            let name = format!("heatmap-{task}-{encoding}.svg");
            write(&dir.join(&name), svg)?;
            written.push(name);
        }
    }
    let edge: Vec<&AccuracyCell> = cells.iter().filter(|c| c.task == TaskKind::EdgeExistence).collect();
    if !edge.is_empty() {
        write(&dir.join("lineplot-edge_existence.svg"), line_chart_svg(&edge))?;
        written.push("lineplot-edge_existence.svg".into());
    }

    let summary = Summary {
        format: REPORT_FORMAT_VERSION,
        cells: cells.len(),
        instances: cells.iter().map(|c| c.n).sum(),
        degeneration: corpus,
        metadata,
    };
    write(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    written.push("summary.json".into());
    Ok(written)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// White at 0% to a saturated blue at 100%.
fn shade(accuracy: f64) -> String {
    let t = (accuracy / 100.0).clamp(0.0, 1.0);
    let channel = |full: f64| (255.0 + (full - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", channel(33.0), channel(102.0), channel(172.0))
}

/// 3x3 annotated heatmap for grid or bucket cells; `None` for placements.
pub fn heatmap_svg(task: TaskKind, encoding: Encoding, cells: &[&AccuracyCell]) -> Option<String> {
    let (rows, cols, row_title, col_title): (Vec<String>, Vec<String>, &str, &str) = match cells.first()?.cell {
        CellKey::Placement { .. } => return None,
        CellKey::Grid { .. } => (
            (0..3).map(|p| p.to_string()).collect(),
            (3..6).map(|p| p.to_string()).collect(),
            "p1",
            "p2",
        ),
        CellKey::Buckets { .. } => (
            BucketLabel::ALL.iter().map(|b| b.to_string()).collect(),
            BucketLabel::ALL.iter().map(|b| b.to_string()).collect(),
            "distance 1",
            "distance 2",
        ),
    };
    let lookup = |r: usize, c: usize| {
        cells.iter().find(|cell| match cell.cell {
            CellKey::Grid { p1, p2 } => p1 as usize == r && p2 as usize == c + 3,
            CellKey::Buckets { first, second } => first == BucketLabel::ALL[r] && second == BucketLabel::ALL[c],
            CellKey::Placement { .. } => false,
        })
    };
    let (size, left, top) = (110.0, 90.0, 60.0);
    let width = left + size * 3.0 + 20.0;
    let height = top + size * 3.0 + 50.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{} ({})</text>"#,
        left + size * 1.5,
        escape(task.as_str()),
        escape(encoding.as_str())
    );
    for (r, row) in rows.iter().enumerate() {
        let y = top + size * r as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + size / 2.0 + 4.0,
            escape(row)
        );
        for (c, _) in cols.iter().enumerate() {
            let x = left + size * c as f64;
            match lookup(r, c) {
                Some(cell) => {
                    let text_color = if cell.accuracy > 55.0 { "#ffffff" } else { "#000000" };
                    let _ = writeln!(
                        svg,
                        r##"<rect x="{x:.1}" y="{y:.1}" width="{size:.1}" height="{size:.1}" fill="{}" stroke="#444444"/>"##,
                        shade(cell.accuracy)
                    );
                    let _ = writeln!(
                        svg,
                        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{text_color}">{:.1} ± {:.1}</text>"#,
                        x + size / 2.0,
                        y + size / 2.0 + 4.0,
                        cell.accuracy,
                        cell.stddev
                    );
                }
                None => {
                    let _ = writeln!(
                        svg,
                        r##"<rect x="{x:.1}" y="{y:.1}" width="{size:.1}" height="{size:.1}" fill="#eeeeee" stroke="#444444"/>"##
                    );
                }
            }
        }
    }
    for (c, col) in cols.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            left + size * c as f64 + size / 2.0,
            top + size * 3.0 + 18.0,
            escape(col)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + size * 1.5,
        top + size * 3.0 + 40.0,
        escape(col_title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{}</text>"#,
        top + size * 1.5,
        top + size * 1.5,
        escape(row_title)
    );
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Accuracy against placement, one series per encoding.
pub fn line_chart_svg(cells: &[&AccuracyCell]) -> String {
    const COLORS: [&str; 3] = ["#1b9e77", "#d95f02", "#7570b3"];
    let (left, top, plot_w, plot_h) = (60.0, 40.0, 360.0, 240.0);
    let x_of = |i: usize| left + plot_w * (0.1 + 0.4 * i as f64);
    let y_of = |acc: f64| top + plot_h * (1.0 - acc.clamp(0.0, 100.0) / 100.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="13">"#,
        left + plot_w + 140.0,
        top + plot_h + 60.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">edge_existence accuracy by placement</text>"#,
        left + plot_w / 2.0
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#444444"/>"##
    );
    for tick in (0..=100).step_by(20) {
        let y = y_of(tick as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"##,
            left + plot_w,
            left - 6.0,
            y + 4.0
        );
    }
    for (i, p) in Placement::ALL.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x_of(i),
            top + plot_h + 20.0,
            p.as_str()
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">accuracy (%)</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    for (series, encoding) in Encoding::ALL.iter().enumerate() {
        let points: Vec<(f64, f64, f64)> = Placement::ALL
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                cells
                    .iter()
                    .find(|c| c.encoding == *encoding && c.cell == CellKey::Placement { placement: *p })
                    .map(|c| (x_of(i), y_of(c.accuracy), c.stddev))
            })
            .collect();
        if points.is_empty() {
            continue;
        }
        let color = COLORS[series];
        let path: Vec<String> = points.iter().map(|(x, y, _)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for (x, y, sd) in &points {
            let spread = plot_h * sd / 100.0;
            let _ = writeln!(
                svg,
                r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="{color}"/><line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}"/>"#,
                y - spread,
                y + spread
            );
        }
        let ly = top + 20.0 * series as f64 + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + plot_w + 12.0,
            left + plot_w + 32.0,
            left + plot_w + 38.0,
            ly + 4.0,
            encoding.as_str()
        );
    }
    svg.push_str("</svg>\n");
    svg
}
