//! Report serialization: versioned JSON for round-trips and tooling, CSV for
//! tables. CSV floats are rendered with 4 decimals; JSON keeps full precision
//! so that summaries stay exactly recomputable from the rows. All files are
//! written atomically (temp + rename).

use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::EvaluationReport;
use crate::semantic::format_drop_pct;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidInput(format!(
                "unknown report format `{other}` (expected csv or json)"
            ))),
        }
    }
}

/// Writes bytes via a sibling temp file and an atomic rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io_at(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io_at(path, e))
}

/// Serializes a report to the given path in the chosen format.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let bytes = match format {
        ReportFormat::Json => serde_json::to_vec_pretty(report)?,
        ReportFormat::Csv => report_csv(report)?,
    };
    write_atomic(path, &bytes)
}

/// Reads a JSON report back.
pub fn read_report(path: impl AsRef<Path>) -> Result<EvaluationReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Per-view CSV with a trailing summary row (`row_kind` column tells them
/// apart). Columns are fixed given the configured thresholds.
fn report_csv(report: &EvaluationReport) -> Result<Vec<u8>> {
    let thresholds: Vec<f64> = report
        .summary
        .acc_post_pct_at
        .iter()
        .map(|(t, _)| *t)
        .collect();

    let mut header: Vec<String> = [
        "scene_id",
        "object_id",
        "method_id",
        "row_kind",
        "view_id",
        "skipped",
        "iou_pre",
        "iou_post",
        "iou_drop",
        "detected_pre",
        "detected_post",
        "sim_sam",
        "sim_no_overlap",
        "xi_depth",
        "xi_degenerate",
        "acc_depth",
        "flags",
        "n_views",
        "skipped_views",
        "drop_pct_cell",
        "pct_reduction",
        "low_confidence",
    ]
    .map(String::from)
    .to_vec();
    for t in &thresholds {
        header.push(format!("acc_seg_at_{t}"));
    }
    for t in &thresholds {
        header.push(format!("acc_post_pct_at_{t}"));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;

    let ids = [
        report.scene_id.clone(),
        report.object_id.clone(),
        report.method_id.clone(),
    ];
    for row in &report.rows {
        let mut record: Vec<String> = ids.to_vec();
        record.extend([
            "view".to_string(),
            row.view_id.clone(),
            row.skipped.to_string(),
            fmt_opt(row.iou_pre),
            fmt_opt(row.iou_post),
            fmt_opt(row.iou_drop),
            row.detected_pre.to_string(),
            row.detected_post.to_string(),
            fmt_opt(row.sim_sam),
            row.sim_no_overlap.to_string(),
            fmt_opt(row.xi_depth),
            row.xi_degenerate.to_string(),
            fmt_opt(row.acc_depth),
            row.flags.join("; "),
        ]);
        // Summary-only columns stay empty on view rows.
        record.extend(std::iter::repeat_n(String::new(), 5 + 2 * thresholds.len()));
        w.write_record(&record)?;
    }

    // A report without rows stays header-only.
    if report.rows.is_empty() {
        return w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")));
    }

    let s = &report.summary;
    let mut record: Vec<String> = ids.to_vec();
    record.extend([
        "summary".to_string(),
        String::new(),
        String::new(),
        fmt_opt(s.semantic.as_ref().map(|x| x.miou_pre)),
        fmt_opt(s.semantic.as_ref().map(|x| x.miou_post)),
        fmt_opt(s.semantic.as_ref().map(|x| x.iou_drop)),
        String::new(),
        String::new(),
        fmt_opt(s.mean_sim_sam),
        String::new(),
        fmt_opt(s.mean_xi_depth),
        String::new(),
        fmt_opt(s.mean_acc_depth),
        String::new(),
        s.n_views.to_string(),
        s.skipped_views.to_string(),
        s.semantic
            .as_ref()
            .map(|x| x.drop_pct_cell())
            .unwrap_or_default(),
        fmt_opt(s.semantic.as_ref().and_then(|x| x.pct_reduction)),
        s.semantic
            .as_ref()
            .map(|x| x.low_confidence.to_string())
            .unwrap_or_default(),
    ]);
    for &t in &thresholds {
        let v = s
            .semantic
            .as_ref()
            .and_then(|x| x.acc_seg_at.iter().find(|(tt, _)| *tt == t).map(|(_, v)| *v));
        record.push(fmt_opt(v));
    }
    for (_, v) in &s.acc_post_pct_at {
        record.push(format!("{v:.4}"));
    }
    w.write_record(&record)?;

    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}

/// One summary line per report, mirroring the comparison-table layout.
/// `table_style` renders 2-decimal values and the `drop / pct` cell.
pub fn merge_summary_csv(reports: &[EvaluationReport], table_style: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scene_id",
        "object_id",
        "method_id",
        "n_views",
        "iou_drop",
        "acc_depth",
        "sim_sam",
    ])?;
    for r in reports {
        let drop_cell = match (&r.summary.semantic, table_style) {
            (Some(sem), true) => format_drop_pct(sem.iou_drop, sem.pct_reduction),
            (Some(sem), false) => format!("{:.4}", sem.iou_drop),
            (None, _) => String::new(),
        };
        let fmt = |v: Option<f64>| -> String {
            match (v, table_style) {
                (Some(x), true) => format!("{x:.2}"),
                (Some(x), false) => format!("{x:.4}"),
                (None, _) => String::new(),
            }
        };
        w.write_record([
            r.scene_id.clone(),
            r.object_id.clone(),
            r.method_id.clone(),
            r.summary.n_views.to_string(),
            drop_cell,
            fmt(r.summary.mean_acc_depth),
            fmt(r.summary.mean_sim_sam),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}
