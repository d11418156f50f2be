use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use crate::domain::ExperimentReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}` (expected csv or json)")),
        }
    }
}

pub const CSV_HEADER: [&str; 8] = [
    "model",
    "temperature",
    "strategy",
    "n",
    "rouge_f1",
    "rouge_precision",
    "rouge_recall",
    "embed_sim",
];

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

/// Aggregate rows only; absent means are empty fields.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("write to memory");
    for row in &report.rows {
        let m = row.means.as_ref();
        let opt = |f: Option<f64>| f.map(fixed).unwrap_or_default();
        w.write_record([
            row.model_id.clone(),
            fixed(row.temperature),
            row.strategy.as_str().to_string(),
            row.record_count.to_string(),
            opt(m.map(|m| m.rouge_f1)),
            opt(m.map(|m| m.rouge_precision)),
            opt(m.map(|m| m.rouge_recall)),
            opt(m.and_then(|m| m.embed_sim)),
        ])
        .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

/// The full report, per-record results included.
pub fn report_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn emit_report(report: &ExperimentReport, out_path: &Path, format: ReportFormat) -> io::Result<()> {
    let body = match format {
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Json => report_json(report),
    };
    fs::write(out_path, body)
}

pub fn load_report_json(path: &Path) -> io::Result<ExperimentReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
