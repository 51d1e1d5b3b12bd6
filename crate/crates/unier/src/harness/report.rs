//! Report emission: a flat CSV, a full JSON dump (including per-seed
//! values), and a markdown table with per-column top-3 ranking markers.
//!
//! Float fields are written with Rust's shortest round-trip formatting, so
//! re-parsing the CSV reproduces the exact values and byte-identical inputs
//! yield byte-identical reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::runner::{ReportRow, RowStatus};
use super::HarnessError;

pub const CSV_HEADER: &str = "method,variant,task,mean,std,n_students,train_time_s,infer_time_s,peak_memory_bytes,fingerprint,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub markdown: Option<PathBuf>,
}

fn sanitize(msg: &str) -> String {
    msg.replace(['\n', '\r'], " ").replace(',', ";")
}

pub fn results_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let mem = r
            .peak_memory_bytes
            .map(|m| m.to_string())
            .unwrap_or_default();
        let status = match &r.status {
            RowStatus::Ok => "ok".to_string(),
            RowStatus::Failed(msg) => format!("failed: {}", sanitize(msg)),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.variant,
            r.task,
            r.mean,
            r.std,
            r.n_students,
            r.train_time_s,
            r.infer_time_s,
            mem,
            r.fingerprint,
            status
        )
        .expect("writing to a string cannot fail");
    }
    out
}

/// Parses a results CSV back into rows (per-seed detail lives only in the
/// JSON output and comes back empty).
pub fn parse_results_csv(contents: &str) -> Result<Vec<ReportRow>, HarnessError> {
    let mut lines = contents.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(HarnessError::Config(format!(
                "unexpected results header: {:?}",
                other
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 11 {
            return Err(HarnessError::Config(format!(
                "results line {} has {} fields, expected 11",
                i + 2,
                fields.len()
            )));
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64, HarnessError> {
            s.parse()
                .map_err(|_| HarnessError::Config(format!("bad {what} value '{s}'")))
        };
        let status_field = fields[10..].join(",");
        let status = if status_field == "ok" {
            RowStatus::Ok
        } else if let Some(msg) = status_field.strip_prefix("failed: ") {
            RowStatus::Failed(msg.to_string())
        } else {
            return Err(HarnessError::Config(format!("bad status '{status_field}'")));
        };
        rows.push(ReportRow {
            method: fields[0].to_string(),
            variant: fields[1].to_string(),
            task: fields[2].to_string(),
            mean: parse_f64(fields[3], "mean")?,
            std: parse_f64(fields[4], "std")?,
            n_students: fields[5]
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad n_students '{}'", fields[5])))?,
            per_seed: Vec::new(),
            train_time_s: parse_f64(fields[6], "train_time_s")?,
            infer_time_s: parse_f64(fields[7], "infer_time_s")?,
            peak_memory_bytes: if fields[8].is_empty() {
                None
            } else {
                Some(fields[8].parse().map_err(|_| {
                    HarnessError::Config(format!("bad peak_memory_bytes '{}'", fields[8]))
                })?)
            },
            fingerprint: fields[9].to_string(),
            status,
        });
    }
    Ok(rows)
}

pub fn read_results_json(path: &Path) -> Result<Vec<ReportRow>, HarnessError> {
    let contents = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&contents).map_err(|e| HarnessError::BadFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Methods-by-(variant, task) table with the best three values per column
/// marked (1), (2), (3).
pub fn report_markdown(rows: &[ReportRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut columns: Vec<(String, String)> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        let col = (r.variant.clone(), r.task.clone());
        if !columns.contains(&col) {
            columns.push(col);
        }
    }
    // rank per column: descending mean over ok rows
    let value_of = |method: &str, col: &(String, String)| -> Option<&ReportRow> {
        rows.iter().find(|r| {
            r.method == method && r.variant == col.0 && r.task == col.1
        })
    };
    let mut out = String::from("# Benchmark results\n\n");
    out.push_str("Mean weighted cognitive gain at the evaluation cutoff; (1)-(3) mark the top three per column.\n\n");
    out.push_str("| method |");
    for (variant, task) in &columns {
        write!(out, " {variant} {} |", task.to_uppercase()).unwrap();
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &columns {
        out.push_str("---|");
    }
    out.push('\n');
    let mut ranks: Vec<Vec<(usize, f64)>> = Vec::new();
    for col in &columns {
        let mut vals: Vec<(usize, f64)> = methods
            .iter()
            .enumerate()
            .filter_map(|(i, m)| {
                value_of(m, col).and_then(|r| match r.status {
                    RowStatus::Ok => Some((i, r.mean)),
                    RowStatus::Failed(_) => None,
                })
            })
            .collect();
        vals.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        ranks.push(vals);
    }
    for (mi, method) in methods.iter().enumerate() {
        write!(out, "| {method} |").unwrap();
        for (ci, col) in columns.iter().enumerate() {
            match value_of(method, col) {
                Some(r) if matches!(r.status, RowStatus::Ok) => {
                    let marker = ranks[ci]
                        .iter()
                        .position(|&(i, _)| i == mi)
                        .filter(|&p| p < 3)
                        .map(|p| format!(" ({})", p + 1))
                        .unwrap_or_default();
                    write!(out, " {:.3}{marker} |", r.mean).unwrap();
                }
                Some(_) => {
                    out.push_str(" — |");
                }
                None => {
                    out.push_str(" |");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Writes the requested formats into `out_dir` (all three by default).
pub fn write_report(
    rows: &[ReportRow],
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<ReportFiles, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Config("no rows to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let write = |name: &str, contents: String| -> Result<PathBuf, HarnessError> {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    };
    let mut files = ReportFiles::default();
    for format in formats {
        match format {
            ReportFormat::Csv => files.csv = Some(write("results.csv", results_csv(rows))?),
            ReportFormat::Json => {
                let json =
                    serde_json::to_string_pretty(rows).expect("rows always serialize");
                files.json = Some(write("results.json", json)?);
            }
            ReportFormat::Markdown => {
                files.markdown = Some(write("report.md", report_markdown(rows))?)
            }
        }
    }
    Ok(files)
}

pub const ALL_FORMATS: [ReportFormat; 3] =
    [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown];
