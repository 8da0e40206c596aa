//! Aggregation of metrics files and verification reports into tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trainer::EpisodeMetrics;
use crate::verify::VerifyReport;

/// Reads a JSON-lines metrics file, checking record order.
pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<EpisodeMetrics> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let m: EpisodeMetrics =
            serde_json::from_str(line).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if m.episode != out.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("episode {} out of order, expected {}", m.episode, out.len()),
            ));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(Error::parse(path, 0, "no metric records"));
    }
    Ok(out)
}

pub fn read_verify_report(path: &Path) -> Result<VerifyReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: String,
    pub episodes: usize,
    pub final_target_accuracy: Option<f64>,
    pub mean_grad_inner_product: f64,
    pub final_source_entropy: f64,
    pub final_target_entropy: f64,
    /// Most recent proxy A-distance in the run, if any was computed.
    pub proxy_a_distance: Option<f64>,
}

pub fn summarize(run: &str, metrics: &[EpisodeMetrics]) -> RunSummary {
    let last = metrics.last().expect("non-empty metrics");
    RunSummary {
        run: run.to_owned(),
        episodes: metrics.len(),
        final_target_accuracy: last.target_accuracy,
        mean_grad_inner_product: metrics.iter().map(|m| m.grad_inner_product).sum::<f64>()
            / metrics.len() as f64,
        final_source_entropy: last.source_entropy,
        final_target_entropy: last.target_entropy,
        proxy_a_distance: metrics.iter().rev().find_map(|m| m.proxy_a_distance),
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

/// Fixed-width plain-text rendering of the run table.
pub fn text_table(rows: &[RunSummary]) -> String {
    let header = [
        "run",
        "episodes",
        "target_acc",
        "mean_gip",
        "H_source",
        "H_target",
        "proxy_A",
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.run.clone(),
                r.episodes.to_string(),
                cell(r.final_target_accuracy),
                format!("{:.4e}", r.mean_grad_inner_product),
                format!("{:.4}", r.final_source_entropy),
                format!("{:.4}", r.final_target_entropy),
                cell(r.proxy_a_distance),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header.map(String::from));
    for row in &body {
        line(row);
    }
    out
}

/// Plain-text listing of a verification report.
pub fn verify_table(name: &str, report: &VerifyReport) -> String {
    let mut out = format!(
        "{name}: {} of {} checks passed\n",
        report.total - report.failed,
        report.total
    );
    let width = report
        .checks
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(0);
    for c in &report.checks {
        let _ = writeln!(
            out,
            "  {:<width$}  {}  {:.4e}  {}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.measured,
            c.threshold
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(episode: usize, acc: Option<f64>, pad: Option<f64>) -> EpisodeMetrics {
        EpisodeMetrics {
            episode,
            source_loss: 1.0,
            target_loss: Some(0.5),
            grad_inner_product: episode as f64,
            source_entropy: 0.2,
            target_entropy: 0.3,
            target_accuracy: acc,
            pseudo_label_count: Some(10),
            proxy_a_distance: pad,
        }
    }

    fn write_jsonl(dir: &Path, name: &str, records: &[EpisodeMetrics]) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut buf = Vec::new();
        crate::trainer::write_metrics_jsonl(&mut buf, records).unwrap();
        std::fs::write(&path, buf).unwrap();
        path
    }

    #[test]
    fn summary_aggregates_run() {
        let m = [
            record(0, Some(0.5), Some(1.2)),
            record(1, Some(0.7), None),
            record(2, Some(0.9), None),
        ];
        let s = summarize("a", &m);
        assert_eq!(s.episodes, 3);
        assert_eq!(s.final_target_accuracy, Some(0.9));
        assert_eq!(s.mean_grad_inner_product, 1.0);
        assert_eq!(s.proxy_a_distance, Some(1.2));
    }

    #[test]
    fn two_runs_give_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_jsonl(dir.path(), "a.jsonl", &[record(0, Some(0.5), None)]);
        let b = write_jsonl(
            dir.path(),
            "b.jsonl",
            &[record(0, None, None), record(1, None, None)],
        );
        let rows: Vec<RunSummary> = [a, b]
            .iter()
            .map(|p| summarize(&p.display().to_string(), &read_metrics(p).unwrap()))
            .collect();
        let mut csv = Vec::new();
        write_csv(&mut csv, &rows).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("run,episodes,final_target_accuracy,"));
        assert_eq!(text_table(&rows).lines().count(), 3);
    }

    #[test]
    fn empty_file_is_a_parse_error_naming_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let err = read_metrics(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("empty.jsonl"));
    }

    #[test]
    fn schema_mismatch_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut buf = Vec::new();
        crate::trainer::write_metrics_jsonl(&mut buf, &[record(0, None, None)]).unwrap();
        buf.extend_from_slice(b"{\"episode\": 1}\n");
        std::fs::write(&path, buf).unwrap();
        match read_metrics(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_order_episodes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_jsonl(dir.path(), "o.jsonl", &[record(1, None, None)]);
        assert!(matches!(
            read_metrics(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn identical_inputs_give_identical_rows() {
        let m = [record(0, Some(0.5), None)];
        assert_eq!(
            text_table(&[summarize("x", &m)]),
            text_table(&[summarize("x", &m)])
        );
    }
}
