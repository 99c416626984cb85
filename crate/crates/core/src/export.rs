//! Plain-text exports of training metrics, embeddings, temperature sweeps and batch logs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cluster_eval;
use crate::corpus::{Corpus, DocumentSource};
use crate::error::{Error, Result};
use crate::trainer::{EpochReport, Evaluation, SweepRow};

pub const METRICS_HEADER: &str = "epoch,L_CL,L_UDA,total,accuracy";
pub const EMBEDDINGS_HEADER: &str = "doc_id\tlabel\tcluster\tx\ty";
pub const SWEEP_HEADER: &str = "tau,accuracy";

/// One metrics line; losses are absent for rows not produced by training (the
/// initialization or a standalone evaluation).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub contrastive: Option<f64>,
    pub consistency: Option<f64>,
    pub total: Option<f64>,
    pub accuracy: f64,
}

impl From<&EpochReport> for MetricsRow {
    fn from(r: &EpochReport) -> Self {
        Self {
            epoch: r.epoch,
            contrastive: Some(r.mean_contrastive),
            consistency: Some(r.mean_consistency),
            total: Some(r.total),
            accuracy: r.accuracy,
        }
    }
}

/// Epoch 0 (the initialization) followed by one row per trained epoch.
pub fn metrics_rows(initial_accuracy: f64, reports: &[EpochReport]) -> Vec<MetricsRow> {
    std::iter::once(MetricsRow {
        epoch: 0,
        contrastive: None,
        consistency: None,
        total: None,
        accuracy: initial_accuracy,
    })
    .chain(reports.iter().map(MetricsRow::from))
    .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            opt(r.contrastive),
            opt(r.consistency),
            opt(r.total),
            r.accuracy
        );
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write(path, &metrics_csv(rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub doc_id: String,
    /// Class name, empty for unlabeled documents.
    pub label: String,
    pub cluster: usize,
    pub x: f64,
    pub y: f64,
}

pub fn embedding_rows(corpus: &Corpus, eval: &Evaluation) -> Result<Vec<EmbeddingRow>> {
    let coords = cluster_eval::project_2d(&eval.latents)?;
    Ok((0..corpus.doc_count())
        .map(|d| EmbeddingRow {
            doc_id: corpus.doc_id(d).to_owned(),
            label: corpus
                .doc_label(d)
                .map(|l| corpus.class_name(l))
                .unwrap_or_default(),
            cluster: eval.assignment.clusters[d],
            x: coords[d][0],
            y: coords[d][1],
        })
        .collect())
}

fn clean_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn embeddings_tsv(rows: &[EmbeddingRow]) -> String {
    let mut out = format!("{EMBEDDINGS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            clean_field(&r.doc_id),
            clean_field(&r.label),
            r.cluster,
            r.x,
            r.y
        );
    }
    out
}

pub fn write_embeddings_tsv(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    write(path, &embeddings_tsv(rows))
}

pub fn read_embeddings_tsv(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == EMBEDDINGS_HEADER => {}
        _ => return Err(parse_err(1, "missing header".into())),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(parse_err(
                    i + 1,
                    format!("expected 5 fields, got {}", f.len()),
                ));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| parse_err(i + 1, e.to_string()))
            };
            Ok(EmbeddingRow {
                doc_id: f[0].to_owned(),
                label: f[1].to_owned(),
                cluster: f[2].parse().map_err(|e| parse_err(i + 1, format!("{e}")))?,
                x: num(f[3])?,
                y: num(f[4])?,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.tau, r.accuracy);
    }
    out
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write(path, &sweep_csv(rows))
}

/// One line per optimizer step: epoch, batch index within the epoch, batch kind.
pub fn batch_log_tsv(reports: &[EpochReport]) -> String {
    let mut out = String::from("epoch\tbatch\tkind\n");
    for r in reports {
        for (i, kind) in r.batch_log.iter().enumerate() {
            let _ = writeln!(out, "{}\t{i}\t{kind}", r.epoch);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::BatchKind;
    use std::time::Duration;

    fn report(epoch: usize) -> EpochReport {
        EpochReport {
            epoch,
            mean_contrastive: 0.25,
            mean_consistency: 0.0,
            total: 0.25,
            accuracy: 0.5,
            batch_log: vec![BatchKind::Contrastive, BatchKind::Consistency],
            wall_time: Duration::from_millis(3),
        }
    }

    #[test]
    fn metrics_layout() {
        let csv = metrics_csv(&metrics_rows(0.3, &[report(1)]));
        assert_eq!(
            csv,
            "epoch,L_CL,L_UDA,total,accuracy\n0,,,,0.3\n1,0.25,0,0.25,0.5\n"
        );
    }

    #[test]
    fn sweep_and_batch_log_layout() {
        let rows = [SweepRow {
            tau: 0.5,
            accuracy: 0.75,
        }];
        assert_eq!(sweep_csv(&rows), "tau,accuracy\n0.5,0.75\n");
        assert_eq!(
            batch_log_tsv(&[report(2)]),
            "epoch\tbatch\tkind\n2\t0\tcontrastive\n2\t1\tconsistency\n"
        );
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        let rows = vec![
            EmbeddingRow {
                doc_id: "a".into(),
                label: "x".into(),
                cluster: 1,
                x: 0.1,
                y: -2.5e-7,
            },
            EmbeddingRow {
                doc_id: "b".into(),
                label: String::new(),
                cluster: 0,
                x: 3.0,
                y: 1.0 / 3.0,
            },
        ];
        write_embeddings_tsv(&path, &rows).unwrap();
        assert_eq!(read_embeddings_tsv(&path).unwrap(), rows);
        fs::write(&path, "bad\n").unwrap();
        assert!(read_embeddings_tsv(&path).is_err());
    }
}
