//! Per-epoch metrics files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::EpochStats;
use crate::provenance::ProvenanceKind;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub epoch_seconds: f64,
    pub provenance: String,
    pub k: usize,
    pub seed: u64,
}

impl MetricsRecord {
    pub fn from_stats(stats: &EpochStats, provenance: ProvenanceKind, seed: u64) -> Self {
        MetricsRecord {
            epoch: stats.epoch,
            loss: stats.loss,
            accuracy: stats.accuracy,
            epoch_seconds: stats.epoch_seconds,
            provenance: provenance.name().to_string(),
            k: provenance.k(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub epochs: usize,
    pub best_accuracy: f64,
    pub final_loss: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean over seeds of each seed's best accuracy.
    pub best_accuracy: f64,
    pub total_seconds: f64,
    pub runs: Vec<RunSummary>,
}

impl Summary {
    /// Groups records by seed, in order of first appearance.
    pub fn of(records: &[MetricsRecord]) -> Self {
        let mut runs: Vec<RunSummary> = vec![];
        for r in records {
            let run = match runs.iter().position(|s| s.seed == r.seed) {
                Some(i) => &mut runs[i],
                None => {
                    runs.push(RunSummary {
                        seed: r.seed,
                        epochs: 0,
                        best_accuracy: 0.0,
                        final_loss: r.loss,
                        total_seconds: 0.0,
                    });
                    runs.last_mut().expect("pushed")
                }
            };
            run.epochs += 1;
            run.best_accuracy = run.best_accuracy.max(r.accuracy);
            run.final_loss = r.loss;
            run.total_seconds += r.epoch_seconds;
        }
        let best_accuracy = if runs.is_empty() {
            0.0
        } else {
            runs.iter().map(|r| r.best_accuracy).sum::<f64>() / runs.len() as f64
        };
        Summary {
            best_accuracy,
            total_seconds: runs.iter().map(|r| r.total_seconds).sum(),
            runs,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the records as CSV. An empty list gives a header-only file.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(vec![]);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub const METRICS_HEADER: [&str; 7] = ["epoch", "loss", "accuracy", "epoch_seconds", "provenance", "k", "seed"];

/// Writes `metrics.csv` and `summary.json` into `dir`, creating it if
/// needed and overwriting earlier files. Returns the two paths.
pub fn emit_metrics(records: &[MetricsRecord], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join(METRICS_FILE);
    write_csv(&csv_path, &METRICS_HEADER, records)?;
    let json_path = dir.join(SUMMARY_FILE);
    let mut json = serde_json::to_string_pretty(&Summary::of(records))?;
    json.push('\n');
    fs::write(&json_path, json).map_err(io_err(&json_path))?;
    Ok((csv_path, json_path))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::Config(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
