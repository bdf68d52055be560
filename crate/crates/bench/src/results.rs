//! Result tables and their CSV / JSON encodings.
//!
//! CSV columns are fixed by the field order of [`ResultRow`] and
//! [`ComplexityRow`]. Wall-clock figures appear only in the JSON output so
//! that CSV files are reproducible byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detectors::DetectorId;
use crate::error::{BenchError, Result};
use crate::sweep::CellStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub detector: DetectorId,
    pub trials: u64,
    pub bit_errors: u64,
    pub bits_simulated: u64,
    pub ber: f64,
    pub avg_tree_mults: f64,
    pub avg_tree_adds: f64,
    pub avg_nn_mults: f64,
    pub avg_nn_adds: f64,
    pub avg_subtrees_searched: f64,
    pub early_termination_rate: f64,
    pub fallback_rate: f64,
    /// Terminated instances whose stop the true sub-tree minima would not
    /// have allowed (0 unless auditing).
    pub unjustified_terminations: u64,
    /// Terminated instances whose answer differs from the full search.
    pub termination_changed_results: u64,
    /// Justified stops that still changed the answer; must stay 0.
    pub justified_changed_results: u64,
}

impl ResultRow {
    pub fn from_stats(snr_db: f64, detector: DetectorId, bits_per_trial: u64, s: &CellStats) -> Self {
        let n = s.trials as f64;
        let bits_simulated = s.trials * bits_per_trial;
        Self {
            snr_db,
            detector,
            trials: s.trials,
            bit_errors: s.bit_errors,
            bits_simulated,
            ber: s.bit_errors as f64 / bits_simulated as f64,
            avg_tree_mults: s.tree_mults as f64 / n,
            avg_tree_adds: s.tree_adds as f64 / n,
            avg_nn_mults: s.nn_mults as f64 / n,
            avg_nn_adds: s.nn_adds as f64 / n,
            avg_subtrees_searched: s.subtrees_searched as f64 / n,
            early_termination_rate: s.terminated_early as f64 / n,
            fallback_rate: s.fallbacks as f64 / n,
            unjustified_terminations: s.unjustified_terminations,
            termination_changed_results: s.termination_changed_results,
            justified_changed_results: s.justified_changed_results,
        }
    }

    pub fn avg_tree_ops(&self) -> f64 {
        self.avg_tree_mults + self.avg_tree_adds
    }

    pub fn avg_total_ops(&self) -> f64 {
        self.avg_tree_ops() + self.avg_nn_mults + self.avg_nn_adds
    }
}

/// A [`ResultRow`] plus timing, as written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedRow<R> {
    #[serde(flatten)]
    pub row: R,
    pub mean_wall_us: f64,
}

/// Average work of one detector relative to `se-sd` on the same trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub snr_db: f64,
    pub detector: DetectorId,
    pub trials: u64,
    pub avg_tree_ops: f64,
    pub avg_nn_ops: f64,
    pub avg_total_ops: f64,
    pub baseline_tree_ops: f64,
    /// Tree operations over the baseline's.
    pub tree_ratio: f64,
    /// Tree plus network operations over the baseline's tree operations.
    pub total_ratio: f64,
    pub ber: f64,
    pub baseline_ber: f64,
}

pub fn complexity_rows(rows: &[ResultRow]) -> Result<Vec<ComplexityRow>> {
    let mut out = Vec::new();
    for row in rows {
        let base = rows
            .iter()
            .find(|r| r.detector == DetectorId::SeSd && r.snr_db == row.snr_db)
            .ok_or_else(|| BenchError::invalid("detectors", "complexity ratios need se-sd in the sweep"))?;
        let base_ops = base.avg_tree_ops();
        out.push(ComplexityRow {
            snr_db: row.snr_db,
            detector: row.detector,
            trials: row.trials,
            avg_tree_ops: row.avg_tree_ops(),
            avg_nn_ops: row.avg_nn_mults + row.avg_nn_adds,
            avg_total_ops: row.avg_total_ops(),
            baseline_tree_ops: base_ops,
            tree_ratio: row.avg_tree_ops() / base_ops,
            total_ratio: row.avg_total_ops() / base_ops,
            ber: row.ber,
            baseline_ber: base.ber,
        });
    }
    Ok(out)
}

pub fn csv_string<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::invalid("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv<R: DeserializeOwned>(text: &str) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    write_atomic(path, csv_string(rows)?.as_bytes())
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let text = fs::read_to_string(path).map_err(BenchError::io(path))?;
    parse_csv(&text)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(BenchError::io(dir))?;
    }
    let tmp = path.with_extension("partial");
    let mut f = BufWriter::new(File::create(&tmp).map_err(BenchError::io(&tmp))?);
    f.write_all(bytes).map_err(BenchError::io(&tmp))?;
    f.into_inner()
        .map_err(|e| BenchError::Io {
            path: tmp.clone(),
            source: e.into_error(),
        })?
        .sync_all()
        .map_err(BenchError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(BenchError::io(path))
}
