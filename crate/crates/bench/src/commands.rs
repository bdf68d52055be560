use std::path::Path;

use dppsd::predictor::{
    generate_dataset, load_model, read_dataset, save_model, train, write_dataset, DatasetHeader, RbfnModel,
    TrainingReport,
};
use serde::Serialize;

use crate::config::{DatasetJob, ExperimentSpec, TrainJob};
use crate::detectors::DetectorId;
use crate::error::{BenchError, Result};
use crate::results::{complexity_rows, write_csv, write_json, ComplexityRow, ResultRow, TimedRow};
use crate::sweep::run_sweep;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub target_mean: f64,
    pub target_min: f64,
    pub target_max: f64,
}

pub fn cmd_gen_dataset(job: &DatasetJob) -> Result<DatasetSummary> {
    let spec = job.to_spec()?;
    let examples = generate_dataset(&spec)?;
    let header = DatasetHeader {
        n_t: spec.n_t as u32,
        n_r: spec.n_r as u32,
        constellation: spec.constellation.name().to_owned(),
        feature_len: examples[0].features.len() as u32,
        target_len: examples[0].targets.len() as u32,
        count: examples.len() as u64,
    };
    write_dataset(&job.output, &header, &examples)?;
    let targets = examples.iter().flat_map(|e| e.targets.iter().copied());
    let (mut sum, mut n, mut min, mut max) = (0.0, 0usize, f64::INFINITY, f64::NEG_INFINITY);
    for g in targets {
        sum += g;
        n += 1;
        min = min.min(g);
        max = max.max(g);
    }
    Ok(DatasetSummary {
        samples: examples.len(),
        target_mean: sum / n as f64,
        target_min: min,
        target_max: max,
    })
}

/// Trains on the job's dataset and writes the model and the report.
pub fn cmd_train(job: &TrainJob) -> Result<(RbfnModel, TrainingReport)> {
    let (_, examples) = read_dataset(&job.dataset)?;
    let (model, report) = train(&examples, &job.trainer)?;
    save_model(&model, &job.model_output)?;
    write_json(&job.report_path(), &report)?;
    Ok((model, report))
}

fn load_for(spec: &ExperimentSpec) -> Result<Option<RbfnModel>> {
    spec.validate()?;
    match (&spec.model_path, spec.needs_model()) {
        (Some(path), true) => Ok(Some(load_model(path)?)),
        _ => Ok(None),
    }
}

fn emit<R: Serialize + Clone>(spec: &ExperimentSpec, rows: &[TimedRow<R>]) -> Result<()> {
    if let (Some(csv), Some(json)) = (spec.csv_path(), spec.json_path()) {
        let plain: Vec<R> = rows.iter().map(|r| r.row.clone()).collect();
        write_csv(&csv, &plain)?;
        write_json(&json, rows)?;
    }
    Ok(())
}

/// BER sweep: one row per (SNR, detector).
pub fn cmd_ber(spec: &ExperimentSpec) -> Result<Vec<TimedRow<ResultRow>>> {
    let model = load_for(spec)?;
    let rows = run_sweep(spec, model.as_ref())?;
    emit(spec, &rows)?;
    Ok(rows)
}

/// Complexity sweep. `se-sd` is added as the baseline when missing.
pub fn cmd_complexity(spec: &ExperimentSpec) -> Result<Vec<TimedRow<ComplexityRow>>> {
    let mut spec = spec.clone();
    if !spec.detectors.contains(&DetectorId::SeSd) {
        spec.detectors.insert(0, DetectorId::SeSd);
    }
    let model = load_for(&spec)?;
    let rows = run_sweep(&spec, model.as_ref())?;
    let plain: Vec<ResultRow> = rows.iter().map(|r| r.row.clone()).collect();
    let timed: Vec<TimedRow<ComplexityRow>> = complexity_rows(&plain)?
        .into_iter()
        .zip(&rows)
        .map(|(row, t)| TimedRow {
            row,
            mean_wall_us: t.mean_wall_us,
        })
        .collect();
    emit(&spec, &timed)?;
    Ok(timed)
}

pub fn ensure_exists(path: &Path, field: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(BenchError::invalid(field, format!("{} does not exist", path.display())))
    }
}
