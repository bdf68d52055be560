//! Paired Monte Carlo sweeps.
//!
//! Trial `t` at grid point `k` draws its channel, symbols and noise from
//! substream `(seed, k, t)`, and every selected detector sees that same
//! draw. Per-cell statistics are integer sums, so the result does not
//! depend on thread count or on where a run was checkpointed.

use std::fs;
use std::ops::AddAssign;
use std::path::Path;
use std::time::Instant;

use dppsd::channel::{bits_diff, draw_with_noise_variance, snr_to_noise_variance, ChannelInstance, Constellation};
use dppsd::dpp::PreparedInstance;
use dppsd::numerics::substream_rng;
use dppsd::predictor::RbfnModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;
use crate::detectors::{audit_termination, run_detector, DetectorContext};
use crate::error::{BenchError, Result};
use crate::results::{write_atomic, ResultRow, TimedRow};

const MAX_REDRAWS: usize = 16;
/// Trials per parallel batch when checkpointing is off.
const DEFAULT_BATCH: u64 = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub trials: u64,
    pub bit_errors: u64,
    pub tree_mults: u64,
    pub tree_adds: u64,
    pub nn_mults: u64,
    pub nn_adds: u64,
    pub subtrees_searched: u64,
    pub terminated_early: u64,
    pub fallbacks: u64,
    pub unjustified_terminations: u64,
    pub termination_changed_results: u64,
    pub justified_changed_results: u64,
    /// Not reproducible; kept out of CSV output.
    pub wall_nanos: u64,
}

impl AddAssign for CellStats {
    fn add_assign(&mut self, o: Self) {
        self.trials += o.trials;
        self.bit_errors += o.bit_errors;
        self.tree_mults += o.tree_mults;
        self.tree_adds += o.tree_adds;
        self.nn_mults += o.nn_mults;
        self.nn_adds += o.nn_adds;
        self.subtrees_searched += o.subtrees_searched;
        self.terminated_early += o.terminated_early;
        self.fallbacks += o.fallbacks;
        self.unjustified_terminations += o.unjustified_terminations;
        self.termination_changed_results += o.termination_changed_results;
        self.justified_changed_results += o.justified_changed_results;
        self.wall_nanos += o.wall_nanos;
    }
}

impl CellStats {
    /// Same counts, ignoring timing.
    pub fn same_counts(&self, other: &Self) -> bool {
        Self { wall_nanos: 0, ..*self } == Self { wall_nanos: 0, ..*other }
    }
}

/// Sweep state after some number of trials, as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepState {
    fingerprint: String,
    /// `cells[k][d]`: grid point `k`, detector `d` in spec order.
    cells: Vec<Vec<CellStats>>,
    /// Trials finished at each grid point.
    done: Vec<u64>,
}

impl SweepState {
    fn new(spec: &ExperimentSpec) -> Self {
        Self {
            fingerprint: spec.fingerprint(),
            cells: vec![vec![CellStats::default(); spec.detectors.len()]; spec.snr_grid_db.len()],
            done: vec![0; spec.snr_grid_db.len()],
        }
    }

    fn is_complete(&self, spec: &ExperimentSpec) -> bool {
        self.done.iter().all(|&d| d == spec.trials_per_point)
    }

    pub fn trials_done(&self) -> u64 {
        self.done.iter().sum()
    }
}

/// The paired draw for `(seed, grid index, trial)`.
pub fn draw_trial(
    spec: &ExperimentSpec,
    constellation: &Constellation,
    grid_index: usize,
    trial: u64,
) -> Result<(ChannelInstance, PreparedInstance)> {
    let mut rng = substream_rng(spec.seed, grid_index as u64, trial);
    let snr = spec.snr_grid_db[grid_index];
    let noise_variance = spec
        .noise_variance_override
        .unwrap_or_else(|| snr_to_noise_variance(snr, spec.n_t));
    let mut last = None;
    for _ in 0..MAX_REDRAWS {
        let inst = draw_with_noise_variance(spec.n_t, spec.n_r, constellation, noise_variance, &mut rng)?;
        match PreparedInstance::new(&inst.y, &inst.h) {
            Ok(prep) => return Ok((inst, prep)),
            Err(e @ dppsd::Error::RankDeficient { .. }) => last = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    Err(last.expect("redraw loop ran").into())
}

struct Runner<'a> {
    spec: &'a ExperimentSpec,
    constellation: Constellation,
    model: Option<&'a RbfnModel>,
}

impl Runner<'_> {
    fn trial(&self, grid_index: usize, trial: u64) -> Result<Vec<CellStats>> {
        let snr = self.spec.snr_grid_db[grid_index];
        let (lambda1, lambda2) = if self.spec.needs_model() {
            self.spec.lambdas(snr)?
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let ctx = DetectorContext {
            constellation: &self.constellation,
            model: self.model,
            lambda1,
            lambda2,
            epsilon_complement: self.spec.epsilon_complement,
        };
        let (inst, prep) = draw_trial(self.spec, &self.constellation, grid_index, trial)?;
        let mut out = Vec::with_capacity(self.spec.detectors.len());
        for &id in &self.spec.detectors {
            let start = Instant::now();
            let r = run_detector(id, &ctx, &prep, inst.noise_variance)?;
            let wall_nanos = start.elapsed().as_nanos() as u64;
            let mut s = CellStats {
                trials: 1,
                bit_errors: bits_diff(&r.solution, &inst.x_true, &self.constellation)?,
                tree_mults: r.tree_ops.complex_mults,
                tree_adds: r.tree_ops.complex_adds,
                nn_mults: r.nn_ops.complex_mults,
                nn_adds: r.nn_ops.complex_adds,
                subtrees_searched: r.subtrees_searched as u64,
                terminated_early: r.terminated_early as u64,
                fallbacks: r.used_fallback as u64,
                wall_nanos,
                ..CellStats::default()
            };
            if self.spec.audit_termination {
                if let Some(a) = audit_termination(id, &ctx, &prep, inst.noise_variance, &r)? {
                    s.unjustified_terminations = a.unjustified as u64;
                    s.termination_changed_results = a.changed_result as u64;
                    s.justified_changed_results = (a.changed_result && !a.unjustified) as u64;
                }
            }
            out.push(s);
        }
        Ok(out)
    }

    fn batch(&self, grid_index: usize, trials: std::ops::Range<u64>) -> Result<Vec<CellStats>> {
        let width = self.spec.detectors.len();
        trials
            .into_par_iter()
            .map(|t| self.trial(grid_index, t))
            .try_reduce(
                || vec![CellStats::default(); width],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    Ok(a)
                },
            )
    }
}

/// Outcome of [`run_sweep_budgeted`].
#[derive(Debug)]
pub enum SweepProgress {
    Complete(Vec<TimedRow<ResultRow>>),
    /// Stopped after the batch budget; the state is in the checkpoint.
    Interrupted(SweepState),
}

/// Runs the whole sweep, resuming from and updating the checkpoint when
/// the spec names one.
pub fn run_sweep(spec: &ExperimentSpec, model: Option<&RbfnModel>) -> Result<Vec<TimedRow<ResultRow>>> {
    match run_sweep_budgeted(spec, model, None)? {
        SweepProgress::Complete(rows) => Ok(rows),
        SweepProgress::Interrupted(_) => unreachable!("no budget given"),
    }
}

/// As [`run_sweep`], but stops after `max_batches` batches (used to
/// exercise resumption).
pub fn run_sweep_budgeted(
    spec: &ExperimentSpec,
    model: Option<&RbfnModel>,
    max_batches: Option<usize>,
) -> Result<SweepProgress> {
    spec.validate()?;
    let constellation = spec.constellation()?;
    if let Some(m) = model {
        if m.n_t != spec.n_t || m.constellation_size != constellation.len() {
            return Err(BenchError::invalid(
                "model_path",
                format!(
                    "model is for n_t = {} with {} symbols, sweep has n_t = {} with {}",
                    m.n_t,
                    m.constellation_size,
                    spec.n_t,
                    constellation.len()
                ),
            ));
        }
    } else if spec.needs_model() {
        return Err(BenchError::invalid("model_path", "required by the selected detectors"));
    }
    let checkpoint = spec.checkpoint.as_deref().filter(|_| spec.checkpoint_every > 0);
    let mut state = match checkpoint {
        Some(path) if path.exists() => load_checkpoint(path, spec)?,
        _ => SweepState::new(spec),
    };
    let batch = if spec.checkpoint_every > 0 {
        spec.checkpoint_every
    } else {
        DEFAULT_BATCH
    };
    let runner = Runner {
        spec,
        constellation: constellation.clone(),
        model,
    };
    let mut batches = 0;
    for k in 0..spec.snr_grid_db.len() {
        while state.done[k] < spec.trials_per_point {
            if max_batches.is_some_and(|m| batches >= m) {
                return Ok(SweepProgress::Interrupted(state));
            }
            let end = (state.done[k] + batch).min(spec.trials_per_point);
            let sums = runner.batch(k, state.done[k]..end)?;
            for (cell, s) in state.cells[k].iter_mut().zip(sums) {
                *cell += s;
            }
            state.done[k] = end;
            batches += 1;
            if let Some(path) = checkpoint {
                write_atomic(path, serde_json::to_string(&state)?.as_bytes())?;
            }
        }
    }
    debug_assert!(state.is_complete(spec));
    Ok(SweepProgress::Complete(rows_of(spec, &constellation, &state)))
}

fn load_checkpoint(path: &Path, spec: &ExperimentSpec) -> Result<SweepState> {
    let text = fs::read_to_string(path).map_err(BenchError::io(path))?;
    let state: SweepState = serde_json::from_str(&text)?;
    let shape_ok = state.cells.len() == spec.snr_grid_db.len()
        && state.done.len() == spec.snr_grid_db.len()
        && state.cells.iter().all(|c| c.len() == spec.detectors.len())
        && state.done.iter().all(|&d| d <= spec.trials_per_point);
    if state.fingerprint != spec.fingerprint() || !shape_ok {
        return Err(BenchError::StaleCheckpoint { path: path.to_owned() });
    }
    Ok(state)
}

fn rows_of(spec: &ExperimentSpec, c: &Constellation, state: &SweepState) -> Vec<TimedRow<ResultRow>> {
    let bits_per_trial = (spec.n_t * c.bits_per_symbol() as usize) as u64;
    let mut rows = Vec::new();
    for (k, &snr) in spec.snr_grid_db.iter().enumerate() {
        for (d, &id) in spec.detectors.iter().enumerate() {
            let s = &state.cells[k][d];
            rows.push(TimedRow {
                row: ResultRow::from_stats(snr, id, bits_per_trial, s),
                mean_wall_us: s.wall_nanos as f64 / s.trials as f64 / 1e3,
            });
        }
    }
    rows
}

