//! Prediction-aided sphere decoding.
//!
//! The network's clamped outputs `ĝ` are sorted into `g̃`. The smallest
//! prediction sets the initial radius `f̂ = min(λ₁·g̃₁, f_{1−ε})`, the sorted
//! order fixes which top-layer sub-tree is searched first, and after each
//! sub-tree the search stops once `λ₂·f̂ < g̃_{p+1}`. Below the top layer the
//! search is plain Schnorr-Euchner. If no leaf falls inside the sphere the
//! zero-forcing decision is returned.
//!
//! Radii here are distances in the reduced (`z = Q1ᴴy`) domain; the search
//! consumes their squares.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{back_substitute, Constellation};
use crate::numerics::{qrd, squared_distance, ComplexMatrix, ComplexVector, OpCounter, QrFactors};
use crate::predictor::{extract_features_counted, RbfnModel};
use crate::search::{
    conventional_radius, ml_oracle, reduced_squared_radius, sphere_decode, SearchOutcome, SearchProblem,
    SubtreeProgress,
};
use crate::{Error, Result};

/// Default coverage probability `1 − ε` of the conventional radius.
pub const DEFAULT_EPSILON_COMPLEMENT: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon_complement: f64,
    pub enable_nn_radius: bool,
    pub enable_nn_ordering: bool,
    pub enable_early_termination: bool,
}

impl DetectorConfig {
    /// All three sub-schemes on.
    pub fn full(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            epsilon_complement: DEFAULT_EPSILON_COMPLEMENT,
            enable_nn_radius: true,
            enable_nn_ordering: true,
            enable_early_termination: true,
        }
    }

    pub fn radius_only(lambda1: f64) -> Self {
        Self {
            enable_nn_ordering: false,
            enable_early_termination: false,
            ..Self::full(lambda1, f64::INFINITY)
        }
    }

    pub fn ordering_only() -> Self {
        Self {
            enable_nn_radius: false,
            enable_early_termination: false,
            ..Self::full(f64::INFINITY, f64::INFINITY)
        }
    }

    pub fn ordering_with_termination(lambda2: f64) -> Self {
        Self {
            enable_nn_radius: false,
            ..Self::full(f64::INFINITY, lambda2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 1.0) || !(self.lambda2 >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambdas must be >= 1, got ({}, {})",
                self.lambda1, self.lambda2
            )));
        }
        if !(self.epsilon_complement > 0.0 && self.epsilon_complement < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon complement must lie in (0, 1), got {}",
                self.epsilon_complement
            )));
        }
        if self.enable_early_termination && !self.enable_nn_ordering {
            return Err(Error::InvalidArgument(
                "early termination requires sub-tree ordering".into(),
            ));
        }
        Ok(())
    }

    fn uses_network(&self) -> bool {
        self.enable_nn_radius || self.enable_nn_ordering
    }
}

/// `(λ₁, λ₂)` per antenna count and SNR grid point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LambdaSchedule {
    entries: BTreeMap<usize, Vec<(f64, f64, f64)>>,
}

impl LambdaSchedule {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Tuned values for 16×16 and 24×24 QPSK at 5, 7, 9, 11 and 13 dB.
    pub fn published() -> Self {
        let mut s = Self::empty();
        for &(snr, l1, l2) in &[(5.0, 1.2, 1.3), (7.0, 1.3, 1.4), (9.0, 1.4, 1.5), (11.0, 1.5, 1.6), (13.0, 1.6, 1.7)] {
            s.insert(16, snr, l1, l2);
        }
        for &(snr, l1, l2) in &[(5.0, 1.2, 1.1), (7.0, 1.3, 1.2), (9.0, 1.4, 1.4), (11.0, 1.4, 1.5), (13.0, 1.7, 1.6)] {
            s.insert(24, snr, l1, l2);
        }
        s
    }

    pub fn insert(&mut self, n_t: usize, snr_db: f64, lambda1: f64, lambda2: f64) {
        let row = self.entries.entry(n_t).or_default();
        row.retain(|e| e.0 != snr_db);
        row.push((snr_db, lambda1, lambda2));
        row.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    /// Copies the grid of `from` to antenna count `to`.
    pub fn with_alias(mut self, to: usize, from: usize) -> Self {
        if let Some(row) = self.entries.get(&from).cloned() {
            self.entries.insert(to, row);
        }
        self
    }

    pub fn lookup(&self, n_t: usize, snr_db: f64) -> Result<(f64, f64)> {
        let row = self
            .entries
            .get(&n_t)
            .filter(|r| !r.is_empty())
            .ok_or(Error::NoSchedule { n_t })?;
        // nearest grid point; on a tie the later (higher-SNR) entry wins
        let mut best = row[0];
        for &entry in &row[1..] {
            if (entry.0 - snr_db).abs() <= (best.0 - snr_db).abs() {
                best = entry;
            }
        }
        Ok((best.1, best.2))
    }
}

pub fn lambda_lookup(schedule: &LambdaSchedule, n_t: usize, snr_db: f64) -> Result<(f64, f64)> {
    schedule.lookup(n_t, snr_db)
}

/// Ascending predictions and the constellation index at each rank; ties
/// keep ascending constellation index.
pub fn sorted_predictions(raw: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..raw.len()).collect();
    perm.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
    (perm.iter().map(|&q| raw[q]).collect(), perm)
}

/// `min(λ₁·g̃₁, conventional)`. An infinite `λ₁` disables the learned radius.
pub fn nn_initial_radius(g_tilde_1: f64, lambda1: f64, conventional: f64) -> f64 {
    if lambda1.is_infinite() {
        return conventional;
    }
    (lambda1 * g_tilde_1).min(conventional)
}

/// `λ₂·f̂ < g̃_{p+1}`. An infinite `λ₂` never terminates.
pub fn early_termination_check(lambda2: f64, current_radius: f64, next_prediction: f64) -> bool {
    if lambda2.is_infinite() {
        return false;
    }
    lambda2 * current_radius < next_prediction
}

/// QR factors, `z = Q1ᴴy` and the out-of-range energy `‖Q2ᴴy‖²` of one
/// received vector, shared by every detector run on it.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub qr: QrFactors,
    pub z: ComplexVector,
    pub residual: f64,
    pub n_r: usize,
}

impl PreparedInstance {
    pub fn new(y: &[Complex64], h: &ComplexMatrix) -> Result<Self> {
        if y.len() != h.rows() {
            return Err(Error::DimensionMismatch {
                what: "received vector",
                expected: h.rows(),
                found: y.len(),
            });
        }
        let qr = qrd(h)?;
        let z = qr.q1.conj_transpose_mul_vec(y);
        let residual = if qr.q2.cols() > 0 {
            qr.q2.conj_transpose_mul_vec(y).norm_sqr()
        } else {
            0.0
        };
        Ok(Self {
            qr,
            z,
            residual,
            n_r: h.rows(),
        })
    }

    pub fn n_t(&self) -> usize {
        self.qr.r.cols()
    }

    pub fn problem<'a>(&'a self, constellation: &'a Constellation, squared_radius: f64) -> Result<SearchProblem<'a>> {
        SearchProblem::new(&self.z, &self.qr.r, constellation, squared_radius)
    }

    /// Zero-forcing decision `⌊R⁻¹z⌉`, equal to slicing `(HᴴH)⁻¹Hᴴy`.
    pub fn zero_forcing(&self, constellation: &Constellation) -> Vec<usize> {
        back_substitute(&self.qr.r, &self.z)
            .iter()
            .map(|&e| constellation.nearest(e))
            .collect()
    }

    /// Uncounted `‖z − R·x‖²`.
    pub fn metric(&self, x: &[Complex64]) -> f64 {
        squared_distance(&self.z, &self.qr.r.mul_vec(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub solution: ComplexVector,
    pub indices: Vec<usize>,
    /// `‖z − R·solution‖²`.
    pub metric: f64,
    pub used_fallback: bool,
    pub subtrees_searched: usize,
    pub terminated_early: bool,
    pub tree_ops: OpCounter,
    /// Feature extraction, normalization and network evaluation.
    pub nn_ops: OpCounter,
    pub nodes_visited: u64,
    /// Initial search radius (reduced domain).
    pub initial_radius: f64,
    /// `f̂` at the moment early termination fired.
    pub termination_radius: Option<f64>,
    /// Top-layer visiting order (constellation indices).
    pub root_order: Vec<usize>,
    /// Clamped network outputs by constellation index; empty when unused.
    pub predictions: Vec<f64>,
}

impl DetectionResult {
    fn from_search(
        prepared: &PreparedInstance,
        constellation: &Constellation,
        outcome: SearchOutcome,
        tree_ops: OpCounter,
    ) -> Self {
        let (indices, metric, used_fallback) = match (outcome.indices, outcome.metric) {
            (Some(idx), Some(m)) => (idx, m, false),
            _ => {
                let idx = prepared.zero_forcing(constellation);
                let m = prepared.metric(&constellation.vector(&idx));
                (idx, m, true)
            }
        };
        Self {
            solution: constellation.vector(&indices),
            indices,
            metric,
            used_fallback,
            subtrees_searched: outcome.subtrees_searched,
            terminated_early: outcome.terminated_early,
            tree_ops,
            nn_ops: OpCounter::new(),
            nodes_visited: outcome.nodes_visited,
            initial_radius: 0.0,
            termination_radius: None,
            root_order: Vec::new(),
            predictions: Vec::new(),
        }
    }
}

/// Runs the prediction-aided detector on `y = Hx + v`.
pub fn dpp_detect(
    y: &[Complex64],
    h: &ComplexMatrix,
    noise_variance: f64,
    model: &RbfnModel,
    config: &DetectorConfig,
    constellation: &Constellation,
) -> Result<DetectionResult> {
    let prepared = PreparedInstance::new(y, h)?;
    dpp_detect_prepared(&prepared, noise_variance, model, config, constellation)
}

pub fn dpp_detect_prepared(
    prepared: &PreparedInstance,
    noise_variance: f64,
    model: &RbfnModel,
    config: &DetectorConfig,
    constellation: &Constellation,
) -> Result<DetectionResult> {
    config.validate()?;
    let n_t = prepared.n_t();
    if model.n_t != n_t || model.constellation_size != constellation.len() {
        return Err(Error::InvalidArgument(format!(
            "model is for {}x? with {} symbols, detector has n_t = {n_t} and {} symbols",
            model.n_t,
            model.constellation_size,
            constellation.len()
        )));
    }
    let conventional = conventional_radius(noise_variance, prepared.n_r, config.epsilon_complement);
    let conventional_reduced = reduced_squared_radius(conventional, prepared.residual).sqrt();

    let mut nn_ops = OpCounter::new();
    let (predictions, g_sorted, perm) = if config.uses_network() {
        let features = extract_features_counted(&prepared.z, &prepared.qr.r, noise_variance, &mut nn_ops);
        let raw = model.forward_counted(&features, &mut nn_ops)?;
        let clamped: Vec<f64> = raw.into_iter().map(|g| g.max(0.0)).collect();
        let (sorted, perm) = sorted_predictions(&clamped);
        (clamped, sorted, perm)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };

    let initial_radius = if config.enable_nn_radius {
        nn_initial_radius(g_sorted[0], config.lambda1, conventional_reduced)
    } else {
        conventional_reduced
    };

    let mut problem = prepared.problem(constellation, initial_radius * initial_radius)?;
    let order = config.enable_nn_ordering.then_some(perm.as_slice());
    let mut termination_radius = None;
    let outcome = if config.enable_early_termination {
        let mut stop = |p: &SubtreeProgress| {
            let radius = p.squared_radius.sqrt();
            let fire = early_termination_check(config.lambda2, radius, g_sorted[p.completed]);
            if fire {
                termination_radius = Some(radius);
            }
            fire
        };
        sphere_decode(&mut problem, order, Some(&mut stop))
    } else {
        sphere_decode(&mut problem, order, None)
    };

    let root_order = match order {
        Some(o) => o.to_vec(),
        None => se_root_order(prepared, constellation)?,
    };
    let mut result = DetectionResult::from_search(prepared, constellation, outcome, problem.counter);
    result.nn_ops = nn_ops;
    result.initial_radius = initial_radius;
    result.termination_radius = termination_radius;
    result.root_order = root_order;
    result.predictions = predictions;
    Ok(result)
}

fn se_root_order(prepared: &PreparedInstance, constellation: &Constellation) -> Result<Vec<usize>> {
    let mut p = prepared.problem(constellation, 0.0)?;
    let n = p.dim();
    let partial = vec![Complex64::new(0.0, 0.0); n];
    Ok(crate::search::se_child_order(&mut p, n - 1, &partial))
}

/// Initial radius of the conventional detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BaselineRadius {
    /// `f_{1−ε}` from the noise statistics.
    Conventional { epsilon_complement: f64 },
    Infinite,
}

impl Default for BaselineRadius {
    fn default() -> Self {
        BaselineRadius::Conventional {
            epsilon_complement: DEFAULT_EPSILON_COMPLEMENT,
        }
    }
}

/// Conventional SE sphere decoder with zero-forcing fallback.
pub fn se_sd_detect(
    y: &[Complex64],
    h: &ComplexMatrix,
    noise_variance: f64,
    constellation: &Constellation,
    radius: BaselineRadius,
) -> Result<DetectionResult> {
    let prepared = PreparedInstance::new(y, h)?;
    se_sd_detect_prepared(&prepared, noise_variance, constellation, radius)
}

pub fn se_sd_detect_prepared(
    prepared: &PreparedInstance,
    noise_variance: f64,
    constellation: &Constellation,
    radius: BaselineRadius,
) -> Result<DetectionResult> {
    let initial_radius = match radius {
        BaselineRadius::Conventional { epsilon_complement } => {
            let f = conventional_radius(noise_variance, prepared.n_r, epsilon_complement);
            reduced_squared_radius(f, prepared.residual).sqrt()
        }
        BaselineRadius::Infinite => f64::INFINITY,
    };
    let mut problem = prepared.problem(constellation, initial_radius * initial_radius)?;
    let outcome = sphere_decode(&mut problem, None, None);
    let mut result = DetectionResult::from_search(prepared, constellation, outcome, problem.counter);
    result.initial_radius = initial_radius;
    result.root_order = se_root_order(prepared, constellation)?;
    Ok(result)
}

/// Exhaustive maximum-likelihood detection (desk-scale sizes only).
pub fn ml_detect_prepared(prepared: &PreparedInstance, constellation: &Constellation) -> Result<DetectionResult> {
    let mut problem = prepared.problem(constellation, f64::INFINITY)?;
    let outcome = ml_oracle(&mut problem)?;
    let mut result = DetectionResult::from_search(prepared, constellation, outcome, problem.counter);
    result.initial_radius = f64::INFINITY;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorting_cases() {
        let (g, p) = sorted_predictions(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(g, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(p, vec![0, 1, 2, 3]);

        let (g, p) = sorted_predictions(&[3.0, 1.0, 2.0, 0.0]);
        assert_eq!(g, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p, vec![3, 1, 2, 0]);

        let (_, p) = sorted_predictions(&[0.5; 4]);
        assert_eq!(p, vec![0, 1, 2, 3]);
    }

    #[test]
    fn initial_radius_cases() {
        assert_eq!(nn_initial_radius(0.0, 1.4, 3.0), 0.0);
        assert_eq!(nn_initial_radius(2.5, 1.4, 3.0), 3.0);
        assert!((nn_initial_radius(1.0, 1.4, 3.0) - 1.4).abs() < 1e-15);
        assert_eq!(nn_initial_radius(0.0, f64::INFINITY, 3.0), 3.0);
    }

    #[test]
    fn termination_cases() {
        assert!(early_termination_check(1.3, 1.0, 1.4));
        assert!(!early_termination_check(1.3, 1.0, 1.2));
        assert!(!early_termination_check(f64::INFINITY, 0.0, 10.0));
        assert!(!early_termination_check(f64::INFINITY, 1.0, 1e300));
    }

    #[test]
    fn published_schedule() {
        let s = LambdaSchedule::published();
        assert_eq!(lambda_lookup(&s, 16, 5.0).unwrap(), (1.2, 1.3));
        assert_eq!(lambda_lookup(&s, 16, 9.0).unwrap(), (1.4, 1.5));
        assert_eq!(lambda_lookup(&s, 24, 13.0).unwrap(), (1.7, 1.6));
        // 6 dB is equidistant from 5 and 7: the higher SNR wins
        assert_eq!(lambda_lookup(&s, 16, 6.0).unwrap(), (1.3, 1.4));
        assert_eq!(lambda_lookup(&s, 16, 5.9).unwrap(), (1.2, 1.3));
        assert_eq!(lambda_lookup(&s, 24, 30.0).unwrap(), (1.7, 1.6));
        assert!(matches!(lambda_lookup(&s, 8, 9.0), Err(Error::NoSchedule { n_t: 8 })));
        let aliased = s.with_alias(8, 16);
        assert_eq!(lambda_lookup(&aliased, 8, 11.0).unwrap(), (1.5, 1.6));
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::full(1.4, 1.5).validate().is_ok());
        assert!(DetectorConfig::ordering_only().validate().is_ok());
        assert!(DetectorConfig::full(0.9, 1.5).validate().is_err());
        let bad = DetectorConfig {
            enable_nn_ordering: false,
            ..DetectorConfig::full(1.4, 1.5)
        };
        assert!(bad.validate().is_err());
    }
}
