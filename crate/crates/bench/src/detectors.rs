use std::fmt;
use std::str::FromStr;

use dppsd::channel::Constellation;
use dppsd::dpp::{
    dpp_detect_prepared, ml_detect_prepared, se_sd_detect_prepared, BaselineRadius, DetectionResult, DetectorConfig,
    PreparedInstance,
};
use dppsd::predictor::RbfnModel;
use dppsd::search::{sphere_decode, SubtreeProgress};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Detectors a sweep can run. The string forms are the `detector` column
/// of the result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorId {
    /// SE sphere decoder, radius from the noise statistics.
    SeSd,
    /// SE sphere decoder with an unbounded initial radius.
    SeSdInf,
    /// Exhaustive search (small systems only).
    Ml,
    /// Learned radius, ordering and early termination.
    DppSd,
    DppRadius,
    DppOrdering,
    DppOrderingEt,
}

impl DetectorId {
    pub const ALL: [DetectorId; 7] = [
        DetectorId::SeSd,
        DetectorId::SeSdInf,
        DetectorId::Ml,
        DetectorId::DppSd,
        DetectorId::DppRadius,
        DetectorId::DppOrdering,
        DetectorId::DppOrderingEt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::SeSd => "se-sd",
            DetectorId::SeSdInf => "se-sd-inf",
            DetectorId::Ml => "ml",
            DetectorId::DppSd => "dpp-sd",
            DetectorId::DppRadius => "dpp-radius",
            DetectorId::DppOrdering => "dpp-ordering",
            DetectorId::DppOrderingEt => "dpp-ordering-et",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(
            self,
            DetectorId::DppSd | DetectorId::DppRadius | DetectorId::DppOrdering | DetectorId::DppOrderingEt
        )
    }

    pub fn config(self, lambda1: f64, lambda2: f64, epsilon_complement: f64) -> Option<DetectorConfig> {
        let c = match self {
            DetectorId::DppSd => DetectorConfig::full(lambda1, lambda2),
            DetectorId::DppRadius => DetectorConfig::radius_only(lambda1),
            DetectorId::DppOrdering => DetectorConfig::ordering_only(),
            DetectorId::DppOrderingEt => DetectorConfig::ordering_with_termination(lambda2),
            _ => return None,
        };
        Some(DetectorConfig {
            epsilon_complement,
            ..c
        })
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        DetectorId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| BenchError::invalid("detectors", format!("unknown detector {s:?}")))
    }
}

/// Everything a detector needs besides the instance.
pub struct DetectorContext<'a> {
    pub constellation: &'a Constellation,
    pub model: Option<&'a RbfnModel>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon_complement: f64,
}

pub fn run_detector(
    id: DetectorId,
    ctx: &DetectorContext<'_>,
    prepared: &PreparedInstance,
    noise_variance: f64,
) -> Result<DetectionResult> {
    let c = ctx.constellation;
    let result = match id {
        DetectorId::SeSd => se_sd_detect_prepared(
            prepared,
            noise_variance,
            c,
            BaselineRadius::Conventional {
                epsilon_complement: ctx.epsilon_complement,
            },
        )?,
        DetectorId::SeSdInf => se_sd_detect_prepared(prepared, noise_variance, c, BaselineRadius::Infinite)?,
        DetectorId::Ml => ml_detect_prepared(prepared, c)?,
        _ => {
            let model = ctx
                .model
                .ok_or_else(|| BenchError::invalid("model_path", format!("{id} needs a trained model")))?;
            let config = id
                .config(ctx.lambda1, ctx.lambda2, ctx.epsilon_complement)
                .expect("learned detector");
            dpp_detect_prepared(prepared, noise_variance, model, &config, c)?
        }
    };
    Ok(result)
}

/// What early termination did to one instance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TerminationAudit {
    /// Some unsearched sub-tree holds a leaf within `λ₂·f̂`, so the true
    /// minima would not have allowed the stop.
    pub unjustified: bool,
    /// The answer differs from the same search run to completion.
    pub changed_result: bool,
}

/// Compares a terminated detection with the same detector run without
/// termination, and checks the stopping rule against true sub-tree minima.
pub fn audit_termination(
    id: DetectorId,
    ctx: &DetectorContext<'_>,
    prepared: &PreparedInstance,
    noise_variance: f64,
    result: &DetectionResult,
) -> Result<Option<TerminationAudit>> {
    let Some(stop_radius) = result.termination_radius else {
        return Ok(None);
    };
    let model = ctx.model.expect("terminating detectors carry a model");
    let config = id
        .config(ctx.lambda1, ctx.lambda2, ctx.epsilon_complement)
        .expect("terminating detector");
    let full_config = DetectorConfig {
        enable_early_termination: false,
        ..config
    };
    let full = dpp_detect_prepared(prepared, noise_variance, model, &full_config, ctx.constellation)?;
    let changed_result = full.used_fallback != result.used_fallback || (full.metric - result.metric).abs() > 1e-9;

    // Any leaf in the remaining sub-trees within λ₂·f̂? Search those roots
    // first with that radius and stop once they are done.
    let searched = result.subtrees_searched;
    let remaining = result.root_order.len() - searched;
    let mut order = result.root_order[searched..].to_vec();
    order.extend_from_slice(&result.root_order[..searched]);
    let bound = config.lambda2 * stop_radius;
    let mut problem = prepared.problem(ctx.constellation, bound * bound)?;
    let mut stop = |p: &SubtreeProgress| p.completed >= remaining;
    let outcome = sphere_decode(&mut problem, Some(&order), Some(&mut stop));
    Ok(Some(TerminationAudit {
        unjustified: outcome.found(),
        changed_result,
    }))
}
