//! Estimators of counterfactual outcome means under a rule and of relative
//! risks against the same rule family at level 0.
//!
//! All estimators read a [`NuisanceTable`]: observed levels and outcomes,
//! treatment probabilities (raw and truncated) and outcome logits at every
//! level for every row.

mod mean;
mod relative;
mod suite;
mod table;
mod tmle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::glm::FitOptions;
use crate::rules::{Rule, SetSource};
use crate::{Error, Result};

pub use mean::{driptw, gcomp, iptw, weight_summary};
pub use relative::{relative_risk_plugin, tmle_relative_risk, IttCovariate, RelativeRiskEstimate, RrTmleOptions};
pub use suite::{estimate_suite, CellResult, EstimateReport, Measure, SuiteCell, SuiteSpec};
pub use table::{NuisanceTable, RuleEvaluation};
pub use tmle::{tmle_mean, tmle_mean_targeted, TargetedMean};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Gcomp,
    Iptw,
    Driptw,
    Tmle,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Gcomp,
        EstimatorKind::Iptw,
        EstimatorKind::Driptw,
        EstimatorKind::Tmle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Gcomp => "gcomp",
            EstimatorKind::Iptw => "iptw",
            EstimatorKind::Driptw => "driptw",
            EstimatorKind::Tmle => "tmle",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcomp" => Ok(EstimatorKind::Gcomp),
            "iptw" => Ok(EstimatorKind::Iptw),
            "driptw" | "dr-iptw" | "dr_iptw" => Ok(EstimatorKind::Driptw),
            "tmle" => Ok(EstimatorKind::Tmle),
            other => Err(Error::validation("estimator", format!("unknown estimator `{other}`"))),
        }
    }
}

/// Which treatment probabilities enter inverse weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    #[default]
    Truncated,
    Raw,
}

/// Per-estimator weight sources and the source of realistic sets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimationOptions {
    pub iptw_weights: WeightSource,
    pub driptw_weights: WeightSource,
    pub tmle_weights: WeightSource,
    pub set_source: SetSource,
    pub fluctuation: FitOptions,
}

impl EstimationOptions {
    /// Same weight source for every weighted estimator.
    pub fn with_weights(mut self, source: WeightSource) -> Self {
        self.iptw_weights = source;
        self.driptw_weights = source;
        self.tmle_weights = source;
        self
    }
}

/// Summary of the nonzero inverse weights used by an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub nonzero: usize,
    pub mean: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    pub assigned_counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSummary>,
    /// Fluctuation parameter (targeted estimates only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Mean of the efficient-influence-curve estimating function at the
    /// final fit (targeted estimates only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_residual: Option<f64>,
}

/// Estimate of `E[Y_d]` for one rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualEstimate {
    pub estimator: EstimatorKind,
    pub rule: Rule,
    pub psi: f64,
    pub diagnostics: EstimateDiagnostics,
}

/// Dispatches to the named estimator.
pub fn estimate(
    kind: EstimatorKind,
    table: &NuisanceTable,
    rule: &Rule,
    opts: &EstimationOptions,
) -> Result<CounterfactualEstimate> {
    match kind {
        EstimatorKind::Gcomp => gcomp(table, rule, opts),
        EstimatorKind::Iptw => iptw(table, rule, opts),
        EstimatorKind::Driptw => driptw(table, rule, opts),
        EstimatorKind::Tmle => tmle_mean(table, rule, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_names_round_trip() {
        for kind in EstimatorKind::ALL {
            assert_eq!(kind.as_str().parse::<EstimatorKind>().unwrap(), kind);
        }
        assert_eq!("DR-IPTW".parse::<EstimatorKind>().unwrap(), EstimatorKind::Driptw);
        assert!("aipw".parse::<EstimatorKind>().is_err());
    }
}
