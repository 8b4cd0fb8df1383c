use crate::rules::Rule;
use crate::Result;

use super::table::{NuisanceTable, RuleEvaluation};
use super::{CounterfactualEstimate, EstimateDiagnostics, EstimationOptions, EstimatorKind, WeightSource, WeightSummary};

/// Substitution estimator: mean of `Q(d_i, W_i)`.
pub fn gcomp(table: &NuisanceTable, rule: &Rule, opts: &EstimationOptions) -> Result<CounterfactualEstimate> {
    let eval = table.evaluate(rule, opts.set_source)?;
    let psi = substitution_mean(table, &eval);
    Ok(finish(EstimatorKind::Gcomp, table, eval, psi, None))
}

/// Inverse-probability-weighted estimator. For intention-to-treat rules,
/// rows whose target is not realistic contribute their observed outcome.
pub fn iptw(table: &NuisanceTable, rule: &Rule, opts: &EstimationOptions) -> Result<CounterfactualEstimate> {
    let eval = table.evaluate(rule, opts.set_source)?;
    let h = eval.clever_observed(table, opts.iptw_weights)?;
    let psi = h.iter().zip(table.outcomes()).map(|(w, y)| w * y).sum::<f64>() / table.len() as f64;
    let weights = weight_summary(&eval, &h);
    Ok(finish(EstimatorKind::Iptw, table, eval, psi, weights))
}

/// Doubly robust (augmented) weighted estimator.
pub fn driptw(table: &NuisanceTable, rule: &Rule, opts: &EstimationOptions) -> Result<CounterfactualEstimate> {
    let eval = table.evaluate(rule, opts.set_source)?;
    let h = eval.clever_observed(table, opts.driptw_weights)?;
    let psi = dr_mean(table, &eval, &h);
    let weights = weight_summary(&eval, &h);
    Ok(finish(EstimatorKind::Driptw, table, eval, psi, weights))
}

pub(crate) fn substitution_mean(table: &NuisanceTable, eval: &RuleEvaluation) -> f64 {
    (0..table.len()).map(|i| table.q(i, eval.assigned[i])).sum::<f64>() / table.len() as f64
}

/// `mean[h_i (Y_i - Q(A_i, W_i)) + Q(d_i, W_i)]` with `h` the clever
/// covariate at the observed level.
pub(crate) fn dr_mean(table: &NuisanceTable, eval: &RuleEvaluation, h: &[f64]) -> f64 {
    let total: f64 = (0..table.len())
        .map(|i| {
            let residual = if h[i] == 0.0 {
                0.0
            } else {
                h[i] * (table.outcome(i) - table.q(i, table.observed(i)))
            };
            residual + table.q(i, eval.assigned[i])
        })
        .sum();
    total / table.len() as f64
}

/// Inverse weights of rows that follow the rule; intention-to-treat rows
/// outside their realistic set (weight 1 by construction) are excluded.
pub fn weight_summary(eval: &RuleEvaluation, h: &[f64]) -> Option<WeightSummary> {
    let used: Vec<f64> = h
        .iter()
        .zip(&eval.outside)
        .filter(|(&w, &out)| w != 0.0 && !out)
        .map(|(&w, _)| w)
        .collect();
    if used.is_empty() {
        return None;
    }
    Some(WeightSummary {
        nonzero: used.len(),
        mean: used.iter().sum::<f64>() / used.len() as f64,
        max: used.iter().cloned().fold(f64::MIN, f64::max),
    })
}

pub(crate) fn finish(
    estimator: EstimatorKind,
    table: &NuisanceTable,
    eval: RuleEvaluation,
    psi: f64,
    weights: Option<WeightSummary>,
) -> CounterfactualEstimate {
    CounterfactualEstimate {
        estimator,
        rule: eval.rule,
        psi,
        diagnostics: EstimateDiagnostics {
            assigned_counts: eval.assigned_counts(table.n_levels()),
            weights,
            epsilon: None,
            score_residual: None,
        },
    }
}

impl WeightSource {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightSource::Truncated => "truncated",
            WeightSource::Raw => "raw",
        }
    }
}
