use serde::{Deserialize, Serialize};

use crate::glm::fit_fluctuation;
use crate::rules::Rule;
use crate::{Error, Result};

use super::mean::substitution_mean;
use super::table::{NuisanceTable, RuleEvaluation};
use super::{CounterfactualEstimate, EstimationOptions, EstimatorKind};

/// Smallest denominator mean accepted before a ratio is declared degenerate.
const MIN_DENOMINATOR: f64 = 1e-10;

/// Clever covariate used for intention-to-treat relative risks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IttCovariate {
    /// Delta-method combination of the two mean covariates,
    /// `(h_a - theta h_0) / psi_0`. Its score is the ratio's influence curve.
    #[default]
    DeltaMethod,
    /// Constant `1/psi_0 - psi_a/psi_0^2` on rows whose target is realistic
    /// and the realistic-rule ratio covariate elsewhere. Kept for
    /// comparison; its score is not the ratio's influence curve, so only
    /// the fluctuation-size criterion stops the iteration.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RrTmleOptions {
    /// Stop once the last fluctuation parameter is below this...
    pub tol: f64,
    /// ...and the influence-curve mean is below this.
    pub score_tol: f64,
    pub max_iter: usize,
    pub itt_covariate: IttCovariate,
}

impl Default for RrTmleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            score_tol: 1e-8,
            max_iter: 50,
            itt_covariate: IttCovariate::DeltaMethod,
        }
    }
}

/// Ratio `E[Y_{d_a}] / E[Y_{d_0}]` for one estimator and rule family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeRiskEstimate {
    pub estimator: EstimatorKind,
    pub rule: Rule,
    pub theta: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// Number of fluctuation steps (0 for plug-in ratios).
    pub iterations: usize,
    pub converged: bool,
    pub epsilon_trace: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_residual: Option<f64>,
}

/// Ratio of two mean estimates from the same estimator.
pub fn relative_risk_plugin(
    numerator: &CounterfactualEstimate,
    denominator: &CounterfactualEstimate,
) -> Result<RelativeRiskEstimate> {
    if numerator.estimator != denominator.estimator || numerator.rule.family != denominator.rule.family {
        return Err(Error::validation("relative risk", "numerator and denominator differ in estimator or family"));
    }
    if !(denominator.psi.abs() >= MIN_DENOMINATOR) {
        return Err(Error::DegenerateDenominator { value: denominator.psi });
    }
    Ok(RelativeRiskEstimate {
        estimator: numerator.estimator,
        rule: numerator.rule,
        theta: numerator.psi / denominator.psi,
        numerator: numerator.psi,
        denominator: denominator.psi,
        iterations: 0,
        converged: true,
        epsilon_trace: Vec::new(),
        score_residual: None,
    })
}

/// Iterated targeting of the relative risk of `rule` against the same
/// family at level 0. Each step recomputes both means and the ratio from
/// the current outcome predictions, fits one fluctuation along the ratio's
/// clever covariate and updates predictions at every level.
pub fn tmle_relative_risk(
    table: &NuisanceTable,
    rule: &Rule,
    opts: &EstimationOptions,
    rr: &RrTmleOptions,
) -> Result<RelativeRiskEstimate> {
    let eval_a = table.evaluate(rule, opts.set_source)?;
    let eval_0 = table.evaluate(&rule.retarget(0), opts.set_source)?;
    let literal = rr.itt_covariate == IttCovariate::Literal && rule.family == crate::rules::RuleFamily::Itt;
    // The literal variant uses realistic-rule assignments off the target's set.
    let (real_a, real_0) = if literal {
        let realistic = Rule::realistic(rule.target, rule.alpha).with_policy(rule.empty_set_policy);
        (
            Some(table.evaluate(&realistic, opts.set_source)?),
            Some(table.evaluate(&realistic.retarget(0), opts.set_source)?),
        )
    } else {
        (None, None)
    };
    let source = opts.tmle_weights;
    let n = table.len();
    let k = table.n_levels();

    // Mean clever covariates do not change across iterations.
    let mut ha = vec![0.0; n * k];
    let mut h0 = vec![0.0; n * k];
    for i in 0..n {
        for level in 0..k {
            ha[i * k + level] = eval_a.clever(table, i, level, source)?;
            h0[i * k + level] = eval_0.clever(table, i, level, source)?;
            if let (Some(ra), Some(r0)) = (&real_a, &real_0) {
                if eval_a.outside[i] {
                    ha[i * k + level] = ra.clever(table, i, level, source)?;
                    h0[i * k + level] = r0.clever(table, i, level, source)?;
                }
            }
        }
    }
    let covariate = |i: usize, level: usize, theta: f64, psi_a: f64, psi_0: f64| -> f64 {
        let j = i * k + level;
        if literal && !eval_a.outside[i] {
            1.0 / psi_0 - psi_a / (psi_0 * psi_0)
        } else {
            (ha[j] - theta * h0[j]) / psi_0
        }
    };

    let mut current = table.clone();
    let mut trace = Vec::new();
    loop {
        let psi_a = substitution_mean(&current, &eval_a);
        let psi_0 = substitution_mean(&current, &eval_0);
        if !(psi_0 >= MIN_DENOMINATOR) {
            return Err(Error::DegenerateDenominator { value: psi_0 });
        }
        let theta = psi_a / psi_0;
        let residual = ratio_residual(&current, &eval_a, &eval_0, theta, psi_0, |i, l| covariate(i, l, theta, psi_a, psi_0));
        let done = trace.last().is_some_and(|e: &f64| e.abs() < rr.tol) && (literal || residual.abs() <= rr.score_tol);
        if done {
            return Ok(RelativeRiskEstimate {
                estimator: EstimatorKind::Tmle,
                rule: *rule,
                theta,
                numerator: psi_a,
                denominator: psi_0,
                iterations: trace.len(),
                converged: true,
                epsilon_trace: trace,
                score_residual: Some(residual),
            });
        }
        if trace.len() >= rr.max_iter {
            log::warn!(
                "relative-risk targeting for {} target {} stopped after {} steps (residual {residual:e})",
                rule.family,
                rule.target,
                trace.len()
            );
            return Err(Error::FluctuationNotConverged {
                iterations: trace.len(),
                trace,
            });
        }

        let h: Vec<f64> = (0..n).map(|i| covariate(i, current.observed(i), theta, psi_a, psi_0)).collect();
        let offset: Vec<f64> = (0..n).map(|i| current.logit(i, current.observed(i))).collect();
        let eps = fit_fluctuation(current.outcomes(), &h, &offset, &opts.fluctuation)?.epsilon;
        let mut logits = current.logits().to_vec();
        if eps != 0.0 {
            for i in 0..n {
                for level in 0..k {
                    let c = covariate(i, level, theta, psi_a, psi_0);
                    if c != 0.0 {
                        logits[i * k + level] += eps * c;
                    }
                }
            }
        }
        current = current.with_logits(logits)?;
        trace.push(eps);
    }
}

/// Sample mean of the ratio's influence curve at the current predictions:
/// `h(A_i)(Y_i - Q(A_i)) + (Q(d_a) - theta Q(d_0)) / psi_0`.
fn ratio_residual(
    table: &NuisanceTable,
    eval_a: &RuleEvaluation,
    eval_0: &RuleEvaluation,
    theta: f64,
    psi_0: f64,
    covariate: impl Fn(usize, usize) -> f64,
) -> f64 {
    let n = table.len();
    let total: f64 = (0..n)
        .map(|i| {
            let a = table.observed(i);
            let h = covariate(i, a);
            let fluct = if h == 0.0 { 0.0 } else { h * (table.outcome(i) - table.q(i, a)) };
            fluct + (table.q(i, eval_a.assigned[i]) - theta * table.q(i, eval_0.assigned[i])) / psi_0
        })
        .sum();
    total / n as f64
}
