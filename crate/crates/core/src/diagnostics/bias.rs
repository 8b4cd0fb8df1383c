use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GeneratingDistribution;
use crate::estimators::{estimate, EstimationOptions, EstimatorKind, NuisanceTable};
use crate::glm::{NuisanceSpec, OutcomeModel};
use crate::inference::replicate_rng;
use crate::rules::{EmptySetPolicy, Rule, RuleFamily, DEFAULT_ALPHA};
use crate::{Error, Result};

/// Settings for the simulation bias diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    pub replicates: usize,
    pub n_sim: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub alpha: f64,
    pub families: Vec<RuleFamily>,
    /// Targets to evaluate; all levels when empty.
    pub targets: Vec<usize>,
    pub empty_set_policy: EmptySetPolicy,
    pub nuisance: NuisanceSpec,
    pub options: EstimationOptions,
    /// Refit the treatment model on each simulated sample (otherwise the
    /// generating model, truncated, is reused).
    pub refit_treatment: bool,
    /// Refit the outcome model for estimators that use it.
    pub refit_outcome: bool,
    pub max_failure_fraction: f64,
}

impl DiagnosticConfig {
    pub fn new(n_sim: usize, seed: u64) -> Self {
        Self {
            replicates: 500,
            n_sim,
            seed,
            estimator: EstimatorKind::Iptw,
            alpha: DEFAULT_ALPHA,
            families: RuleFamily::ALL.to_vec(),
            targets: Vec::new(),
            empty_set_policy: EmptySetPolicy::Error,
            nuisance: NuisanceSpec::default(),
            options: EstimationOptions::default(),
            refit_treatment: true,
            refit_outcome: true,
            max_failure_fraction: 0.10,
        }
    }

    fn rules(&self, k: usize) -> Vec<Rule> {
        let targets: Vec<usize> = if self.targets.is_empty() {
            (0..k).collect()
        } else {
            self.targets.clone()
        };
        self.families
            .iter()
            .flat_map(|&f| {
                targets
                    .iter()
                    .map(move |&t| Rule::new(f, t, self.alpha).with_policy(self.empty_set_policy))
            })
            .collect()
    }
}

/// Bias of one rule's estimates against the exact mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasCell {
    pub family: RuleFamily,
    pub target: usize,
    pub truth: Option<f64>,
    pub mean_estimate: Option<f64>,
    pub bias: Option<f64>,
    pub bias_percent: Option<f64>,
    /// Monte-Carlo standard error of `mean_estimate`.
    pub mc_se: Option<f64>,
    pub replicates_used: usize,
    /// Average exact mean when realistic sets come from each replicate's
    /// fitted treatment model instead of the generating one.
    pub fitted_set_truth: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub estimator: EstimatorKind,
    pub alpha: f64,
    pub alpha_trunc: f64,
    pub replicates: usize,
    pub n_sim: usize,
    pub seed: u64,
    pub failed_replicates: usize,
    pub families: Vec<RuleFamily>,
    pub cells: Vec<BiasCell>,
}

struct Draw {
    estimates: Vec<Option<f64>>,
    fitted_truths: Vec<Option<f64>>,
}

/// Simulates `replicates` samples from `gen`, estimates every rule on each
/// and compares the average to the exact mean.
pub fn eta_bias_diagnostic(gen: &GeneratingDistribution, cfg: &DiagnosticConfig) -> Result<BiasReport> {
    if cfg.replicates == 0 || cfg.n_sim == 0 {
        return Err(Error::validation("replicates", "replicates and n_sim must be positive"));
    }
    let rules = cfg.rules(gen.n_levels());
    for rule in &rules {
        rule.validate(gen.n_levels())?;
    }
    let truths: Vec<Result<f64>> = rules.iter().map(|r| gen.true_psi(r)).collect();
    let needs_q = cfg.estimator != EstimatorKind::Iptw;

    let draws: Vec<Result<Draw>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let data = gen.generate_with(&mut replicate_rng(cfg.seed, r), cfg.n_sim)?;
            let g = if cfg.refit_treatment {
                cfg.nuisance.fit_treatment(&data)?
            } else {
                gen.treatment().clone().with_truncation(cfg.nuisance.alpha_trunc)?
            };
            let q = if needs_q && cfg.refit_outcome {
                OutcomeModel::fit(&data, &cfg.nuisance.outcome, &cfg.nuisance.fit)?
            } else {
                gen.outcome().clone()
            };
            let table = NuisanceTable::from_models(&data, &g, &q)?;
            let estimates = rules
                .iter()
                .map(|rule| estimate(cfg.estimator, &table, rule, &cfg.options).ok().map(|e| e.psi))
                .collect();
            let fitted_truths = rules
                .iter()
                .map(|rule| {
                    if cfg.refit_treatment {
                        gen.true_psi_with_sets(rule, &g).ok()
                    } else {
                        None
                    }
                })
                .collect();
            Ok(Draw {
                estimates,
                fitted_truths,
            })
        })
        .collect();

    let failed = draws.iter().filter(|d| d.is_err()).count();
    if let Some(Err(e)) = draws.iter().find(|d| d.is_err()) {
        log::warn!("{failed} of {} simulated replicates failed; first error: {e}", cfg.replicates);
    }
    let ok: Vec<&Draw> = draws.iter().filter_map(|d| d.as_ref().ok()).collect();
    let cells = rules
        .iter()
        .zip(truths)
        .enumerate()
        .map(|(j, (rule, truth))| summarize(j, rule, truth, &ok, cfg))
        .collect();
    Ok(BiasReport {
        estimator: cfg.estimator,
        alpha: cfg.alpha,
        alpha_trunc: cfg.nuisance.alpha_trunc,
        replicates: cfg.replicates,
        n_sim: cfg.n_sim,
        seed: cfg.seed,
        failed_replicates: failed,
        families: cfg.families.clone(),
        cells,
    })
}

fn summarize(j: usize, rule: &Rule, truth: Result<f64>, draws: &[&Draw], cfg: &DiagnosticConfig) -> BiasCell {
    let mut cell = BiasCell {
        family: rule.family,
        target: rule.target,
        truth: None,
        mean_estimate: None,
        bias: None,
        bias_percent: None,
        mc_se: None,
        replicates_used: 0,
        fitted_set_truth: None,
        error: None,
    };
    let truth = match truth {
        Ok(t) => t,
        Err(e) => {
            cell.error = Some(format!("truth: {e}"));
            return cell;
        }
    };
    cell.truth = Some(truth);
    let values: Vec<f64> = draws.iter().filter_map(|d| d.estimates[j]).filter(|v| v.is_finite()).collect();
    cell.replicates_used = values.len();
    let failed = cfg.replicates - values.len();
    if values.is_empty() || failed as f64 > cfg.max_failure_fraction * cfg.replicates as f64 {
        cell.error = Some(Error::TooManyFailures { failed, total: cfg.replicates }.to_string());
        return cell;
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    cell.mean_estimate = Some(mean);
    cell.bias = Some(mean - truth);
    cell.bias_percent = (truth != 0.0).then(|| 100.0 * (mean - truth) / truth);
    cell.mc_se = Some((var / m).sqrt());
    let fitted: Vec<f64> = draws.iter().filter_map(|d| d.fitted_truths[j]).collect();
    if !fitted.is_empty() {
        cell.fitted_set_truth = Some(fitted.iter().sum::<f64>() / fitted.len() as f64);
    }
    cell
}

impl BiasReport {
    pub fn cell(&self, family: RuleFamily, target: usize) -> Option<&BiasCell> {
        self.cells.iter().find(|c| c.family == family && c.target == target)
    }

    /// Largest absolute bias percentage among `families`; `None` if any
    /// of their cells lacks one.
    pub fn max_abs_bias_percent(&self, families: &[RuleFamily]) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| families.contains(&c.family))
            .map(|c| c.bias_percent.map(f64::abs))
            .try_fold(0.0f64, |acc, b| b.map(|b| acc.max(b)))
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// Rows are targets, columns rule families, cells bias percentages.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["target".to_string()];
        header.extend(self.families.iter().map(|f| f.label().to_string()));
        out.write_record(&header)?;
        let mut targets: Vec<usize> = self.cells.iter().map(|c| c.target).collect();
        targets.sort_unstable();
        targets.dedup();
        for t in targets {
            let mut record = vec![t.to_string()];
            for &f in &self.families {
                record.push(match self.cell(f, t).and_then(|c| c.bias_percent) {
                    Some(b) => format!("{b:.2}%"),
                    None => "NA".into(),
                });
            }
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub max_abs_bias_percent: Option<f64>,
    pub acceptable: bool,
    pub report: BiasReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub threshold_percent: f64,
    pub rows: Vec<SweepRow>,
    /// Smallest threshold whose realistic and intention-to-treat biases
    /// all stay below `threshold_percent`.
    pub smallest_acceptable: Option<f64>,
}

/// Runs the diagnostic for realistic and intention-to-treat rules at each
/// `alpha` (ascending) and reports the smallest one with negligible bias.
pub fn alpha_sweep(
    gen: &GeneratingDistribution,
    cfg: &DiagnosticConfig,
    alphas: &[f64],
    threshold_percent: f64,
) -> Result<SweepReport> {
    if alphas.is_empty() {
        return Err(Error::validation("alpha_sweep", "empty list"));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("alpha_sweep", "values must be strictly ascending"));
    }
    let families = [RuleFamily::Realistic, RuleFamily::Itt];
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let run = DiagnosticConfig {
            alpha,
            families: families.to_vec(),
            ..cfg.clone()
        };
        let report = eta_bias_diagnostic(gen, &run)?;
        let max = report.max_abs_bias_percent(&families);
        rows.push(SweepRow {
            alpha,
            max_abs_bias_percent: max,
            acceptable: max.is_some_and(|m| m < threshold_percent),
            report,
        });
    }
    let smallest_acceptable = rows.iter().find(|r| r.acceptable).map(|r| r.alpha);
    Ok(SweepReport {
        threshold_percent,
        rows,
        smallest_acceptable,
    })
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["alpha", "max_abs_bias_percent", "acceptable"])?;
        for r in &self.rows {
            out.write_record([
                r.alpha.to_string(),
                r.max_abs_bias_percent.map_or("NA".into(), |m| format!("{m:.2}")),
                r.acceptable.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
