use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::inference::IntervalEstimate;
use crate::rules::{EmptySetPolicy, Rule, RuleFamily, DEFAULT_ALPHA};
use crate::{Error, Result};

use super::relative::{relative_risk_plugin, tmle_relative_risk, RrTmleOptions};
use super::table::NuisanceTable;
use super::{estimate, EstimationOptions, EstimatorKind};

/// Grid of rule families, targets and estimators to evaluate together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub families: Vec<RuleFamily>,
    pub targets: Vec<usize>,
    pub estimators: Vec<EstimatorKind>,
    pub alpha: f64,
    pub empty_set_policy: EmptySetPolicy,
    pub options: EstimationOptions,
    pub relative_risk: RrTmleOptions,
}

impl SuiteSpec {
    /// All families and estimators for targets `1..k`.
    pub fn standard(k: usize) -> Self {
        Self {
            families: RuleFamily::ALL.to_vec(),
            targets: (1..k).collect(),
            estimators: EstimatorKind::ALL.to_vec(),
            alpha: DEFAULT_ALPHA,
            empty_set_policy: EmptySetPolicy::Error,
            options: EstimationOptions::default(),
            relative_risk: RrTmleOptions::default(),
        }
    }

    pub fn rule(&self, family: RuleFamily, target: usize) -> Rule {
        Rule::new(family, target, self.alpha).with_policy(self.empty_set_policy)
    }
}

/// A number or the reason it could not be computed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalEstimate>,
}

impl CellResult {
    fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Self {
                value: Some(v),
                ..Self::default()
            },
            Err(e) => Self {
                error: Some(e.to_string()),
                ..Self::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub family: RuleFamily,
    pub target: usize,
    pub estimator: EstimatorKind,
    pub psi: CellResult,
    pub relative_risk: CellResult,
    /// Fluctuation steps taken by the targeted relative risk.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rr_iterations: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    Psi,
    RelativeRisk,
}

/// Estimates for every cell of a [`SuiteSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub spec: SuiteSpec,
    pub cells: Vec<SuiteCell>,
}

/// Evaluates every (family, target, estimator) cell. Failures are kept per
/// cell so one infeasible rule does not hide the rest of the grid.
pub fn estimate_suite(table: &NuisanceTable, spec: &SuiteSpec) -> Result<EstimateReport> {
    if spec.families.is_empty() || spec.targets.is_empty() || spec.estimators.is_empty() {
        return Err(Error::validation("suite", "families, targets and estimators must be non-empty"));
    }
    for &t in &spec.targets {
        spec.rule(RuleFamily::Static, t).validate(table.n_levels())?;
    }
    let mut cells = Vec::new();
    for &family in &spec.families {
        for &estimator in &spec.estimators {
            let reference = estimate(estimator, table, &spec.rule(family, 0), &spec.options);
            for &target in &spec.targets {
                let rule = spec.rule(family, target);
                let mean = estimate(estimator, table, &rule, &spec.options);
                let mut rr_iterations = None;
                let rr = if estimator == EstimatorKind::Tmle {
                    tmle_relative_risk(table, &rule, &spec.options, &spec.relative_risk).map(|r| {
                        rr_iterations = Some(r.iterations);
                        r.theta
                    })
                } else {
                    match (&mean, &reference) {
                        (Ok(m), Ok(r)) => relative_risk_plugin(m, r).map(|r| r.theta),
                        (Err(e), _) => Err(Error::validation("relative risk", format!("numerator failed: {e}"))),
                        (_, Err(e)) => Err(Error::validation("relative risk", format!("reference failed: {e}"))),
                    }
                };
                if let Err(e) = &mean {
                    log::warn!("{family} target {target} {estimator}: {e}");
                }
                cells.push(SuiteCell {
                    family,
                    target,
                    estimator,
                    psi: CellResult::from_result(mean.map(|m| m.psi)),
                    relative_risk: CellResult::from_result(rr),
                    rr_iterations,
                });
            }
        }
    }
    Ok(EstimateReport {
        n: table.len(),
        spec: spec.clone(),
        cells,
    })
}

impl EstimateReport {
    pub fn cell(&self, family: RuleFamily, target: usize, estimator: EstimatorKind) -> Option<&SuiteCell> {
        self.cells
            .iter()
            .find(|c| c.family == family && c.target == target && c.estimator == estimator)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// One row per (family, target), one column per estimator; cells are
    /// `est (lo, hi)` when an interval is attached and `NA` on failure.
    pub fn write_table_csv<W: Write>(&self, writer: W, measure: Measure, decimals: usize) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["family".to_string(), "target".to_string()];
        header.extend(self.spec.estimators.iter().map(|e| e.to_string()));
        out.write_record(&header)?;
        let mut rows: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
        for c in &self.cells {
            let family_pos = self.spec.families.iter().position(|&f| f == c.family).unwrap_or(0);
            let target_pos = self.spec.targets.iter().position(|&t| t == c.target).unwrap_or(0);
            let result = match measure {
                Measure::Psi => &c.psi,
                Measure::RelativeRisk => &c.relative_risk,
            };
            rows.entry((family_pos, target_pos)).or_default().push(format_cell(result, decimals));
        }
        for ((f, t), values) in rows {
            let mut record = vec![self.spec.families[f].to_string(), self.spec.targets[t].to_string()];
            record.extend(values);
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn format_cell(result: &CellResult, decimals: usize) -> String {
    match (result.value, &result.interval) {
        (None, _) => "NA".into(),
        (Some(v), None) => format!("{v:.decimals$}"),
        (Some(v), Some(ci)) => format!("{v:.decimals$} ({:.decimals$}, {:.decimals$})", ci.lower, ci.upper),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::mean::tests::four_rows;

    #[test]
    fn suite_covers_the_grid_and_formats_failures() {
        let t = four_rows();
        let mut spec = SuiteSpec::standard(2);
        spec.options = spec.options.with_weights(crate::estimators::WeightSource::Raw);
        let report = estimate_suite(&t, &spec).unwrap();
        assert_eq!(report.cells.len(), 3 * 4);
        let cell = report.cell(RuleFamily::Static, 1, EstimatorKind::Gcomp).unwrap();
        assert!((cell.psi.value.unwrap() - 0.475).abs() < 1e-12);

        let mut buf = Vec::new();
        report.write_table_csv(&mut buf, Measure::Psi, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "family,target,gcomp,iptw,driptw,tmle");
        assert!(lines.next().unwrap().starts_with("static,1,0.4"));
    }

    #[test]
    fn infeasible_rule_is_reported_per_cell() {
        // Level 0 is never realistic, so realistic rules have nowhere to go.
        let t = NuisanceTable::from_probabilities(2, vec![1, 1], vec![1.0, 0.0], vec![0.01, 0.99, 0.01, 0.99], vec![0.5; 4])
            .unwrap();
        let mut spec = SuiteSpec::standard(2);
        spec.families = vec![RuleFamily::Realistic];
        spec.estimators = vec![EstimatorKind::Gcomp];
        let report = estimate_suite(&t, &spec).unwrap();
        let cell = &report.cells[0];
        assert!(cell.psi.value.is_some());
        assert!(cell.relative_risk.error.is_some());
        let mut buf = Vec::new();
        report.write_table_csv(&mut buf, Measure::RelativeRisk, 2).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("realistic,1,NA"));
    }
}
