use serde::{Deserialize, Serialize};

use super::multinomial::probabilities;
use super::{fit_logistic, fit_multinomial, Design, FitOptions, FitSummary};
use crate::ingest::{CovariateVector, Dataset};
use crate::{expit, Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

fn resolve(schema: &[String], names: &[String], field: &str) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            schema
                .iter()
                .position(|s| s == n)
                .ok_or_else(|| Error::validation(field, format!("unknown covariate `{n}`")))
        })
        .collect()
}

fn check_alpha_trunc(alpha: f64) -> Result<()> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::validation("alpha_trunc", format!("must lie in [0, 0.5), got {alpha}")));
    }
    Ok(())
}

/// Terms of the outcome regression: main effects for the listed covariates
/// (all of them when `None`), indicators for treatment levels 1..K, and
/// optional treatment-by-covariate interactions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeFormula {
    pub covariates: Option<Vec<String>>,
    #[serde(default)]
    pub interactions: Vec<String>,
}

/// Terms of the treatment model: main effects for the listed covariates
/// (all of them when `None`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentFormula {
    pub covariates: Option<Vec<String>>,
}

/// Predicted outcome probability together with its linear predictor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QPrediction {
    pub probability: f64,
    pub logit: f64,
}

/// Logistic outcome regression `Q(A, W) = expit(m(A, W))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub covariate_names: Vec<String>,
    pub n_levels: usize,
    pub covariate_index: Vec<usize>,
    pub interaction_index: Vec<usize>,
    pub coefficient_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub summary: Option<FitSummary>,
}

impl OutcomeModel {
    fn layout(
        covariate_names: &[String],
        n_levels: usize,
        formula: &OutcomeFormula,
    ) -> Result<(Vec<usize>, Vec<usize>, Vec<String>)> {
        let cov = match &formula.covariates {
            Some(c) => resolve(covariate_names, c, "outcome covariates")?,
            None => (0..covariate_names.len()).collect(),
        };
        let inter = resolve(covariate_names, &formula.interactions, "outcome interactions")?;
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(cov.iter().map(|&j| covariate_names[j].clone()));
        names.extend((1..n_levels).map(|k| format!("A={k}")));
        for &j in &inter {
            names.extend((1..n_levels).map(|k| format!("A={k}:{}", covariate_names[j])));
        }
        Ok((cov, inter, names))
    }

    /// Model with given coefficients, in the order of `coefficient_names`
    /// (intercept, covariates, treatment indicators, interactions).
    pub fn from_coefficients(
        covariate_names: Vec<String>,
        n_levels: usize,
        formula: &OutcomeFormula,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        let (covariate_index, interaction_index, coefficient_names) =
            Self::layout(&covariate_names, n_levels, formula)?;
        if coefficients.len() != coefficient_names.len() {
            return Err(Error::validation(
                "outcome coefficients",
                format!("expected {}, got {}", coefficient_names.len(), coefficients.len()),
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation("outcome coefficients", "must be finite"));
        }
        Ok(Self {
            covariate_names,
            n_levels,
            covariate_index,
            interaction_index,
            coefficient_names,
            coefficients,
            summary: None,
        })
    }

    pub fn fit(dataset: &Dataset, formula: &OutcomeFormula, opts: &FitOptions) -> Result<Self> {
        let k = dataset.n_levels();
        let (covariate_index, interaction_index, coefficient_names) =
            Self::layout(dataset.covariate_names(), k, formula)?;
        let mut model = Self {
            covariate_names: dataset.covariate_names().to_vec(),
            n_levels: k,
            covariate_index,
            interaction_index,
            coefficient_names: coefficient_names.clone(),
            coefficients: Vec::new(),
            summary: None,
        };
        let mut design = Design::new(coefficient_names);
        let mut y = Vec::with_capacity(dataset.len());
        for row in dataset.rows() {
            design.push_row(&model.features(row.a, &row.w));
            y.push(row.y as f64);
        }
        let fit = fit_logistic(&design, &y, None, opts)?;
        model.coefficients = fit.coefficients;
        model.summary = Some(fit.summary);
        Ok(model)
    }

    /// Feature row for treatment level `a` and covariates `w`.
    pub fn features(&self, a: usize, w: &CovariateVector) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.coefficient_names.len());
        x.push(1.0);
        x.extend(self.covariate_index.iter().map(|&j| w.get(j) as f64));
        x.extend((1..self.n_levels).map(|k| (a == k) as u8 as f64));
        for &j in &self.interaction_index {
            let wj = w.get(j) as f64;
            x.extend((1..self.n_levels).map(|k| (a == k) as u8 as f64 * wj));
        }
        x
    }

    fn check(&self, a: usize, w: &CovariateVector) -> Result<()> {
        if w.len() != self.covariate_names.len() {
            return Err(Error::SchemaMismatch {
                expected: self.covariate_names.len(),
                got: w.len(),
            });
        }
        if a >= self.n_levels {
            return Err(Error::validation("treatment", format!("level {a} is not below {}", self.n_levels)));
        }
        Ok(())
    }

    pub fn linear_predictor(&self, a: usize, w: &CovariateVector) -> Result<f64> {
        self.check(a, w)?;
        Ok(self
            .features(a, w)
            .iter()
            .zip(&self.coefficients)
            .map(|(x, b)| x * b)
            .sum())
    }

    pub fn predict_q(&self, a: usize, w: &CovariateVector) -> Result<QPrediction> {
        let logit = self.linear_predictor(a, w)?;
        Ok(QPrediction {
            probability: expit(logit),
            logit,
        })
    }
}

/// A (level, covariate) cell fixed at probability zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralZero {
    pub level: usize,
    pub feature: String,
}

/// Multinomial-logistic treatment mechanism `g(a | W)`, reference level 0,
/// reported with a probability floor `alpha_trunc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreatmentModel {
    pub covariate_names: Vec<String>,
    pub n_levels: usize,
    pub covariate_index: Vec<usize>,
    pub coefficient_names: Vec<String>,
    /// `coefficients[k - 1]` belongs to level `k`.
    pub coefficients: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
    pub structural_zeros: Vec<StructuralZero>,
    pub empty_levels: Vec<usize>,
    pub alpha_trunc: f64,
    pub summary: Option<FitSummary>,
}

impl TreatmentModel {
    fn layout(covariate_names: &[String], formula: &TreatmentFormula) -> Result<(Vec<usize>, Vec<String>)> {
        let cov = match &formula.covariates {
            Some(c) => resolve(covariate_names, c, "treatment covariates")?,
            None => (0..covariate_names.len()).collect(),
        };
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(cov.iter().map(|&j| covariate_names[j].clone()));
        Ok((cov, names))
    }

    /// Model with given per-level coefficients (levels 1..K, each in the
    /// order intercept then covariates). Each structural zero names a level
    /// and a covariate whose indicator switches that level off.
    pub fn from_coefficients(
        covariate_names: Vec<String>,
        n_levels: usize,
        formula: &TreatmentFormula,
        coefficients: Vec<Vec<f64>>,
        structural_zeros: Vec<StructuralZero>,
    ) -> Result<Self> {
        let (covariate_index, coefficient_names) = Self::layout(&covariate_names, formula)?;
        let p = coefficient_names.len();
        if coefficients.len() + 1 != n_levels || coefficients.iter().any(|c| c.len() != p) {
            return Err(Error::validation(
                "treatment coefficients",
                format!("expected {} levels of {p} coefficients", n_levels - 1),
            ));
        }
        if coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::validation("treatment coefficients", "must be finite"));
        }
        let mut mask = vec![vec![false; p]; n_levels - 1];
        for z in &structural_zeros {
            let j = coefficient_names
                .iter()
                .position(|n| n == &z.feature)
                .filter(|&j| j > 0)
                .ok_or_else(|| Error::validation("structural zero", format!("unknown covariate `{}`", z.feature)))?;
            if z.level == 0 || z.level >= n_levels {
                return Err(Error::validation("structural zero", format!("level {} out of range", z.level)));
            }
            mask[z.level - 1][j] = true;
        }
        Ok(Self {
            covariate_names,
            n_levels,
            covariate_index,
            coefficient_names,
            coefficients,
            mask,
            structural_zeros,
            empty_levels: Vec::new(),
            alpha_trunc: 0.0,
            summary: None,
        })
    }

    pub fn fit(dataset: &Dataset, formula: &TreatmentFormula, opts: &FitOptions) -> Result<Self> {
        let (covariate_index, coefficient_names) = Self::layout(dataset.covariate_names(), formula)?;
        let mut design = Design::new(coefficient_names.clone());
        let mut a = Vec::with_capacity(dataset.len());
        let mut x = Vec::with_capacity(coefficient_names.len());
        for row in dataset.rows() {
            x.clear();
            x.push(1.0);
            x.extend(covariate_index.iter().map(|&j| row.w.get(j) as f64));
            design.push_row(&x);
            a.push(row.a);
        }
        let fit = fit_multinomial(&design, &a, dataset.n_levels(), opts)?;
        for &(level, j) in &fit.structural_zeros {
            log::debug!("structural zero: level {level} never observed with {}", coefficient_names[j]);
        }
        Ok(Self {
            covariate_names: dataset.covariate_names().to_vec(),
            n_levels: dataset.n_levels(),
            covariate_index,
            structural_zeros: fit
                .structural_zeros
                .iter()
                .map(|&(level, j)| StructuralZero {
                    level,
                    feature: coefficient_names[j].clone(),
                })
                .collect(),
            coefficient_names,
            coefficients: fit.coefficients,
            mask: fit.mask,
            empty_levels: fit.empty_levels,
            alpha_trunc: 0.0,
            summary: Some(fit.summary),
        })
    }

    /// Copy of the model that reports probabilities floored at `alpha_trunc`.
    pub fn with_truncation(mut self, alpha_trunc: f64) -> Result<Self> {
        check_alpha_trunc(alpha_trunc)?;
        self.alpha_trunc = alpha_trunc;
        Ok(self)
    }

    fn check(&self, w: &CovariateVector) -> Result<()> {
        if w.len() != self.covariate_names.len() {
            return Err(Error::SchemaMismatch {
                expected: self.covariate_names.len(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// Untruncated probabilities; they sum to one.
    pub fn raw_probabilities(&self, w: &CovariateVector) -> Result<Vec<f64>> {
        self.check(w)?;
        let mut x = Vec::with_capacity(self.coefficient_names.len());
        x.push(1.0);
        x.extend(self.covariate_index.iter().map(|&j| w.get(j) as f64));
        Ok(probabilities(&x, &self.coefficients, &self.mask))
    }

    /// Probabilities floored at `alpha_trunc`, without renormalising.
    pub fn predict_g(&self, w: &CovariateVector) -> Result<Vec<f64>> {
        Ok(truncate(&self.raw_probabilities(w)?, self.alpha_trunc))
    }
}

/// Elementwise floor; the result is not renormalised.
pub(crate) fn truncate(probs: &[f64], alpha_trunc: f64) -> Vec<f64> {
    probs.iter().map(|&p| p.max(alpha_trunc)).collect()
}

/// How both nuisance models are specified and fitted. Bootstrap and
/// simulation replicates refit through the same spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpec {
    pub treatment: TreatmentFormula,
    pub outcome: OutcomeFormula,
    pub alpha_trunc: f64,
    pub fit: FitOptions,
}

impl Default for NuisanceSpec {
    fn default() -> Self {
        Self {
            treatment: TreatmentFormula::default(),
            outcome: OutcomeFormula::default(),
            alpha_trunc: 0.05,
            fit: FitOptions::default(),
        }
    }
}

/// The pair of fitted nuisance models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceModels {
    pub treatment: TreatmentModel,
    pub outcome: OutcomeModel,
}

impl NuisanceSpec {
    pub fn fit(&self, dataset: &Dataset) -> Result<NuisanceModels> {
        Ok(NuisanceModels {
            treatment: self.fit_treatment(dataset)?,
            outcome: OutcomeModel::fit(dataset, &self.outcome, &self.fit)?,
        })
    }

    pub fn fit_treatment(&self, dataset: &Dataset) -> Result<TreatmentModel> {
        TreatmentModel::fit(dataset, &self.treatment, &self.fit)?.with_truncation(self.alpha_trunc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Observation;

    fn cv(v: &[u8]) -> CovariateVector {
        CovariateVector::new(v.to_vec()).unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn truncation_floors_without_renormalising() {
        assert_eq!(truncate(&[0.50, 0.47, 0.03], 0.05), vec![0.50, 0.47, 0.05]);
        assert_eq!(truncate(&[0.50, 0.47, 0.03], 0.0), vec![0.50, 0.47, 0.03]);
    }

    #[test]
    fn intercept_only_treatment_model() {
        let rows: Vec<Observation> = [(0, 10), (1, 10), (2, 20)]
            .iter()
            .flat_map(|&(a, c)| std::iter::repeat_n(Observation { w: cv(&[0]), a, y: 0 }, c))
            .collect();
        let data = Dataset::new(names(&["X"]), 3, rows).unwrap();
        let formula = TreatmentFormula {
            covariates: Some(vec![]),
        };
        let g = TreatmentModel::fit(&data, &formula, &FitOptions::default()).unwrap();
        let probs = g.predict_g(&cv(&[1])).unwrap();
        for (p, e) in probs.iter().zip([0.25, 0.25, 0.5]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_give_half() {
        let q = OutcomeModel::from_coefficients(names(&["X1", "X2"]), 3, &OutcomeFormula::default(), vec![0.0; 5])
            .unwrap();
        let pred = q.predict_q(2, &cv(&[1, 0])).unwrap();
        assert_eq!(pred.probability, 0.5);
        assert_eq!(pred.logit, 0.0);
    }

    #[test]
    fn hand_built_outcome_model() {
        // intercept, X1, X2, A=1, A=2, A=1:X1, A=2:X1
        let formula = OutcomeFormula {
            covariates: None,
            interactions: vec!["X1".into()],
        };
        let coef = vec![-1.0, 0.5, -0.25, 0.3, -0.7, 0.2, 1.1];
        let q = OutcomeModel::from_coefficients(names(&["X1", "X2"]), 3, &formula, coef).unwrap();
        let m = -1.0 + 0.5 * 1.0 - 0.25 * 1.0 - 0.7 + 1.1;
        let pred = q.predict_q(2, &cv(&[1, 1])).unwrap();
        assert!((pred.logit - m).abs() < 1e-15);
        assert!((pred.probability - 1.0 / (1.0 + (-m).exp())).abs() < 1e-15);
        assert_eq!(q.coefficient_names[6], "A=2:X1");
    }

    #[test]
    fn schema_mismatch_is_error() {
        let q = OutcomeModel::from_coefficients(names(&["X1", "X2"]), 3, &OutcomeFormula::default(), vec![0.0; 5])
            .unwrap();
        assert!(matches!(q.predict_q(0, &cv(&[1])), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn structural_zero_coefficients() {
        let g = TreatmentModel::from_coefficients(
            names(&["FRAIL"]),
            3,
            &TreatmentFormula::default(),
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![StructuralZero {
                level: 2,
                feature: "FRAIL".into(),
            }],
        )
        .unwrap();
        assert_eq!(g.raw_probabilities(&cv(&[1])).unwrap(), vec![0.5, 0.5, 0.0]);
        let third = 1.0 / 3.0;
        for p in g.raw_probabilities(&cv(&[0])).unwrap() {
            assert!((p - third).abs() < 1e-15);
        }
        let g = g.with_truncation(0.05).unwrap();
        assert_eq!(g.predict_g(&cv(&[1])).unwrap(), vec![0.5, 0.5, 0.05]);
        assert!(g.clone().with_truncation(0.5).is_err());
    }
}
