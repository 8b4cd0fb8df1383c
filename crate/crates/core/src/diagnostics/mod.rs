//! Simulation from a known data-generating distribution, exact
//! rule-specific means under it, and the simulation-based positivity bias
//! diagnostic.
//!
//! Because outcomes are drawn from the outcome model given treatment and
//! covariates, simulated data have no unmeasured confounding; any gap between
//! an estimator's average and the exact mean comes from positivity problems
//! or finite-sample behaviour.

mod bias;
pub mod scenarios;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::estimators::EstimatorKind;
use crate::glm::{OutcomeModel, TreatmentModel};
use crate::ingest::{CovariateVector, Dataset, Observation};
use crate::rules::{realistic_set, RealisticSet, Rule, RuleFamily};
use crate::{expit, Error, Result};

pub use bias::{alpha_sweep, eta_bias_diagnostic, BiasCell, BiasReport, DiagnosticConfig, SweepReport, SweepRow};

/// One covariate pattern with its probability and the model predictions there.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportPoint {
    pub w: CovariateVector,
    pub probability: f64,
    /// Untruncated treatment probabilities.
    pub g: Vec<f64>,
    /// Outcome probabilities at each level.
    pub q: Vec<f64>,
}

/// A finite covariate distribution together with treatment and outcome models.
#[derive(Clone, Debug)]
pub struct GeneratingDistribution {
    covariate_names: Vec<String>,
    n_levels: usize,
    treatment: TreatmentModel,
    outcome: OutcomeModel,
    support: Vec<SupportPoint>,
    cumulative: Vec<f64>,
}

impl GeneratingDistribution {
    /// Covariates drawn from the rows of `dataset` (each row equally likely).
    pub fn from_dataset(dataset: &Dataset, treatment: TreatmentModel, outcome: OutcomeModel) -> Result<Self> {
        let mut counts: BTreeMap<&CovariateVector, usize> = BTreeMap::new();
        for row in dataset.rows() {
            *counts.entry(&row.w).or_default() += 1;
        }
        let n = dataset.len() as f64;
        let points = counts.into_iter().map(|(w, c)| (w.clone(), c as f64 / n)).collect();
        Self::explicit(dataset.covariate_names().to_vec(), dataset.n_levels(), points, treatment, outcome)
    }

    /// Covariates drawn from an explicit list of patterns and probabilities.
    pub fn explicit(
        covariate_names: Vec<String>,
        n_levels: usize,
        points: Vec<(CovariateVector, f64)>,
        treatment: TreatmentModel,
        outcome: OutcomeModel,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("covariate distribution", "no support points"));
        }
        if treatment.n_levels != n_levels || outcome.n_levels != n_levels {
            return Err(Error::validation("generating models", "treatment level count mismatch"));
        }
        if points.iter().any(|(_, p)| !(*p >= 0.0)) {
            return Err(Error::validation("covariate distribution", "probabilities must be non-negative"));
        }
        let total: f64 = points.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation("covariate distribution", format!("probabilities sum to {total}")));
        }
        let treatment = treatment.with_truncation(0.0)?;
        let mut support = Vec::with_capacity(points.len());
        for (w, probability) in points {
            let g = treatment.raw_probabilities(&w)?;
            let q = (0..n_levels)
                .map(|a| outcome.linear_predictor(a, &w).map(expit))
                .collect::<Result<Vec<f64>>>()?;
            support.push(SupportPoint { w, probability, g, q });
        }
        let mut acc = 0.0;
        let cumulative = support
            .iter()
            .map(|s| {
                acc += s.probability / total;
                acc
            })
            .collect();
        Ok(Self {
            covariate_names,
            n_levels,
            treatment,
            outcome,
            support,
            cumulative,
        })
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn treatment(&self) -> &TreatmentModel {
        &self.treatment
    }

    pub fn outcome(&self) -> &OutcomeModel {
        &self.outcome
    }

    pub fn support(&self) -> &[SupportPoint] {
        &self.support
    }

    /// `n` i.i.d. observations; identical seeds give identical datasets.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.generate_with(&mut ChaCha8Rng::seed_from_u64(seed), n)
    }

    pub fn generate_with<R: Rng>(&self, rng: &mut R, n: usize) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::validation("n", "sample size must be positive"));
        }
        let rows = (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let j = self.cumulative.partition_point(|&c| c < u).min(self.support.len() - 1);
                let point = &self.support[j];
                let a = draw_level(rng, &point.g);
                let y = (rng.gen::<f64>() < point.q[a]) as u8;
                Observation {
                    w: point.w.clone(),
                    a,
                    y,
                }
            })
            .collect();
        Dataset::new(self.covariate_names.clone(), self.n_levels, rows)
    }

    /// Exact `E[Y_d]` with realistic sets built from the generating
    /// treatment probabilities.
    pub fn true_psi(&self, rule: &Rule) -> Result<f64> {
        self.mean_under(rule, |p| realistic_set(&p.g, rule.effective_alpha()))
    }

    /// Exact mean when realistic sets come from another treatment model
    /// (typically one fitted to a sample); observed treatment still follows
    /// the generating probabilities.
    pub fn true_psi_with_sets(&self, rule: &Rule, sets_from: &TreatmentModel) -> Result<f64> {
        let alpha = rule.effective_alpha();
        let mut err = None;
        let psi = self.mean_under(rule, |p| match sets_from.raw_probabilities(&p.w) {
            Ok(g) => realistic_set(&g, alpha),
            Err(e) => {
                err = Some(e);
                RealisticSet::full(self.n_levels)
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(psi),
        }
    }

    fn mean_under(&self, rule: &Rule, mut set_of: impl FnMut(&SupportPoint) -> RealisticSet) -> Result<f64> {
        rule.validate(self.n_levels)?;
        let mut psi = 0.0;
        for (j, p) in self.support.iter().enumerate() {
            let set = set_of(p);
            let value = match rule.family {
                RuleFamily::Itt if !set.contains(rule.target) => p.g.iter().zip(&p.q).map(|(g, q)| g * q).sum(),
                _ => p.q[rule.assign(&set, rule.target, j + 1)?],
            };
            psi += p.probability * value;
        }
        Ok(psi)
    }

    /// Per support point: assigned level and clever covariate for each
    /// possible observed level.
    fn rule_terms(&self, rule: &Rule) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
        rule.validate(self.n_levels)?;
        let k = self.n_levels;
        self.support
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let set = realistic_set(&p.g, rule.effective_alpha());
                if rule.family == RuleFamily::Itt && !set.contains(rule.target) {
                    return Ok(((0..k).collect(), vec![1.0; k]));
                }
                let d = rule.assign(&set, rule.target, j + 1)?;
                let h = (0..k).map(|a| if a == d { 1.0 / p.g[d] } else { 0.0 }).collect();
                Ok((vec![d; k], h))
            })
            .collect()
    }

    /// Variance of `f(point, a, y)` under the generating law.
    fn variance_of(&self, f: impl Fn(usize, usize, f64) -> f64) -> f64 {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (j, p) in self.support.iter().enumerate() {
            for a in 0..self.n_levels {
                if p.g[a] <= 0.0 {
                    continue;
                }
                for (y, py) in [(1.0, p.q[a]), (0.0, 1.0 - p.q[a])] {
                    let w = p.probability * p.g[a] * py;
                    let v = f(j, a, y);
                    m1 += w * v;
                    m2 += w * v * v;
                }
            }
        }
        m2 - m1 * m1
    }

    /// Variance of the estimator's influence function at the generating
    /// law (untruncated weights). The substitution estimator is assigned the
    /// efficient influence curve, which bounds its parametric variance
    /// from above.
    pub fn influence_variance(&self, rule: &Rule, estimator: EstimatorKind) -> Result<f64> {
        let terms = self.rule_terms(rule)?;
        let support = &self.support;
        Ok(match estimator {
            EstimatorKind::Iptw => self.variance_of(|j, a, y| terms[j].1[a] * y),
            _ => self.variance_of(|j, a, y| {
                let (d, h) = &terms[j];
                let q = &support[j].q;
                h[a] * (y - q[a]) + q[d[a]]
            }),
        })
    }

    /// Exact ratio against level 0 and the variance of its influence curve.
    pub fn ratio_influence_variance(&self, rule: &Rule) -> Result<(f64, f64)> {
        let psi_a = self.true_psi(rule)?;
        let psi_0 = self.true_psi(&rule.retarget(0))?;
        if !(psi_0 > 0.0) {
            return Err(Error::DegenerateDenominator { value: psi_0 });
        }
        let theta = psi_a / psi_0;
        let ta = self.rule_terms(rule)?;
        let t0 = self.rule_terms(&rule.retarget(0))?;
        let support = &self.support;
        let var = self.variance_of(|j, a, y| {
            let q = &support[j].q;
            let da = ta[j].1[a] * (y - q[a]) + q[ta[j].0[a]];
            let d0 = t0[j].1[a] * (y - q[a]) + q[t0[j].0[a]];
            (da - theta * d0) / psi_0
        });
        Ok((theta, var))
    }
}

fn draw_level<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    // Rounding can leave the total a hair below one.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
