use crate::glm::{OutcomeModel, TreatmentModel};
use crate::ingest::Dataset;
use crate::rules::{realistic_set, RealisticSet, Rule, RuleFamily, SetSource};
use crate::{expit, logit, Error, Result};

use super::WeightSource;

/// Per-row nuisance predictions at every treatment level.
///
/// Every estimator reads only this table, so hand-built tables serve as
/// direct oracles and updated outcome predictions (after targeting) can be
/// swapped in without touching the data.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceTable {
    k: usize,
    observed: Vec<usize>,
    outcome: Vec<f64>,
    g_raw: Vec<f64>,
    g_trunc: Vec<f64>,
    logit_q: Vec<f64>,
}

impl NuisanceTable {
    /// Evaluates both models on every row of `dataset`.
    pub fn from_models(dataset: &Dataset, g: &TreatmentModel, q: &OutcomeModel) -> Result<Self> {
        let k = dataset.n_levels();
        if g.n_levels != k || q.n_levels != k {
            return Err(Error::validation("models", "treatment level count differs from the dataset"));
        }
        let n = dataset.len();
        let mut table = Self {
            k,
            observed: Vec::with_capacity(n),
            outcome: Vec::with_capacity(n),
            g_raw: Vec::with_capacity(n * k),
            g_trunc: Vec::with_capacity(n * k),
            logit_q: Vec::with_capacity(n * k),
        };
        for row in dataset.rows() {
            table.observed.push(row.a);
            table.outcome.push(row.y as f64);
            let raw = g.raw_probabilities(&row.w)?;
            table.g_trunc.extend(raw.iter().map(|&p| p.max(g.alpha_trunc)));
            table.g_raw.extend(raw);
            for a in 0..k {
                table.logit_q.push(q.linear_predictor(a, &row.w)?);
            }
        }
        Ok(table)
    }

    /// Table from explicit row-major `n x k` arrays.
    pub fn from_parts(
        k: usize,
        observed: Vec<usize>,
        outcome: Vec<f64>,
        g_raw: Vec<f64>,
        g_trunc: Vec<f64>,
        logit_q: Vec<f64>,
    ) -> Result<Self> {
        let n = observed.len();
        if n == 0 {
            return Err(Error::EmptyDataset { dropped: 0 });
        }
        if outcome.len() != n || [&g_raw, &g_trunc, &logit_q].iter().any(|v| v.len() != n * k) {
            return Err(Error::validation("nuisance table", "inconsistent array lengths"));
        }
        if observed.iter().any(|&a| a >= k) {
            return Err(Error::validation("nuisance table", "observed level out of range"));
        }
        Ok(Self {
            k,
            observed,
            outcome,
            g_raw,
            g_trunc,
            logit_q,
        })
    }

    /// Table from treatment probabilities (used both raw and for weights)
    /// and outcome probabilities. Outcome probabilities of exactly 0 or 1
    /// are allowed; they become infinite logits.
    pub fn from_probabilities(
        k: usize,
        observed: Vec<usize>,
        outcome: Vec<f64>,
        g: Vec<f64>,
        q: Vec<f64>,
    ) -> Result<Self> {
        let logit_q = q.iter().map(|&p| logit(p)).collect();
        Self::from_parts(k, observed, outcome, g.clone(), g, logit_q)
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn n_levels(&self) -> usize {
        self.k
    }

    pub fn observed(&self, i: usize) -> usize {
        self.observed[i]
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.outcome[i]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcome
    }

    pub fn q(&self, i: usize, a: usize) -> f64 {
        expit(self.logit_q[i * self.k + a])
    }

    pub fn logit(&self, i: usize, a: usize) -> f64 {
        self.logit_q[i * self.k + a]
    }

    pub fn logits(&self) -> &[f64] {
        &self.logit_q
    }

    pub fn g(&self, i: usize, a: usize, source: WeightSource) -> f64 {
        match source {
            WeightSource::Truncated => self.g_trunc[i * self.k + a],
            WeightSource::Raw => self.g_raw[i * self.k + a],
        }
    }

    pub fn g_row(&self, i: usize, source: SetSource) -> &[f64] {
        let range = i * self.k..(i + 1) * self.k;
        match source {
            SetSource::Raw => &self.g_raw[range],
            SetSource::Truncated => &self.g_trunc[range],
        }
    }

    /// Same table with the outcome logits replaced.
    pub fn with_logits(&self, logit_q: Vec<f64>) -> Result<Self> {
        if logit_q.len() != self.logit_q.len() {
            return Err(Error::validation("nuisance table", "logit array length"));
        }
        Ok(Self {
            logit_q,
            ..self.clone()
        })
    }

    /// Realistic sets and assigned levels for `rule`.
    pub fn evaluate(&self, rule: &Rule, source: SetSource) -> Result<RuleEvaluation> {
        rule.validate(self.k)?;
        let alpha = rule.effective_alpha();
        let mut assigned = Vec::with_capacity(self.len());
        let mut outside = Vec::with_capacity(self.len());
        let mut sets = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let set = realistic_set(self.g_row(i, source), alpha);
            assigned.push(rule.assign(&set, self.observed[i], i + 1)?);
            outside.push(rule.family == RuleFamily::Itt && !set.contains(rule.target));
            sets.push(set);
        }
        Ok(RuleEvaluation {
            rule: *rule,
            assigned,
            outside,
            sets,
        })
    }
}

/// A rule applied to every row of a table.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleEvaluation {
    pub rule: Rule,
    /// Assigned level per row.
    pub assigned: Vec<usize>,
    /// Intention-to-treat rows whose target is not realistic (they keep
    /// their observed level). Always false for other families.
    pub outside: Vec<bool>,
    pub sets: Vec<RealisticSet>,
}

impl RuleEvaluation {
    /// Clever covariate `h(level, W_i)`: the inverse probability of the
    /// assigned level, or 1 for intention-to-treat rows left at their
    /// observed level.
    pub fn clever(&self, table: &NuisanceTable, i: usize, level: usize, source: WeightSource) -> Result<f64> {
        if self.outside[i] {
            return Ok(1.0);
        }
        if level != self.assigned[i] {
            return Ok(0.0);
        }
        let g = table.g(i, level, source);
        if g <= 0.0 {
            return Err(Error::ZeroWeight { row: i + 1 });
        }
        Ok(1.0 / g)
    }

    /// Clever covariate at each row's observed level.
    pub fn clever_observed(&self, table: &NuisanceTable, source: WeightSource) -> Result<Vec<f64>> {
        (0..table.len())
            .map(|i| self.clever(table, i, table.observed(i), source))
            .collect()
    }

    pub fn assigned_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for &a in &self.assigned {
            counts[a] += 1;
        }
        counts
    }
}
