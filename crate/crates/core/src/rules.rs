//! Treatment rules and positivity summaries.
//!
//! A subject's realistic set holds the levels whose treatment probability is
//! at least `alpha`. The realistic rule assigns the largest realistic level
//! not above the target; the intention-to-treat rule assigns the target when
//! it is realistic and leaves the subject at the observed level otherwise.
//! A static rule is the realistic rule with `alpha = 0`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::glm::TreatmentModel;
use crate::ingest::Dataset;
use crate::{Error, Result};

/// Realism threshold used when none is given.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleFamily {
    Static,
    Realistic,
    Itt,
}

impl RuleFamily {
    pub const ALL: [RuleFamily; 3] = [RuleFamily::Static, RuleFamily::Realistic, RuleFamily::Itt];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleFamily::Static => "static",
            RuleFamily::Realistic => "realistic",
            RuleFamily::Itt => "itt",
        }
    }

    /// Column label used in the bias and estimate tables.
    pub fn label(self) -> &'static str {
        match self {
            RuleFamily::Static => "Static",
            RuleFamily::Realistic => "Realistic",
            RuleFamily::Itt => "ITT",
        }
    }
}

impl fmt::Display for RuleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "static" => Ok(RuleFamily::Static),
            "realistic" => Ok(RuleFamily::Realistic),
            "itt" => Ok(RuleFamily::Itt),
            other => Err(Error::validation("family", format!("unknown rule family `{other}`"))),
        }
    }
}

/// What to do when no realistic level lies at or below the target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptySetPolicy {
    #[default]
    Error,
    AssignMinRealistic,
}

/// Which treatment probabilities define the realistic set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetSource {
    /// Untruncated fitted probabilities.
    #[default]
    Raw,
    /// Probabilities after the truncation floor.
    Truncated,
}

/// An intervention: family, target level, and realism threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub family: RuleFamily,
    pub target: usize,
    pub alpha: f64,
    #[serde(default)]
    pub empty_set_policy: EmptySetPolicy,
}

impl Rule {
    pub fn new(family: RuleFamily, target: usize, alpha: f64) -> Self {
        Self {
            family,
            target,
            alpha,
            empty_set_policy: EmptySetPolicy::Error,
        }
    }

    pub fn static_rule(target: usize) -> Self {
        Self::new(RuleFamily::Static, target, 0.0)
    }

    pub fn realistic(target: usize, alpha: f64) -> Self {
        Self::new(RuleFamily::Realistic, target, alpha)
    }

    pub fn itt(target: usize, alpha: f64) -> Self {
        Self::new(RuleFamily::Itt, target, alpha)
    }

    pub fn with_policy(mut self, policy: EmptySetPolicy) -> Self {
        self.empty_set_policy = policy;
        self
    }

    /// Same rule with a different target.
    pub fn retarget(mut self, target: usize) -> Self {
        self.target = target;
        self
    }

    /// Threshold actually applied: zero for static rules.
    pub fn effective_alpha(&self) -> f64 {
        match self.family {
            RuleFamily::Static => 0.0,
            _ => self.alpha,
        }
    }

    pub fn validate(&self, n_levels: usize) -> Result<()> {
        if self.target >= n_levels {
            return Err(Error::validation(
                "target",
                format!("level {} is not below {n_levels}", self.target),
            ));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::validation("alpha", format!("must lie in [0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Level assigned to a subject with realistic set `set` and observed
    /// level `observed`; `row` only labels errors.
    pub fn assign(&self, set: &RealisticSet, observed: usize, row: usize) -> Result<usize> {
        match self.family {
            RuleFamily::Static | RuleFamily::Realistic => {
                assign_realistic(self.target, set, self.empty_set_policy, row)
            }
            RuleFamily::Itt => Ok(assign_itt(self.target, observed, set)),
        }
    }
}

/// Levels whose probability is at least the threshold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealisticSet {
    members: Vec<bool>,
}

impl RealisticSet {
    pub fn full(n_levels: usize) -> Self {
        Self {
            members: vec![true; n_levels],
        }
    }

    pub fn contains(&self, level: usize) -> bool {
        self.members.get(level).copied().unwrap_or(false)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(l, _)| l)
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn n_levels(&self) -> usize {
        self.members.len()
    }
}

/// `{a : g(a | W) >= alpha}`; ties are included.
pub fn realistic_set(g_probs: &[f64], alpha: f64) -> RealisticSet {
    RealisticSet {
        members: g_probs.iter().map(|&p| p >= alpha).collect(),
    }
}

/// Largest realistic level at or below `target`.
pub fn assign_realistic(target: usize, set: &RealisticSet, policy: EmptySetPolicy, row: usize) -> Result<usize> {
    if let Some(level) = (0..=target).rev().find(|&l| set.contains(l)) {
        return Ok(level);
    }
    match policy {
        EmptySetPolicy::Error => Err(Error::RuleInfeasible { row, target }),
        EmptySetPolicy::AssignMinRealistic => set.members().next().ok_or(Error::RuleInfeasible { row, target }),
    }
}

/// Target if realistic, otherwise the observed level.
pub fn assign_itt(target: usize, observed: usize, set: &RealisticSet) -> usize {
    if set.contains(target) {
        target
    } else {
        observed
    }
}

fn set_probabilities(model: &TreatmentModel, w: &crate::ingest::CovariateVector, source: SetSource) -> Result<Vec<f64>> {
    match source {
        SetSource::Raw => model.raw_probabilities(w),
        SetSource::Truncated => model.predict_g(w),
    }
}

/// Counts of assigned levels for every target: `counts[a][assigned]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentTable {
    pub family: RuleFamily,
    pub alpha: f64,
    pub counts: Vec<Vec<usize>>,
}

impl AssignmentTable {
    /// CSV with one row per target and one column per assigned level.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let k = self.counts.len();
        let mut header = vec!["target".to_string()];
        header.extend((0..k).map(|l| format!("assigned={l}")));
        out.write_record(&header)?;
        for (a, row) in self.counts.iter().enumerate() {
            let mut rec = vec![a.to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn rule_assignment_table(
    dataset: &Dataset,
    model: &TreatmentModel,
    family: RuleFamily,
    alpha: f64,
    policy: EmptySetPolicy,
    source: SetSource,
) -> Result<AssignmentTable> {
    let k = dataset.n_levels();
    let mut counts = vec![vec![0; k]; k];
    let mut sets = Vec::with_capacity(dataset.len());
    let probe = Rule::new(family, 0, alpha);
    for row in dataset.rows() {
        let probs = set_probabilities(model, &row.w, source)?;
        sets.push(realistic_set(&probs, probe.effective_alpha()));
    }
    for (target, counts_row) in counts.iter_mut().enumerate() {
        let rule = Rule::new(family, target, alpha).with_policy(policy);
        for (i, (row, set)) in dataset.rows().iter().zip(&sets).enumerate() {
            counts_row[rule.assign(set, row.a, i + 1)?] += 1;
        }
    }
    Ok(AssignmentTable { family, alpha, counts })
}

/// Per-level summary of how many subjects fall below the realism threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPositivity {
    pub level: usize,
    pub below: usize,
    pub fraction_below: f64,
    pub min_g: f64,
    pub q05_g: f64,
    pub median_g: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub alpha: f64,
    pub n: usize,
    pub levels: Vec<LevelPositivity>,
}

impl PositivityReport {
    pub fn flagged_levels(&self) -> Vec<usize> {
        self.levels.iter().filter(|l| l.flagged).map(|l| l.level).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["level", "below", "fraction_below", "min_g", "q05_g", "median_g", "flagged"])?;
        for l in &self.levels {
            out.write_record([
                l.level.to_string(),
                l.below.to_string(),
                format!("{:.6}", l.fraction_below),
                format!("{:.6}", l.min_g),
                format!("{:.6}", l.q05_g),
                format!("{:.6}", l.median_g),
                l.flagged.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Nearest-rank quantile of sorted data.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Summarises untruncated fitted probabilities per level; a level is flagged
/// when any subject's probability is strictly below `alpha`.
pub fn positivity_report(dataset: &Dataset, model: &TreatmentModel, alpha: f64) -> Result<PositivityReport> {
    let k = dataset.n_levels();
    let mut by_level = vec![Vec::with_capacity(dataset.len()); k];
    for row in dataset.rows() {
        for (l, p) in model.raw_probabilities(&row.w)?.into_iter().enumerate() {
            by_level[l].push(p);
        }
    }
    let n = dataset.len();
    let levels = by_level
        .into_iter()
        .enumerate()
        .map(|(level, mut probs)| {
            probs.sort_by(f64::total_cmp);
            let below = probs.iter().filter(|&&p| p < alpha).count();
            LevelPositivity {
                level,
                below,
                fraction_below: below as f64 / n as f64,
                min_g: probs[0],
                q05_g: sorted_quantile(&probs, 0.05),
                median_g: sorted_quantile(&probs, 0.5),
                flagged: below > 0,
            }
        })
        .collect();
    Ok(PositivityReport { alpha, n, levels })
}
