use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::diagnostics::DiagnosticConfig;
use crate::estimators::{EstimationOptions, EstimatorKind, SuiteSpec, WeightSource};
use crate::glm::{NuisanceSpec, OutcomeFormula, TreatmentFormula};
use crate::inference::{BootstrapConfig, IntervalMethod};
use crate::ingest::{CsvSchema, TreatmentColumn, DEFAULT_LEVELS, STANDARD_COVARIATES};
use crate::rules::{EmptySetPolicy, RuleFamily, SetSource, DEFAULT_ALPHA};

/// A config problem, always naming the offending key.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.message)
    }
}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

/// Keys accepted in the TOML config file. Every key is optional; command
/// line flags take precedence.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub covariates: Option<Vec<String>>,
    pub treatment_column: Option<String>,
    pub treatment_mode: Option<String>,
    pub outcome_column: Option<String>,
    pub levels: Option<usize>,
    pub alpha: Option<f64>,
    pub alpha_trunc: Option<f64>,
    pub families: Option<Vec<String>>,
    pub targets: Option<Vec<usize>>,
    pub estimators: Option<Vec<String>>,
    pub outcome_interactions: Option<Vec<String>>,
    pub treatment_covariates: Option<Vec<String>>,
    pub weights: Option<String>,
    pub set_source: Option<String>,
    pub empty_set_policy: Option<String>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub interval: Option<String>,
    pub level: Option<f64>,
    pub decimals: Option<usize>,
    pub diag_replicates: Option<usize>,
    pub diag_estimator: Option<String>,
    pub n_sim: Option<usize>,
    pub refit_treatment: Option<bool>,
    pub alpha_sweep: Option<Vec<f64>>,
    pub sweep_threshold: Option<f64>,
    pub generator: Option<String>,
    pub models: Option<PathBuf>,
    pub n: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let unknown = message.split('`').nth(1).filter(|_| message.starts_with("unknown field"));
            // Type errors point at the value; the key is the start of that line.
            let spanned = e.span().and_then(|span| {
                let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
                let key = text[line_start..].split('=').next()?.trim();
                (!key.is_empty() && !key.contains(char::is_whitespace)).then_some(key)
            });
            let field = unknown.or(spanned).unwrap_or("config").to_string();
            ConfigError { field, message }
        })
    }

    /// Overwrites every key that is set in `other`.
    pub fn merge(&mut self, other: ConfigFile) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            input, output_dir, output, covariates, treatment_column, treatment_mode, outcome_column, levels, alpha,
            alpha_trunc, families, targets, estimators, outcome_interactions, treatment_covariates, weights,
            set_source, empty_set_policy, replicates, seed, interval, level, decimals, diag_replicates,
            diag_estimator, n_sim, refit_treatment, alpha_sweep, sweep_threshold, generator, models, n
        );
    }
}

pub const DEFAULT_SEED: u64 = 20_110_101;

/// Validated run settings.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub output: Option<PathBuf>,
    pub schema: CsvSchema,
    pub nuisance: NuisanceSpec,
    pub suite: SuiteSpec,
    pub bootstrap: BootstrapConfig,
    pub decimals: usize,
    pub diag_replicates: usize,
    pub diag_estimator: EstimatorKind,
    pub n_sim: Option<usize>,
    pub refit_treatment: bool,
    pub alpha_sweep: Option<Vec<f64>>,
    pub sweep_threshold: f64,
    pub generator: Option<String>,
    pub models: Option<PathBuf>,
    pub n: Option<usize>,
}

fn parse_list<T>(field: &str, values: &[String], parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, ConfigError> {
    values
        .iter()
        .map(|v| parse(v).ok_or_else(|| bad(field, format!("unknown value `{v}`"))))
        .collect()
}

fn check_unit(field: &str, v: f64, upper: f64) -> Result<f64, ConfigError> {
    if !(0.0..upper).contains(&v) {
        return Err(bad(field, format!("must lie in [0, {upper}), got {v}")));
    }
    Ok(v)
}

impl RunConfig {
    pub fn from_file(c: ConfigFile) -> Result<Self, ConfigError> {
        let levels = c.levels.unwrap_or(DEFAULT_LEVELS);
        if levels < 2 {
            return Err(bad("levels", "need at least two treatment levels"));
        }
        let covariates = c
            .covariates
            .unwrap_or_else(|| STANDARD_COVARIATES.iter().map(|s| s.to_string()).collect());
        if covariates.is_empty() {
            return Err(bad("covariates", "at least one covariate is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = covariates.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(bad("covariates", format!("duplicate column `{dup}`")));
        }
        for (field, list) in [
            ("outcome_interactions", &c.outcome_interactions),
            ("treatment_covariates", &c.treatment_covariates),
        ] {
            if let Some(unknown) = list.iter().flatten().find(|v| !covariates.contains(v)) {
                return Err(bad(field, format!("`{unknown}` is not a listed covariate")));
            }
        }
        let treatment_name = c.treatment_column.unwrap_or_else(|| "A".into());
        let treatment = match c.treatment_mode.as_deref().unwrap_or("category") {
            "category" => TreatmentColumn::Category(treatment_name),
            "met" => TreatmentColumn::Met(treatment_name),
            other => return Err(bad("treatment_mode", format!("expected `category` or `met`, got `{other}`"))),
        };
        let schema = CsvSchema {
            covariates,
            treatment,
            outcome: c.outcome_column.unwrap_or_else(|| "Y".into()),
            n_levels: levels,
        };

        let alpha = check_unit("alpha", c.alpha.unwrap_or(DEFAULT_ALPHA), 0.5)?;
        let alpha_trunc = check_unit("alpha_trunc", c.alpha_trunc.unwrap_or(0.05), 0.5)?;
        let families = match &c.families {
            Some(f) if f.is_empty() => return Err(bad("families", "list is empty")),
            Some(f) => parse_list("families", f, |s| s.parse::<RuleFamily>().ok())?,
            None => RuleFamily::ALL.to_vec(),
        };
        let targets = c.targets.unwrap_or_else(|| (1..levels).collect());
        if targets.is_empty() {
            return Err(bad("targets", "list is empty"));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= levels) {
            return Err(bad("targets", format!("level {t} is not below {levels}")));
        }
        let estimators = match &c.estimators {
            Some(e) if e.is_empty() => return Err(bad("estimators", "list is empty")),
            Some(e) => parse_list("estimators", e, |s| s.parse::<EstimatorKind>().ok())?,
            None => EstimatorKind::ALL.to_vec(),
        };
        let weights = match c.weights.as_deref().unwrap_or("truncated") {
            "truncated" => WeightSource::Truncated,
            "raw" => WeightSource::Raw,
            other => return Err(bad("weights", format!("expected `truncated` or `raw`, got `{other}`"))),
        };
        let set_source = match c.set_source.as_deref().unwrap_or("raw") {
            "raw" => SetSource::Raw,
            "truncated" => SetSource::Truncated,
            other => return Err(bad("set_source", format!("expected `raw` or `truncated`, got `{other}`"))),
        };
        let empty_set_policy = match c.empty_set_policy.as_deref().unwrap_or("error") {
            "error" => EmptySetPolicy::Error,
            "assign_min_realistic" => EmptySetPolicy::AssignMinRealistic,
            other => {
                return Err(bad(
                    "empty_set_policy",
                    format!("expected `error` or `assign_min_realistic`, got `{other}`"),
                ))
            }
        };
        let nuisance = NuisanceSpec {
            treatment: TreatmentFormula {
                covariates: c.treatment_covariates,
            },
            outcome: OutcomeFormula {
                covariates: None,
                interactions: c.outcome_interactions.unwrap_or_default(),
            },
            alpha_trunc,
            ..NuisanceSpec::default()
        };
        let mut suite = SuiteSpec::standard(levels);
        suite.families = families;
        suite.targets = targets;
        suite.estimators = estimators;
        suite.alpha = alpha;
        suite.empty_set_policy = empty_set_policy;
        suite.options = EstimationOptions {
            set_source,
            ..EstimationOptions::default()
        }
        .with_weights(weights);

        let level = c.level.unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            return Err(bad("level", format!("must lie in (0, 1), got {level}")));
        }
        let method = match c.interval.as_deref().unwrap_or("percentile") {
            "percentile" => IntervalMethod::Percentile,
            "normal" => IntervalMethod::Normal,
            other => return Err(bad("interval", format!("expected `percentile` or `normal`, got `{other}`"))),
        };
        let bootstrap = BootstrapConfig {
            replicates: c.replicates.unwrap_or(1000),
            seed: c.seed.unwrap_or(DEFAULT_SEED),
            method,
            level,
            ..BootstrapConfig::default()
        };
        let diag_replicates = c.diag_replicates.unwrap_or(500);
        if diag_replicates == 0 {
            return Err(bad("diag_replicates", "must be at least 1"));
        }
        let diag_estimator = match &c.diag_estimator {
            Some(s) => s
                .parse::<EstimatorKind>()
                .map_err(|_| bad("diag_estimator", format!("unknown estimator `{s}`")))?,
            None => EstimatorKind::Iptw,
        };
        if c.n_sim == Some(0) {
            return Err(bad("n_sim", "must be positive"));
        }
        if c.n == Some(0) {
            return Err(bad("n", "must be positive"));
        }
        if let Some(sweep) = &c.alpha_sweep {
            if sweep.is_empty() {
                return Err(bad("alpha_sweep", "list is empty"));
            }
            for &a in sweep {
                check_unit("alpha_sweep", a, 0.5)?;
            }
            if sweep.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad("alpha_sweep", "values must be strictly ascending"));
            }
        }
        let sweep_threshold = c.sweep_threshold.unwrap_or(2.0);
        if !(sweep_threshold > 0.0) {
            return Err(bad("sweep_threshold", "must be positive"));
        }
        if let Some(g) = &c.generator {
            if crate::diagnostics::scenarios::by_name(g).is_none() {
                return Err(bad(
                    "generator",
                    format!("unknown generator `{g}` (known: {})", crate::diagnostics::scenarios::NAMES.join(", ")),
                ));
            }
        }
        Ok(Self {
            input: c.input,
            output_dir: c.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            output: c.output,
            schema,
            nuisance,
            suite,
            bootstrap,
            decimals: c.decimals.unwrap_or(2),
            diag_replicates,
            diag_estimator,
            n_sim: c.n_sim,
            refit_treatment: c.refit_treatment.unwrap_or(true),
            alpha_sweep: c.alpha_sweep,
            sweep_threshold,
            generator: c.generator,
            models: c.models,
            n: c.n,
        })
    }

    pub fn diagnostic(&self, n_sim: usize) -> DiagnosticConfig {
        let mut d = DiagnosticConfig::new(n_sim, self.bootstrap.seed);
        d.replicates = self.diag_replicates;
        d.estimator = self.diag_estimator;
        d.alpha = self.suite.alpha;
        d.families = self.suite.families.clone();
        d.empty_set_policy = self.suite.empty_set_policy;
        d.nuisance = self.nuisance.clone();
        d.options = self.suite.options;
        d.refit_treatment = self.refit_treatment;
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_file(ConfigFile::parse(text)?)
    }

    #[test]
    fn defaults_are_standard() {
        let c = config("").unwrap();
        assert_eq!(c.suite.alpha, 0.05);
        assert_eq!(c.nuisance.alpha_trunc, 0.05);
        assert_eq!(c.bootstrap.level, 0.95);
        assert_eq!(c.suite.targets, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.schema.covariates.len(), 15);
    }

    #[test]
    fn every_malformed_field_is_named() {
        let cases = [
            ("alpha = 0.7", "alpha"),
            ("alpha_trunc = -0.1", "alpha_trunc"),
            ("families = [\"sometimes\"]", "families"),
            ("targets = [9]", "targets"),
            ("estimators = [\"magic\"]", "estimators"),
            ("treatment_mode = \"hours\"", "treatment_mode"),
            ("interval = \"bca\"", "interval"),
            ("level = 1.5", "level"),
            ("levels = 1", "levels"),
            ("weights = \"none\"", "weights"),
            ("set_source = \"x\"", "set_source"),
            ("empty_set_policy = \"x\"", "empty_set_policy"),
            ("alpha_sweep = [0.1, 0.05]", "alpha_sweep"),
            ("generator = \"nope\"", "generator"),
            ("n_sim = 0", "n_sim"),
            ("covariates = [\"X\", \"X\"]", "covariates"),
            ("outcome_interactions = [\"Z\"]\ncovariates = [\"X\"]", "outcome_interactions"),
            ("colour = 3", "colour"),
        ];
        for (text, field) in cases {
            let err = config(text).unwrap_err();
            assert_eq!(err.field, field, "{text}: {err}");
        }
    }

    #[test]
    fn merge_prefers_later_values() {
        let mut a = ConfigFile::parse("alpha = 0.1\nseed = 3").unwrap();
        a.merge(ConfigFile {
            alpha: Some(0.2),
            ..ConfigFile::default()
        });
        assert_eq!(a.alpha, Some(0.2));
        assert_eq!(a.seed, Some(3));
    }
}
