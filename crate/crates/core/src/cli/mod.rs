//! Command-line front end. Every subcommand reads an optional TOML config
//! file; flags override its keys. Exit codes: 0 success, 1 usage or config
//! error, 2 data or model error.

mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use config::{ConfigError, ConfigFile, RunConfig, DEFAULT_SEED};

use crate::diagnostics::{alpha_sweep, eta_bias_diagnostic, scenarios, GeneratingDistribution};
use crate::estimators::{estimate_suite, Measure, NuisanceTable};
use crate::glm::{NuisanceModels, TreatmentModel};
use crate::inference::bootstrap_suite;
use crate::ingest::{categorize_met, load_csv, Dataset};
use crate::rules::{positivity_report, rule_assignment_table, RuleFamily};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "realistic-rules", version, about = "Causal effects of a categorical treatment under realistic rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit models, estimate every rule, attach bootstrap intervals.
    Estimate(RunArgs),
    /// Simulation bias diagnostic and positivity summary.
    Diagnose(RunArgs),
    /// Write a dataset drawn from a generating distribution.
    Simulate(RunArgs),
    /// Fit the treatment and outcome models only.
    Fit(RunArgs),
    /// Map MET-hours/week scores to activity levels.
    Categorize {
        #[arg(allow_negative_numbers = true, required = true)]
        scores: Vec<f64>,
    },
}

#[derive(Debug, Default, Args)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Output file (simulate).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long)]
    treatment_column: Option<String>,
    /// `category` or `met`.
    #[arg(long)]
    treatment_mode: Option<String>,
    #[arg(long)]
    outcome_column: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    alpha_trunc: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    outcome_interactions: Option<Vec<String>>,
    /// Covariates of the treatment model (default: all).
    #[arg(long, value_delimiter = ',')]
    treatment_covariates: Option<Vec<String>>,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    set_source: Option<String>,
    #[arg(long)]
    empty_set_policy: Option<String>,
    /// Bootstrap replicates (0 skips intervals).
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    interval: Option<String>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    decimals: Option<usize>,
    #[arg(long)]
    diag_replicates: Option<usize>,
    #[arg(long)]
    diag_estimator: Option<String>,
    #[arg(long)]
    n_sim: Option<usize>,
    /// Refit the treatment model in each diagnostic replicate.
    #[arg(long)]
    refit_treatment: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    alpha_sweep: Option<Vec<f64>>,
    #[arg(long)]
    sweep_threshold: Option<f64>,
    /// Shipped generating distribution name.
    #[arg(long)]
    generator: Option<String>,
    /// Fitted models JSON (from `fit`).
    #[arg(long)]
    models: Option<PathBuf>,
    /// Sample size (simulate).
    #[arg(long)]
    n: Option<usize>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        file.merge(ConfigFile {
            input: self.input,
            output_dir: self.output_dir,
            output: self.output,
            covariates: self.covariates,
            treatment_column: self.treatment_column,
            treatment_mode: self.treatment_mode,
            outcome_column: self.outcome_column,
            levels: self.levels,
            alpha: self.alpha,
            alpha_trunc: self.alpha_trunc,
            families: self.families,
            targets: self.targets,
            estimators: self.estimators,
            outcome_interactions: self.outcome_interactions,
            treatment_covariates: self.treatment_covariates,
            weights: self.weights,
            set_source: self.set_source,
            empty_set_policy: self.empty_set_policy,
            replicates: self.replicates,
            seed: self.seed,
            interval: self.interval,
            level: self.level,
            decimals: self.decimals,
            diag_replicates: self.diag_replicates,
            diag_estimator: self.diag_estimator,
            n_sim: self.n_sim,
            refit_treatment: self.refit_treatment,
            alpha_sweep: self.alpha_sweep,
            sweep_threshold: self.sweep_threshold,
            generator: self.generator,
            models: self.models,
            n: self.n,
        });
        Ok(RunConfig::from_file(file)?)
    }
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Categorize { scores } => categorize(&scores),
        Command::Estimate(a) => a.into_config().and_then(|c| cmd_estimate(&c)),
        Command::Diagnose(a) => a.into_config().and_then(|c| cmd_diagnose(&c)),
        Command::Simulate(a) => a.into_config().and_then(|c| cmd_simulate(&c).map(|_| ())),
        Command::Fit(a) => a.into_config().and_then(|c| cmd_fit(&c)),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn categorize(scores: &[f64]) -> Result<(), CliError> {
    println!("met,level");
    for &s in scores {
        println!("{s},{}", categorize_met(s)?);
    }
    Ok(())
}

fn load_input(cfg: &RunConfig) -> Result<(Dataset, usize), CliError> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("invalid `input`: no input file given".into()))?;
    let loaded = load_csv(path, &cfg.schema)?;
    if loaded.dropped > 0 {
        log::warn!("dropped {} incomplete rows", loaded.dropped);
    }
    Ok((loaded.dataset, loaded.dropped))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn model_metadata(dataset: &Dataset, models: &NuisanceModels) -> serde_json::Value {
    let g = &models.treatment;
    let k = dataset.n_levels();
    let mut truncated = vec![0usize; k];
    for row in dataset.rows() {
        if let Ok(p) = g.raw_probabilities(&row.w) {
            for (l, v) in p.iter().enumerate() {
                if *v < g.alpha_trunc {
                    truncated[l] += 1;
                }
            }
        }
    }
    let summary = |s: &Option<crate::glm::FitSummary>| {
        s.as_ref()
            .map(|s| json!({"converged": s.converged, "iterations": s.iterations, "score_norm": s.score_norm}))
    };
    json!({
        "treatment_model": {
            "fit": summary(&g.summary),
            "structural_zeros": g.structural_zeros,
            "empty_levels": g.empty_levels,
        },
        "outcome_model": {"fit": summary(&models.outcome.summary)},
        "alpha_trunc": g.alpha_trunc,
        "truncated_rows_per_level": truncated,
    })
}

fn write_assignments(dir: &Path, dataset: &Dataset, g: &TreatmentModel, cfg: &RunConfig) -> Result<(), CliError> {
    for family in [RuleFamily::Realistic, RuleFamily::Itt] {
        match rule_assignment_table(
            dataset,
            g,
            family,
            cfg.suite.alpha,
            cfg.suite.empty_set_policy,
            cfg.suite.options.set_source,
        ) {
            Ok(table) => table.write_csv(create(dir, &format!("assignments_{family}.csv"))?)?,
            Err(e) => log::warn!("{family} assignment table skipped: {e}"),
        }
    }
    Ok(())
}

/// Fits both models, estimates every cell and writes `estimates.json`,
/// `estimates_psi.csv`, `estimates_rr.csv` and `metadata.json`.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let (data, dropped) = load_input(cfg)?;
    let models = cfg.nuisance.fit(&data)?;
    let table = NuisanceTable::from_models(&data, &models.treatment, &models.outcome)?;
    let mut report = estimate_suite(&table, &cfg.suite)?;
    if cfg.bootstrap.replicates > 0 {
        bootstrap_suite(&data, &cfg.nuisance, &mut report, &cfg.bootstrap)?;
    }
    let dir = &cfg.output_dir;
    report.write_json(create(dir, "estimates.json")?)?;
    report.write_table_csv(create(dir, "estimates_psi.csv")?, Measure::Psi, cfg.decimals)?;
    report.write_table_csv(create(dir, "estimates_rr.csv")?, Measure::RelativeRisk, cfg.decimals)?;
    write_assignments(dir, &data, &models.treatment, cfg)?;
    let mut meta = model_metadata(&data, &models);
    meta["command"] = json!("estimate");
    meta["n"] = json!(data.len());
    meta["dropped_rows"] = json!(dropped);
    meta["seed"] = json!(cfg.bootstrap.seed);
    meta["bootstrap"] = json!(cfg.bootstrap);
    write_json(dir, "metadata.json", &meta)
}

/// Fits the models and writes `models.json`, `positivity.csv` and the
/// rule assignment tables.
pub fn cmd_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let (data, dropped) = load_input(cfg)?;
    let models = cfg.nuisance.fit(&data)?;
    let dir = &cfg.output_dir;
    serde_json::to_writer_pretty(create(dir, "models.json")?, &models).map_err(Error::from)?;
    positivity_report(&data, &models.treatment, cfg.suite.alpha)?.write_csv(create(dir, "positivity.csv")?)?;
    write_assignments(dir, &data, &models.treatment, cfg)?;
    let mut meta = model_metadata(&data, &models);
    meta["command"] = json!("fit");
    meta["n"] = json!(data.len());
    meta["dropped_rows"] = json!(dropped);
    write_json(dir, "metadata.json", &meta)
}

/// Runs the bias diagnostic (and optional threshold sweep) and writes
/// `bias.csv`, `bias.json`, `positivity.csv`, `sweep.csv`, `metadata.json`.
pub fn cmd_diagnose(cfg: &RunConfig) -> Result<(), CliError> {
    let (gen, data, g) = match (&cfg.generator, &cfg.input) {
        (Some(name), input) => {
            let gen = scenarios::by_name(name).ok_or_else(|| CliError::Usage(format!("unknown generator `{name}`")))?;
            let data = match input {
                Some(_) => load_input(cfg)?.0,
                None => gen.generate(cfg.n_sim.unwrap_or(2000), cfg.bootstrap.seed)?,
            };
            let g = cfg.nuisance.fit_treatment(&data)?;
            (gen, data, g)
        }
        (None, _) => {
            let (data, _) = load_input(cfg)?;
            let models = cfg.nuisance.fit(&data)?;
            let gen = GeneratingDistribution::from_dataset(&data, models.treatment.clone(), models.outcome)?;
            (gen, data, models.treatment)
        }
    };
    let n_sim = cfg.n_sim.unwrap_or(data.len());
    let dcfg = cfg.diagnostic(n_sim);
    let dir = &cfg.output_dir;
    let bias = eta_bias_diagnostic(&gen, &dcfg)?;
    bias.write_csv(create(dir, "bias.csv")?)?;
    bias.write_json(create(dir, "bias.json")?)?;
    let positivity = positivity_report(&data, &g, cfg.suite.alpha)?;
    positivity.write_csv(create(dir, "positivity.csv")?)?;
    let mut meta = json!({
        "command": "diagnose",
        "seed": cfg.bootstrap.seed,
        "replicates": dcfg.replicates,
        "n_sim": n_sim,
        "estimator": dcfg.estimator,
        "failed_replicates": bias.failed_replicates,
        "flagged_levels": positivity.flagged_levels(),
    });
    if let Some(alphas) = &cfg.alpha_sweep {
        let sweep = alpha_sweep(&gen, &dcfg, alphas, cfg.sweep_threshold)?;
        sweep.write_csv(create(dir, "sweep.csv")?)?;
        meta["smallest_acceptable_alpha"] = json!(sweep.smallest_acceptable);
    }
    write_json(dir, "metadata.json", &meta)
}

/// Draws a dataset from a shipped generator or from fitted models over the
/// input covariates; returns the path written.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let gen = match (&cfg.generator, &cfg.models) {
        (Some(name), _) => scenarios::by_name(name).ok_or_else(|| CliError::Usage(format!("unknown generator `{name}`")))?,
        (None, Some(path)) => {
            let models: NuisanceModels = serde_json::from_reader(File::open(path)?).map_err(Error::from)?;
            let (data, _) = load_input(cfg)?;
            GeneratingDistribution::from_dataset(&data, models.treatment, models.outcome)?
        }
        (None, None) => return Err(CliError::Usage("invalid `generator`: give a generator name or a models file".into())),
    };
    let n = cfg
        .n
        .ok_or_else(|| CliError::Usage("invalid `n`: sample size is required".into()))?;
    let data = gen.generate(n, cfg.bootstrap.seed)?;
    let path = cfg.output.clone().unwrap_or_else(|| cfg.output_dir.join("simulated.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    data.write_csv_path(&path)?;
    Ok(path)
}
