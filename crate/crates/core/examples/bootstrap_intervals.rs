//! Nonparametric bootstrap intervals for the full estimate table. Both models
//! are refitted on every resample.

use realistic_rules::diagnostics::scenarios;
use realistic_rules::estimators::{estimate_suite, EstimatorKind, Measure, NuisanceTable, SuiteSpec};
use realistic_rules::glm::NuisanceSpec;
use realistic_rules::inference::{bootstrap_suite, BootstrapConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = scenarios::coverage().generate(1500, 5)?;
    let nuisance = NuisanceSpec::default();
    let models = nuisance.fit(&data)?;
    let table = NuisanceTable::from_models(&data, &models.treatment, &models.outcome)?;

    let mut spec = SuiteSpec::standard(data.n_levels());
    spec.estimators = vec![EstimatorKind::Gcomp, EstimatorKind::Tmle];
    let mut report = estimate_suite(&table, &spec)?;
    let cfg = BootstrapConfig {
        replicates: 200,
        seed: 7,
        ..BootstrapConfig::default()
    };
    bootstrap_suite(&data, &nuisance, &mut report, &cfg)?;

    println!("counterfactual risk, 95% percentile intervals");
    report.write_table_csv(std::io::stdout(), Measure::Psi, 3)?;
    println!("\nrelative risk against level 0");
    report.write_table_csv(std::io::stdout(), Measure::RelativeRisk, 3)?;
    Ok(())
}
