//! Fits models to one sample and draws a new cohort from the fitted
//! distribution, as the bias diagnostic does.

use realistic_rules::diagnostics::{scenarios, GeneratingDistribution};
use realistic_rules::glm::NuisanceSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let observed = scenarios::elderly_cohort().generate(2051, 10)?;
    let models = NuisanceSpec::default().fit(&observed)?;
    let fitted = GeneratingDistribution::from_dataset(&observed, models.treatment, models.outcome)?;
    println!("empirical covariate support: {} distinct profiles", fitted.support().len());

    let draw = fitted.generate(1000, 11)?;
    println!("observed risk {:.3}, simulated risk {:.3}", observed.outcome_mean(), draw.outcome_mean());
    println!("observed level counts  {:?}", observed.level_counts());
    println!("simulated level counts {:?}", draw.level_counts());

    let mut head = Vec::new();
    draw.resample(&[0, 1, 2, 3, 4]).write_csv(&mut head)?;
    print!("{}", String::from_utf8(head)?);
    Ok(())
}
