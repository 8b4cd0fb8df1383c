//! Fits the multinomial treatment model and the logistic outcome model on a
//! simulated cohort, then shows detected structural zeros and the positivity summary.

use realistic_rules::diagnostics::scenarios;
use realistic_rules::glm::NuisanceSpec;
use realistic_rules::rules::positivity_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = scenarios::structural_zero().generate(3000, 1)?;
    let models = NuisanceSpec::default().fit(&data)?;

    let g = &models.treatment;
    println!("treatment model: {} levels, truncation at {}", g.n_levels, g.alpha_trunc);
    for z in &g.structural_zeros {
        println!("  structural zero: level {} never given when {} = 1", z.level, z.feature);
    }
    println!("outcome model coefficients:");
    for (name, b) in models.outcome.coefficient_names.iter().zip(&models.outcome.coefficients) {
        println!("  {name:<12} {b:>8.3}");
    }

    let report = positivity_report(&data, g, 0.05)?;
    report.write_csv(std::io::stdout())?;
    Ok(())
}
