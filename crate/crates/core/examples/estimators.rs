//! All four estimators of the counterfactual risk under every rule, compared
//! with the exact value under the generating distribution.

use realistic_rules::diagnostics::scenarios;
use realistic_rules::estimators::{estimate, EstimationOptions, EstimatorKind, NuisanceTable};
use realistic_rules::glm::NuisanceSpec;
use realistic_rules::rules::{Rule, RuleFamily};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gen = scenarios::structural_zero();
    let data = gen.generate(5000, 3)?;
    let models = NuisanceSpec::default().fit(&data)?;
    let table = NuisanceTable::from_models(&data, &models.treatment, &models.outcome)?;
    let opts = EstimationOptions::default();

    println!("{:<10} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}", "family", "target", "truth", "gcomp", "iptw", "dr-iptw", "tmle");
    for family in RuleFamily::ALL {
        for target in 0..6 {
            let rule = Rule::new(family, target, 0.05);
            print!("{:<10} {target:>6} {:>8.4}", family.as_str(), gen.true_psi(&rule)?);
            for kind in EstimatorKind::ALL {
                match estimate(kind, &table, &rule, &opts) {
                    Ok(e) => print!(" {:>8.4}", e.psi),
                    Err(_) => print!(" {:>8}", "NA"),
                }
            }
            println!();
        }
    }
    Ok(())
}
