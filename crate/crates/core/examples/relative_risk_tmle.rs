//! Relative risk of each level against level 0: the iterated TMLE next to the
//! plug-in ratio of two mean estimates.

use realistic_rules::diagnostics::scenarios;
use realistic_rules::estimators::{
    relative_risk_plugin, tmle_mean, tmle_relative_risk, EstimationOptions, NuisanceTable, RrTmleOptions,
};
use realistic_rules::glm::NuisanceSpec;
use realistic_rules::rules::Rule;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gen = scenarios::structural_zero();
    let data = gen.generate(4000, 4)?;
    let models = NuisanceSpec::default().fit(&data)?;
    let table = NuisanceTable::from_models(&data, &models.treatment, &models.outcome)?;
    let opts = EstimationOptions::default();

    for target in 1..6 {
        let rule = Rule::realistic(target, 0.05);
        let truth = gen.true_psi(&rule)? / gen.true_psi(&rule.retarget(0))?;
        let rr = tmle_relative_risk(&table, &rule, &opts, &RrTmleOptions::default())?;
        let plugin = relative_risk_plugin(&tmle_mean(&table, &rule, &opts)?, &tmle_mean(&table, &rule.retarget(0), &opts)?)?;
        println!(
            "level {target}: truth {truth:.3}  tmle {:.3} ({} iterations, eps trace {:?})  plug-in {:.3}",
            rr.theta, rr.iterations, rr.epsilon_trace, plugin.theta
        );
    }
    Ok(())
}
