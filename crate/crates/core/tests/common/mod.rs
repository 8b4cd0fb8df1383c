#![allow(dead_code)]

use realistic_rules::diagnostics::GeneratingDistribution;
use realistic_rules::estimators::NuisanceTable;
use realistic_rules::glm::{NuisanceModels, NuisanceSpec, OutcomeFormula, TreatmentFormula};
use realistic_rules::ingest::Dataset;
use realistic_rules::rules::{Rule, RuleFamily};

/// Every (family, target) rule at threshold `alpha`.
pub fn all_rules(k: usize, alpha: f64) -> Vec<Rule> {
    RuleFamily::ALL
        .iter()
        .flat_map(|&f| (0..k).map(move |t| Rule::new(f, t, alpha)))
        .collect()
}

pub fn spec(outcome: OutcomeFormula, treatment: TreatmentFormula, alpha_trunc: f64) -> NuisanceSpec {
    NuisanceSpec {
        treatment,
        outcome,
        alpha_trunc,
        ..NuisanceSpec::default()
    }
}

/// A sample from `gen` with models fitted by `spec`.
pub fn fitted(gen: &GeneratingDistribution, n: usize, seed: u64, spec: &NuisanceSpec) -> (Dataset, NuisanceModels, NuisanceTable) {
    let data = gen.generate(n, seed).expect("generate");
    let models = spec.fit(&data).expect("fit");
    let table = NuisanceTable::from_models(&data, &models.treatment, &models.outcome).expect("table");
    (data, models, table)
}
