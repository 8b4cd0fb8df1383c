//! How static, realistic and intention-to-treat rules assign treatment to
//! individual subjects.

use realistic_rules::diagnostics::scenarios;
use realistic_rules::glm::NuisanceSpec;
use realistic_rules::rules::{assign_itt, assign_realistic, realistic_set, EmptySetPolicy, RuleFamily};
use realistic_rules::rules::{rule_assignment_table, SetSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A single subject for whom levels 4 and 5 are unrealistic.
    let g = [0.30, 0.25, 0.20, 0.21, 0.03, 0.01];
    let set = realistic_set(&g, 0.05);
    let members: Vec<usize> = set.members().collect();
    println!("realistic set at alpha 0.05: {members:?}");
    for target in 0..6 {
        let d = assign_realistic(target, &set, EmptySetPolicy::Error, 0)?;
        println!("target {target}: static {target}, realistic {d}, ITT (observed 1) {}", assign_itt(target, 1, &set));
    }

    // Per-level assignment counts for a fitted cohort.
    let data = scenarios::structural_zero().generate(2000, 2)?;
    let g = NuisanceSpec::default().fit_treatment(&data)?;
    for family in [RuleFamily::Realistic, RuleFamily::Itt] {
        println!("\n{family} rule assignments");
        rule_assignment_table(&data, &g, family, 0.05, EmptySetPolicy::Error, SetSource::Raw)?.write_csv(std::io::stdout())?;
    }
    Ok(())
}
