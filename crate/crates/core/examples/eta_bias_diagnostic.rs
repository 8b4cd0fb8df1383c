//! Simulation-based bias diagnostic: static rules that demand structurally
//! impossible treatment are biased, realistic and ITT rules are not.

use realistic_rules::diagnostics::{eta_bias_diagnostic, scenarios, DiagnosticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gen = scenarios::structural_zero();
    let mut cfg = DiagnosticConfig::new(1000, 8);
    cfg.replicates = 200;
    let report = eta_bias_diagnostic(&gen, &cfg)?;
    println!("IPTW bias (% of truth), {} replicates of n = {}", report.replicates, report.n_sim);
    report.write_csv(std::io::stdout())?;
    Ok(())
}
