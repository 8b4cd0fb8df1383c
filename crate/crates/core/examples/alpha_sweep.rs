//! Repeats the bias diagnostic over a grid of thresholds and reports the
//! smallest one whose realistic and ITT bias stays within 2%.

use realistic_rules::diagnostics::{alpha_sweep, scenarios, DiagnosticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gen = scenarios::structural_zero();
    let mut cfg = DiagnosticConfig::new(1000, 9);
    cfg.replicates = 100;
    let sweep = alpha_sweep(&gen, &cfg, &[0.0, 0.01, 0.025, 0.05, 0.1], 2.0)?;
    sweep.write_csv(std::io::stdout())?;
    match sweep.smallest_acceptable {
        Some(a) => println!("smallest acceptable alpha: {a}"),
        None => println!("no threshold in the grid keeps bias within {}%", sweep.threshold_percent),
    }
    Ok(())
}
