//! Causal effect estimation for a categorical treatment and a binary outcome
//! under static, realistic individualized, and intention-to-treat rules.
//!
//! The crate is organised bottom-up:
//!
//! - [`ingest`]: CSV loading, validation, and MET-score categorisation.
//! - [`glm`]: logistic and multinomial-logistic nuisance models, fitted by
//!   Newton iterations with step-halving.
//! - [`rules`]: realistic option sets, rule assignment, and positivity summaries.
//! - [`estimators`]: G-computation, IPTW, DR-IPTW, and targeted MLE of
//!   counterfactual risks and relative risks.
//! - [`inference`]: seeded nonparametric bootstrap intervals.
//! - [`diagnostics`]: data generation from a known distribution and the
//!   simulation-based ETA bias diagnostic.
//! - [`cli`]: the command-line front end used by the `realistic-rules` binary.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod ingest;
pub mod rules;

pub use error::{Error, Result};

/// Logistic function.
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of `p`.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
