//! Shipped generating distributions with independent, finite covariate
//! laws. Each exercises one behaviour: consistency of all estimators,
//! positivity bias under structural zeros, double robustness, a null
//! treatment effect, no positivity problems, bootstrap coverage, and an
//! illustrative elderly-cohort layout using the standard covariate schema.

use crate::glm::{OutcomeFormula, OutcomeModel, StructuralZero, TreatmentFormula, TreatmentModel};
use crate::ingest::{CovariateVector, STANDARD_COVARIATES};

use super::GeneratingDistribution;

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 7] = [
    "consistency",
    "structural-zero",
    "double-robust",
    "null-effect",
    "no-violation",
    "coverage",
    "elderly-cohort",
];

pub fn by_name(name: &str) -> Option<GeneratingDistribution> {
    Some(match name {
        "consistency" => consistency(),
        "structural-zero" => structural_zero(),
        "double-robust" => double_robust(),
        "null-effect" => null_effect(),
        "no-violation" => no_violation(),
        "coverage" => coverage(),
        "elderly-cohort" => elderly_cohort(),
        _ => return None,
    })
}

/// One factor of a product distribution: alternative indicator blocks and
/// their probabilities.
type Factor = Vec<(Vec<u8>, f64)>;

fn binary(p: f64) -> Factor {
    vec![(vec![0], 1.0 - p), (vec![1], p)]
}

/// Every combination of factor levels, with product probabilities.
pub fn product_support(factors: &[Factor]) -> Vec<(CovariateVector, f64)> {
    let mut out: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), 1.0)];
    for factor in factors {
        out = out
            .iter()
            .flat_map(|(w, p)| {
                factor.iter().map(move |(block, q)| {
                    let mut w = w.clone();
                    w.extend(block);
                    (w, p * q)
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|(w, p)| (CovariateVector::new(w).expect("indicator blocks are 0/1"), p))
        .collect()
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn zeros(cells: &[(usize, &str)]) -> Vec<StructuralZero> {
    cells
        .iter()
        .map(|&(level, feature)| StructuralZero {
            level,
            feature: feature.into(),
        })
        .collect()
}

fn build(
    covariates: &[&str],
    factors: &[Factor],
    g: Vec<Vec<f64>>,
    structural: &[(usize, &str)],
    q_formula: &OutcomeFormula,
    q: Vec<f64>,
) -> GeneratingDistribution {
    let cov = names(covariates);
    let k = g.len() + 1;
    let treatment = TreatmentModel::from_coefficients(cov.clone(), k, &TreatmentFormula::default(), g, zeros(structural))
        .expect("shipped treatment coefficients are valid");
    let outcome =
        OutcomeModel::from_coefficients(cov.clone(), k, q_formula, q).expect("shipped outcome coefficients are valid");
    GeneratingDistribution::explicit(cov, k, product_support(factors), treatment, outcome)
        .expect("shipped distribution is valid")
}

/// Three binary covariates, six levels, main-effects models. Every
/// treatment probability is either at most 0.027 or at least 0.075, so
/// realistic sets at 0.05 are stable under estimation.
pub fn consistency() -> GeneratingDistribution {
    build(
        &["X1", "X2", "X3"],
        &[binary(0.4), binary(0.5), binary(0.3)],
        vec![
            vec![0.2, -0.3, 0.2, -0.2],
            vec![0.1, -0.5, 0.3, -0.4],
            vec![0.0, -0.8, 0.4, -0.6],
            vec![-0.2, -1.0, 0.3, -2.2],
            vec![-0.4, -2.8, 0.5, -0.9],
        ],
        &[],
        &OutcomeFormula::default(),
        vec![-1.0, 0.5, -0.4, 0.3, -0.2, -0.35, -0.5, -0.6, -0.7],
    )
}

/// Frail subjects (prevalence 0.3) never receive level 5 and old subjects
/// (0.35) never receive level 4; both groups carry elevated risk. All other
/// treatment probabilities are at least 0.13.
pub fn structural_zero() -> GeneratingDistribution {
    build(
        &["FRAIL", "OLD", "SMOKER"],
        &[binary(0.3), binary(0.35), binary(0.25)],
        vec![
            vec![0.0, -0.2, 0.1, -0.1],
            vec![0.0, -0.3, 0.1, -0.2],
            vec![0.0, -0.4, -0.2, -0.2],
            vec![0.0, -0.5, 0.0, -0.3],
            vec![0.0, 0.0, -0.3, -0.3],
        ],
        &[(5, "FRAIL"), (4, "OLD")],
        &OutcomeFormula::default(),
        vec![-1.8, 1.2, 0.8, 0.5, -0.1, -0.2, -0.3, -0.4, -0.5],
    )
}

/// Outcome formula under which [`double_robust`] is correctly specified.
pub fn double_robust_outcome_formula() -> OutcomeFormula {
    OutcomeFormula {
        covariates: None,
        interactions: vec!["X1".into()],
    }
}

/// Treatment formula omitting the confounder `X2`.
pub fn double_robust_misspecified_treatment() -> TreatmentFormula {
    TreatmentFormula {
        covariates: Some(vec!["X1".into()]),
    }
}

/// Two confounders; the treatment effect grows with level and differs by
/// `X1`, so an outcome model without the interaction is misspecified.
/// Treatment probabilities are at least 0.09 everywhere.
pub fn double_robust() -> GeneratingDistribution {
    let mut q = vec![-1.2, 0.2, 1.0];
    q.extend((1..6).map(|a| -0.1 * a as f64));
    q.extend((1..6).map(|a| 0.35 * a as f64));
    build(
        &["X1", "X2"],
        &[binary(0.5), binary(0.4)],
        (1..6).map(|a| vec![0.0, 0.1 + 0.1 * a as f64, -0.1 - 0.2 * a as f64]).collect(),
        &[],
        &double_robust_outcome_formula(),
        q,
    )
}

/// Confounded treatment with no effect on the outcome: every relative risk is 1.
pub fn null_effect() -> GeneratingDistribution {
    build(
        &["X1", "X2"],
        &[binary(0.5), binary(0.4)],
        (1..6).map(|a| vec![0.0, 0.1 + 0.1 * a as f64, -0.1 - 0.2 * a as f64]).collect(),
        &[],
        &OutcomeFormula::default(),
        vec![-1.0, 0.6, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0],
    )
}

/// Treatment independent of covariates with probability 1/6 per level.
pub fn no_violation() -> GeneratingDistribution {
    build(
        &["X1", "X2"],
        &[binary(0.5), binary(0.5)],
        vec![vec![0.0; 3]; 5],
        &[],
        &OutcomeFormula::default(),
        vec![-0.5, 0.8, -0.6, -0.15, -0.3, -0.45, -0.6, -0.75],
    )
}

/// Small three-level problem for interval coverage checks.
pub fn coverage() -> GeneratingDistribution {
    build(
        &["X1", "X2"],
        &[binary(0.5), binary(0.4)],
        vec![vec![0.0, 0.4, -0.3], vec![-0.2, 0.6, -0.5]],
        &[],
        &OutcomeFormula::default(),
        vec![-0.8, 0.5, 0.7, -0.3, -0.6],
    )
}

/// Elderly-cohort layout over the standard fifteen covariates. Older and
/// less healthy subjects are less active, the oldest age group is never at
/// levels 3 and 5 and poor self-rated health is never at levels 4 and 5.
/// Covariate frequencies and both intercept sets are illustrative choices,
/// not estimates from any real cohort.
pub fn elderly_cohort() -> GeneratingDistribution {
    // Odds ratios per covariate (schema order) for levels 1..5.
    let or: [[f64; 5]; 15] = [
        [0.94, 0.86, 0.82, 0.89, 0.55], // FEMALE
        [1.16, 1.57, 1.37, 1.32, 1.44], // AGE.1
        [1.37, 1.57, 1.47, 1.32, 1.37], // AGE.2
        [0.74, 0.94, 0.83, 0.83, 1.02], // AGE.4
        [0.24, 1.03, 0.00, 1.04, 0.00], // AGE.5
        [1.09, 1.10, 1.46, 1.29, 1.67], // HLT.EX
        [0.56, 0.58, 0.47, 0.39, 0.45], // HLT.FAIR
        [0.50, 0.43, 0.33, 0.00, 0.00], // HLT.POOR
        [0.78, 0.82, 0.70, 0.99, 0.53], // NRB.FAIR
        [0.55, 0.40, 0.29, 0.07, 0.17], // NRB.POOR
        [0.90, 1.29, 1.18, 0.89, 1.46], // CARD
        [1.19, 1.14, 1.13, 1.11, 0.93], // CHRON
        [0.65, 0.43, 0.32, 0.61, 0.33], // SMK.CURR
        [1.00, 1.23, 1.09, 1.25, 1.20], // SMK.EX
        [0.67, 0.39, 0.52, 0.37, 0.33], // DECLINE
    ];
    let intercepts = [-0.2, -0.4, -0.9, -1.2, -1.6];
    let g = (0..5)
        .map(|k| {
            let mut c = vec![intercepts[k]];
            c.extend(or.iter().map(|row| if row[k] > 0.0 { row[k].ln() } else { 0.0 }));
            c
        })
        .collect();
    let q_or = [
        0.52, 0.12, 0.43, 3.41, 5.74, 0.76, 2.01, 2.84, 0.89, 1.94, 1.60, 1.44, 3.73, 1.38, 1.46,
    ];
    let a_or = [0.86, 0.81, 0.78, 0.45, 0.80];
    let mut q = vec![-2.2];
    q.extend(q_or.iter().chain(&a_or).map(|v: &f64| v.ln()));
    build(
        &STANDARD_COVARIATES,
        &[
            binary(0.55),
            vec![
                (vec![1, 0, 0, 0], 0.08),
                (vec![0, 1, 0, 0], 0.35),
                (vec![0, 0, 0, 0], 0.35),
                (vec![0, 0, 1, 0], 0.18),
                (vec![0, 0, 0, 1], 0.04),
            ],
            vec![
                (vec![1, 0, 0], 0.25),
                (vec![0, 0, 0], 0.50),
                (vec![0, 1, 0], 0.20),
                (vec![0, 0, 1], 0.05),
            ],
            vec![(vec![0, 0], 0.7), (vec![1, 0], 0.2), (vec![0, 1], 0.1)],
            binary(0.2),
            binary(0.3),
            vec![(vec![0, 0], 0.5), (vec![1, 0], 0.1), (vec![0, 1], 0.4)],
            binary(0.4),
        ],
        g,
        &[(3, "AGE.5"), (5, "AGE.5"), (4, "HLT.POOR"), (5, "HLT.POOR")],
        &OutcomeFormula::default(),
        q,
    )
}
