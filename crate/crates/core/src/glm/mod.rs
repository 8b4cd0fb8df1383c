//! Nuisance-model fitting: binary logistic regression (with optional offset,
//! as the targeting step needs) and multinomial logistic regression for the
//! treatment mechanism.
//!
//! Both fitters work on grouped data: rows with identical features (and
//! offset) are collapsed into counts before iterating, which is exact for the
//! likelihood and makes finite-support simulations cheap.

mod logistic;
mod models;
mod multinomial;

use serde::{Deserialize, Serialize};

pub use logistic::{fit_fluctuation, fit_logistic, FluctuationFit, LogisticFit};
pub use models::{
    NuisanceModels, NuisanceSpec, OutcomeFormula, OutcomeModel, QPrediction, StructuralZero,
    TreatmentFormula, TreatmentModel, INTERCEPT,
};
pub use multinomial::{fit_multinomial, MultinomialFit};

/// Stopping rule for Newton iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence when the sup-norm of the score vector is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Convergence metadata recorded with every fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub score_norm: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Log-likelihood after each accepted iteration, starting from the initial point.
    pub loglik_trace: Vec<f64>,
}

/// Dense row-major design matrix with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    names: Vec<String>,
    data: Vec<f64>,
}

impl Design {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            data: Vec::new(),
        }
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let mut design = Self::new(names);
        for row in rows {
            design.push_row(row);
        }
        design
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.names.len(), "design row width");
        self.data.extend_from_slice(row);
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.data.len() / self.names.len()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Sup-norm of a vector.
pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves `info * step = score` for a symmetric positive-definite `info`.
pub(crate) fn newton_step(info: &[f64], score: &[f64]) -> Option<Vec<f64>> {
    let p = score.len();
    let m = nalgebra::DMatrix::from_row_slice(p, p, info);
    let chol = m.cholesky()?;
    let rhs = nalgebra::DVector::from_column_slice(score);
    Some(chol.solve(&rhs).iter().copied().collect())
}

/// Flags an ill-conditioned cross-product matrix before iterating.
pub(crate) fn check_rank(names: &[String], cross: &[f64]) -> crate::Result<()> {
    let p = names.len();
    for j in 0..p {
        if cross[j * p + j] == 0.0 {
            return Err(crate::Error::Singular(format!(
                "column `{}` is identically zero",
                names[j]
            )));
        }
    }
    // Scale to unit diagonal so the eigenvalue ratio reflects collinearity only.
    let scale: Vec<f64> = (0..p).map(|j| cross[j * p + j].sqrt()).collect();
    let m = nalgebra::DMatrix::from_fn(p, p, |i, j| cross[i * p + j] / (scale[i] * scale[j]));
    let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 1e-10 {
        return Err(crate::Error::Singular("design columns are collinear".into()));
    }
    Ok(())
}
