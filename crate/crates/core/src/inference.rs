//! Nonparametric bootstrap intervals.
//!
//! Replicate `b` draws its resample from a ChaCha stream keyed by the seed
//! and `b`, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::estimators::{estimate_suite, EstimateReport, NuisanceTable, SuiteSpec};
use crate::glm::NuisanceSpec;
use crate::ingest::Dataset;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalMethod {
    /// Empirical quantiles of the replicates (linear interpolation).
    #[default]
    Percentile,
    /// Point estimate plus or minus a normal quantile times the replicate SD.
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub method: IntervalMethod,
    pub level: f64,
    /// Failure fraction above which a warning is logged.
    pub warn_failure_fraction: f64,
    /// Failure fraction above which the interval is an error.
    pub max_failure_fraction: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 20_110_101,
            method: IntervalMethod::Percentile,
            level: 0.95,
            warn_failure_fraction: 0.01,
            max_failure_fraction: 0.10,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::validation("replicates", "must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::validation("level", format!("must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
    pub replicates_used: usize,
    pub replicates_requested: usize,
    /// The point estimate falls outside a percentile interval, which
    /// signals a skewed or unstable sampling distribution.
    pub point_outside: bool,
}

/// Generator for replicate `b`.
pub fn replicate_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// `n` indices drawn uniformly with replacement.
pub fn resample_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Linearly interpolated quantile of sorted data (`(n - 1) p` positions).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let pos = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Runs `statistic` on every bootstrap resample, in replicate order.
pub fn bootstrap_replicates<T, F>(dataset: &Dataset, cfg: &BootstrapConfig, statistic: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(&Dataset) -> Result<T> + Sync,
{
    cfg.validate()?;
    let n = dataset.len();
    Ok((0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let idx = resample_indices(&mut replicate_rng(cfg.seed, b), n);
            statistic(&dataset.resample(&idx))
        })
        .collect())
}

/// Interval from successful replicate draws; `requested` counts failures too.
pub fn interval_from_draws(point: f64, draws: &[f64], requested: usize, cfg: &BootstrapConfig) -> Result<IntervalEstimate> {
    let failed = requested - draws.len();
    let fraction = failed as f64 / requested as f64;
    if draws.is_empty() || fraction > cfg.max_failure_fraction {
        return Err(Error::TooManyFailures { failed, total: requested });
    }
    if fraction > cfg.warn_failure_fraction {
        log::warn!("{failed} of {requested} bootstrap replicates failed");
    }
    let (lower, upper) = match cfg.method {
        IntervalMethod::Percentile => {
            let mut sorted = draws.to_vec();
            sorted.sort_by(f64::total_cmp);
            let tail = (1.0 - cfg.level) / 2.0;
            (percentile(&sorted, tail), percentile(&sorted, 1.0 - tail))
        }
        IntervalMethod::Normal => {
            let m = draws.len() as f64;
            let mean = draws.iter().sum::<f64>() / m;
            let var = if draws.len() > 1 {
                draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            let z = Normal::standard().inverse_cdf(0.5 + cfg.level / 2.0);
            (point - z * var.sqrt(), point + z * var.sqrt())
        }
    };
    let point_outside = point < lower || point > upper;
    if point_outside {
        log::warn!("point estimate {point} outside bootstrap interval [{lower}, {upper}]");
    }
    Ok(IntervalEstimate {
        point,
        lower,
        upper,
        level: cfg.level,
        method: cfg.method,
        replicates_used: draws.len(),
        replicates_requested: requested,
        point_outside,
    })
}

/// Interval for a scalar statistic of the data.
pub fn bootstrap_ci<F>(dataset: &Dataset, cfg: &BootstrapConfig, statistic: F) -> Result<IntervalEstimate>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    let point = statistic(dataset)?;
    let draws: Vec<f64> = bootstrap_replicates(dataset, cfg, &statistic)?
        .into_iter()
        .filter_map(|r| r.ok().filter(|v| v.is_finite()))
        .collect();
    interval_from_draws(point, &draws, cfg.replicates, cfg)
}

/// Refits both nuisance models on every resample, re-evaluates the whole
/// grid and attaches an interval to every cell with a point estimate.
pub fn bootstrap_suite(
    dataset: &Dataset,
    nuisance: &NuisanceSpec,
    report: &mut EstimateReport,
    cfg: &BootstrapConfig,
) -> Result<()> {
    let spec: &SuiteSpec = &report.spec;
    let replicates = bootstrap_replicates(dataset, cfg, |data| {
        let models = nuisance.fit(data)?;
        let table = NuisanceTable::from_models(data, &models.treatment, &models.outcome)?;
        let rep = estimate_suite(&table, spec)?;
        Ok(rep
            .cells
            .iter()
            .map(|c| (c.psi.value, c.relative_risk.value))
            .collect::<Vec<_>>())
    })?;
    let failed_fits = replicates.iter().filter(|r| r.is_err()).count();
    if failed_fits > 0 {
        if let Some(Err(e)) = replicates.iter().find(|r| r.is_err()) {
            log::warn!("{failed_fits} bootstrap refits failed; first error: {e}");
        }
    }
    let ok: Vec<&Vec<(Option<f64>, Option<f64>)>> = replicates.iter().filter_map(|r| r.as_ref().ok()).collect();
    for (j, cell) in report.cells.iter_mut().enumerate() {
        for (measure, result) in [(0, &mut cell.psi), (1, &mut cell.relative_risk)] {
            let Some(point) = result.value else { continue };
            let draws: Vec<f64> = ok
                .iter()
                .filter_map(|rep| if measure == 0 { rep[j].0 } else { rep[j].1 })
                .filter(|v| v.is_finite())
                .collect();
            match interval_from_draws(point, &draws, cfg.replicates, cfg) {
                Ok(ci) => result.interval = Some(ci),
                Err(e) => result.error = Some(format!("interval: {e}")),
            }
        }
    }
    Ok(())
}
