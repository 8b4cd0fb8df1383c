use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_rank, newton_step, sup_norm, Design, FitOptions, FitSummary};
use crate::{expit, Error, Result};

/// Linear predictors beyond this magnitude mean the MLE is running off to infinity.
const DIVERGENCE_ETA: f64 = 35.0;

/// Fitted binary logistic regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub summary: FitSummary,
}

struct Group {
    x: Vec<f64>,
    offset: f64,
    count: f64,
    ysum: f64,
}

fn group_rows(design: &Design, y: &[f64], offset: Option<&[f64]>) -> Vec<Group> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for i in 0..design.n_rows() {
        let x = design.row(i);
        let off = offset.map_or(0.0, |o| o[i]);
        let mut key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        key.push(off.to_bits());
        match index.get(&key) {
            Some(&g) => {
                groups[g].count += 1.0;
                groups[g].ysum += y[i];
            }
            None => {
                index.insert(key, groups.len());
                groups.push(Group {
                    x: x.to_vec(),
                    offset: off,
                    count: 1.0,
                    ysum: y[i],
                });
            }
        }
    }
    groups
}

fn eta(g: &Group, beta: &[f64]) -> f64 {
    g.offset + g.x.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>()
}

/// log(1 + exp(x)) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn loglik(groups: &[Group], beta: &[f64]) -> f64 {
    groups
        .iter()
        .map(|g| {
            let e = eta(g, beta);
            g.ysum * e - g.count * softplus(e)
        })
        .sum()
}

fn score_info(groups: &[Group], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = beta.len();
    let mut score = vec![0.0; p];
    let mut info = vec![0.0; p * p];
    for g in groups {
        let prob = expit(eta(g, beta));
        let resid = g.ysum - g.count * prob;
        let w = g.count * prob * (1.0 - prob);
        for j in 0..p {
            score[j] += g.x[j] * resid;
            let wx = w * g.x[j];
            for l in 0..=j {
                info[j * p + l] += wx * g.x[l];
            }
        }
    }
    for j in 0..p {
        for l in 0..j {
            info[l * p + j] = info[j * p + l];
        }
    }
    (score, info)
}

fn check_separation(names: &[String], groups: &[Group]) -> Result<()> {
    let total: f64 = groups.iter().map(|g| g.count).sum();
    let ytotal: f64 = groups.iter().map(|g| g.ysum).sum();
    if ytotal == 0.0 || ytotal == total {
        return Err(Error::Separation {
            level: None,
            feature: names.first().cloned().unwrap_or_default(),
        });
    }
    let p = names.len();
    let binary = |j: usize| groups.iter().all(|g| g.x[j] == 0.0 || g.x[j] == 1.0);
    let has_intercept = (0..p).any(|j| groups.iter().all(|g| g.x[j] == 1.0));
    for j in 0..p {
        if !binary(j) || groups.iter().all(|g| g.x[j] == 1.0) {
            continue;
        }
        let mut subsets = vec![1.0];
        if has_intercept {
            subsets.push(0.0);
        }
        for value in subsets {
            let (c, s) = groups
                .iter()
                .filter(|g| g.x[j] == value)
                .fold((0.0, 0.0), |(c, s), g| (c + g.count, s + g.ysum));
            if c > 0.0 && (s == 0.0 || s == c) {
                return Err(Error::Separation {
                    level: None,
                    feature: names[j].clone(),
                });
            }
        }
    }
    Ok(())
}

/// Maximum-likelihood logistic regression of `y` on the design columns, with
/// an optional fixed offset added to the linear predictor.
///
/// Newton iterations with step-halving; the log-likelihood never decreases.
/// Converges when the score sup-norm is at most `opts.tol`, after which up to
/// three further Newton steps are taken while they keep shrinking the score.
pub fn fit_logistic(
    design: &Design,
    y: &[f64],
    offset: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<LogisticFit> {
    let n = design.n_rows();
    let p = design.n_cols();
    if n == 0 || p == 0 {
        return Err(Error::validation("design", "need at least one row and one column"));
    }
    if y.len() != n || offset.is_some_and(|o| o.len() != n) {
        return Err(Error::validation("design", "outcome/offset length mismatch"));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::validation("outcome", format!("must be 0 or 1, got {bad}")));
    }
    let groups = group_rows(design, y, offset);

    let mut cross = vec![0.0; p * p];
    for g in &groups {
        for j in 0..p {
            for l in 0..p {
                cross[j * p + l] += g.count * g.x[j] * g.x[l];
            }
        }
    }
    check_rank(design.names(), &cross)?;
    check_separation(design.names(), &groups)?;

    let mut beta = vec![0.0; p];
    let mut ll = loglik(&groups, &beta);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    let (mut score, mut info) = score_info(&groups, &beta);
    let mut norm = sup_norm(&score);

    while iterations < opts.max_iter {
        if norm <= opts.tol {
            converged = true;
            break;
        }
        let step = newton_step(&info, &score)
            .ok_or_else(|| Error::Singular("information matrix not positive definite".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let ll_c = loglik(&groups, &cand);
            if ll_c >= ll || (ll - ll_c) <= 1e-14 * ll.abs() {
                beta = cand;
                ll = ll_c.max(ll);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        trace.push(ll);
        (score, info) = score_info(&groups, &beta);
        norm = sup_norm(&score);
    }
    if !converged && norm <= opts.tol {
        converged = true;
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            score_norm: norm,
        });
    }

    // Polish: quadratic convergence usually takes the score to rounding level.
    for _ in 0..3 {
        let Some(step) = newton_step(&info, &score) else { break };
        let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
        let (s_c, i_c) = score_info(&groups, &cand);
        let n_c = sup_norm(&s_c);
        if n_c >= norm {
            break;
        }
        beta = cand;
        score = s_c;
        info = i_c;
        norm = n_c;
        ll = loglik(&groups, &beta);
    }

    for g in &groups {
        let lin: f64 = g.x.iter().zip(&beta).map(|(x, b)| x * b).sum();
        if lin.abs() > DIVERGENCE_ETA {
            let j = (0..p)
                .max_by(|&a, &b| {
                    (beta[a] * g.x[a]).abs().total_cmp(&(beta[b] * g.x[b]).abs())
                })
                .unwrap_or(0);
            return Err(Error::Separation {
                level: None,
                feature: design.names()[j].clone(),
            });
        }
    }

    Ok(LogisticFit {
        names: design.names().to_vec(),
        coefficients: beta,
        summary: FitSummary {
            iterations,
            score_norm: norm,
            log_likelihood: ll,
            converged,
            loglik_trace: trace,
        },
    })
}

/// One-parameter logistic submodel fit: `logit Q_eps = offset + eps * h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationFit {
    pub epsilon: f64,
    pub covariate: Vec<f64>,
    pub offset: Vec<f64>,
    pub summary: Option<FitSummary>,
}

/// Fits the fluctuation parameter by regressing `y` on `h` with the given
/// offset and no intercept. A covariate that is zero on every row gives
/// `epsilon = 0` without iterating.
pub fn fit_fluctuation(y: &[f64], h: &[f64], offset: &[f64], opts: &FitOptions) -> Result<FluctuationFit> {
    if h.iter().all(|&v| v == 0.0) {
        return Ok(FluctuationFit {
            epsilon: 0.0,
            covariate: h.to_vec(),
            offset: offset.to_vec(),
            summary: None,
        });
    }
    if let Some(bad) = offset.iter().chain(h).find(|v| !v.is_finite()) {
        return Err(Error::validation("fluctuation", format!("non-finite offset or covariate {bad}")));
    }
    let mut design = Design::new(vec!["h".into()]);
    for &v in h {
        design.push_row(&[v]);
    }
    let fit = fit_logistic(&design, y, Some(offset), opts)?;
    Ok(FluctuationFit {
        epsilon: fit.coefficients[0],
        covariate: h.to_vec(),
        offset: offset.to_vec(),
        summary: Some(fit.summary),
    })
}
