use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_rank, newton_step, sup_norm, Design, FitOptions, FitSummary};
use crate::{Error, Result};

const DIVERGENCE_ETA: f64 = 35.0;

/// Fitted baseline-category logit model with reference level 0.
///
/// `coefficients[k - 1][j]` is the coefficient of feature `j` for level `k`.
/// A masked coefficient stands for minus infinity: the level has probability
/// zero wherever that (binary) feature equals one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultinomialFit {
    pub names: Vec<String>,
    pub n_levels: usize,
    pub coefficients: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
    /// `(level, feature index)` cells with no observations.
    pub structural_zeros: Vec<(usize, usize)>,
    /// Levels never observed; their probability is zero everywhere.
    pub empty_levels: Vec<usize>,
    pub summary: FitSummary,
}

struct Group {
    x: Vec<f64>,
    counts: Vec<f64>,
    total: f64,
}

/// Level probabilities for one feature row under `coefficients` and `mask`.
/// A level is switched off when the mask hits a feature equal to one, or
/// when its whole intercept is masked (empty level).
pub(crate) fn probabilities(x: &[f64], coefficients: &[Vec<f64>], mask: &[Vec<bool>]) -> Vec<f64> {
    let k = coefficients.len() + 1;
    let mut eta = vec![0.0; k];
    let mut active = vec![true; k];
    for level in 1..k {
        let m = &mask[level - 1];
        if m.iter().zip(x).any(|(&masked, &xv)| masked && xv != 0.0) {
            active[level] = false;
            continue;
        }
        eta[level] = coefficients[level - 1]
            .iter()
            .zip(x)
            .zip(m)
            .filter(|(_, &masked)| !masked)
            .map(|((b, xv), _)| b * xv)
            .sum();
    }
    let max = (0..k).filter(|&l| active[l]).map(|l| eta[l]).fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = (0..k)
        .map(|l| if active[l] { (eta[l] - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

fn group_rows(design: &Design, a: &[usize], k: usize) -> Vec<Group> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for (i, &level) in a.iter().enumerate() {
        let x = design.row(i);
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(Group {
                x: x.to_vec(),
                counts: vec![0.0; k],
                total: 0.0,
            });
            groups.len() - 1
        });
        groups[g].counts[level] += 1.0;
        groups[g].total += 1.0;
    }
    groups
}

/// Parameters that are actually estimated, as `(level, feature)` pairs.
fn free_params(mask: &[Vec<bool>]) -> Vec<(usize, usize)> {
    mask.iter()
        .enumerate()
        .flat_map(|(l, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &m)| !m)
                .map(move |(j, _)| (l + 1, j))
        })
        .collect()
}

fn loglik(groups: &[Group], coef: &[Vec<f64>], mask: &[Vec<bool>]) -> f64 {
    groups
        .iter()
        .map(|g| {
            let probs = probabilities(&g.x, coef, mask);
            g.counts
                .iter()
                .zip(&probs)
                .filter(|(&c, _)| c > 0.0)
                .map(|(c, p)| c * p.ln())
                .sum::<f64>()
        })
        .sum()
}

fn score_info(
    groups: &[Group],
    coef: &[Vec<f64>],
    mask: &[Vec<bool>],
    free: &[(usize, usize)],
) -> (Vec<f64>, Vec<f64>) {
    let q = free.len();
    let mut score = vec![0.0; q];
    let mut info = vec![0.0; q * q];
    for g in groups {
        let probs = probabilities(&g.x, coef, mask);
        for (u, &(k, j)) in free.iter().enumerate() {
            if g.x[j] == 0.0 {
                continue;
            }
            score[u] += g.x[j] * (g.counts[k] - g.total * probs[k]);
            for (v, &(l, m)) in free.iter().enumerate().take(u + 1) {
                if g.x[m] == 0.0 {
                    continue;
                }
                let cov = if k == l { probs[k] * (1.0 - probs[k]) } else { -probs[k] * probs[l] };
                info[u * q + v] += g.total * g.x[j] * g.x[m] * cov;
            }
        }
    }
    for u in 0..q {
        for v in 0..u {
            info[v * q + u] = info[u * q + v];
        }
    }
    (score, info)
}

fn unpack(theta: &[f64], free: &[(usize, usize)], k: usize, p: usize) -> Vec<Vec<f64>> {
    let mut coef = vec![vec![0.0; p]; k - 1];
    for (&(l, j), &v) in free.iter().zip(theta) {
        coef[l - 1][j] = v;
    }
    coef
}

/// Maximum-likelihood multinomial logistic regression of the treatment level
/// on the design columns (which should include an intercept).
///
/// Empty (level, binary feature) cells are detected up front and fixed at
/// minus infinity, which is where the likelihood supremum lies; they are
/// reported as structural zeros. A level that is empty entirely is reported
/// in `empty_levels`. A binary feature whose rows never take the reference
/// level cannot be represented this way and is a separation error.
pub fn fit_multinomial(design: &Design, a: &[usize], n_levels: usize, opts: &FitOptions) -> Result<MultinomialFit> {
    let n = design.n_rows();
    let p = design.n_cols();
    if n == 0 || p == 0 {
        return Err(Error::validation("design", "need at least one row and one column"));
    }
    if a.len() != n {
        return Err(Error::validation("design", "treatment length mismatch"));
    }
    if n_levels < 2 {
        return Err(Error::validation("n_levels", "need at least two levels"));
    }
    if let Some(&bad) = a.iter().find(|&&l| l >= n_levels) {
        return Err(Error::validation("treatment", format!("level {bad} is not below {n_levels}")));
    }
    let names = design.names();
    let groups = group_rows(design, a, n_levels);

    let mut cross = vec![0.0; p * p];
    for g in &groups {
        for j in 0..p {
            for l in 0..p {
                cross[j * p + l] += g.total * g.x[j] * g.x[l];
            }
        }
    }
    check_rank(names, &cross)?;

    let level_totals: Vec<f64> = (0..n_levels)
        .map(|l| groups.iter().map(|g| g.counts[l]).sum())
        .collect();
    if level_totals[0] == 0.0 {
        return Err(Error::Separation {
            level: Some(0),
            feature: names[0].clone(),
        });
    }
    let mut mask = vec![vec![false; p]; n_levels - 1];
    let mut empty_levels = Vec::new();
    for level in 1..n_levels {
        if level_totals[level] == 0.0 {
            empty_levels.push(level);
            mask[level - 1].iter_mut().for_each(|m| *m = true);
        }
    }

    let mut structural_zeros = Vec::new();
    for j in 0..p {
        let binary = groups.iter().all(|g| g.x[j] == 0.0 || g.x[j] == 1.0);
        let constant = groups.iter().all(|g| g.x[j] == groups[0].x[j]);
        if !binary || constant {
            continue;
        }
        let sub: Vec<f64> = (0..n_levels)
            .map(|l| groups.iter().filter(|g| g.x[j] == 1.0).map(|g| g.counts[l]).sum())
            .collect();
        if sub[0] == 0.0 {
            return Err(Error::Separation {
                level: Some(0),
                feature: names[j].clone(),
            });
        }
        for level in 1..n_levels {
            if sub[level] == 0.0 && level_totals[level] > 0.0 {
                mask[level - 1][j] = true;
                structural_zeros.push((level, j));
            }
        }
    }

    let free = free_params(&mask);
    let mut theta = vec![0.0; free.len()];
    let mut coef = unpack(&theta, &free, n_levels, p);
    let mut ll = loglik(&groups, &coef, &mask);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let (mut score, mut info) = score_info(&groups, &coef, &mask, &free);
    let mut norm = sup_norm(&score);
    let mut converged = norm <= opts.tol;

    while !converged && iterations < opts.max_iter {
        let step = newton_step(&info, &score)
            .ok_or_else(|| Error::Singular("multinomial information matrix not positive definite".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_coef = unpack(&cand, &free, n_levels, p);
            let ll_c = loglik(&groups, &cand_coef, &mask);
            if ll_c >= ll || (ll - ll_c) <= 1e-14 * ll.abs() {
                theta = cand;
                coef = cand_coef;
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
        (score, info) = score_info(&groups, &coef, &mask, &free);
        norm = sup_norm(&score);
        converged = norm <= opts.tol;
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            score_norm: norm,
        });
    }
    for _ in 0..3 {
        let Some(step) = newton_step(&info, &score) else { break };
        let cand: Vec<f64> = theta.iter().zip(&step).map(|(b, s)| b + s).collect();
        let cand_coef = unpack(&cand, &free, n_levels, p);
        let (s_c, i_c) = score_info(&groups, &cand_coef, &mask, &free);
        let n_c = sup_norm(&s_c);
        if n_c >= norm {
            break;
        }
        theta = cand;
        coef = cand_coef;
        score = s_c;
        info = i_c;
        norm = n_c;
        ll = loglik(&groups, &coef, &mask);
    }

    for g in &groups {
        for level in 1..n_levels {
            let lin: f64 = (0..p)
                .filter(|&j| !mask[level - 1][j])
                .map(|j| coef[level - 1][j] * g.x[j])
                .sum();
            if lin.abs() > DIVERGENCE_ETA {
                let j = (0..p)
                    .max_by(|&u, &v| coef[level - 1][u].abs().total_cmp(&coef[level - 1][v].abs()))
                    .unwrap_or(0);
                return Err(Error::Separation {
                    level: Some(level),
                    feature: names[j].clone(),
                });
            }
        }
    }

    Ok(MultinomialFit {
        names: names.to_vec(),
        n_levels,
        coefficients: coef,
        mask,
        structural_zeros,
        empty_levels,
        summary: FitSummary {
            iterations,
            score_norm: norm,
            log_likelihood: ll,
            converged,
            loglik_trace: trace,
        },
    })
}
