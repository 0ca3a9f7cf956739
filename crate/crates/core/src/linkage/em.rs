use std::collections::HashMap;

use rayon::prelude::*;

use super::{ComparisonVector, LinkageError, LinkageModel, DEFAULT_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once no parameter moves by more than this between iterations.
    pub tol: f64,
    pub floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 1_000,
            tol: 1e-8,
            floor: DEFAULT_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: LinkageModel,
    /// Mixture log-likelihood of the starting parameters followed by the
    /// value after every M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Distinct comparison patterns with multiplicities, in a fixed order.
struct Patterns {
    items: Vec<(ComparisonVector, f64)>,
    total: f64,
}

impl Patterns {
    fn compress(gammas: &[ComparisonVector]) -> Self {
        let mut counts: HashMap<&ComparisonVector, usize> = HashMap::new();
        for g in gammas {
            *counts.entry(g).or_default() += 1;
        }
        let mut items: Vec<(ComparisonVector, f64)> = counts
            .into_iter()
            .map(|(g, c)| (g.clone(), c as f64))
            .collect();
        items.sort_by(|a, b| (&a.0.levels, &a.0.missing).cmp(&(&b.0.levels, &b.0.missing)));
        Patterns {
            items,
            total: gammas.len() as f64,
        }
    }
}

/// Log joint densities `(ln p P(γ|M), ln (1-p) P(γ|U))` for one pattern.
fn log_components(gamma: &ComparisonVector, model: &LinkageModel) -> (f64, f64) {
    let mut lm = model.p.ln();
    let mut lu = (1.0 - model.p).ln();
    for (f, l) in gamma.observed() {
        lm += model.m[f][l].ln();
        lu += model.u[f][l].ln();
    }
    (lm, lu)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Log-likelihood of the two-class mixture over every γ.
pub fn mixture_log_likelihood(gammas: &[ComparisonVector], model: &LinkageModel) -> f64 {
    gammas
        .iter()
        .map(|g| {
            let (a, b) = log_components(g, model);
            log_sum_exp(a, b)
        })
        .sum()
}

/// Posterior match probability and log-likelihood contribution per pattern.
fn e_step(patterns: &Patterns, model: &LinkageModel) -> (Vec<f64>, f64) {
    let per: Vec<(f64, f64)> = patterns
        .items
        .par_iter()
        .map(|(g, _)| {
            let (a, b) = log_components(g, model);
            let posterior = 1.0 / (1.0 + (b - a).exp());
            (posterior, log_sum_exp(a, b))
        })
        .collect();
    let ll = per
        .iter()
        .zip(&patterns.items)
        .map(|((_, l), (_, c))| c * l)
        .sum();
    (per.into_iter().map(|(g, _)| g).collect(), ll)
}

fn m_step(
    patterns: &Patterns,
    posteriors: &[f64],
    prev: &LinkageModel,
    floor: f64,
) -> LinkageModel {
    let arities = prev.arities();
    let mut m_num: Vec<Vec<f64>> = arities.iter().map(|&a| vec![0.0; a]).collect();
    let mut u_num = m_num.clone();
    let mut matched_mass = 0.0;
    for ((g, count), &post) in patterns.items.iter().zip(posteriors) {
        matched_mass += count * post;
        for (f, l) in g.observed() {
            m_num[f][l] += count * post;
            u_num[f][l] += count * (1.0 - post);
        }
    }
    let normalize = |num: Vec<Vec<f64>>, prev: &[Vec<f64>]| -> Vec<Vec<f64>> {
        num.into_iter()
            .zip(prev)
            .map(|(mut row, old)| {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|x| *x /= s);
                    row
                } else {
                    old.clone()
                }
            })
            .collect()
    };
    let mut next = LinkageModel {
        m: normalize(m_num, &prev.m),
        u: normalize(u_num, &prev.u),
        p: matched_mass / patterns.total,
    };
    next.apply_floor(floor);
    next
}

fn max_change(a: &LinkageModel, b: &LinkageModel) -> f64 {
    let flat = |x: &LinkageModel| -> Vec<f64> {
        x.m.iter()
            .chain(&x.u)
            .flatten()
            .copied()
            .chain(std::iter::once(x.p))
            .collect()
    };
    flat(a)
        .iter()
        .zip(flat(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Unsupervised estimation of `(m, u, p)` by expectation–maximization under
/// conditional independence. Deterministic for a given input.
pub fn fit_em(
    gammas: &[ComparisonVector],
    init: &LinkageModel,
    opts: &EmOptions,
) -> Result<EmFit, LinkageError> {
    if gammas.is_empty() {
        return Err(LinkageError::Argument(
            "EM needs at least one comparison vector".into(),
        ));
    }
    init.validate(opts.floor)?;
    let arities = init.arities();
    for g in gammas {
        if g.len() != arities.len() || g.observed().any(|(f, l)| l >= arities[f]) {
            return Err(LinkageError::Argument(
                "comparison vector does not fit the model's arities".into(),
            ));
        }
    }

    let patterns = Patterns::compress(gammas);
    let mut model = init.clone();
    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (posteriors, ll) = e_step(&patterns, &model);
        if log_likelihoods.is_empty() {
            log_likelihoods.push(ll);
        }
        let next = m_step(&patterns, &posteriors, &model, opts.floor);
        iterations += 1;
        let delta = max_change(&model, &next);
        model = next;
        log_likelihoods.push(e_step(&patterns, &model).1);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(EmFit {
        model,
        log_likelihoods,
        iterations,
        converged,
    })
}
