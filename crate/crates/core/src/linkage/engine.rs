use std::collections::BTreeSet;

use rayon::prelude::*;

use super::compare::compare_validated;
use super::model::weight_unchecked;
use super::{
    candidate_pairs, choose_thresholds, classify, fit_em, Class, ComparisonVector, EmOptions,
    FeatureSpec, LinkageError, LinkageModel, Record, Schema, Thresholds,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub specs: Vec<FeatureSpec>,
    /// Fixed parameters; when `None` they are fitted by EM from the candidates.
    pub model: Option<LinkageModel>,
    /// Starting point for EM; defaults to [`LinkageModel::default_init`].
    pub init: Option<LinkageModel>,
    pub em: EmOptions,
    /// Tolerated false-match rate.
    pub mu: f64,
    /// Tolerated false-non-match rate.
    pub lambda: f64,
    pub block_field: Option<String>,
}

impl LinkConfig {
    pub fn new(specs: Vec<FeatureSpec>) -> Self {
        LinkConfig {
            specs,
            model: None,
            init: None,
            em: EmOptions::default(),
            mu: 1e-5,
            lambda: 0.01,
            block_field: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub id_a: String,
    pub id_b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageResult {
    pub links: Vec<ScoredPair>,
    pub possibles: Vec<ScoredPair>,
    pub nonlinks: Vec<ScoredPair>,
    pub candidate_count: usize,
    pub blocked_out_count: usize,
    pub model: LinkageModel,
    pub thresholds: Thresholds,
    /// EM iterations used, or `None` when the model was supplied.
    pub em_iterations: Option<usize>,
}

impl LinkageResult {
    /// Every compared pair with its class, in candidate order per class.
    pub fn classified(&self) -> impl Iterator<Item = (&ScoredPair, Class)> {
        self.links
            .iter()
            .map(|p| (p, Class::Link))
            .chain(self.possibles.iter().map(|p| (p, Class::Possible)))
            .chain(self.nonlinks.iter().map(|p| (p, Class::NonLink)))
    }
}

/// Precision, recall and F1 of the link set against known true pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub true_links: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// An empty link set has precision 1; an empty truth set has recall 1.
pub fn evaluate(result: &LinkageResult, truth: &BTreeSet<(String, String)>) -> Accuracy {
    let true_links = result
        .links
        .iter()
        .filter(|p| truth.contains(&(p.id_a.clone(), p.id_b.clone())))
        .count();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(true_links, result.links.len());
    let recall = ratio(true_links, truth.len());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Accuracy {
        true_links,
        precision,
        recall,
        f1,
    }
}

/// Links two files: blocks, compares, estimates (unless a model is given),
/// picks thresholds and classifies every candidate pair.
pub fn link(
    file_a: &[Record],
    file_b: &[Record],
    schema: &Schema,
    config: &LinkConfig,
) -> Result<LinkageResult, LinkageError> {
    for spec in &config.specs {
        spec.validate(schema)?;
    }
    if let Some(field) = &config.block_field {
        if !schema.has_field(field) {
            return Err(LinkageError::Schema(format!(
                "unknown blocking field `{field}`"
            )));
        }
    }
    for r in file_a.iter().chain(file_b) {
        schema.check(r)?;
    }

    let candidates = candidate_pairs(file_a, file_b, config.block_field.as_deref());
    let gammas: Vec<ComparisonVector> = candidates
        .pairs
        .par_iter()
        .map(|&(i, j)| compare_validated(&file_a[i], &file_b[j], &config.specs))
        .collect();

    let (model, em_iterations) = match &config.model {
        Some(m) => {
            m.validate(config.em.floor)?;
            if m.arities()
                != config
                    .specs
                    .iter()
                    .map(FeatureSpec::arity)
                    .collect::<Vec<_>>()
            {
                return Err(LinkageError::Model(
                    "model arities do not match the features".into(),
                ));
            }
            (m.clone(), None)
        }
        None => {
            let init = config
                .init
                .clone()
                .unwrap_or_else(|| LinkageModel::default_init(&config.specs));
            if gammas.is_empty() {
                (init, Some(0))
            } else {
                let fit = fit_em(&gammas, &init, &config.em)?;
                (fit.model, Some(fit.iterations))
            }
        }
    };
    let thresholds = choose_thresholds(&model, config.mu, config.lambda)?;

    let scores: Vec<f64> = gammas
        .par_iter()
        .map(|g| weight_unchecked(g, &model))
        .collect();
    let mut result = LinkageResult {
        links: Vec::new(),
        possibles: Vec::new(),
        nonlinks: Vec::new(),
        candidate_count: candidates.pairs.len(),
        blocked_out_count: candidates.blocked_out,
        model,
        thresholds,
        em_iterations,
    };
    for (&(i, j), score) in candidates.pairs.iter().zip(scores) {
        let pair = ScoredPair {
            id_a: file_a[i].id.clone(),
            id_b: file_b[j].id.clone(),
            score,
        };
        match classify(score, &thresholds) {
            Class::Link => result.links.push(pair),
            Class::Possible => result.possibles.push(pair),
            Class::NonLink => result.nonlinks.push(pair),
        }
    }
    Ok(result)
}
