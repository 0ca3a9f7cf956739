use serde::{Deserialize, Serialize};

use super::{ComparisonVector, FeatureSpec, LinkageError};

/// Default lower bound on every m- and u-probability.
pub const DEFAULT_FLOOR: f64 = 1e-4;

const SUM_TOLERANCE: f64 = 1e-9;

/// Conditional level probabilities under match (`m`) and non-match (`u`) plus
/// the match prior `p`. Features are assumed conditionally independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageModel {
    pub m: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub p: f64,
}

impl LinkageModel {
    /// The customary starting point: the top level gets 0.9 under M and 0.1
    /// under U, the rest of the mass is spread evenly over the lower levels.
    pub fn default_init(specs: &[FeatureSpec]) -> Self {
        Self::symmetric_init(specs.iter().map(FeatureSpec::arity), 0.9, 0.1, 0.05)
    }

    pub fn symmetric_init(
        arities: impl IntoIterator<Item = usize>,
        m_agree: f64,
        u_agree: f64,
        p: f64,
    ) -> Self {
        let spread = |top: f64, arity: usize| -> Vec<f64> {
            let rest = (1.0 - top) / (arity - 1) as f64;
            let mut v = vec![rest; arity];
            v[arity - 1] = top;
            v
        };
        let arities: Vec<usize> = arities.into_iter().collect();
        LinkageModel {
            m: arities.iter().map(|&a| spread(m_agree, a)).collect(),
            u: arities.iter().map(|&a| spread(u_agree, a)).collect(),
            p,
        }
    }

    pub fn arities(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }

    pub fn validate(&self, floor: f64) -> Result<(), LinkageError> {
        if self.m.len() != self.u.len() {
            return Err(LinkageError::Model(
                "m and u have different feature counts".into(),
            ));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(LinkageError::Model(format!(
                "prior {} is outside (0, 1)",
                self.p
            )));
        }
        for (f, (m, u)) in self.m.iter().zip(&self.u).enumerate() {
            if m.len() != u.len() || m.len() < 2 {
                return Err(LinkageError::Model(format!("feature {f}: bad arity")));
            }
            for (name, dist) in [("m", m), ("u", u)] {
                let sum: f64 = dist.iter().sum();
                if (sum - 1.0).abs() > SUM_TOLERANCE {
                    return Err(LinkageError::Model(format!(
                        "feature {f}: {name} sums to {sum}"
                    )));
                }
                let lo = floor * (1.0 - SUM_TOLERANCE);
                let hi = 1.0 - floor * (1.0 - SUM_TOLERANCE);
                if dist.iter().any(|&x| !(lo..=hi).contains(&x)) {
                    return Err(LinkageError::Model(format!(
                        "feature {f}: {name} has an entry outside [{floor}, {}]",
                        1.0 - floor
                    )));
                }
            }
        }
        Ok(())
    }

    /// Projects every distribution onto the floored simplex and clamps `p`.
    pub fn apply_floor(&mut self, floor: f64) {
        for dist in self.m.iter_mut().chain(self.u.iter_mut()) {
            floor_distribution(dist, floor);
        }
        self.p = self.p.clamp(floor, 1.0 - floor);
    }

    fn check_arity(&self, gamma: &ComparisonVector) -> Result<(), LinkageError> {
        if gamma.len() != self.m.len() {
            return Err(LinkageError::Argument(format!(
                "comparison vector has {} features, model has {}",
                gamma.len(),
                self.m.len()
            )));
        }
        if let Some((f, l)) = gamma.observed().find(|&(f, l)| l >= self.m[f].len()) {
            return Err(LinkageError::Argument(format!(
                "feature {f}: level {l} outside arity {}",
                self.m[f].len()
            )));
        }
        Ok(())
    }
}

/// Raises entries below `floor` to `floor` and rescales the rest so the total
/// stays 1. Repeats until no entry is below the floor, which yields the
/// maximizer of `sum c_l log x_l` over the floored simplex when the input is
/// the unconstrained maximizer `c / sum(c)`.
pub fn floor_distribution(dist: &mut [f64], floor: f64) {
    let k = dist.len();
    if k == 0 {
        return;
    }
    let mut pinned = vec![false; k];
    loop {
        let pinned_mass = floor * pinned.iter().filter(|&&p| p).count() as f64;
        let free_sum: f64 = dist
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(x, _)| *x)
            .sum();
        let free_target = 1.0 - pinned_mass;
        let free_count = pinned.iter().filter(|&&p| !p).count();
        for (x, &p) in dist.iter_mut().zip(&pinned) {
            if p {
                *x = floor;
            } else if free_sum > 0.0 {
                *x *= free_target / free_sum;
            } else {
                *x = free_target / free_count as f64;
            }
        }
        let mut changed = false;
        for (x, p) in dist.iter().zip(pinned.iter_mut()) {
            if !*p && *x < floor {
                *p = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Weight of a single observed level, `ln(m / u)`.
pub fn feature_weight(model: &LinkageModel, feature: usize, level: usize) -> f64 {
    (model.m[feature][level] / model.u[feature][level]).ln()
}

/// Natural-log likelihood ratio of γ. Missing features contribute 0.
pub fn agreement_weight(
    gamma: &ComparisonVector,
    model: &LinkageModel,
) -> Result<f64, LinkageError> {
    model.check_arity(gamma)?;
    Ok(weight_unchecked(gamma, model))
}

pub(crate) fn weight_unchecked(gamma: &ComparisonVector, model: &LinkageModel) -> f64 {
    gamma
        .observed()
        .map(|(f, l)| feature_weight(model, f, l))
        .sum()
}

/// Upper (`t_mu`) and lower (`t_lambda`) cutoffs on the weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t_mu: f64,
    pub t_lambda: f64,
}

impl Thresholds {
    pub fn new(t_mu: f64, t_lambda: f64) -> Result<Self, LinkageError> {
        if t_mu.is_nan() || t_lambda.is_nan() || t_lambda > t_mu {
            return Err(LinkageError::Argument(format!(
                "thresholds need t_lambda <= t_mu, got {t_lambda} > {t_mu}"
            )));
        }
        Ok(Thresholds { t_mu, t_lambda })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Link,
    Possible,
    NonLink,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Link => "link",
            Class::Possible => "possible",
            Class::NonLink => "nonlink",
        }
    }
}

/// Scores exactly on a threshold are routed to review.
pub fn classify(score: f64, th: &Thresholds) -> Class {
    if score > th.t_mu {
        Class::Link
    } else if score < th.t_lambda {
        Class::NonLink
    } else {
        Class::Possible
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(n: usize) -> LinkageModel {
        LinkageModel::symmetric_init(std::iter::repeat_n(2, n), 0.9, 0.1, 0.05)
    }

    #[test]
    fn all_agree_and_all_disagree() {
        let model = binary(3);
        let agree = ComparisonVector::complete(vec![1, 1, 1]);
        let disagree = ComparisonVector::complete(vec![0, 0, 0]);
        let w = agreement_weight(&agree, &model).unwrap();
        assert!((w - 3.0 * 9f64.ln()).abs() < 1e-12);
        assert!((w - 6.5917).abs() < 1e-4);
        let w = agreement_weight(&disagree, &model).unwrap();
        assert!((w + 3.0 * 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn masked_features_are_neutral() {
        let model = binary(3);
        let g = ComparisonVector {
            levels: vec![1, 0, 1],
            missing: vec![true, true, true],
        };
        assert_eq!(agreement_weight(&g, &model).unwrap(), 0.0);
    }

    #[test]
    fn weight_is_sum_of_feature_weights() {
        let model = LinkageModel {
            m: vec![vec![0.2, 0.8], vec![0.1, 0.3, 0.6]],
            u: vec![vec![0.7, 0.3], vec![0.5, 0.4, 0.1]],
            p: 0.1,
        };
        let g = ComparisonVector::complete(vec![1, 2]);
        let expected = feature_weight(&model, 0, 1) + feature_weight(&model, 1, 2);
        assert_eq!(agreement_weight(&g, &model).unwrap(), expected);
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let model = binary(2);
        assert!(agreement_weight(&ComparisonVector::complete(vec![1]), &model).is_err());
        assert!(agreement_weight(&ComparisonVector::complete(vec![1, 2]), &model).is_err());
    }

    #[test]
    fn classify_boundaries() {
        let th = Thresholds::new(5.0, -5.0).unwrap();
        assert_eq!(classify(7.0, &th), Class::Link);
        assert_eq!(classify(0.0, &th), Class::Possible);
        assert_eq!(classify(5.0, &th), Class::Possible);
        assert_eq!(classify(-5.0, &th), Class::Possible);
        assert_eq!(classify(-5.1, &th), Class::NonLink);
        assert!(Thresholds::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn floor_projection_keeps_simplex() {
        let mut d = vec![0.0, 0.0, 1.0];
        floor_distribution(&mut d, 1e-4);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d[0], 1e-4);
        assert!((d[2] - (1.0 - 2e-4)).abs() < 1e-15);

        let mut d = vec![0.5, 0.5];
        floor_distribution(&mut d, 1e-4);
        assert_eq!(d, vec![0.5, 0.5]);
    }

    #[test]
    fn validate_catches_bad_models() {
        let mut model = binary(2);
        assert!(model.validate(DEFAULT_FLOOR).is_ok());
        model.m[0] = vec![0.5, 0.6];
        assert!(model.validate(DEFAULT_FLOOR).is_err());
        let mut model = binary(2);
        model.u[1] = vec![0.0, 1.0];
        assert!(model.validate(DEFAULT_FLOOR).is_err());
        model.apply_floor(DEFAULT_FLOOR);
        assert!(model.validate(DEFAULT_FLOOR).is_ok());
    }
}
