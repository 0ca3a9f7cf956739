use serde::{Deserialize, Serialize};

use super::{LinkageError, Record, Schema};

/// How a feature turns two field values into a discrete level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureKind {
    BooleanEquality,
    PrefixAgreement { n_chars: usize },
    EditDistanceSimilarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub source_field: String,
    pub kind: FeatureKind,
    /// Cut-points for continuous kinds; empty for the binary kinds.
    pub bins: Vec<f64>,
}

impl FeatureSpec {
    pub fn equality(name: impl Into<String>, field: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            source_field: field.into(),
            kind: FeatureKind::BooleanEquality,
            bins: Vec::new(),
        }
    }

    pub fn prefix(name: impl Into<String>, field: impl Into<String>, n_chars: usize) -> Self {
        FeatureSpec {
            name: name.into(),
            source_field: field.into(),
            kind: FeatureKind::PrefixAgreement { n_chars },
            bins: Vec::new(),
        }
    }

    pub fn edit_distance(
        name: impl Into<String>,
        field: impl Into<String>,
        bins: Vec<f64>,
    ) -> Self {
        FeatureSpec {
            name: name.into(),
            source_field: field.into(),
            kind: FeatureKind::EditDistanceSimilarity,
            bins,
        }
    }

    /// Number of distinct levels this feature can produce.
    pub fn arity(&self) -> usize {
        match self.kind {
            FeatureKind::EditDistanceSimilarity => self.bins.len() + 1,
            _ => 2,
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), LinkageError> {
        if !schema.has_field(&self.source_field) {
            return Err(LinkageError::Schema(format!(
                "feature `{}` reads unknown field `{}`",
                self.name, self.source_field
            )));
        }
        match self.kind {
            FeatureKind::PrefixAgreement { n_chars: 0 } => {
                return Err(LinkageError::Argument(format!(
                    "feature `{}`: prefix length must be positive",
                    self.name
                )))
            }
            FeatureKind::EditDistanceSimilarity => {
                let in_range = self.bins.iter().all(|&b| b > 0.0 && b < 1.0);
                let increasing = self.bins.windows(2).all(|w| w[0] < w[1]);
                if !in_range || !increasing {
                    return Err(LinkageError::Argument(format!(
                        "feature `{}`: bins must be strictly increasing inside (0, 1)",
                        self.name
                    )));
                }
            }
            _ if !self.bins.is_empty() => {
                return Err(LinkageError::Argument(format!(
                    "feature `{}`: bins only apply to edit-distance features",
                    self.name
                )))
            }
            _ => {}
        }
        Ok(())
    }

    fn level(&self, a: &str, b: &str) -> usize {
        match self.kind {
            FeatureKind::BooleanEquality => usize::from(a == b),
            FeatureKind::PrefixAgreement { n_chars } => {
                usize::from(a.chars().take(n_chars).eq(b.chars().take(n_chars)))
            }
            FeatureKind::EditDistanceSimilarity => {
                let s = edit_similarity(a, b);
                self.bins.iter().take_while(|&&cut| cut <= s).count()
            }
        }
    }
}

/// `1 - levenshtein(a, b) / max(len(a), len(b))`, over Unicode scalar values.
/// Two empty strings are fully similar.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Agreement pattern γ for one record pair. Level 0 is the weakest agreement
/// and `arity - 1` the strongest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComparisonVector {
    pub levels: Vec<usize>,
    pub missing: Vec<bool>,
}

impl ComparisonVector {
    pub fn complete(levels: Vec<usize>) -> Self {
        let missing = vec![false; levels.len()];
        ComparisonVector { levels, missing }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Present features as `(feature index, level)`.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.levels
            .iter()
            .zip(&self.missing)
            .enumerate()
            .filter(|(_, (_, &m))| !m)
            .map(|(f, (&l, _))| (f, l))
    }
}

pub fn compare_fields(
    a: &Record,
    b: &Record,
    specs: &[FeatureSpec],
    schema: &Schema,
) -> Result<ComparisonVector, LinkageError> {
    let mut levels = Vec::with_capacity(specs.len());
    let mut missing = Vec::with_capacity(specs.len());
    for spec in specs {
        if !schema.has_field(&spec.source_field) {
            return Err(LinkageError::Schema(format!(
                "feature `{}` reads unknown field `{}`",
                spec.name, spec.source_field
            )));
        }
        match (a.get(&spec.source_field), b.get(&spec.source_field)) {
            (Some(x), Some(y)) => {
                levels.push(spec.level(x, y));
                missing.push(false);
            }
            _ => {
                levels.push(0);
                missing.push(true);
            }
        }
    }
    Ok(ComparisonVector { levels, missing })
}

/// Hot-loop variant for specs already checked with [`FeatureSpec::validate`].
pub(crate) fn compare_validated(a: &Record, b: &Record, specs: &[FeatureSpec]) -> ComparisonVector {
    let mut levels = Vec::with_capacity(specs.len());
    let mut missing = Vec::with_capacity(specs.len());
    for spec in specs {
        match (a.get(&spec.source_field), b.get(&spec.source_field)) {
            (Some(x), Some(y)) => {
                levels.push(spec.level(x, y));
                missing.push(false);
            }
            _ => {
                levels.push(0);
                missing.push(true);
            }
        }
    }
    ComparisonVector { levels, missing }
}
