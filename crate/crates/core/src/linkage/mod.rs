//! Fellegi–Sunter record linkage.
//!
//! A candidate pair of records is reduced to a [`ComparisonVector`] of
//! discrete agreement levels, scored by the log likelihood ratio
//! `log P(γ|M) / P(γ|U)` under a [`LinkageModel`], and classified against two
//! [`Thresholds`] into links, possible links and non-links. Parameters can be
//! estimated without labels by EM, and blocking restricts which pairs are
//! compared at all.

mod blocking;
mod compare;
mod config;
mod em;
mod engine;
mod model;
mod thresholds;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blocking::{
    candidate_pairs, make_blocks, within_block_pair_count, BlockKey, CandidatePairs,
};
pub use compare::{compare_fields, edit_similarity, ComparisonVector, FeatureKind, FeatureSpec};
pub use config::{read_link_config, write_report, LinkFileConfig};
pub use em::{fit_em, mixture_log_likelihood, EmFit, EmOptions};
pub use engine::{evaluate, link, Accuracy, LinkConfig, LinkageResult, ScoredPair};
pub use model::{
    agreement_weight, classify, feature_weight, floor_distribution, Class, LinkageModel,
    Thresholds, DEFAULT_FLOOR,
};
pub use thresholds::{choose_thresholds, choose_thresholds_with_cap, DEFAULT_ENUMERATION_CAP};

#[derive(Debug, Error, PartialEq)]
pub enum LinkageError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration space of {size} exceeds the enumeration cap {cap}; coarsen the bins")]
    Capacity { size: u128, cap: u128 },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("config error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Text,
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    pub kind: FieldKind,
}

/// Ordered field list plus the name of the unique record key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    fields: Vec<FieldDef>,
    id_field: String,
}

impl Schema {
    pub fn new(fields: Vec<FieldDef>, id_field: impl Into<String>) -> Result<Self, LinkageError> {
        let id_field = id_field.into();
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(LinkageError::Schema(format!(
                    "duplicate field `{}`",
                    f.name
                )));
            }
        }
        if !seen.contains(id_field.as_str()) {
            return Err(LinkageError::Schema(format!(
                "id field `{id_field}` is not among the fields"
            )));
        }
        Ok(Schema { fields, id_field })
    }

    pub fn fields(&self) -> &[FieldDef] {
        &self.fields
    }

    pub fn id_field(&self) -> &str {
        &self.id_field
    }

    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn has_field(&self, name: &str) -> bool {
        self.field(name).is_some()
    }

    /// Names of every field except the id, in schema order.
    pub fn value_fields(&self) -> impl Iterator<Item = &FieldDef> {
        self.fields.iter().filter(move |f| f.name != self.id_field)
    }

    pub fn check(&self, record: &Record) -> Result<(), LinkageError> {
        match record.values.keys().find(|k| !self.has_field(k)) {
            Some(k) => Err(LinkageError::Schema(format!(
                "record `{}` has field `{k}` not in the schema",
                record.id
            ))),
            None => Ok(()),
        }
    }
}

/// One row. A field that is absent from `values` or mapped to `None` is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub values: BTreeMap<String, Option<String>>,
}

impl Record {
    pub fn new(id: impl Into<String>) -> Self {
        Record {
            id: id.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, field: impl Into<String>, value: impl Into<String>) -> Self {
        self.values.insert(field.into(), Some(value.into()));
        self
    }

    pub fn with_missing(mut self, field: impl Into<String>) -> Self {
        self.values.insert(field.into(), None);
        self
    }

    pub fn get(&self, field: &str) -> Option<&str> {
        self.values.get(field).and_then(|v| v.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn def(name: &str, kind: FieldKind) -> FieldDef {
        FieldDef {
            name: name.into(),
            kind,
        }
    }

    #[test]
    fn schema_rejects_duplicates_and_missing_id() {
        let dup = Schema::new(
            vec![def("id", FieldKind::Text), def("id", FieldKind::Text)],
            "id",
        );
        assert!(matches!(dup, Err(LinkageError::Schema(_))));
        let no_id = Schema::new(vec![def("name", FieldKind::Text)], "id");
        assert!(matches!(no_id, Err(LinkageError::Schema(_))));
    }

    #[test]
    fn record_fields_must_be_in_schema() {
        let s = Schema::new(
            vec![def("id", FieldKind::Text), def("name", FieldKind::Text)],
            "id",
        )
        .unwrap();
        assert!(s.check(&Record::new("1").with("name", "x")).is_ok());
        assert!(s.check(&Record::new("1").with("zip", "x")).is_err());
    }
}
