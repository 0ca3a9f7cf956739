//! Key-value (TOML) linkage configuration and the delimited linkage report.
//!
//! ```toml
//! mu = 1e-5              # tolerated false-match rate
//! lambda = 0.01          # tolerated false-non-match rate
//! block_field = "postcode"
//! id_field = "id"
//!
//! [em]
//! max_iter = 1000
//! tol = 1e-8
//! floor = 1e-4
//!
//! [[feature]]
//! name = "surname"
//! field = "surname"
//! kind = "edit-distance"  # or "equality", "prefix"
//! bins = [0.7, 0.9]
//!
//! [[feature]]
//! name = "given3"
//! field = "given_name"
//! kind = "prefix"
//! n_chars = 3
//! ```

use std::io::Write;

use serde::Deserialize;

use super::{EmOptions, FeatureKind, FeatureSpec, LinkConfig, LinkageError, LinkageResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFileConfig {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub block_field: Option<String>,
    #[serde(default = "default_id")]
    pub id_field: String,
    #[serde(default)]
    pub em: EmSection,
    #[serde(rename = "feature")]
    pub features: Vec<FeatureEntry>,
}

fn default_mu() -> f64 {
    1e-5
}

fn default_lambda() -> f64 {
    0.01
}

fn default_id() -> String {
    "id".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSection {
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureEntry {
    pub name: String,
    pub field: String,
    pub kind: String,
    #[serde(default)]
    pub bins: Vec<f64>,
    pub n_chars: Option<usize>,
}

impl FeatureEntry {
    fn to_spec(&self) -> Result<FeatureSpec, LinkageError> {
        let kind = match self.kind.as_str() {
            "equality" => FeatureKind::BooleanEquality,
            "prefix" => FeatureKind::PrefixAgreement {
                n_chars: self.n_chars.ok_or_else(|| {
                    LinkageError::Config(format!("feature `{}`: prefix needs n_chars", self.name))
                })?,
            },
            "edit-distance" => FeatureKind::EditDistanceSimilarity,
            other => {
                return Err(LinkageError::Config(format!(
                    "feature `{}`: unknown kind `{other}`",
                    self.name
                )))
            }
        };
        Ok(FeatureSpec {
            name: self.name.clone(),
            source_field: self.field.clone(),
            kind,
            bins: self.bins.clone(),
        })
    }
}

impl LinkFileConfig {
    pub fn parse(text: &str) -> Result<Self, LinkageError> {
        toml::from_str(text).map_err(|e| LinkageError::Config(e.to_string()))
    }

    pub fn to_link_config(&self) -> Result<LinkConfig, LinkageError> {
        let specs = self
            .features
            .iter()
            .map(FeatureEntry::to_spec)
            .collect::<Result<Vec<_>, _>>()?;
        let defaults = EmOptions::default();
        let mut config = LinkConfig::new(specs);
        config.mu = self.mu;
        config.lambda = self.lambda;
        config.block_field = self.block_field.clone();
        config.em = EmOptions {
            max_iter: self.em.max_iter.unwrap_or(defaults.max_iter),
            tol: self.em.tol.unwrap_or(defaults.tol),
            floor: self.em.floor.unwrap_or(defaults.floor),
        };
        Ok(config)
    }
}

pub fn read_link_config(path: &std::path::Path) -> Result<LinkFileConfig, LinkageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LinkageError::Config(format!("{}: {e}", path.display())))?;
    LinkFileConfig::parse(&text)
}

fn fmt_threshold(t: f64) -> String {
    if t.is_infinite() {
        if t > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{t:.6}")
    }
}

fn fmt_dist(d: &[f64]) -> String {
    d.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes `id_a,id_b,score,class` rows followed by a `#` summary block.
pub fn write_report<W: Write>(
    mut out: W,
    result: &LinkageResult,
    feature_names: &[String],
) -> std::io::Result<()> {
    writeln!(out, "id_a,id_b,score,class")?;
    for (pair, class) in result.classified() {
        writeln!(
            out,
            "{},{},{:.6},{}",
            pair.id_a,
            pair.id_b,
            pair.score,
            class.as_str()
        )?;
    }
    writeln!(out, "# summary")?;
    writeln!(out, "# candidates={}", result.candidate_count)?;
    writeln!(out, "# blocked_out={}", result.blocked_out_count)?;
    writeln!(out, "# links={}", result.links.len())?;
    writeln!(out, "# possibles={}", result.possibles.len())?;
    writeln!(out, "# nonlinks={}", result.nonlinks.len())?;
    writeln!(out, "# t_mu={}", fmt_threshold(result.thresholds.t_mu))?;
    writeln!(
        out,
        "# t_lambda={}",
        fmt_threshold(result.thresholds.t_lambda)
    )?;
    match result.em_iterations {
        Some(i) => writeln!(out, "# em_iterations={i}")?,
        None => writeln!(out, "# em_iterations=supplied")?,
    }
    writeln!(out, "# p={:.6}", result.model.p)?;
    for (f, name) in feature_names.iter().enumerate() {
        writeln!(out, "# m.{name}={}", fmt_dist(&result.model.m[f]))?;
        writeln!(out, "# u.{name}={}", fmt_dist(&result.model.u[f]))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            mu = 0.02
            block_field = "postcode"
            [em]
            floor = 1e-3
            [[feature]]
            name = "surname"
            field = "surname"
            kind = "edit-distance"
            bins = [0.7, 0.9]
            [[feature]]
            name = "given3"
            field = "given_name"
            kind = "prefix"
            n_chars = 3
        "#;
        let cfg = LinkFileConfig::parse(text)
            .unwrap()
            .to_link_config()
            .unwrap();
        assert_eq!(cfg.mu, 0.02);
        assert_eq!(cfg.lambda, 0.01);
        assert_eq!(cfg.em.floor, 1e-3);
        assert_eq!(cfg.block_field.as_deref(), Some("postcode"));
        assert_eq!(cfg.specs[0].arity(), 3);
        assert_eq!(
            cfg.specs[1].kind,
            FeatureKind::PrefixAgreement { n_chars: 3 }
        );
    }

    #[test]
    fn unknown_kind_is_config_error() {
        let text = "[[feature]]\nname='x'\nfield='x'\nkind='soundex'\n";
        let err = LinkFileConfig::parse(text)
            .unwrap()
            .to_link_config()
            .unwrap_err();
        assert!(matches!(err, LinkageError::Config(_)));
        assert!(LinkFileConfig::parse(
            "bogus = 1\n[[feature]]\nname='x'\nfield='x'\nkind='equality'"
        )
        .is_err());
    }
}
