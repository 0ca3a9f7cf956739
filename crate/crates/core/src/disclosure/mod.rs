//! Statistical disclosure limitation for numeric microdata.
//!
//! A [`Microtable`] is released through a [`ReleasePlan`]: MDAV-style
//! [`microaggregate`]ion or Gaussian [`perturb`]ation. The release is scored
//! by [`reident_risk`], the success rate of a nearest-neighbour linkage attack
//! back to the original rows, and by [`utility_loss_complement`], a moment
//! preservation score. [`ru_sweep`] traces both along a parameter grid.
//!
//! The [`Gate`] answers analyst queries under a leveled [`Policy`] and writes
//! every decision to a hash-chained [`AuditLog`].

mod audit;
mod gate;
mod methods;
mod metrics;

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use thiserror::Error;

pub use audit::{
    audit_append, audit_verify, audit_verify_anchored, audit_verify_detailed, canonical_encoding,
    AuditEntry, AuditLog, ChainVerifier, Digest32, GENESIS_DIGEST,
};
pub use gate::{
    Aggregate, AggregateKind, CmpOp, Gate, GateOutcome, Policy, PolicyLevel, Predicate, Query,
    Refusal, RefusalReason, Response,
};
pub use methods::{microaggregate, perturb, Microaggregation, ReleasePlan, Stat};
pub use metrics::{
    column_stats, reident_risk, ru_sweep, utility_loss_complement, write_ru, ColumnStats, RUPoint,
    SweepGrid,
};

#[derive(Debug, Error)]
pub enum DisclosureError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("policy error: {0}")]
    Policy(String),
    #[error("audit error: {0}")]
    Audit(String),
}

/// Rectangular numeric table with a unique id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Microtable {
    columns: Vec<String>,
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Microtable {
    pub fn new(
        columns: Vec<String>,
        rows: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, DisclosureError> {
        if columns.is_empty() {
            return Err(DisclosureError::Shape(
                "a table needs at least one column".into(),
            ));
        }
        let mut seen = HashSet::new();
        if let Some(c) = columns.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(DisclosureError::Shape(format!("duplicate column `{c}`")));
        }
        let mut seen = HashSet::new();
        let mut ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        for (id, row) in rows {
            if row.len() != columns.len() {
                return Err(DisclosureError::Shape(format!(
                    "row `{id}` has {} values for {} columns",
                    row.len(),
                    columns.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DisclosureError::Shape(format!(
                    "row `{id}` has a non-finite value"
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(DisclosureError::Shape(format!("duplicate id `{id}`")));
            }
            ids.push(id);
            values.push(row);
        }
        Ok(Microtable {
            columns,
            ids,
            rows: values,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Microtable {
        Microtable {
            columns: self.columns.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Same ids and columns, new values.
    pub(crate) fn with_rows(&self, rows: Vec<Vec<f64>>) -> Microtable {
        debug_assert_eq!(rows.len(), self.rows.len());
        Microtable {
            columns: self.columns.clone(),
            ids: self.ids.clone(),
            rows,
        }
    }

    /// Header `id,<columns...>`, one row per line. Values use the shortest
    /// representation that reads back to the same `f64`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DisclosureError> {
        let io = |e: csv::Error| DisclosureError::Io {
            path: "<output>".into(),
            source: e.into(),
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (id, row) in self.ids.iter().zip(&self.rows) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| DisclosureError::Io {
            path: "<output>".into(),
            source: e,
        })
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Microtable, DisclosureError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(input);
        let header = r
            .headers()
            .map_err(|e| DisclosureError::Parse {
                line: 1,
                reason: e.to_string(),
            })?
            .clone();
        if header.get(0) != Some("id") {
            return Err(DisclosureError::Parse {
                line: 1,
                reason: "first column must be `id`".into(),
            });
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| DisclosureError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let id = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| DisclosureError::Parse {
                        line,
                        reason: format!("`{v}` is not a number"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((id, values));
        }
        Microtable::new(columns, rows)
    }

    pub fn load(path: &Path) -> Result<Microtable, DisclosureError> {
        let file = std::fs::File::open(path).map_err(|e| DisclosureError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Microtable::read_csv(std::io::BufReader::new(file))
    }
}

/// Seeded numeric microdata: `age`, `income`, `hours`, `tenure`, loosely
/// correlated and with distinct rows.
pub fn synthetic_microtable(n: usize, seed: u64) -> Microtable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let age = Normal::new(45.0, 14.0).expect("valid");
    let income = LogNormal::new(10.5, 0.6).expect("valid");
    let hours = Normal::new(38.0, 9.0).expect("valid");
    let noise = Normal::new(0.0, 1.0).expect("valid");
    let rows = (0..n)
        .map(|i| {
            let a = f64::clamp(age.sample(&mut rng), 18.0, 95.0);
            let inc = income.sample(&mut rng) * (0.6 + a / 100.0);
            let h = f64::clamp(hours.sample(&mut rng), 0.0, 80.0);
            let tenure = ((a - 18.0) * 0.3 + 3.0 * noise.sample(&mut rng)).max(0.0);
            let round = |x: f64, d: f64| (x * d).round() / d;
            (
                format!("r{i:06}"),
                vec![
                    round(a, 10.0),
                    round(inc, 1.0),
                    round(h, 10.0),
                    round(tenure, 100.0),
                ],
            )
        })
        .collect();
    Microtable::new(
        ["age", "income", "hours", "tenure"]
            .map(String::from)
            .to_vec(),
        rows,
    )
    .expect("generated rows are well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        let c = vec!["x".to_string()];
        assert!(Microtable::new(c.clone(), vec![("a".into(), vec![1.0, 2.0])]).is_err());
        assert!(Microtable::new(
            c.clone(),
            vec![("a".into(), vec![1.0]), ("a".into(), vec![2.0])]
        )
        .is_err());
        assert!(Microtable::new(c.clone(), vec![("a".into(), vec![f64::NAN])]).is_err());
        assert!(Microtable::new(vec![], vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = synthetic_microtable(50, 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"id,age,income,hours,tenure\n"));
        assert_eq!(Microtable::read_csv(&buf[..]).unwrap(), t);
        let bad = b"id,x\na,1\nb,zz\n";
        assert!(matches!(
            Microtable::read_csv(&bad[..]),
            Err(DisclosureError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn synthetic_rows_are_distinct_and_seeded() {
        let t = synthetic_microtable(1000, 9);
        assert_eq!(t, synthetic_microtable(1000, 9));
        let mut rows: Vec<String> = t.rows().iter().map(|r| format!("{r:?}")).collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 1000);
    }
}
