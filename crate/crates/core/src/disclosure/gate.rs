//! Selective revelation: leveled release plans behind a risk check.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::audit::{AuditLog, Digest32};
use super::methods::{ReleasePlan, Stat};
use super::metrics::reident_risk;
use super::{DisclosureError, Microtable};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyLevel {
    pub level: u32,
    /// Largest measured re-identification risk this level may release.
    pub max_risk: f64,
    pub plan: ReleasePlan,
}

/// Levels in increasing order with a non-decreasing risk ceiling.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    levels: Vec<PolicyLevel>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    level: Vec<LevelFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelFile {
    level: u32,
    max_risk: f64,
    method: String,
    k: Option<usize>,
    stat: Option<String>,
    lambda: Option<f64>,
    seed: Option<u64>,
}

impl Policy {
    pub fn new(levels: Vec<PolicyLevel>) -> Result<Self, DisclosureError> {
        if levels.is_empty() {
            return Err(DisclosureError::Policy(
                "a policy needs at least one level".into(),
            ));
        }
        for l in &levels {
            if !(0.0..=1.0).contains(&l.max_risk) {
                return Err(DisclosureError::Policy(format!(
                    "level {}: max_risk {} is outside [0, 1]",
                    l.level, l.max_risk
                )));
            }
            l.plan
                .validate()
                .map_err(|e| DisclosureError::Policy(format!("level {}: {e}", l.level)))?;
        }
        for w in levels.windows(2) {
            if w[1].level <= w[0].level {
                return Err(DisclosureError::Policy(
                    "levels must be strictly increasing".into(),
                ));
            }
            if w[1].max_risk < w[0].max_risk {
                return Err(DisclosureError::Policy(format!(
                    "max_risk decreases from level {} to level {}",
                    w[0].level, w[1].level
                )));
            }
        }
        Ok(Policy { levels })
    }

    /// ```toml
    /// [[level]]
    /// level = 0
    /// max_risk = 0.0
    /// method = "microaggregate"   # or "noise" (lambda, seed) or "identity"
    /// k = 5
    /// stat = "mean"
    /// ```
    pub fn from_toml(text: &str) -> Result<Self, DisclosureError> {
        let file: PolicyFile =
            toml::from_str(text).map_err(|e| DisclosureError::Policy(e.to_string()))?;
        let levels = file
            .level
            .into_iter()
            .map(|l| {
                let missing = |what: &str| {
                    DisclosureError::Policy(format!("level {}: `{what}` is required", l.level))
                };
                let plan = match l.method.as_str() {
                    "identity" => ReleasePlan::Identity,
                    "microaggregate" => ReleasePlan::Microaggregate {
                        k: l.k.ok_or_else(|| missing("k"))?,
                        stat: l.stat.as_deref().unwrap_or("mean").parse::<Stat>()?,
                    },
                    "noise" => ReleasePlan::Noise {
                        lambda: l.lambda.ok_or_else(|| missing("lambda"))?,
                        seed: l.seed.ok_or_else(|| missing("seed"))?,
                    },
                    other => {
                        return Err(DisclosureError::Policy(format!(
                            "level {}: unknown method `{other}`",
                            l.level
                        )))
                    }
                };
                Ok(PolicyLevel {
                    level: l.level,
                    max_risk: l.max_risk,
                    plan,
                })
            })
            .collect::<Result<Vec<_>, DisclosureError>>()?;
        Policy::new(levels)
    }

    pub fn load(path: &Path) -> Result<Self, DisclosureError> {
        let text = std::fs::read_to_string(path).map_err(|e| DisclosureError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Policy::from_toml(&text)
    }

    pub fn levels(&self) -> &[PolicyLevel] {
        &self.levels
    }

    pub fn get(&self, level: u32) -> Option<&PolicyLevel> {
        self.levels.iter().find(|l| l.level == level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    fn holds(self, x: f64, v: f64) -> bool {
        match self {
            CmpOp::Eq => x == v,
            CmpOp::Ne => x != v,
            CmpOp::Lt => x < v,
            CmpOp::Le => x <= v,
            CmpOp::Gt => x > v,
            CmpOp::Ge => x >= v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub column: String,
    pub op: CmpOp,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateKind {
    Rows,
    Count,
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregate {
    pub kind: AggregateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

/// A selection (conjunction of predicates) plus what to return about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub id: String,
    pub actor: String,
    pub level: u32,
    pub timestamp: String,
    #[serde(default)]
    pub select: Vec<Predicate>,
    pub aggregate: Aggregate,
}

impl Query {
    pub fn digest(&self) -> Digest32 {
        Sha256::digest(serde_json::to_vec(self).expect("query serializes")).into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Response {
    pub query_id: String,
    pub level: u32,
    /// Level whose plan produced the release.
    pub plan_level: u32,
    pub plan: String,
    pub rows_selected: usize,
    pub measured_risk: f64,
    pub kind: AggregateKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Released values without ids, for `rows` queries only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefusalReason {
    Malformed,
    UnknownLevel,
    EmptySelection,
    SelectionTooSmall,
    RiskExceeded,
}

impl RefusalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RefusalReason::Malformed => "malformed",
            RefusalReason::UnknownLevel => "unknown-level",
            RefusalReason::EmptySelection => "empty-selection",
            RefusalReason::SelectionTooSmall => "selection-too-small",
            RefusalReason::RiskExceeded => "risk-exceeded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refusal {
    pub query_id: String,
    pub level: u32,
    pub reason: RefusalReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "decision", rename_all = "lowercase")]
pub enum GateOutcome {
    Released(Response),
    Refused(Refusal),
}

impl GateOutcome {
    pub fn is_released(&self) -> bool {
        matches!(self, GateOutcome::Released(_))
    }

    pub fn digest(&self) -> Digest32 {
        Sha256::digest(serde_json::to_vec(self).expect("outcome serializes")).into()
    }
}

/// Answers queries against one table under one policy, auditing every call.
#[derive(Debug)]
pub struct Gate {
    policy: Policy,
    table: Microtable,
    log: Mutex<AuditLog>,
}

impl Gate {
    pub fn new(policy: Policy, table: Microtable) -> Self {
        Gate::with_log(policy, table, AuditLog::new())
    }

    pub fn with_log(policy: Policy, table: Microtable, log: AuditLog) -> Self {
        Gate {
            policy,
            table,
            log: Mutex::new(log),
        }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn log(&self) -> AuditLog {
        self.log.lock().expect("audit lock").clone()
    }

    pub fn into_log(self) -> AuditLog {
        self.log.into_inner().expect("audit lock")
    }

    fn audit(&self, timestamp: &str, actor: &str, query_digest: Digest32, outcome: &GateOutcome) {
        self.log
            .lock()
            .expect("audit lock")
            .append(timestamp, actor, query_digest, outcome.digest())
            .expect("the gate only appends to logs it built");
    }

    /// Evaluates `query` with the authorization of `level`.
    ///
    /// The plans of `level` and of every lower level are tried in turn,
    /// starting at `level`; the first whose measured risk on the selection is
    /// within `level`'s ceiling is released. A lower level's release thus
    /// always remains available higher up, so decisions are monotone in level.
    pub fn evaluate(&self, query: &Query, level: u32) -> GateOutcome {
        let outcome = self.decide(query, level);
        self.audit(&query.timestamp, &query.actor, query.digest(), &outcome);
        outcome
    }

    /// Evaluates a query at the level it declares.
    pub fn evaluate_query(&self, query: &Query) -> GateOutcome {
        self.evaluate(query, query.level)
    }

    /// Parses one JSON query line and evaluates it. Unparseable input is
    /// refused as malformed and still audited.
    pub fn evaluate_line(&self, line: &str) -> GateOutcome {
        match serde_json::from_str::<Query>(line) {
            Ok(q) => self.evaluate_query(&q),
            Err(e) => {
                let outcome = GateOutcome::Refused(Refusal {
                    query_id: String::new(),
                    level: 0,
                    reason: RefusalReason::Malformed,
                    detail: e.to_string(),
                });
                self.audit(
                    "unknown",
                    "unknown",
                    Sha256::digest(line.as_bytes()).into(),
                    &outcome,
                );
                outcome
            }
        }
    }

    fn refuse(query: &Query, level: u32, reason: RefusalReason, detail: String) -> GateOutcome {
        GateOutcome::Refused(Refusal {
            query_id: query.id.clone(),
            level,
            reason,
            detail,
        })
    }

    fn decide(&self, query: &Query, level: u32) -> GateOutcome {
        let t = &self.table;
        let mut preds = Vec::with_capacity(query.select.len());
        for p in &query.select {
            match t.column_index(&p.column) {
                Some(j) if p.value.is_finite() => preds.push((j, p.op, p.value)),
                Some(_) => {
                    return Gate::refuse(
                        query,
                        level,
                        RefusalReason::Malformed,
                        "non-finite value".into(),
                    )
                }
                None => {
                    return Gate::refuse(
                        query,
                        level,
                        RefusalReason::Malformed,
                        format!("unknown column `{}`", p.column),
                    )
                }
            }
        }
        let agg_col = match (query.aggregate.kind, &query.aggregate.column) {
            (AggregateKind::Mean | AggregateKind::Sum, None) => {
                return Gate::refuse(
                    query,
                    level,
                    RefusalReason::Malformed,
                    "aggregate needs a column".into(),
                )
            }
            (_, Some(c)) => match t.column_index(c) {
                Some(j) => Some(j),
                None => {
                    return Gate::refuse(
                        query,
                        level,
                        RefusalReason::Malformed,
                        format!("unknown column `{c}`"),
                    )
                }
            },
            (_, None) => None,
        };
        if self.policy.get(level).is_none() {
            return Gate::refuse(
                query,
                level,
                RefusalReason::UnknownLevel,
                format!("level {level}"),
            );
        }
        let ceiling = self.policy.get(level).expect("checked").max_risk;

        let indices: Vec<usize> = t
            .rows()
            .iter()
            .enumerate()
            .filter(|(_, row)| preds.iter().all(|&(j, op, v)| op.holds(row[j], v)))
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            return Gate::refuse(query, level, RefusalReason::EmptySelection, String::new());
        }
        let selection = t.select(&indices);

        let mut lowest_risk: Option<f64> = None;
        for candidate in self
            .policy
            .levels()
            .iter()
            .rev()
            .filter(|l| l.level <= level)
        {
            let Ok(released) = candidate.plan.apply(&selection) else {
                continue;
            };
            let risk = reident_risk(&selection, &released).expect("same columns and ids");
            if risk <= ceiling {
                let col = |j: usize| released.rows().iter().map(move |r| r[j]);
                let n = released.len() as f64;
                let (value, rows) = match query.aggregate.kind {
                    AggregateKind::Rows => (None, Some(released.rows().to_vec())),
                    AggregateKind::Count => (Some(n), None),
                    AggregateKind::Sum => (Some(col(agg_col.expect("checked")).sum()), None),
                    AggregateKind::Mean => {
                        (Some(col(agg_col.expect("checked")).sum::<f64>() / n), None)
                    }
                };
                return GateOutcome::Released(Response {
                    query_id: query.id.clone(),
                    level,
                    plan_level: candidate.level,
                    plan: candidate.plan.to_string(),
                    rows_selected: indices.len(),
                    measured_risk: risk,
                    kind: query.aggregate.kind,
                    value,
                    rows,
                });
            }
            lowest_risk = Some(lowest_risk.map_or(risk, |r: f64| r.min(risk)));
        }
        match lowest_risk {
            Some(r) => Gate::refuse(
                query,
                level,
                RefusalReason::RiskExceeded,
                format!("lowest measured risk {r:.6} exceeds {ceiling}"),
            ),
            None => Gate::refuse(
                query,
                level,
                RefusalReason::SelectionTooSmall,
                format!("{} rows selected", indices.len()),
            ),
        }
    }
}
