use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use super::methods::{ReleasePlan, Stat};
use super::{DisclosureError, Microtable};

/// Squared distances closer than this to the minimum count as a tie.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two rows.
    pub sd: f64,
}

pub fn column_stats(t: &Microtable) -> Vec<ColumnStats> {
    let n = t.len() as f64;
    (0..t.columns().len())
        .map(|j| {
            let col = t.column(j);
            let mean = if col.is_empty() {
                0.0
            } else {
                col.iter().sum::<f64>() / n
            };
            let sd = if col.len() < 2 {
                0.0
            } else {
                (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            ColumnStats { mean, sd }
        })
        .collect()
}

/// Rows centred and scaled by `stats`; a zero-spread column is only centred.
pub(crate) fn standardize(t: &Microtable, stats: &[ColumnStats]) -> Vec<Vec<f64>> {
    t.rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(stats)
                .map(|(x, s)| (x - s.mean) / if s.sd > 0.0 { s.sd } else { 1.0 })
                .collect()
        })
        .collect()
}

fn check_columns(a: &Microtable, b: &Microtable) -> Result<(), DisclosureError> {
    if a.columns() != b.columns() {
        return Err(DisclosureError::Argument(format!(
            "column mismatch: {:?} vs {:?}",
            a.columns(),
            b.columns()
        )));
    }
    Ok(())
}

/// Fraction of released rows whose nearest original row, by Euclidean
/// distance on columns standardized with the original's statistics, is
/// their own source.
///
/// Ambiguity counts as a miss: a tie for nearest original, or a released row
/// that is identical to another released row and so cannot be told apart
/// from it. Ids are used only for scoring; the attack sees values alone.
pub fn reident_risk(original: &Microtable, released: &Microtable) -> Result<f64, DisclosureError> {
    check_columns(original, released)?;
    if released.is_empty() {
        return Ok(0.0);
    }
    let position: HashMap<&str, usize> = original
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let sources = released
        .ids()
        .iter()
        .map(|id| {
            position.get(id.as_str()).copied().ok_or_else(|| {
                DisclosureError::Argument(format!("released id `{id}` is not in the original"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut multiplicity: HashMap<Vec<u64>, usize> = HashMap::new();
    for row in released.rows() {
        *multiplicity.entry(row_key(row)).or_default() += 1;
    }
    let stats = column_stats(original);
    let zo = standardize(original, &stats);
    let zr = standardize(released, &stats);
    let hits = zr
        .par_iter()
        .zip(released.rows())
        .zip(&sources)
        .filter(|((r, raw), &source)| {
            if multiplicity[&row_key(raw)] > 1 {
                return false;
            }
            let mut best = f64::INFINITY;
            let mut best_i = usize::MAX;
            let mut tied = false;
            for (i, o) in zo.iter().enumerate() {
                let d: f64 = r.iter().zip(o).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < best - TIE_EPS {
                    best = d;
                    best_i = i;
                    tied = false;
                } else if d <= best + TIE_EPS {
                    tied = true;
                    best = best.min(d);
                }
            }
            !tied && best_i == source
        })
        .count();
    Ok(hits as f64 / released.len() as f64)
}

/// Exact-equality key for a row; `-0.0` and `0.0` are the same value.
fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// `1 - mean_j loss_j`, where each column's loss averages
/// `min(1, |Δmean| / sd)` and `min(1, |sd_released / sd - 1|)`. A column
/// with zero original spread scores only its mean term: 0 if the mean is
/// unchanged, 1 otherwise.
pub fn utility_loss_complement(
    original: &Microtable,
    released: &Microtable,
) -> Result<f64, DisclosureError> {
    check_columns(original, released)?;
    if original.len() != released.len() {
        return Err(DisclosureError::Shape(format!(
            "{} original rows vs {} released",
            original.len(),
            released.len()
        )));
    }
    let so = column_stats(original);
    let sr = column_stats(released);
    let loss: f64 = so
        .iter()
        .zip(&sr)
        .map(|(o, r)| {
            let shift = (r.mean - o.mean).abs();
            if o.sd > 0.0 {
                let mean_term = (shift / o.sd).min(1.0);
                let sd_term = (r.sd / o.sd - 1.0).abs().min(1.0);
                (mean_term + sd_term) / 2.0
            } else if shift <= 1e-12 * o.mean.abs().max(1.0) {
                0.0
            } else {
                1.0
            }
        })
        .sum::<f64>()
        / so.len() as f64;
    Ok((1.0 - loss).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RUPoint {
    pub param: f64,
    pub risk: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    Microaggregate { ks: Vec<usize>, stat: Stat },
    Noise { lambdas: Vec<f64>, seed: u64 },
}

impl SweepGrid {
    pub fn plans(&self) -> Vec<(f64, ReleasePlan)> {
        match self {
            SweepGrid::Microaggregate { ks, stat } => ks
                .iter()
                .map(|&k| (k as f64, ReleasePlan::Microaggregate { k, stat: *stat }))
                .collect(),
            SweepGrid::Noise { lambdas, seed } => lambdas
                .iter()
                .map(|&lambda| {
                    (
                        lambda,
                        ReleasePlan::Noise {
                            lambda,
                            seed: *seed,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            SweepGrid::Microaggregate { .. } => "microaggregate",
            SweepGrid::Noise { .. } => "noise",
        }
    }
}

/// One point per grid value, in grid order.
pub fn ru_sweep(t: &Microtable, grid: &SweepGrid) -> Result<Vec<RUPoint>, DisclosureError> {
    let plans = grid.plans();
    if plans.is_empty() {
        return Err(DisclosureError::Argument("empty parameter grid".into()));
    }
    plans
        .into_iter()
        .map(|(param, plan)| {
            let released = plan.apply(t)?;
            Ok(RUPoint {
                param,
                risk: reident_risk(t, &released)?,
                utility: utility_loss_complement(t, &released)?,
            })
        })
        .collect()
}

/// `param,risk,utility` rows with six decimals.
pub fn write_ru<W: Write>(mut out: W, points: &[RUPoint]) -> std::io::Result<()> {
    writeln!(out, "param,risk,utility")?;
    for p in points {
        writeln!(out, "{},{:.6},{:.6}", p.param, p.risk, p.utility)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disclosure::{microaggregate, synthetic_microtable};

    fn constant_like(t: &Microtable) -> Microtable {
        let means: Vec<f64> = column_stats(t).iter().map(|s| s.mean).collect();
        t.with_rows(vec![means; t.len()])
    }

    #[test]
    fn identity_release_is_fully_exposed() {
        let t = synthetic_microtable(300, 2);
        assert_eq!(reident_risk(&t, &t).unwrap(), 1.0);
        assert_eq!(utility_loss_complement(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn constant_release() {
        let t = synthetic_microtable(300, 2);
        let c = constant_like(&t);
        assert_eq!(reident_risk(&t, &c).unwrap(), 0.0);
        assert!((utility_loss_complement(&t, &c).unwrap() - 0.5).abs() < 1e-12);
        let shifted = t.with_rows(vec![vec![1e9; 4]; t.len()]);
        assert_eq!(utility_loss_complement(&t, &shifted).unwrap(), 0.0);
    }

    #[test]
    fn zero_variance_column_uses_mean_term() {
        let t = Microtable::new(
            vec!["c".into(), "x".into()],
            vec![("a".into(), vec![5.0, 1.0]), ("b".into(), vec![5.0, 3.0])],
        )
        .unwrap();
        assert_eq!(utility_loss_complement(&t, &t).unwrap(), 1.0);
        let moved = t.with_rows(vec![vec![6.0, 1.0], vec![6.0, 3.0]]);
        assert_eq!(utility_loss_complement(&t, &moved).unwrap(), 0.5);
    }

    #[test]
    fn ties_count_as_misses() {
        let t = Microtable::new(
            vec!["x".into()],
            vec![("a".into(), vec![0.0]), ("b".into(), vec![2.0])],
        )
        .unwrap();
        let mid = t.with_rows(vec![vec![1.0], vec![1.0]]);
        assert_eq!(reident_risk(&t, &mid).unwrap(), 0.0);
    }

    #[test]
    fn column_mismatch_is_an_error() {
        let t = synthetic_microtable(10, 1);
        let other = Microtable::new(vec!["x".into()], vec![("r000000".into(), vec![1.0])]).unwrap();
        assert!(reident_risk(&t, &other).is_err());
        assert!(utility_loss_complement(&t, &other).is_err());
    }

    #[test]
    fn grouping_caps_risk() {
        let t = synthetic_microtable(400, 4);
        for k in [2, 5, 10] {
            let m = microaggregate(&t, k, Stat::Mean).unwrap();
            let risk = reident_risk(&t, &m.released).unwrap();
            assert!(risk <= 1.0 / k as f64, "k={k} risk={risk}");
        }
    }

    #[test]
    fn duplicated_released_rows_are_misses() {
        let t = Microtable::new(
            vec!["x".into()],
            vec![
                ("a".into(), vec![0.0]),
                ("b".into(), vec![0.1]),
                ("c".into(), vec![5.0]),
            ],
        )
        .unwrap();
        let r = t.with_rows(vec![vec![0.0], vec![0.0], vec![5.0]]);
        assert!((reident_risk(&t, &r).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sweeps_are_monotone() {
        let t = synthetic_microtable(500, 8);
        let ks = ru_sweep(
            &t,
            &SweepGrid::Microaggregate {
                ks: vec![2, 4, 8, 16],
                stat: Stat::Mean,
            },
        )
        .unwrap();
        let noise = ru_sweep(
            &t,
            &SweepGrid::Noise {
                lambdas: vec![0.0, 0.1, 0.25, 0.5, 1.0],
                seed: 3,
            },
        )
        .unwrap();
        for pts in [&ks, &noise] {
            for w in pts.windows(2) {
                assert!(w[1].risk <= w[0].risk, "{pts:?}");
                assert!(w[1].utility <= w[0].utility, "{pts:?}");
            }
        }
        assert_eq!((noise[0].risk, noise[0].utility), (1.0, 1.0));
        let single = ru_sweep(
            &t,
            &SweepGrid::Noise {
                lambdas: vec![0.3],
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(single.len(), 1);
        let mut buf = Vec::new();
        write_ru(&mut buf, &single).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("param,risk,utility\n0.3,"));
    }
}
