use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::metrics::{column_stats, standardize};
use super::{DisclosureError, Microtable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Mean,
    Sum,
}

impl Stat {
    pub fn as_str(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Sum => "sum",
        }
    }
}

impl FromStr for Stat {
    type Err = DisclosureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Stat::Mean),
            "sum" => Ok(Stat::Sum),
            other => Err(DisclosureError::Argument(format!(
                "unknown statistic `{other}`, expected mean or sum"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReleasePlan {
    /// Release the values unchanged.
    Identity,
    Microaggregate {
        k: usize,
        stat: Stat,
    },
    Noise {
        lambda: f64,
        seed: u64,
    },
}

impl ReleasePlan {
    pub fn validate(&self) -> Result<(), DisclosureError> {
        match *self {
            ReleasePlan::Microaggregate { k, .. } if k < 2 => Err(DisclosureError::Argument(
                format!("microaggregation needs k >= 2, got {k}"),
            )),
            ReleasePlan::Noise { lambda, .. } if !(lambda.is_finite() && lambda >= 0.0) => {
                Err(DisclosureError::Argument(format!(
                    "noise scale must be finite and >= 0, got {lambda}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, t: &Microtable) -> Result<Microtable, DisclosureError> {
        self.validate()?;
        match *self {
            ReleasePlan::Identity => Ok(t.clone()),
            ReleasePlan::Microaggregate { k, stat } => Ok(microaggregate(t, k, stat)?.released),
            ReleasePlan::Noise { lambda, seed } => perturb(t, lambda, seed),
        }
    }
}

impl fmt::Display for ReleasePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReleasePlan::Identity => f.write_str("identity"),
            ReleasePlan::Microaggregate { k, stat } => {
                write!(f, "microaggregate(k={k},stat={})", stat.as_str())
            }
            ReleasePlan::Noise { lambda, seed } => write!(f, "noise(lambda={lambda},seed={seed})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Microaggregation {
    pub released: Microtable,
    /// Group index of each row, in row order. Groups are numbered in the
    /// order they were formed.
    pub groups: Vec<usize>,
}

impl Microaggregation {
    pub fn group_count(&self) -> usize {
        self.groups.iter().max().map_or(0, |g| g + 1)
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.group_count()];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn groups_by_id(&self) -> BTreeMap<String, usize> {
        self.released
            .ids()
            .iter()
            .cloned()
            .zip(self.groups.iter().copied())
            .collect()
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fixed-size MDAV grouping on standardized columns.
///
/// While at least `2k` rows remain, the row farthest from the centroid of
/// the remaining rows (lowest index on ties) is grouped with its `k - 1`
/// nearest remaining neighbours. The final `k..2k` rows form the last group,
/// so every group has between `k` and `2k - 1` members. Each released row is
/// its group's mean or sum.
pub fn microaggregate(
    t: &Microtable,
    k: usize,
    stat: Stat,
) -> Result<Microaggregation, DisclosureError> {
    if k < 2 {
        return Err(DisclosureError::Argument(format!(
            "microaggregation needs k >= 2, got {k}"
        )));
    }
    let n = t.len();
    if n < k {
        return Err(DisclosureError::Argument(format!(
            "{n} rows cannot form a group of {k}"
        )));
    }
    let stats = column_stats(t);
    let z = standardize(t, &stats);
    let d = t.columns().len();

    let mut alive = vec![true; n];
    let mut remaining = n;
    let mut groups = vec![usize::MAX; n];
    let mut next_group = 0;
    while remaining >= 2 * k {
        let mut centroid = vec![0.0; d];
        for (row, _) in z.iter().zip(&alive).filter(|(_, a)| **a) {
            for (c, v) in centroid.iter_mut().zip(row) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= remaining as f64);

        let mut far = usize::MAX;
        let mut far_d = f64::NEG_INFINITY;
        for i in (0..n).filter(|&i| alive[i]) {
            let di = dist2(&z[i], &centroid);
            if di > far_d {
                far_d = di;
                far = i;
            }
        }

        let mut near: Vec<(f64, usize)> = (0..n)
            .filter(|&i| alive[i] && i != far)
            .map(|i| (dist2(&z[i], &z[far]), i))
            .collect();
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        near.select_nth_unstable_by(k - 2, by_dist);
        for &i in std::iter::once(&far).chain(near[..k - 1].iter().map(|(_, i)| i)) {
            groups[i] = next_group;
            alive[i] = false;
        }
        remaining -= k;
        next_group += 1;
    }
    for (i, g) in groups.iter_mut().enumerate() {
        if alive[i] {
            *g = next_group;
        }
    }

    let group_count = next_group + 1;
    let mut sums = vec![vec![0.0; d]; group_count];
    let mut sizes = vec![0usize; group_count];
    for (row, &g) in t.rows().iter().zip(&groups) {
        sizes[g] += 1;
        for (s, v) in sums[g].iter_mut().zip(row) {
            *s += v;
        }
    }
    let values: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&sizes)
        .map(|(s, &size)| match stat {
            Stat::Sum => s,
            Stat::Mean => s.into_iter().map(|x| x / size as f64).collect(),
        })
        .collect();
    let released = t.with_rows(groups.iter().map(|&g| values[g].clone()).collect());
    Ok(Microaggregation { released, groups })
}

/// Adds `N(0, (lambda * sd_j)^2)` noise to every cell of column `j`, where
/// `sd_j` is the column's sample standard deviation.
pub fn perturb(t: &Microtable, lambda: f64, seed: u64) -> Result<Microtable, DisclosureError> {
    ReleasePlan::Noise { lambda, seed }.validate()?;
    if lambda == 0.0 {
        return Ok(t.clone());
    }
    let scale: Vec<f64> = column_stats(t).iter().map(|s| lambda * s.sd).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = t
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(&scale)
                .map(|(v, s)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + s * e
                })
                .collect()
        })
        .collect();
    Ok(t.with_rows(rows))
}
