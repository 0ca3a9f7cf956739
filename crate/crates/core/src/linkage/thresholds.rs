use super::{LinkageError, LinkageModel, Thresholds};

/// Largest γ configuration space [`choose_thresholds`] will enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Configurations whose weights differ by less than this are one group: a
/// threshold can never separate them.
const WEIGHT_TIE: f64 = 1e-9;

/// Slack on the error-rate comparisons, so that e.g. `0.1 * 0.1 <= 0.01`.
const MASS_SLACK: f64 = 1e-12;

struct Group {
    hi: f64,
    lo: f64,
    m_mass: f64,
    u_mass: f64,
}

fn enumerate(model: &LinkageModel) -> Vec<(f64, f64, f64)> {
    let arities = model.arities();
    let size: usize = arities.iter().product();
    let mut out = Vec::with_capacity(size);
    let mut levels = vec![0usize; arities.len()];
    for _ in 0..size {
        let mut w = 0.0;
        let mut pm = 1.0;
        let mut pu = 1.0;
        for (f, &l) in levels.iter().enumerate() {
            w += (model.m[f][l] / model.u[f][l]).ln();
            pm *= model.m[f][l];
            pu *= model.u[f][l];
        }
        out.push((w, pm, pu));
        for (f, l) in levels.iter_mut().enumerate() {
            *l += 1;
            if *l < arities[f] {
                break;
            }
            *l = 0;
        }
    }
    out
}

/// Groups of equal weight, highest weight first.
fn groups(model: &LinkageModel) -> Vec<Group> {
    let mut configs = enumerate(model);
    configs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<Group> = Vec::new();
    for (w, pm, pu) in configs {
        match out.last_mut() {
            Some(g) if g.lo - w <= WEIGHT_TIE => {
                g.lo = w;
                g.m_mass += pm;
                g.u_mass += pu;
            }
            _ => out.push(Group {
                hi: w,
                lo: w,
                m_mass: pm,
                u_mass: pu,
            }),
        }
    }
    out
}

pub fn choose_thresholds(
    model: &LinkageModel,
    mu: f64,
    lambda: f64,
) -> Result<Thresholds, LinkageError> {
    choose_thresholds_with_cap(model, mu, lambda, DEFAULT_ENUMERATION_CAP)
}

/// Picks `(t_mu, t_lambda)` from tolerated error rates.
///
/// Configurations are ranked by weight. The link region is the largest top
/// run whose total `P(γ|U)` is at most `mu`; the non-link region is the
/// largest bottom run whose total `P(γ|M)` is at most `lambda`. Each cutoff is
/// placed midway between the last group inside its region and the first group
/// outside, so no enumerable configuration sits exactly on a threshold. An
/// empty link region gives `t_mu = +inf`; if the two regions would overlap the
/// possible region is emptied by setting `t_lambda = t_mu`.
pub fn choose_thresholds_with_cap(
    model: &LinkageModel,
    mu: f64,
    lambda: f64,
    cap: u128,
) -> Result<Thresholds, LinkageError> {
    if !(0.0..1.0).contains(&mu) || !(0.0..1.0).contains(&lambda) {
        return Err(LinkageError::Argument(format!(
            "error rates must lie in [0, 1), got mu={mu} lambda={lambda}"
        )));
    }
    let size = model
        .arities()
        .iter()
        .fold(1u128, |acc, &a| acc.saturating_mul(a as u128));
    if size > cap {
        return Err(LinkageError::Capacity { size, cap });
    }
    let groups = groups(model);
    let n = groups.len();

    let mut linked = 0;
    let mut u_mass = 0.0;
    for g in &groups {
        if u_mass + g.u_mass > mu + MASS_SLACK {
            break;
        }
        u_mass += g.u_mass;
        linked += 1;
    }
    let mut rejected = 0;
    let mut m_mass = 0.0;
    for g in groups.iter().rev() {
        if m_mass + g.m_mass > lambda + MASS_SLACK {
            break;
        }
        m_mass += g.m_mass;
        rejected += 1;
    }

    // Cut between group i-1 and group i, counting from the top.
    let cut = |i: usize| -> f64 {
        if i == 0 {
            f64::INFINITY
        } else if i == n {
            f64::NEG_INFINITY
        } else {
            0.5 * (groups[i - 1].lo + groups[i].hi)
        }
    };
    let t_mu = cut(linked);
    let t_lambda = if linked + rejected > n {
        t_mu
    } else {
        cut(n - rejected)
    };
    Thresholds::new(t_mu, t_lambda)
}
