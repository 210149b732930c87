//! Reference dispatchers: exclusive dispatch, sequential greedy and the
//! exhaustive optimum.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Assignment, Dispatch, Instance};
use crate::optlib::max_weight_matching;
use crate::rng;
use crate::valuation::{value, ValuationKind};

/// Edge weight used by exclusive dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdWeighting {
    /// `p * w`, the expected value of a single offer.
    #[default]
    Expected,
    /// `w` alone.
    Raw,
}

/// Exclusive dispatch: at most one driver per rider, chosen by a
/// maximum-weight matching. Welfare is the expected value `sum p w`.
pub fn ed_solve(inst: &Instance, weighting: EdWeighting) -> Result<Dispatch> {
    let edges: Vec<Vec<f64>> = (0..inst.m())
        .map(|i| {
            (0..inst.n())
                .map(|j| match weighting {
                    EdWeighting::Expected => inst.weight(i, j) * inst.prob(i, j),
                    EdWeighting::Raw => inst.weight(i, j),
                })
                .collect()
        })
        .collect();
    let matching = max_weight_matching(&edges, true)?;
    let mut assignment = Assignment::empty(inst.m());
    for &(i, j) in &matching.pairs {
        assignment.sets[i].push(j);
    }
    let welfare = inst.welfare(&assignment, ValuationKind::Fa);
    Ok(Dispatch {
        assignment,
        welfare,
    })
}

/// Visits drivers in `order`, adding each to the rider with the largest
/// strictly positive marginal (ties to the lower rider index).
pub fn greedy_in_order(inst: &Instance, order: &[usize], kind: ValuationKind) -> Dispatch {
    let m = inst.m();
    let mut assignment = Assignment::empty(m);
    let mut current: Vec<f64> = vec![0.0; m];
    for &j in order {
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..m {
            let mut trial = assignment.sets[i].clone();
            trial.push(j);
            let v = value(kind, &inst.view(i, &trial));
            let gain = v - current[i];
            if gain > 0.0 && best.map_or(true, |b| gain > b.1) {
                best = Some((i, gain, v));
            }
        }
        if let Some((i, _, v)) = best {
            assignment.sets[i].push(j);
            current[i] = v;
        }
    }
    let assignment = assignment.normalized();
    let welfare = inst.welfare(&assignment, kind);
    Dispatch {
        assignment,
        welfare,
    }
}

/// One seeded driver order, fixed for the whole run.
pub fn random_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    order
}

/// Greedy under FA marginals, which may be negative.
pub fn fa_greedy(inst: &Instance, seed: u64) -> Dispatch {
    greedy_in_order(inst, &random_order(inst.n(), seed), ValuationKind::Fa)
}

/// Cap on the number of driver-to-rider maps enumerated by
/// [`opt_bruteforce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget(pub u128);

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget(10_000_000)
    }
}

/// `(m + 1)^n`, saturating.
pub fn state_count(m: usize, n: usize) -> u128 {
    (m as u128 + 1).saturating_pow(n as u32)
}

/// Exact optimum over every map from drivers to riders or "unused".
///
/// Maps are visited in lexicographic order of the per-driver choice
/// (riders `0..m`, then unused) and only a strictly better map replaces the
/// incumbent.
pub fn opt_bruteforce(inst: &Instance, kind: ValuationKind, budget: OracleBudget) -> Result<Dispatch> {
    let (m, n) = (inst.m(), inst.n());
    let required = state_count(m, n);
    if required > budget.0 || n >= 32 {
        return Err(Error::BudgetExceeded {
            required,
            budget: budget.0,
        });
    }
    // Value of every subset for every rider.
    let tables: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0u32..1 << n)
                .map(|mask| {
                    let set: Vec<usize> = (0..n).filter(|&j| mask >> j & 1 == 1).collect();
                    value(kind, &inst.view(i, &set))
                })
                .collect()
        })
        .collect();

    let search = |first: usize| -> (f64, Vec<usize>) {
        let mut choice = vec![m; n];
        choice[0] = first;
        let mut masks = vec![0u32; m];
        if first < m {
            masks[first] |= 1;
        }
        let mut best = (f64::NEG_INFINITY, choice.clone());
        dfs(1, n, m, &tables, &mut masks, &mut choice, &mut best);
        best
    };
    let parts: Vec<(f64, Vec<usize>)> = (0..=m).into_par_iter().map(search).collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for p in parts {
        if p.0 > best.0 {
            best = p;
        }
    }
    let mut assignment = Assignment::empty(m);
    for (j, &i) in best.1.iter().enumerate() {
        if i < m {
            assignment.sets[i].push(j);
        }
    }
    let welfare = inst.welfare(&assignment, kind);
    Ok(Dispatch {
        assignment,
        welfare,
    })
}

fn dfs(
    j: usize,
    n: usize,
    m: usize,
    tables: &[Vec<f64>],
    masks: &mut [u32],
    choice: &mut [usize],
    best: &mut (f64, Vec<usize>),
) {
    if j == n {
        let total: f64 = tables.iter().zip(masks.iter()).map(|(t, &s)| t[s as usize]).sum();
        if total > best.0 {
            best.0 = total;
            best.1.copy_from_slice(choice);
        }
        return;
    }
    for i in 0..=m {
        choice[j] = i;
        if i < m {
            masks[i] |= 1 << j;
        }
        dfs(j + 1, n, m, tables, masks, choice, best);
        if i < m {
            masks[i] &= !(1 << j);
        }
    }
    choice[j] = m;
}
