//! Best-accept welfare maximization.
//!
//! BA valuations are monotone submodular. With a common acceptance
//! probability `p` the problem is a matching: the driver in a rider's
//! `l`-th weight slot earns `p (1 - p)^(l-1) w`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_in_order, random_order};
use crate::colgen::{column_generation, ColGenSettings, ColumnPricing, FractionalSolution};
use crate::error::{Error, Result};
use crate::fa_multi::PricingMode;
use crate::instance::{Assignment, Dispatch, Instance};
use crate::optlib::max_weight_matching;
use crate::rng;
use crate::valuation::{ba_value, ba_value_sorted, best_subset, sort_by_weight_desc, Driver, DriverView, ValuationKind};

/// Tolerance for treating all acceptance probabilities as equal.
pub const HOMOGENEITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousDispatch {
    pub assignment: Assignment,
    /// `sum_i ba_value(S_i)`.
    pub welfare: f64,
    /// Total weight of the slot matching.
    pub matching_weight: f64,
    /// `(rider, slot)` of every notified driver, slots counted from 1.
    pub slots: Vec<Option<(usize, usize)>>,
}

/// Number of slots whose coefficient `p (1 - p)^(l - 1)` can matter.
pub fn slot_count(p: f64, n: usize) -> usize {
    if p >= 1.0 {
        return 1;
    }
    let needed = (1e-12f64.ln() / (1.0 - p).ln()).ceil();
    (needed.max(1.0) as usize).min(n)
}

/// Exact BA optimum when every acceptance probability is the same.
pub fn ba_homogeneous_solve(inst: &Instance) -> Result<HomogeneousDispatch> {
    let p = inst.homogeneous_prob(HOMOGENEITY_TOL)?;
    let (m, n) = (inst.m(), inst.n());
    if p <= 0.0 {
        return Ok(HomogeneousDispatch {
            assignment: Assignment::empty(m),
            welfare: 0.0,
            matching_weight: 0.0,
            slots: vec![None; n],
        });
    }
    let slots = slot_count(p, n);
    let coeff: Vec<f64> = (0..slots).map(|l| p * (1.0 - p).powi(l as i32)).collect();
    // Rows are drivers; column i * slots + l is slot l + 1 of rider i.
    let edges: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..m)
                .flat_map(|i| coeff.iter().map(move |c| c * inst.weight(i, j)))
                .collect()
        })
        .collect();
    let matching = max_weight_matching(&edges, true)?;
    let mut assignment = Assignment::empty(m);
    let mut placed = vec![None; n];
    for &(j, col) in &matching.pairs {
        let (i, l) = (col / slots, col % slots);
        assignment.sets[i].push(j);
        placed[j] = Some((i, l + 1));
    }
    let assignment = assignment.normalized();
    Ok(HomogeneousDispatch {
        welfare: inst.welfare(&assignment, ValuationKind::Ba),
        assignment,
        matching_weight: matching.total,
        slots: placed,
    })
}

/// Sequential greedy under BA marginals over one seeded driver order.
pub fn ba_greedy(inst: &Instance, seed: u64) -> Dispatch {
    greedy_in_order(inst, &random_order(inst.n(), seed), ValuationKind::Ba)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    pub steps: usize,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            steps: 100,
            seed: 0,
            repetitions: 1,
        }
    }
}

/// Multilinear extension of rider `i`'s BA value at inclusion levels `x`.
///
/// Thinning each acceptance probability by its inclusion probability gives
/// the expectation exactly.
pub fn ba_multilinear(view: &[Driver], x: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..view.len()).collect();
    order.sort_by(|&a, &b| view[b].w.total_cmp(&view[a].w).then(view[a].id.cmp(&view[b].id)));
    let thinned: Vec<Driver> = order
        .iter()
        .map(|&k| Driver::new(view[k].id, view[k].w, view[k].p * x[k]))
        .collect();
    ba_value_sorted(&thinned)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousGreedyResult {
    pub dispatch: Dispatch,
    /// Final fractional point `x[i][j]`.
    pub fractional: Vec<Vec<f64>>,
    /// Multilinear value at the fractional point.
    pub fractional_value: f64,
}

/// Continuous greedy on the exact multilinear extension, then per-driver
/// categorical rounding.
pub fn ba_continuous_greedy(inst: &Instance, cfg: &CgConfig) -> Result<ContinuousGreedyResult> {
    if cfg.steps == 0 || cfg.repetitions == 0 {
        return Err(Error::Parameter("steps and repetitions must be >= 1".into()));
    }
    let (m, n) = (inst.m(), inst.n());
    // Each rider's drivers sorted once by weight; x stays indexed by driver id.
    let sorted: Vec<Vec<Driver>> = (0..m)
        .map(|i| {
            let mut v = inst.row_view(i).into_inner();
            sort_by_weight_desc(&mut v);
            v
        })
        .collect();
    let mut x = vec![vec![0.0f64; n]; m];
    let step = 1.0 / cfg.steps as f64;
    for _ in 0..cfg.steps {
        // gains[i][j]: marginal of raising x[i][j].
        let gains: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| rider_marginals(&sorted[i], &x[i]))
            .collect();
        for j in 0..n {
            let mut best: Option<(usize, f64)> = None;
            for (i, g) in gains.iter().enumerate() {
                if g[j] > 0.0 && best.map_or(true, |b| g[j] > b.1) {
                    best = Some((i, g[j]));
                }
            }
            if let Some((i, _)) = best {
                x[i][j] = (x[i][j] + step).min(1.0);
            }
        }
    }
    let fractional_value: f64 = (0..m)
        .map(|i| ba_multilinear(&inst.row_view(i), &x[i]))
        .sum();

    let draws: Vec<Dispatch> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::seeded(rng::derive_seed(cfg.seed, r as u64));
            let mut assignment = Assignment::empty(m);
            for j in 0..n {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for i in 0..m {
                    acc += x[i][j];
                    if u < acc {
                        assignment.sets[i].push(j);
                        break;
                    }
                }
            }
            let welfare = inst.welfare(&assignment, ValuationKind::Ba);
            Dispatch {
                assignment,
                welfare,
            }
        })
        .collect();
    let mut best = draws[0].clone();
    for d in draws.into_iter().skip(1) {
        if d.welfare > best.welfare {
            best = d;
        }
    }
    Ok(ContinuousGreedyResult {
        dispatch: best,
        fractional: x,
        fractional_value,
    })
}

/// `G(x | x_j = 1) - G(x | x_j = 0)` for every driver of one rider.
fn rider_marginals(sorted: &[Driver], x: &[f64]) -> Vec<f64> {
    let k = sorted.len();
    // reach[t]: probability nobody among the first t (by weight) accepts.
    let mut reach = vec![1.0; k + 1];
    for t in 0..k {
        reach[t + 1] = reach[t] * (1.0 - sorted[t].p * x[sorted[t].id]);
    }
    // tail[t]: value collected from positions t.. given nobody before t accepted.
    let mut tail = vec![0.0; k + 1];
    for t in (0..k).rev() {
        let q = sorted[t].p * x[sorted[t].id];
        tail[t] = q * sorted[t].w + (1.0 - q) * tail[t + 1];
    }
    let mut out = vec![0.0; x.len()];
    for t in 0..k {
        let d = sorted[t];
        // Value is affine in q_t; the slope times p_t is the marginal.
        out[d.id] = reach[t] * d.p * (d.w - tail[t + 1]);
    }
    out
}

/// Result of the BA demand dynamic program.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandChoice {
    /// Chosen driver ids, ascending.
    pub set: Vec<usize>,
    /// `ba_value(set) - sum of prices`.
    pub net: f64,
}

/// Approximate BA demand: maximizes `ba_value(S) - sum_{j in S} price_j`
/// up to an additive `eps`.
///
/// Prices are rounded down to multiples of `eps / n` and a knapsack-style
/// program over drivers in weight order tracks, for each rounded budget,
/// the best value reachable. Drivers priced above one are never worth
/// taking since a value never exceeds one.
pub fn ba_demand_oracle(view: &[Driver], prices: &[f64], eps: f64) -> Result<DemandChoice> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    if prices.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Parameter("prices must be nonnegative".into()));
    }
    let n = view.len().max(1);
    let unit = eps / n as f64;
    let mut items: Vec<Driver> = view.iter().filter(|d| prices[d.id] <= 1.0).copied().collect();
    sort_by_weight_desc(&mut items);
    let units: Vec<usize> = items
        .iter()
        .map(|d| (prices[d.id] / unit).floor() as usize)
        .collect();
    let cap: usize = units.iter().sum();
    let k = items.len();

    // value[t][b] for t in 0..=k (t = k is the empty suffix).
    let mut value = vec![vec![0.0f64; cap + 1]; k + 1];
    let mut take = vec![vec![false; cap + 1]; k];
    for t in (0..k).rev() {
        let (d, u) = (items[t], units[t]);
        for b in 0..=cap {
            let skip = value[t + 1][b];
            let mut best = skip;
            if b >= u {
                let with = d.p * d.w + (1.0 - d.p) * value[t + 1][b - u];
                if with >= skip {
                    best = with;
                    take[t][b] = true;
                }
            }
            value[t][b] = best;
        }
    }
    let mut b_star = 0;
    for b in 0..=cap {
        if value[0][b] - b as f64 * unit > value[0][b_star] - b_star as f64 * unit {
            b_star = b;
        }
    }
    let mut set = Vec::new();
    let mut b = b_star;
    for t in 0..k {
        if take[t][b] {
            set.push(items[t].id);
            b -= units[t];
        }
    }
    set.sort_unstable();
    let chosen: DriverView = view.iter().filter(|d| set.contains(&d.id)).copied().collect();
    let net = ba_value(&chosen) - set.iter().map(|&j| prices[j]).sum::<f64>();
    Ok(DemandChoice { set, net })
}

/// Exact BA demand by enumeration.
pub fn ba_demand_exact(view: &[Driver], prices: &[f64]) -> Result<DemandChoice> {
    let (net, set) = best_subset(view, |s| {
        ba_value(s) - s.iter().map(|d| prices[d.id]).sum::<f64>()
    })?;
    Ok(DemandChoice { set, net })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaLpConfig {
    pub eps: f64,
    pub max_iterations: usize,
    pub pricing: PricingMode,
}

impl Default for BaLpConfig {
    fn default() -> Self {
        BaLpConfig {
            eps: 0.05,
            max_iterations: 200,
            pricing: PricingMode::Fptas,
        }
    }
}

struct BaPricing {
    eps: f64,
    mode: PricingMode,
}

impl ColumnPricing for BaPricing {
    fn value(&self, view: &[Driver]) -> f64 {
        ba_value(view)
    }

    fn demand(&self, row: &DriverView, costs: &[f64]) -> Result<Vec<usize>> {
        Ok(match self.mode {
            PricingMode::Fptas => ba_demand_oracle(row, costs, self.eps)?.set,
            PricingMode::ExactBruteforce => ba_demand_exact(row, costs)?.set,
        })
    }

    fn warm_start(&self, row: &DriverView) -> Vec<Vec<usize>> {
        vec![row.iter().filter(|d| d.p > 0.0 && d.w > 0.0).map(|d| d.id).collect()]
    }
}

/// BA configuration LP by column generation.
///
/// `upper_bound` of the result is a valid bound on the BA optimum.
pub fn ba_config_lp_bound(inst: &Instance, cfg: &BaLpConfig) -> Result<FractionalSolution> {
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) || cfg.max_iterations == 0 {
        return Err(Error::Parameter(format!(
            "need eps in (0,1) and max_iterations >= 1, got eps={} max_iterations={}",
            cfg.eps, cfg.max_iterations
        )));
    }
    let (violation_tol, oracle_slack) = match cfg.pricing {
        PricingMode::Fptas => (cfg.eps, cfg.eps),
        PricingMode::ExactBruteforce => (1e-9, 0.0),
    };
    column_generation(
        inst,
        &BaPricing {
            eps: cfg.eps,
            mode: cfg.pricing,
        },
        ColGenSettings {
            violation_tol,
            oracle_slack,
            max_iterations: cfg.max_iterations,
        },
    )
}
