//! Multi-rider first-accept dispatch through the MNL configuration LP.
//!
//! The MNL surrogate is within a factor two of FA and its downward closure
//! admits a demand oracle, so the configuration LP over MNL columns can be
//! solved by column generation. Independent per-driver rounding of the LP
//! marginals proposes disjoint sets, and each proposal is pruned with the
//! single-rider PTAS.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colgen::{column_generation, ColGenSettings, ColumnPricing};
pub use crate::colgen::FractionalSolution;
use crate::error::{Error, Result};
use crate::fa_single::{prune, PtasConfig};
use crate::instance::{Assignment, Instance};
use crate::rng::{self, DetRng};
use crate::valuation::{best_subset, mnl_value, sort_by_weight_desc, Driver, DriverView, ValuationKind};

/// How the column-generation pricing problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PricingMode {
    /// Budget grid over the knapsack FPTAS, additive `eps`.
    Fptas,
    /// Enumeration of all subsets (small instances only).
    ExactBruteforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaMultiConfig {
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
    pub max_iterations: usize,
    pub pricing: PricingMode,
    /// Rounding draws; the best realized welfare is kept.
    pub repetitions: usize,
}

impl Default for FaMultiConfig {
    fn default() -> Self {
        FaMultiConfig {
            eps: 0.05,
            delta: 0.1,
            seed: 0,
            max_iterations: 200,
            pricing: PricingMode::Fptas,
            repetitions: 1,
        }
    }
}

impl FaMultiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Parameter(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        PtasConfig::new(self.delta)?;
        if self.max_iterations == 0 || self.repetitions == 0 {
            return Err(Error::Parameter(
                "max_iterations and repetitions must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn sorted_ids(v: &[Driver]) -> Vec<usize> {
    let mut ids: Vec<usize> = v.iter().map(|d| d.id).collect();
    ids.sort_unstable();
    ids
}

/// Unconstrained MNL optimum: the best weight-ordered prefix.
pub fn mnl_best_prefix(view: &[Driver]) -> (f64, Vec<usize>) {
    let mut sorted = view.to_vec();
    sort_by_weight_desc(&mut sorted);
    let (mut num, mut den) = (0.0, 1.0);
    let (mut best, mut best_len) = (0.0, 0);
    for (k, d) in sorted.iter().enumerate() {
        num += d.w * d.p;
        den += d.p;
        if num / den > best {
            best = num / den;
            best_len = k + 1;
        }
    }
    (best, sorted_ids(&sorted[..best_len]))
}

/// Profit-scaling knapsack: a set of total cost `<= budget` whose profit is
/// at least `1 - eps` of the best. Profits must be positive.
fn knapsack_fptas(profit: &[f64], cost: &[f64], budget: f64, eps: f64) -> Vec<usize> {
    let items: Vec<usize> = (0..profit.len())
        .filter(|&k| profit[k] > 0.0 && cost[k] <= budget)
        .collect();
    if items.is_empty() {
        return Vec::new();
    }
    let p_max = items.iter().map(|&k| profit[k]).fold(0.0, f64::max);
    let scale = eps * p_max / items.len() as f64;
    let scaled: Vec<usize> = items.iter().map(|&k| (profit[k] / scale).floor() as usize).collect();
    let total: usize = scaled.iter().sum();
    // min_cost[q]: least cost reaching scaled profit exactly q.
    let mut min_cost = vec![f64::INFINITY; total + 1];
    min_cost[0] = 0.0;
    let mut took = vec![vec![false; total + 1]; items.len()];
    let mut reach = 0;
    for (t, &k) in items.iter().enumerate() {
        let q = scaled[t];
        for s in (q..=reach + q).rev() {
            let c = min_cost[s - q] + cost[k];
            if c < min_cost[s] && c <= budget {
                min_cost[s] = c;
                took[t][s] = true;
            }
        }
        reach += q;
    }
    let mut s = (0..=total).rev().find(|&s| min_cost[s] <= budget).unwrap_or(0);
    let mut chosen = Vec::new();
    for t in (0..items.len()).rev() {
        if took[t][s] {
            chosen.push(items[t]);
            s -= scaled[t];
        }
    }
    chosen.sort_unstable();
    chosen
}

/// MNL revenue maximization under a knapsack budget.
///
/// Returns sorted ids of a set with cost `<= budget` and MNL value at least
/// `1 - eps` of the best budget-feasible set.
///
/// Works by a geometric search on the target ratio `r`: a set reaches
/// `mnl >= r` exactly when `sum_j (w_j - r) p_j >= r`, a knapsack with
/// profits `(w_j - r) p_j`.
pub fn mnl_knapsack_fptas(view: &[Driver], costs: &[f64], budget: f64, eps: f64) -> Result<Vec<usize>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps must lie in (0,1), got {eps}")));
    }
    if !(budget >= 0.0) || costs.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::Parameter("costs and budget must be nonnegative".into()));
    }
    let cost_of = |d: &Driver| costs[d.id];
    let items: Vec<Driver> = view
        .iter()
        .filter(|d| d.w > 0.0 && d.p > 0.0 && cost_of(d) <= budget)
        .copied()
        .collect();
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let half = eps / 2.0;
    let item_costs: Vec<f64> = items.iter().map(cost_of).collect();

    let mut best_set: Vec<Driver> = Vec::new();
    let mut best_val = 0.0;
    for d in &items {
        let v = mnl_value(std::slice::from_ref(d));
        if v > best_val {
            best_val = v;
            best_set = vec![*d];
        }
    }
    let mut lo = best_val;
    let w_max = items.iter().map(|d| d.w).fold(0.0, f64::max);
    let mut hi = w_max.min(2.0 * items.len() as f64 * lo);
    while hi > lo * (1.0 + half) {
        let r = (lo * hi).sqrt();
        let profit: Vec<f64> = items.iter().map(|d| (d.w - r) * d.p).collect();
        let picked: Vec<Driver> = knapsack_fptas(&profit, &item_costs, budget, half)
            .into_iter()
            .map(|k| items[k])
            .collect();
        let v = mnl_value(&picked);
        if v > best_val {
            best_val = v;
            best_set = picked;
        }
        if v >= (1.0 - half) * r {
            lo = r;
        } else {
            hi = r;
        }
    }
    Ok(sorted_ids(&best_set))
}

fn net(view: &[Driver], costs: &[f64]) -> f64 {
    mnl_value(view) - view.iter().map(|d| costs[d.id]).sum::<f64>()
}

/// Approximate MNL demand: sorted ids of a set whose `mnl - cost` is
/// within `eps` of the best.
pub fn demand_oracle_mnl(view: &DriverView, costs: &[f64], eps: f64) -> Result<Vec<usize>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps must lie in (0,1), got {eps}")));
    }
    let step = eps / 2.0;
    let steps = (2.0 / eps).ceil() as usize;
    let total: f64 = view.iter().map(|d| costs[d.id]).sum();
    let mut best: Vec<usize> = Vec::new();
    let mut best_net = 0.0;
    for r in 0..=steps {
        let budget = r as f64 * step;
        let set = mnl_knapsack_fptas(view, costs, budget, step)?;
        let v = net(&view.restrict(&set), costs);
        if v > best_net {
            best_net = v;
            best = set;
        }
        if budget >= total {
            break;
        }
    }
    Ok(best)
}

/// Exact MNL demand by enumeration.
pub fn demand_exact_mnl(view: &DriverView, costs: &[f64]) -> Result<Vec<usize>> {
    Ok(best_subset(view, |s| net(s, costs))?.1)
}

struct MnlPricing {
    eps: f64,
    mode: PricingMode,
}

impl ColumnPricing for MnlPricing {
    fn value(&self, view: &[Driver]) -> f64 {
        mnl_value(view)
    }

    fn demand(&self, row: &DriverView, costs: &[f64]) -> Result<Vec<usize>> {
        match self.mode {
            PricingMode::Fptas => demand_oracle_mnl(row, costs, self.eps),
            PricingMode::ExactBruteforce => demand_exact_mnl(row, costs),
        }
    }

    fn warm_start(&self, row: &DriverView) -> Vec<Vec<usize>> {
        vec![mnl_best_prefix(row).1]
    }
}

/// Solves the MNL configuration LP by column generation.
pub fn solve_config_lp(inst: &Instance, cfg: &FaMultiConfig) -> Result<FractionalSolution> {
    cfg.validate()?;
    let (violation_tol, oracle_slack) = match cfg.pricing {
        PricingMode::Fptas => (cfg.eps, cfg.eps),
        PricingMode::ExactBruteforce => (1e-9, 0.0),
    };
    column_generation(
        inst,
        &MnlPricing {
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

/// Independent per-driver rounding: driver `j` goes to rider `i` with
/// probability `x[i][j]` (after scaling a column sum above one down to one).
pub fn round_marginals(marginals: &[Vec<f64>], n: usize, rng: &mut DetRng) -> Assignment {
    let mut sets = vec![Vec::new(); marginals.len()];
    for j in 0..n {
        let total: f64 = marginals.iter().map(|x| x[j].max(0.0)).sum();
        let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, x) in marginals.iter().enumerate() {
            acc += x[j].max(0.0) * scale;
            if u < acc {
                sets[i].push(j);
                break;
            }
        }
    }
    Assignment { sets }
}

/// One rounding draw followed by PTAS pruning of every proposed set.
pub fn round_and_prune(
    inst: &Instance,
    frac: &FractionalSolution,
    delta: f64,
    rng: &mut DetRng,
) -> Result<Assignment> {
    let cfg = PtasConfig::new(delta)?;
    let proposal = round_marginals(&frac.marginals, inst.n(), rng);
    let sets = proposal
        .sets
        .iter()
        .enumerate()
        .map(|(i, r)| prune(&inst.view(i, r), &cfg).map(|s| s.set))
        .collect::<Result<Vec<_>>>()?;
    Ok(Assignment { sets })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaMultiResult {
    pub assignment: Assignment,
    pub welfare: f64,
    pub fractional: FractionalSolution,
}

/// LP, rounding and pruning. Each repetition uses its own derived seed.
pub fn fa_multi_solve(inst: &Instance, cfg: &FaMultiConfig) -> Result<FaMultiResult> {
    let frac = solve_config_lp(inst, cfg)?;
    let draws: Vec<Result<(Assignment, f64)>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::seeded(rng::derive_seed(cfg.seed, r as u64));
            let a = round_and_prune(inst, &frac, cfg.delta, &mut rng)?;
            let w = inst.welfare(&a, ValuationKind::Fa);
            Ok((a, w))
        })
        .collect();
    let mut best: Option<(Assignment, f64)> = None;
    for d in draws {
        let (a, w) = d?;
        if best.as_ref().map_or(true, |b| w > b.1) {
            best = Some((a, w));
        }
    }
    let (assignment, welfare) = best.expect("at least one repetition");
    Ok(FaMultiResult {
        assignment,
        welfare,
        fractional: frac,
    })
}
