//! Column generation for the configuration LP
//!
//! ```text
//! max  sum_{i,S} v_i(S) y_{i,S}
//! s.t. sum_{i, S ∋ j} y_{i,S} <= 1   for every driver j   (price alpha_j >= 0)
//!      sum_S y_{i,S}         = 1   for every rider i    (price beta_i)
//!      y >= 0
//! ```
//!
//! The restricted master holds the empty set, every singleton and a warm
//! start per rider. Each round prices every rider with a demand oracle
//! under the current driver prices and adds columns whose reduced value
//! exceeds the violation tolerance.
//!
//! Any `alpha >= 0` yields the Lagrangian bound
//! `sum_j alpha_j + sum_i max_S (v_i(S) - alpha(S))`, which dominates the
//! LP optimum. With an oracle that is optimal up to an additive slack, the
//! reported bound adds that slack per rider and is therefore always valid.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::optlib::{lp_solve, LinearProgram, LpStatus, RowKind};
use crate::valuation::{Driver, DriverView};

/// Per-rider value and pricing used by [`column_generation`].
pub(crate) trait ColumnPricing: Sync {
    fn value(&self, view: &[Driver]) -> f64;

    /// A set with (approximately) maximal `value - cost`, as sorted ids.
    fn demand(&self, row: &DriverView, costs: &[f64]) -> Result<Vec<usize>>;

    /// Sets added to the initial master for one rider.
    fn warm_start(&self, row: &DriverView) -> Vec<Vec<usize>>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ColGenSettings {
    /// A column enters when its reduced value exceeds this.
    pub violation_tol: f64,
    /// Additive suboptimality of the demand oracle.
    pub oracle_slack: f64,
    pub max_iterations: usize,
}

/// Support of a configuration-LP solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalSolution {
    /// Per rider, `(set, weight)` for every column with positive weight.
    pub columns: Vec<Vec<(Vec<usize>, f64)>>,
    /// `x[i][j]`: total weight of rider `i`'s columns containing driver `j`.
    pub marginals: Vec<Vec<f64>>,
    /// Optimum of the final restricted master.
    pub master_objective: f64,
    /// Valid upper bound on the full configuration LP.
    pub upper_bound: f64,
    /// True when the last pricing round found no violated column.
    pub certified: bool,
    pub iterations: usize,
    /// Restricted-master objective after each solve.
    pub objective_trace: Vec<f64>,
    /// Number of columns in the final master.
    pub column_count: usize,
    /// Final driver prices `alpha`, clamped at zero.
    pub driver_prices: Vec<f64>,
    /// Final rider prices `beta`.
    pub rider_prices: Vec<f64>,
}

impl FractionalSolution {
    /// Builds marginals from explicit per-rider column weights.
    pub fn from_columns(n: usize, columns: Vec<Vec<(Vec<usize>, f64)>>) -> Self {
        let marginals = marginals(n, &columns);
        FractionalSolution {
            column_count: columns.iter().map(Vec::len).sum(),
            columns,
            marginals,
            master_objective: f64::NAN,
            upper_bound: f64::NAN,
            certified: false,
            iterations: 0,
            objective_trace: Vec::new(),
            driver_prices: Vec::new(),
            rider_prices: Vec::new(),
        }
    }
}

fn marginals(n: usize, columns: &[Vec<(Vec<usize>, f64)>]) -> Vec<Vec<f64>> {
    columns
        .iter()
        .map(|cols| {
            let mut x = vec![0.0; n];
            for (set, y) in cols {
                for &j in set {
                    x[j] += y;
                }
            }
            x
        })
        .collect()
}

struct Column {
    rider: usize,
    set: Vec<usize>,
    value: f64,
}

fn master(inst: &Instance, columns: &[Column]) -> LinearProgram {
    let (m, n) = (inst.m(), inst.n());
    let mut lp = LinearProgram::new(columns.iter().map(|c| c.value).collect());
    for j in 0..n {
        let row = columns
            .iter()
            .map(|c| if c.set.binary_search(&j).is_ok() { 1.0 } else { 0.0 })
            .collect();
        lp.add_row(row, RowKind::Le, 1.0);
    }
    for i in 0..m {
        let row = columns
            .iter()
            .map(|c| if c.rider == i { 1.0 } else { 0.0 })
            .collect();
        lp.add_row(row, RowKind::Eq, 1.0);
    }
    lp
}

pub(crate) fn column_generation<P: ColumnPricing>(
    inst: &Instance,
    pricing: &P,
    settings: ColGenSettings,
) -> Result<FractionalSolution> {
    let (m, n) = (inst.m(), inst.n());
    let rows: Vec<DriverView> = (0..m).map(|i| inst.row_view(i)).collect();
    let mut columns: Vec<Column> = Vec::new();
    let mut seen: HashSet<(usize, Vec<usize>)> = HashSet::new();
    let mut push = |columns: &mut Vec<Column>, rider: usize, mut set: Vec<usize>| {
        set.sort_unstable();
        set.dedup();
        if seen.insert((rider, set.clone())) {
            let value = pricing.value(&inst.view(rider, &set));
            columns.push(Column { rider, set, value });
            true
        } else {
            false
        }
    };
    for (i, row) in rows.iter().enumerate() {
        push(&mut columns, i, Vec::new());
        for j in 0..n {
            push(&mut columns, i, vec![j]);
        }
        for set in pricing.warm_start(row) {
            push(&mut columns, i, set);
        }
    }

    let mut trace = Vec::new();
    let mut best_bound = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let lp = master(inst, &columns);
        let sol = lp_solve(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Lp(format!(
                "restricted master ended with status {:?} after {} columns",
                sol.status,
                columns.len()
            )));
        }
        iterations += 1;
        trace.push(sol.objective);
        let alpha: Vec<f64> = sol.duals[..n].iter().map(|a| a.max(0.0)).collect();
        let beta = &sol.duals[n..];

        let priced: Vec<Result<(Vec<usize>, f64)>> = rows
            .par_iter()
            .map(|row| {
                let set = pricing.demand(row, &alpha)?;
                let view = row.restrict(&set);
                let net = pricing.value(&view) - set.iter().map(|&j| alpha[j]).sum::<f64>();
                Ok((set, net))
            })
            .collect();
        let priced: Vec<(Vec<usize>, f64)> = priced.into_iter().collect::<Result<_>>()?;

        let bound = alpha.iter().sum::<f64>()
            + priced
                .iter()
                .map(|(_, net)| net.max(0.0) + settings.oracle_slack)
                .sum::<f64>();
        best_bound = best_bound.min(bound);

        let mut added = false;
        for (i, (set, net)) in priced.into_iter().enumerate() {
            if net - beta[i] > settings.violation_tol {
                added |= push(&mut columns, i, set);
            }
        }
        let certified = !added;
        if certified || iterations >= settings.max_iterations {
            let mut per_rider: Vec<Vec<(Vec<usize>, f64)>> = vec![Vec::new(); m];
            for (c, &y) in columns.iter().zip(&sol.x) {
                if y > 1e-12 {
                    per_rider[c.rider].push((c.set.clone(), y));
                }
            }
            let marginals = marginals(n, &per_rider);
            return Ok(FractionalSolution {
                columns: per_rider,
                marginals,
                master_objective: sol.objective,
                upper_bound: best_bound.max(sol.objective),
                certified,
                iterations,
                objective_trace: trace,
                column_count: columns.len(),
                driver_prices: alpha,
                rider_prices: beta.to_vec(),
            });
        }
    }
}
