//! Dense two-phase revised simplex for small maximization problems.
//!
//! The basis inverse is kept explicitly and refactored every
//! [`REFACTOR_EVERY`] pivots. Entering columns follow Dantzig's rule until a
//! run of degenerate pivots, after which Bland's rule takes over for the
//! rest of the phase. Every choice is index-ordered, so a solve is a pure
//! function of its input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REFACTOR_EVERY: usize = 50;
const DEGENERATE_RUN: usize = 50;
const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-8;
const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `max c x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coeffs, kind, rhs });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Lp("has a non-finite objective coefficient".into()));
        }
        for (r, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::Lp(format!(
                    "row {r} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::Lp(format!("row {r} has a non-finite entry")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values of the structural variables.
    pub x: Vec<f64>,
    /// One price per constraint: `>= 0` on `Le` rows, `<= 0` on `Ge` rows.
    pub duals: Vec<f64>,
    pub objective: f64,
    /// Structural or slack index of each basic variable.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

impl LpSolution {
    fn failed(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        LpSolution {
            status,
            x: vec![0.0; n],
            duals: vec![0.0; m],
            objective: f64::NAN,
            basis: Vec::new(),
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Column layout: structurals, then one slack per inequality row, then one
/// artificial per row that lacks a starting slack.
struct Tableau {
    rows: usize,
    cols: Vec<Vec<f64>>,
    b: Vec<f64>,
    first_artificial: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
    iterations: usize,
}

enum Phase {
    Done,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> (Tableau, Vec<bool>) {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        let mut flipped = vec![false; m];
        let mut rows: Vec<(Vec<f64>, RowKind, f64)> = Vec::with_capacity(m);
        for (r, c) in lp.constraints.iter().enumerate() {
            if c.rhs < 0.0 {
                flipped[r] = true;
                let kind = match c.kind {
                    RowKind::Le => RowKind::Ge,
                    RowKind::Ge => RowKind::Le,
                    RowKind::Eq => RowKind::Eq,
                };
                rows.push((c.coeffs.iter().map(|a| -a).collect(), kind, -c.rhs));
            } else {
                rows.push((c.coeffs.clone(), c.kind, c.rhs));
            }
        }

        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| rows.iter().map(|(a, _, _)| a[j]).collect())
            .collect();
        let mut basis = vec![usize::MAX; m];
        for (r, (_, kind, _)) in rows.iter().enumerate() {
            let sign = match kind {
                RowKind::Le => 1.0,
                RowKind::Ge => -1.0,
                RowKind::Eq => continue,
            };
            let mut col = vec![0.0; m];
            col[r] = sign;
            if sign > 0.0 {
                basis[r] = cols.len();
            }
            cols.push(col);
        }
        let first_artificial = cols.len();
        for r in 0..m {
            if basis[r] == usize::MAX {
                let mut col = vec![0.0; m];
                col[r] = 1.0;
                basis[r] = cols.len();
                cols.push(col);
            }
        }
        let mut is_basic = vec![false; cols.len()];
        for &j in &basis {
            is_basic[j] = true;
        }
        let b: Vec<f64> = rows.iter().map(|(_, _, rhs)| *rhs).collect();
        let binv = identity(m);
        let xb = b.clone();
        (
            Tableau {
                rows: m,
                cols,
                b,
                first_artificial,
                basis,
                is_basic,
                binv,
                xb,
                iterations: 0,
            },
            flipped,
        )
    }

    fn prices(&self, cost: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for (r, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != 0.0 {
                for (yi, bi) in y.iter_mut().zip(&self.binv[r]) {
                    *yi += cb * bi;
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        self.binv
            .iter()
            .map(|row| row.iter().zip(col).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn pivot(&mut self, r: usize, entering: usize, u: &[f64]) {
        let piv = u[r];
        let theta = self.xb[r] / piv;
        for row in 0..self.rows {
            if row != r {
                self.xb[row] -= theta * u[row];
            }
        }
        self.xb[r] = theta;
        let pivot_row: Vec<f64> = self.binv[r].iter().map(|v| v / piv).collect();
        for (row, binv_row) in self.binv.iter_mut().enumerate() {
            if row != r && u[row] != 0.0 {
                let f = u[row];
                for (a, p) in binv_row.iter_mut().zip(&pivot_row) {
                    *a -= f * p;
                }
            }
        }
        self.binv[r] = pivot_row;
        self.is_basic[self.basis[r]] = false;
        self.is_basic[entering] = true;
        self.basis[r] = entering;
        self.iterations += 1;
        if self.iterations % REFACTOR_EVERY == 0 {
            // A failed refactor keeps the product-form inverse.
            let _ = self.refactor();
        }
    }

    fn refactor(&mut self) -> bool {
        let m = self.rows;
        let mut a: Vec<Vec<f64>> = (0..m)
            .map(|i| self.basis.iter().map(|&j| self.cols[j][i]).collect())
            .collect();
        let mut inv = identity(m);
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()).then(y.cmp(&x)))
                .unwrap_or(c);
            if a[p][c].abs() < 1e-12 {
                return false;
            }
            a.swap(c, p);
            inv.swap(c, p);
            let d = a[c][c];
            for k in 0..m {
                a[c][k] /= d;
                inv[c][k] /= d;
            }
            for r in 0..m {
                if r != c && a[r][c] != 0.0 {
                    let f = a[r][c];
                    for k in 0..m {
                        a[r][k] -= f * a[c][k];
                        inv[r][k] -= f * inv[c][k];
                    }
                }
            }
        }
        // inv now maps B to the identity with rows in basis order.
        self.binv = inv;
        self.xb = self.ftran(&self.b.clone());
        for v in &mut self.xb {
            if *v < 0.0 && *v > -FEAS_TOL {
                *v = 0.0;
            }
        }
        true
    }

    /// Runs simplex pivots for `cost` over columns `0..allowed`.
    fn run(&mut self, cost: &[f64], allowed: usize, max_iter: usize) -> Phase {
        let mut bland = false;
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= max_iter {
                return Phase::Stalled;
            }
            let y = self.prices(cost);
            let mut entering = None;
            let mut best = PRICE_TOL;
            for j in 0..allowed {
                if self.is_basic[j] {
                    continue;
                }
                let d = cost[j] - dot(&y, &self.cols[j]);
                if d > best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(e) = entering else {
                return Phase::Done;
            };
            let u = self.ftran(&self.cols[e]);
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for r in 0..self.rows {
                if u[r] > PIVOT_TOL {
                    let t = self.xb[r].max(0.0) / u[r];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if t < ratio - 1e-12 {
                                true
                            } else if t <= ratio + 1e-12 {
                                if bland {
                                    self.basis[r] < self.basis[l]
                                } else {
                                    u[r] > u[l]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(r);
                        ratio = ratio.min(t);
                    }
                }
            }
            let Some(r) = leave else {
                return Phase::Unbounded;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, e, &u);
        }
    }

    /// Moves zero-valued artificials out of the basis where possible.
    fn expel_artificials(&mut self) {
        for r in 0..self.rows {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let row = self.binv[r].clone();
            let mut pick = None;
            let mut best = PIVOT_TOL;
            for j in 0..self.first_artificial {
                if self.is_basic[j] {
                    continue;
                }
                let v = dot(&row, &self.cols[j]).abs();
                if v > best {
                    best = v;
                    pick = Some(j);
                }
            }
            if let Some(j) = pick {
                let u = self.ftran(&self.cols[j]);
                self.pivot(r, j, &u);
            }
        }
    }
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| {
            let mut row = vec![0.0; m];
            row[i] = 1.0;
            row
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `lp`; infeasible, unbounded and unstable problems are reported
/// through [`LpSolution::status`].
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.constraints.len();
    let (mut t, flipped) = Tableau::build(lp);
    let total = t.cols.len();
    let max_iter = 200 * (total + m) + 1000;

    if t.first_artificial < total {
        let mut phase1 = vec![0.0; total];
        for c in phase1.iter_mut().skip(t.first_artificial) {
            *c = -1.0;
        }
        match t.run(&phase1, total, max_iter) {
            Phase::Done => {}
            Phase::Stalled | Phase::Unbounded => {
                return Ok(LpSolution::failed(LpStatus::NumericalFailure, n, m, t.iterations));
            }
        }
        t.refactor();
        let infeasibility: f64 = t
            .basis
            .iter()
            .zip(&t.xb)
            .filter(|(&j, _)| j >= t.first_artificial)
            .map(|(_, &v)| v)
            .sum();
        let scale = 1.0 + t.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeasibility > 1e-9 * scale {
            return Ok(LpSolution::failed(LpStatus::Infeasible, n, m, t.iterations));
        }
        t.expel_artificials();
    }

    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(&lp.objective);
    let allowed = t.first_artificial;
    match t.run(&cost, allowed, max_iter) {
        Phase::Done => {}
        Phase::Unbounded => {
            return Ok(LpSolution::failed(LpStatus::Unbounded, n, m, t.iterations));
        }
        Phase::Stalled => {
            return Ok(LpSolution::failed(LpStatus::NumericalFailure, n, m, t.iterations));
        }
    }
    if !t.refactor() {
        return Ok(LpSolution::failed(LpStatus::NumericalFailure, n, m, t.iterations));
    }

    let mut x = vec![0.0; n];
    for (r, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.xb[r].max(0.0);
        }
    }
    let mut duals = t.prices(&cost);
    for (d, &f) in duals.iter_mut().zip(&flipped) {
        if f {
            *d = -*d;
        }
        if *d == 0.0 {
            *d = 0.0;
        }
    }
    let objective = dot(&lp.objective, &x);
    let sol = LpSolution {
        status: LpStatus::Optimal,
        x,
        duals,
        objective,
        basis: t.basis.iter().copied().filter(|&j| j < allowed).collect(),
        iterations: t.iterations,
    };
    if certify(lp, &sol) {
        Ok(sol)
    } else {
        Ok(LpSolution {
            status: LpStatus::NumericalFailure,
            ..sol
        })
    }
}

/// Primal residuals and the duality gap of a claimed optimum.
fn certify(lp: &LinearProgram, sol: &LpSolution) -> bool {
    for (c, &y) in lp.constraints.iter().zip(&sol.duals) {
        let ax = dot(&c.coeffs, &sol.x);
        let tol = RESIDUAL_TOL * (1.0 + c.rhs.abs());
        let ok = match c.kind {
            RowKind::Le => ax <= c.rhs + tol && y >= -PRICE_TOL,
            RowKind::Ge => ax >= c.rhs - tol && y <= PRICE_TOL,
            RowKind::Eq => (ax - c.rhs).abs() <= tol,
        };
        if !ok {
            return false;
        }
    }
    let dual_obj: f64 = lp.constraints.iter().zip(&sol.duals).map(|(c, y)| c.rhs * y).sum();
    (sol.objective - dual_obj).abs() <= GAP_TOL * (1.0 + sol.objective.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![1.0], RowKind::Le, 3.0);
        let s = lp_solve(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_constraint() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0, 1.0], RowKind::Le, 1.0);
        let s = lp_solve(&lp).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + 2y, x + y = 4, x >= 1, y <= 2.5
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_row(vec![1.0, 1.0], RowKind::Eq, 4.0)
            .add_row(vec![1.0, 0.0], RowKind::Ge, 1.0)
            .add_row(vec![0.0, 1.0], RowKind::Le, 2.5);
        let s = lp_solve(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 6.5).abs() < 1e-10);
        assert!((s.x[0] - 1.5).abs() < 1e-10);
        // Raising the cap on y by one is worth one unit.
        assert!((s.duals[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_rhs_rows() {
        // max -x, -x <= -2  (x >= 2)
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.add_row(vec![-1.0], RowKind::Le, -2.0);
        let s = lp_solve(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![1.0], RowKind::Le, 1.0)
            .add_row(vec![1.0], RowKind::Ge, 2.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_row(vec![0.0, 1.0], RowKind::Le, 1.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn malformed_input() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0], RowKind::Le, 1.0);
        assert!(lp_solve(&lp).is_err());
        let mut lp = LinearProgram::new(vec![f64::NAN]);
        lp.add_row(vec![1.0], RowKind::Le, 1.0);
        assert!(lp_solve(&lp).is_err());
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0, 1.0], RowKind::Eq, 1.0)
            .add_row(vec![2.0, 2.0], RowKind::Eq, 2.0)
            .add_row(vec![1.0, 0.0], RowKind::Le, 0.25);
        let s = lp_solve(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example.
        let mut lp = LinearProgram::new(vec![0.75, -20.0, 0.5, -6.0]);
        lp.add_row(vec![0.25, -8.0, -1.0, 9.0], RowKind::Le, 0.0)
            .add_row(vec![0.5, -12.0, -0.5, 3.0], RowKind::Le, 0.0)
            .add_row(vec![0.0, 0.0, 1.0, 0.0], RowKind::Le, 1.0);
        let s = lp_solve(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 1.25).abs() < 1e-9);
    }

    fn random_packing(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> LinearProgram {
        let mut lp = LinearProgram::new((0..cols).map(|_| rng.gen()).collect());
        for _ in 0..rows {
            lp.add_row(
                (0..cols).map(|_| rng.gen::<f64>()).collect(),
                RowKind::Le,
                rng.gen::<f64>() + 0.1,
            );
        }
        lp
    }

    #[test]
    fn random_packings_certify_and_repeat() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let lp = random_packing(&mut rng, 8, 15);
            let a = lp_solve(&lp).unwrap();
            assert!(a.is_optimal());
            // Complementary slackness.
            for (c, &y) in lp.constraints.iter().zip(&a.duals) {
                let slack = c.rhs - dot(&c.coeffs, &a.x);
                assert!((slack * y).abs() <= 1e-6);
            }
            let b = lp_solve(&lp).unwrap();
            assert_eq!(a.basis, b.basis);
            assert_eq!(a.x, b.x);
        }
    }
}
