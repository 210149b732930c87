//! Closed-form valuations of a rider's notification set.
//!
//! For a fixed rider, each notified driver `j` has weight `w_j` and accepts
//! independently with probability `p_j`.
//!
//! * **First accept (FA)**: the rider gets a uniformly random acceptor.
//!   `F(S) = sum_j w_j p_j * int_0^1 prod_{k != j} (1 - p_k + p_k t) dt`.
//! * **Best accept (BA)**: the rider gets the best acceptor.
//! * **MNL**: the surrogate `sum_j w_j p_j / (1 + sum_k p_k)`, which
//!   sandwiches FA as `mnl <= fa <= 2 mnl`.
//!
//! FA is evaluated exactly by expanding two polynomials in `t`,
//! `g(t) = prod_k (1 - p_k + p_k t)` and
//! `h(t) = sum_j w_j p_j prod_{k != j} (1 - p_k + p_k t)`, one driver at a
//! time: `h <- h (1 - p_d + p_d t) + w_d p_d g`, `g <- g (1 - p_d + p_d t)`.
//! Both have nonnegative coefficients, so integration has no cancellation.

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One driver as seen by a fixed rider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    /// Index of the driver in the instance.
    pub id: usize,
    pub w: f64,
    pub p: f64,
}

impl Driver {
    pub fn new(id: usize, w: f64, p: f64) -> Self {
        Driver { id, w, p }
    }
}

/// A rider's view of a set of distinct drivers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriverView(Vec<Driver>);

impl DriverView {
    pub fn new(drivers: Vec<Driver>) -> Self {
        DriverView(drivers)
    }

    /// View built from `(w, p)` pairs, numbering drivers `0..len`.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        pairs
            .iter()
            .enumerate()
            .map(|(id, &(w, p))| Driver::new(id, w, p))
            .collect()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.0.iter().map(|d| d.id).collect()
    }

    /// The sub-view at the given positions of this view.
    pub fn select(&self, positions: &[usize]) -> DriverView {
        positions.iter().map(|&k| self.0[k]).collect()
    }

    /// The sub-view holding the drivers with the given ids.
    pub fn restrict(&self, ids: &[usize]) -> DriverView {
        self.0.iter().filter(|d| ids.contains(&d.id)).copied().collect()
    }

    pub fn into_inner(self) -> Vec<Driver> {
        self.0
    }
}

impl Deref for DriverView {
    type Target = [Driver];

    fn deref(&self) -> &[Driver] {
        &self.0
    }
}

impl FromIterator<Driver> for DriverView {
    fn from_iter<I: IntoIterator<Item = Driver>>(iter: I) -> Self {
        DriverView(iter.into_iter().collect())
    }
}

impl From<Vec<Driver>> for DriverView {
    fn from(v: Vec<Driver>) -> Self {
        DriverView(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValuationKind {
    Fa,
    Ba,
    Mnl,
}

/// Contention protocols that can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Fa,
    Ba,
}

impl From<Protocol> for ValuationKind {
    fn from(p: Protocol) -> Self {
        match p {
            Protocol::Fa => ValuationKind::Fa,
            Protocol::Ba => ValuationKind::Ba,
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Fa => "fa",
            Protocol::Ba => "ba",
        })
    }
}

pub fn value(kind: ValuationKind, view: &[Driver]) -> f64 {
    match kind {
        ValuationKind::Fa => fa_value(view),
        ValuationKind::Ba => ba_value(view),
        ValuationKind::Mnl => mnl_value(view),
    }
}

/// Coefficients of `g` and `h` (lowest degree first).
struct FaPolys {
    g: Vec<f64>,
    h: Vec<f64>,
}

impl FaPolys {
    fn build(view: &[Driver]) -> Self {
        let k = view.len();
        let mut g = Vec::with_capacity(k + 1);
        let mut h = Vec::with_capacity(k + 1);
        g.push(1.0);
        h.push(0.0);
        for d in view {
            let (q, p, wp) = (1.0 - d.p, d.p, d.w * d.p);
            // h and g currently have the same length; h gains w p g before g changes.
            let len = g.len();
            h.push(0.0);
            for r in (0..len).rev() {
                h[r + 1] += p * h[r];
                h[r] = q * h[r] + wp * g[r];
            }
            g.push(0.0);
            for r in (0..len).rev() {
                g[r + 1] += p * g[r];
                g[r] *= q;
            }
        }
        FaPolys { g, h }
    }
}

/// `int_0^1 sum_r c_r t^r dt`.
fn integrate(c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .map(|(r, &x)| x / (r as f64 + 1.0))
        .sum()
}

/// Exact first-accept value, `O(|S|^2)`.
pub fn fa_value(view: &[Driver]) -> f64 {
    if view.is_empty() {
        return 0.0;
    }
    integrate(&FaPolys::build(view).h)
}

/// Exact best-accept value, `O(|S| log |S|)`.
pub fn ba_value(view: &[Driver]) -> f64 {
    let mut sorted: Vec<Driver> = view.to_vec();
    sort_by_weight_desc(&mut sorted);
    ba_value_sorted(&sorted)
}

/// Best-accept value of drivers already sorted by weight, descending.
pub fn ba_value_sorted(sorted: &[Driver]) -> f64 {
    let mut reach = 1.0;
    let mut total = 0.0;
    for d in sorted {
        total += reach * d.p * d.w;
        reach *= 1.0 - d.p;
    }
    total
}

/// Weight descending, ties by driver id.
pub fn sort_by_weight_desc(v: &mut [Driver]) {
    v.sort_by(|a, b| b.w.total_cmp(&a.w).then(a.id.cmp(&b.id)));
}

pub fn mnl_value(view: &[Driver]) -> f64 {
    if view.is_empty() {
        return 0.0;
    }
    let num: f64 = view.iter().map(|d| d.w * d.p).sum();
    let den: f64 = 1.0 + view.iter().map(|d| d.p).sum::<f64>();
    num / den
}

/// Break-even weight for adding a driver to a set under FA.
///
/// Adding `d` changes the FA value by `p_d (w_d b - a)`, so the marginal is
/// nonnegative exactly when `w_d >= tau = a / b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParts {
    /// `int_0^1 (1 - t) h(t) dt`
    pub a: f64,
    /// `int_0^1 g(t) dt`, always positive.
    pub b: f64,
    pub tau: f64,
}

impl ThresholdParts {
    /// FA marginal of adding a driver with the given weight and probability.
    pub fn marginal(&self, w: f64, p: f64) -> f64 {
        p * (w * self.b - self.a)
    }
}

pub fn fa_threshold(view: &[Driver]) -> ThresholdParts {
    let FaPolys { g, h } = FaPolys::build(view);
    let a: f64 = h
        .iter()
        .enumerate()
        .map(|(r, &x)| x / ((r as f64 + 1.0) * (r as f64 + 2.0)))
        .sum();
    let b = integrate(&g);
    ThresholdParts { a, b, tau: a / b }
}

/// Largest view accepted by the exhaustive subset searches.
pub const MAX_ENUMERATION: usize = 25;

/// Maximizes `f` over all subsets of `view` by enumeration.
///
/// Returns the best value and the chosen driver ids (sorted). Values within
/// `1e-12` of each other count as ties, broken towards the
/// lexicographically smallest sorted id list.
pub fn best_subset<F>(view: &[Driver], mut f: F) -> Result<(f64, Vec<usize>)>
where
    F: FnMut(&[Driver]) -> f64,
{
    const TIE: f64 = 1e-12;
    let k = view.len();
    if k > MAX_ENUMERATION {
        return Err(Error::SizeCap {
            size: k,
            cap: MAX_ENUMERATION,
        });
    }
    let mut best_val = f(&[]);
    let mut best_ids: Vec<usize> = Vec::new();
    let mut buf = Vec::with_capacity(k);
    let mut ids = Vec::with_capacity(k);
    for mask in 1u32..(1u32 << k) {
        buf.clear();
        buf.extend((0..k).filter(|&b| mask >> b & 1 == 1).map(|b| view[b]));
        let v = f(&buf);
        if v > best_val + TIE {
            best_val = v;
            best_ids = sorted_ids(&buf);
        } else if v >= best_val - TIE {
            ids.clear();
            ids.extend(buf.iter().map(|d| d.id));
            ids.sort_unstable();
            if ids < best_ids {
                best_val = best_val.max(v);
                best_ids.clone_from(&ids);
            }
        }
    }
    Ok((best_val, best_ids))
}

fn sorted_ids(v: &[Driver]) -> Vec<usize> {
    let mut ids: Vec<usize> = v.iter().map(|d| d.id).collect();
    ids.sort_unstable();
    ids
}

/// Downward monotone closure `max_{S' in S} F(S')` by enumeration, with an argmax.
pub fn closure_value(view: &[Driver], kind: ValuationKind) -> Result<(f64, Vec<usize>)> {
    best_subset(view, |s| value(kind, s))
}

/// Each driver kept independently with probability `inclusion[k]` and then
/// accepting with `p` is the same as accepting with `inclusion[k] * p`.
pub fn thinned(view: &[Driver], inclusion: &[f64]) -> DriverView {
    view.iter()
        .zip(inclusion)
        .map(|(d, &x)| Driver::new(d.id, d.w, d.p * x))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
}

/// Monte Carlo estimate of a contention protocol's expected payoff.
pub fn simulate(view: &[Driver], protocol: Protocol, trials: u64, seed: u64) -> Result<SimEstimate> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be >= 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for t in 1..=trials {
        let payoff = match protocol {
            Protocol::Fa => {
                // Reservoir pick of one acceptor, uniform over acceptors.
                let mut seen = 0u32;
                let mut pick = 0.0;
                for d in view {
                    if rng.gen::<f64>() < d.p {
                        seen += 1;
                        if rng.gen_range(0..seen) == 0 {
                            pick = d.w;
                        }
                    }
                }
                pick
            }
            Protocol::Ba => {
                let mut best = 0.0f64;
                for d in view {
                    if rng.gen::<f64>() < d.p {
                        best = best.max(d.w);
                    }
                }
                best
            }
        };
        let delta = payoff - mean;
        mean += delta / t as f64;
        m2 += delta * (payoff - mean);
    }
    let var = if trials > 1 { m2 / (trials - 1) as f64 } else { 0.0 };
    Ok(SimEstimate {
        mean,
        stderr: (var / trials as f64).sqrt(),
        trials,
    })
}
