//! Single-rider first-accept selection.
//!
//! [`ptas_select`] guesses the index `k` with `w_k >= tau* > w_{k+1}` for the
//! optimal set's threshold `tau*`. Every driver with `w >= w_k` is then in
//! the optimum, nothing below `w_{k+1} / 3` is, and the band in between is
//! split into geometric weight buckets of ratio `1 + delta`. Within a bucket
//! only the count matters: the highest-probability members are taken.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::valuation::{best_subset, fa_value, sort_by_weight_desc, Driver, DriverView};

/// Default refusal threshold for `prod (|bucket| + 1)` in one band.
pub const DEFAULT_MAX_BUCKET_COUNT: u128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtasConfig {
    pub delta: f64,
    /// Largest number of count vectors enumerated for one band.
    pub max_bucket_count: u128,
}

impl PtasConfig {
    pub fn new(delta: f64) -> Result<Self> {
        let cfg = PtasConfig {
            delta,
            max_bucket_count: DEFAULT_MAX_BUCKET_COUNT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if self.max_bucket_count == 0 {
            return Err(Error::Parameter("max_bucket_count must be positive".into()));
        }
        Ok(())
    }

    /// Number of geometric buckets covering a factor-3 band.
    pub fn bucket_count(&self) -> usize {
        bucket_count(self.delta)
    }
}

fn bucket_count(delta: f64) -> usize {
    ((3f64.ln() / delta.ln_1p()).ceil() as usize).max(1)
}

/// Outcome of a single-rider selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen driver ids, ascending.
    pub set: Vec<usize>,
    pub value: f64,
    /// Number of candidate sets evaluated.
    pub candidates: u64,
}

/// The middle weight band `[lo, 3 lo]` of one guess `k`, split into buckets.
#[derive(Debug, Clone)]
pub(crate) struct Band {
    /// Drivers with weight at least `w_k`.
    pub high: Vec<Driver>,
    /// Bucket members sorted by probability descending, then id.
    pub buckets: Vec<Vec<Driver>>,
    /// Left endpoint of each bucket.
    #[cfg_attr(not(test), allow(dead_code))]
    pub floors: Vec<f64>,
}

impl Band {
    /// `sorted` is weight-descending; `k` is the 1-based guess.
    pub(crate) fn build(sorted: &[Driver], k: usize, delta: f64) -> Band {
        let w_k = sorted[k - 1].w;
        let w_next = sorted[k].w;
        let lo = w_next / 3.0;
        let high: Vec<Driver> = sorted.iter().filter(|d| d.w >= w_k).copied().collect();
        let mid = sorted.iter().filter(|d| d.w < w_k && d.w >= lo && d.w <= w_next);

        let (mut buckets, floors) = if lo > 0.0 {
            let count = bucket_count(delta);
            let ratio = 1.0 + delta;
            let floors: Vec<f64> = (0..count).map(|l| lo * ratio.powi(l as i32)).collect();
            let mut buckets = vec![Vec::new(); count];
            for d in mid {
                let l = (1..count)
                    .find(|&l| d.w < floors[l])
                    .map_or(count - 1, |l| l - 1);
                buckets[l].push(*d);
            }
            (buckets, floors)
        } else {
            // Only zero weights remain in the band.
            (vec![mid.copied().collect::<Vec<_>>()], vec![0.0])
        };
        for b in &mut buckets {
            b.sort_by(|x, y| y.p.total_cmp(&x.p).then(x.id.cmp(&y.id)));
        }
        Band {
            high,
            buckets,
            floors,
        }
    }

    pub(crate) fn count_vectors(&self) -> u128 {
        self.buckets
            .iter()
            .fold(1u128, |acc, b| acc.saturating_mul(b.len() as u128 + 1))
    }

    /// Best candidate of this band, ties kept at the first count vector.
    fn best(&self) -> (f64, Vec<Driver>, u64) {
        let mut counts = vec![0usize; self.buckets.len()];
        let mut set: Vec<Driver> = Vec::with_capacity(self.high.len() + 16);
        let mut best_val = f64::NEG_INFINITY;
        let mut best_set = Vec::new();
        let mut evaluated = 0u64;
        loop {
            set.clear();
            set.extend_from_slice(&self.high);
            for (b, &c) in self.buckets.iter().zip(&counts) {
                set.extend_from_slice(&b[..c]);
            }
            let v = fa_value(&set);
            evaluated += 1;
            if v > best_val {
                best_val = v;
                best_set.clone_from(&set);
            }
            // Odometer over 0..=|B_l| per bucket.
            let mut pos = 0;
            loop {
                if pos == counts.len() {
                    return (best_val, best_set, evaluated);
                }
                if counts[pos] < self.buckets[pos].len() {
                    counts[pos] += 1;
                    break;
                }
                counts[pos] = 0;
                pos += 1;
            }
        }
    }
}

fn sorted_drivers(view: &[Driver]) -> Vec<Driver> {
    let mut sorted = view.to_vec();
    sort_by_weight_desc(&mut sorted);
    sorted
}

fn largest_band(sorted: &[Driver], delta: f64) -> u128 {
    (1..sorted.len())
        .map(|k| Band::build(sorted, k, delta).count_vectors())
        .max()
        .unwrap_or(1)
}

/// Approximately maximizes the FA value over subsets of `view`.
///
/// The result is within a factor `1 - delta` of the optimum.
pub fn ptas_select(view: &[Driver], cfg: &PtasConfig) -> Result<Selection> {
    cfg.validate()?;
    if view.is_empty() {
        return Ok(Selection {
            set: Vec::new(),
            value: 0.0,
            candidates: 0,
        });
    }
    let sorted = sorted_drivers(view);
    let n = sorted.len();
    let bands: Vec<Band> = (1..n).map(|k| Band::build(&sorted, k, cfg.delta)).collect();
    if let Some(worst) = bands.iter().map(Band::count_vectors).max() {
        if worst > cfg.max_bucket_count {
            return Err(Error::EnumerationCap {
                candidates: worst,
                cap: cfg.max_bucket_count,
                suggested_delta: suggest_delta(&sorted, cfg),
            });
        }
    }

    // Full set and singletons first, then bands in order of k.
    let mut best_val = fa_value(&sorted);
    let mut best_set = sorted.clone();
    let mut candidates = 1u64 + n as u64;
    for d in &sorted {
        let v = d.w * d.p;
        if v > best_val {
            best_val = v;
            best_set = vec![*d];
        }
    }
    let results: Vec<(f64, Vec<Driver>, u64)> = bands.par_iter().map(Band::best).collect();
    for (v, set, count) in results {
        candidates += count;
        if v > best_val {
            best_val = v;
            best_set = set;
        }
    }

    let mut set: Vec<usize> = best_set.iter().map(|d| d.id).collect();
    set.sort_unstable();
    Ok(Selection {
        set,
        value: best_val,
        candidates,
    })
}

fn suggest_delta(sorted: &[Driver], cfg: &PtasConfig) -> f64 {
    let mut d = cfg.delta;
    loop {
        d = (d * 2.0).min(0.99);
        if d >= 0.99 || largest_band(sorted, d) <= cfg.max_bucket_count {
            return d;
        }
    }
}

/// Exact FA optimum by enumerating all subsets (at most 25 drivers).
///
/// Ties go to the lexicographically smallest sorted id list.
pub fn brute_single(view: &[Driver]) -> Result<Selection> {
    let (value, set) = best_subset(view, fa_value)?;
    Ok(Selection {
        set,
        value,
        candidates: 1u64 << view.len(),
    })
}

/// Best subset of a proposed set, within `1 - delta` of the FA closure.
pub fn prune(proposed: &DriverView, cfg: &PtasConfig) -> Result<Selection> {
    ptas_select(proposed, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_uniform;
    use crate::valuation::{closure_value, fa_threshold, ValuationKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example1() -> DriverView {
        DriverView::from_pairs(&[(1.0, 0.9), (0.2, 0.9), (1.0, 0.5)])
    }

    fn random_view(rng: &mut ChaCha8Rng, n: usize) -> DriverView {
        (0..n).map(|j| Driver::new(j, rng.gen(), rng.gen())).collect()
    }

    fn cfg(delta: f64) -> PtasConfig {
        PtasConfig::new(delta).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PtasConfig::new(0.0).is_err());
        assert!(PtasConfig::new(1.0).is_err());
        assert!(PtasConfig::new(f64::NAN).is_err());
        assert_eq!(cfg(0.5).bucket_count(), 3);
        assert_eq!(cfg(0.1).bucket_count(), 12);
    }

    #[test]
    fn brute_example1() {
        let s = brute_single(&example1()).unwrap();
        assert_eq!(s.set, vec![0, 2]);
        assert!((s.value - 0.95).abs() < 1e-12);
        let one = brute_single(&DriverView::from_pairs(&[(0.3, 0.4)])).unwrap();
        assert_eq!(one.set, vec![0]);
    }

    #[test]
    fn ptas_example2() {
        let eps = 0.01;
        let v = DriverView::from_pairs(&[(4.0, eps), (1.0 + eps, eps), (1.0, 1.0)]);
        let opt = fa_value(&v.select(&[0, 2]));
        let got = ptas_select(&v, &cfg(0.05)).unwrap();
        assert!(got.value >= 0.95 * opt);
        assert!((fa_value(&v.restrict(&got.set)) - got.value).abs() < 1e-15);
    }

    #[test]
    fn ptas_single_driver() {
        let got = ptas_select(&DriverView::from_pairs(&[(0.6, 0.5)]), &cfg(0.1)).unwrap();
        assert_eq!(got.set, vec![0]);
        assert_eq!(got.value, 0.3);
    }

    #[test]
    fn ptas_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: DriverView = (0..9).map(|j| Driver::new(j, 1.0, rng.gen())).collect();
        let got = ptas_select(&v, &cfg(0.1)).unwrap();
        let full = 1.0 - v.iter().map(|d| 1.0 - d.p).product::<f64>();
        assert!(got.value >= 0.9 * full);
    }

    #[test]
    fn prune_examples() {
        let got = prune(&example1().select(&[0, 1]), &cfg(0.1)).unwrap();
        assert_eq!(got.set, vec![0]);
        assert!((got.value - 0.9).abs() < 1e-12);
        let empty = prune(&DriverView::default(), &cfg(0.1)).unwrap();
        assert!(empty.set.is_empty() && empty.value == 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let v = random_view(&mut rng, 12);
            let got = prune(&v, &cfg(0.1)).unwrap();
            let (closure, _) = closure_value(&v, ValuationKind::Fa).unwrap();
            assert!(got.value >= 0.9 * closure);
        }
    }

    #[test]
    fn ptas_matches_brute_on_random_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let v = random_view(&mut rng, 10);
            let got = ptas_select(&v, &cfg(0.1)).unwrap();
            let opt = brute_single(&v).unwrap();
            assert!(got.value >= 0.9 * opt.value);
            assert!(got.value <= opt.value + 1e-12);
        }
    }

    #[test]
    fn ptas_handles_rows_of_an_instance() {
        let inst = gen_uniform(2, 8, 1).unwrap();
        for i in 0..2 {
            let got = ptas_select(&inst.row_view(i), &cfg(0.2)).unwrap();
            assert!(got.set.iter().all(|&j| j < 8));
        }
    }

    #[test]
    fn optimal_set_has_three_way_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..500 {
            let n = 4 + trial % 9;
            let v = random_view(&mut rng, n);
            let opt = brute_single(&v).unwrap();
            let tau = fa_threshold(&v.restrict(&opt.set)).tau;
            for d in v.iter() {
                let inside = opt.set.contains(&d.id);
                if d.w > tau + 1e-9 && d.p > 0.0 {
                    assert!(inside, "driver {d:?} above tau {tau} left out");
                }
                if inside {
                    assert!(d.w >= tau / 3.0 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn within_bucket_exchange() {
        // With bucket weights rounded to their floor, swapping a selected
        // member for a more likely unselected one helps whenever the
        // selected member was worth adding.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        for _ in 0..5000 {
            let n = 6 + rng.gen_range(0..5);
            let sorted = sorted_drivers(&random_view(&mut rng, n));
            let k = rng.gen_range(1..n);
            let band = Band::build(&sorted, k, 0.5);
            let rounded: Vec<Vec<Driver>> = band
                .buckets
                .iter()
                .zip(&band.floors)
                .map(|(b, &f)| b.iter().map(|d| Driver::new(d.id, f, d.p)).collect())
                .collect();
            for (l, bucket) in rounded.iter().enumerate() {
                if bucket.len() < 2 {
                    continue;
                }
                let mut base = band.high.clone();
                for (other, members) in rounded.iter().enumerate() {
                    if other != l {
                        let take = rng.gen_range(0..=members.len());
                        base.extend_from_slice(&members[..take]);
                    }
                }
                let chosen: Vec<bool> = bucket.iter().map(|_| rng.gen()).collect();
                for s in (0..bucket.len()).filter(|&x| chosen[x]) {
                    for u in (0..bucket.len()).filter(|&x| !chosen[x]) {
                        if bucket[u].p < bucket[s].p {
                            continue;
                        }
                        let mut rest = base.clone();
                        rest.extend((0..bucket.len()).filter(|&x| chosen[x] && x != s).map(|x| bucket[x]));
                        if fa_threshold(&rest).marginal(bucket[s].w, bucket[s].p) < 0.0 {
                            continue;
                        }
                        let mut with_s = rest.clone();
                        with_s.push(bucket[s]);
                        let mut with_u = rest;
                        with_u.push(bucket[u]);
                        assert!(fa_value(&with_u) >= fa_value(&with_s) - 1e-12);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 200, "only {checked} exchanges checked");
    }

    #[test]
    fn candidate_count_shrinks_on_coarser_nested_grid() {
        // Each 1 + delta squares the previous one, so every coarse bucket
        // edge is also a fine edge.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let v = random_view(&mut rng, 12);
            let mut prev = u64::MAX;
            for delta in [0.125, 0.265625, 0.601806640625] {
                let c = ptas_select(&v, &cfg(delta)).unwrap().candidates;
                assert!(c <= prev, "delta {delta}: {c} > {prev}");
                prev = c;
            }
        }
    }

    #[test]
    fn enumeration_cap_suggests_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let v = random_view(&mut rng, 20);
        let tight = PtasConfig {
            delta: 0.05,
            max_bucket_count: 50,
        };
        match ptas_select(&v, &tight) {
            Err(Error::EnumerationCap {
                suggested_delta, ..
            }) => {
                assert!(suggested_delta > 0.05);
                let retry = PtasConfig {
                    delta: suggested_delta,
                    ..tight
                };
                if suggested_delta < 0.99 {
                    assert!(ptas_select(&v, &retry).is_ok());
                }
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn brute_cap() {
        let big: DriverView = (0..26).map(|j| Driver::new(j, 0.5, 0.5)).collect();
        assert!(brute_single(&big).is_err());
    }
}
