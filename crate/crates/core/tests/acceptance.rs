//! End-to-end acceptance checks. Run with
//! `cargo test -p dispatchkit --test acceptance`; prints one line per check
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use dispatchkit::ba_multi::{
    ba_continuous_greedy, ba_demand_oracle, ba_greedy, ba_homogeneous_solve, ba_multilinear, CgConfig,
};
use dispatchkit::baselines::{ed_solve, fa_greedy, opt_bruteforce, EdWeighting, OracleBudget};
use dispatchkit::fa_multi::{demand_oracle_mnl, fa_multi_solve, mnl_knapsack_fptas, FaMultiConfig};
use dispatchkit::fa_single::{brute_single, ptas_select, PtasConfig};
use dispatchkit::instance::dyadic_instance;
use dispatchkit::rng::{derive_seed, seeded, DetRng};
use dispatchkit::valuation::thinned;
use dispatchkit::{
    ba_value, fa_threshold, fa_value, gen_hardness, gen_uniform, mnl_value, simulate, Driver, DriverView,
    Instance, Protocol, ThreePartitionSpec, ValuationKind,
};

const MASTER: u64 = 0x5eed;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_view(rng: &mut DetRng, n: usize) -> DriverView {
    (0..n).map(|j| Driver::new(j, rng.gen(), rng.gen())).collect()
}

/// Independent BA value: heaviest accepting driver wins.
fn ba_reference(drivers: &[Driver]) -> f64 {
    let mut d = drivers.to_vec();
    d.sort_by(|a, b| b.w.total_cmp(&a.w));
    let mut none_yet = 1.0;
    let mut total = 0.0;
    for x in d {
        total += none_yet * x.p * x.w;
        none_yet *= 1.0 - x.p;
    }
    total
}

fn mnl_reference(drivers: &[Driver]) -> f64 {
    let num: f64 = drivers.iter().map(|d| d.w * d.p).sum();
    let den: f64 = 1.0 + drivers.iter().map(|d| d.p).sum::<f64>();
    num / den
}

fn subset(view: &[Driver], mask: u32) -> Vec<Driver> {
    view.iter()
        .enumerate()
        .filter(|(k, _)| mask >> k & 1 == 1)
        .map(|(_, d)| *d)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn closed_form_examples() -> Outcome {
    let view = DriverView::from_pairs(&[(1.0, 0.9), (0.2, 0.9), (1.0, 0.5)]);
    let sel = |ids: &[usize]| view.restrict(ids);
    let checks = [
        (fa_value(&sel(&[0])), 0.9),
        (fa_value(&sel(&[0, 1])), 0.594),
        (fa_value(&sel(&[0, 2])), 0.95),
        (fa_value(&sel(&[0, 1, 2])), 0.671),
        (ba_value(&sel(&[0, 1])), 0.918),
        (ba_value(&sel(&[1])), 0.18),
    ];
    let worst = checks.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("max error {worst:.2e}"))
}

fn mnl_sandwich() -> Outcome {
    let violations: usize = (0..100u64)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seeded(derive_seed(MASTER ^ 2, chunk));
            let mut bad = 0;
            for _ in 0..1000 {
                let n = rng.gen_range(1..=15);
                let v = random_view(&mut rng, n);
                let (fa, mnl) = (fa_value(&v), mnl_value(&v));
                if fa < mnl - 1e-10 || fa > 2.0 * mnl + 1e-10 {
                    bad += 1;
                }
            }
            bad
        })
        .sum();
    outcome(violations == 0, format!("100000 draws, {violations} violations"))
}

fn threshold_laws() -> Outcome {
    let (sign_bad, cap_bad, cap_checked): (usize, usize, usize) = (0..100u64)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seeded(derive_seed(MASTER ^ 3, chunk));
            let (mut sign_bad, mut cap_bad, mut checked) = (0, 0, 0);
            for _ in 0..1000 {
                let n = rng.gen_range(1..=12);
                let v = random_view(&mut rng, n);
                let d = Driver::new(n, rng.gen(), rng.gen_range(1e-3..=1.0));
                let parts = fa_threshold(&v);
                let mut with = v.to_vec();
                with.push(d);
                let marginal = fa_value(&with) - fa_value(&v);
                // At an exact tie the marginal is zero up to rounding.
                let above = d.w > parts.tau + 1e-9 && marginal < -1e-12;
                let below = d.w < parts.tau - 1e-9 && marginal > 1e-12;
                if above || below {
                    sign_bad += 1;
                }

                let size = rng.gen_range(0..=12);
                let t = random_view(&mut rng, size);
                let tau_t = fa_threshold(&t).tau;
                let d = Driver::new(100, rng.gen_range(tau_t.min(1.0)..=1.0), rng.gen_range(1e-3..=1.0));
                if d.w >= tau_t {
                    checked += 1;
                    let mut with = t.to_vec();
                    with.push(d);
                    if fa_threshold(&with).tau > 3.0 * d.w + 1e-12 {
                        cap_bad += 1;
                    }
                }
            }
            (sign_bad, cap_bad, checked)
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    outcome(
        sign_bad == 0 && cap_bad == 0 && cap_checked >= 100_000,
        format!("sign violations {sign_bad}/100000, cap violations {cap_bad}/{cap_checked}"),
    )
}

fn ptas_guarantee() -> Outcome {
    let cfg = PtasConfig::new(0.1).unwrap();
    let ratios: Vec<f64> = (0..1000u64)
        .into_par_iter()
        .map(|k| {
            let inst = gen_uniform(1, 10, derive_seed(MASTER ^ 4, k)).unwrap();
            let view = inst.row_view(0);
            let opt = brute_single(&view).unwrap().value;
            let got = ptas_select(&view, &cfg).unwrap().value;
            if opt == 0.0 {
                1.0
            } else {
                got / opt
            }
        })
        .collect();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = mean(&ratios);
    outcome(min >= 0.9 && avg >= 0.99, format!("min ratio {min:.4}, mean {avg:.5}"))
}

fn batch_instances() -> Vec<Instance> {
    (0..200u64)
        .map(|k| gen_uniform(3, 9, derive_seed(MASTER ^ 5, k)).unwrap())
        .collect()
}

fn multi_rider_fa(instances: &[Instance]) -> Outcome {
    let floor = 0.25 * (1.0 - 0.1) - 0.05;
    let ratios: Vec<f64> = instances
        .par_iter()
        .enumerate()
        .map(|(k, inst)| {
            let cfg = FaMultiConfig {
                eps: 0.05,
                delta: 0.1,
                seed: k as u64,
                repetitions: 20,
                ..FaMultiConfig::default()
            };
            let got = fa_multi_solve(inst, &cfg).unwrap().welfare;
            let opt = opt_bruteforce(inst, ValuationKind::Fa, OracleBudget::default()).unwrap().welfare;
            got / opt
        })
        .collect();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = mean(&ratios);
    outcome(
        min >= floor && avg >= 0.95,
        format!("min ratio {min:.4} (floor {floor:.3}), mean {avg:.4}"),
    )
}

fn ba_solvers(instances: &[Instance]) -> Outcome {
    let rows: Vec<[f64; 5]> = instances
        .par_iter()
        .enumerate()
        .map(|(k, inst)| {
            let seed = k as u64;
            let opt_fa = opt_bruteforce(inst, ValuationKind::Fa, OracleBudget::default()).unwrap().welfare;
            let opt_ba = opt_bruteforce(inst, ValuationKind::Ba, OracleBudget::default()).unwrap().welfare;
            let cg = ba_continuous_greedy(
                inst,
                &CgConfig {
                    steps: 100,
                    seed,
                    repetitions: 20,
                },
            )
            .unwrap()
            .dispatch
            .welfare;
            let ed = ed_solve(inst, EdWeighting::Expected).unwrap().assignment;
            [
                cg / opt_ba,
                ba_greedy(inst, seed).welfare / opt_ba,
                inst.welfare(&ed, ValuationKind::Ba) / opt_ba,
                fa_greedy(inst, seed).welfare / opt_fa,
                inst.welfare(&ed, ValuationKind::Fa) / opt_fa,
            ]
        })
        .collect();
    let col = |c: usize| mean(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    let (cg, greedy, ed_ba, fa_g, ed_fa) = (col(0), col(1), col(2), col(3), col(4));
    let pass = (0.96..=1.0).contains(&cg)
        && (0.93..=1.0).contains(&greedy)
        && ed_ba < greedy
        && ed_fa < fa_g;
    outcome(
        pass,
        format!("BA: cg {cg:.4}, greedy {greedy:.4}, ed {ed_ba:.4}; FA: greedy {fa_g:.4}, ed {ed_fa:.4}"),
    )
}

fn ba_demand() -> Outcome {
    let eps = 0.05;
    let results: Vec<(f64, Duration)> = (0..500u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeded(derive_seed(MASTER ^ 7, k));
            let view = random_view(&mut rng, 12);
            let prices: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..0.3)).collect();
            let start = Instant::now();
            let choice = ba_demand_oracle(&view, &prices, eps).unwrap();
            let took = start.elapsed();
            let net = |s: &[Driver]| ba_reference(s) - s.iter().map(|d| prices[d.id]).sum::<f64>();
            let best = (0u32..1 << 12).map(|mask| net(&subset(&view, mask))).fold(f64::NEG_INFINITY, f64::max);
            let realized = net(&view.restrict(&choice.set));
            (realized - (best - eps), took)
        })
        .collect();
    let slack = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let slowest = results.iter().map(|r| r.1).max().unwrap();
    outcome(
        slack >= 0.0 && slowest < Duration::from_millis(50),
        format!("min slack over eps bound {slack:.4}, slowest call {:.2} ms", slowest.as_secs_f64() * 1e3),
    )
}

fn homogeneous_ba() -> Outcome {
    let worst = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let base = gen_uniform(3, 8, derive_seed(MASTER ^ 8, k)).unwrap();
            let inst = Instance::new(base.weights().to_vec(), vec![vec![0.3; 8]; 3]).unwrap();
            let got = ba_homogeneous_solve(&inst).unwrap().welfare;
            let opt = opt_bruteforce(&inst, ValuationKind::Ba, OracleBudget::default()).unwrap().welfare;
            (got - opt).abs()
        })
        .reduce(|| 0.0, f64::max);
    outcome(worst <= 1e-9, format!("max |matching - opt| {worst:.2e}"))
}

fn hardness() -> Outcome {
    let spec = ThreePartitionSpec {
        a: vec![4, 4, 7, 4, 5, 6, 5, 5, 5],
        target: 15,
        m: 3,
    };
    let (inst, w) = gen_hardness(&spec).unwrap();
    let yes = opt_bruteforce(&inst, ValuationKind::Fa, OracleBudget::default()).unwrap().welfare;
    let mut broken = spec.a.clone();
    broken[2] = 6;
    let no_inst = dyadic_instance(3, &broken).unwrap();
    let no = opt_bruteforce(&no_inst, ValuationKind::Fa, OracleBudget::default()).unwrap().welfare;
    outcome(
        (yes - w).abs() <= 1e-12 && no < w,
        format!("W = {w}, yes-instance opt {yes}, perturbed opt {no} (gap {:.2e})", w - no),
    )
}

fn monte_carlo() -> Outcome {
    let worst = (0..50u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeded(derive_seed(MASTER ^ 10, k));
            let n = rng.gen_range(1..=10);
            let view = random_view(&mut rng, n);
            let mut worst: f64 = 0.0;
            for (protocol, exact) in [(Protocol::Fa, fa_value(&view)), (Protocol::Ba, ba_value(&view))] {
                let est = simulate(&view, protocol, 1_000_000, derive_seed(k, protocol as u64)).unwrap();
                let z = if est.stderr > 0.0 {
                    (est.mean - exact).abs() / est.stderr
                } else if (est.mean - exact).abs() <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    outcome(worst <= 4.0, format!("worst deviation {worst:.2} standard errors"))
}

fn fptas_oracles() -> Outcome {
    let eps = 0.05;
    let (knap_bad, demand_bad): (usize, usize) = (0..500u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeded(derive_seed(MASTER ^ 11, k));
            let view = random_view(&mut rng, 12);
            let costs: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..0.5)).collect();
            let budget = rng.gen_range(0.0..2.0);
            let cost = |s: &[Driver]| s.iter().map(|d| costs[d.id]).sum::<f64>();
            let sets: Vec<Vec<Driver>> = (0u32..1 << 12).map(|mask| subset(&view, mask)).collect();

            let best_feasible = sets
                .iter()
                .filter(|s| cost(s) <= budget)
                .map(|s| mnl_reference(s))
                .fold(0.0, f64::max);
            let picked = view.restrict(&mnl_knapsack_fptas(&view, &costs, budget, eps).unwrap());
            let knap_ok = cost(&picked) <= budget + 1e-12 && mnl_reference(&picked) >= (1.0 - eps) * best_feasible - 1e-12;

            let best_net = sets.iter().map(|s| mnl_reference(s) - cost(s)).fold(f64::NEG_INFINITY, f64::max);
            let chosen = view.restrict(&demand_oracle_mnl(&view, &costs, eps).unwrap());
            let demand_ok = mnl_reference(&chosen) - cost(&chosen) >= best_net - eps - 1e-12;
            (usize::from(!knap_ok), usize::from(!demand_ok))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    outcome(
        knap_bad == 0 && demand_bad == 0,
        format!("knapsack violations {knap_bad}/500, demand violations {demand_bad}/500"),
    )
}

fn bernoulli_composition() -> Outcome {
    let worst = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeded(derive_seed(MASTER ^ 12, k));
            let n = rng.gen_range(1..=10);
            let view = random_view(&mut rng, n);
            let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let (mut fa, mut ba) = (0.0, 0.0);
            for mask in 0u32..1 << n {
                let weight: f64 = (0..n)
                    .map(|j| if mask >> j & 1 == 1 { x[j] } else { 1.0 - x[j] })
                    .product();
                let s = subset(&view, mask);
                fa += weight * fa_value(&s);
                ba += weight * ba_reference(&s);
            }
            let t = thinned(&view, &x);
            [
                (fa_value(&t) - fa).abs(),
                (ba_value(&t) - ba).abs(),
                (ba_multilinear(&view, &x) - ba).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    outcome(worst <= 1e-10, format!("max error {worst:.2e}"))
}

fn main() -> ExitCode {
    let instances = batch_instances();
    let checks: Vec<(&str, Duration, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("closed-form example values", Duration::from_millis(1), Box::new(closed_form_examples)),
        ("mnl sandwich", Duration::from_secs(30), Box::new(mnl_sandwich)),
        ("threshold laws", Duration::from_secs(60), Box::new(threshold_laws)),
        ("single-rider ptas", Duration::from_secs(300), Box::new(ptas_guarantee)),
        ("multi-rider fa", Duration::from_secs(1800), Box::new(|| multi_rider_fa(&instances))),
        ("ba solvers", Duration::from_secs(1200), Box::new(|| ba_solvers(&instances))),
        ("ba demand oracle", Duration::from_secs(600), Box::new(ba_demand)),
        ("homogeneous ba", Duration::from_secs(300), Box::new(homogeneous_ba)),
        ("hardness reduction", Duration::from_secs(60), Box::new(hardness)),
        ("monte carlo concordance", Duration::from_secs(300), Box::new(monte_carlo)),
        ("fptas oracles", Duration::from_secs(600), Box::new(fptas_oracles)),
        ("bernoulli composition", Duration::from_secs(600), Box::new(bernoulli_composition)),
    ];
    let mut failed = 0;
    for (k, (name, limit, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let pass = out.pass && took <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.3} s, limit {:.3} s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            out.detail,
            took.as_secs_f64(),
            limit.as_secs_f64()
        );
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
