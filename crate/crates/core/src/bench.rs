//! Experiment harness: algorithm dispatch by name, batch runs with ratios
//! against an oracle, CSV output and ratio histograms.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ba_multi::{
    ba_config_lp_bound, ba_continuous_greedy, ba_greedy, ba_homogeneous_solve, BaLpConfig, CgConfig,
};
use crate::baselines::{ed_solve, fa_greedy, opt_bruteforce, state_count, EdWeighting, OracleBudget};
use crate::error::{Error, Result};
use crate::fa_multi::{fa_multi_solve, solve_config_lp, FaMultiConfig, PricingMode};
use crate::fa_single::{ptas_select, PtasConfig};
use crate::instance::{gen_uniform, Assignment, Instance};
use crate::rng::derive_seed;
use crate::valuation::{Protocol, ValuationKind};

/// Environment variable capping the worker pool of [`bench_run`].
pub const THREADS_ENV: &str = "DISPATCHKIT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    FaSinglePtas,
    FaMulti,
    FaGreedy,
    OptFa,
    Ed,
    /// Exclusive dispatch scored against the BA oracle.
    EdBa,
    BaHomog,
    BaGreedy,
    BaCg,
    BaLpBound,
    OptBa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 11] = [
        Algorithm::FaSinglePtas,
        Algorithm::FaMulti,
        Algorithm::FaGreedy,
        Algorithm::OptFa,
        Algorithm::Ed,
        Algorithm::EdBa,
        Algorithm::BaHomog,
        Algorithm::BaGreedy,
        Algorithm::BaCg,
        Algorithm::BaLpBound,
        Algorithm::OptBa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FaSinglePtas => "fa-single-ptas",
            Algorithm::FaMulti => "fa-multi",
            Algorithm::FaGreedy => "fa-greedy",
            Algorithm::OptFa => "opt-fa",
            Algorithm::Ed => "ed",
            Algorithm::EdBa => "ed-ba",
            Algorithm::BaHomog => "ba-homog",
            Algorithm::BaGreedy => "ba-greedy",
            Algorithm::BaCg => "ba-cg",
            Algorithm::BaLpBound => "ba-lp-bound",
            Algorithm::OptBa => "opt-ba",
        }
    }

    pub fn protocol(self) -> Protocol {
        match self {
            Algorithm::FaSinglePtas
            | Algorithm::FaMulti
            | Algorithm::FaGreedy
            | Algorithm::OptFa
            | Algorithm::Ed => Protocol::Fa,
            _ => Protocol::Ba,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                Error::Parameter(format!("unknown algorithm '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Knobs shared by every algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveParams {
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
    /// Rounding draws for the LP-based and continuous-greedy solvers.
    pub repetitions: usize,
    pub steps: usize,
    pub max_iterations: usize,
    pub ed_weighting: EdWeighting,
    pub budget: OracleBudget,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            eps: 0.05,
            delta: 0.1,
            seed: 0,
            repetitions: 1,
            steps: 100,
            max_iterations: 200,
            ed_weighting: EdWeighting::Expected,
            budget: OracleBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// `None` for pure bounds.
    pub assignment: Option<Assignment>,
    pub welfare: f64,
    /// Upper bound on the optimal welfare under the algorithm's protocol.
    pub lp_bound: Option<f64>,
    pub certified: Option<bool>,
}

impl SolveOutcome {
    fn plain(assignment: Assignment, welfare: f64) -> Self {
        SolveOutcome {
            assignment: Some(assignment),
            welfare,
            lp_bound: None,
            certified: None,
        }
    }
}

/// Runs one algorithm by name.
pub fn run_algorithm(inst: &Instance, alg: Algorithm, params: &SolveParams) -> Result<SolveOutcome> {
    let fa_cfg = FaMultiConfig {
        eps: params.eps,
        delta: params.delta,
        seed: params.seed,
        max_iterations: params.max_iterations,
        pricing: PricingMode::Fptas,
        repetitions: params.repetitions,
    };
    Ok(match alg {
        Algorithm::FaSinglePtas => {
            if inst.m() != 1 {
                return Err(Error::Parameter(format!(
                    "fa-single-ptas needs a single rider, instance has {}",
                    inst.m()
                )));
            }
            let s = ptas_select(&inst.row_view(0), &PtasConfig::new(params.delta)?)?;
            SolveOutcome::plain(Assignment { sets: vec![s.set] }, s.value)
        }
        Algorithm::FaMulti => {
            let r = fa_multi_solve(inst, &fa_cfg)?;
            SolveOutcome {
                assignment: Some(r.assignment),
                welfare: r.welfare,
                // FA is at most twice the MNL surrogate.
                lp_bound: Some(2.0 * r.fractional.upper_bound),
                certified: Some(r.fractional.certified),
            }
        }
        Algorithm::FaGreedy => {
            let d = fa_greedy(inst, params.seed);
            SolveOutcome::plain(d.assignment, d.welfare)
        }
        Algorithm::OptFa => {
            let d = opt_bruteforce(inst, ValuationKind::Fa, params.budget)?;
            SolveOutcome::plain(d.assignment, d.welfare)
        }
        Algorithm::Ed | Algorithm::EdBa => {
            let d = ed_solve(inst, params.ed_weighting)?;
            SolveOutcome::plain(d.assignment, d.welfare)
        }
        Algorithm::BaHomog => {
            let d = ba_homogeneous_solve(inst)?;
            SolveOutcome::plain(d.assignment, d.welfare)
        }
        Algorithm::BaGreedy => {
            let d = ba_greedy(inst, params.seed);
            SolveOutcome::plain(d.assignment, d.welfare)
        }
        Algorithm::BaCg => {
            let r = ba_continuous_greedy(
                inst,
                &CgConfig {
                    steps: params.steps,
                    seed: params.seed,
                    repetitions: params.repetitions,
                },
            )?;
            SolveOutcome::plain(r.dispatch.assignment, r.dispatch.welfare)
        }
        Algorithm::BaLpBound => {
            let f = ba_config_lp_bound(
                inst,
                &BaLpConfig {
                    eps: params.eps,
                    max_iterations: params.max_iterations,
                    pricing: PricingMode::Fptas,
                },
            )?;
            SolveOutcome {
                assignment: None,
                welfare: f.master_objective,
                lp_bound: Some(f.upper_bound),
                certified: Some(f.certified),
            }
        }
        Algorithm::OptBa => {
            let d = opt_bruteforce(inst, ValuationKind::Ba, params.budget)?;
            SolveOutcome::plain(d.assignment, d.welfare)
        }
    })
}

/// How a row's ratio should be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certification {
    /// Exact oracle; the solver's own guarantee (if any) was certified.
    #[serde(rename = "true")]
    Yes,
    /// Exact oracle, but column generation stopped at its iteration cap.
    #[serde(rename = "false")]
    No,
    /// The oracle column is an upper bound, not the optimum.
    #[serde(rename = "bound-ratio")]
    BoundRatio,
    /// The solver failed on this instance.
    #[serde(rename = "error")]
    Failed,
}

/// One solved instance in a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance_id: usize,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub algorithm: String,
    pub protocol: String,
    pub objective: f64,
    pub oracle: f64,
    pub ratio: f64,
    pub wall_ms: f64,
    pub certified: Certification,
}

/// `objective / oracle` with `0 / 0 = 1`.
pub fn ratio(objective: f64, oracle: f64) -> f64 {
    if oracle == 0.0 && objective == 0.0 {
        1.0
    } else {
        objective / oracle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<(usize, usize)>,
    pub algorithms: Vec<Algorithm>,
    pub instances: usize,
    pub seed: u64,
    pub params: SolveParams,
    /// When false every `wall_ms` is written as 0 so runs are byte-identical.
    pub timing: bool,
}

impl BenchConfig {
    /// Named presets.
    pub fn preset(name: &str) -> Result<BenchConfig> {
        match name {
            "paper-s6-small" => Ok(BenchConfig {
                sizes: vec![(3, 9)],
                algorithms: vec![
                    Algorithm::Ed,
                    Algorithm::FaGreedy,
                    Algorithm::FaMulti,
                    Algorithm::OptFa,
                    Algorithm::EdBa,
                    Algorithm::BaGreedy,
                    Algorithm::BaCg,
                    Algorithm::OptBa,
                ],
                instances: 1000,
                seed: 0,
                params: SolveParams::default(),
                timing: true,
            }),
            _ => Err(Error::Parameter(format!(
                "unknown preset '{name}' (known: paper-s6-small)"
            ))),
        }
    }
}

struct OracleValue {
    value: f64,
    exact: bool,
    ms: f64,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn oracle_for(inst: &Instance, protocol: Protocol, params: &SolveParams) -> Result<OracleValue> {
    let start = Instant::now();
    if state_count(inst.m(), inst.n()) <= params.budget.0 {
        let d = opt_bruteforce(inst, protocol.into(), params.budget)?;
        return Ok(OracleValue {
            value: d.welfare,
            exact: true,
            ms: elapsed_ms(start),
        });
    }
    let value = match protocol {
        Protocol::Fa => {
            let cfg = FaMultiConfig {
                eps: params.eps,
                delta: params.delta,
                max_iterations: params.max_iterations,
                ..FaMultiConfig::default()
            };
            // FA is at most twice the MNL surrogate.
            2.0 * solve_config_lp(inst, &cfg)?.upper_bound
        }
        Protocol::Ba => {
            let cfg = BaLpConfig {
                eps: params.eps,
                max_iterations: params.max_iterations,
                pricing: PricingMode::Fptas,
            };
            ba_config_lp_bound(inst, &cfg)?.upper_bound
        }
    };
    Ok(OracleValue {
        value,
        exact: false,
        ms: elapsed_ms(start),
    })
}

fn run_instance(id: usize, m: usize, n: usize, seed: u64, cfg: &BenchConfig) -> Vec<BenchRecord> {
    let params = SolveParams { seed, ..cfg.params };
    let inst = match gen_uniform(m, n, seed) {
        Ok(i) => i,
        Err(_) => return Vec::new(),
    };
    let mut oracles: BTreeMap<Protocol, Result<OracleValue>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(cfg.algorithms.len());
    for &alg in &cfg.algorithms {
        let protocol = alg.protocol();
        let oracle = oracles
            .entry(protocol)
            .or_insert_with(|| oracle_for(&inst, protocol, &params));
        let mut row = BenchRecord {
            instance_id: id,
            seed,
            m,
            n,
            algorithm: alg.name().to_string(),
            protocol: protocol.to_string(),
            objective: f64::NAN,
            oracle: f64::NAN,
            ratio: f64::NAN,
            wall_ms: 0.0,
            certified: Certification::Failed,
        };
        let Ok(oracle) = oracle else {
            rows.push(row);
            continue;
        };
        row.oracle = oracle.value;
        let exact_opt = oracle.exact
            && matches!(alg, Algorithm::OptFa | Algorithm::OptBa);
        let solved = if exact_opt {
            Ok((oracle.value, oracle.ms, None))
        } else {
            let start = Instant::now();
            run_algorithm(&inst, alg, &params).map(|o| (o.welfare, elapsed_ms(start), o.certified))
        };
        if let Ok((objective, ms, certified)) = solved {
            row.objective = objective;
            row.ratio = ratio(objective, oracle.value);
            row.wall_ms = if cfg.timing { ms } else { 0.0 };
            row.certified = if !oracle.exact {
                Certification::BoundRatio
            } else if certified == Some(false) {
                Certification::No
            } else {
                Certification::Yes
            };
        }
        rows.push(row);
    }
    rows
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Parameter(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        if threads == 0 {
            return Err(Error::Parameter(format!("{THREADS_ENV} must be positive")));
        }
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))
}

/// Runs every algorithm on every generated instance.
///
/// Instance `k` (counted across sizes) is drawn with seed
/// `derive_seed(cfg.seed, k)`. Rows come back in instance order whatever
/// the pool size.
pub fn bench_records(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    let jobs: Vec<(usize, usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&(m, n)| std::iter::repeat((m, n)).take(cfg.instances))
        .enumerate()
        .map(|(k, (m, n))| (k, m, n))
        .collect();
    let pool = thread_pool()?;
    let rows: Vec<Vec<BenchRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, m, n)| run_instance(k, m, n, derive_seed(cfg.seed, k as u64), cfg))
            .collect()
    });
    Ok(rows.into_iter().flatten().collect())
}

const CSV_HEADER: [&str; 11] = [
    "instance_id",
    "seed",
    "m",
    "n",
    "algorithm",
    "protocol",
    "objective",
    "oracle",
    "ratio",
    "wall_ms",
    "certified",
];

fn write_rows<W: Write>(records: &[BenchRecord], out: W, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(CSV_HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    write_rows(records, out, true)
}

/// Appends rows to `path`, writing the header only when the file is new or
/// empty.
pub fn append_csv(path: impl AsRef<Path>, records: &[BenchRecord]) -> Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    write_rows(records, file, fresh)
}

/// [`bench_records`] followed by [`write_csv`].
pub fn bench_run<W: Write>(cfg: &BenchConfig, out: W) -> Result<Vec<BenchRecord>> {
    let records = bench_records(cfg)?;
    write_csv(&records, out)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmHistogram {
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

/// Ratio counts per algorithm over fixed-width bins of `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub algorithms: BTreeMap<String, AlgorithmHistogram>,
    /// Rows that could not be parsed or carry no ratio.
    pub skipped: u64,
}

/// Slack for ratios a hair above the top edge due to rounding.
const TOP_SLACK: f64 = 1e-6;

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Parameter("bins must be >= 1".into()));
        }
        if !(lo < hi) {
            return Err(Error::Parameter(format!("empty histogram range [{lo}, {hi}]")));
        }
        Ok(Histogram {
            lo,
            hi,
            bins,
            algorithms: BTreeMap::new(),
            skipped: 0,
        })
    }

    pub fn add(&mut self, algorithm: &str, ratio: f64) {
        let bins = self.bins;
        let h = self
            .algorithms
            .entry(algorithm.to_string())
            .or_insert_with(|| AlgorithmHistogram {
                counts: vec![0; bins],
                underflow: 0,
                overflow: 0,
            });
        if ratio < self.lo {
            h.underflow += 1;
        } else if ratio > self.hi + TOP_SLACK {
            h.overflow += 1;
        } else {
            let pos = ((ratio - self.lo) / (self.hi - self.lo) * bins as f64).floor() as usize;
            h.counts[pos.min(bins - 1)] += 1;
        }
    }

    /// Edges `[lo, hi)` of bin `k`; the last bin is closed.
    pub fn edges(&self, k: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.bins as f64;
        (self.lo + width * k as f64, self.lo + width * (k + 1) as f64)
    }

    /// Plot-ready rows `algorithm,bin,lo,hi,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm", "bin", "lo", "hi", "count"])?;
        for (alg, h) in &self.algorithms {
            w.write_record([alg.as_str(), "underflow", "", &self.lo.to_string(), &h.underflow.to_string()])?;
            for (k, c) in h.counts.iter().enumerate() {
                let (lo, hi) = self.edges(k);
                w.write_record([alg.as_str(), &k.to_string(), &lo.to_string(), &hi.to_string(), &c.to_string()])?;
            }
            w.write_record([alg.as_str(), "overflow", &self.hi.to_string(), "", &h.overflow.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bins the `ratio` column of a benchmark CSV by algorithm.
pub fn histogram_export<R: Read>(input: R, bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    let mut hist = Histogram::new(lo, hi, bins)?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    for row in reader.deserialize::<BenchRecord>() {
        match row {
            Ok(r) if r.ratio.is_finite() => hist.add(&r.algorithm, r.ratio),
            _ => hist.skipped += 1,
        }
    }
    Ok(hist)
}
