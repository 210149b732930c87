use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dispatchkit::baselines::{EdWeighting, OracleBudget};
use dispatchkit::bench::{
    append_csv, bench_records, histogram_export, run_algorithm, write_csv, Algorithm, BenchConfig, SolveParams,
};
use dispatchkit::valuation::value;
use dispatchkit::{gen_hardness, gen_uniform, simulate, Instance, Protocol, ThreePartitionSpec, ValuationKind};

#[derive(Parser)]
#[command(name = "dispatchkit", version, about = "Notification set selection for ride-hailing dispatch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a uniform random instance or a 3-Partition reduction instance.
    Gen(GenArgs),
    /// Evaluate one rider's notification set.
    Eval(EvalArgs),
    /// Run a solver on an instance and print its result as JSON.
    Solve(SolveArgs),
    /// Monte Carlo estimate of a rider's value under a contention protocol.
    Simulate(SimulateArgs),
    /// Batch experiment: solve random instances and write ratio rows as CSV.
    Bench(BenchArgs),
    /// Bin the ratio column of a bench CSV.
    Hist(HistArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Riders.
    #[arg(long)]
    m: usize,
    /// Drivers (uniform instances only).
    #[arg(long, required_unless_present = "three_partition")]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated 3-Partition integers; builds the reduction instance.
    #[arg(long, value_delimiter = ',', requires = "target")]
    three_partition: Option<Vec<u32>>,
    /// Triple target `B` for `--three-partition`.
    #[arg(long)]
    target: Option<u32>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Fa,
    Ba,
    Mnl,
}

impl From<Kind> for ValuationKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Fa => ValuationKind::Fa,
            Kind::Ba => ValuationKind::Ba,
            Kind::Mnl => ValuationKind::Mnl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimProtocol {
    Fa,
    Ba,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Expected,
    Raw,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    protocol: Kind,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0)]
    rider: usize,
    /// Comma-separated driver indices; empty for the empty set.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    set: Vec<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    alg: Algorithm,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Continuous-greedy steps.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Column-generation iteration cap.
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, value_enum, default_value_t = Weighting::Expected)]
    ed_weighting: Weighting,
    /// Replace every acceptance probability with this value first.
    #[arg(long)]
    p: Option<f64>,
    /// Largest number of driver maps the exact solvers may enumerate.
    #[arg(long, default_value_t = OracleBudget::default().0)]
    budget: u128,
    /// Also write the assignment JSON here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    protocol: SimProtocol,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0)]
    rider: usize,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    set: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Named configuration; explicit flags override it.
    #[arg(long)]
    preset: Option<String>,
    /// Sizes as `MxN`, comma-separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_size)]
    sizes: Option<Vec<(usize, usize)>>,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    algs: Option<Vec<Algorithm>>,
    /// Instances per size.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    budget: Option<u128>,
    /// Write 0 in the wall_ms column so output is reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Append rows to this file (header written once) instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct HistArgs {
    /// Bench CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value_t = 0.8)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (m, n) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("size '{s}' is not of the form MxN"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("size '{s}': {e}"));
    Ok((parse(m)?, parse(n)?))
}

fn output(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values always serialize"));
}

fn check_rider(inst: &Instance, rider: usize, set: &[usize]) -> dispatchkit::Result<()> {
    if rider >= inst.m() {
        return Err(dispatchkit::Error::Parameter(format!(
            "rider {rider} out of range for m={}",
            inst.m()
        )));
    }
    if let Some(j) = set.iter().find(|&&j| j >= inst.n()) {
        return Err(dispatchkit::Error::Parameter(format!(
            "driver {j} out of range for n={}",
            inst.n()
        )));
    }
    Ok(())
}

fn gen(args: GenArgs) -> dispatchkit::Result<()> {
    let inst = match (args.three_partition, args.target) {
        (Some(a), Some(target)) => {
            let (inst, w) = gen_hardness(&ThreePartitionSpec { a, target, m: args.m })?;
            eprintln!("threshold W = {w}");
            inst
        }
        _ => gen_uniform(args.m, args.n.unwrap_or(0), args.seed)?,
    };
    match args.output {
        Some(path) => inst.write(path)?,
        None => println!("{}", inst.to_json()),
    }
    Ok(())
}

fn eval(args: EvalArgs) -> dispatchkit::Result<()> {
    let inst = Instance::read(&args.instance)?;
    check_rider(&inst, args.rider, &args.set)?;
    println!("{}", value(args.protocol.into(), &inst.view(args.rider, &args.set)));
    Ok(())
}

fn solve(args: SolveArgs) -> dispatchkit::Result<()> {
    let mut inst = Instance::read(&args.instance)?;
    if let Some(p) = args.p {
        inst = Instance::new(inst.weights().to_vec(), vec![vec![p; inst.n()]; inst.m()])?;
    }
    let params = SolveParams {
        eps: args.eps,
        delta: args.delta,
        seed: args.seed,
        repetitions: args.repetitions,
        steps: args.steps,
        max_iterations: args.max_iterations,
        ed_weighting: match args.ed_weighting {
            Weighting::Expected => EdWeighting::Expected,
            Weighting::Raw => EdWeighting::Raw,
        },
        budget: OracleBudget(args.budget),
    };
    let out = run_algorithm(&inst, args.alg, &params)?;
    if let (Some(path), Some(a)) = (&args.output, &out.assignment) {
        std::fs::write(path, a.to_json())?;
    }
    print_json(&json!({
        "algorithm": args.alg.name(),
        "protocol": args.alg.protocol().to_string(),
        "welfare": out.welfare,
        "assignment": out.assignment,
        "lp_bound": out.lp_bound,
        "certified": out.certified,
    }));
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> dispatchkit::Result<()> {
    let inst = Instance::read(&args.instance)?;
    check_rider(&inst, args.rider, &args.set)?;
    let view = inst.view(args.rider, &args.set);
    let protocol = match args.protocol {
        SimProtocol::Fa => Protocol::Fa,
        SimProtocol::Ba => Protocol::Ba,
    };
    let est = simulate(&view, protocol, args.trials, args.seed)?;
    print_json(&json!({
        "protocol": protocol.to_string(),
        "mean": est.mean,
        "stderr": est.stderr,
        "trials": est.trials,
        "exact": value(protocol.into(), &view),
    }));
    Ok(())
}

fn bench(args: BenchArgs) -> dispatchkit::Result<()> {
    let mut cfg = match &args.preset {
        Some(name) => BenchConfig::preset(name)?,
        None => BenchConfig {
            sizes: vec![(3, 9)],
            algorithms: vec![Algorithm::Ed, Algorithm::FaGreedy, Algorithm::FaMulti, Algorithm::OptFa],
            instances: 100,
            seed: 0,
            params: SolveParams::default(),
            timing: true,
        },
    };
    if let Some(s) = args.sizes {
        cfg.sizes = s;
    }
    if let Some(a) = args.algs {
        cfg.algorithms = a;
    }
    if let Some(k) = args.instances {
        cfg.instances = k;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.eps {
        cfg.params.eps = e;
    }
    if let Some(d) = args.delta {
        cfg.params.delta = d;
    }
    if let Some(r) = args.repetitions {
        cfg.params.repetitions = r;
    }
    if let Some(b) = args.budget {
        cfg.params.budget = OracleBudget(b);
    }
    cfg.timing = !args.no_timing;
    let records = bench_records(&cfg)?;
    match &args.output {
        Some(path) => append_csv(path, &records)?,
        None => write_csv(&records, io::stdout().lock())?,
    }
    let failed = records.iter().filter(|r| r.certified == dispatchkit::bench::Certification::Failed).count();
    if failed > 0 {
        eprintln!("{failed} of {} rows failed", records.len());
    }
    Ok(())
}

fn hist(args: HistArgs) -> dispatchkit::Result<()> {
    let h = histogram_export(File::open(&args.input)?, args.bins, args.lo, args.hi)?;
    if h.skipped > 0 {
        eprintln!("skipped {} malformed rows", h.skipped);
    }
    h.write_csv(output(args.output.as_ref())?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Eval(a) => eval(a),
        Command::Solve(a) => solve(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Hist(a) => hist(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
