//! `cpdhnf`: decompose tensors, generate instances, run noise sweeps and
//! certify regularity degrees.

mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use cpdhnf::format::{self, AnyTensor};
use cpdhnf::recovery::DegreeChoice;
use cpdhnf::regcert::{self, DEFAULT_PRIME};
use cpdhnf::tensor::{add_noise, random_cpd};
use cpdhnf::{c64, decompose, Bidegree, DecomposeOptions, DenseTensor, Field, Grouping, KernelMethod, Scalar};

use report::{CertJson, Factors, ResultJson, TruthJson, NOISE_HEADER};

#[derive(Parser)]
#[command(name = "cpdhnf", version, about = "Canonical polyadic decomposition through homogeneous normal forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a tensor file and print a JSON result.
    Decompose(DecomposeArgs),
    /// Write a random tensor of given rank.
    Generate(GenerateArgs),
    /// Decompose noisy copies of random tensors and print CSV.
    NoiseSweep(NoiseArgs),
    /// Certify regularity degrees over a prime field; prints JSON lines.
    Certify(CertifyArgs),
}

#[derive(Args)]
struct SolverArgs {
    /// `auto` or `D,E`.
    #[arg(long, default_value = "auto", value_parser = parse_degree)]
    degree: DegreeChoice,
    /// svd, eigs or auto.
    #[arg(long, default_value = "auto")]
    kernel: KernelMethod,
    #[arg(long, default_value_t = 3)]
    newton: usize,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    rank: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 1-based mode groups such as `1,2/3/4,5`; chosen automatically if omitted.
    #[arg(long, value_parser = parse_grouping)]
    grouping: Option<Grouping>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "real")]
    field: Field,
    #[arg(long)]
    output: PathBuf,
    /// Also write the generating factors as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long)]
    rank: usize,
    /// Noise exponents `FROM:TO` (inclusive) or a single exponent.
    #[arg(long, default_value = "-1:-15", allow_hyphen_values = true, value_parser = parse_levels)]
    levels: Levels,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "real")]
    field: Field,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// A rank or `auto` for `floor(min{R(m,n,(d,1)), mn})`.
    #[arg(long, default_value = "auto")]
    r: String,
    #[arg(long, default_value_t = DEFAULT_PRIME)]
    p: u32,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `MMAX,NMAX`: every cell with `1 <= m <= MMAX` and `1 <= n <= NMAX`.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad number `{t}`"))).collect()
}

fn parse_degree(s: &str) -> Result<DegreeChoice, String> {
    if s == "auto" {
        return Ok(DegreeChoice::Auto);
    }
    match parse_list(s)?.as_slice() {
        &[d, e] if d >= 1 && e >= 1 => Ok(DegreeChoice::Fixed(Bidegree::new(d, e))),
        _ => Err(format!("degree must be `auto` or `D,E` with D, E >= 1, got `{s}`")),
    }
}

fn parse_grouping(s: &str) -> Result<Grouping, String> {
    let parts: Vec<Vec<usize>> = s.split('/').map(parse_list).collect::<Result<_, _>>()?;
    let Ok(parts) = <[Vec<usize>; 3]>::try_from(parts) else {
        return Err(format!("grouping needs three `/`-separated groups, got `{s}`"));
    };
    Grouping::from_one_based(parts).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, PartialEq)]
struct Levels(Vec<i32>);

fn parse_levels(s: &str) -> Result<Levels, String> {
    let num = |t: &str| t.trim().parse::<i32>().map_err(|_| format!("bad exponent `{t}`"));
    match s.split_once(':') {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            Ok(Levels(if a <= b { (a..=b).collect() } else { (b..=a).rev().collect() }))
        }
        None => Ok(Levels(vec![num(s)?])),
    }
}

fn options(solver: &SolverArgs, seed: u64, grouping: Option<Grouping>) -> DecomposeOptions {
    DecomposeOptions { degree: solver.degree, kernel: solver.kernel, newton_iters: solver.newton, seed, grouping, ..Default::default() }
}

fn write_out(path: Option<&PathBuf>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

type CmdResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn run_decompose(args: DecomposeArgs) -> CmdResult {
    let tensor = format::read_file(&args.input)?;
    let opts = options(&args.solver, args.seed, args.grouping);
    let result = match &tensor {
        AnyTensor::Real(t) => {
            let d = decompose(t, args.rank, &opts)?;
            ResultJson::new(t.shape(), args.rank, args.seed, args.solver.newton, &d, Factors::real(&d.cpd))
        }
        AnyTensor::Complex(t) => {
            let d = decompose(t, args.rank, &opts)?;
            ResultJson::new(t.shape(), args.rank, args.seed, args.solver.newton, &d, Factors::complex(&d.cpd))
        }
    };
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    write_out(args.output.as_ref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run_generate(args: GenerateArgs) -> CmdResult {
    let (tensor, factors) = match args.field {
        Field::Real => {
            let (t, cpd) = random_cpd::<f64>(&args.dims, args.rank, args.seed)?;
            (AnyTensor::Real(t), Factors::real(&cpd))
        }
        Field::Complex => {
            let (t, cpd) = random_cpd::<c64>(&args.dims, args.rank, args.seed)?;
            (AnyTensor::Complex(t), Factors::complex(&cpd))
        }
    };
    format::write_file(&args.output, &tensor)?;
    if let Some(path) = &args.truth {
        let truth = TruthJson::new(&args.dims, args.field, args.rank, args.seed, factors);
        std::fs::write(path, serde_json::to_string_pretty(&truth)? + "\n")?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Seed of the noise added at level `e` in trial `trial`.
fn noise_seed(seed: u64, e: i32, trial: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add((trial as u64) << 16).wrapping_add(e.unsigned_abs() as u64)
}

fn sweep_trial<T: Scalar>(args: &NoiseArgs, e: i32, trial: usize) -> (Option<f64>, f64) {
    let opts = options(&args.solver, args.seed, None);
    let start = Instant::now();
    let outcome = random_cpd::<T>(&args.dims, args.rank, args.seed.wrapping_add(trial as u64))
        .and_then(|(t, _): (DenseTensor<T>, _)| add_noise(&t, Some(e), noise_seed(args.seed, e, trial)))
        .and_then(|noisy| decompose(&noisy, args.rank, &opts));
    let runtime = start.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => (Some(d.backward_error), runtime),
        Err(err) => {
            eprintln!("e={e} trial={trial}: {err}");
            (None, runtime)
        }
    }
}

fn run_noise(args: NoiseArgs) -> CmdResult {
    let mut text = String::from(NOISE_HEADER);
    text.push('\n');
    for &e in &args.levels.0 {
        for trial in 0..args.trials {
            let (err, runtime) = match args.field {
                Field::Real => sweep_trial::<f64>(&args, e, trial),
                Field::Complex => sweep_trial::<c64>(&args, e, trial),
            };
            text.push_str(&report::noise_row(e, trial, err, runtime));
            text.push('\n');
        }
    }
    write_out(args.output.as_ref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn certify_cell(args: &CertifyArgs, m: usize, n: usize) -> CertJson {
    let r = if args.r == "auto" {
        Ok(regcert::auto_rank(m, n, args.d))
    } else {
        args.r.parse::<usize>().map_err(|_| format!("bad rank `{}`", args.r))
    };
    let r = match r {
        Ok(r) => r,
        Err(msg) => return CertJson::failure(m, n, args.d, 0, args.p, args.seed, msg),
    };
    match regcert::certify_conjecture(m, n, args.d, r, args.p, args.trials, args.seed) {
        Ok(c) => CertJson::from_certificate(&c),
        Err(e) => CertJson::failure(m, n, args.d, r, args.p, args.seed, e.to_string()),
    }
}

fn run_certify(args: CertifyArgs) -> CmdResult {
    let cells: Vec<(usize, usize)> = match &args.sweep {
        Some(v) if v.len() == 2 => (1..=v[0]).flat_map(|m| (1..=v[1]).map(move |n| (m, n))).collect(),
        Some(_) => return Err("--sweep expects MMAX,NMAX".into()),
        None => vec![(args.m, args.n)],
    };
    let mut text = String::new();
    let mut all_ok = true;
    for (m, n) in cells {
        let cert = certify_cell(&args, m, n);
        all_ok &= cert.success;
        text.push_str(&serde_json::to_string(&cert)?);
        text.push('\n');
    }
    write_out(args.output.as_ref(), &text)?;
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Decompose(a) => run_decompose(a),
        Command::Generate(a) => run_generate(a),
        Command::NoiseSweep(a) => run_noise(a),
        Command::Certify(a) => run_certify(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
