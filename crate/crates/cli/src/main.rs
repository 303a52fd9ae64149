use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use u3reg::harness::{run_suite, Suite, SuiteConfig};
use u3reg::regularize::kvn::{kvn_run, KvnParams};
use u3reg::regularize::oracle::{DerivativeFitOracle, ExhaustiveOracle, OracleConfig};
use u3reg::regularize::pipeline::{deduce_ap_free_bound, find_rich_subspace};
use u3reg::sets::{self, PointSet};
use u3reg::{Error, Fp, QuadraticForm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_PASS: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_THEORY: u8 = 3;

#[derive(Parser)]
#[command(name = "u3reg", version, about = "U³ regularity and 4-term progression experiments over F_p^n")]
struct Cli {
    /// Directory for output files when --out is not given; stdout otherwise.
    #[arg(long, global = true, env = "U3REG_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run lemma verification suites and emit one JSON record per check.
    Verify(VerifyArgs),
    /// Regularize a set and certify the progression count on a rich subspace.
    Kvn(KvnArgs),
    /// Generate a point set file.
    Gen(GenArgs),
}

fn parse_prime(s: &str) -> Result<u32, String> {
    let p: u32 = s.parse().map_err(|_| format!("not an integer: {s}"))?;
    Fp::new(p).map(|_| p).map_err(|_| "p must be prime ≥ 5 (and at most 31)".to_string())
}

#[derive(Args, Clone)]
struct SpaceArgs {
    #[arg(long, default_value_t = 5, value_parser = parse_prime)]
    p: u32,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    n: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// Comma-separated suite names, or `all`.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Instances per suite instead of the suite default.
    #[arg(long)]
    count: Option<usize>,
    /// Record wall time per check; output is then no longer reproducible.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Random,
    Subspace,
    QuadLevelSet,
    ApFreeGreedy,
    UnionSubspaces,
}

#[derive(Args, Clone)]
struct GeneratorParams {
    /// Density for `random`.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Codimension for `subspace`.
    #[arg(long, default_value_t = 1)]
    codim: usize,
    /// Diagonal coefficients of the form for `quad-level-set`, comma-separated;
    /// defaults to x₀² + … + x_{n−1}².
    #[arg(long, value_delimiter = ',')]
    form: Vec<u32>,
    /// Level for `quad-level-set`.
    #[arg(long, default_value_t = 0)]
    value: u32,
    /// Number of hyperplanes for `union-subspaces`.
    #[arg(long, default_value_t = 2)]
    k: usize,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    generator: Generator,
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    params: GeneratorParams,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Auto,
    Exhaustive,
    DerivativeFit,
}

#[derive(Args)]
struct KvnArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// Set file written by `gen`; its header fixes p and n.
    #[arg(long, conflicts_with = "generator")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    generator: Option<Generator>,
    #[command(flatten)]
    params: GeneratorParams,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// Only used with --regularize-only; the certified pipeline sets η = ε.
    #[arg(long, default_value_t = 0.3)]
    eta: f64,
    /// Only used with --regularize-only; the certified pipeline uses 10·complexity cap.
    #[arg(long, default_value_t = 1)]
    rank_target: usize,
    #[arg(long, default_value_t = 4)]
    complexity_cap: usize,
    #[arg(long, default_value_t = 64)]
    iteration_cap: usize,
    #[arg(long, default_value_t = 1e-6)]
    delta_min: f64,
    #[arg(long, value_enum, default_value = "auto")]
    oracle: OracleKind,
    /// Largest dimension the exhaustive oracle accepts.
    #[arg(long, default_value_t = 3)]
    exhaustive_max_dim: usize,
    /// Run the regularity iteration alone, without the certificate.
    #[arg(long, conflicts_with = "deduce_bound")]
    regularize_only: bool,
    /// Treat the set as progression-free and report |W'| against 2/α⁴.
    #[arg(long)]
    deduce_bound: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(out: &Option<PathBuf>, out_dir: &Option<PathBuf>, default_name: &str) -> anyhow::Result<Box<dyn Write>> {
    let path = match (out, out_dir) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Some(dir.join(default_name))
        }
        (None, None) => None,
    };
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn generate(g: Generator, space: &SpaceArgs, params: &GeneratorParams) -> u3reg::Result<PointSet> {
    let f = Fp::new(space.p)?;
    let n = space.n as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    match g {
        Generator::Random => sets::random(f, n, params.alpha, &mut rng),
        Generator::Subspace => sets::subspace(f, n, params.codim, &mut rng),
        Generator::QuadLevelSet => {
            let phi = if params.form.is_empty() {
                sets::sum_of_squares(f, n, n)?
            } else {
                if params.form.len() > n {
                    return Err(Error::InvalidParameter(format!("{} coefficients for n = {n}", params.form.len())));
                }
                let w = u3reg::AffineSpace::full(f, n)?;
                let mono: Vec<_> = params.form.iter().enumerate().map(|(i, &a)| (i, i, a % f.p())).collect();
                QuadraticForm::from_monomials(w, &mono, &[], 0)?
            };
            sets::quad_level_set(&phi, params.value)
        }
        Generator::ApFreeGreedy => sets::ap_free_greedy(f, n, space.seed),
        Generator::UnionSubspaces => sets::union_subspaces(f, n, params.k, &mut rng),
    }
}

fn error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_theory_violation() => EXIT_THEORY,
        Some(
            Error::InvalidModulus { .. }
            | Error::InvalidParameter(_)
            | Error::Parse(_)
            | Error::SpaceTooLarge { .. }
            | Error::EmptySet
            | Error::ContainsProgression { .. }
            | Error::ComplexityCap { .. }
            | Error::OracleDimension { .. },
        ) => EXIT_USAGE,
        _ => EXIT_FAIL,
    }
}

fn line<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, out_dir: &Option<PathBuf>) -> anyhow::Result<u8> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        args.suite
            .split(',')
            .map(|s| Suite::parse(s.trim()))
            .collect::<u3reg::Result<_>>()?
    };
    let cfg = SuiteConfig {
        p: args.space.p,
        n: args.space.n as usize,
        seed: args.space.seed,
        count: args.count,
        timing: args.timing,
    };
    cfg.validate()?;
    let mut out = output(&args.out, out_dir, "verify.jsonl")?;
    let mut all_pass = true;
    for suite in suites {
        let (records, summary) = run_suite(suite, &cfg)?;
        for r in &records {
            line(&mut out, r)?;
        }
        line(&mut out, &json!({ "summary": summary }))?;
        eprintln!(
            "{:<13} {:>4} instances {:>5} checks {:>3} failures  {}",
            summary.suite,
            summary.instances,
            summary.checks,
            summary.failures,
            if summary.pass { "PASS" } else { "FAIL" }
        );
        all_pass &= summary.pass;
    }
    out.flush()?;
    Ok(if all_pass { EXIT_PASS } else { EXIT_FAIL })
}

fn load_set(args: &KvnArgs) -> anyhow::Result<PointSet> {
    match (&args.input, args.generator) {
        (Some(path), _) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Ok(PointSet::read(BufReader::new(file))?)
        }
        (None, Some(g)) => Ok(generate(g, &args.space, &args.params)?),
        (None, None) => Err(Error::InvalidParameter("give --input or --generator".into()).into()),
    }
}

fn kvn_params(args: &KvnArgs) -> KvnParams {
    let exhaustive = ExhaustiveOracle {
        max_dim: args.exhaustive_max_dim,
    };
    let oracle = match args.oracle {
        OracleKind::Auto => OracleConfig::Auto {
            exhaustive,
            fallback: DerivativeFitOracle::default(),
        },
        OracleKind::Exhaustive => OracleConfig::Exhaustive(exhaustive),
        OracleKind::DerivativeFit => OracleConfig::DerivativeFit(DerivativeFitOracle::default()),
    };
    KvnParams {
        epsilon: args.epsilon,
        eta: args.eta,
        rank_target: args.rank_target,
        complexity_cap: args.complexity_cap,
        iteration_cap: args.iteration_cap,
        delta_min: args.delta_min,
        oracle,
        seed: args.space.seed,
        ..KvnParams::default()
    }
}

fn cmd_kvn(args: &KvnArgs, out_dir: &Option<PathBuf>) -> anyhow::Result<u8> {
    let set = load_set(args)?;
    let w = set.space();
    let params = kvn_params(args);
    params.validate()?;
    let mut out = output(&args.out, out_dir, "kvn.jsonl")?;
    let header = json!({"set": {"p": set.field.p(), "n": set.n, "count": set.count(), "density": set.density()}, "params": params});
    line(&mut out, &header)?;
    let code = if args.regularize_only {
        let outcome = kvn_run(&w, &set.members, &params)?;
        for it in &outcome.log {
            line(&mut out, &json!({ "iteration": it }))?;
        }
        line(&mut out, &json!({ "outcome": outcome }))?;
        EXIT_PASS
    } else if args.deduce_bound {
        let rep = deduce_ap_free_bound(&w, &set.members, &params)?;
        for it in &rep.rich.outcome.log {
            line(&mut out, &json!({ "iteration": it }))?;
        }
        for c in &rep.rich.certificate {
            line(&mut out, &json!({ "certificate": c }))?;
        }
        line(&mut out, &json!({ "ap_free_bound": rep }))?;
        eprintln!(
            "|W'| = {} vs 2/α⁴ = {:.3}; nontrivial progressions {}; {}",
            rep.subspace_size,
            rep.size_bound,
            rep.nontrivial,
            if rep.pass { "PASS" } else { "FAIL" }
        );
        if rep.pass && rep.rich.pass() {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    } else {
        let rich = find_rich_subspace(&w, &set.members, args.epsilon, &params)?;
        for it in &rich.outcome.log {
            line(&mut out, &json!({ "iteration": it }))?;
        }
        for c in &rich.certificate {
            line(&mut out, &json!({ "certificate": c }))?;
            eprintln!("{:<45} {}", c.name, if c.pass { "PASS" } else { "FAIL" });
        }
        line(&mut out, &json!({ "outcome": rich.outcome, "count": rich.count, "rank_target": rich.rank_target }))?;
        if rich.pass() {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    };
    out.flush()?;
    Ok(code)
}

fn cmd_gen(args: &GenArgs, out_dir: &Option<PathBuf>) -> anyhow::Result<u8> {
    let set = generate(args.generator, &args.space, &args.params)?;
    let name = args.generator.to_possible_value().expect("no skipped variants").get_name().to_string();
    let mut out = output(&args.out, out_dir, &format!("{name}.set"))?;
    set.write(&mut out)?;
    out.flush()?;
    if let Some(p) = args.out.as_deref().or(out_dir.as_deref().map(Path::new)) {
        eprintln!("{} points (density {:.4}) -> {}", set.count(), set.density(), p.display());
    }
    Ok(EXIT_PASS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => cmd_verify(a, &cli.out_dir),
        Command::Kvn(a) => cmd_kvn(a, &cli.out_dir),
        Command::Gen(a) => cmd_gen(a, &cli.out_dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}
