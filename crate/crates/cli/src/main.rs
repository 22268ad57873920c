use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::LazyLock;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mrd_core::design::{consistency_profile, sample_assignment, Balance, DesignSpec, SmrdConfig};
use mrd_core::estimation::EstimandSpec;
use mrd_core::harness::{oracle_compare, rerandomization_study, Tolerances, DEFAULT_ENUMERATION_LIMIT};
use mrd_core::io::{
    analyze, read_outcomes_csv, sha256_hex, write_assignment_csv, write_histogram_csv, Provenance, SimulationConfig,
    SCHEMA_VERSION, TOOL_VERSION,
};
use mrd_core::outcomes::{generate_potential_outcomes, uniform_potential_outcomes};
use mrd_core::rng::derive_seed;
use mrd_core::MrdError;

static VERSION: LazyLock<String> = LazyLock::new(|| format!("{TOOL_VERSION} (report schema {SCHEMA_VERSION})"));

#[derive(Parser)]
#[command(name = "mrd", version = VERSION.as_str(), about = "Multiple randomization designs for buyer x seller experiments")]
struct Cli {
    /// Worker threads for simulations (default: all cores).
    #[arg(long, global = true, env = "MRD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an assignment matrix and write it as CSV.
    Design(DesignArgs),
    /// Estimate type means, estimands and intervals from long-format outcomes.
    Analyze(AnalyzeArgs),
    /// Run a re-randomization study and write summary JSON plus histogram CSVs.
    Simulate(SimulateArgs),
    /// Compare closed forms with exhaustive enumeration on random tables.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Smrd,
    BuyerSrd,
    SellerSrd,
    Crossover,
}

#[derive(Clone, Copy, ValueEnum)]
enum BalanceArg {
    Row,
    Double,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, value_enum, default_value = "smrd", conflicts_with = "spec")]
    kind: Kind,
    /// JSON design specification (any kind, including multigroup, hybrid, clustered).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    treated_rows: Option<usize>,
    #[arg(long)]
    treated_cols: Option<usize>,
    /// Treated sellers per buyer (crossover).
    #[arg(long)]
    treated_per_row: Option<usize>,
    #[arg(long, value_enum, default_value = "row")]
    balance: BalanceArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Long-format CSV: buyer_id,seller_id,w_buyer,w_seller,outcome.
    #[arg(long)]
    outcomes: PathBuf,
    /// Estimand preset (ate, spill_b, spill_s, direct) or four comma-separated
    /// coefficients; repeatable. Default: all presets.
    #[arg(long = "estimand")]
    estimands: Vec<String>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    #[arg(long, default_value_t = 2)]
    treated_rows: usize,
    #[arg(long, default_value_t = 2)]
    treated_cols: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Outcome bound of the random tables.
    #[arg(long, default_value_t = 10.0)]
    bound: f64,
    #[arg(long, default_value_t = 1e-12)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    abs_tol: f64,
    /// Largest support to enumerate.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_LIMIT as u64)]
    limit: u64,
}

/// Failure classes mapped onto exit codes 1 and 2.
enum Failure {
    Validation(anyhow::Error),
    Verification(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Validation(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Design(a) => design(a)?,
        Command::Analyze(a) => analyze_cmd(a)?,
        Command::Simulate(a) => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = cli.threads {
                if n == 0 {
                    return Err(Failure::Validation(anyhow::anyhow!("--threads must be positive")));
                }
                builder = builder.num_threads(n);
            }
            let pool = builder.build().context("building thread pool")?;
            pool.install(|| simulate(a))?;
        }
        Command::Verify(a) => return verify(a),
    }
    Ok(())
}

fn required(v: Option<usize>, flag: &str) -> Result<usize> {
    v.with_context(|| format!("--{flag} is required for this design kind"))
}

fn design(a: DesignArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<DesignSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let rows = required(a.rows, "rows")?;
            let cols = required(a.cols, "cols")?;
            match a.kind {
                Kind::Smrd => DesignSpec::from(SmrdConfig {
                    rows,
                    cols,
                    treated_rows: required(a.treated_rows, "treated-rows")?,
                    treated_cols: required(a.treated_cols, "treated-cols")?,
                }),
                Kind::BuyerSrd => DesignSpec::BuyerSrd { rows, cols, treated_rows: required(a.treated_rows, "treated-rows")? },
                Kind::SellerSrd => DesignSpec::SellerSrd { rows, cols, treated_cols: required(a.treated_cols, "treated-cols")? },
                Kind::Crossover => DesignSpec::Crossover {
                    rows,
                    cols,
                    treated_per_row: required(a.treated_per_row, "treated-per-row")?,
                    balance: match a.balance {
                        BalanceArg::Row => Balance::Row,
                        BalanceArg::Double => Balance::Double,
                    },
                    swaps: None,
                },
            }
        }
    };
    let assignment = sample_assignment(&spec, a.seed)?;
    let mut buf = Vec::new();
    write_assignment_csv(&mut buf, &assignment)?;
    write_output(a.out.as_deref(), &buf)?;

    let profile = consistency_profile(assignment.matrix());
    let consistent_buyers = profile.buyer_consistent.iter().filter(|&&c| c).count();
    let consistent_sellers = profile.seller_consistent.iter().filter(|&&c| c).count();
    eprintln!(
        "{} {}x{}: treated fraction {}, consistent buyers {}/{}, consistent sellers {}/{}",
        spec.name(),
        assignment.rows(),
        assignment.cols(),
        profile.overall_fraction,
        consistent_buyers,
        assignment.rows(),
        consistent_sellers,
        assignment.cols()
    );
    Ok(())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(bytes).context("writing stdout"),
    }
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<()> {
    let bytes = fs::read(&a.outcomes).with_context(|| format!("reading {}", a.outcomes.display()))?;
    let data = read_outcomes_csv(bytes.as_slice()).with_context(|| format!("loading {}", a.outcomes.display()))?;
    let specs: Vec<EstimandSpec> = if a.estimands.is_empty() {
        EstimandSpec::presets().to_vec()
    } else {
        a.estimands.iter().map(|s| s.parse()).collect::<Result<_, MrdError>>()?
    };
    let provenance = Provenance {
        tool_version: TOOL_VERSION.to_string(),
        input_file: Some(a.outcomes.display().to_string()),
        input_sha256: Some(sha256_hex(&bytes)),
        seed: None,
    };
    let report = analyze(&data, &specs, a.level, provenance)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_output(a.out.as_deref(), &json)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.reps < 2 {
        bail!("--reps must be at least 2 (got {})", a.reps);
    }
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let config = SimulationConfig::from_json(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    let specs = config.estimand_specs()?;
    let d = config.design;
    let potentials = generate_potential_outcomes(&config.outcomes, d.rows, d.cols, config.outcome_seed)?;
    let report = rerandomization_study(&potentials, &d, &specs, a.reps, config.level, a.seed)?;

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for h in &report.histograms {
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &h.bins)?;
        fs::write(a.out_dir.join(h.file_name()), buf)?;
    }
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    fs::write(a.out_dir.join("summary.json"), json)?;

    for t in &report.types {
        println!(
            "{:>8}  mean {:>10.6} (truth {:>10.6})  var {:.3e}  mean var-hat {:.3e}",
            t.pair_type.label(),
            t.mean_estimate,
            t.population_mean,
            t.empirical_variance,
            t.mean_variance_estimate
        );
    }
    for e in &report.estimands {
        println!(
            "{:>8}  mean {:>10.6} (truth {:>10.6})  coverage {:.4}",
            e.estimand.label(),
            e.mean_estimate,
            e.true_value,
            e.coverage
        );
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> std::result::Result<(), Failure> {
    let config = SmrdConfig::new(a.rows, a.cols, a.treated_rows, a.treated_cols)?;
    let count = config.assignment_count();
    if count > a.limit as u128 {
        return Err(MrdError::EnumerationLimit { count, limit: a.limit as u128 }.into());
    }
    if a.trials == 0 {
        return Err(Failure::Validation(anyhow::anyhow!("--trials must be positive")));
    }
    let tol = Tolerances { relative: a.rel_tol, absolute: a.abs_tol };
    println!("trial  assignments  checks  max|mean|    max|cov|     max|var-hat|  conservative  verdict");
    let mut failed = Vec::new();
    for trial in 0..a.trials {
        let table = uniform_potential_outcomes(a.rows, a.cols, a.bound, derive_seed(a.seed, trial as u64))?;
        let r = oracle_compare(&table, &config, tol)?;
        use mrd_core::harness::CheckKind as K;
        let cons_ok = r.checks.iter().filter(|c| c.kind == K::Conservative).all(|c| c.pass);
        println!(
            "{:>5}  {:>11}  {:>6}  {:<11.3e} {:<11.3e}  {:<12.3e}  {:<12}  {}",
            trial,
            r.assignment_count,
            r.checks.len(),
            r.max_discrepancy(K::TypeMean).max(r.max_discrepancy(K::EstimandMean)),
            r.max_discrepancy(K::Covariance).max(r.max_discrepancy(K::EstimandVariance)),
            r.max_discrepancy(K::VarianceEstimator),
            if cons_ok { "ok" } else { "VIOLATED" },
            if r.pass { "pass" } else { "FAIL" }
        );
        for c in r.failures() {
            println!("       failed {}: closed {} enumerated {}", c.label(), c.closed_form, c.enumerated);
            failed.push(format!("trial {trial}: {}", c.label()));
        }
    }
    if failed.is_empty() {
        println!("all {} trials pass", a.trials);
        Ok(())
    } else {
        Err(Failure::Verification(failed.join("; ")))
    }
}
