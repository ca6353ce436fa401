//! `dwig`: solve limiting densities, simulate deformed Wigner ensembles and
//! run the spectral checks from the command line.
//!
//! Exit status: 0 success, 1 a selected test failed, 2 bad input or
//! configuration, 3 solver or statistics failure, 4 eigensolver failure,
//! 5 file I/O.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deformed_wigner::bk::bk_density;
use deformed_wigner::ensemble::{read_sample_csv, simulate, write_sample_csv, EnsembleSpec, SpectralSample};
use deformed_wigner::experiment::{
    self, configured_workers, run, with_workers, ExperimentConfig, GridConfig, LawConfig, LawPair, RunError,
    WORKERS_ENV,
};
use deformed_wigner::measure::{match_order, AtomicMeasure, EntryKind};
use deformed_wigner::spectral_stats::{self as st, params, Check, StatsReport, TestRecord};
use deformed_wigner::stieltjes::{self, bulk_indices, DensityProfile};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dwig", version, about = "Deformed Wigner matrices: limiting densities and local spectral statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Limiting density of W + D on a grid, as CSV `x,rho`.
    SolveDensity(SolveArgs),
    /// Closed-form density for D = ±a (equal weights), as CSV `x,rho`.
    BkDensity(BkArgs),
    /// Sample spectra and write one CSV per trial.
    Simulate(SimulateArgs),
    /// Statistics on saved spectra, as a JSON report.
    Stats(StatsArgs),
    /// Two-sample test of the bulk-gap statistic under two entry laws, as JSON.
    Universality(UniversalityArgs),
    /// Run a full experiment from a TOML or JSON config.
    #[command(alias = "run")]
    Report(ReportArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Atoms of D as `loc:weight,loc:weight`.
    #[arg(long, allow_hyphen_values = true)]
    atoms: String,
    /// `lo:hi:points`.
    #[arg(long, allow_hyphen_values = true, default_value = "-4:4:2001")]
    grid: String,
    #[arg(long, default_value_t = 1e-6)]
    eta_floor: f64,
    /// Also write the support profile (intervals, quantiles) as JSON.
    #[arg(long)]
    support: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BkArgs {
    #[arg(long)]
    a: f64,
    #[arg(long, allow_hyphen_values = true, default_value = "-4:4:2001")]
    grid: String,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long, allow_hyphen_values = true)]
    atoms: String,
    /// Entry law, e.g. `gaussian-complex`, `rademacher`, `shifted-complex:0.8`.
    #[arg(long, default_value = "gaussian-complex")]
    law: String,
    /// Diagonal variance; defaults to 1 for complex laws and 2 for real ones.
    #[arg(long)]
    diagonal_variance: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    truncate: bool,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    /// Index of the first trial.
    #[arg(long, default_value_t = 0)]
    first_trial: u64,
    /// Keep eigenvectors in the output.
    #[arg(long)]
    vectors: bool,
    #[arg(long, short, default_value = "samples")]
    output: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Atoms of the D the samples were drawn with.
    #[arg(long, allow_hyphen_values = true)]
    atoms: String,
    /// Sample CSV files written by `simulate`.
    #[arg(required = true)]
    samples: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct UniversalityArgs {
    #[arg(long)]
    law_a: String,
    #[arg(long)]
    law_b: String,
    #[arg(long, allow_hyphen_values = true)]
    atoms: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    shuffles: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    config: PathBuf,
    /// Overrides `output` from the config.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

fn config_err(e: impl std::fmt::Display) -> RunError {
    RunError::Config(e.to_string())
}

fn parse_grid(s: &str) -> Result<Vec<f64>, RunError> {
    let bad = || RunError::Config(format!("grid {s:?}: expected lo:hi:points"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !(hi > lo) || n < 2 {
        return Err(bad());
    }
    Ok(stieltjes::linspace(lo, hi, n))
}

fn parse_law(law: &str, diagonal_variance: Option<f64>) -> Result<LawConfig, RunError> {
    let kind: EntryKind = law.parse()?;
    Ok(LawConfig { law: kind, diagonal_variance })
}

fn emit(output: Option<&Path>, body: &str) -> Result<(), RunError> {
    match output {
        Some(p) => std::fs::write(p, body).map_err(|e| RunError::Io { path: p.to_path_buf(), message: e.to_string() }),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn solve_density(args: &SolveArgs) -> Result<i32, RunError> {
    let atoms: AtomicMeasure = args.atoms.parse()?;
    let grid = parse_grid(&args.grid)?;
    let profile = stieltjes::density(&atoms, &grid, args.eta_floor)?;
    if let Some(path) = &args.support {
        let support = stieltjes::support_intervals(&atoms, &profile, stieltjes::SUPPORT_THRESHOLD)?;
        emit(Some(path), &support.to_json())?;
    }
    emit(args.output.as_deref(), &profile.to_csv())?;
    Ok(0)
}

fn bk(args: &BkArgs) -> Result<i32, RunError> {
    let grid = parse_grid(&args.grid)?;
    let values = grid
        .iter()
        .map(|&x| bk_density(x, args.a))
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_err)?;
    let profile = DensityProfile { grid, values, eta_schedule: [0.0; 3] };
    emit(args.output.as_deref(), &profile.to_csv())?;
    Ok(0)
}

fn template(args: &EnsembleArgs) -> Result<(EnsembleSpec, AtomicMeasure), RunError> {
    let atoms: AtomicMeasure = args.atoms.parse()?;
    let law = parse_law(&args.law, args.diagonal_variance)?.distribution()?;
    let mut spec = EnsembleSpec::new(args.n, law, args.seed);
    spec.truncate = args.truncate;
    spec.validate()?;
    Ok((spec, atoms))
}

fn simulate_cmd(args: &SimulateArgs) -> Result<i32, RunError> {
    let e = &args.ensemble;
    let (spec, atoms) = template(e)?;
    let diag = atoms.realize(e.n)?;
    let workers = e.workers.unwrap_or_else(|| configured_workers(&ExperimentConfig::new(atoms.clone(), spec.law.kind.clone(), vec![e.n], 1, 0)));
    let samples = with_workers(workers, || simulate(&spec, &diag, args.first_trial, e.trials, args.vectors))?;
    let dir = &args.output;
    std::fs::create_dir_all(dir).map_err(|err| RunError::Io { path: dir.clone(), message: err.to_string() })?;
    for (k, s) in samples.iter().enumerate() {
        let path = dir.join(format!("n{}_trial{}.csv", e.n, args.first_trial + k as u64));
        emit(Some(&path), &write_sample_csv(s, args.vectors))?;
        eprintln!("{}", path.display());
    }
    Ok(0)
}

fn stats(args: &StatsArgs) -> Result<i32, RunError> {
    let atoms: AtomicMeasure = args.atoms.parse()?;
    let samples: Vec<SpectralSample> = args
        .samples
        .iter()
        .map(|p| {
            let text =
                std::fs::read_to_string(p).map_err(|e| RunError::Io { path: p.clone(), message: e.to_string() })?;
            Ok(read_sample_csv(&text)?)
        })
        .collect::<Result<_, RunError>>()?;
    let n = samples[0].n();
    if samples.iter().any(|s| s.n() != n) {
        return Err(config_err("samples have different dimensions"));
    }
    let limit = experiment::solve_limit(&atoms, &GridConfig::default())?;
    let bulk = bulk_indices(&limit.support, args.epsilon, n)?;
    let mut report = StatsReport::default();

    let conc = experiment::ConcentrationConfig::default();
    let probes = st::bulk_probe_intervals(&limit.support, conc.intervals, conc.length, conc.margin);
    let c = st::concentration_report(&samples, &limit.density, &probes)?;
    report.push(
        TestRecord::new(
            "concentration",
            params(&[("n", json!(n)), ("intervals", st::interval_json(&probes))]),
            c.mean_relative_error,
            Check::AtMost { bound: conc.tolerance },
        )
        .with_provenance(&[&samples])
        .with_details(&c),
    );

    let g = st::gap_stats(&samples, &bulk, args.c0)?;
    report.push(
        TestRecord::new(
            "gaps",
            params(&[("n", json!(n)), ("c0", json!(args.c0))]),
            g.frequency,
            Check::AtMost { bound: experiment::GapConfig::default().max_frequency },
        )
        .with_provenance(&[&samples])
        .with_details(&g),
    );

    if samples.iter().all(|s| s.eigenvectors.is_some()) {
        let d = st::delocalization_stats(&samples, &bulk)?;
        report.push(
            TestRecord::new(
                "delocalization",
                params(&[("n", json!(n)), ("epsilon", json!(args.epsilon))]),
                d.max_statistic,
                Check::AtMost { bound: experiment::DelocalizationConfig::default().bound },
            )
            .with_provenance(&[&samples])
            .with_details(&d),
        );
    }
    emit(args.output.as_deref(), &(report.to_json() + "\n"))?;
    Ok(if report.all_pass() { 0 } else { 1 })
}

fn universality(args: &UniversalityArgs) -> Result<i32, RunError> {
    let atoms: AtomicMeasure = args.atoms.parse()?;
    let (a, b) = (parse_law(&args.law_a, None)?, parse_law(&args.law_b, None)?);
    let mut config = ExperimentConfig::new(atoms, a.law.clone(), vec![args.n], args.trials, args.seed);
    config.workers = args.workers;
    config.tests.universality = true;
    config.universality.shuffles = args.shuffles;
    config.universality.alpha = args.alpha;
    config.universality.pairs.push(LawPair { a: a.clone(), b: b.clone() });
    let outcome = run(&config)?;
    let record = outcome
        .report()
        .records
        .iter()
        .find(|r| r.test == "universality")
        .ok_or_else(|| config_err("no universality record produced"))?;
    let out = json!({
        "schema_version": st::SCHEMA_VERSION,
        "n": args.n,
        "trials": args.trials,
        "seed": args.seed,
        "law_a": a,
        "law_b": b,
        "match_order": match_order(&a.distribution()?, &b.distribution()?),
        "index": record.params["index"],
        "ks": record.details["ks"],
        "p_value": record.observed,
        "shuffles": args.shuffles,
        "alpha": args.alpha,
        "pass": record.pass,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(if record.pass { 0 } else { 1 })
}

fn report(args: &ReportArgs) -> Result<i32, RunError> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if args.output.is_some() {
        config.output = args.output.clone();
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    let outcome = run(&config)?;
    for r in &outcome.report().records {
        let status = match (r.control, r.pass) {
            (false, true) => "pass",
            (false, false) => "FAIL",
            (true, true) => "pass (control rejected)",
            (true, false) => "FAIL (control accepted)",
        };
        eprintln!("{:<30} {:>14.6e}  {status}", r.test, r.observed);
    }
    if outcome.written.is_empty() {
        println!("{}", serde_json::to_string_pretty(&outcome.file).expect("json"));
    } else {
        for p in &outcome.written {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SolveDensity(a) => solve_density(a),
        Command::BkDensity(a) => bk(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Stats(a) => stats(a),
        Command::Universality(a) => universality(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
