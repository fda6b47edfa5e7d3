use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kfactor::estimators::{parse_methods, PanelSpectra, DEFAULT_C, DEFAULT_K_MAX};
use kfactor::montecarlo::{
    format_table, parse_family, scenario_catalog, scenario_label, write_report_csv, Sweep,
};
use kfactor::rolling::DEFAULT_WINDOW;
use kfactor::selfcheck::{run_selfcheck, Fault};
use kfactor::{
    build_scenario, impute_column_mean, ingest_csv, rolling_estimate, run_scenario, sample_kendall_tau,
    EstimatorConfig, Method, MonteCarloReport,
};

/// Robust estimation of the number of common factors in heavy-tailed panels.
#[derive(Debug, Parser)]
#[command(name = "kfactor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run Monte Carlo replications of a simulation scenario.
    Simulate(SimulateArgs),
    /// Estimate the number of factors of one panel.
    Estimate(EstimateArgs),
    /// Rolling-window estimates over a panel.
    Rolling(RollingArgs),
    /// List the simulation scenarios.
    Catalog,
    /// Run the fast invariant checks.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// Comma-separated estimators: mker, mktcr, er, gr, tcr.
    #[arg(long, default_value = "gr,er,mker,tcr,mktcr")]
    methods: String,
    /// Largest candidate number of factors.
    #[arg(long = "kmax")]
    kmax: Option<usize>,
    /// Regularizer constant c in c/sqrt(min(N, T)).
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
}

impl EstimatorArgs {
    fn configs(&self, k_max: usize, allow_zero: bool) -> Result<Vec<EstimatorConfig>, Failure> {
        Ok(parse_methods(&self.methods)?
            .into_iter()
            .map(|m| {
                EstimatorConfig::new(m)
                    .with_k_max(k_max)
                    .with_c(self.c)
                    .with_allow_zero(allow_zero)
            })
            .collect())
    }
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Panel CSV, one row per period.
    #[arg(long)]
    input: PathBuf,
    /// The file has no header row.
    #[arg(long)]
    no_header: bool,
    /// The first column holds values, not time labels.
    #[arg(long)]
    no_time_column: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario id: A, B1..B5, C1..C5.
    #[arg(long)]
    scenario: String,
    /// Distribution for scenario A: gaussian, t<nu> (e.g. t3), cauchy.
    #[arg(long)]
    dist: Option<String>,
    /// Cross-section size (defaults to the scenario's).
    #[arg(long = "N")]
    n: Option<usize>,
    /// Number of periods (defaults to N).
    #[arg(long = "T")]
    t: Option<usize>,
    /// Signal-to-noise ratio for the B3/B5/C3/C5 designs.
    #[arg(long)]
    snr: Option<f64>,
    /// Run every point of the scenario's sweep instead of a single cell.
    #[arg(long)]
    sweep: bool,
    /// Replications per cell.
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    est: EstimatorArgs,
    /// Report CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    /// Allow r = 0 through the mock eigenvalue.
    #[arg(long)]
    allow_zero: bool,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the Kendall's tau matrix of the demeaned panel (binary).
    #[arg(long)]
    dump_kendall: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RollingArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Window length in periods.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[command(flatten)]
    est: EstimatorArgs,
    /// Allow r = 0 through the mock eigenvalue.
    #[arg(long)]
    allow_zero: bool,
    /// Output CSV path (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct SelfcheckArgs {
    /// Seed for the random test panels.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn user(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<kfactor::Error> for Failure {
    fn from(e: kfactor::Error) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::user(format!("cannot write {}: {e}", path.display())))
}

fn stdout_err(e: io::Error) -> Failure {
    Failure::user(format!("cannot write to standard output: {e}"))
}

fn workers(requested: Option<usize>) -> Result<usize, Failure> {
    match requested {
        Some(0) => Err(Failure::user("--workers must be at least 1")),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Reads and, if needed, imputes the panel; returns it with the number of
/// imputed cells.
fn load_panel(args: &InputArgs) -> Result<(kfactor::DataPanel, usize), Failure> {
    let panel = ingest_csv(&args.input, !args.no_header, !args.no_time_column)?;
    let missing = panel.missing_count();
    if missing > 0 {
        eprintln!("imputing {missing} missing cells with column means");
        Ok((impute_column_mean(&panel)?, missing))
    } else {
        Ok((panel, 0))
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let family = args.dist.as_deref().map(parse_family).transpose()?;
    let base = build_scenario(&args.scenario, family)?;
    let template = scenario_catalog()
        .into_iter()
        .find(|t| t.id == base.name)
        .expect("built scenarios are in the catalog");
    let workers = workers(args.workers)?;

    let mut base = base.with_reps(args.reps);
    if args.n.is_some() || args.t.is_some() {
        let n = args.n.unwrap_or(base.n);
        base = base.with_dims(n, args.t.unwrap_or(n));
    }
    if let Some(snr) = args.snr {
        base = base.with_snr(snr)?;
    }
    if let Some(k) = args.est.kmax {
        base = base.with_k_max(k);
    }

    let mut cells = Vec::new();
    if args.sweep {
        match &template.sweep {
            Sweep::Dims(dims) => {
                for d in dims {
                    cells.push(base.clone().with_dims(*d, *d));
                }
            }
            Sweep::Snr(values) => {
                for v in values {
                    cells.push(base.clone().with_snr(*v)?);
                }
            }
            Sweep::KMax(values) => {
                for k in values {
                    cells.push(base.clone().with_k_max(*k));
                }
            }
        }
    } else {
        cells.push(base);
    }

    let mut reports: Vec<MonteCarloReport> = Vec::new();
    for spec in &cells {
        spec.validate()?;
        let configs = args.est.configs(spec.k_max, false)?;
        eprintln!(
            "{} N={} T={}: {} replications on {workers} worker(s)",
            scenario_label(spec),
            spec.n,
            spec.t,
            spec.reps
        );
        reports.push(run_scenario(spec, &configs, args.seed, workers)?);
    }

    if let Some(path) = &args.out {
        let mut w = create(path)?;
        write_report_csv(&reports, &mut w)?;
        w.flush()
            .map_err(|e| Failure::user(format!("cannot write {}: {e}", path.display())))?;
    }
    print!("{}", format_table(&reports));
    Ok(())
}

#[derive(Debug, Serialize)]
struct JsonEstimate {
    method: Method,
    label: String,
    r_hat: usize,
    k_max: usize,
    c: f64,
    allow_zero: bool,
    first_index: usize,
    criterion: Vec<f64>,
    eigenvalues: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct JsonReport {
    schema_version: u32,
    input: String,
    t: usize,
    n: usize,
    imputed_cells: usize,
    estimates: Vec<JsonEstimate>,
}

fn estimate(args: EstimateArgs) -> Result<(), Failure> {
    let (panel, imputed_cells) = load_panel(&args.input)?;
    let configs = args.est.configs(args.est.kmax.unwrap_or(DEFAULT_K_MAX), args.allow_zero)?;

    let mut spectra = PanelSpectra::new(panel.clone())?;
    let mut out = io::stdout().lock();
    let mut estimates = Vec::new();
    for cfg in &configs {
        let res = spectra.estimate(cfg)?;
        let series: Vec<String> = res.ratio_series.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{:<8} {:>3}  {}", cfg.label(), res.r_hat, series.join(" ")).map_err(stdout_err)?;
        estimates.push(JsonEstimate {
            method: cfg.method,
            label: cfg.label(),
            r_hat: res.r_hat,
            k_max: cfg.k_max,
            c: cfg.c,
            allow_zero: cfg.allow_zero,
            first_index: res.first_index,
            criterion: res.ratio_series,
            eigenvalues: res.spectrum.raw().iter().take(cfg.k_max + 1).copied().collect(),
        });
    }

    if let Some(path) = &args.dump_kendall {
        let demeaned = kfactor::double_demean(&panel)?;
        let k = sample_kendall_tau(&demeaned)?;
        let mut w = create(path)?;
        k.write_binary(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Failure::user(format!("cannot write {}: {e}", path.display())))?;
    }

    if let Some(path) = &args.json {
        let report = JsonReport {
            schema_version: 1,
            input: args.input.input.display().to_string(),
            t: panel.t(),
            n: panel.n(),
            imputed_cells,
            estimates,
        };
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &report)
            .map_err(|e| Failure::user(format!("cannot write {}: {e}", path.display())))?;
        writeln!(w)
            .and_then(|_| w.flush())
            .map_err(|e| Failure::user(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn rolling(args: RollingArgs) -> Result<(), Failure> {
    let (panel, _) = load_panel(&args.input)?;
    let configs = args.est.configs(args.est.kmax.unwrap_or(DEFAULT_K_MAX), args.allow_zero)?;
    let workers = workers(args.workers)?;
    if args.window <= panel.t() {
        eprintln!(
            "{} windows of {} periods on {workers} worker(s)",
            panel.t() - args.window + 1,
            args.window
        );
    }
    let result = rolling_estimate(&panel, args.window, &configs, workers)?;
    match &args.out {
        Some(path) => {
            let w = create(path)?;
            result.write_csv(w)?;
        }
        None => result.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn selfcheck(args: SelfcheckArgs) -> Result<(), Failure> {
    let fault = match args.inject_fault.as_deref() {
        None => Fault::None,
        Some("symmetry") => Fault::Symmetry,
        Some(other) => return Err(Failure::user(format!("unknown fault {other:?}"))),
    };
    let report = run_selfcheck(args.seed, fault)?;
    print!("{}", report.summary());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: "self-check failed".into(),
        })
    }
}

fn catalog() -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    for t in scenario_catalog() {
        let sweep = match &t.sweep {
            Sweep::Dims(v) => format!("N = T in {v:?}"),
            Sweep::Snr(v) => format!("SNR in {v:?}"),
            Sweep::KMax(v) => format!("k_max in {v:?}"),
        };
        writeln!(out, "{:<3} N=T={:<4} {:<58} {sweep}", t.id, t.default_dim, t.description)
            .map_err(stdout_err)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Rolling(a) => rolling(a),
        Command::Catalog => catalog(),
        Command::Selfcheck(a) => selfcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
