//! The `fblcrd` command line.
//!
//! ```text
//! fblcrd rd-curve --model source.json --D 0.05,0.1,0.15
//! fblcrd fbl      --model source.json --D 0.1 --eps 0.1 --n 200,500,1000 --trials 2000 --seed 1
//! fblcrd gaussian --var-x 1 --var-z 1 --D 0.25 --n 100,200
//! fblcrd markov   --model chain.json --D 0.1 --n 100,1000
//! ```
//!
//! Every document starts with the tool version, the echoed run
//! configuration and the provenance of each column. Output depends only on
//! the configuration: `--threads` changes speed, never bytes, and wall-clock
//! time is reported only under `--timing`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{
    achievability_ln_m, calibrate_c, converse_ln_m, converse_lower_with, forward_bound_with, random_code_eps,
    second_order_rate, BallModel, BallOptions, DensitySum, FblQuery, ForwardBoundParams, SumOptions,
};
use crate::crd::{solve_crd, SolverOptions};
use crate::error::Error;
use crate::gaussian::{
    gaussian_converse, gaussian_crd, gaussian_dispersion, gaussian_second_order_rate, gaussian_simulate,
    sphere_cap_bound, CapFormula, GaussianModel, SimulationMode,
};
use crate::markov::{
    markov_density_sum, markov_second_order_rate, markov_tilted_quantities, v_inf_spectral, v_n, MarkovFile,
};
use crate::mc::DEFAULT_CHUNK;
use crate::source::{Instance, ModelFile};
use crate::tilted::{dispersion_v, tilted_density};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "fblcrd", version, about = "Conditional rate-distortion and finite-blocklength bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads; defaults to all cores. Does not change the output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Report wall-clock time in the output.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Rate and dispersion over a grid of distortions.
    RdCurve(RdCurveArgs),
    /// Second-order rate, converse, random-code simulation and forward bound.
    Fbl(FblArgs),
    /// Jointly Gaussian source with side information.
    Gaussian(GaussianArgs),
    /// Markov source with side information.
    Markov(MarkovArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RdCurveArgs {
    /// Discrete source JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated distortions.
    #[arg(long = "D", value_delimiter = ',', required = true)]
    pub distortion: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FblArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "D")]
    pub distortion: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Comma-separated blocklengths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CapMode {
    Exact,
    Sakrison,
    Empirical,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GaussianArgs {
    #[arg(long, default_value_t = 1.0)]
    pub var_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub var_z: f64,
    #[arg(long = "D")]
    pub distortion: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Codebook size as `ln M`; defaults to `n` times the second-order rate.
    #[arg(long)]
    pub ln_m: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// How the simulation evaluates cap probabilities.
    #[arg(long, value_enum, default_value = "exact")]
    pub cap: CapMode,
    #[arg(long, default_value_t = 1e-8)]
    pub quad_tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MarkovArgs {
    /// Markov chain JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "D")]
    pub distortion: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Sampled paths for the converse column; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

impl Command {
    pub fn output(&self) -> &OutputArgs {
        match self {
            Command::RdCurve(a) => &a.output,
            Command::Fbl(a) => &a.output,
            Command::Gaussian(a) => &a.output,
            Command::Markov(a) => &a.output,
        }
    }
}

/// A failed run with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { code: exit_code(&e), message: e.to_string() }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::InvalidParameter(_) | Error::Domain(_) | Error::LengthMismatch { .. } => EXIT_USAGE,
        Error::NonConvergence { .. } | Error::LatticeOverflow(_) | Error::Quadrature(_) => EXIT_NONCONVERGENCE,
        _ => EXIT_INFEASIBLE,
    }
}

/// Result columns with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    /// `closed-form`, `solver`, `monte-carlo` or `input`, by column.
    pub provenance: BTreeMap<String, String>,
    pub rows: Vec<Vec<f64>>,
    pub notes: Vec<String>,
}

impl Table {
    fn new(columns: &[(&str, &str)]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.0.to_string()).collect(),
            provenance: columns.iter().map(|c| (c.0.to_string(), c.1.to_string())).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let text = read_text(path)?;
    let file = ModelFile::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    file.into_instance().map_err(|e| CliError { code: exit_code(&e).max(EXIT_INFEASIBLE), message: format!("{}: {e}", path.display()) })
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("--eps must lie in (0, 1), got {eps}")))
    }
}

pub fn cmd_rd_curve(args: &RdCurveArgs) -> Result<Table, CliError> {
    let inst = load_instance(&args.model)?;
    let opts = SolverOptions::with_tol(args.tol);
    let mut t = Table::new(&[
        ("D", "input"),
        ("R", "solver"),
        ("slope", "solver"),
        ("V", "solver"),
        ("V_within", "solver"),
        ("V_between", "solver"),
    ]);
    for &d in &args.distortion {
        let sol = solve_crd(&inst, d, &opts)?;
        let field = tilted_density(&sol, &inst)?;
        let disp = dispersion_v(&field, &inst);
        t.rows.push(vec![d, sol.rate.0, sol.slope, disp.v, disp.within, disp.between]);
    }
    Ok(t)
}

pub fn cmd_fbl(args: &FblArgs) -> Result<Table, CliError> {
    check_eps(args.eps)?;
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be positive"));
    }
    let inst = load_instance(&args.model)?;
    let sol = solve_crd(&inst, args.distortion, &SolverOptions::with_tol(args.tol))?;
    let field = tilted_density(&sol, &inst)?;
    let mut t = Table::new(&[
        ("n", "input"),
        ("second_order_rate", "closed-form"),
        ("converse_eps", "solver"),
        ("achievability_eps", "monte-carlo"),
        ("achievability_stderr", "monte-carlo"),
        ("forward_bound", "monte-carlo"),
        ("forward_stderr", "monte-carlo"),
        ("converse_rate", "solver"),
        ("achievability_rate", "monte-carlo"),
    ]);
    for &n in &args.n {
        if n == 0 {
            return Err(CliError::usage("blocklengths must be positive"));
        }
        let rate = second_order_rate(n, args.eps, sol.rate.0, field.variance)?;
        let query = FblQuery::at_rate(n, args.distortion, args.eps, rate.max(0.0))?;
        let sum = DensitySum::build(&field, &inst, n, &SumOptions { seed: args.seed, ..Default::default() })?;
        if !sum.is_exact() {
            t.notes.push(format!("n={n}: law of the summed density sampled"));
        }
        let conv = converse_lower_with(&query, &sum, field.variance);
        let ball = BallModel::new(&sol, &field, &inst, n, args.distortion / 100.0, &BallOptions::default())?;
        let samples = ball.sample(args.trials, args.seed, DEFAULT_CHUNK)?;
        let ach = random_code_eps(&samples, query.ln_m);
        let params = ForwardBoundParams::defaults(&query, calibrate_c(&samples, n))?;
        let fwd = forward_bound_with(&query, &params, field.slope, &sum, &samples);
        let nf = n as f64;
        t.rows.push(vec![
            nf,
            rate,
            conv.value,
            ach.mean,
            ach.stderr,
            fwd.value,
            fwd.mc_stderr.unwrap_or(0.0),
            converse_ln_m(n, args.eps, &sum, field.variance) / nf,
            achievability_ln_m(args.eps, &samples) / nf,
        ]);
    }
    Ok(t)
}

pub fn cmd_gaussian(args: &GaussianArgs) -> Result<Table, CliError> {
    check_eps(args.eps)?;
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be positive"));
    }
    let model = GaussianModel::new(args.var_x, args.var_z, args.distortion)?;
    let mode = match args.cap {
        CapMode::Exact => SimulationMode::AnalyticCap(CapFormula::Exact),
        CapMode::Sakrison => SimulationMode::AnalyticCap(CapFormula::Sakrison),
        CapMode::Empirical => SimulationMode::Empirical,
    };
    let mut t = Table::new(&[
        ("n", "input"),
        ("R", "closed-form"),
        ("V", "closed-form"),
        ("var_x_given_s", "closed-form"),
        ("second_order_rate", "closed-form"),
        ("ln_m", "input"),
        ("converse_eps", "closed-form"),
        ("sphere_cap_bound", "solver"),
        ("simulated_eps", "monte-carlo"),
        ("simulated_stderr", "monte-carlo"),
    ]);
    for &n in &args.n {
        if n < 2 {
            return Err(CliError::usage("blocklengths must be at least 2"));
        }
        let so = gaussian_second_order_rate(&model, n, args.eps)?;
        let ln_m = args.ln_m.unwrap_or(n as f64 * so).max(0.0);
        let conv = gaussian_converse(&model, n, ln_m)?;
        let cap = sphere_cap_bound(&model, n, ln_m, args.quad_tol)?;
        let sim = gaussian_simulate(&model, n, ln_m, args.trials, args.seed, mode)?;
        t.rows.push(vec![
            n as f64,
            gaussian_crd(&model).0,
            gaussian_dispersion(&model),
            model.var_x_given_s(),
            so,
            ln_m,
            conv.value,
            cap.value,
            sim.value,
            sim.mc_stderr.unwrap_or(0.0),
        ]);
    }
    Ok(t)
}

pub fn cmd_markov(args: &MarkovArgs) -> Result<Table, CliError> {
    check_eps(args.eps)?;
    let text = read_text(&args.model)?;
    let file = MarkovFile::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", args.model.display())))?;
    let model = file.into_model().map_err(|e| CliError {
        code: exit_code(&e).max(EXIT_INFEASIBLE),
        message: format!("{}: {e}", args.model.display()),
    })?;
    let tq = markov_tilted_quantities(&model, args.distortion, &SolverOptions::with_tol(args.tol))?;
    let spectral = v_inf_spectral(&model, &tq.j, &tq.ladder);
    let mut cols = vec![
        ("n", "input"),
        ("mu", "solver"),
        ("lag0", "solver"),
        ("v_inf_ladder", "solver"),
        ("v_inf_spectral", "solver"),
        ("v_n", "solver"),
        ("second_order_rate", "solver"),
        ("second_order_rate_iid", "solver"),
    ];
    if args.trials > 0 {
        cols.push(("converse_eps", "monte-carlo"));
    }
    let mut t = Table::new(&cols);
    if let Some(w) = &spectral.warning {
        t.notes.push(w.clone());
    }
    for &n in &args.n {
        if n == 0 {
            return Err(CliError::usage("blocklengths must be positive"));
        }
        let rate = markov_second_order_rate(&tq, n, args.eps)?;
        let mut row = vec![
            n as f64,
            tq.mu.0,
            tq.ladder.lag0,
            tq.ladder.v_inf,
            spectral.v_inf,
            v_n(&tq.ladder, n),
            rate,
            second_order_rate(n, args.eps, tq.mu.0, tq.ladder.lag0)?,
        ];
        if args.trials > 0 {
            let sum = markov_density_sum(&model, &tq.j, n, args.trials, args.seed);
            let q = FblQuery::at_rate(n, args.distortion, args.eps, rate.max(0.0))?;
            row.push(converse_lower_with(&q, &sum, tq.ladder.v_inf).value);
        }
        t.rows.push(row);
    }
    Ok(t)
}

#[derive(Serialize)]
struct Document<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a Command,
    #[serde(flatten)]
    table: &'a Table,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_s: Option<f64>,
}

/// Renders a table with its metadata.
pub fn render(config: &Command, table: &Table, wall_clock: Option<f64>) -> String {
    let doc = Document { tool: "fblcrd", version: env!("CARGO_PKG_VERSION"), config, table, wall_clock_s: wall_clock };
    match config.output().format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&doc).expect("document serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(s, "# tool: fblcrd {}", doc.version);
            let _ = writeln!(s, "# config: {}", serde_json::to_string(config).expect("config serializes"));
            let prov: Vec<String> = table.columns.iter().map(|c| format!("{c}={}", table.provenance[c])).collect();
            let _ = writeln!(s, "# provenance: {}", prov.join(" "));
            for note in &table.notes {
                let _ = writeln!(s, "# note: {note}");
            }
            if let Some(w) = wall_clock {
                let _ = writeln!(s, "# wall_clock_s: {w}");
            }
            let _ = writeln!(s, "{}", table.columns.join(","));
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", cells.join(","));
            }
            s
        }
    }
}

pub fn run_command(command: &Command) -> Result<Table, CliError> {
    match command {
        Command::RdCurve(a) => cmd_rd_curve(a),
        Command::Fbl(a) => cmd_fbl(a),
        Command::Gaussian(a) => cmd_gaussian(a),
        Command::Markov(a) => cmd_markov(a),
    }
}

/// Runs a parsed command line and returns the rendered document.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let table = pool.install(|| run_command(&cli.command))?;
    let wall = cli.timing.then(|| start.elapsed().as_secs_f64());
    Ok(render(&cli.command, &table, wall))
}

/// Parses `args`, runs, writes the output and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let text = match run(&cli) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("fblcrd: {}", e.message);
            return e.code;
        }
    };
    match &cli.command.output().out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("fblcrd: {}: {e}", path.display());
                return EXIT_USAGE;
            }
        }
        None => print!("{text}"),
    }
    0
}
