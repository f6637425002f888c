//! `mom`: plan sample sizes, estimate means from CSV, run verification suites
//! and build nets.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or validation error.

mod config;
mod ingest;
mod suites;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mom_core::estimator::{mom, partition};
use mom_core::function_classes::{regression_loss_row, LossFunction};
use mom_core::geometry_nets::{ball_net, lattice_net};
use mom_core::harness::flatten_csv;
use mom_core::planner::{plan, PlanClass, PlanRequest};

use config::{ClassName, FileConfig, LossName, OutputFormat};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(mom_core::Error),
    Failed(Vec<String>),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(msg) => write!(f, "{msg}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Failed(suites) => write!(f, "verification failed: {}", suites.join(", ")),
        }
    }
}

impl From<mom_core::Error> for CliError {
    fn from(e: mom_core::Error) -> Self {
        Self::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Failed(_) => 1,
            Self::Usage(_) | Self::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mom", version, about = "Median-of-means estimation, planning and verification")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for report files (env MOM_OUT_DIR).
    #[arg(long, global = true, env = "MOM_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Leave timestamps out of reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Block length, block count and log class size for a target accuracy.
    Plan(PlanArgs),
    /// MoM estimate of a function over the rows of a CSV file.
    Estimate(EstimateArgs),
    /// Run suites and write reports.
    Simulate(SuiteArgs),
    /// Run suites, write reports and fail unless every suite passes.
    Verify(SuiteArgs),
    /// Ball net of radius W in R^d.
    Net(NetArgs),
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long, value_enum)]
    class: Option<ClassName>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    vp: Option<f64>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    d: Option<u32>,
    /// Weight-norm bound for regression.
    #[arg(long)]
    w: Option<f64>,
    /// E||X||_1 + E|Y| for regression.
    #[arg(long)]
    moment_sum: Option<f64>,
    #[arg(long, value_enum)]
    loss: Option<LossName>,
    /// Parameter of the huber and pseudo_huber losses.
    #[arg(long)]
    loss_delta: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    kappa: Option<usize>,
    /// identity, coord:J, square, abs or norm2; ignored with --xy.
    #[arg(long)]
    function: Option<String>,
    /// Rows are (x_1..x_d, y) pairs; estimates the regression loss at --w.
    #[arg(long)]
    xy: bool,
    /// Comma-separated weight vector for --xy.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    loss: Option<LossName>,
    #[arg(long)]
    loss_delta: Option<f64>,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    /// moment_bound, single_mean, permutation, coverage, mom_vs_mean, kmeans_interval or all.
    #[arg(long)]
    suite: Option<String>,
    /// Scale trials and draws down 100x.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    draws: Option<u64>,
    #[arg(long)]
    kappa: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    m_list: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sets: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
}

#[derive(Debug, Args)]
struct NetArgs {
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    /// Coverage audit size.
    #[arg(long)]
    audit: Option<usize>,
    /// Scaled cubic lattice instead of the greedy packing (d <= 4).
    #[arg(long)]
    lattice: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = std::env::var("MOM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn require<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required value --{name}")))
}

fn loss_of(name: Option<LossName>, delta: Option<f64>) -> Result<LossFunction, CliError> {
    let loss = match name.unwrap_or(LossName::Squared) {
        LossName::Squared => LossFunction::Squared,
        LossName::Absolute => LossFunction::Absolute,
        LossName::Huber => LossFunction::Huber {
            delta: require(delta, "loss-delta")?,
        },
        LossName::PseudoHuber => LossFunction::PseudoHuber {
            delta: require(delta, "loss-delta")?,
        },
    };
    loss.validate()?;
    Ok(loss)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = config::load(cli.config.as_deref())?;
    let format = cli.format.or(file.format).unwrap_or_default();
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let out = cli.out.clone().or(file.out.clone());
    match cli.command {
        Command::Plan(args) => cmd_plan(args, &file, format),
        Command::Estimate(args) => cmd_estimate(args, &file, format),
        Command::Simulate(args) => cmd_suites(args, &file, seed, out, format, cli.no_timestamp, false),
        Command::Verify(args) => cmd_suites(args, &file, seed, out, format, cli.no_timestamp, true),
        Command::Net(args) => cmd_net(args, &file, seed, format),
    }
}

fn emit<T: Serialize>(value: &T, format: OutputFormat) -> Result<(), CliError> {
    let json = serde_json::to_value(value).map_err(|e| CliError::Usage(e.to_string()))?;
    match format {
        OutputFormat::Json => write_stdout(&format!("{}\n", serde_json::to_string_pretty(&json).expect("value serializes"))),
        OutputFormat::Csv => write_stdout(&flatten_csv(&json)),
    }
    Ok(())
}

// a closed pipe (e.g. `| head`) is not an error
fn write_stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn cmd_plan(a: PlanArgs, file: &FileConfig, format: OutputFormat) -> Result<(), CliError> {
    let f = &file.plan;
    let class = match require(a.class.or(f.class), "class")? {
        ClassName::Singleton => PlanClass::Singleton,
        ClassName::Kmeans => PlanClass::KMeans {
            k: require(a.k.or(f.k), "k")?,
            d: require(a.d.or(f.d), "d")?,
        },
        ClassName::Regression => PlanClass::Regression {
            w_bound: require(a.w.or(f.w), "w")?,
            d: require(a.d.or(f.d), "d")?,
            moment_sum: require(a.moment_sum.or(f.moment_sum), "moment-sum")?,
            loss: loss_of(a.loss.or(f.loss), a.loss_delta.or(f.loss_delta))?,
        },
    };
    let request = PlanRequest {
        epsilon: require(a.epsilon.or(f.epsilon), "epsilon")?,
        delta: require(a.delta.or(f.delta), "delta")?,
        p: require(a.p.or(f.p), "p")?,
        v_p: require(a.vp.or(f.vp), "vp")?,
        class,
    };
    let plan = plan(&request)?;
    emit(&serde_json::json!({"request": request, "plan": plan}), format)
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    input: PathBuf,
    function: String,
    rows: usize,
    discarded: usize,
    #[serde(flatten)]
    result: mom_core::EstimateResult,
}

type RowFn = Box<dyn Fn(&Vec<f64>) -> f64>;

fn point_function(name: &str, dim: usize) -> Result<RowFn, CliError> {
    let scalar_only = |f: RowFn| {
        if dim == 1 {
            Ok(f)
        } else {
            Err(CliError::Usage(format!(
                "function {name:?} needs one column, found {dim}; use coord:J or norm2"
            )))
        }
    };
    match name {
        "identity" => scalar_only(Box::new(|x| x[0])),
        "square" => scalar_only(Box::new(|x| x[0] * x[0])),
        "abs" => scalar_only(Box::new(|x| x[0].abs())),
        "norm2" => Ok(Box::new(|x| x.iter().map(|v| v * v).sum())),
        _ => {
            let j: usize = name
                .strip_prefix("coord:")
                .and_then(|j| j.parse().ok())
                .ok_or_else(|| CliError::Usage(format!("unknown function {name:?}")))?;
            if j >= dim {
                return Err(CliError::Usage(format!("coord:{j} out of range for {dim} columns")));
            }
            Ok(Box::new(move |x| x[j]))
        }
    }
}

fn cmd_estimate(a: EstimateArgs, file: &FileConfig, format: OutputFormat) -> Result<(), CliError> {
    let f = &file.estimate;
    let input = require(a.input.or(f.input.clone()), "input")?;
    let kappa = require(a.kappa.or(f.kappa), "kappa")?;
    let xy = a.xy || f.xy.unwrap_or(false);
    let table = ingest::read_points(&input)?;
    let rows = table.rows.len();
    let dim = table.rows.first().map_or(0, Vec::len);
    let (label, eval): (String, RowFn) = if xy {
        let w = require(a.w.or(f.w.clone()), "w")?;
        if dim != w.len() + 1 {
            return Err(CliError::Usage(format!(
                "--xy with {} weights needs {} columns, found {dim}",
                w.len(),
                w.len() + 1
            )));
        }
        let loss = loss_of(a.loss.or(f.loss), a.loss_delta.or(f.loss_delta))?;
        let label = format!("regression_loss({})", serde_json::to_string(&loss).expect("loss serializes"));
        (label, Box::new(move |row| regression_loss_row(row, &w, &loss).expect("row width checked")))
    } else {
        let name = a.function.or(f.function.clone()).unwrap_or_else(|| "identity".into());
        let eval = point_function(&name, dim.max(1))?;
        (name, eval)
    };
    let sample = partition(table.rows, kappa)?;
    let result = mom(&sample, |x| eval(x))?;
    emit(
        &EstimateOutput {
            input,
            function: label,
            rows,
            discarded: sample.discarded(),
            result,
        },
        format,
    )
}

fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("mom-reports"))
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_suites(
    a: SuiteArgs,
    file: &FileConfig,
    seed: u64,
    out: Option<PathBuf>,
    format: OutputFormat,
    no_timestamp: bool,
    gate: bool,
) -> Result<(), CliError> {
    let f = &file.suite;
    let params = config::SuiteSection {
        name: a.suite.or(f.name.clone()),
        quick: Some(a.quick || f.quick.unwrap_or(false)),
        trials: a.trials.or(f.trials),
        draws: a.draws.or(f.draws),
        kappa: a.kappa.or(f.kappa),
        alpha: a.alpha.or(f.alpha),
        epsilon: a.epsilon.or(f.epsilon),
        delta: a.delta.or(f.delta),
        p: a.p.or(f.p),
        m_list: a.m_list.or(f.m_list.clone()),
        n: a.n.or(f.n),
        m: a.m.or(f.m),
        sets: a.sets.or(f.sets),
        candidates: a.candidates.or(f.candidates),
    };
    let names = suites::expand(&require(params.name.clone(), "suite")?)?;
    let dir = out_dir(out);
    let timestamp = (!no_timestamp).then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    let mut failed = Vec::new();
    for name in names {
        let mut run = suites::run(name, &params, seed)?;
        run.envelope.timestamp = timestamp;
        let env = &run.envelope;
        let json = serde_json::to_value(env).expect("envelope serializes");
        match format {
            OutputFormat::Json => write_file(
                &dir,
                &format!("{name}.json"),
                &serde_json::to_string_pretty(&json).expect("value serializes"),
            )?,
            OutputFormat::Csv => write_file(&dir, &format!("{name}.csv"), &flatten_csv(&json))?,
        }
        if let Some((file_name, body)) = &run.extra_csv {
            write_file(&dir, file_name, body)?;
        }
        let tag = if env.pass { "PASS" } else { "FAIL" };
        let quick = if env.quick { format!(" [{}]", suites::QUICK_NOTE) } else { String::new() };
        write_stdout(&format!("{tag} {name}: {}{quick}\n", env.summary));
        if !env.pass {
            failed.push(name.to_string());
        }
    }
    if gate && !failed.is_empty() {
        return Err(CliError::Failed(failed));
    }
    Ok(())
}

fn cmd_net(a: NetArgs, file: &FileConfig, seed: u64, format: OutputFormat) -> Result<(), CliError> {
    let f = &file.net;
    let w = a.w.or(f.w).unwrap_or(1.0);
    let beta = require(a.beta.or(f.beta), "beta")?;
    let d = require(a.d.or(f.d), "d")?;
    let audit = a.audit.or(f.audit).unwrap_or(10_000);
    let net = if a.lattice || f.lattice.unwrap_or(false) {
        lattice_net(w, beta, d, seed, audit)?
    } else {
        ball_net(w, beta, d, seed, audit)?
    };
    match format {
        OutputFormat::Json => emit(&net, format),
        OutputFormat::Csv => {
            write_stdout(&net.to_csv());
            Ok(())
        }
    }
}
