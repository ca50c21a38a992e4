//! maxent: batch driver for the entropic-inference engine.
//!
//! Every invocation reads one spec file, runs one subcommand, and emits one
//! result bundle. Exit codes are part of the interface: 0 success, 2 the
//! spec is not JSON, 3 the spec or the invocation is malformed, 4 the
//! engine failed numerically (including infeasible constraints), 5 I/O.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod emit;
mod run;
mod spec;

use emit::Timings;
use spec::{Overrides, Task};

#[derive(Debug)]
pub enum CliError {
    /// The spec file is not structured text at all.
    Parse(String),
    /// Schema or usage violation: the request can never succeed as written.
    Usage(String),
    /// The engine rejected the problem or failed an internal cross-check.
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Parse(_) => 2,
            CliError::Usage(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 5,
        })
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Parse(m) | CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<maxent_core::Error> for CliError {
    fn from(e: maxent_core::Error) -> CliError {
        // Engine messages are already module-qualified.
        CliError::Numerical(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "maxent",
    version,
    about = "Batch driver for the entropic-inference engine",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one constrained maximum-entropy problem.
    Solve(TaskArgs),
    /// Tabulate entropy and metric over a parameter grid and form entropic priors.
    Prior(TaskArgs),
    /// Fluctuation analysis around a canonical state.
    Fluct(TaskArgs),
    /// n-fold repetition identities and the constrained-prior cross-check.
    Repeat(TaskArgs),
    /// Run the built-in verification suite.
    Check(TaskArgs),
}

#[derive(Args)]
struct TaskArgs {
    /// Model spec file (json).
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,

    /// Output encoding.
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,

    /// Output directory. json defaults to stdout when omitted; csv writes
    /// one file per table and requires it.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Replace the spec's alpha list (prior only), comma separated.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    alpha: Option<Vec<f64>>,

    /// Replace the spec's repetition count (repeat only).
    #[arg(long, value_name = "INT")]
    n: Option<usize>,

    /// Include the finite-bath comparison (fluct only; needs a bath block).
    #[arg(long)]
    finite_bath: bool,

    /// Drop the timing block so repeated runs are byte-identical.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {}", e.message());
        return e.code();
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

/// MAXENT_THREADS caps the worker pool; 0 or unset means one worker per
/// core. Must run before the first parallel region, which sizes the pool.
fn init_thread_pool() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MAXENT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("MAXENT_THREADS: expected a thread count, got '{raw}'")))?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("MAXENT_THREADS: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let (task, args) = match &cli.command {
        Cmd::Solve(a) => (Task::Solve, a),
        Cmd::Prior(a) => (Task::Prior, a),
        Cmd::Fluct(a) => (Task::Fluct, a),
        Cmd::Repeat(a) => (Task::Repeat, a),
        Cmd::Check(a) => (Task::Check, a),
    };
    if args.alpha.is_some() && task != Task::Prior {
        return Err(CliError::Usage("--alpha applies to the prior subcommand".into()));
    }
    if args.n.is_some() && task != Task::Repeat {
        return Err(CliError::Usage("--n applies to the repeat subcommand".into()));
    }
    if args.finite_bath && task != Task::Fluct {
        return Err(CliError::Usage("--finite-bath applies to the fluct subcommand".into()));
    }

    let overrides = Overrides {
        alpha: args.alpha.clone(),
        n: args.n,
        finite_bath: args.finite_bath,
    };
    let loaded = run::load_spec(&args.spec)?;
    spec::validate(&loaded.spec, task, &overrides)?;
    let bundle = run::run_task(&loaded, task, &overrides)?;

    let timings = (!args.no_timings).then(|| Timings {
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    });
    let format = match args.format {
        FormatArg::Json => emit::Format::Json,
        FormatArg::Csv => emit::Format::Csv,
    };
    // check owns stdout for its report; its bundle only goes to --out
    let to_stdout = task != Task::Check;
    emit::emit(&bundle, format, args.out.as_deref(), timings, to_stdout)
}
