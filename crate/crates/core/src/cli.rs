//! Command-line front end: `diagnose`, `simulate`, `plot`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 a parameter missed
//! the R̂ / ESS thresholds.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chain_core::{DiagnosticConfig, DrawsMatrix, NonFinitePolicy};
use crate::error::DiagError;
use crate::plots::{self, PlotKind, PlotOptions};
use crate::report_io::{self, DrawsFileFormat, Layout, ReportFormat};
use crate::simulate::{run_sweep, Manipulation, Process, ScenarioSpec};
use crate::summary::diagnose;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

const AFTER_HELP: &str = "\
Exit status: 0 ok, 1 usage error, 2 data error, 3 thresholds exceeded.
The MCDIAG_THREADS environment variable sets the default thread count.";

#[derive(Debug, Parser)]
#[command(
    name = "mcdiag",
    version,
    about = "Convergence diagnostics for MCMC draws: rank-normalized split-Rhat, bulk/tail ESS, MCSE",
    after_help = AFTER_HELP
)]
pub struct Cli {
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, env = "MCDIAG_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Diagnose draws from a CSV file
    Diagnose(DiagnoseArgs),
    /// Run a replicated simulation sweep
    Simulate(SimulateArgs),
    /// Write diagnostic plots as SVG
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayoutArg {
    /// Columns chain, draw, then one column per parameter
    Long,
    /// One file per parameter, one column per chain
    Wide,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Draws file(s); `-` reads stdin. Several files only with --layout wide
    #[arg(required = true, num_args = 1..)]
    files: Vec<PathBuf>,

    /// File layout
    #[arg(long, value_enum, default_value_t = LayoutArg::Long)]
    layout: LayoutArg,

    /// Field delimiter (single byte)
    #[arg(long, default_value_t = ',')]
    delimiter: char,

    /// The file has no header row
    #[arg(long)]
    no_header: bool,

    /// Keep non-finite draws; affected parameters report NaN and a flag
    #[arg(long)]
    admit_nonfinite: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Report format
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,

    /// Comma-separated parameters to diagnose (default: all)
    #[arg(long, value_delimiter = ',')]
    params: Vec<String>,

    /// Flag parameters whose max rank-normalized R-hat exceeds this
    #[arg(long, default_value_t = 1.01)]
    rhat_threshold: f64,

    /// Flag parameters whose bulk- or tail-ESS is below this
    #[arg(long, default_value_t = 400.0)]
    ess_threshold: f64,

    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    /// Independent standard normal draws
    Iid,
    /// Stationary AR(1) with unit-variance innovations
    Ar1,
    /// Ratio of two AR(1) chains (Cauchy marginal)
    Cauchy,
    /// Random-walk Metropolis on the standard Cauchy (slow tails)
    CauchyNominal,
}

#[derive(Debug, Args)]
#[command(after_help = "\
Manipulation grammar: none | trend:<slope> | shift:<delta>[:<chain>] | scale:<factor>[:<chain>]
(chain is 0-based, default 0). Example: --scenario ar1 --rho 0.3 --manipulation scale:0.577:0")]
struct SimulateArgs {
    /// Generating process
    #[arg(long, value_enum)]
    scenario: ScenarioArg,

    /// Autoregressive parameter for ar1 and cauchy
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    rho: f64,

    /// Proposal standard deviation for cauchy-nominal
    #[arg(long, default_value_t = 2.5)]
    step: f64,

    /// Chains per replication
    #[arg(long, default_value_t = 4)]
    chains: usize,

    /// Draws per chain
    #[arg(long, default_value_t = 1000)]
    iters: usize,

    /// Number of replications
    #[arg(long, default_value_t = 100)]
    replications: usize,

    /// Base seed; each (replication, chain) gets its own derived stream
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Defect applied to the chains (see grammar below)
    #[arg(long, default_value = "none", allow_hyphen_values = true)]
    manipulation: Manipulation,

    /// Per-replication CSV (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write the summary (quantiles of each column) here instead of stderr
    #[arg(long)]
    summary: Option<PathBuf>,

    /// Also write replication 0's draws as a LONG CSV (parameter `theta`)
    #[arg(long)]
    emit_draws: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Rank,
    QuantileEss,
    LocalEss,
    EssEvolution,
}

impl From<KindArg> for PlotKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Rank => PlotKind::Rank,
            KindArg::QuantileEss => PlotKind::QuantileEss,
            KindArg::LocalEss => PlotKind::LocalEss,
            KindArg::EssEvolution => PlotKind::EssEvolution,
        }
    }
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Parameter to plot (default: every parameter)
    #[arg(long)]
    param: Option<String>,

    /// Plot kind
    #[arg(long, value_enum)]
    kind: KindArg,

    /// Output directory; files are named <param>_<kind>.svg
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Rank histogram bins
    #[arg(long, default_value_t = plots::DEFAULT_BINS)]
    bins: usize,

    /// Number of small intervals for local-ess
    #[arg(long, default_value_t = plots::DEFAULT_LOCAL_INTERVALS)]
    intervals: usize,

    /// Print a 40-column text chart to stdout instead of writing SVG
    #[arg(long)]
    ascii: bool,
}

/// Failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn data(e: DiagError) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: e.to_string(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    // The writers need not be Send; buffer inside the pool, copy out after.
    let (result, out, err) = pool.install(|| {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let result = match cli.command {
            Command::Diagnose(a) => cmd_diagnose(a, &mut out),
            Command::Simulate(a) => cmd_simulate(a, &mut out, &mut err),
            Command::Plot(a) => cmd_plot(a, &mut out, &mut err),
        };
        (result, out, err)
    });
    let _ = stdout.write_all(&out).and_then(|_| stdout.flush());
    let _ = stderr.write_all(&err);
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn file_format(input: &InputArgs) -> Result<DrawsFileFormat, Failure> {
    if !input.delimiter.is_ascii() {
        return Err(usage(format!(
            "delimiter `{}` is not a single byte",
            input.delimiter
        )));
    }
    let layout = match input.layout {
        LayoutArg::Long => Layout::Long,
        LayoutArg::Wide => Layout::WidePerParam,
    };
    if layout == Layout::Long && input.files.len() > 1 {
        return Err(usage("several input files need --layout wide"));
    }
    Ok(DrawsFileFormat {
        layout,
        delimiter: input.delimiter as u8,
        has_header: !input.no_header,
        nonfinite: if input.admit_nonfinite {
            NonFinitePolicy::Admit
        } else {
            NonFinitePolicy::Reject
        },
    })
}

fn read_input(input: &InputArgs) -> Result<DrawsMatrix<f64>, Failure> {
    let format = file_format(input)?;
    match format.layout {
        Layout::Long => report_io::read_draws(&input.files[0], &format),
        Layout::WidePerParam => report_io::read_draws_wide(&input.files, &format),
    }
    .map_err(data)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|source| {
        data(DiagError::File {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn io_fail(e: impl Into<DiagError>) -> Failure {
    data(e.into())
}

fn cmd_diagnose(a: DiagnoseArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let config = DiagnosticConfig {
        rhat_threshold: a.rhat_threshold,
        ess_threshold: a.ess_threshold,
        ..Default::default()
    };
    config.check().map_err(|e| usage(e.to_string()))?;
    let format = match a.format {
        FormatArg::Table => ReportFormat::Table,
        FormatArg::Json => ReportFormat::Json,
    };
    let mut draws = read_input(&a.input)?;
    if !a.params.is_empty() {
        let names: Vec<&str> = a.params.iter().map(String::as_str).collect();
        draws = draws.select(&names).map_err(data)?;
    }
    let report = diagnose(&draws, &config).map_err(data)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            report_io::write_report(&report, format, &mut w).map_err(data)?;
            w.flush().map_err(io_fail)?;
        }
        None => report_io::write_report(&report, format, &mut *stdout).map_err(data)?,
    }
    Ok(if report.any_violation() {
        EXIT_THRESHOLD
    } else {
        EXIT_OK
    })
}

fn cmd_simulate(
    a: SimulateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let process = match a.scenario {
        ScenarioArg::Iid => Process::IidNormal,
        ScenarioArg::Ar1 => Process::Ar1 { rho: a.rho },
        ScenarioArg::Cauchy => Process::CauchyRatio { rho: a.rho },
        ScenarioArg::CauchyNominal => Process::CauchyNominal { step: a.step },
    };
    let spec = ScenarioSpec {
        process,
        manipulation: a.manipulation,
        chains: a.chains,
        iterations: a.iters,
        replications: a.replications,
        seed: a.seed,
    };
    spec.check().map_err(|e| usage(e.to_string()))?;
    if spec.chains < 2 {
        return Err(usage("need at least 2 chains"));
    }
    if let Some(path) = &a.emit_draws {
        let draws = DrawsMatrix::from_chains("theta", spec.generate(0)).map_err(data)?;
        let mut w = create(path)?;
        report_io::write_draws(&draws, &mut w).map_err(data)?;
        w.flush().map_err(io_fail)?;
    }
    let result = run_sweep(&spec).map_err(data)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            result.write_csv(&mut w).map_err(data)?;
            w.flush().map_err(io_fail)?;
        }
        None => result.write_csv(&mut *stdout).map_err(data)?,
    }
    match &a.summary {
        Some(path) => {
            let mut w = create(path)?;
            result.write_summary(&mut w).map_err(data)?;
            w.flush().map_err(io_fail)?;
        }
        None => result.write_summary(&mut *stderr).map_err(data)?,
    }
    Ok(EXIT_OK)
}

fn cmd_plot(a: PlotArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    if a.bins == 0 || a.intervals == 0 {
        return Err(usage("--bins and --intervals must be positive"));
    }
    let kind = PlotKind::from(a.kind);
    let opts = PlotOptions {
        bins: a.bins,
        local_intervals: a.intervals,
        ..Default::default()
    };
    let draws = read_input(&a.input)?;
    let params: Vec<String> = match &a.param {
        Some(p) => {
            draws.require(p).map_err(data)?;
            vec![p.clone()]
        }
        None => draws.names().to_vec(),
    };
    if a.ascii {
        for p in &params {
            let text = plots::render_ascii(&draws, p, kind, &opts).map_err(data)?;
            stdout.write_all(text.as_bytes()).map_err(io_fail)?;
        }
        return Ok(EXIT_OK);
    }
    fs::create_dir_all(&a.out).map_err(|source| {
        data(DiagError::File {
            path: a.out.clone(),
            source,
        })
    })?;
    let rendered = if a.param.is_some() {
        let svg = plots::render_svg(&draws, &params[0], kind, &opts).map_err(data)?;
        vec![(plots::file_name(&params[0], kind), svg)]
    } else {
        plots::render_all(&draws, kind, &opts).map_err(data)?
    };
    for (name, svg) in rendered {
        let path = a.out.join(name);
        fs::write(&path, svg).map_err(|source| {
            data(DiagError::File {
                path: path.clone(),
                source,
            })
        })?;
        let _ = writeln!(stderr, "wrote {}", path.display());
    }
    Ok(EXIT_OK)
}
