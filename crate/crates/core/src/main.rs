use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use dirichlet_fk::elliptic::Method;
use dirichlet_fk::harness::{run, Command, HarnessError, RunConfig, OUT_ENV};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Solve,
    Simulate,
    Verify,
    Bench,
    Catalog,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Simulate => Command::Simulate,
            Cmd::Verify => Command::Verify,
            Cmd::Bench => Command::Bench,
            Cmd::Catalog => Command::Catalog,
        }
    }
}

/// Semilinear problems with measure data on finite Dirichlet forms.
#[derive(Debug, Parser)]
#[command(name = "dirichlet-fk", version, after_help = format!("Output goes to --out, else ${OUT_ENV}, else ./out."))]
struct Cli {
    /// Command to run; may come from --config instead.
    #[arg(value_enum)]
    command: Option<Cmd>,
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog id, or `all`.
    #[arg(long, conflicts_with = "problem")]
    catalog: Option<String>,
    /// JSON problem descriptor.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// gauss-seidel, ladder or mc.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo paths per start node.
    #[arg(long)]
    paths: Option<usize>,
    /// Solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Grid size override.
    #[arg(long)]
    n: Option<usize>,
    /// Fractional order override.
    #[arg(long)]
    alpha: Option<f64>,
    /// Start node of `simulate`.
    #[arg(long)]
    start: Option<usize>,
    /// Number of traced paths for `simulate`.
    #[arg(long)]
    trace: Option<usize>,
    /// Grid sizes of `bench`, comma separated.
    #[arg(long, value_delimiter = ',')]
    grid_sizes: Option<Vec<usize>>,
}

fn config(cli: Cli) -> Result<RunConfig, HarnessError> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Usage {
                key: "config".into(),
                message: format!("{}: {e}", path.display()),
            })?;
            RunConfig::from_json(&text)?
        }
        (None, Some(cmd)) => RunConfig::new(cmd.into()),
        (None, None) => {
            return Err(HarnessError::Usage { key: "command".into(), message: "a command or --config is required".into() })
        }
    };
    if let Some(cmd) = cli.command {
        cfg.command = cmd.into();
    }
    if cli.catalog.is_some() {
        cfg.catalog = cli.catalog;
        cfg.problem = None;
    }
    if cli.problem.is_some() {
        cfg.problem = cli.problem;
        cfg.catalog = None;
    }
    cfg.method = cli.method.unwrap_or(cfg.method);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.paths = cli.paths.unwrap_or(cfg.paths);
    cfg.tol = cli.tol.unwrap_or(cfg.tol);
    cfg.out = cli.out.or(cfg.out);
    cfg.jobs = cli.jobs.or(cfg.jobs);
    cfg.n = cli.n.or(cfg.n);
    cfg.alpha = cli.alpha.or(cfg.alpha);
    cfg.start = cli.start.or(cfg.start);
    cfg.trace = cli.trace.or(cfg.trace);
    cfg.grid_sizes = cli.grid_sizes.or(cfg.grid_sizes);
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<bool, HarnessError> {
    let report = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::Usage { key: "jobs".into(), message: e.to_string() })?
            .install(|| run(cfg))?,
        None => run(cfg)?,
    };
    let dir = cfg.out_dir();
    report.write(&dir)?;
    let mut out = std::io::stdout().lock();
    for line in &report.summary {
        let _ = writeln!(out, "{line}");
    }
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "{}: {verdict} (report in {})", cfg.command.as_str(), dir.display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match config(cli).and_then(|cfg| execute(&cfg)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
