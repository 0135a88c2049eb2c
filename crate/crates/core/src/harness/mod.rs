//! Run configuration, dispatch to the solvers and checks, and report
//! emission.

mod study;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsde::{martingale_residual_check, BsdeError, LadderConfig, MartingaleCheckConfig};
use crate::catalog::{build_catalog_problem, load_problem, CatalogError, Problem, CATALOG_IDS};
use crate::elliptic::{
    duality_check, green_bound_check, l1_bound_check, solve_elliptic_gauss_seidel, solve_elliptic_ladder,
    solve_elliptic_mc, truncation_energy_check, tv_comparison_check, vanishing_energy_check, weak_form_check,
    EllipticError, EllipticSolution, GaussSeidelConfig, McSolveConfig, Method,
};
use crate::form::FormError;
use crate::linalg::{sup_diff, sup_norm};
use crate::markov::{additive_functional, mc_expectation, revuz_check, sample_paths, write_path_trace, Chain, McError};

pub use study::{convergence_study, ConvergenceRow, ConvergenceStudy, Oracle};

/// Versioned schema id of `report.json`.
pub const SCHEMA: &str = "dirichlet-fk.report.v1";

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DIRICHLET_FK_OUT";

/// Absolute tolerance of the duality and weak-form checks.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Tolerance of the inequality checks.
pub const BOUND_TOL: f64 = 1e-9;
/// Gate, in standard errors, of the Monte Carlo checks.
pub const MC_GATE: f64 = 4.0;
/// Longest time window of the Revuz check; the window is also capped at
/// `0.1 / max λ` so that the bias bound stays informative.
pub const REVUZ_TIME: f64 = 0.01;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration at `{key}`: {message}")]
    Usage { key: String, message: String },
    #[error("problem `{problem}`: {source}")]
    Problem { problem: String, source: CatalogError },
    #[error("problem `{problem}`: {source}")]
    Solve { problem: String, source: EllipticError },
    #[error("problem `{problem}`: {source}")]
    Mc { problem: String, source: McError },
    #[error("problem `{problem}`: {source}")]
    Bsde { problem: String, source: BsdeError },
    #[error("problem `{problem}`: {source}")]
    Form { problem: String, source: FormError },
    #[error("problem `{problem}`: oracle unavailable: {reason}")]
    Oracle { problem: String, reason: String },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// `2` for configuration and problem-source errors, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage { .. } | HarnessError::Problem { .. } => 2,
            _ => 1,
        }
    }

    fn usage(key: &str, message: impl Into<String>) -> Self {
        HarnessError::Usage { key: key.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Simulate,
    Verify,
    Bench,
    Catalog,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Bench => "bench",
            Command::Catalog => "catalog",
        }
    }
}

fn default_method() -> Method {
    Method::GaussSeidel
}

fn default_paths() -> usize {
    100_000
}

fn default_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Catalog id, or `all` for every catalog problem.
    #[serde(default)]
    pub catalog: Option<String>,
    /// JSON problem descriptor.
    #[serde(default)]
    pub problem: Option<PathBuf>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo paths per start node.
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Solver tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Grid size override for catalog problems.
    #[serde(default)]
    pub n: Option<usize>,
    /// Fractional order override for catalog problems.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Start node of `simulate`; the middle node when absent.
    #[serde(default)]
    pub start: Option<usize>,
    /// Number of paths whose jumps `simulate` writes out.
    #[serde(default)]
    pub trace: Option<usize>,
    /// Grid sizes of `bench`.
    #[serde(default)]
    pub grid_sizes: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            catalog: None,
            problem: None,
            method: default_method(),
            seed: 0,
            paths: default_paths(),
            tol: default_tol(),
            n: None,
            alpha: None,
            out: None,
            jobs: None,
            start: None,
            trace: None,
            grid_sizes: None,
        }
    }

    /// Parses a JSON config; errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = match e.path().to_string() {
                p if p == "." => "<root>".to_string(),
                p => p,
            };
            HarnessError::usage(&key, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(HarnessError::usage("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.paths < 2 {
            return Err(HarnessError::usage("paths", format!("at least 2 paths are required, got {}", self.paths)));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(HarnessError::usage("alpha", format!("must lie in (0, 2), got {alpha}")));
            }
        }
        if self.n.is_some_and(|n| n < 2) {
            return Err(HarnessError::usage("n", "at least 2 nodes are required"));
        }
        if self.jobs == Some(0) {
            return Err(HarnessError::usage("jobs", "must be at least 1"));
        }
        if self.catalog.is_some() && self.problem.is_some() {
            return Err(HarnessError::usage("problem", "give either a catalog id or a problem file, not both"));
        }
        if let Some(id) = &self.catalog {
            if id != "all" && !CATALOG_IDS.contains(&id.as_str()) {
                return Err(HarnessError::usage("catalog", format!("unknown id '{id}'")));
            }
        }
        match self.command {
            Command::Catalog => {}
            Command::Bench => {
                if self.problem.is_some() {
                    return Err(HarnessError::usage("problem", "bench runs on catalog families only"));
                }
                if let Some(sizes) = &self.grid_sizes {
                    study::check_sizes(sizes)?;
                }
            }
            _ if self.catalog.is_none() && self.problem.is_none() => {
                return Err(HarnessError::usage("catalog", "a catalog id or a problem file is required"));
            }
            _ => {}
        }
        if self.command == Command::Simulate && self.catalog.as_deref() == Some("all") {
            return Err(HarnessError::usage("catalog", "simulate runs on a single problem"));
        }
        Ok(())
    }

    /// Output directory: `out`, else the environment default, else `out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn problem_ids(&self) -> Vec<String> {
        match self.catalog.as_deref() {
            Some("all") => CATALOG_IDS.iter().map(|s| s.to_string()).collect(),
            Some(id) => vec![id.to_string()],
            None => Vec::new(),
        }
    }

    fn load(&self, id: &str) -> Result<Problem, HarnessError> {
        build_catalog_problem(id, self.n, self.alpha)
            .map_err(|source| HarnessError::Problem { problem: id.to_string(), source })
    }

    /// Problems named by the config, in catalog order.
    pub fn problems(&self) -> Result<Vec<Problem>, HarnessError> {
        if let Some(path) = &self.problem {
            let problem = load_problem(path)
                .map_err(|source| HarnessError::Problem { problem: path.display().to_string(), source })?;
            return Ok(vec![problem]);
        }
        self.problem_ids().iter().map(|id| self.load(id)).collect()
    }
}

/// CSV table of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }
}

/// Results of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: Command,
    pub config: RunConfig,
    /// Internal tolerances and gates that affect the results.
    pub settings: BTreeMap<&'static str, f64>,
    pub pass: bool,
    pub summary: Vec<String>,
    pub tables: Vec<Table>,
}

impl Report {
    fn new(config: &RunConfig) -> Self {
        let mut config = config.clone();
        config.out = Some(config.out_dir());
        Self {
            schema: SCHEMA,
            command: config.command,
            config,
            settings: BTreeMap::new(),
            pass: true,
            summary: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes every table and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |path: PathBuf| move |source| HarnessError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        for t in &self.tables {
            let path = dir.join(t.file_name());
            std::fs::write(&path, t.to_csv()).map_err(io(path.clone()))?;
        }
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json() + "\n").map_err(io(path.clone()))
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn solve_with(problem: &Problem, cfg: &RunConfig, method: Method) -> Result<EllipticSolution, HarnessError> {
    let err = |source| HarnessError::Solve { problem: problem.id.clone(), source };
    let (form, driver, mu) = (&problem.form, &problem.driver, &problem.mu);
    match method {
        Method::GaussSeidel => {
            solve_elliptic_gauss_seidel(form, driver, mu, &GaussSeidelConfig { tol: cfg.tol, ..Default::default() })
        }
        Method::Ladder => solve_elliptic_ladder(form, driver, mu, &LadderConfig { tol_outer: cfg.tol, ..Default::default() }),
        Method::Mc => solve_elliptic_mc(form, driver, mu, &McSolveConfig { paths: cfg.paths, seed: cfg.seed, ..Default::default() }),
    }
    .map_err(err)
}

fn solution_table(problem: &Problem, sol: &EllipticSolution) -> Table {
    let dim = problem.form.space().coords().map_or(1, |c| c[0].len());
    let mut header = vec!["node", "x"];
    if dim == 2 {
        header.push("y");
    }
    header.push("value");
    if sol.diagnostics.se.is_some() {
        header.push("se");
    }
    let mut table = Table::new(format!("{}.solution", problem.id), &header);
    for x in 0..problem.form.len() {
        let mut row = vec![x.to_string()];
        match problem.form.space().coord(x) {
            Some(p) => row.extend(p.iter().map(|&c| num(c))),
            None => row.extend(std::iter::repeat_n(String::new(), dim)),
        }
        row.push(num(sol.u[x]));
        if let Some(se) = &sol.diagnostics.se {
            row.push(num(se[x]));
        }
        table.push(row);
    }
    table
}

fn ladder_table(problem: &Problem, sol: &EllipticSolution) -> Option<Table> {
    let trace = sol.diagnostics.ladder.as_ref()?;
    let mut table = Table::new(format!("{}.ladder", problem.id), &["level", "horizon", "sup_increment", "inner_iterations"]);
    for l in trace {
        table.push(vec![
            l.level.to_string(),
            num(l.horizon),
            l.increment.map(num).unwrap_or_default(),
            l.newton_iterations.to_string(),
        ]);
    }
    Some(table)
}

/// Runs problems in parallel and returns results in input order.
fn per_problem<T: Send>(
    problems: &[Problem],
    f: impl Fn(&Problem) -> Result<T, HarnessError> + Sync + Send,
) -> Result<Vec<T>, HarnessError> {
    problems.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

fn run_solve(cfg: &RunConfig, report: &mut Report) -> Result<(), HarnessError> {
    let problems = cfg.problems()?;
    let solved = per_problem(&problems, |p| solve_with(p, cfg, cfg.method))?;
    for (p, sol) in problems.iter().zip(&solved) {
        report.tables.push(solution_table(p, sol));
        if let Some(t) = ladder_table(p, sol) {
            report.tables.push(t);
        }
        let mut line = format!("{}: {} on {} nodes, residual {:.3e}", p.id, sol.method.as_str(), p.form.len(), sol.residual);
        if let Some(se) = sol.max_se() {
            line += &format!(", max se {se:.3e}");
        }
        report.summary.push(line);
    }
    Ok(())
}

fn run_simulate(cfg: &RunConfig, report: &mut Report) -> Result<(), HarnessError> {
    let problem = cfg.problems()?.remove(0);
    let id = problem.id.clone();
    let mc = |source| HarnessError::Mc { problem: id.clone(), source };
    let form_err = |source| HarnessError::Form { problem: id.clone(), source };
    let n = problem.form.len();
    let start = cfg.start.unwrap_or(n / 2);
    if start >= n {
        return Err(HarnessError::usage("start", format!("node {start} out of range for {n} nodes")));
    }
    let chain = Chain::new(&problem.form);
    let horizon = chain.default_horizon();
    report.settings.insert("horizon", horizon);
    let lifetime = mc_expectation(&chain, start, |p| p.duration(), cfg.paths, cfg.seed, horizon).map_err(mc)?;
    let af = mc_expectation(
        &chain,
        start,
        |p| additive_functional(p, &problem.mu, &problem.form).map(|a| a.value).unwrap_or(f64::NAN),
        cfg.paths,
        cfg.seed,
        horizon,
    )
    .map_err(mc)?;
    let exact_lifetime = problem.form.green(&vec![1.0; n]).map_err(form_err)?[start];
    let exact_af = problem.form.potential(&problem.mu, 0.0).map_err(form_err)?[start];
    let mut table = Table::new(format!("{id}.simulate"), &["start", "quantity", "estimate", "se", "exact", "pass"]);
    for (name, est, exact) in [("lifetime", lifetime, exact_lifetime), ("additive_functional", af, exact_af)] {
        let pass = (est.mean - exact).abs() <= MC_GATE * est.se;
        report.pass &= pass;
        table.push(vec![start.to_string(), name.into(), num(est.mean), num(est.se), num(exact), pass.to_string()]);
        report.summary.push(format!("{id}: {name} from node {start}: {:.6} ± {:.2e} (exact {exact:.6})", est.mean, est.se));
    }
    report.tables.push(table);
    if let Some(k) = cfg.trace {
        let paths = sample_paths(&chain, start, k, cfg.seed, horizon);
        let mut buf = Vec::new();
        write_path_trace(&mut buf, &paths).map_err(mc)?;
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let header: Vec<String> = rdr.headers().expect("trace header").iter().map(String::from).collect();
        let mut trace = Table { name: format!("{id}.trace"), header, rows: Vec::new() };
        for rec in rdr.records() {
            trace.push(rec.expect("trace row").iter().map(String::from).collect());
        }
        report.tables.push(trace);
    }
    Ok(())
}

struct CheckRow {
    check: &'static str,
    lhs: f64,
    rhs: f64,
    pass: bool,
}

impl CheckRow {
    fn bound(check: &'static str, lhs: f64, rhs: f64, pass: bool) -> Self {
        Self { check, lhs, rhs, pass }
    }
}

/// Truncation levels `0, 0.25, …, 2‖u‖_∞`.
fn levels(u: &[f64]) -> Vec<f64> {
    let top = 2.0 * sup_norm(u);
    let count = (top / 0.25).floor() as usize;
    (0..=count).map(|i| i as f64 * 0.25).collect()
}

fn verify_problem(problem: &Problem, cfg: &RunConfig) -> Result<Vec<CheckRow>, HarnessError> {
    let id = problem.id.clone();
    let solve_err = |source| HarnessError::Solve { problem: id.clone(), source };
    let (form, driver, mu) = (&problem.form, &problem.driver, &problem.mu);
    let mut rows = Vec::new();
    let sol = match cfg.method {
        Method::Mc => {
            let mc = solve_with(problem, cfg, Method::Mc)?;
            let reference = solve_with(problem, cfg, Method::GaussSeidel)?;
            let gate = 3.0 * mc.max_se().unwrap_or(0.0);
            let diff = sup_diff(&mc.u, &reference.u);
            rows.push(CheckRow::bound("mc_agreement", diff, gate, diff <= gate));
            reference
        }
        method => solve_with(problem, cfg, method)?,
    };
    if let Some(trace) = &sol.diagnostics.ladder {
        let incs: Vec<f64> = trace.iter().filter_map(|l| l.increment).collect();
        let last = incs.last().copied().unwrap_or(0.0);
        rows.push(CheckRow::bound("ladder_increment", last, cfg.tol.max(1e-8), last <= cfg.tol.max(1e-8)));
    }
    let weak = weak_form_check(form, &sol, mu).map_err(|e| solve_err(e.into()))?;
    rows.push(CheckRow::bound("weak_form", weak, IDENTITY_TOL, weak <= IDENTITY_TOL));
    let dual = duality_check(form, &sol, mu, None, IDENTITY_TOL).map_err(solve_err)?;
    rows.push(CheckRow::bound("duality", dual.max_residual, IDENTITY_TOL, dual.pass));
    let l1 = l1_bound_check(&sol, driver, mu, form.measure(), BOUND_TOL).map_err(|e| solve_err(e.into()))?;
    rows.push(CheckRow::bound("l1_bound", l1.lhs, l1.rhs, l1.pass));
    let green = green_bound_check(form, &sol, mu, BOUND_TOL).map_err(|e| solve_err(e.into()))?;
    rows.push(CheckRow::bound("green_bound", green.lhs, green.rhs, green.pass));
    let ks = levels(&sol.u);
    for (name, report) in [
        ("truncation_energy", truncation_energy_check(form, &sol, mu, &ks, BOUND_TOL).map_err(solve_err)?),
        ("vanishing_energy", vanishing_energy_check(form, &sol, mu, &ks, BOUND_TOL).map_err(solve_err)?),
    ] {
        let relative = |r: &&crate::elliptic::TruncationRow| if r.bound > 0.0 { r.slack / r.bound } else { f64::INFINITY };
        let worst = report
            .rows
            .iter()
            .min_by(|a, b| relative(a).total_cmp(&relative(b)))
            .expect("k = 0 is always present");
        let pass = report.pass() && report.vanishes_beyond_sup != Some(false);
        rows.push(CheckRow::bound(name, worst.energy, worst.bound, pass));
    }
    let tv = tv_comparison_check(form, &mu.positive_part(), &mu.variation(), BOUND_TOL).map_err(solve_err)?;
    rows.push(CheckRow::bound("tv_comparison", tv.tv1, tv.tv2, tv.pass.unwrap_or(false)));

    let mc_err = |source| HarnessError::Mc { problem: id.clone(), source };
    let chain = Chain::new(form);
    let scale = sup_norm(&sol.u);
    let f: Vec<f64> = sol.u.iter().map(|v| if scale > 0.0 { v / scale } else { 1.0 }).collect();
    let max_rate = chain.exit_rates().iter().copied().fold(0.0, f64::max);
    let t = if max_rate > 0.0 { REVUZ_TIME.min(0.1 / max_rate) } else { REVUZ_TIME };
    let revuz = revuz_check(&chain, &f, mu, t, cfg.paths, cfg.seed).map_err(mc_err)?;
    rows.push(CheckRow::bound("revuz", revuz.deviation(), 3.0 * revuz.se + revuz.bias_bound, revuz.passes(3.0)));
    let mcfg = MartingaleCheckConfig { paths: cfg.paths, seed: cfg.seed, gate: MC_GATE, ..Default::default() };
    let mart = martingale_residual_check(&chain, &sol.u, driver, mu, &mcfg).map_err(mc_err)?;
    rows.push(CheckRow::bound("martingale", mart.max_z, mart.gate, mart.passes()));
    Ok(rows)
}

fn run_verify(cfg: &RunConfig, report: &mut Report) -> Result<(), HarnessError> {
    report.settings.insert("identity_tol", IDENTITY_TOL);
    report.settings.insert("bound_tol", BOUND_TOL);
    report.settings.insert("mc_gate", MC_GATE);
    report.settings.insert("revuz_time", REVUZ_TIME);
    let problems = cfg.problems()?;
    let results = per_problem(&problems, |p| verify_problem(p, cfg))?;
    let mut table = Table::new("checks", &["check", "problem", "lhs", "rhs", "slack", "pass"]);
    for (p, rows) in problems.iter().zip(results) {
        let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.check).collect();
        report.pass &= failed.is_empty();
        report.summary.push(if failed.is_empty() {
            format!("{}: all {} checks pass", p.id, rows.len())
        } else {
            format!("{}: failed {}", p.id, failed.join(", "))
        });
        for r in rows {
            table.push(vec![r.check.into(), p.id.clone(), num(r.lhs), num(r.rhs), num(r.rhs - r.lhs), r.pass.to_string()]);
        }
    }
    report.tables.push(table);
    Ok(())
}

fn run_bench(cfg: &RunConfig, report: &mut Report) -> Result<(), HarnessError> {
    let ids = match cfg.problem_ids() {
        ids if ids.is_empty() => vec!["lap1d-dirac".to_string(), "frac-a10".to_string(), "diag-5.7".to_string()],
        ids => ids,
    };
    let sizes = cfg.grid_sizes.clone().unwrap_or_else(|| vec![64, 128, 256, 512]);
    let studies: Vec<Result<ConvergenceStudy, HarnessError>> = ids
        .par_iter()
        .map(|id| {
            let oracle = Oracle::for_catalog(id).ok_or_else(|| HarnessError::Oracle {
                problem: id.clone(),
                reason: "no reference solution for this family".into(),
            })?;
            convergence_study(id, &sizes, oracle, cfg.alpha)
        })
        .collect();
    for study in studies {
        let study = study?;
        report.pass &= study.pass;
        report.summary.push(study.summary());
        report.tables.push(study.table());
    }
    Ok(())
}

fn run_catalog(report: &mut Report) -> Result<(), HarnessError> {
    let mut table = Table::new("catalog", &["id", "family", "nodes", "transient"]);
    for id in CATALOG_IDS {
        let p = build_catalog_problem(id, None, None)
            .map_err(|source| HarnessError::Problem { problem: id.to_string(), source })?;
        let transient = p.form.is_transient().0;
        table.push(vec![id.into(), p.descriptor.family.name().into(), p.form.len().to_string(), transient.to_string()]);
        report.summary.push(format!("{id}: {} with {} nodes", p.descriptor.family.name(), p.form.len()));
    }
    report.tables.push(table);
    Ok(())
}

/// Validates `config` and dispatches to the named command.
pub fn run(config: &RunConfig) -> Result<Report, HarnessError> {
    config.validate()?;
    let mut report = Report::new(config);
    match config.command {
        Command::Solve => run_solve(config, &mut report)?,
        Command::Simulate => run_simulate(config, &mut report)?,
        Command::Verify => run_verify(config, &mut report)?,
        Command::Bench => run_bench(config, &mut report)?,
        Command::Catalog => run_catalog(&mut report)?,
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_cfg(id: &str) -> RunConfig {
        RunConfig { catalog: Some(id.into()), ..RunConfig::new(Command::Solve) }
    }

    #[test]
    fn diagonal_solve_is_reciprocal() {
        let report = run(&solve_cfg("diag-5.7")).unwrap();
        let table = report.table("diag-5.7.solution").unwrap();
        assert_eq!(table.header, ["node", "x", "value"]);
        for row in &table.rows {
            let x: f64 = row[1].parse().unwrap();
            let u: f64 = row[2].parse().unwrap();
            assert!((u * x.abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn unknown_key_names_the_path() {
        let err = RunConfig::from_json(r#"{"command": "solve", "catalog": "lap2d", "tolerance": 1}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("tolerance"), "{err}");
    }

    #[test]
    fn range_errors_are_usage_errors() {
        let cases = [
            r#"{"command": "solve", "catalog": "frac-a10", "alpha": 3}"#,
            r#"{"command": "solve", "catalog": "lap2d", "tol": 0}"#,
            r#"{"command": "solve", "catalog": "lap2d", "method": "mc", "paths": 1}"#,
            r#"{"command": "solve"}"#,
            r#"{"command": "solve", "catalog": "nope"}"#,
            r#"{"command": "bench", "grid_sizes": [64, 32, 128]}"#,
        ];
        for text in cases {
            let err = RunConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig { seed: 9, method: Method::Mc, ..solve_cfg("lap2d") };
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn solve_is_byte_reproducible() {
        let cfg = RunConfig { method: Method::Mc, paths: 2000, seed: 3, n: Some(8), ..solve_cfg("lap1d-dirac") };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.tables[0].to_csv(), b.tables[0].to_csv());
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.tables[0].header.last().unwrap(), "se");
    }

    #[test]
    fn verify_small_problem_passes() {
        let cfg = RunConfig {
            command: Command::Verify,
            method: Method::Ladder,
            paths: 20_000,
            n: Some(8),
            ..solve_cfg("lap1d-dirac")
        };
        let report = run(&cfg).unwrap();
        let table = report.table("checks").unwrap();
        assert_eq!(table.header, ["check", "problem", "lhs", "rhs", "slack", "pass"]);
        assert!(report.pass, "{:?}", table.rows);
        let names: Vec<&str> = table.rows.iter().map(|r| r[0].as_str()).collect();
        for check in ["duality", "l1_bound", "truncation_energy", "vanishing_energy", "revuz", "martingale"] {
            assert!(names.contains(&check), "{check} missing");
        }
    }

    #[test]
    fn catalog_lists_every_id() {
        let report = run(&RunConfig::new(Command::Catalog)).unwrap();
        let ids: Vec<&str> = report.tables[0].rows.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(ids, CATALOG_IDS);
    }

    #[test]
    fn simulate_matches_potentials() {
        let cfg = RunConfig {
            command: Command::Simulate,
            paths: 20_000,
            n: Some(8),
            trace: Some(3),
            ..solve_cfg("lap1d-dirac")
        };
        let report = run(&cfg).unwrap();
        assert!(report.pass, "{:?}", report.summary);
        let trace = report.table("lap1d-dirac.trace").unwrap();
        assert_eq!(trace.header, ["path", "step", "state", "holding"]);
        assert!(!trace.rows.is_empty());
    }
}
