//! Command-line front end: `solve-det`, `solve-svi`, `converge`, `validate`.
//!
//! Exit status is 0 on success, 1 on invalid input or a failed validation,
//! 2 when the solver stalls (`NoConvergence`) or leaves its guard radius.
//! Errors go to standard error as one JSON object per line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::convex::DomainGeometry;
use crate::det_solver::{converge_ladder, solve_skorohod, RefinementLevel, SkorohodSolution};
use crate::diagnostics::{convergence_slope, slope_points, standard_diagnostics, SlopeFit, SolutionDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::oblique_field::ValidationReport;
use crate::rng::GENERATOR_ID;
use crate::scenario::{Built, Mode, Scenario, ScenarioFile, Snapped};
use crate::sde::{monte_carlo, solve_svi_path};

pub const THREADS_ENV: &str = "OBLIQUE_SKOROHOD_THREADS";
const VALIDATION_PROBES: usize = 256;
const VALIDATION_SEED: u64 = 0x7661;

#[derive(Debug, Parser)]
#[command(name = "oblique-skorohod", version, about = "Generalized Skorohod problems and SVIs with oblique subgradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deterministic solve with ε-refinement and diagnostics.
    SolveDet(RunArgs),
    /// Stochastic solve on one Brownian path, or a Monte Carlo batch with --paths.
    SolveSvi(RunArgs),
    /// Runs the whole ε ladder and fits the convergence slope.
    Converge(RunArgs),
    /// Checks the scenario's field, convex data and geometry without solving.
    Validate(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    /// Output directory for summary.json and CSV files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of Monte Carlo paths (solve-svi).
    #[arg(long)]
    pub paths: Option<usize>,
    /// Write one CSV per Monte Carlo path under OUT/paths/.
    #[arg(long)]
    pub dump_paths: bool,
    /// Overrides the scenario's refinement tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Overrides the scenario's Brownian seed (base seed for batches).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppresses the summary on stdout.
    #[arg(long)]
    pub quiet: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveDet(_) => "solve-det",
            Command::SolveSvi(_) => "solve-svi",
            Command::Converge(_) => "converge",
            Command::Validate(_) => "validate",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::SolveDet(a) | Command::SolveSvi(a) | Command::Converge(a) | Command::Validate(a) => a,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoConvergence { .. } | Error::StabilityBreach { .. } => 2,
        _ => 1,
    }
}

fn report_error(err: &Error) {
    let mut obj = json!({ "error": err.kind(), "message": err.to_string() });
    if let Error::NoConvergence { history, .. } = err {
        obj["refinement_history"] = json!(history);
    }
    eprintln!("{obj}");
}

/// Runs the parsed command line and returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    mode: &'static str,
    version: &'static str,
    generator: &'static str,
    scenario: &'a Scenario,
    snapped: Snapped,
    #[serde(skip_serializing_if = "Option::is_none")]
    geometry: Option<&'a DomainGeometry>,
}

#[derive(Debug, Serialize)]
struct SolveResult {
    tv_k: f64,
    eps: Option<f64>,
    final_x: Vec<f64>,
    final_k: Vec<f64>,
    max_penalty_gradient: f64,
    feasibility_defect: f64,
    refinement_history: Vec<RefinementLevel>,
    diagnostics: SolutionDiagnostics,
    diagnostics_passed: bool,
}

#[derive(Debug, Serialize)]
struct Convergence {
    points: Vec<(f64, f64)>,
    fit: SlopeFit,
}

#[derive(Debug, Serialize)]
struct ValidationSummary {
    passed: bool,
    field: ValidationReport,
    phi_lipschitz_excess: f64,
    drift_bound_excess: f64,
    diffusion_bound_excess: Option<f64>,
}

fn execute(cli: &Cli) -> Result<i32> {
    let args = cli.command.args();
    let mut file = ScenarioFile::load(&args.scenario)?;
    if let Some(tol) = args.tol {
        file.scenario.tol = tol;
    }
    if let (Some(seed), Some(b)) = (args.seed, file.scenario.brownian.as_mut()) {
        b.seed = seed;
    }
    let built = file.scenario.build(&file.base_dir)?;
    let expected = match cli.command {
        Command::SolveDet(_) | Command::Converge(_) => Some(Mode::Deterministic),
        Command::SolveSvi(_) => Some(Mode::Stochastic),
        Command::Validate(_) => None,
    };
    if expected.is_some_and(|m| m != built.mode) {
        return Err(Error::InvalidInput(format!(
            "{} needs a scenario with {}",
            cli.command.name(),
            if built.mode == Mode::Deterministic { "\"brownian\"" } else { "\"m\"" }
        )));
    }
    if args.paths.is_some() && !matches!(cli.command, Command::SolveSvi(_)) {
        return Err(Error::InvalidInput("--paths only applies to solve-svi".into()));
    }
    if args.dump_paths && (args.paths.is_none() || args.out.is_none()) {
        return Err(Error::InvalidInput("--dump-paths needs --paths and --out".into()));
    }
    let meta = RunMeta {
        mode: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        generator: GENERATOR_ID,
        scenario: &file.scenario,
        snapped: built.snapped()?,
        geometry: built.geometry.as_ref(),
    };
    let out = Output { dir: args.out.as_deref(), quiet: args.quiet };
    match &cli.command {
        Command::SolveDet(_) => {
            let sol = solve_skorohod(&built.problem, built.input.as_ref().expect("deterministic input"), &built.refinement)?;
            let result = summarize_solution(&built, &file.scenario, &sol)?;
            out.solution(&sol)?;
            out.summary(&json!({ "run": meta, "result": result }))?;
            Ok(0)
        }
        Command::Converge(_) => {
            let sol = converge_ladder(&built.problem, built.input.as_ref().expect("deterministic input"), &built.refinement)?;
            let points = slope_points(&sol.refinement_history);
            let fit = convergence_slope(&points)?;
            let result = summarize_solution(&built, &file.scenario, &sol)?;
            out.solution(&sol)?;
            out.summary(&json!({ "run": meta, "result": result, "convergence": Convergence { points, fit } }))?;
            Ok(0)
        }
        Command::SolveSvi(_) => {
            let g = built.diffusion.as_ref().expect("stochastic diffusion");
            let driver = built.driver.expect("stochastic driver");
            let n = built.n_delay.expect("stochastic delay");
            match args.paths {
                None => {
                    let sol = solve_svi_path(&built.problem, g, &driver, n, &built.refinement)?;
                    let result = summarize_solution(&built, &file.scenario, &sol)?;
                    out.solution(&sol)?;
                    out.summary(&json!({ "run": meta, "result": result }))?;
                    Ok(0)
                }
                Some(n_paths) => {
                    let pool = thread_pool()?;
                    let (summary, outcomes) = pool.install(|| monte_carlo(&built.problem, g, &driver, n, &built.refinement, n_paths, driver.seed))?;
                    if args.dump_paths {
                        let dir = args.out.as_ref().expect("checked above").join("paths");
                        fs::create_dir_all(&dir)?;
                        for o in &outcomes {
                            if let Ok(sol) = &o.result {
                                write_solution_csv(sol, fs::File::create(dir.join(format!("path_{}.csv", o.seed)))?)?;
                            }
                        }
                    }
                    let all_failed = summary.succeeded == 0;
                    out.summary(&json!({ "run": meta, "monte_carlo": &summary }))?;
                    if all_failed {
                        let f = &summary.failures[0];
                        let message = format!("all {} paths failed; first (seed {}): {}", summary.paths, f.seed, f.message);
                        eprintln!("{}", json!({ "error": f.kind, "message": message }));
                        return Ok(if matches!(f.kind.as_str(), "no_convergence" | "stability_breach") { 2 } else { 1 });
                    }
                    Ok(0)
                }
            }
        }
        Command::Validate(_) => {
            let report = validate(&built)?;
            let passed = report.passed;
            out.summary(&json!({ "run": meta, "validation": report }))?;
            if !passed {
                report_error(&Error::Validation("scenario failed validation".into()));
                return Ok(1);
            }
            Ok(0)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::InvalidInput(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::InvalidInput(format!("{THREADS_ENV} must be >= 1")));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidInput(e.to_string()))
}

fn summarize_solution(built: &Built, scenario: &Scenario, sol: &SkorohodSolution) -> Result<SolveResult> {
    let interior = built.interior();
    let mut diagnostics = standard_diagnostics(sol, &built.problem.phi, interior.as_ref().map(|(u, r)| (u, *r)))?;
    diagnostics.vi.tol = scenario.tol_vi * (1.0 + sol.tv_k);
    let passed = diagnostics.vi.passed() && diagnostics.interior_ball.as_ref().is_none_or(|a| a.passed());
    Ok(SolveResult {
        tv_k: sol.tv_k,
        eps: sol.eps,
        final_x: sol.x.last().iter().copied().collect(),
        final_k: sol.k.last().iter().copied().collect(),
        max_penalty_gradient: sol.max_penalty_gradient,
        feasibility_defect: sol.feasibility_defect,
        refinement_history: sol.refinement_history.clone(),
        diagnostics,
        diagnostics_passed: passed,
    })
}

fn validate(built: &Built) -> Result<ValidationSummary> {
    let domain = built.problem.phi.domain();
    let probes = domain.probe_cloud(VALIDATION_PROBES, VALIDATION_SEED)?;
    let field = built.problem.field.validate(&probes)?;
    let phi_lipschitz_excess = built.problem.phi.lipschitz_excess(&probes[..VALIDATION_PROBES.min(64)]);
    let times: Vec<f64> = (0..=8).map(|j| j as f64 * built.horizon / 8.0).collect();
    let drift_bound_excess = built.problem.drift.bound_excess(domain, &probes, &times);
    let diffusion_bound_excess = built.diffusion.as_ref().map(|g| probes.iter().map(|x| g.eval(0.0, x).norm() - g.bound()).fold(f64::NEG_INFINITY, f64::max));
    let slack = 1e-12;
    let passed = field.passed() && phi_lipschitz_excess <= slack && drift_bound_excess <= slack && diffusion_bound_excess.is_none_or(|e| e <= slack);
    Ok(ValidationSummary { passed, field, phi_lipschitz_excess, drift_bound_excess, diffusion_bound_excess })
}

struct Output<'a> {
    dir: Option<&'a Path>,
    quiet: bool,
}

impl Output<'_> {
    fn solution(&self, sol: &SkorohodSolution) -> Result<()> {
        if let Some(dir) = self.dir {
            fs::create_dir_all(dir)?;
            write_solution_csv(sol, fs::File::create(dir.join("solution.csv"))?)?;
        }
        Ok(())
    }

    fn summary(&self, value: &serde_json::Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        match self.dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join("summary.json");
                fs::write(&path, &text)?;
                if !self.quiet {
                    println!("wrote {}", path.display());
                }
            }
            None if !self.quiet => io::stdout().write_all(text.as_bytes())?,
            None => {}
        }
        Ok(())
    }
}

/// Writes `t, x_1..x_d, k_1..k_d` with LF line endings and shortest
/// round-trip number formatting.
pub fn write_solution_csv<W: Write>(sol: &SkorohodSolution, writer: W) -> Result<()> {
    let d = sol.x.dim();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(io::Error::other(e.to_string()));
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=d).map(|i| format!("x_{i}"))).chain((1..=d).map(|i| format!("k_{i}"))).collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..=sol.x.steps() {
        let row: Vec<String> =
            std::iter::once(sol.x.time(i)).chain(sol.x.node(i).iter().copied()).chain(sol.k.node(i).iter().copied()).map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a solution CSV back into `(t, x, k)` rows.
pub fn read_solution_csv(text: &str) -> Result<Vec<(f64, Vector, Vector)>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let d = (rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.len() - 1) / 2;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let nums = rec.iter().map(|f| f.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))).collect::<Result<Vec<f64>>>()?;
            Ok((nums[0], Vector::from_row_slice(&nums[1..=d]), Vector::from_row_slice(&nums[d + 1..])))
        })
        .collect()
}
