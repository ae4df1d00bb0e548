//! Seeded Brownian drivers and the pathwise approximation of the stochastic
//! variational inequality
//!
//! ```text
//! X + ∫ H(X) dK = x₀ + Mⁿ,   dK ∈ ∂φ(X) dt,
//! Mⁿ_t = ∫₀ᵗ f(s, π_D(X_{s−1/n})) ds + n ∫_{t−1/n}^{t} [∫₀ˢ g(r, π_D(X_{r−1/n})) dB_r] ds.
//! ```
//!
//! `Mⁿ` at time `t` only reads `X` before `t − 1/n`, so one causally ordered
//! sweep builds `Mⁿ` and solves the penalized equation together.

use rayon::prelude::*;
use serde::Serialize;

use crate::det_solver::{
    assemble_solution, eps_ladder, refine_with, DriftSpec, PenalizedConfig, PenalizedStepper, RefinementConfig, SkorohodProblem, SkorohodSolution,
};
use crate::diagnostics::{default_windows, vi_residual};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::paths::{grid_multiple_exact, SampledPath};
use crate::rng::{CounterRng, GENERATOR_ID};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrownianDriver {
    pub seed: u64,
    pub dt: f64,
    pub dims: usize,
    pub horizon: f64,
}

impl BrownianDriver {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || self.dims == 0 {
            return Err(Error::InvalidInput("Brownian driver needs dt > 0 and dims >= 1".into()));
        }
        if self.horizon < self.dt {
            return Err(Error::InvalidInput("Brownian horizon must be at least one step".into()));
        }
        grid_multiple_exact(self.horizon, self.dt)
    }

    pub fn generator(&self) -> &'static str {
        GENERATOR_ID
    }
}

/// `B(0) = 0` with i.i.d. `N(0, dt)` increments per coordinate; bit-identical
/// for a fixed seed.
pub fn brownian_path(drv: &BrownianDriver) -> Result<SampledPath> {
    let steps = drv.steps()?;
    let mut rng = CounterRng::new(drv.seed);
    let scale = drv.dt.sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    let mut b = Vector::zeros(drv.dims);
    values.push(b.clone());
    for _ in 0..steps {
        for c in 0..drv.dims {
            b[c] += scale * rng.standard_normal();
        }
        values.push(b.clone());
    }
    SampledPath::new(0.0, drv.dt, values)
}

/// Diffusion coefficient `g(t, x)`, a `d × k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionSpec {
    Zero {
        dim: usize,
        noise_dims: usize,
    },
    Constant(Matrix),
    /// `g(x) = base + Σᵢ xᵢ slopesᵢ`, scaled back radially (in Frobenius norm)
    /// onto the ball of radius `bound`.
    AffineInX {
        base: Matrix,
        slopes: Vec<Matrix>,
        bound: f64,
    },
}

impl DiffusionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DiffusionSpec::Zero { dim, noise_dims } if *dim == 0 || *noise_dims == 0 => {
                Err(Error::InvalidInput("diffusion dimensions must be positive".into()))
            }
            DiffusionSpec::AffineInX { base, slopes, bound } => {
                if slopes.len() != base.nrows() || slopes.iter().any(|s| s.shape() != base.shape()) {
                    return Err(Error::InvalidInput("affine_in_x needs one d x k slope per state coordinate".into()));
                }
                if !(*bound > 0.0 && bound.is_finite()) {
                    return Err(Error::InvalidInput("affine_in_x bound must be finite and > 0".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DiffusionSpec::Zero { dim, .. } => *dim,
            DiffusionSpec::Constant(m) => m.nrows(),
            DiffusionSpec::AffineInX { base, .. } => base.nrows(),
        }
    }

    pub fn noise_dims(&self) -> usize {
        match self {
            DiffusionSpec::Zero { noise_dims, .. } => *noise_dims,
            DiffusionSpec::Constant(m) => m.ncols(),
            DiffusionSpec::AffineInX { base, .. } => base.ncols(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DiffusionSpec::Zero { .. })
    }

    pub fn eval(&self, _t: f64, x: &Vector) -> Matrix {
        match self {
            DiffusionSpec::Zero { dim, noise_dims } => Matrix::zeros(*dim, *noise_dims),
            DiffusionSpec::Constant(m) => m.clone(),
            DiffusionSpec::AffineInX { base, slopes, bound } => {
                let mut g = base.clone();
                for (i, s) in slopes.iter().enumerate() {
                    g += s * x[i];
                }
                let n = g.norm();
                if n > *bound {
                    g *= bound / n;
                }
                g
            }
        }
    }

    /// `g# = sup_{x∈D} |g(t, x)|` (certified upper bound).
    pub fn bound(&self) -> f64 {
        match self {
            DiffusionSpec::Zero { .. } => 0.0,
            DiffusionSpec::Constant(m) => m.norm(),
            DiffusionSpec::AffineInX { bound, .. } => *bound,
        }
    }

    /// Lipschitz modulus `ℓ` in the state variable.
    pub fn lipschitz(&self) -> f64 {
        match self {
            DiffusionSpec::AffineInX { slopes, .. } => slopes.iter().map(|s| s.norm_squared()).sum::<f64>().sqrt(),
            _ => 0.0,
        }
    }
}

/// Incremental construction of `Mⁿ` on the grid: left-endpoint Itô sums for
/// the inner integral, rectangle rule for the drift and a running window
/// average of width `1/n` for the outer integral (`I = 0` before 0).
pub(crate) struct MnBuilder<'a> {
    drift: &'a DriftSpec,
    diffusion: &'a DiffusionSpec,
    window: usize,
    dt: f64,
    ito: Vec<Vector>,
}

impl<'a> MnBuilder<'a> {
    pub fn new(drift: &'a DriftSpec, diffusion: &'a DiffusionSpec, window: usize, dt: f64, steps: usize) -> Self {
        let mut ito = Vec::with_capacity(steps + 1);
        ito.push(Vector::zeros(diffusion.dim()));
        Self { drift, diffusion, window, dt, ito }
    }

    /// `Mⁿ(t_{i+1}) − Mⁿ(t_i)`; `state` is `π_D(X(t_i − 1/n))`, `db` is `B(t_{i+1}) − B(t_i)`.
    pub fn increment(&mut self, i: usize, t: f64, state: &Vector, db: &Vector) -> Vector {
        debug_assert_eq!(self.ito.len(), i + 1);
        let lagged = if i >= self.window { &self.ito[i] - &self.ito[i - self.window] } else { self.ito[i].clone() };
        let out = self.drift.eval(t, state) * self.dt + lagged / self.window as f64;
        let next = &self.ito[i] + self.diffusion.eval(t, state) * db;
        self.ito.push(next);
        out
    }
}

fn delay_cells(n: usize, dt: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidInput("delay index n must be >= 1".into()));
    }
    grid_multiple_exact(1.0 / n as f64, dt)
}

fn check_noise(problem: &SkorohodProblem, g: &DiffusionSpec, b: &SampledPath) -> Result<()> {
    g.validate()?;
    if g.dim() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: g.dim() });
    }
    if g.noise_dims() != b.dim() {
        return Err(Error::DimensionMismatch { expected: g.noise_dims(), got: b.dim() });
    }
    Ok(())
}

/// Builds `Mⁿ` along a given state history (frozen at `x₀` before 0).
/// `1/n` must be a multiple of the Brownian grid step.
pub fn build_mn(problem: &SkorohodProblem, g: &DiffusionSpec, x_hist: &SampledPath, b: &SampledPath, n: usize) -> Result<SampledPath> {
    check_noise(problem, g, b)?;
    if !x_hist.same_grid(b) && !(x_hist.dt() == b.dt() && x_hist.steps() >= b.steps()) {
        return Err(Error::GridMismatch("state history and Brownian path need the same grid".into()));
    }
    let dt = b.dt();
    let window = delay_cells(n, dt)?;
    let mut builder = MnBuilder::new(&problem.drift, g, window, dt, b.steps());
    let x0 = problem.phi.project_domain(&problem.x0)?;
    let mut m = Vector::zeros(problem.dim());
    let mut values = Vec::with_capacity(b.steps() + 1);
    values.push(m.clone());
    for i in 0..b.steps() {
        let state = if i >= window { problem.phi.project_domain(x_hist.node(i - window))? } else { x0.clone() };
        m += builder.increment(i, b.time(i), &state, &(b.node(i + 1) - b.node(i)));
        values.push(m.clone());
    }
    SampledPath::new(b.t0(), dt, values)
}

/// One causally ordered sweep at a fixed penalization `eps`.
pub fn svi_sweep(problem: &SkorohodProblem, g: &DiffusionSpec, b: &SampledPath, n: usize, cfg: &PenalizedConfig) -> Result<SkorohodSolution> {
    check_noise(problem, g, b)?;
    let dt = b.dt();
    let window = delay_cells(n, dt)?;
    let lag = grid_multiple_exact(cfg.eps, dt)?;
    let steps = b.steps();
    let mut builder = MnBuilder::new(&problem.drift, g, window, dt, steps);
    let mut stepper = PenalizedStepper::new(problem, dt, cfg)?;
    let x0 = problem.phi.project_domain(&problem.x0)?;
    let zero = Vector::zeros(problem.dim());
    let mut xs = Vec::with_capacity(steps + 1);
    let mut ks = Vec::with_capacity(steps + 1);
    let mut dm: Vec<Vector> = Vec::with_capacity(steps);
    xs.push(stepper.x.clone());
    ks.push(stepper.k.clone());
    for i in 0..steps {
        let state = if i >= window { problem.phi.project_domain(&xs[i - window])? } else { x0.clone() };
        dm.push(builder.increment(i, b.time(i), &state, &(b.node(i + 1) - b.node(i))));
        let increment = if i >= lag { &dm[i - lag] } else { &zero };
        stepper.advance_cell(increment, b.time(i + 1))?;
        xs.push(stepper.x.clone());
        ks.push(stepper.k.clone());
    }
    assemble_solution(problem, b.t0(), dt, xs, ks, Some(cfg.eps), stepper.finish()?)
}

/// Pathwise solve on a given Brownian path, refined in ε like the
/// deterministic pipeline.
pub fn solve_svi_with_noise(problem: &SkorohodProblem, g: &DiffusionSpec, b: &SampledPath, n: usize, cfg: &RefinementConfig) -> Result<SkorohodSolution> {
    let levels = eps_ladder(cfg.eps0, b.dt(), cfg.max_halvings)?;
    refine_with(&levels, Some(cfg.tol), |eps| {
        let pcfg = PenalizedConfig { eps, substep_ratio: cfg.substep_ratio, guard_radius: cfg.guard_radius };
        svi_sweep(problem, g, b, n, &pcfg)
    })
}

/// Generates the Brownian path of `drv` and solves pathwise.
pub fn solve_svi_path(problem: &SkorohodProblem, g: &DiffusionSpec, drv: &BrownianDriver, n: usize, cfg: &RefinementConfig) -> Result<SkorohodSolution> {
    let b = brownian_path(drv)?;
    solve_svi_with_noise(problem, g, &b, n, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary {
    pub paths: usize,
    pub succeeded: usize,
    pub base_seed: u64,
    pub generator: String,
    /// Node-wise mean of `X`.
    pub mean_x: Vec<Vec<f64>>,
    /// Node-wise population variance of `X`.
    pub var_x: Vec<Vec<f64>>,
    pub mean_tv_k: f64,
    pub max_feasibility_defect: f64,
    pub max_vi_residual: f64,
    pub failures: Vec<PathFailure>,
}

/// Outcome of one Monte Carlo path, kept in seed order.
pub struct PathOutcome {
    pub seed: u64,
    pub result: Result<SkorohodSolution>,
}

pub fn run_paths(
    problem: &SkorohodProblem,
    g: &DiffusionSpec,
    template: &BrownianDriver,
    n: usize,
    cfg: &RefinementConfig,
    n_paths: usize,
    base_seed: u64,
) -> Vec<PathOutcome> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            PathOutcome { seed, result: solve_svi_path(problem, g, &template.with_seed(seed), n, cfg) }
        })
        .collect()
}

/// Runs `n_paths` seeds `base_seed, base_seed + 1, …` and aggregates them;
/// per-path failures are collected, not fatal.
pub fn monte_carlo(
    problem: &SkorohodProblem,
    g: &DiffusionSpec,
    template: &BrownianDriver,
    n: usize,
    cfg: &RefinementConfig,
    n_paths: usize,
    base_seed: u64,
) -> Result<(MonteCarloSummary, Vec<PathOutcome>)> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("monte carlo needs at least one path".into()));
    }
    let outcomes = run_paths(problem, g, template, n, cfg, n_paths, base_seed);
    let summary = summarize(problem, &outcomes, base_seed)?;
    Ok((summary, outcomes))
}

pub fn summarize(problem: &SkorohodProblem, outcomes: &[PathOutcome], base_seed: u64) -> Result<MonteCarloSummary> {
    let mut failures = Vec::new();
    let mut mean: Vec<Vector> = Vec::new();
    let mut m2: Vec<Vector> = Vec::new();
    let mut count = 0usize;
    let mut tv_sum = 0.0;
    let mut max_feas: f64 = 0.0;
    let mut max_vi = f64::NEG_INFINITY;
    let test_points = problem.phi.domain().extreme_points()?;
    for o in outcomes {
        let sol = match &o.result {
            Ok(sol) => sol,
            Err(e) => {
                failures.push(PathFailure { seed: o.seed, kind: e.kind().to_string(), message: e.to_string() });
                continue;
            }
        };
        count += 1;
        if mean.is_empty() {
            mean = sol.x.values().to_vec();
            m2 = vec![Vector::zeros(problem.dim()); mean.len()];
        } else {
            // Welford update
            for (i, x) in sol.x.values().iter().enumerate() {
                let delta = x - &mean[i];
                mean[i] += &delta / count as f64;
                let delta2 = x - &mean[i];
                m2[i] += delta.component_mul(&delta2);
            }
        }
        tv_sum += sol.tv_k;
        max_feas = max_feas.max(sol.feasibility_defect);
        let windows = default_windows(&sol.x);
        let report = vi_residual(sol, &problem.phi, &windows, &test_points, None)?;
        max_vi = max_vi.max(report.residual);
    }
    let to_rows = |vs: &[Vector]| vs.iter().map(|v| v.iter().copied().collect()).collect();
    let var: Vec<Vector> = m2.iter().map(|v| v / count.max(1) as f64).collect();
    Ok(MonteCarloSummary {
        paths: outcomes.len(),
        succeeded: count,
        base_seed,
        generator: GENERATOR_ID.to_string(),
        mean_x: to_rows(&mean),
        var_x: to_rows(&var),
        mean_tv_k: if count > 0 { tv_sum / count as f64 } else { f64::NAN },
        max_feasibility_defect: max_feas,
        max_vi_residual: if count > 0 { max_vi } else { f64::NAN },
        failures,
    })
}
