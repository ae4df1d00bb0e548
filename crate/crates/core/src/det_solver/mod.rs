//! Deterministic generalized Skorohod problem
//! `x(t) + ∫₀ᵗ H(x) dk = x₀ + ∫₀ᵗ f(s, x) ds + m(t)`, `dk ∈ ∂φ(x)(dt)`,
//! solved by the penalized delayed equation
//!
//! ```text
//! x_ε(t) + ∫₀ᵗ H(x_ε) ∇φ_ε(x_ε) ds = x₀ + ∫_{−ε}^{t−ε} [f(s, π_D(x_ε(s))) + m′(s)] ds
//! ```
//!
//! on a mollified input, with ε refined until consecutive solutions agree.

mod drift;
mod oracle;

pub use drift::{DriftSpec, Profile};
pub use oracle::{halfline_system, oracle_complementarity_defect, oracle_halfline};

use serde::Serialize;

use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::linalg::{check_dim, Vector};
use crate::oblique_field::ObliqueField;
use crate::paths::{grid_multiple_ceil, grid_multiple_exact, SampledPath};

pub const DEFAULT_SUBSTEP_RATIO: usize = 10;
pub const DEFAULT_GUARD_RADIUS: f64 = 1e6;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_HALVINGS: usize = 10;

/// The data of a Skorohod problem apart from its input path.
#[derive(Debug, Clone)]
pub struct SkorohodProblem {
    pub phi: ConvexFunction,
    pub field: ObliqueField,
    pub drift: DriftSpec,
    pub x0: Vector,
}

impl SkorohodProblem {
    pub fn new(phi: ConvexFunction, field: ObliqueField, drift: DriftSpec, x0: Vector) -> Result<Self> {
        let d = phi.dim();
        if field.dim() != d || drift.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: if field.dim() != d { field.dim() } else { drift.dim() } });
        }
        drift.validate()?;
        check_dim(&x0, d)?;
        if !phi.eval(&x0).is_finite() {
            return Err(Error::Precondition(format!("x0 = {:?} is not in Dom(phi)", x0.as_slice())));
        }
        Ok(Self { phi, field, drift, x0 })
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    /// Identifies the `(φ, H)` pair; solutions of the same system share it.
    pub fn system_id(&self) -> u64 {
        system_id(&self.phi, &self.field)
    }
}

pub fn system_id(phi: &ConvexFunction, field: &ObliqueField) -> u64 {
    phi.fingerprint().rotate_left(17) ^ field.fingerprint()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenalizedConfig {
    /// Penalization parameter, also the input delay. Must be a grid multiple.
    pub eps: f64,
    /// Inner Euler step is `h ≤ eps / (substep_ratio · c)`.
    pub substep_ratio: usize,
    pub guard_radius: f64,
}

impl PenalizedConfig {
    pub fn new(eps: f64) -> Self {
        Self { eps, substep_ratio: DEFAULT_SUBSTEP_RATIO, guard_radius: DEFAULT_GUARD_RADIUS }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be > 0, got {}", self.eps)));
        }
        // h·c/ε ≤ 1/substep_ratio must stay below 1
        if self.substep_ratio < 2 {
            return Err(Error::InvalidInput("substep_ratio must be >= 2 for a stable explicit step".into()));
        }
        if !(self.guard_radius > 0.0) {
            return Err(Error::InvalidInput("guard radius must be > 0".into()));
        }
        Ok(())
    }
}

/// One rung of the ε-refinement ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub eps: f64,
    /// Sup-node distance to the previous rung's solution.
    pub sup_gap: Option<f64>,
    pub tv_k: f64,
}

#[derive(Debug, Clone)]
pub struct SkorohodSolution {
    pub x: SampledPath,
    /// `k(t0) = 0`
    pub k: SampledPath,
    pub tv_k: f64,
    /// Penalization parameter of the final level; `None` for exact solutions.
    pub eps: Option<f64>,
    pub refinement_history: Vec<RefinementLevel>,
    /// `max |∇φ_ε(x_ε)|` over every inner step.
    pub max_penalty_gradient: f64,
    /// `max_i dist(x(t_i), D)`
    pub feasibility_defect: f64,
    pub system: u64,
}

/// Explicit Euler integrator of the penalized equation driven cell by cell
/// by input increments.
pub(crate) struct PenalizedStepper<'a> {
    phi: &'a ConvexFunction,
    field: &'a ObliqueField,
    eps: f64,
    substeps: usize,
    h: f64,
    guard: f64,
    pub x: Vector,
    pub k: Vector,
    pub max_gradient: f64,
}

impl<'a> PenalizedStepper<'a> {
    pub fn new(problem: &'a SkorohodProblem, dt: f64, cfg: &PenalizedConfig) -> Result<Self> {
        cfg.validate()?;
        let c = problem.field.c();
        let substeps = ((cfg.substep_ratio as f64 * c * dt / cfg.eps) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self {
            phi: &problem.phi,
            field: &problem.field,
            eps: cfg.eps,
            substeps,
            h: dt / substeps as f64,
            guard: cfg.guard_radius,
            x: problem.x0.clone(),
            k: Vector::zeros(problem.dim()),
            max_gradient: 0.0,
        })
    }

    /// Advances one grid cell, spreading `increment` evenly over the inner steps.
    pub fn advance_cell(&mut self, increment: &Vector, t_end: f64) -> Result<()> {
        let du = increment / self.substeps as f64;
        for _ in 0..self.substeps {
            let g = self.phi.yosida_gradient(self.eps, &self.x)?;
            let push = self.field.eval(&self.x) * &g;
            self.max_gradient = self.max_gradient.max(g.norm());
            self.x -= push * self.h;
            self.x += &du;
            self.k += g * self.h;
        }
        let norm = self.x.norm();
        if !(norm <= self.guard) {
            return Err(Error::StabilityBreach { t: t_end, norm, radius: self.guard });
        }
        Ok(())
    }

    /// Largest `|∇φ_ε|` seen, including at the final state.
    pub fn finish(&self) -> Result<f64> {
        Ok(self.max_gradient.max(self.phi.yosida_gradient(self.eps, &self.x)?.norm()))
    }
}

fn check_input_origin(m: &SampledPath) -> Result<()> {
    if m.node(0).norm() > 1e-12 {
        return Err(Error::InvalidInput(format!("input path must start at 0, got {:?}", m.node(0).as_slice())));
    }
    Ok(())
}

/// Collects per-node states into a solution record.
pub(crate) fn assemble_solution(
    problem: &SkorohodProblem,
    t0: f64,
    dt: f64,
    xs: Vec<Vector>,
    ks: Vec<Vector>,
    eps: Option<f64>,
    max_gradient: f64,
) -> Result<SkorohodSolution> {
    let feasibility_defect = xs.iter().map(|x| problem.phi.domain().distance(x)).collect::<Result<Vec<f64>>>()?.into_iter().fold(0.0, f64::max);
    let k = SampledPath::new(t0, dt, ks)?;
    let tv_k = k.total_variation_full();
    Ok(SkorohodSolution {
        x: SampledPath::new(t0, dt, xs)?,
        k,
        tv_k,
        eps,
        refinement_history: Vec::new(),
        max_penalty_gradient: max_gradient,
        feasibility_defect,
        system: problem.system_id(),
    })
}

/// Solves the penalized delayed equation with input `m` treated as `C¹`
/// through its forward differences. `cfg.eps` must be a multiple of `m.dt()`.
pub fn solve_penalized(problem: &SkorohodProblem, m: &SampledPath, cfg: &PenalizedConfig) -> Result<SkorohodSolution> {
    if m.dim() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: m.dim() });
    }
    check_input_origin(m)?;
    let dt = m.dt();
    let lag = grid_multiple_exact(cfg.eps, dt)?;
    let mut stepper = PenalizedStepper::new(problem, dt, cfg)?;
    let n = m.steps();
    let mut xs = Vec::with_capacity(n + 1);
    let mut ks = Vec::with_capacity(n + 1);
    xs.push(stepper.x.clone());
    ks.push(stepper.k.clone());
    let zero = Vector::zeros(problem.dim());
    for i in 0..n {
        // input over the delayed cell [t_{i−lag}, t_{i−lag+1}], zero before 0
        let increment = if i >= lag {
            let j = i - lag;
            let state = problem.phi.project_domain(&xs[j])?;
            problem.drift.eval(m.time(j), &state) * dt + (m.node(j + 1) - m.node(j))
        } else {
            zero.clone()
        };
        stepper.advance_cell(&increment, m.time(i + 1))?;
        xs.push(stepper.x.clone());
        ks.push(stepper.k.clone());
    }
    assemble_solution(problem, m.t0(), dt, xs, ks, Some(cfg.eps), stepper.finish()?)
}

/// Mollifies `m` at width `eps` (snapped to the grid) and solves the
/// penalized equation at the snapped `eps`.
pub fn solve_mollified(problem: &SkorohodProblem, m: &SampledPath, eps: f64, substep_ratio: usize, guard_radius: f64) -> Result<SkorohodSolution> {
    let (smooth, eps) = m.mollify(eps)?;
    let cfg = PenalizedConfig { eps, substep_ratio, guard_radius };
    solve_penalized(problem, &smooth, &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig {
    pub tol: f64,
    pub eps0: f64,
    pub max_halvings: usize,
    pub substep_ratio: usize,
    pub guard_radius: f64,
}

impl RefinementConfig {
    /// Defaults for horizon `T`: `tol = 1e-3`, `eps0 = 0.1 T`, 10 halvings.
    pub fn for_horizon(horizon: f64) -> Self {
        Self {
            tol: DEFAULT_TOL,
            eps0: 0.1 * horizon,
            max_halvings: DEFAULT_MAX_HALVINGS,
            substep_ratio: DEFAULT_SUBSTEP_RATIO,
            guard_radius: DEFAULT_GUARD_RADIUS,
        }
    }
}

/// `eps0, eps0/2, …` snapped up to grid multiples, stopping early once the
/// grid step is reached.
pub fn eps_ladder(eps0: f64, dt: f64, max_halvings: usize) -> Result<Vec<f64>> {
    if !(eps0 > 0.0) {
        return Err(Error::InvalidInput(format!("eps0 must be > 0, got {eps0}")));
    }
    let mut out: Vec<f64> = Vec::new();
    let mut last_cells = usize::MAX;
    for level in 0..=max_halvings {
        let target = (eps0 / 2f64.powi(level as i32)).max(dt);
        let cells = grid_multiple_ceil(target, dt)?;
        if cells >= last_cells {
            break;
        }
        last_cells = cells;
        out.push(cells as f64 * dt);
    }
    Ok(out)
}

/// Runs `solve` down the ε ladder. With `tol = Some(_)` it stops at the first
/// sup-gap `≤ tol` and fails with `NoConvergence` when the ladder is exhausted;
/// with `None` every level is solved.
pub fn refine_with<F>(levels: &[f64], tol: Option<f64>, mut solve: F) -> Result<SkorohodSolution>
where
    F: FnMut(f64) -> Result<SkorohodSolution>,
{
    let mut history: Vec<RefinementLevel> = Vec::new();
    let mut previous: Option<SkorohodSolution> = None;
    for &eps in levels {
        let mut sol = solve(eps)?;
        let gap = match &previous {
            Some(p) => Some(sol.x.sup_distance(&p.x)?),
            None => None,
        };
        history.push(RefinementLevel { eps: sol.eps.unwrap_or(eps), sup_gap: gap, tv_k: sol.tv_k });
        let done = matches!((tol, gap), (Some(t), Some(g)) if g <= t);
        sol.refinement_history = history.clone();
        if done {
            return Ok(sol);
        }
        previous = Some(sol);
    }
    let last = previous.ok_or_else(|| Error::InvalidInput("empty refinement ladder".into()))?;
    match tol {
        Some(t) if history.len() > 1 => Err(Error::NoConvergence { tol: t, history }),
        _ => Ok(last),
    }
}

/// Mollified penalized pipeline refined in ε until consecutive solutions are
/// within `cfg.tol` in sup norm. A ladder with a single rung
/// (`max_halvings = 0`) returns its only solution without a gap check.
pub fn solve_skorohod(problem: &SkorohodProblem, m: &SampledPath, cfg: &RefinementConfig) -> Result<SkorohodSolution> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be > 0, got {}", cfg.tol)));
    }
    let levels = eps_ladder(cfg.eps0, m.dt(), cfg.max_halvings)?;
    refine_with(&levels, Some(cfg.tol), |eps| solve_mollified(problem, m, eps, cfg.substep_ratio, cfg.guard_radius))
}

/// Solves every rung of the ladder regardless of the tolerance; the returned
/// history feeds the convergence-rate fit.
pub fn converge_ladder(problem: &SkorohodProblem, m: &SampledPath, cfg: &RefinementConfig) -> Result<SkorohodSolution> {
    let levels = eps_ladder(cfg.eps0, m.dt(), cfg.max_halvings)?;
    refine_with(&levels, None, |eps| solve_mollified(problem, m, eps, cfg.substep_ratio, cfg.guard_radius))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityGap {
    /// `sup_t |x₁(t) − x₂(t)|`
    pub sup_gap: f64,
    /// Total variation of `m₁ − m₂`.
    pub tv_gap_m: f64,
    /// `V(T) = S(x₁) + S(x₂) + S(k₁) + S(k₂) + ∫μ`
    pub v: f64,
}

pub fn stability_gap(sol1: &SkorohodSolution, sol2: &SkorohodSolution, m1: &SampledPath, m2: &SampledPath, mu_integral: f64) -> Result<StabilityGap> {
    if !sol1.x.same_grid(&sol2.x) || !m1.same_grid(m2) || !sol1.x.same_grid(m1) {
        return Err(Error::GridMismatch("stability gap needs solutions and inputs on one grid".into()));
    }
    Ok(StabilityGap {
        sup_gap: sol1.x.sup_distance(&sol2.x)?,
        tv_gap_m: m1.difference(m2)?.total_variation_full(),
        v: sol1.x.total_variation_full() + sol2.x.total_variation_full() + sol1.tv_k + sol2.tv_k + mu_integral,
    })
}
