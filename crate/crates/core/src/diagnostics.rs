//! Checkers for the inequalities a solution pair `(x, k)` must satisfy.
//!
//! All sums pair the increment `Δkᵢ = k(tᵢ₊₁) − k(tᵢ)` with the left node
//! `xᵢ` and integrate `φ` along the path with the trapezoid rule. For a
//! penalized solution (`eps` set) the envelope `φ_ε(x)` stands in for `φ(x)`:
//! the solver produces `dk = ∇φ_ε(x) dt`, and `φ_ε` is the convex function
//! for which that is a true gradient, with `φ_ε ≤ φ`.

use serde::Serialize;

use crate::convex::ConvexFunction;
use crate::det_solver::{RefinementLevel, SkorohodSolution};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::paths::SampledPath;
use crate::rng::CounterRng;

// polyhedral projections are accurate to about 1e-11
const FEASIBILITY_SLACK: f64 = 1e-9;
const BLEND_WEIGHTS: [f64; 2] = [0.25, 0.5];
const SPHERE_PROBES: usize = 256;
const SPHERE_SEED: u64 = 0x5eed_b411;

pub fn vi_tolerance(tv_k: f64) -> f64 {
    1e-4 * (1.0 + tv_k)
}

pub fn inequality_tolerance(tv_total: f64) -> f64 {
    1e-6 * (1.0 + tv_total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViReport {
    /// Largest `Σ⟨y − x, Δk⟩ + ∫φ(x) − ∫φ(y)` found; a solution has it `≤ 0`
    /// up to discretization.
    pub residual: f64,
    pub worst_window: (f64, f64),
    pub worst_test_fn: String,
    pub tol: f64,
}

impl ViReport {
    pub fn passed(&self) -> bool {
        self.residual <= self.tol
    }
}

/// Whole horizon plus its dyadic splits into 2, 4 and 8 windows.
pub fn default_windows(x: &SampledPath) -> Vec<(f64, f64)> {
    let (t0, t1) = (x.t0(), x.end_time());
    let mut out = vec![(t0, t1)];
    for pieces in [2usize, 4, 8] {
        if pieces > x.steps() {
            break;
        }
        let w = (t1 - t0) / pieces as f64;
        out.extend((0..pieces).map(|j| (t0 + j as f64 * w, t0 + (j + 1) as f64 * w)));
    }
    out
}

fn node_index(path: &SampledPath, t: f64) -> Result<usize> {
    let r = ((t - path.t0()) / path.dt()).round();
    if !(r >= 0.0 && r <= path.steps() as f64) {
        return Err(Error::InvalidInput(format!("window endpoint {t} outside the path")));
    }
    Ok(r as usize)
}

/// Per-node values of `φ` along `x` (envelope for penalized solutions).
fn phi_along(sol: &SkorohodSolution, phi: &ConvexFunction) -> Result<Vec<f64>> {
    sol.x
        .values()
        .iter()
        .map(|x| match sol.eps {
            Some(eps) => phi.moreau_envelope(eps, x),
            None => Ok(phi.eval(x)),
        })
        .collect()
}

fn trapezoid(values: &[f64], a: usize, b: usize, dt: f64) -> f64 {
    (a..b).map(|i| 0.5 * (values[i] + values[i + 1]) * dt).sum()
}

fn check_feasible(phi: &ConvexFunction, p: &Vector) -> Result<()> {
    let q = phi.project_domain(p)?;
    if (q - p).norm() > FEASIBILITY_SLACK * (1.0 + p.norm()) {
        return Err(Error::Precondition(format!("test point {:?} lies outside the domain", p.as_slice())));
    }
    Ok(())
}

fn check_system(sol: &SkorohodSolution, phi: &ConvexFunction) -> Result<()> {
    if sol.x.dim() != phi.dim() {
        return Err(Error::DimensionMismatch { expected: phi.dim(), got: sol.x.dim() });
    }
    if !sol.x.same_grid(&sol.k) {
        return Err(Error::GridMismatch("x and k must share a grid".into()));
    }
    Ok(())
}

/// Residual of the variational inequality over `windows` for the constant
/// test functions `test_points` and the blends `(1−θ)π_D(x) + θu₀`,
/// `θ ∈ {0.25, 0.5}`, toward `interior` (defaults to a domain witness).
pub fn vi_residual(
    sol: &SkorohodSolution,
    phi: &ConvexFunction,
    windows: &[(f64, f64)],
    test_points: &[Vector],
    interior: Option<&Vector>,
) -> Result<ViReport> {
    check_system(sol, phi)?;
    for p in test_points {
        check_feasible(phi, p)?;
    }
    let u0 = match interior {
        Some(u) => {
            check_feasible(phi, u)?;
            u.clone()
        }
        None => phi.domain().witness()?,
    };
    let dt = sol.x.dt();
    let xs = sol.x.values();
    let dk: Vec<Vector> = sol.k.values().windows(2).map(|w| &w[1] - &w[0]).collect();
    let phi_x = phi_along(sol, phi)?;

    // test functions as node sequences
    let mut tests: Vec<(String, Vec<Vector>)> = test_points.iter().enumerate().map(|(j, p)| (format!("const[{j}]"), vec![p.clone(); xs.len()])).collect();
    let projected = xs.iter().map(|x| phi.project_domain(x)).collect::<Result<Vec<_>>>()?;
    for theta in BLEND_WEIGHTS {
        let ys = projected.iter().map(|x| x * (1.0 - theta) + &u0 * theta).collect();
        tests.push((format!("blend({theta})"), ys));
    }

    let mut best =
        ViReport { residual: f64::NEG_INFINITY, worst_window: (sol.x.t0(), sol.x.end_time()), worst_test_fn: String::new(), tol: vi_tolerance(sol.tv_k) };
    for (name, ys) in &tests {
        let phi_y: Vec<f64> = ys.iter().map(|y| phi.eval(y)).collect();
        for &(s, t) in windows {
            let (a, b) = (node_index(&sol.x, s)?, node_index(&sol.x, t)?);
            if a > b {
                return Err(Error::InvalidInput(format!("window ({s}, {t}) is reversed")));
            }
            let pairing: f64 = (a..b).map(|i| (&ys[i] - &xs[i]).dot(&dk[i])).sum();
            let r = pairing + trapezoid(&phi_x, a, b, dt) - trapezoid(&phi_y, a, b, dt);
            if r > best.residual || best.worst_test_fn.is_empty() {
                best.residual = r;
                best.worst_window = (s, t);
                best.worst_test_fn = name.clone();
            }
        }
    }
    if best.worst_test_fn.is_empty() {
        best.residual = 0.0;
    }
    Ok(best)
}

/// `Σ⟨x₁ − x₂, Δk₁ − Δk₂⟩` over the horizon.
pub fn monotonicity_gap(sol1: &SkorohodSolution, sol2: &SkorohodSolution) -> Result<f64> {
    if sol1.system != sol2.system {
        return Err(Error::Precondition("solutions come from different (phi, H) systems".into()));
    }
    if !sol1.x.same_grid(&sol2.x) || !sol1.k.same_grid(&sol2.k) {
        return Err(Error::GridMismatch("monotonicity gap needs one grid".into()));
    }
    let (x1, x2, k1, k2) = (sol1.x.values(), sol2.x.values(), sol1.k.values(), sol2.k.values());
    Ok((0..sol1.x.steps())
        .map(|i| {
            let dk = (&k1[i + 1] - &k1[i]) - (&k2[i + 1] - &k2[i]);
            (&x1[i] - &x2[i]).dot(&dk)
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorBallReport {
    /// `r₀·↕k↕_T + ∫φ(x)`
    pub lhs: f64,
    /// `Σ⟨x − u₀, Δk⟩ + T·φ#`
    pub rhs: f64,
    /// `rhs − lhs`
    pub margin: f64,
    pub phi_sharp: f64,
    pub tol: f64,
}

impl InteriorBallReport {
    pub fn passed(&self) -> bool {
        self.margin >= -self.tol
    }
}

fn sphere_directions(dim: usize, extra: impl Iterator<Item = Vector>) -> Vec<Vector> {
    let mut dirs = Vec::new();
    for i in 0..dim {
        for sign in [-1.0, 1.0] {
            let mut e = Vector::zeros(dim);
            e[i] = sign;
            dirs.push(e);
        }
    }
    if dim > 1 {
        let mut rng = CounterRng::new(SPHERE_SEED);
        dirs.extend((0..SPHERE_PROBES).map(|_| rng.unit_vector(dim)));
    }
    dirs.extend(extra);
    dirs
}

/// Subgradient bound over `[0, T]` for an interior point `u₀` whose
/// `r₀`-sphere stays in the domain. `φ#` is the largest `φ(u₀ + r₀v)` over a
/// probe sphere that also contains every direction of `Δk`.
pub fn interior_ball_bound(sol: &SkorohodSolution, phi: &ConvexFunction, u0: &Vector, r0: f64) -> Result<InteriorBallReport> {
    check_system(sol, phi)?;
    if !(r0 > 0.0) {
        return Err(Error::InvalidInput(format!("r0 must be > 0, got {r0}")));
    }
    let dk: Vec<Vector> = sol.k.values().windows(2).map(|w| &w[1] - &w[0]).collect();
    if !phi.domain().shrink(r0)?.contains(u0, FEASIBILITY_SLACK) {
        return Err(Error::Precondition(format!("the {r0}-sphere around {:?} leaves the domain", u0.as_slice())));
    }
    let dirs = sphere_directions(phi.dim(), dk.iter().filter(|d| d.norm() > 0.0).map(|d| d.normalize()));
    let phi_sharp = dirs.iter().map(|v| phi.eval(&(u0 + v * r0))).fold(f64::NEG_INFINITY, f64::max);
    let dt = sol.x.dt();
    let phi_x = phi_along(sol, phi)?;
    let xs = sol.x.values();
    let lhs = r0 * sol.tv_k + trapezoid(&phi_x, 0, sol.x.steps(), dt);
    let pairing: f64 = dk.iter().enumerate().map(|(i, d)| (&xs[i] - u0).dot(d)).sum();
    let rhs = pairing + sol.x.horizon() * phi_sharp;
    Ok(InteriorBallReport { lhs, rhs, margin: rhs - lhs, phi_sharp, tol: inequality_tolerance(sol.tv_k) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "slope", rename_all = "snake_case")]
pub enum SlopeFit {
    Fitted(f64),
    /// Some consecutive solutions agree exactly; the slope is undefined.
    Converged,
}

/// Least-squares slope of `log gap` against `log eps`.
pub fn convergence_slope(history: &[(f64, f64)]) -> Result<SlopeFit> {
    if history.len() < 3 {
        return Err(Error::Precondition(format!("need >= 3 (eps, gap) pairs, got {}", history.len())));
    }
    if history.windows(2).any(|w| !(w[1].0 < w[0].0)) || history.iter().any(|h| !(h.0 > 0.0)) {
        return Err(Error::Precondition("eps must be positive and strictly decreasing".into()));
    }
    if history.iter().any(|h| !(h.1 >= 0.0)) {
        return Err(Error::Precondition("gaps must be non-negative".into()));
    }
    if history.iter().any(|h| h.1 == 0.0) {
        return Ok(SlopeFit::Converged);
    }
    let n = history.len() as f64;
    let xs: Vec<f64> = history.iter().map(|h| h.0.ln()).collect();
    let ys: Vec<f64> = history.iter().map(|h| h.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(SlopeFit::Fitted(sxy / sxx))
}

/// `(ε + δ, gap)` pairs from a refinement history, `δ` being the previous
/// rung: the Cauchy bound is stated in `√(ε + δ)`.
pub fn slope_points(history: &[RefinementLevel]) -> Vec<(f64, f64)> {
    history.windows(2).filter_map(|w| w[1].sup_gap.map(|g| (w[0].eps + w[1].eps, g))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriReport {
    /// `tv_k` of the last level over the one before.
    pub stabilization_ratio: f64,
    /// `(λ, tv_k)` for a scaled input family, sorted by `λ`.
    pub family: Vec<(f64, f64)>,
    pub family_nondecreasing: bool,
}

pub fn apriori_monitor(tv_levels: &[f64], family: &[(f64, f64)]) -> Result<AprioriReport> {
    if tv_levels.len() < 2 {
        return Err(Error::Precondition("a priori monitor needs >= 2 refinement levels".into()));
    }
    let last = tv_levels[tv_levels.len() - 1];
    let prev = tv_levels[tv_levels.len() - 2];
    let ratio = if prev == 0.0 && last == 0.0 { 1.0 } else { last / prev };
    let mut family = family.to_vec();
    family.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nondecreasing = family.windows(2).all(|w| w[1].1 >= w[0].1 - inequality_tolerance(w[0].1));
    Ok(AprioriReport { stabilization_ratio: ratio, family, family_nondecreasing: nondecreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionDiagnostics {
    pub vi: ViReport,
    pub interior_ball: Option<InteriorBallReport>,
    pub apriori: Option<AprioriReport>,
    pub feasibility_defect: f64,
}

/// Diagnostics reported with every solve: VI residual over the default
/// windows and extreme points, interior-ball bound when an interior ball is
/// declared, and the tv_k stabilization over the refinement history.
pub fn standard_diagnostics(sol: &SkorohodSolution, phi: &ConvexFunction, interior: Option<(&Vector, f64)>) -> Result<SolutionDiagnostics> {
    let windows = default_windows(&sol.x);
    let points = phi.domain().extreme_points()?;
    let vi = vi_residual(sol, phi, &windows, &points, interior.map(|(u, _)| u))?;
    let interior_ball = match interior {
        Some((u, r)) => Some(interior_ball_bound(sol, phi, u, r)?),
        None => None,
    };
    let tvs: Vec<f64> = sol.refinement_history.iter().map(|l| l.tv_k).collect();
    let apriori = if tvs.len() >= 2 { Some(apriori_monitor(&tvs, &[])?) } else { None };
    Ok(SolutionDiagnostics { vi, interior_ball, apriori, feasibility_defect: sol.feasibility_defect })
}
