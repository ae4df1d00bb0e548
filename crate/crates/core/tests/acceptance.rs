//! Acceptance suite: one line per criterion, nonzero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use common::*;
use oblique_skorohod::cli::write_solution_csv;
use oblique_skorohod::convex::{ConvexFunction, Set};
use oblique_skorohod::det_solver::PenalizedConfig;
use oblique_skorohod::det_solver::{converge_ladder, oracle_halfline, solve_mollified, solve_skorohod, RefinementConfig, SkorohodSolution};
use oblique_skorohod::diagnostics::{
    apriori_monitor, convergence_slope, default_windows, inequality_tolerance, interior_ball_bound, monotonicity_gap, slope_points, vi_residual, vi_tolerance,
    SlopeFit,
};
use oblique_skorohod::linalg::Vector;
use oblique_skorohod::paths::SampledPath;
use oblique_skorohod::rng::CounterRng;
use oblique_skorohod::sde::{brownian_path, solve_svi_path, svi_sweep, BrownianDriver, DiffusionSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Solves every catalog scenario once; shared by several criteria.
struct Solved {
    case: Case,
    sol: SkorohodSolution,
}

const CATALOG_TOL: f64 = 1e-2;

fn solve_catalog() -> Result<Vec<Solved>, String> {
    catalog()
        .into_iter()
        .map(|case| {
            let sol = solve_skorohod(&case.problem, &case.input, &refinement(CATALOG_TOL)).map_err(|e| format!("{}: {e}", case.name))?;
            Ok(Solved { case, sol })
        })
        .collect()
}

fn ac1() -> Outcome {
    let case = half_line_ramp();
    let cfg = refinement(5e-3);
    let sol = solve_skorohod(&case.problem, &case.input, &cfg).map_err(fail)?;
    let oracle = oracle_halfline(2.0, 0.0, &case.input).map_err(fail)?;
    let err = sol.x.sup_distance(&oracle.x).map_err(fail)?;
    let tv_err = (sol.tv_k - 0.5).abs();
    check(err <= 5e-2 && tv_err <= 0.05, format!("sup-node error {err:.3e} (<= 5e-2), |tv_k - 0.5| = {tv_err:.3e} (<= 0.05)"))
}

fn ac2() -> Outcome {
    let cases = [half_line_ramp(), box_diagonal(), ball_blend()];
    let cfg = RefinementConfig { eps0: 0.064, max_halvings: 5, ..refinement(1e-3) };
    let mut parts = Vec::new();
    let mut ok = true;
    for case in &cases {
        let sol = converge_ladder(&case.problem, &case.input, &cfg).map_err(fail)?;
        let halvings = sol.refinement_history.len() - 1;
        let pts = slope_points(&sol.refinement_history);
        let fit = convergence_slope(&pts).map_err(fail)?;
        let good = halvings >= 5 && matches!(fit, SlopeFit::Fitted(s) if (0.4..=1.2).contains(&s));
        ok &= good;
        parts.push(format!("{}: {:?} over {halvings} halvings", case.name, fit));
    }
    check(ok, format!("slopes in [0.4, 1.2]: {}", parts.join("; ")))
}

fn ac3(solved: &[Solved]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    let mut ok = solved.len() >= 6;
    for s in solved {
        let points = s.case.problem.phi.domain().extreme_points().map_err(fail)?;
        let interior = s.case.interior.as_ref().map(|(u, _)| u);
        let r = vi_residual(&s.sol, &s.case.problem.phi, &default_windows(&s.sol.x), &points, interior).map_err(fail)?;
        let scaled = r.residual / vi_tolerance(s.sol.tv_k);
        worst = worst.max(scaled);
        ok &= r.residual <= vi_tolerance(s.sol.tv_k);
        parts.push(format!("{} {:.2e}", s.case.name, r.residual));
    }
    check(ok, format!("{} scenarios, worst residual/tol = {worst:.3} [{}]", solved.len(), parts.join(", ")))
}

fn ac4() -> Outcome {
    // same-system pairs at a common penalization
    let eps = 0.01;
    let mut pairs = 0;
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for case in catalog() {
        let inputs = [case.input.clone(), case.scaled_input(0.5), case.scaled_input(-1.0)];
        let sols = inputs.iter().map(|m| solve_mollified(&case.problem, m, eps, 10, 1e6)).collect::<Result<Vec<_>, _>>().map_err(fail)?;
        for i in 0..sols.len() {
            for j in i + 1..sols.len() {
                let gap = monotonicity_gap(&sols[i], &sols[j]).map_err(fail)?;
                let tol = inequality_tolerance(sols[i].tv_k + sols[j].tv_k);
                ok &= gap >= -tol;
                worst = worst.min(gap / tol);
                pairs += 1;
            }
        }
    }
    check(ok && pairs >= 10, format!("{pairs} pairs, min gap/tol = {worst:.3e} (>= -1)"))
}

struct Sample {
    phi: ConvexFunction,
    zero_minimum: bool,
}

fn ac5_catalog() -> Vec<Sample> {
    let m2 = |rows: &[&[f64]]| m(rows);
    let ball = Set::ball(v(&[0.0, 0.0]), 1.0).unwrap();
    let square = Set::boxed(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
    let plane = Set::boxed(v(&[f64::NEG_INFINITY; 2]), v(&[f64::INFINITY; 2])).unwrap();
    let shifted_triangle = Set::halfspaces(
        2,
        vec![
            oblique_skorohod::convex::Halfspace { normal: v(&[-1.0, 0.0]), offset: 0.2 },
            oblique_skorohod::convex::Halfspace { normal: v(&[0.0, -1.0]), offset: 0.2 },
            oblique_skorohod::convex::Halfspace { normal: v(&[1.0, 1.0]), offset: 1.0 },
        ],
    )
    .unwrap();
    vec![
        Sample { phi: ConvexFunction::indicator(half_line()), zero_minimum: true },
        Sample { phi: ConvexFunction::indicator(square.clone()), zero_minimum: true },
        Sample { phi: ConvexFunction::indicator(ball.clone()), zero_minimum: true },
        Sample { phi: ConvexFunction::indicator(shifted_triangle.clone()), zero_minimum: true },
        Sample { phi: ConvexFunction::quadratic(m2(&[&[2.0, 0.0], &[0.0, 2.0]]), v(&[0.0, 0.0]), ball).unwrap(), zero_minimum: true },
        Sample { phi: ConvexFunction::quadratic(m2(&[&[1.0, 0.0], &[0.0, 3.0]]), v(&[0.0, 0.0]), square.clone()).unwrap(), zero_minimum: true },
        Sample { phi: ConvexFunction::quadratic(m2(&[&[2.0, 0.5], &[0.5, 1.0]]), v(&[0.3, -0.2]), plane).unwrap(), zero_minimum: false },
        Sample { phi: ConvexFunction::quadratic(m2(&[&[2.0, 0.5], &[0.5, 1.0]]), v(&[0.0, 0.0]), square).unwrap(), zero_minimum: true },
        Sample { phi: ConvexFunction::lipschitz_affine(v(&[0.5, -0.3]), 0.1, shifted_triangle).unwrap(), zero_minimum: false },
    ]
}

fn ac5() -> Outcome {
    const SAMPLES: usize = 1_000;
    let epss = [1.0, 0.1, 0.01];
    // worst excess per suite, each normalized so that <= 0 passes
    let mut worst = [f64::NEG_INFINITY; 6];
    let names = ["lipschitz-gradient", "monotone-gradient", "mixed-eps", "envelope-bracket", "resolvent-envelope", "envelope-monotone-eps"];
    for (idx, s) in ac5_catalog().iter().enumerate() {
        let phi = &s.phi;
        let dim = phi.dim();
        let mut rng = CounterRng::new(5_000 + idx as u64);
        let center = Vector::zeros(dim);
        for k in 0..SAMPLES {
            let x = rng.uniform_vector(&center, 3.0);
            let y = rng.uniform_vector(&center, 3.0);
            let eps = epss[k % 3];
            let delta = epss[(k / 3) % 3];
            let gx = phi.yosida_gradient(eps, &x).map_err(fail)?;
            let gy = phi.yosida_gradient(eps, &y).map_err(fail)?;
            let dxy = (&x - &y).norm();
            // |∇φ_ε(x) − ∇φ_ε(y)| ≤ |x − y| / ε
            worst[0] = worst[0].max((&gx - &gy).norm() - dxy / eps * (1.0 + 1e-12) - 1e-10);
            // ⟨∇φ_ε(x) − ∇φ_ε(y), x − y⟩ ≥ 0
            worst[1] = worst[1].max(-(&gx - &gy).dot(&(&x - &y)) - 1e-12 * (1.0 + dxy * dxy / eps));
            // ⟨∇φ_ε(x) − ∇φ_δ(y), x − y⟩ ≥ −(ε + δ)⟨∇φ_ε(x), ∇φ_δ(y)⟩
            let gyd = phi.yosida_gradient(delta, &y).map_err(fail)?;
            let lhs = (&gx - &gyd).dot(&(&x - &y));
            let rhs = -(eps + delta) * gx.dot(&gyd);
            worst[2] = worst[2].max(rhs - lhs - 1e-10 * (1.0 + gx.norm() * gyd.norm()));
            let env = phi.moreau_envelope(eps, &x).map_err(fail)?;
            // (ε/2)|∇φ_ε(x)|² ≤ φ_ε(x) ≤ ⟨∇φ_ε(x), x⟩ when φ ≥ φ(0) = 0
            if s.zero_minimum {
                let scale = 1e-10 * (1.0 + env.abs());
                worst[3] = worst[3].max(0.5 * eps * gx.norm_squared() - env - scale);
                worst[3] = worst[3].max(env - gx.dot(&x) - scale);
            }
            // φ_ε(x) = |x − J_ε x|² / (2ε) + φ(J_ε x)
            let j = phi.resolvent(eps, &x).map_err(fail)?;
            let direct = (&x - &j).norm_squared() / (2.0 * eps) + phi.eval(&j);
            worst[4] = worst[4].max((env - direct).abs() - 1e-10 * (1.0 + env.abs()));
            // φ_δ(x) ≥ φ_ε(x) for δ ≤ ε
            let (small, large) = if delta <= eps { (delta, eps) } else { (eps, delta) };
            let e_small = phi.moreau_envelope(small, &x).map_err(fail)?;
            let e_large = phi.moreau_envelope(large, &x).map_err(fail)?;
            worst[5] = worst[5].max(e_large - e_small - 1e-12 * (1.0 + e_large.abs()));
        }
    }
    let ok = worst.iter().all(|w| *w <= 0.0);
    let detail = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    check(ok, format!("{} functions x {SAMPLES} samples, worst excess: {detail}", ac5_catalog().len()))
}

fn ac6(solved: &[Solved]) -> Outcome {
    let mut ok = true;
    let mut count = 0;
    let mut worst = f64::INFINITY;
    for s in solved {
        if let Some((u0, r0)) = &s.case.interior {
            let r = interior_ball_bound(&s.sol, &s.case.problem.phi, u0, *r0).map_err(fail)?;
            ok &= r.passed();
            worst = worst.min(r.margin / r.tol);
            count += 1;
        }
    }
    check(ok && count > 0, format!("{count} solutions, min margin/tol = {worst:.3e} (>= -1)"))
}

fn ac7() -> Outcome {
    let case = half_line_smooth();
    let eps = 0.01;
    let base = solve_mollified(&case.problem, &case.input, eps, 10, 1e6).map_err(fail)?;
    let same = solve_mollified(&case.problem, &case.input, eps, 10, 1e6).map_err(fail)?;
    let zero_gap = base.x.sup_distance(&same.x).map_err(fail)?;
    let mut gaps = Vec::new();
    for delta in [1e-3, 2e-3, 4e-3] {
        let perturbed = SampledPath::from_fn(0.0, DT, STEPS, |t| case.input.node((t / DT).round() as usize) + v(&[delta * t])).map_err(fail)?;
        let sol = solve_mollified(&case.problem, &perturbed, eps, 10, 1e6).map_err(fail)?;
        gaps.push(base.x.sup_distance(&sol.x).map_err(fail)?);
    }
    let ratios = [gaps[1] / gaps[0], gaps[2] / gaps[1]];
    check(zero_gap == 0.0 && ratios.iter().all(|r| *r <= 2.5), format!("gaps [{}], ratios {ratios:.3?} (<= 2.5), identical-input gap {zero_gap}", sci(&gaps)))
}

fn ac8(solved: &[Solved]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in solved {
        let tvs: Vec<f64> = s.sol.refinement_history.iter().map(|l| l.tv_k).collect();
        let family = [1.0, 2.0, 4.0]
            .iter()
            .map(|&l| {
                // scaled inputs are refined down to the grid step
                converge_ladder(&s.case.problem, &s.case.scaled_input(l), &refinement(CATALOG_TOL))
                    .map(|sol| (l, sol.tv_k))
                    .map_err(|e| format!("{} lambda={l}: {e}", s.case.name))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let r = apriori_monitor(&tvs, &family).map_err(fail)?;
        let good = (0.8..=1.2).contains(&r.stabilization_ratio) && r.family_nondecreasing;
        ok &= good;
        parts.push(format!("{} ratio {:.3} tv {:?}", s.case.name, r.stabilization_ratio, r.family.iter().map(|p| format!("{:.3}", p.1)).collect::<Vec<_>>()));
    }
    check(ok, parts.join("; "))
}

fn csv_bytes(sol: &SkorohodSolution) -> Vec<u8> {
    let mut out = Vec::new();
    write_solution_csv(sol, &mut out).unwrap();
    out
}

fn ac9() -> Outcome {
    let case = half_line_smooth();
    let cfg = RefinementConfig { tol: 2e-2, eps0: 1.0 / 32.0, max_halvings: 6, ..RefinementConfig::for_horizon(1.0) };
    let driver = BrownianDriver { seed: 42, dt: 1.0 / 1024.0, dims: 1, horizon: 1.0 };
    let g = DiffusionSpec::Constant(m(&[&[0.5]]));
    let a = solve_svi_path(&case.problem, &g, &driver, 16, &cfg).map_err(fail)?;
    let b = solve_svi_path(&case.problem, &g, &driver, 16, &cfg).map_err(fail)?;
    let identical = csv_bytes(&a) == csv_bytes(&b) && a.refinement_history == b.refinement_history;

    let zero = DiffusionSpec::Zero { dim: 1, noise_dims: 1 };
    let drifted =
        oblique_skorohod::det_solver::SkorohodProblem { drift: oblique_skorohod::det_solver::DriftSpec::Constant(v(&[-0.8])), ..case.problem.clone() };
    let svi = solve_svi_path(&drifted, &zero, &driver, 16, &cfg).map_err(fail)?;
    let m0 = SampledPath::constant(0.0, driver.dt, 1024, v(&[0.0])).map_err(fail)?;
    let det = solve_skorohod(&drifted, &m0, &cfg).map_err(fail)?;
    let gap = svi.x.sup_distance(&det.x).map_err(fail)?;
    check(identical && gap <= cfg.tol, format!("repeat run byte-identical: {identical}; g=0 vs deterministic sup-gap {gap:.3e} (<= {})", cfg.tol))
}

fn ac10() -> Outcome {
    let drv = BrownianDriver { seed: 2024, dt: 1e-3, dims: 2, horizon: 10.0 };
    let b = brownian_path(&drv).map_err(fail)?;
    let n = b.steps() as f64;
    let mut var_ok = b.steps() >= 10_000;
    let mut vars = Vec::new();
    for c in 0..drv.dims {
        let inc: Vec<f64> = b.values().windows(2).map(|w| w[1][c] - w[0][c]).collect();
        let mean = inc.iter().sum::<f64>() / n;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var_ok &= (var - drv.dt).abs() <= 3.0 * (2.0 / n).sqrt() * drv.dt;
        vars.push(var);
    }

    let case = half_line_smooth();
    let path_drv = BrownianDriver { seed: 7, dt: 1.0 / 1024.0, dims: 1, horizon: 1.0 };
    let noise = brownian_path(&path_drv).map_err(fail)?;
    let g = DiffusionSpec::Constant(m(&[&[1.0]]));
    let pcfg = PenalizedConfig::new(4.0 / 1024.0);
    let sols = [8usize, 16, 32, 64, 128].iter().map(|&n| svi_sweep(&case.problem, &g, &noise, n, &pcfg)).collect::<Result<Vec<_>, _>>().map_err(fail)?;
    let gaps = sols.windows(2).map(|w| w[0].x.sup_distance(&w[1].x)).collect::<Result<Vec<_>, _>>().map_err(fail)?;
    let inversions = gaps.windows(2).filter(|w| w[1] > w[0]).count();
    check(
        var_ok && inversions <= 1,
        format!("increment variances [{}] vs dt {:.0e}; n-gaps [{}] with {inversions} inversion(s)", sci(&vars), drv.dt, sci(&gaps)),
    )
}

struct Criterion {
    id: &'static str,
    title: &'static str,
    limit: Option<Duration>,
}

fn main() {
    let mut failures = 0;
    let mut report = |c: Criterion, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let over = c.limit.is_some_and(|l| elapsed > l);
        let (tag, detail) = match outcome {
            Ok(d) if !over => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; runtime {elapsed:.2?} exceeds {:?}", c.limit.unwrap())),
            Err(d) => ("FAIL", d),
        };
        if tag == "FAIL" {
            failures += 1;
        }
        println!("[{tag}] {} {} ({elapsed:.2?}): {detail}", c.id, c.title);
    };
    let secs = |s| Some(Duration::from_secs(s));

    report(Criterion { id: "AC1", title: "oracle equivalence", limit: secs(5) }, &mut ac1);
    report(Criterion { id: "AC2", title: "Cauchy rate in eps", limit: secs(30) }, &mut ac2);

    let solved = solve_catalog();
    let with_catalog = |f: fn(&[Solved]) -> Outcome| {
        let solved = &solved;
        move || match solved {
            Ok(s) => f(s),
            Err(e) => Err(format!("catalog solve failed: {e}")),
        }
    };
    report(Criterion { id: "AC3", title: "VI inclusion", limit: None }, &mut with_catalog(ac3));
    report(Criterion { id: "AC4", title: "monotonicity", limit: None }, &mut ac4);
    report(Criterion { id: "AC5", title: "Moreau-Yosida identities", limit: None }, &mut ac5);
    report(Criterion { id: "AC6", title: "interior-ball subgradient bound", limit: None }, &mut with_catalog(ac6));
    report(Criterion { id: "AC7", title: "stability under input perturbation", limit: None }, &mut ac7);
    report(Criterion { id: "AC8", title: "a priori boundedness", limit: None }, &mut with_catalog(ac8));
    report(Criterion { id: "AC9", title: "stochastic determinism and degeneracy", limit: None }, &mut ac9);
    report(Criterion { id: "AC10", title: "Brownian statistics and n-refinement", limit: secs(60) }, &mut ac10);

    if failures > 0 {
        println!("acceptance: {failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
