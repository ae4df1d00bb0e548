mod common;

use common::*;
use oblique_skorohod::convex::ConvexFunction;
use oblique_skorohod::det_solver::{DriftSpec, RefinementConfig, SkorohodProblem};
use oblique_skorohod::diagnostics::{default_windows, vi_residual, vi_tolerance};
use oblique_skorohod::sde::{monte_carlo, BrownianDriver, DiffusionSpec};

#[test]
fn reflected_brownian_motion_batch() {
    // half-line, H = 1, f = 0, g = 1, x0 = 1
    let problem = SkorohodProblem::new(ConvexFunction::indicator(half_line()), half_line_field(1.0), DriftSpec::zero(1), v(&[1.0])).unwrap();
    let g = DiffusionSpec::Constant(m(&[&[1.0]]));
    let driver = BrownianDriver { seed: 0, dt: 1.0 / 128.0, dims: 1, horizon: 1.0 };
    // Brownian inputs are rough, so successive gaps shrink like √ε rather than ε
    let cfg = RefinementConfig { tol: 1e-1, eps0: 1.0 / 16.0, max_halvings: 4, ..RefinementConfig::for_horizon(1.0) };
    let (summary, outcomes) = monte_carlo(&problem, &g, &driver, 8, &cfg, 2_000, 1).unwrap();
    assert_eq!(summary.paths, 2_000);
    assert!(summary.succeeded >= 1_990, "{:?}", &summary.failures[..summary.failures.len().min(3)]);
    assert!(summary.mean_x.last().unwrap()[0] >= 0.0);
    // dist(x, D) = ε·|∇φ_ε(x)| for the penalized state
    for o in &outcomes {
        if let Ok(sol) = &o.result {
            let eps = sol.eps.unwrap();
            assert!(sol.feasibility_defect <= eps * sol.max_penalty_gradient + 1e-12, "seed {}", o.seed);
            assert!(sol.x.values().iter().all(|x| x[0] >= -eps * sol.max_penalty_gradient - 1e-12));
        }
    }
    assert!(summary.mean_tv_k > 0.0);
}

#[test]
fn stochastic_solutions_satisfy_the_vi() {
    let case = box_diagonal();
    let g = DiffusionSpec::Constant(m(&[&[0.3, 0.0], &[0.0, 0.3]]));
    let driver = BrownianDriver { seed: 11, dt: 1.0 / 1024.0, dims: 2, horizon: 1.0 };
    let cfg = RefinementConfig { tol: 5e-2, eps0: 1.0 / 32.0, max_halvings: 6, ..RefinementConfig::for_horizon(1.0) };
    let (_, outcomes) = monte_carlo(&case.problem, &g, &driver, 16, &cfg, 8, 100).unwrap();
    let points = case.problem.phi.domain().extreme_points().unwrap();
    for o in outcomes {
        let sol = o.result.unwrap();
        let r = vi_residual(&sol, &case.problem.phi, &default_windows(&sol.x), &points, None).unwrap();
        assert!(r.residual <= vi_tolerance(sol.tv_k), "seed {}: {r:?}", o.seed);
    }
}
