//! Scenario catalog shared by the integration and acceptance tests.
#![allow(dead_code)]

use oblique_skorohod::convex::{ConvexFunction, Halfspace, Set};
use oblique_skorohod::det_solver::{DriftSpec, RefinementConfig, SkorohodProblem};
use oblique_skorohod::linalg::{Matrix, Vector};
use oblique_skorohod::oblique_field::{FieldKind, ObliqueField};
use oblique_skorohod::paths::SampledPath;

pub const DT: f64 = 1e-3;
pub const STEPS: usize = 1000;

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_row_slice(xs)
}

pub fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

pub struct Case {
    pub name: &'static str,
    pub problem: SkorohodProblem,
    pub input: SampledPath,
    /// Interior point `u₀` with a radius `r₀` whose sphere stays in the domain.
    pub interior: Option<(Vector, f64)>,
}

impl Case {
    pub fn scaled_input(&self, lambda: f64) -> SampledPath {
        let values = self.input.values().iter().map(|x| x * lambda).collect();
        SampledPath::new(self.input.t0(), self.input.dt(), values).unwrap()
    }

    pub fn with_input(&self, input: SampledPath) -> Case {
        Case { name: self.name, problem: self.problem.clone(), input, interior: self.interior.clone() }
    }
}

pub fn path(f: impl Fn(f64) -> Vector) -> SampledPath {
    SampledPath::from_fn(0.0, DT, STEPS, f).unwrap()
}

fn sin(t: f64) -> f64 {
    (std::f64::consts::TAU * t).sin()
}

pub fn half_line_field(h: f64) -> ObliqueField {
    ObliqueField::constant(m(&[&[h]]), h.max(1.0 / h), 0.0).unwrap()
}

pub fn half_line() -> Set {
    Set::boxed(v(&[0.0]), v(&[f64::INFINITY])).unwrap()
}

/// `E = [0, ∞)`, `H = 2`, `m(t) = −t`, `x₀ = 0`.
pub fn half_line_ramp() -> Case {
    let problem = SkorohodProblem::new(ConvexFunction::indicator(half_line()), half_line_field(2.0), DriftSpec::zero(1), v(&[0.0])).unwrap();
    Case { name: "half-line ramp", problem, input: path(|t| v(&[-t])), interior: Some((v(&[1.0]), 0.5)) }
}

/// Half-line with a smooth oscillating input and `H = 1`.
pub fn half_line_smooth() -> Case {
    let problem = SkorohodProblem::new(ConvexFunction::indicator(half_line()), half_line_field(1.0), DriftSpec::zero(1), v(&[0.1])).unwrap();
    Case { name: "half-line smooth", problem, input: path(|t| v(&[-0.5 * sin(t) - 0.3 * t])), interior: Some((v(&[1.0]), 0.5)) }
}

/// Unit square with a state-dependent diagonal field.
pub fn box_diagonal() -> Case {
    let set = Set::boxed(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
    let field = ObliqueField::new(FieldKind::DiagonalAffine { base: v(&[2.0, 0.5]), slopes: vec![v(&[0.2, 0.0]), v(&[0.0, 0.1])] }, 2.5, 1.0).unwrap();
    let problem = SkorohodProblem::new(ConvexFunction::indicator(set), field, DriftSpec::zero(2), v(&[0.5, 0.5])).unwrap();
    Case { name: "box diagonal", problem, input: path(|t| v(&[-t, 0.7 * sin(t)])), interior: Some((v(&[0.5, 0.5]), 0.25)) }
}

pub fn blend_field() -> ObliqueField {
    ObliqueField::new(
        FieldKind::RotationBlend { from: Matrix::identity(2, 2), to: m(&[&[2.0, 0.0], &[0.0, 0.5]]), direction: v(&[1.0, 0.0]), offset: -1.0, width: 2.0 },
        2.0,
        10.0,
    )
    .unwrap()
}

/// Unit disc with a field that blends from `I` to `diag(2, ½)` across it.
pub fn ball_blend() -> Case {
    let set = Set::ball(v(&[0.0, 0.0]), 1.0).unwrap();
    let problem = SkorohodProblem::new(ConvexFunction::indicator(set), blend_field(), DriftSpec::zero(2), v(&[0.0, 0.0])).unwrap();
    Case { name: "ball rotation-blend", problem, input: path(|t| v(&[1.5 * t, 0.8 * sin(t)])), interior: Some((v(&[0.0, 0.0]), 0.5)) }
}

/// `φ = ½⟨Ax,x⟩ + ⟨q,x⟩` on `[−1, 1]²`, constant oblique field, constant drift.
pub fn quadratic_box() -> Case {
    let set = Set::boxed(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
    let phi = ConvexFunction::quadratic(m(&[&[1.0, 0.0], &[0.0, 2.0]]), v(&[0.5, 0.0]), set).unwrap();
    let field = ObliqueField::constant(m(&[&[1.5, 0.3], &[0.3, 1.0]]), 2.0, 0.0).unwrap();
    let problem = SkorohodProblem::new(phi, field, DriftSpec::Constant(v(&[0.2, 0.0])), v(&[0.0, 0.0])).unwrap();
    Case { name: "quadratic box", problem, input: path(|t| v(&[1.5 * t, -1.5 * t])), interior: Some((v(&[0.0, 0.0]), 0.5)) }
}

pub fn triangle() -> Set {
    Set::halfspaces(
        2,
        vec![
            Halfspace { normal: v(&[-1.0, 0.0]), offset: 0.0 },
            Halfspace { normal: v(&[0.0, -1.0]), offset: 0.0 },
            Halfspace { normal: v(&[1.0, 1.0]), offset: 1.0 },
        ],
    )
    .unwrap()
}

/// Affine `φ` on a triangle with a mean-reverting affine drift.
pub fn affine_triangle() -> Case {
    let phi = ConvexFunction::lipschitz_affine(v(&[0.5, -0.3]), 0.0, triangle()).unwrap();
    let drift = DriftSpec::Affine { a: m(&[&[-0.5, 0.0], &[0.0, -0.5]]), b0: v(&[0.1, 0.1]) };
    let problem = SkorohodProblem::new(phi, ObliqueField::identity(2), drift, v(&[0.2, 0.2])).unwrap();
    Case { name: "affine triangle", problem, input: path(|t| v(&[0.8 * sin(t), -t])), interior: Some((v(&[0.25, 0.25]), 0.05)) }
}

/// `φ = ½x²` on the whole line: pure penalization, no constraint.
pub fn quadratic_line() -> Case {
    let set = Set::boxed(v(&[f64::NEG_INFINITY]), v(&[f64::INFINITY])).unwrap();
    let phi = ConvexFunction::quadratic(m(&[&[1.0]]), v(&[0.0]), set).unwrap();
    let problem = SkorohodProblem::new(phi, half_line_field(1.5), DriftSpec::zero(1), v(&[0.5])).unwrap();
    Case { name: "quadratic line", problem, input: path(|t| v(&[sin(t)])), interior: Some((v(&[0.0]), 1.0)) }
}

pub fn catalog() -> Vec<Case> {
    vec![half_line_ramp(), half_line_smooth(), box_diagonal(), ball_blend(), quadratic_box(), affine_triangle(), quadratic_line()]
}

pub fn refinement(tol: f64) -> RefinementConfig {
    RefinementConfig { tol, ..RefinementConfig::for_horizon(1.0) }
}
