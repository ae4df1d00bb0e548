//! Closed-form reflection on the half-line `E = [0, ∞)` with a constant scalar
//! field `H = h`, used as a verification oracle.

use super::{system_id, SkorohodSolution};
use crate::convex::{ConvexFunction, Set};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::oblique_field::ObliqueField;
use crate::paths::SampledPath;

/// `(I_{[0,∞)}, H ≡ h)` with `c = max(h, 1/h)`, `b = 0`.
pub fn halfline_system(h: f64) -> (ConvexFunction, ObliqueField) {
    let set = Set::boxed(Vector::from_element(1, 0.0), Vector::from_element(1, f64::INFINITY)).expect("half-line");
    let field = ObliqueField::constant(Matrix::from_element(1, 1, h), h.max(1.0 / h), 0.0).expect("scalar field");
    (ConvexFunction::indicator(set), field)
}

/// `x = x₀ + m + hℓ`, `ℓ(t) = h⁻¹ max(0, −inf_{s≤t}(x₀ + m(s)))`, `k = −ℓ`.
pub fn oracle_halfline(h: f64, x0: f64, m: &SampledPath) -> Result<SkorohodSolution> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("oracle needs h > 0, got {h}")));
    }
    if !(x0 >= 0.0) {
        return Err(Error::InvalidInput(format!("oracle needs x0 >= 0, got {x0}")));
    }
    if m.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: m.dim() });
    }
    let mut running_min = f64::INFINITY;
    let mut xs = Vec::with_capacity(m.steps() + 1);
    let mut ks = Vec::with_capacity(m.steps() + 1);
    for v in m.values() {
        let free = x0 + v[0];
        running_min = running_min.min(free);
        let push = (-running_min).max(0.0);
        xs.push(Vector::from_element(1, free + push));
        ks.push(Vector::from_element(1, -push / h));
    }
    let k = SampledPath::new(m.t0(), m.dt(), ks)?;
    let tv_k = k.total_variation_full();
    let (phi, field) = halfline_system(h);
    Ok(SkorohodSolution {
        x: SampledPath::new(m.t0(), m.dt(), xs)?,
        k,
        tv_k,
        eps: None,
        refinement_history: Vec::new(),
        max_penalty_gradient: 0.0,
        feasibility_defect: 0.0,
        system: system_id(&phi, &field),
    })
}

/// Largest reflection increment taken while the state sits above `tol`
/// (zero for an exact reflection).
pub fn oracle_complementarity_defect(sol: &SkorohodSolution, tol: f64) -> f64 {
    let xs = sol.x.values();
    let ks = sol.k.values();
    (1..xs.len()).filter(|&i| xs[i][0] > tol).map(|i| (ks[i][0] - ks[i - 1][0]).abs()).fold(0.0, f64::max)
}
