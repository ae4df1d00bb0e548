//! Convex functions `φ = φ₁ + φ₂ + I_D` from a small declarative catalog, with
//! exact Moreau–Yosida machinery: resolvent (proximal map), Yosida gradient and
//! Moreau envelope.

mod geometry;
mod set;

pub use geometry::{DomainGeometry, H0_PROBE_COUNT};
pub use set::{Halfspace, Set, MEMBERSHIP_SLACK, PROJECTION_MAX_ITER, PROJECTION_TOL};

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix, Vector};

/// Stopping tolerance of the projected-gradient prox for general quadratics.
const PROX_TOL: f64 = 1e-12;
const PROX_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexKind {
    /// `φ = I_D`
    Indicator,
    /// `φ(x) = ½⟨Ax, x⟩ + ⟨q, x⟩ + I_D(x)` with `A` symmetric positive semidefinite.
    Quadratic { a: Matrix, q: Vector },
    /// `φ(x) = ⟨a, x⟩ + β + I_D(x)`
    LipschitzAffine { a: Vector, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum QuadraticShape {
    /// `A = αI`
    Isotropic(f64),
    Diagonal,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexFunction {
    kind: ConvexKind,
    domain: Set,
    lipschitz: f64,
    shape: Option<QuadraticShape>,
    max_curvature: f64,
}

impl ConvexFunction {
    pub fn indicator(domain: Set) -> Self {
        Self { kind: ConvexKind::Indicator, domain, lipschitz: 0.0, shape: None, max_curvature: 0.0 }
    }

    pub fn quadratic(a: Matrix, q: Vector, domain: Set) -> Result<Self> {
        let d = domain.dim();
        if a.nrows() != d || a.ncols() != d || q.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a.nrows().max(q.len()) });
        }
        if (&a - a.transpose()).amax() != 0.0 {
            return Err(Error::InvalidInput("quadratic matrix A must be symmetric".into()));
        }
        let ev = symmetric_eigenvalues(&a)?;
        if ev[0] < -1e-12 * (1.0 + ev[d - 1].abs()) {
            return Err(Error::InvalidInput(format!("quadratic matrix A must be positive semidefinite (min eigenvalue {})", ev[0])));
        }
        let max_curvature = ev[d - 1].max(0.0);
        let off_diagonal_zero = (0..d).all(|i| (0..d).all(|j| i == j || a[(i, j)] == 0.0));
        let shape = if off_diagonal_zero && (0..d).all(|i| a[(i, i)] == a[(0, 0)]) {
            QuadraticShape::Isotropic(a[(0, 0)])
        } else if off_diagonal_zero {
            QuadraticShape::Diagonal
        } else {
            QuadraticShape::General
        };
        // gradient Ax + q bounded on D by |A|₂·sup|x| + |q|
        let lipschitz = if max_curvature == 0.0 { q.norm() } else { domain.norm_bound().map(|r| max_curvature * r + q.norm()).unwrap_or(f64::INFINITY) };
        Ok(Self { kind: ConvexKind::Quadratic { a, q }, domain, lipschitz, shape: Some(shape), max_curvature })
    }

    pub fn lipschitz_affine(a: Vector, beta: f64, domain: Set) -> Result<Self> {
        if a.len() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: a.len() });
        }
        if !beta.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("affine coefficients must be finite".into()));
        }
        let lipschitz = a.norm();
        Ok(Self { kind: ConvexKind::LipschitzAffine { a, beta }, domain, lipschitz, shape: None, max_curvature: 0.0 })
    }

    pub fn kind(&self) -> &ConvexKind {
        &self.kind
    }

    pub fn domain(&self) -> &Set {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Certified `L` with `|φ(x) − φ(y)| ≤ L + L|x − y|` on the domain
    /// (`+∞` when no bound is available in closed form).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn smooth_part(&self, x: &Vector) -> f64 {
        match &self.kind {
            ConvexKind::Indicator => 0.0,
            ConvexKind::Quadratic { a, q } => 0.5 * x.dot(&(a * x)) + q.dot(x),
            ConvexKind::LipschitzAffine { a, beta } => a.dot(x) + beta,
        }
    }

    /// `φ(x)`, `+∞` outside the domain. Membership uses [`MEMBERSHIP_SLACK`].
    pub fn eval(&self, x: &Vector) -> f64 {
        if self.domain.contains(x, MEMBERSHIP_SLACK) {
            self.smooth_part(x)
        } else {
            f64::INFINITY
        }
    }

    pub fn project_domain(&self, x: &Vector) -> Result<Vector> {
        self.domain.project(x)
    }

    /// The resolvent `J_ε x = argmin_z { |z − x|²/(2ε) + φ(z) }`.
    pub fn resolvent(&self, eps: f64, x: &Vector) -> Result<Vector> {
        check_eps(eps)?;
        match &self.kind {
            ConvexKind::Indicator => self.domain.project(x),
            ConvexKind::LipschitzAffine { a, .. } => self.domain.project(&(x - a * eps)),
            ConvexKind::Quadratic { a, q } => {
                let shifted = x - q * eps;
                match self.shape.as_ref().expect("quadratic shape") {
                    QuadraticShape::Isotropic(alpha) => self.domain.project(&(shifted / (1.0 + eps * alpha))),
                    QuadraticShape::Diagonal if matches!(self.domain, Set::Box { .. }) => {
                        let unconstrained = Vector::from_fn(x.len(), |i, _| shifted[i] / (1.0 + eps * a[(i, i)]));
                        self.domain.project(&unconstrained)
                    }
                    _ if self.domain.is_whole_space() => {
                        let system = Matrix::identity(x.len(), x.len()) + a * eps;
                        system.cholesky().map(|c| c.solve(&shifted)).ok_or_else(|| Error::Singular("I + εA is not positive definite".into()))
                    }
                    _ => self.projected_gradient_prox(eps, x, a, q),
                }
            }
        }
    }

    /// Projected gradient on `|z − x|²/(2ε) + ½⟨Az, z⟩ + ⟨q, z⟩` over the domain.
    fn projected_gradient_prox(&self, eps: f64, x: &Vector, a: &Matrix, q: &Vector) -> Result<Vector> {
        let big_l = 1.0 / eps + self.max_curvature;
        let mu = 1.0 / eps;
        let step = 1.0 / big_l;
        let mut z = self.domain.project(x)?;
        let mut residual = f64::INFINITY;
        for _ in 0..PROX_MAX_ITER {
            let grad = (&z - x) / eps + a * &z + q;
            let next = self.domain.project(&(&z - grad * step))?;
            // error bound of a contraction with factor 1 − μ/L
            residual = (&next - &z).norm() * big_l / mu;
            z = next;
            if residual <= PROX_TOL * (1.0 + z.norm()) {
                return Ok(z);
            }
        }
        Err(Error::InnerNonConvergence { iterations: PROX_MAX_ITER, residual, tol: PROX_TOL })
    }

    /// `∇φ_ε(x) = (x − J_ε x)/ε`
    pub fn yosida_gradient(&self, eps: f64, x: &Vector) -> Result<Vector> {
        Ok((x - self.resolvent(eps, x)?) / eps)
    }

    /// `φ_ε(x) = |x − J_ε x|²/(2ε) + φ(J_ε x)`
    pub fn moreau_envelope(&self, eps: f64, x: &Vector) -> Result<f64> {
        Ok(self.regularize(eps, x)?.envelope)
    }

    /// Resolvent, Yosida gradient and envelope in one prox evaluation.
    pub fn regularize(&self, eps: f64, x: &Vector) -> Result<Regularized> {
        let resolvent = self.resolvent(eps, x)?;
        let diff = x - &resolvent;
        let envelope = diff.norm_squared() / (2.0 * eps) + self.smooth_part(&resolvent);
        Ok(Regularized { gradient: diff / eps, envelope, resolvent })
    }

    /// Empirical check of `|φ(x) − φ(y)| ≤ L + L|x − y|` over all probe pairs.
    /// Returns the worst excess (`≤ 0` means the bound holds).
    pub fn lipschitz_excess(&self, probes: &[Vector]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, x) in probes.iter().enumerate() {
            for y in &probes[i + 1..] {
                let gap = (self.smooth_part(x) - self.smooth_part(y)).abs();
                worst = worst.max(gap - self.lipschitz * (1.0 + (x - y).norm()));
            }
        }
        worst
    }

    /// Stable identifier of the function, used to tell solution systems apart.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let mut put = |xs: &[f64]| {
            for v in xs {
                h.write_u64(v.to_bits());
            }
            h.write_u8(0xff);
        };
        match &self.kind {
            ConvexKind::Indicator => put(&[0.0]),
            ConvexKind::Quadratic { a, q } => {
                put(&[1.0]);
                put(a.as_slice());
                put(q.as_slice());
            }
            ConvexKind::LipschitzAffine { a, beta } => {
                put(&[2.0, *beta]);
                put(a.as_slice());
            }
        }
        match &self.domain {
            Set::Halfspaces { faces, .. } => {
                put(&[10.0]);
                for f in faces {
                    put(f.normal.as_slice());
                    put(&[f.offset]);
                }
            }
            Set::Box { lo, hi } => {
                put(&[11.0]);
                put(lo.as_slice());
                put(hi.as_slice());
            }
            Set::Ball { center, radius } => {
                put(&[12.0, *radius]);
                put(center.as_slice());
            }
        }
        h.finish()
    }
}

/// Output of [`ConvexFunction::regularize`].
#[derive(Debug, Clone)]
pub struct Regularized {
    pub resolvent: Vector,
    pub gradient: Vector,
    pub envelope: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("regularization parameter must be > 0, got {eps}")))
    }
}
