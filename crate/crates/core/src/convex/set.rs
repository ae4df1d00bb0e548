//! Closed convex sets with exact (or certified-iterative) Euclidean projection.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::CounterRng;

/// Tolerance for the iterative polyhedral projection.
pub const PROJECTION_TOL: f64 = 1e-12;
/// Iteration cap (full cycles over all constraints) for the polyhedral projection.
pub const PROJECTION_MAX_ITER: usize = 10_000;
/// Absolute slack used for membership tests of computed points.
pub const MEMBERSHIP_SLACK: f64 = 1e-10;

/// `{x : ⟨normal, x⟩ ≤ offset}`
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vector,
    pub offset: f64,
}

impl Halfspace {
    fn violation(&self, x: &Vector) -> f64 {
        self.normal.dot(x) - self.offset
    }

    fn project(&self, x: &Vector) -> Vector {
        let v = self.violation(x);
        if v <= 0.0 {
            x.clone()
        } else {
            x - &self.normal * (v / self.normal.norm_squared())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Set {
    /// Intersection of finitely many closed halfspaces (empty list = whole space).
    Halfspaces {
        dim: usize,
        faces: Vec<Halfspace>,
    },
    /// Axis-aligned box; infinite bounds are allowed.
    Box {
        lo: Vector,
        hi: Vector,
    },
    Ball {
        center: Vector,
        radius: f64,
    },
}

impl Set {
    pub fn halfspaces(dim: usize, faces: Vec<Halfspace>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("set dimension must be positive".into()));
        }
        for (i, f) in faces.iter().enumerate() {
            if f.normal.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.normal.len() });
            }
            if !f.offset.is_finite() || f.normal.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("halfspace {i} is not finite")));
            }
            if f.normal.norm() == 0.0 {
                return Err(Error::InvalidInput(format!("halfspace {i} has a zero normal")));
            }
        }
        let set = Set::Halfspaces { dim, faces };
        let w = set.project(&Vector::zeros(dim))?;
        if !set.contains(&w, 1e-9) {
            return Err(Error::InvalidInput("halfspace intersection is empty".into()));
        }
        Ok(set)
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidInput("box bounds must have equal positive length".into()));
        }
        for i in 0..lo.len() {
            if lo[i].is_nan() || hi[i].is_nan() || lo[i] > hi[i] || lo[i] == f64::INFINITY || hi[i] == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!("box coordinate {i} has an empty range [{}, {}]", lo[i], hi[i])));
            }
        }
        Ok(Set::Box { lo, hi })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("ball center must be finite".into()));
        }
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidInput("ball radius must be finite and >= 0".into()));
        }
        Ok(Set::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Set::Halfspaces { dim, .. } => *dim,
            Set::Box { lo, .. } => lo.len(),
            Set::Ball { center, .. } => center.len(),
        }
    }

    pub fn is_whole_space(&self) -> bool {
        match self {
            Set::Halfspaces { faces, .. } => faces.is_empty(),
            Set::Box { lo, hi } => lo.iter().all(|v| v.is_infinite()) && hi.iter().all(|v| v.is_infinite()),
            Set::Ball { .. } => false,
        }
    }

    /// Upper bound on `sup_{x∈D} |x|`, when one is available in closed form.
    pub fn norm_bound(&self) -> Option<f64> {
        match self {
            Set::Box { lo, hi } => {
                let mut s = 0.0;
                for i in 0..lo.len() {
                    let m = lo[i].abs().max(hi[i].abs());
                    if !m.is_finite() {
                        return None;
                    }
                    s += m * m;
                }
                Some(s.sqrt())
            }
            Set::Ball { center, radius } => Some(center.norm() + radius),
            Set::Halfspaces { .. } => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.norm_bound().is_some()
    }

    /// Largest constraint violation; `≤ 0` means inside.
    pub fn violation(&self, x: &Vector) -> f64 {
        match self {
            Set::Halfspaces { faces, .. } => faces.iter().map(|f| f.violation(x) / f.normal.norm()).fold(f64::NEG_INFINITY, f64::max),
            Set::Box { lo, hi } => (0..lo.len()).map(|i| (lo[i] - x[i]).max(x[i] - hi[i])).fold(f64::NEG_INFINITY, f64::max),
            Set::Ball { center, radius } => (x - center).norm() - radius,
        }
    }

    pub fn contains(&self, x: &Vector, slack: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Set::Halfspaces { faces, .. } if faces.is_empty() => x.iter().all(|v| v.is_finite()),
            _ => self.violation(x) <= slack,
        }
    }

    /// Euclidean projection `π_D(x)`.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        match self {
            Set::Box { lo, hi } => Ok(Vector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))),
            Set::Ball { center, radius } => {
                let r = x - center;
                let n = r.norm();
                if n <= *radius {
                    Ok(x.clone())
                } else {
                    Ok(center + r * (radius / n))
                }
            }
            Set::Halfspaces { faces, .. } => project_polyhedron(faces, x),
        }
    }

    pub fn distance(&self, x: &Vector) -> Result<f64> {
        Ok((x - self.project(x)?).norm())
    }

    /// The `r`-interior `D_r = {x : B̄(x, r) ⊂ D}`.
    pub fn shrink(&self, r: f64) -> Result<Set> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput("shrink radius must be finite and >= 0".into()));
        }
        match self {
            Set::Halfspaces { dim, faces } => {
                let shrunk = faces.iter().map(|f| Halfspace { normal: f.normal.clone(), offset: f.offset - r * f.normal.norm() }).collect();
                Set::halfspaces(*dim, shrunk).map_err(|_| Error::Validation(format!("the {r}-interior of the polyhedron is empty")))
            }
            Set::Box { lo, hi } => {
                let lo2 = lo.map(|v| v + r);
                let hi2 = hi.map(|v| v - r);
                Set::boxed(lo2, hi2).map_err(|_| Error::Validation(format!("the {r}-interior of the box is empty")))
            }
            Set::Ball { center, radius } => {
                if r > *radius {
                    return Err(Error::Validation(format!("the {r}-interior of the ball is empty")));
                }
                Set::ball(center.clone(), radius - r)
            }
        }
    }

    /// A deterministic point of the set.
    pub fn witness(&self) -> Result<Vector> {
        match self {
            Set::Ball { center, .. } => Ok(center.clone()),
            _ => self.project(&Vector::zeros(self.dim())),
        }
    }

    /// Chebyshev-like centre used to seed probe clouds.
    pub fn probe_center(&self) -> Result<Vector> {
        match self {
            Set::Box { lo, hi } => Ok(Vector::from_fn(lo.len(), |i, _| match (lo[i].is_finite(), hi[i].is_finite()) {
                (true, true) => 0.5 * (lo[i] + hi[i]),
                (true, false) => lo[i] + 1.0,
                (false, true) => hi[i] - 1.0,
                (false, false) => 0.0,
            })),
            _ => self.witness(),
        }
    }

    /// Half-width of a cube around `probe_center` that covers the set (or a
    /// representative neighbourhood of it when unbounded).
    pub fn probe_half_width(&self) -> f64 {
        match self {
            Set::Box { lo, hi } => {
                let mut w: f64 = 0.0;
                for i in 0..lo.len() {
                    let span = hi[i] - lo[i];
                    w = w.max(if span.is_finite() { 0.5 * span } else { 5.0 });
                }
                w.max(1e-3)
            }
            Set::Ball { radius, .. } => radius.max(1e-3),
            Set::Halfspaces { .. } => 5.0,
        }
    }

    /// `count` deterministic points of `D`, obtained by projecting a uniform
    /// cloud drawn around the set.
    pub fn probe_cloud(&self, count: usize, seed: u64) -> Result<Vec<Vector>> {
        let c = self.probe_center()?;
        let w = 1.5 * self.probe_half_width();
        let mut rng = CounterRng::new(seed);
        (0..count).map(|_| self.project(&rng.uniform_vector(&c, w))).collect()
    }

    /// A small set of feasible points that exercise the geometry: the probe
    /// centre plus extreme points along the axes.
    pub fn extreme_points(&self) -> Result<Vec<Vector>> {
        let c = self.probe_center()?;
        let w = 2.0 * self.probe_half_width() + 1.0;
        let mut pts = vec![c.clone()];
        for i in 0..self.dim() {
            for sign in [-1.0, 1.0] {
                let mut y = c.clone();
                y[i] += sign * w;
                let p = self.project(&y)?;
                if !pts.iter().any(|q: &Vector| (q - &p).norm() < 1e-12) {
                    pts.push(p);
                }
            }
        }
        Ok(pts)
    }
}

fn project_polyhedron(faces: &[Halfspace], x: &Vector) -> Result<Vector> {
    if faces.iter().all(|f| f.violation(x) <= 0.0) {
        return Ok(x.clone());
    }
    match faces.len() {
        1 => Ok(faces[0].project(x)),
        2 => Ok(project_two_faces(&faces[0], &faces[1], x)),
        _ => dykstra(faces, x),
    }
}

/// Exact projection onto the intersection of two halfspaces by enumerating
/// active sets.
fn project_two_faces(a: &Halfspace, b: &Halfspace, x: &Vector) -> Vector {
    let feasible = |z: &Vector| {
        let s = 1e-12 * (1.0 + z.norm());
        a.violation(z) <= s * a.normal.norm() && b.violation(z) <= s * b.normal.norm()
    };
    let mut candidates = vec![a.project(x), b.project(x)];
    let g = Matrix::from_row_slice(2, 2, &[a.normal.norm_squared(), a.normal.dot(&b.normal), a.normal.dot(&b.normal), b.normal.norm_squared()]);
    let rhs = nalgebra::Vector2::new(a.violation(x), b.violation(x));
    let g2 = nalgebra::Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
    if let Some(inv) = g2.try_inverse() {
        let lambda = inv * rhs;
        if lambda[0] >= 0.0 && lambda[1] >= 0.0 {
            candidates.push(x - &a.normal * lambda[0] - &b.normal * lambda[1]);
        }
    }
    candidates
        .into_iter()
        .filter(|z| feasible(z))
        .min_by(|p, q| (p - x).norm().total_cmp(&(q - x).norm()))
        // parallel opposing faces: fall back to the iterative scheme result
        .unwrap_or_else(|| dykstra(&[a.clone(), b.clone()], x).unwrap_or_else(|_| x.clone()))
}

/// Dykstra's alternating projection onto an intersection of halfspaces.
fn dykstra(faces: &[Halfspace], x: &Vector) -> Result<Vector> {
    let scale = 1.0 + x.norm();
    let mut z = x.clone();
    let mut corrections: Vec<Vector> = vec![Vector::zeros(x.len()); faces.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..PROJECTION_MAX_ITER {
        let mut change: f64 = 0.0;
        for (face, p) in faces.iter().zip(corrections.iter_mut()) {
            let y = &z + &*p;
            let next = face.project(&y);
            let new_p = &y - &next;
            change = change.max((&new_p - &*p).norm()).max((&next - &z).norm());
            *p = new_p;
            z = next;
        }
        let infeas = faces.iter().map(|f| f.violation(&z).max(0.0) / f.normal.norm()).fold(0.0, f64::max);
        residual = change.max(infeas);
        if residual <= PROJECTION_TOL * scale {
            return Ok(z);
        }
    }
    Err(Error::InnerNonConvergence { iterations: PROJECTION_MAX_ITER, residual, tol: PROJECTION_TOL })
}
