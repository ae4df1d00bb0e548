use crate::convex::Set;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Scalar time profile `p(t) = offset + amplitude · sin(2πt / period)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub offset: f64,
    pub amplitude: f64,
    pub period: f64,
}

impl Profile {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (std::f64::consts::TAU * t / self.period).sin()
    }

    pub fn sup(&self) -> f64 {
        self.offset.abs() + self.amplitude.abs()
    }
}

/// Drift `f(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    Zero {
        dim: usize,
    },
    Constant(Vector),
    /// `f(t, x) = A x + b₀`
    Affine {
        a: Matrix,
        b0: Vector,
    },
    /// `f(t, x) = p(t) (A x + b₀)`
    TimeModulated {
        a: Matrix,
        b0: Vector,
        profile: Profile,
    },
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        DriftSpec::Zero { dim }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        match self {
            DriftSpec::Zero { dim } if *dim == 0 => bad("drift dimension must be positive"),
            DriftSpec::Constant(v) if v.iter().any(|c| !c.is_finite()) => bad("drift must be finite"),
            DriftSpec::Affine { a, b0 } | DriftSpec::TimeModulated { a, b0, .. } => {
                if a.nrows() != b0.len() || a.ncols() != b0.len() {
                    return bad("affine drift needs a d x d matrix and a length-d offset");
                }
                if let DriftSpec::TimeModulated { profile, .. } = self {
                    if !(profile.period > 0.0) || !profile.offset.is_finite() || !profile.amplitude.is_finite() {
                        return bad("drift profile needs finite offset/amplitude and period > 0");
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DriftSpec::Zero { dim } => *dim,
            DriftSpec::Constant(v) => v.len(),
            DriftSpec::Affine { b0, .. } | DriftSpec::TimeModulated { b0, .. } => b0.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DriftSpec::Zero { .. })
    }

    pub fn eval(&self, t: f64, x: &Vector) -> Vector {
        match self {
            DriftSpec::Zero { dim } => Vector::zeros(*dim),
            DriftSpec::Constant(v) => v.clone(),
            DriftSpec::Affine { a, b0 } => a * x + b0,
            DriftSpec::TimeModulated { a, b0, profile } => (a * x + b0) * profile.eval(t),
        }
    }

    /// Certified `f#(t) ≥ sup_{x∈D} |f(t, x)|` (`+∞` when `D` is unbounded and
    /// the drift depends on the state).
    pub fn bound(&self, t: f64, domain: &Set) -> f64 {
        let affine = |a: &Matrix, b0: &Vector| {
            if a.iter().all(|v| *v == 0.0) {
                b0.norm()
            } else {
                domain.norm_bound().map(|r| a.norm() * r + b0.norm()).unwrap_or(f64::INFINITY)
            }
        };
        match self {
            DriftSpec::Zero { .. } => 0.0,
            DriftSpec::Constant(v) => v.norm(),
            DriftSpec::Affine { a, b0 } => affine(a, b0),
            DriftSpec::TimeModulated { a, b0, profile } => profile.eval(t).abs() * affine(a, b0),
        }
    }

    /// Lipschitz modulus `μ(t)` in the state variable.
    pub fn lipschitz(&self, t: f64) -> f64 {
        match self {
            DriftSpec::Zero { .. } | DriftSpec::Constant(_) => 0.0,
            DriftSpec::Affine { a, .. } => a.norm(),
            DriftSpec::TimeModulated { a, profile, .. } => a.norm() * profile.eval(t).abs(),
        }
    }

    /// `∫_0^T μ(t) dt` by the rectangle rule on the grid.
    pub fn lipschitz_integral(&self, horizon: f64, dt: f64) -> f64 {
        let n = (horizon / dt).round() as usize;
        (0..n).map(|i| self.lipschitz(i as f64 * dt) * dt).sum()
    }

    /// Largest excess of `|f(t, x)|` over `f#(t)` on the probes (`≤ 0` passes).
    pub fn bound_excess(&self, domain: &Set, probes: &[Vector], times: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for &t in times {
            let b = self.bound(t, domain);
            for x in probes {
                worst = worst.max(self.eval(t, x).norm() - b);
            }
        }
        worst
    }
}
