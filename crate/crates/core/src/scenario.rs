//! JSON scenario files and their conversion into solver objects.
//!
//! ```json
//! {
//!   "dimension": 1,
//!   "phi": {"kind": "indicator", "set": {"kind": "box", "lo": [0.0], "hi": [null]}, "r0": 0.5},
//!   "H": {"kind": "constant", "matrix": [[2.0]], "c": 2.0, "b": 0.0},
//!   "f": {"kind": "zero"},
//!   "m": {"kind": "ramp", "slope": [-1.0]},
//!   "x0": [0.0], "T": 1.0, "dt": 0.001, "tol": 0.005
//! }
//! ```
//!
//! `null` box bounds stand for `∓∞`. Stochastic runs replace `m` by
//! `brownian`, `g` and `n_delay`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convex::{ConvexFunction, DomainGeometry, Halfspace, Set};
use crate::det_solver::{
    DriftSpec, Profile, RefinementConfig, SkorohodProblem, DEFAULT_GUARD_RADIUS, DEFAULT_MAX_HALVINGS, DEFAULT_SUBSTEP_RATIO, DEFAULT_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, Matrix, Vector};
use crate::oblique_field::{FieldKind, ObliqueField};
use crate::paths::{grid_multiple_exact, SampledPath};
use crate::sde::{BrownianDriver, DiffusionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetDecl {
    Box { lo: Vec<Option<f64>>, hi: Vec<Option<f64>> },
    Ball { center: Vec<f64>, radius: f64 },
    Halfspaces { faces: Vec<FaceDecl> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceDecl {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiKindDecl {
    Indicator,
    Quadratic { a: Vec<Vec<f64>>, q: Vec<f64> },
    LipschitzAffine { a: Vec<f64>, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiDecl {
    #[serde(flatten)]
    pub kind: PhiKindDecl,
    pub set: SetDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldDecl {
    Identity,
    Constant { matrix: Vec<Vec<f64>>, c: f64, b: f64 },
    DiagonalAffine { base: Vec<f64>, slopes: Vec<Vec<f64>>, c: f64, b: f64 },
    RotationBlend { from: Vec<Vec<f64>>, to: Vec<Vec<f64>>, direction: Vec<f64>, offset: f64, width: f64, c: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDecl {
    pub offset: f64,
    pub amplitude: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftDecl {
    Zero,
    Constant { value: Vec<f64> },
    Affine { a: Vec<Vec<f64>>, b0: Vec<f64> },
    TimeModulated { a: Vec<Vec<f64>>, b0: Vec<f64>, profile: ProfileDecl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionDecl {
    Zero { noise_dims: usize },
    Constant { matrix: Vec<Vec<f64>> },
    AffineInX { base: Vec<Vec<f64>>, slopes: Vec<Vec<Vec<f64>>>, bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputDecl {
    Zero,
    /// `m(t) = slope · t`
    Ramp {
        slope: Vec<f64>,
    },
    /// `m(t) = amplitude · sin(2πt / period)`
    Sinusoid {
        amplitude: Vec<f64>,
        period: f64,
    },
    Samples {
        dt: f64,
        values: Vec<Vec<f64>>,
    },
    /// CSV file with header `t,v1..vd`, relative to the scenario file.
    Csv {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianDecl {
    pub seed: u64,
    pub dt: f64,
    pub dims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub dimension: usize,
    pub phi: PhiDecl,
    #[serde(rename = "H")]
    pub h: FieldDecl,
    #[serde(default = "zero_drift")]
    pub f: DriftDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<DiffusionDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<InputDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brownian: Option<BrownianDecl>,
    pub x0: Vec<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_tol_vi")]
    pub tol_vi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_substep_ratio")]
    pub substep_ratio: usize,
    #[serde(default = "default_guard_radius")]
    pub guard_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_delay: Option<usize>,
}

fn zero_drift() -> DriftDecl {
    DriftDecl::Zero
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_tol_vi() -> f64 {
    1e-4
}
fn default_max_halvings() -> usize {
    DEFAULT_MAX_HALVINGS
}
fn default_substep_ratio() -> usize {
    DEFAULT_SUBSTEP_RATIO
}
fn default_guard_radius() -> f64 {
    DEFAULT_GUARD_RADIUS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Deterministic,
    Stochastic,
}

/// A parsed scenario together with the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let scenario = Scenario::from_json(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { scenario, base_dir })
    }
}

fn vector(xs: &[f64], dim: usize, what: &str) -> Result<Vector> {
    if xs.len() != dim {
        return Err(Error::InvalidInput(format!("{what} has length {}, expected {dim}", xs.len())));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} must be finite")));
    }
    Ok(Vector::from_row_slice(xs))
}

fn matrix(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<Matrix> {
    let m = matrix_from_rows(rows)?;
    if m.shape() != shape {
        return Err(Error::InvalidInput(format!("{what} has shape {:?}, expected {shape:?}", m.shape())));
    }
    Ok(m)
}

impl SetDecl {
    pub fn build(&self, dim: usize) -> Result<Set> {
        match self {
            SetDecl::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::InvalidInput(format!("box bounds must have length {dim}")));
                }
                let lo = Vector::from_iterator(dim, lo.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)));
                let hi = Vector::from_iterator(dim, hi.iter().map(|v| v.unwrap_or(f64::INFINITY)));
                Set::boxed(lo, hi)
            }
            SetDecl::Ball { center, radius } => Set::ball(vector(center, dim, "ball center")?, *radius),
            SetDecl::Halfspaces { faces } => {
                let faces =
                    faces.iter().map(|f| Ok(Halfspace { normal: vector(&f.normal, dim, "face normal")?, offset: f.offset })).collect::<Result<Vec<_>>>()?;
                Set::halfspaces(dim, faces)
            }
        }
    }
}

impl PhiDecl {
    pub fn build(&self, dim: usize) -> Result<ConvexFunction> {
        let domain = self.set.build(dim)?;
        match &self.kind {
            PhiKindDecl::Indicator => Ok(ConvexFunction::indicator(domain)),
            PhiKindDecl::Quadratic { a, q } => ConvexFunction::quadratic(matrix(a, (dim, dim), "phi.a")?, vector(q, dim, "phi.q")?, domain),
            PhiKindDecl::LipschitzAffine { a, beta } => ConvexFunction::lipschitz_affine(vector(a, dim, "phi.a")?, *beta, domain),
        }
    }
}

impl FieldDecl {
    pub fn build(&self, dim: usize) -> Result<ObliqueField> {
        let field = match self {
            FieldDecl::Identity => ObliqueField::identity(dim),
            FieldDecl::Constant { matrix: m, c, b } => ObliqueField::constant(matrix(m, (dim, dim), "H.matrix")?, *c, *b)?,
            FieldDecl::DiagonalAffine { base, slopes, c, b } => {
                if slopes.len() != dim {
                    return Err(Error::InvalidInput(format!("H.slopes needs {dim} rows")));
                }
                let slopes = slopes.iter().map(|s| vector(s, dim, "H.slopes row")).collect::<Result<Vec<_>>>()?;
                ObliqueField::new(FieldKind::DiagonalAffine { base: vector(base, dim, "H.base")?, slopes }, *c, *b)?
            }
            FieldDecl::RotationBlend { from, to, direction, offset, width, c, b } => ObliqueField::new(
                FieldKind::RotationBlend {
                    from: matrix(from, (dim, dim), "H.from")?,
                    to: matrix(to, (dim, dim), "H.to")?,
                    direction: vector(direction, dim, "H.direction")?,
                    offset: *offset,
                    width: *width,
                },
                *c,
                *b,
            )?,
        };
        Ok(field)
    }
}

impl DriftDecl {
    pub fn build(&self, dim: usize) -> Result<DriftSpec> {
        let drift = match self {
            DriftDecl::Zero => DriftSpec::zero(dim),
            DriftDecl::Constant { value } => DriftSpec::Constant(vector(value, dim, "f.value")?),
            DriftDecl::Affine { a, b0 } => DriftSpec::Affine { a: matrix(a, (dim, dim), "f.a")?, b0: vector(b0, dim, "f.b0")? },
            DriftDecl::TimeModulated { a, b0, profile } => DriftSpec::TimeModulated {
                a: matrix(a, (dim, dim), "f.a")?,
                b0: vector(b0, dim, "f.b0")?,
                profile: Profile { offset: profile.offset, amplitude: profile.amplitude, period: profile.period },
            },
        };
        drift.validate()?;
        Ok(drift)
    }
}

impl DiffusionDecl {
    pub fn build(&self, dim: usize) -> Result<DiffusionSpec> {
        let g = match self {
            DiffusionDecl::Zero { noise_dims } => DiffusionSpec::Zero { dim, noise_dims: *noise_dims },
            DiffusionDecl::Constant { matrix: m } => {
                let g = matrix_from_rows(m)?;
                if g.nrows() != dim {
                    return Err(Error::InvalidInput(format!("g.matrix needs {dim} rows")));
                }
                DiffusionSpec::Constant(g)
            }
            DiffusionDecl::AffineInX { base, slopes, bound } => {
                let base = matrix_from_rows(base)?;
                if base.nrows() != dim {
                    return Err(Error::InvalidInput(format!("g.base needs {dim} rows")));
                }
                let shape = base.shape();
                let slopes = slopes.iter().map(|s| matrix(s, shape, "g.slopes entry")).collect::<Result<Vec<_>>>()?;
                DiffusionSpec::AffineInX { base, slopes, bound: *bound }
            }
        };
        g.validate()?;
        Ok(g)
    }
}

/// Solver objects built from a scenario, with every grid quantity snapped.
#[derive(Debug, Clone)]
pub struct Built {
    pub mode: Mode,
    pub problem: SkorohodProblem,
    pub refinement: RefinementConfig,
    pub dt: f64,
    pub horizon: f64,
    pub steps: usize,
    pub input: Option<SampledPath>,
    pub diffusion: Option<DiffusionSpec>,
    pub driver: Option<BrownianDriver>,
    pub n_delay: Option<usize>,
    pub geometry: Option<DomainGeometry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapped {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
    pub eps0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_cells: Option<usize>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn mode(&self) -> Result<Mode> {
        match (&self.m, &self.brownian) {
            (Some(_), None) => Ok(Mode::Deterministic),
            (None, Some(_)) => Ok(Mode::Stochastic),
            _ => Err(Error::InvalidInput("declare exactly one of \"m\" and \"brownian\"".into())),
        }
    }

    fn input_path(&self, decl: &InputDecl, base_dir: &Path) -> Result<SampledPath> {
        let d = self.dimension;
        let grid = || -> Result<(f64, usize)> {
            let (dt, t) = match (self.dt, self.horizon) {
                (Some(dt), Some(t)) => (dt, t),
                _ => return Err(Error::InvalidInput("analytic inputs need \"dt\" and \"T\"".into())),
            };
            if !(dt > 0.0 && t >= dt) {
                return Err(Error::InvalidInput("need dt > 0 and T >= dt".into()));
            }
            Ok((dt, grid_multiple_exact(t, dt)?))
        };
        let path = match decl {
            InputDecl::Zero => {
                let (dt, n) = grid()?;
                SampledPath::constant(0.0, dt, n, Vector::zeros(d))?
            }
            InputDecl::Ramp { slope } => {
                let (dt, n) = grid()?;
                let s = vector(slope, d, "m.slope")?;
                SampledPath::from_fn(0.0, dt, n, |t| &s * t)?
            }
            InputDecl::Sinusoid { amplitude, period } => {
                let (dt, n) = grid()?;
                let a = vector(amplitude, d, "m.amplitude")?;
                if !(*period > 0.0) {
                    return Err(Error::InvalidInput("m.period must be > 0".into()));
                }
                SampledPath::from_fn(0.0, dt, n, |t| &a * (std::f64::consts::TAU * t / period).sin())?
            }
            InputDecl::Samples { dt, values } => {
                let values = values.iter().map(|v| vector(v, d, "m sample")).collect::<Result<Vec<_>>>()?;
                SampledPath::new(0.0, *dt, values)?
            }
            InputDecl::Csv { path } => {
                let file = fs::File::open(base_dir.join(path))?;
                SampledPath::from_csv(file)?.shifted(0.0)
            }
        };
        if path.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: path.dim() });
        }
        if let Some(dt) = self.dt {
            if (dt - path.dt()).abs() > 1e-12 * dt {
                return Err(Error::GridMismatch(format!("input grid step {} differs from dt = {dt}", path.dt())));
            }
        }
        if let Some(t) = self.horizon {
            if (t - path.horizon()).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::GridMismatch(format!("input horizon {} differs from T = {t}", path.horizon())));
            }
        }
        if path.node(0).norm() > 1e-12 {
            return Err(Error::InvalidInput("input m must start at m(0) = 0".into()));
        }
        Ok(path)
    }

    /// Validates and converts the scenario. Deterministic runs take their
    /// grid from the input path.
    pub fn build(&self, base_dir: &Path) -> Result<Built> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        let mode = self.mode()?;
        let phi = self.phi.build(d)?;
        let field = self.h.build(d)?;
        let drift = self.f.build(d)?;
        let x0 = vector(&self.x0, d, "x0")?;
        if !phi.domain().contains(&x0, 1e-12) {
            return Err(Error::Validation(format!("x0 = {:?} is outside Dom(phi)", self.x0)));
        }
        let geometry = match self.phi.r0 {
            Some(r0) => Some(DomainGeometry::new(phi.domain(), r0, self.phi.h0, field.b(), field.c())?),
            None => None,
        };
        let problem = SkorohodProblem::new(phi, field, drift, x0)?;
        if !(self.tol > 0.0 && self.tol_vi > 0.0) {
            return Err(Error::InvalidInput("tol and tol_vi must be > 0".into()));
        }
        if self.substep_ratio < 2 {
            return Err(Error::InvalidInput("substep_ratio must be >= 2".into()));
        }

        let (input, diffusion, driver, n_delay, dt, steps) = match mode {
            Mode::Deterministic => {
                if self.g.is_some() || self.n_delay.is_some() {
                    return Err(Error::InvalidInput("\"g\" and \"n_delay\" belong to stochastic runs".into()));
                }
                let m = self.input_path(self.m.as_ref().expect("deterministic mode has m"), base_dir)?;
                let (dt, steps) = (m.dt(), m.steps());
                (Some(m), None, None, None, dt, steps)
            }
            Mode::Stochastic => {
                let b = self.brownian.as_ref().expect("stochastic mode has brownian");
                if let Some(dt) = self.dt {
                    if (dt - b.dt).abs() > 1e-12 * dt {
                        return Err(Error::GridMismatch("dt must equal brownian.dt".into()));
                    }
                }
                let horizon = self.horizon.ok_or_else(|| Error::InvalidInput("stochastic runs need \"T\"".into()))?;
                let driver = BrownianDriver { seed: b.seed, dt: b.dt, dims: b.dims, horizon };
                let steps = driver.steps()?;
                let g = self.g.as_ref().map(|g| g.build(d)).transpose()?.unwrap_or(DiffusionSpec::Zero { dim: d, noise_dims: b.dims });
                if g.noise_dims() != b.dims {
                    return Err(Error::DimensionMismatch { expected: b.dims, got: g.noise_dims() });
                }
                let n = self.n_delay.ok_or_else(|| Error::InvalidInput("stochastic runs need \"n_delay\"".into()))?;
                if n == 0 {
                    return Err(Error::InvalidInput("n_delay must be >= 1".into()));
                }
                grid_multiple_exact(1.0 / n as f64, b.dt)?;
                (None, Some(g), Some(driver), Some(n), b.dt, steps)
            }
        };
        let horizon = steps as f64 * dt;
        let mut refinement = RefinementConfig::for_horizon(horizon);
        refinement.tol = self.tol;
        refinement.eps0 = self.eps0.unwrap_or(refinement.eps0);
        refinement.max_halvings = self.max_halvings;
        refinement.substep_ratio = self.substep_ratio;
        refinement.guard_radius = self.guard_radius;
        if !(refinement.eps0 > 0.0) {
            return Err(Error::InvalidInput("eps0 must be > 0".into()));
        }
        Ok(Built { mode, problem, refinement, dt, horizon, steps, input, diffusion, driver, n_delay, geometry })
    }
}

impl Built {
    pub fn snapped(&self) -> Result<Snapped> {
        let cells = crate::paths::grid_multiple_ceil(self.refinement.eps0.max(self.dt), self.dt)?;
        let delay_cells = match self.n_delay {
            Some(n) => Some(grid_multiple_exact(1.0 / n as f64, self.dt)?),
            None => None,
        };
        Ok(Snapped { dt: self.dt, horizon: self.horizon, steps: self.steps, eps0: cells as f64 * self.dt, delay_cells })
    }

    /// Interior point and radius for the interior-ball check, when `r0` is declared.
    pub fn interior(&self) -> Option<(Vector, f64)> {
        self.geometry.as_ref().map(|g| (Vector::from_row_slice(&g.interior_point), g.r0))
    }
}
