//! The oblique matrix field `x ↦ H(x)`: symmetric, uniformly elliptic and
//! Lipschitz together with its inverse.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, symmetric_eigenvalues, Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Constant(Matrix),
    /// `H(x) = diag(d_i(x))`, `d_i(x) = clamp(base_i + ⟨slope_i, x⟩, 1/c, c)`.
    DiagonalAffine {
        base: Vector,
        slopes: Vec<Vector>,
    },
    /// `H(x) = (1 − w(x)) from + w(x) to` with the smoothstep weight
    /// `w(x) = s(clamp((⟨direction, x⟩ − offset)/width, 0, 1))`, `s(u) = 3u² − 2u³`.
    RotationBlend {
        from: Matrix,
        to: Matrix,
        direction: Vector,
        offset: f64,
        width: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueField {
    kind: FieldKind,
    dim: usize,
    c: f64,
    b: f64,
}

impl ObliqueField {
    pub fn new(kind: FieldKind, c: f64, b: f64) -> Result<Self> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(Error::InvalidInput(format!("ellipticity constant c must be >= 1, got {c}")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidInput(format!("Lipschitz constant b must be >= 0, got {b}")));
        }
        let dim = match &kind {
            FieldKind::Constant(m) => {
                check_symmetric(m)?;
                m.nrows()
            }
            FieldKind::DiagonalAffine { base, slopes } => {
                if slopes.len() != base.len() || slopes.iter().any(|s| s.len() != base.len()) {
                    return Err(Error::InvalidInput("diagonal_affine needs one slope vector of length d per coordinate".into()));
                }
                base.len()
            }
            FieldKind::RotationBlend { from, to, direction, width, .. } => {
                check_symmetric(from)?;
                check_symmetric(to)?;
                if from.shape() != to.shape() || direction.len() != from.nrows() {
                    return Err(Error::InvalidInput("rotation_blend endpoints and direction must agree in dimension".into()));
                }
                if !(*width > 0.0) {
                    return Err(Error::InvalidInput("rotation_blend width must be > 0".into()));
                }
                from.nrows()
            }
        };
        if dim == 0 {
            return Err(Error::InvalidInput("field dimension must be positive".into()));
        }
        Ok(Self { kind, dim, c, b })
    }

    pub fn constant(m: Matrix, c: f64, b: f64) -> Result<Self> {
        Self::new(FieldKind::Constant(m), c, b)
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(Matrix::identity(dim, dim), 1.0, 0.0).expect("identity field")
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared ellipticity constant.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Declared Lipschitz constant of `H` plus that of `H⁻¹`.
    pub fn b(&self) -> f64 {
        self.b
    }

    fn blend_weight(direction: &Vector, offset: f64, width: f64, x: &Vector) -> f64 {
        let u = ((direction.dot(x) - offset) / width).clamp(0.0, 1.0);
        u * u * (3.0 - 2.0 * u)
    }

    pub fn eval(&self, x: &Vector) -> Matrix {
        match &self.kind {
            FieldKind::Constant(m) => m.clone(),
            FieldKind::DiagonalAffine { base, slopes } => {
                let diag = Vector::from_fn(self.dim, |i, _| (base[i] + slopes[i].dot(x)).clamp(1.0 / self.c, self.c));
                Matrix::from_diagonal(&diag)
            }
            FieldKind::RotationBlend { from, to, direction, offset, width } => {
                let w = Self::blend_weight(direction, *offset, *width, x);
                // entrywise so that h_ij = h_ji holds bit for bit
                Matrix::from_fn(self.dim, self.dim, |i, j| (1.0 - w) * from[(i, j)] + w * to[(i, j)])
            }
        }
    }

    /// `H(x)⁻¹`, checked so that `H(x)·H(x)⁻¹ = I` to `1e-12`.
    pub fn eval_inverse(&self, x: &Vector) -> Result<Matrix> {
        match &self.kind {
            FieldKind::DiagonalAffine { .. } => {
                let diag = self.eval(x).diagonal().map(|d| 1.0 / d);
                Ok(Matrix::from_diagonal(&diag))
            }
            _ => checked_inverse(&self.eval(x)),
        }
    }

    /// Evaluates the hypotheses on a probe set and compares them with the
    /// declared `c` and `b`.
    pub fn validate(&self, probes: &[Vector]) -> Result<ValidationReport> {
        if probes.len() < 2 {
            return Err(Error::Precondition("field validation needs at least 2 probes".into()));
        }
        let mut report = ValidationReport {
            probes: probes.len(),
            declared_c: self.c,
            declared_b: self.b,
            max_symmetry_defect: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_eigenvalue: f64::NEG_INFINITY,
            lipschitz_h: 0.0,
            lipschitz_h_inv: 0.0,
            violations: Vec::new(),
        };
        let mut values = Vec::with_capacity(probes.len());
        for (i, x) in probes.iter().enumerate() {
            let h = self.eval(x);
            let hinv = self.eval_inverse(x)?;
            report.max_symmetry_defect = report.max_symmetry_defect.max((&h - h.transpose()).amax());
            let ev = symmetric_eigenvalues(&h)?;
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            report.min_eigenvalue = report.min_eigenvalue.min(lo);
            report.max_eigenvalue = report.max_eigenvalue.max(hi);
            let tol = 1e-12 * self.c;
            if lo < 1.0 / self.c - tol || hi > self.c + tol {
                report.violations.push(FieldViolation {
                    quantity: "spectrum".into(),
                    probe_a: i,
                    probe_b: None,
                    value: if hi > self.c + tol { hi } else { lo },
                    bound: if hi > self.c + tol { self.c } else { 1.0 / self.c },
                });
            }
            values.push((h, hinv));
        }
        let mut worst_pair = (0, 1);
        let mut worst_sum = 0.0;
        for i in 0..probes.len() {
            for j in (i + 1)..probes.len() {
                let dx = (&probes[i] - &probes[j]).norm();
                if dx < 1e-12 {
                    continue;
                }
                let qh = (&values[i].0 - &values[j].0).norm() / dx;
                let qinv = (&values[i].1 - &values[j].1).norm() / dx;
                report.lipschitz_h = report.lipschitz_h.max(qh);
                report.lipschitz_h_inv = report.lipschitz_h_inv.max(qinv);
                if qh + qinv > worst_sum {
                    worst_sum = qh + qinv;
                    worst_pair = (i, j);
                }
            }
        }
        if report.lipschitz_h + report.lipschitz_h_inv > self.b * (1.0 + 1e-9) + 1e-12 {
            report.violations.push(FieldViolation {
                quantity: "lipschitz".into(),
                probe_a: worst_pair.0,
                probe_b: Some(worst_pair.1),
                value: report.lipschitz_h + report.lipschitz_h_inv,
                bound: self.b,
            });
        }
        Ok(report)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let mut put = |xs: &[f64]| {
            for v in xs {
                h.write_u64(v.to_bits());
            }
            h.write_u8(0xff);
        };
        put(&[self.c, self.b]);
        match &self.kind {
            FieldKind::Constant(m) => {
                put(&[0.0]);
                put(m.as_slice());
            }
            FieldKind::DiagonalAffine { base, slopes } => {
                put(&[1.0]);
                put(base.as_slice());
                for s in slopes {
                    put(s.as_slice());
                }
            }
            FieldKind::RotationBlend { from, to, direction, offset, width } => {
                put(&[2.0, *offset, *width]);
                put(from.as_slice());
                put(to.as_slice());
                put(direction.as_slice());
            }
        }
        h.finish()
    }
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("field matrix must be square".into()));
    }
    if (m - m.transpose()).amax() != 0.0 {
        return Err(Error::InvalidInput("field matrix must be exactly symmetric".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldViolation {
    pub quantity: String,
    pub probe_a: usize,
    pub probe_b: Option<usize>,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub probes: usize,
    pub declared_c: f64,
    pub declared_b: f64,
    pub max_symmetry_defect: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub lipschitz_h: f64,
    pub lipschitz_h_inv: f64,
    pub violations: Vec<FieldViolation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.max_symmetry_defect == 0.0
    }
}

/// The symmetric matrix `M = ⟨ν,n⟩I − ν⊗n − n⊗ν + (2/⟨ν,n⟩) ν⊗ν`, which maps
/// the unit normal `n` onto the external direction `ν`.
pub fn direction_matrix(nu: &Vector, n: &Vector) -> Result<Matrix> {
    if nu.len() != n.len() {
        return Err(Error::DimensionMismatch { expected: n.len(), got: nu.len() });
    }
    if (n.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("normal must be a unit vector (|n| = {})", n.norm())));
    }
    let pairing = nu.dot(n);
    if !(pairing > 0.0) {
        return Err(Error::InvalidInput(format!("direction is not external: <nu, n> = {pairing} <= 0")));
    }
    let d = n.len();
    let nu_n = nu * n.transpose();
    let m = Matrix::identity(d, d) * pairing - &nu_n - nu_n.transpose() + (nu * nu.transpose()) * (2.0 / pairing);
    // symmetrize against rounding in the outer products
    Ok(Matrix::from_fn(d, d, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn grid_probes() -> Vec<Vector> {
        let mut out = Vec::new();
        for i in 0..9 {
            for j in 0..9 {
                out.push(v(&[-2.0 + 0.5 * i as f64, -2.0 + 0.5 * j as f64]));
            }
        }
        out
    }

    fn blend() -> ObliqueField {
        ObliqueField::new(
            FieldKind::RotationBlend {
                from: Matrix::identity(2, 2),
                to: Matrix::from_diagonal(&v(&[2.0, 0.5])),
                direction: v(&[1.0, 0.0]),
                offset: -1.0,
                width: 2.0,
            },
            2.0,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_field_everywhere() {
        let h = ObliqueField::identity(3);
        assert_eq!(h.eval(&v(&[1.0, -4.0, 9.0])), Matrix::identity(3, 3));
        assert_eq!(h.eval_inverse(&v(&[0.0, 0.0, 0.0])).unwrap(), Matrix::identity(3, 3));
    }

    #[test]
    fn constant_scalar_field() {
        let h = ObliqueField::new(FieldKind::DiagonalAffine { base: v(&[2.0]), slopes: vec![v(&[0.0])] }, 2.0, 0.0).unwrap();
        assert_eq!(h.eval(&v(&[7.0])), Matrix::from_element(1, 1, 2.0));
        assert_eq!(h.eval_inverse(&v(&[7.0])).unwrap(), Matrix::from_element(1, 1, 0.5));
    }

    #[test]
    fn blend_endpoint_and_inverse() {
        let h = blend();
        assert_eq!(h.eval(&v(&[-5.0, 0.0])), Matrix::identity(2, 2));
        assert_eq!(h.eval(&v(&[5.0, 0.0])), Matrix::from_diagonal(&v(&[2.0, 0.5])));
        for x in grid_probes() {
            let prod = h.eval(&x) * h.eval_inverse(&x).unwrap();
            assert!((prod - Matrix::identity(2, 2)).amax() <= 1e-12);
        }
    }

    #[test]
    fn validate_identity_passes() {
        let r = ObliqueField::identity(2).validate(&grid_probes()).unwrap();
        assert!(r.passed());
        assert_eq!(r.min_eigenvalue, 1.0);
        assert_eq!(r.max_eigenvalue, 1.0);
    }

    #[test]
    fn validate_flags_spectrum_violation() {
        let h = ObliqueField::constant(Matrix::from_element(1, 1, 3.0), 2.0, 0.0).unwrap();
        let r = h.validate(&[v(&[0.0]), v(&[1.0])]).unwrap();
        assert!(!r.passed());
        assert_eq!(r.violations[0].quantity, "spectrum");
        assert_eq!(r.violations[0].value, 3.0);
    }

    #[test]
    fn validate_blend_spectrum_within_bounds() {
        let r = blend().validate(&grid_probes()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.min_eigenvalue >= 0.5 - 1e-12 && r.max_eigenvalue <= 2.0 + 1e-12);
    }

    #[test]
    fn validate_flags_understated_lipschitz() {
        let h = ObliqueField::new(
            FieldKind::RotationBlend {
                from: Matrix::identity(2, 2),
                to: Matrix::from_diagonal(&v(&[2.0, 0.5])),
                direction: v(&[1.0, 0.0]),
                offset: -1.0,
                width: 2.0,
            },
            2.0,
            0.1,
        )
        .unwrap();
        let r = h.validate(&grid_probes()).unwrap();
        assert!(r.violations.iter().any(|v| v.quantity == "lipschitz" && v.probe_b.is_some()));
    }

    #[test]
    fn validate_needs_two_probes() {
        assert!(ObliqueField::identity(1).validate(&[v(&[0.0])]).is_err());
    }

    #[test]
    fn direction_matrix_aligned_is_identity() {
        let m = direction_matrix(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(m, Matrix::identity(2, 2));
    }

    #[test]
    fn direction_matrix_scaled_normal() {
        let n = v(&[0.0, 1.0]);
        let m = direction_matrix(&(&n * 2.0), &n).unwrap();
        assert!((&m * &n - &n * 2.0).norm() < 1e-12);
    }

    #[test]
    fn direction_matrix_diagonal_direction() {
        let s = 0.5f64.sqrt();
        let nu = v(&[s, s]);
        let n = v(&[1.0, 0.0]);
        let m = direction_matrix(&nu, &n).unwrap();
        // direct assembly: ⟨ν,n⟩ = s, M = sI − ν nᵀ − n νᵀ + (2/s) ν νᵀ
        let expected = Matrix::from_row_slice(2, 2, &[s - 2.0 * s + 1.0 / s, -s + 1.0 / s, -s + 1.0 / s, s + 1.0 / s]);
        assert!((&m - expected).amax() < 1e-12);
        assert!((&m * &n - &nu).norm() < 1e-12);
    }

    #[test]
    fn direction_matrix_rejects_internal_direction() {
        assert!(direction_matrix(&v(&[-1.0, 0.0]), &v(&[1.0, 0.0])).is_err());
        assert!(direction_matrix(&v(&[0.0, 1.0]), &v(&[1.0, 0.0])).is_err());
    }

    proptest! {
        #[test]
        fn direction_matrix_maps_normal_to_direction(
            angle in 0.0..std::f64::consts::TAU,
            a in -3.0..3.0f64, bb in -3.0..3.0f64, cc in -3.0..3.0f64,
        ) {
            let n = v(&[angle.cos(), angle.sin(), 0.0]);
            let raw = v(&[a, bb, cc]);
            // shift along n so that the pairing is at least 0.1
            let nu = &raw + &n * (0.1 + (-raw.dot(&n)).max(0.0));
            let m = direction_matrix(&nu, &n).unwrap();
            prop_assert_eq!(&m, &m.transpose());
            prop_assert!((&m * &n - &nu).norm() <= 1e-12 * (1.0 + nu.norm_squared() / nu.dot(&n)));
        }

        #[test]
        fn ellipticity_on_random_vectors(
            x0 in -3.0..3.0f64, x1 in -3.0..3.0f64, u0 in -1.0..1.0f64, u1 in -1.0..1.0f64,
        ) {
            let h = blend();
            let x = v(&[x0, x1]);
            let u = v(&[u0, u1]);
            let q = u.dot(&(h.eval(&x) * &u));
            let c = h.c();
            prop_assert!(q >= u.norm_squared() / c - 1e-10);
            prop_assert!(q <= c * u.norm_squared() + 1e-10);
            let hx = h.eval(&x);
            prop_assert_eq!(&hx, &hx.transpose());
        }
    }
}
