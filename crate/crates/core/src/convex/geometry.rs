use serde::Serialize;

use super::Set;
use crate::error::{Error, Result};

/// Number of probe points used to spot-check a declared `h0`.
pub const H0_PROBE_COUNT: usize = 1_000;
const H0_PROBE_SEED: u64 = 0x6830;

/// Uniform-interiority constants of a domain `D` together with the field
/// constants `b`, `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainGeometry {
    pub r0: f64,
    /// `sup_{z∈D} dist(z, D_{r0})`
    pub h0: f64,
    /// `r0 / (2(1 + r0 + h0))`
    pub rho0: f64,
    /// `½ · min(rho0 / (2bc), rho0)`
    pub delta0: f64,
    /// Point of `D_{r0}`; any ball of radius `r0` around it stays in `D`.
    pub interior_point: Vec<f64>,
    /// Whether `h0` came from a closed form (`true`) or a declared value.
    pub h0_exact: bool,
}

impl DomainGeometry {
    /// Computes (or checks) the geometry constants.
    ///
    /// Boxes and balls get `h0` in closed form; for polyhedra the caller must
    /// declare it and the value is checked against a probe cloud.
    pub fn new(set: &Set, r0: f64, declared_h0: Option<f64>, b: f64, c: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::InvalidInput(format!("r0 must be > 0, got {r0}")));
        }
        if !(c >= 1.0 && b >= 0.0) {
            return Err(Error::InvalidInput("field constants need c >= 1 and b >= 0".into()));
        }
        let interior = set.shrink(r0)?;
        let witness = interior.witness()?;
        if !interior.contains(&witness, 1e-9) {
            return Err(Error::Validation(format!("no witness found in the {r0}-interior")));
        }
        let closed_form = match set {
            Set::Box { lo, hi } => {
                let constrained = (0..lo.len()).filter(|&i| lo[i].is_finite() || hi[i].is_finite()).count();
                Some(r0 * (constrained as f64).sqrt())
            }
            Set::Ball { .. } => Some(r0),
            Set::Halfspaces { .. } => None,
        };
        let (h0, exact) = match (closed_form, declared_h0) {
            (Some(h), Some(d)) if d + 1e-12 < h => {
                return Err(Error::Validation(format!("declared h0 = {d} is below the exact value {h}")));
            }
            (Some(h), _) => (h, true),
            (None, Some(d)) => {
                check_declared_h0(set, &interior, d)?;
                (d, false)
            }
            (None, None) => {
                return Err(Error::InvalidInput("polyhedral domains must declare h0".into()));
            }
        };
        let rho0 = r0 / (2.0 * (1.0 + r0 + h0));
        let bc = 2.0 * b * c;
        let cap = if bc > 0.0 { (rho0 / bc).min(rho0) } else { rho0 };
        Ok(Self { r0, h0, rho0, delta0: 0.5 * cap, interior_point: witness.iter().copied().collect(), h0_exact: exact })
    }
}

fn check_declared_h0(set: &Set, interior: &Set, h0: f64) -> Result<()> {
    if !(h0 >= 0.0 && h0.is_finite()) {
        return Err(Error::InvalidInput(format!("h0 must be finite and >= 0, got {h0}")));
    }
    for z in set.probe_cloud(H0_PROBE_COUNT, H0_PROBE_SEED)? {
        let dist = interior.distance(&z)?;
        if dist > h0 + 1e-9 {
            return Err(Error::Validation(format!("declared h0 = {h0} is exceeded: probe {:?} lies {dist} from the interior", z.as_slice())));
        }
    }
    Ok(())
}
