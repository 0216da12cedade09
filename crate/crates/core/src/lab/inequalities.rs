//! Two trace-norm inequalities on PSD operators: the cost of projecting a
//! partial system, and a Fuchs–van de Graaf variant for unequal traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// `measured ≤ bound + slack`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
}

impl Check {
    pub fn new(measured: f64, bound: f64, slack: f64) -> Self {
        Self { measured, bound, slack }
    }

    pub fn holds(&self) -> bool {
        self.measured <= self.bound + self.slack
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }
}

const PSD_TOL: f64 = 1e-9;

/// `‖ρ − ΠρΠ‖²_Tr ≤ 4Tr[ρ]² − 4Tr[Πρ]²`.
pub fn projection_distance_check(rho: &CMatrix, proj: &CMatrix, slack: f64) -> Result<Check> {
    if rho.shape() != proj.shape() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), got: proj.nrows() });
    }
    linalg::check_psd(rho, PSD_TOL)?;
    let idempotency = (proj * proj - proj).norm();
    if idempotency > 1e-8 || linalg::hermitian_deviation(proj) > 1e-8 {
        return Err(Error::InvalidParameter(format!("not an orthogonal projection (‖Π² − Π‖ = {idempotency:.2e})")));
    }
    let d = linalg::trace_norm_hermitian(&(rho - proj * rho * proj));
    let tr = linalg::trace_re(rho);
    let kept = linalg::trace_re(&(proj * rho));
    Ok(Check::new(d * d, 4.0 * tr * tr - 4.0 * kept * kept, slack))
}

/// Both links of `½‖ρ − σ‖_Tr ≤ √(¼(Tr ρ + Tr σ)² − F) ≤ √(Tr[ρ]² − F)`
/// for `Tr ρ ≥ Tr σ`, with `F` the squared fidelity.
pub fn fvdg_variant_check(rho: &CMatrix, sigma: &CMatrix, slack: f64) -> Result<[Check; 2]> {
    let (ta, tb) = (linalg::trace_re(rho), linalg::trace_re(sigma));
    if ta < tb - 1e-12 {
        return Err(Error::InvalidParameter(format!("need Tr ρ ≥ Tr σ, got {ta} < {tb}")));
    }
    let f = linalg::fidelity(rho, sigma, PSD_TOL)?;
    let half = linalg::trace_norm_hermitian(&(rho - sigma)) / 2.0;
    let middle = (0.25 * (ta + tb).powi(2) - f).max(0.0).sqrt();
    let outer = (ta * ta - f).max(0.0).sqrt();
    Ok([Check::new(half, middle, slack), Check::new(middle, outer, slack)])
}
