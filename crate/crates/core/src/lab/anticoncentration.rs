//! How rarely a random unit vector makes a Hermitian quadratic form small:
//! `Pr[|v†σv| ≤ ε‖σ‖/d] ≤ c√ε + e^{-d}` for an absolute constant `c`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::rng;

/// The constant used in the bound. Not a derived value: it is calibrated
/// on Gaussian Hermitian matrices (see [`calibrate_constant`]) and fixed.
pub const CALIBRATED_C: f64 = 10.0;

const MAX_DIM: usize = 64;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntiConcentration {
    pub d: usize,
    pub eps: f64,
    pub samples: usize,
    /// `ε‖σ‖/d`.
    pub threshold: f64,
    pub probability: f64,
    pub std_error: f64,
    /// `c√ε + e^{-d}`.
    pub bound: f64,
}

impl AntiConcentration {
    pub fn holds(&self) -> bool {
        self.probability <= self.bound
    }
}

fn check_sigma(sigma: &CMatrix) -> Result<f64> {
    let d = sigma.nrows();
    if d == 0 || d > MAX_DIM || sigma.ncols() != d {
        return Err(Error::InvalidParameter(format!("need a square matrix of size 1..={MAX_DIM}, got {d}")));
    }
    let dev = linalg::hermitian_deviation(sigma);
    if dev > 1e-9 {
        return Err(Error::NotHermitian(dev));
    }
    let norm = linalg::spectral_norm_hermitian(sigma);
    if norm == 0.0 {
        return Err(Error::InvalidParameter("zero operator".into()));
    }
    Ok(norm)
}

/// Monte Carlo estimate with Haar-random unit vectors (normalized complex
/// Gaussians). Samples are drawn in fixed chunks, each from its own stream,
/// so the estimate does not depend on the thread count.
pub fn anticoncentration_estimate(sigma: &CMatrix, eps: f64, samples: usize, seed: u64, c: f64) -> Result<AntiConcentration> {
    let norm = check_sigma(sigma)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let d = sigma.nrows();
    let threshold = eps * norm / d as f64;
    let chunks = samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::trial_stream(seed, "anticoncentration", i as u64);
            let count = CHUNK.min(samples - i * CHUNK);
            (0..count).filter(|_| linalg::quad_form(sigma, &rng::random_unit_vector(d, &mut r)).abs() <= threshold).count()
        })
        .sum();
    let p = hits as f64 / samples.max(1) as f64;
    Ok(AntiConcentration {
        d,
        eps,
        samples,
        threshold,
        probability: p,
        std_error: (p * (1.0 - p) / samples.max(1) as f64).sqrt(),
        bound: c * eps.sqrt() + (-(d as f64)).exp(),
    })
}

/// Exact probability for `d = 2`: with eigenvalues `λ₁ ≥ λ₂`,
/// `v†σv = λ₂ + (λ₁ − λ₂)u` where `u = |⟨e₁|v⟩|²` is uniform on `[0, 1]`.
pub fn closed_form_qubit(sigma: &CMatrix, eps: f64) -> Result<f64> {
    let norm = check_sigma(sigma)?;
    if sigma.nrows() != 2 {
        return Err(Error::InvalidParameter("closed form is for 2×2 operators".into()));
    }
    let t = eps * norm / 2.0;
    let vals = linalg::eigvalsh(sigma);
    let (lo, hi) = (vals[0].min(vals[1]), vals[0].max(vals[1]));
    let span = hi - lo;
    if span == 0.0 {
        return Ok(if lo.abs() <= t { 1.0 } else { 0.0 });
    }
    let a = ((-t - lo) / span).clamp(0.0, 1.0);
    let b = ((t - lo) / span).clamp(0.0, 1.0);
    Ok(b - a)
}

/// The smallest `c` making the bound hold on every `(σ, ε)` estimate:
/// `max (p̂ − e^{-d}) / √ε`.
pub fn calibrate_constant(estimates: &[AntiConcentration]) -> f64 {
    estimates
        .iter()
        .map(|e| (e.probability - (-(e.d as f64)).exp()) / e.eps.sqrt())
        .fold(0.0, f64::max)
}
