//! Dependency of a quantum register on a classical one, its relation to
//! mutual information, and the success bound for programs whose only
//! memory is quantum.
//!
//! A classical-quantum state `ρ_XV` is given by its blocks `ρ_{V|x}`, whose
//! traces are the probabilities of `x`.

use serde::{Deserialize, Serialize};

use super::inequalities::Check;
use crate::error::{Error, Result};
use crate::extractor::{inner_product_matrix, quantum_extractor_error, BiasMatrix};
use crate::linalg::{self, c, CMatrix};
use crate::program::{self, BranchingProgram, LearningInstance};
use crate::rng;

fn validate(blocks: &[CMatrix]) -> Result<usize> {
    let d = blocks.first().map(|b| b.nrows()).ok_or_else(|| Error::InvalidParameter("no blocks".into()))?;
    let mut total = 0.0;
    for b in blocks {
        if b.nrows() != d || b.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: b.nrows() });
        }
        linalg::check_psd(b, 1e-9)?;
        total += linalg::trace_re(b);
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("blocks have total trace {total}")));
    }
    Ok(d)
}

fn marginal_v(blocks: &[CMatrix]) -> CMatrix {
    let mut v = linalg::zeros(blocks[0].nrows());
    for b in blocks {
        v += b;
    }
    v
}

/// `‖ρ_XV − ρ_X ⊗ τ_V‖_Tr`.
pub fn distance_to_product(blocks: &[CMatrix], tau: &CMatrix) -> f64 {
    blocks.iter().map(|b| linalg::trace_norm_hermitian(&(b - tau * c(linalg::trace_re(b))))).sum()
}

/// `ξ̂ = ‖ρ_XV − ρ_X ⊗ ρ_V‖_Tr` and the bracket `[ξ̂/2, ξ̂]` it gives for
/// the dependency `ξ = min_τ ‖ρ_XV − ρ_X ⊗ τ_V‖_Tr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dependency {
    pub xi_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn xi_dependency(blocks: &[CMatrix]) -> Result<Dependency> {
    validate(blocks)?;
    let xi_hat = distance_to_product(blocks, &marginal_v(blocks));
    Ok(Dependency { xi_hat, lower: xi_hat / 2.0, upper: xi_hat })
}

/// Grid minimization of `ξ` for one qubit. The candidates are a cubic grid
/// over the Bloch ball (outer points clamped onto the sphere) plus `ρ_V`
/// itself. Since `‖ρ_X ⊗ (τ − τ′)‖_Tr` equals the Bloch distance, the true
/// minimum is at least the returned value minus `resolution`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOracle {
    pub xi: f64,
    pub resolution: f64,
    pub points: usize,
}

pub fn xi_qubit_grid(blocks: &[CMatrix], per_axis: usize) -> Result<GridOracle> {
    if validate(blocks)? != 2 {
        return Err(Error::InvalidParameter("the grid oracle is for one qubit".into()));
    }
    let per_axis = per_axis.max(2);
    let h = 2.0 / (per_axis - 1) as f64;
    let density = |r: [f64; 3]| {
        CMatrix::from_row_slice(
            2,
            2,
            &[
                c((1.0 + r[2]) / 2.0),
                num_complex::Complex64::new(r[0] / 2.0, -r[1] / 2.0),
                num_complex::Complex64::new(r[0] / 2.0, r[1] / 2.0),
                c((1.0 - r[2]) / 2.0),
            ],
        )
    };
    let mut best = distance_to_product(blocks, &marginal_v(blocks));
    let mut points = 1;
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..per_axis {
                let mut r = [-1.0 + i as f64 * h, -1.0 + j as f64 * h, -1.0 + k as f64 * h];
                let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1.0 {
                    r.iter_mut().for_each(|x| *x /= norm);
                }
                best = best.min(distance_to_product(blocks, &density(r)));
                points += 1;
            }
        }
    }
    Ok(GridOracle { xi: best, resolution: h * 3f64.sqrt() / 2.0, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entropies {
    pub x: f64,
    pub v: f64,
    pub xv: f64,
}

impl Entropies {
    /// `S(X) + S(V) − S(XV)`.
    pub fn mutual_information(&self) -> f64 {
        self.x + self.v - self.xv
    }
}

/// Von Neumann entropies in bits.
pub fn entropies(blocks: &[CMatrix]) -> Result<Entropies> {
    validate(blocks)?;
    let px: Vec<f64> = blocks.iter().map(linalg::trace_re).collect();
    let xv: f64 = blocks.iter().map(linalg::entropy_bits).sum();
    Ok(Entropies { x: linalg::shannon_bits(&px), v: linalg::entropy_bits(&marginal_v(blocks)), xv })
}

pub fn mutual_information(blocks: &[CMatrix]) -> Result<f64> {
    Ok(entropies(blocks)?.mutual_information())
}

/// Both sides of `½ξ² ≤ I(X;V) ≤ qξ + 2√ξ`, evaluated with the bracket:
/// `½(ξ̂/2)² ≤ I` and `I ≤ qξ̂ + 2√ξ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCheck {
    pub xi_hat: f64,
    pub information: f64,
    pub lower: Check,
    pub upper: Check,
}

impl InformationCheck {
    pub fn holds(&self) -> bool {
        self.lower.holds() && self.upper.holds()
    }
}

pub fn lemma_c1_check(blocks: &[CMatrix], qubits: usize, slack: f64) -> Result<InformationCheck> {
    let d = validate(blocks)?;
    if d != 1 << qubits {
        return Err(Error::DimensionMismatch { expected: 1 << qubits, got: d });
    }
    let xi = xi_dependency(blocks)?.xi_hat;
    let info = mutual_information(blocks)?;
    Ok(InformationCheck {
        xi_hat: xi,
        information: info,
        lower: Check::new(0.5 * (xi / 2.0).powi(2), info, slack),
        upper: Check::new(info, qubits as f64 * xi + 2.0 * xi.sqrt(), slack),
    })
}

/// A random classical-quantum state: `nx` blocks of random rank on `q`
/// qubits with random weights.
pub fn random_cq_state<R: rand::Rng + ?Sized>(nx: usize, qubits: usize, rng: &mut R) -> Vec<CMatrix> {
    let d = 1 << qubits;
    let weights: Vec<f64> = (0..nx).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| {
            let rank = rng.gen_range(1..=d);
            rng::random_psd(d, rank, w / total, rng)
        })
        .collect()
}

/// The `(q, r)` quantum-extractor parameters used for the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorStrength {
    /// Qubits of side information: twice the memory, and at least 2.
    pub q: usize,
    /// `n − q` for inner-product matrices (known to be a valid `r`).
    pub known_r: Option<f64>,
    /// `−log₂` of the worst error over the sampled side-information families;
    /// an upper bound on the true `r`.
    pub sampled_r: f64,
    /// The smaller of the two.
    pub r: f64,
}

/// Samples side-information families `a ↦ ρ_{V|a}`: random pure states, and
/// the computational-basis encoding of the low bits of `a`.
pub fn extractor_strength(matrix: &BiasMatrix, memory_qubits: usize, families: usize, seed: u64) -> Result<ExtractorStrength> {
    let q = (2 * memory_qubits).max(2);
    let d = 1 << q;
    let rows = matrix.rows();
    let mut worst = quantum_extractor_error(
        matrix,
        &(0..rows).map(|a| linalg::outer(&linalg::basis_vector(d, a % d))).collect::<Vec<_>>(),
    )?;
    for i in 0..families {
        let mut r = rng::trial_stream(seed, "side-information", i as u64);
        let family: Vec<CMatrix> = (0..rows).map(|_| linalg::outer(&rng::random_unit_vector(d, &mut r))).collect();
        worst = worst.max(quantum_extractor_error(matrix, &family)?);
    }
    let sampled_r = if worst > 0.0 { -worst.log2() } else { f64::INFINITY };
    let known_r = matrix
        .n()
        .filter(|&n| n >= q && *matrix == inner_product_matrix(n).expect("n is valid"))
        .map(|n| (n - q) as f64);
    Ok(ExtractorStrength { q, known_r, sampled_r, r: known_r.map_or(sampled_r, |k| k.min(sampled_r)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessBound {
    pub strength: ExtractorStrength,
    pub steps: usize,
    /// `2^{-n} + 8T√(n+q)·2^{-r/4}`.
    pub check: Check,
}

/// Exact success probability against the bound for programs with quantum
/// memory only.
pub fn theorem_c_bound_check(inst: &LearningInstance, prog: &BranchingProgram, strength: ExtractorStrength) -> Result<SuccessBound> {
    if inst.m != 0 {
        return Err(Error::InvalidParameter("the bound is for programs without classical memory".into()));
    }
    let states = program::run_program(inst, prog)?;
    let success = program::success_probability(states.last().expect("initial state"), prog);
    let n = inst.n as f64;
    let bound = (-n).exp2() + 8.0 * inst.steps as f64 * (n + strength.q as f64).sqrt() * (-strength.r / 4.0).exp2();
    Ok(SuccessBound { strength, steps: inst.steps, check: Check::new(success, bound, 1e-9) })
}
