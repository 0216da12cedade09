//! Dense complex linear algebra on small Hermitian matrices.
//!
//! Everything here works on `nalgebra` dynamic matrices; the blocks handled
//! by the toolkit are at most 16×16, so no attempt is made at anything clever.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvalues in `[-PSD_CLAMP, 0)` are silently clamped to zero.
pub const PSD_CLAMP: f64 = 1e-10;
/// Eigenvalues below `-PSD_ABORT` are treated as a bug and rejected.
pub const PSD_ABORT: f64 = 1e-8;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn zeros(d: usize) -> CMatrix {
    CMatrix::zeros(d, d)
}

pub fn basis_vector(d: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[i] = c(1.0);
    v
}

/// `v v†`.
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// `(m + m†) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// `Re(v† m v)`; for Hermitian `m` this is the full value.
pub fn quad_form(m: &CMatrix, v: &CVector) -> f64 {
    let mv = m * v;
    v.iter().zip(mv.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

pub fn normalize(v: &CVector) -> Option<CVector> {
    let norm = v.norm();
    (norm > 1e-300).then(|| v / c(norm))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and the
/// matching eigenvectors as columns.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let d = m.nrows();
    if d == 1 {
        return (vec![m[(0, 0)].re], identity(1));
    }
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    eigh(m).0
}

/// Largest eigenvalue and a unit eigenvector.
pub fn top_eigenpair(m: &CMatrix) -> (f64, CVector) {
    let (vals, vecs) = eigh(m);
    let last = vals.len() - 1;
    (vals[last], vecs.column(last).into_owned())
}

/// Rebuild `U diag(f(λ)) U†`.
pub fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let scaled = CMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * f(vals[j]));
    scaled * vecs.adjoint()
}

/// Nuclear norm of a Hermitian matrix: Σ|λ|.
pub fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    eigvalsh(m).iter().map(|l| l.abs()).sum()
}

/// Nuclear norm of an arbitrary matrix via its singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().sum()
}

/// Spectral norm of a Hermitian matrix: max |λ|.
pub fn spectral_norm_hermitian(m: &CMatrix) -> f64 {
    eigvalsh(m).iter().fold(0.0_f64, |acc, l| acc.max(l.abs()))
}

/// Symmetrize and clamp tiny negative eigenvalues; reject real negativity.
pub fn repair_psd(m: &CMatrix) -> Result<CMatrix> {
    let h = hermitize(m);
    let (vals, vecs) = eigh(&h);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_ABORT {
        return Err(Error::NotPsd(min));
    }
    if min >= 0.0 {
        return Ok(h);
    }
    let clamped: Vec<f64> = vals
        .iter()
        .map(|&l| if l < 0.0 && l >= -PSD_ABORT { 0.0 } else { l })
        .collect();
    let scaled = CMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * clamped[j]);
    Ok(scaled * vecs.adjoint())
}

/// Reject matrices that are not Hermitian / PSD within `tol`.
pub fn check_psd(m: &CMatrix, tol: f64) -> Result<()> {
    let dev = hermitian_deviation(m);
    if dev > tol {
        return Err(Error::NotHermitian(dev));
    }
    let min = eigvalsh(m).first().copied().unwrap_or(0.0);
    if min < -tol {
        return Err(Error::NotPsd(min));
    }
    Ok(())
}

/// Principal square root of a PSD matrix (negative rounding noise clamped).
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    spectral_map(m, |l| l.max(0.0).sqrt())
}

/// Squared fidelity `(Tr √(√a b √a))²` of two partial density operators.
pub fn fidelity(a: &CMatrix, b: &CMatrix, tol: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.nrows() });
    }
    check_psd(a, tol)?;
    check_psd(b, tol)?;
    // `‖√a√b‖_Tr` from singular values: taking square roots of the tiny
    // eigenvalues of `√a b √a` would cost half the digits on rank-deficient
    // inputs.
    let root: f64 = (sqrt_psd(a) * sqrt_psd(b)).singular_values().iter().sum();
    Ok(root * root)
}

/// Von Neumann entropy in bits of a PSD operator (not necessarily normalized;
/// the caller decides what the eigenvalues mean).
pub fn entropy_bits(m: &CMatrix) -> f64 {
    shannon_bits(&eigvalsh(m))
}

/// `-Σ p log₂ p` over the positive entries.
pub fn shannon_bits(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

/// Orthonormal basis (columns) of `span(basis) ∩ v⊥`, where `v` lies in the
/// span of the orthonormal columns of `basis`.
pub fn complement_in_span(basis: &CMatrix, v: &CVector) -> CMatrix {
    let d = basis.ncols();
    let coords = basis.adjoint() * v;
    let proj = identity(d) - outer(&coords);
    let (vals, vecs) = eigh(&proj);
    let keep: Vec<usize> = (0..d).filter(|&i| vals[i] > 0.5).collect();
    let mut out = CMatrix::zeros(basis.nrows(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &(basis * vecs.column(i)));
    }
    out
}

/// Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(blocks: &[&CMatrix]) -> CMatrix {
    let dim: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(dim, dim);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(*b);
        off += k;
    }
    out
}
