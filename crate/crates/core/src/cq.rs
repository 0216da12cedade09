//! Classical-quantum partial systems over a classical input `X`, a classical
//! memory `W` and a quantum memory `V`.
//!
//! A state is stored as one `2^q × 2^q` block per pair `(x, w)`; there are no
//! coherences between distinct pairs, which is exactly what classicality of
//! `X` and `W` means. Blocks are reference-counted so that copies which only
//! touch a few `w` labels share the rest.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};

pub const DEFAULT_TOL: f64 = 1e-9;

/// A unit direction in the quantum memory, optionally tied to a memory label.
#[derive(Debug, Clone, PartialEq)]
pub struct PureDirection {
    pub v: CVector,
    pub w: Option<usize>,
}

impl PureDirection {
    /// Normalizes `v`; fails on the zero vector.
    pub fn new(v: CVector, w: Option<usize>) -> Result<Self> {
        let v = linalg::normalize(&v)
            .ok_or_else(|| Error::InvalidParameter("direction must be nonzero".into()))?;
        Ok(Self { v, w })
    }

    pub fn at(v: CVector, w: usize) -> Result<Self> {
        Self::new(v, Some(w))
    }

    /// Computational basis vector `|i⟩` at memory label `w`.
    pub fn basis(q: usize, i: usize, w: usize) -> Self {
        Self { v: linalg::basis_vector(1 << q, i), w: Some(w) }
    }

    fn require_w(&self) -> Result<usize> {
        self.w.ok_or_else(|| Error::InvalidParameter("direction has no memory label".into()))
    }
}

/// A probability distribution over `X = {0,1}^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionX {
    p: Vec<f64>,
}

impl DistributionX {
    pub fn new(p: Vec<f64>, tol: f64) -> Result<Self> {
        if !p.len().is_power_of_two() {
            return Err(Error::InvalidParameter(format!("support size {} is not a power of two", p.len())));
        }
        if let Some(bad) = p.iter().find(|&&x| x < -tol || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("negative or non-finite probability {bad}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > tol.max(1e-12) * p.len() as f64 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        Ok(Self { p: p.into_iter().map(|x| x.max(0.0)).collect() })
    }

    /// Normalizes a nonnegative weight vector.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroConditional(total));
        }
        Self::new(w.iter().map(|x| x.max(0.0) / total).collect(), 1e-9)
    }

    pub fn uniform(n: usize) -> Self {
        let size = 1usize << n;
        Self { p: vec![1.0 / size as f64; size] }
    }

    pub fn point_mass(n: usize, x0: usize) -> Self {
        let mut p = vec![0.0; 1 << n];
        p[x0] = 1.0;
        Self { p }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.p.len().trailing_zeros() as usize
    }

    pub fn l2_norm(&self) -> f64 {
        self.p.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.p.iter().copied().fold(0.0, f64::max)
    }

    pub fn inner(&self, other: &DistributionX) -> f64 {
        self.p.iter().zip(&other.p).map(|(a, b)| a * b).sum()
    }
}

/// Registers kept by [`HybridState::marginal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Keep {
    pub x: bool,
    pub v: bool,
    pub w: bool,
}

impl Keep {
    pub const X: Keep = Keep { x: true, v: false, w: false };
    pub const V: Keep = Keep { x: false, v: true, w: false };
    pub const W: Keep = Keep { x: false, v: false, w: true };
    pub const XW: Keep = Keep { x: true, v: false, w: true };
    pub const XV: Keep = Keep { x: true, v: true, w: false };
    pub const VW: Keep = Keep { x: false, v: true, w: true };
    pub const XVW: Keep = Keep { x: true, v: true, w: true };
}

/// Result of a partial trace. Purely classical marginals are diagonal and
/// returned as vectors; anything keeping `V` is a block-diagonal operator
/// with basis order `(x, w, v)`, `x` most significant.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Diagonal(Vec<f64>),
    Operator(CMatrix),
}

#[derive(Debug, Clone)]
pub struct HybridState {
    n: usize,
    m: usize,
    q: usize,
    blocks: Vec<Arc<CMatrix>>,
    tol: f64,
}

impl HybridState {
    fn index(&self, x: usize, w: usize) -> usize {
        (x << self.m) | w
    }

    pub fn zero(n: usize, m: usize, q: usize) -> Self {
        let blank = Arc::new(linalg::zeros(1 << q));
        Self { n, m, q, blocks: vec![blank; 1 << (n + m)], tol: DEFAULT_TOL }
    }

    /// The independent, maximally mixed start state: every block is
    /// `2^{-n} 2^{-m} 2^{-q} I`.
    pub fn maximally_mixed(n: usize, m: usize, q: usize) -> Self {
        let scale = 1.0 / (1u64 << (n + m + q)) as f64;
        let block = Arc::new(linalg::identity(1 << q) * c(scale));
        Self { n, m, q, blocks: vec![block; 1 << (n + m)], tol: DEFAULT_TOL }
    }

    /// Builds a state from blocks in `(x << m) | w` order, validating shape,
    /// hermiticity and positivity within `tol`.
    pub fn from_blocks(n: usize, m: usize, q: usize, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != 1 << (n + m) {
            return Err(Error::DimensionMismatch { expected: 1 << (n + m), got: blocks.len() });
        }
        let dim = 1 << q;
        let mut stored = Vec::with_capacity(blocks.len());
        for b in blocks {
            if b.nrows() != dim || b.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: b.nrows() });
            }
            linalg::check_psd(&b, DEFAULT_TOL)?;
            stored.push(Arc::new(linalg::repair_psd(&b)?));
        }
        Ok(Self { n, m, q, blocks: stored, tol: DEFAULT_TOL })
    }

    /// Builds a state from `f(x, w)`.
    pub fn from_fn(n: usize, m: usize, q: usize, f: impl Fn(usize, usize) -> CMatrix) -> Result<Self> {
        let mut blocks = Vec::with_capacity(1 << (n + m));
        for x in 0..1usize << n {
            for w in 0..1usize << m {
                blocks.push(f(x, w));
            }
        }
        Self::from_blocks(n, m, q, blocks)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn tol(&self) -> f64 {
        self.tol
    }
    pub fn num_x(&self) -> usize {
        1 << self.n
    }
    pub fn num_w(&self) -> usize {
        1 << self.m
    }
    pub fn dim_v(&self) -> usize {
        1 << self.q
    }

    pub fn block(&self, x: usize, w: usize) -> &CMatrix {
        &self.blocks[self.index(x, w)]
    }

    #[cfg(test)]
    pub(crate) fn block_arc(&self, x: usize, w: usize) -> &Arc<CMatrix> {
        &self.blocks[self.index(x, w)]
    }

    /// True when both states share every block allocation.
    pub fn shares_storage_with(&self, other: &HybridState) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| Arc::ptr_eq(a, b))
    }

    pub fn same_shape(&self, other: &HybridState) -> bool {
        (self.n, self.m, self.q) == (other.n, other.m, other.q)
    }

    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(|b| linalg::trace_re(b)).sum()
    }

    /// `Tr[ρ_{XV|w}]`, the unnormalized weight of memory label `w`.
    pub fn w_trace(&self, w: usize) -> f64 {
        (0..self.num_x()).map(|x| linalg::trace_re(self.block(x, w))).sum()
    }

    /// `x ↦ Tr[block(x, w)]`, the unnormalized `P_{X|w}`.
    pub fn x_weights_at(&self, w: usize) -> Vec<f64> {
        (0..self.num_x()).map(|x| linalg::trace_re(self.block(x, w)).max(0.0)).collect()
    }

    /// `Σ_x block(x, w)`, the unnormalized `ρ_{V|w}`.
    pub fn v_operator_at(&self, w: usize) -> CMatrix {
        let mut acc = linalg::zeros(self.dim_v());
        for x in 0..self.num_x() {
            acc += self.block(x, w);
        }
        acc
    }

    /// `x ↦ v† block(x, w) v`, clamped at zero.
    pub fn conditional_at(&self, v: &CVector, w: usize) -> Result<Vec<f64>> {
        if v.len() != self.dim_v() {
            return Err(Error::DimensionMismatch { expected: self.dim_v(), got: v.len() });
        }
        if w >= self.num_w() {
            return Err(Error::InvalidParameter(format!("memory label {w} out of range")));
        }
        Ok((0..self.num_x()).map(|x| linalg::quad_form(self.block(x, w), v).max(0.0)).collect())
    }

    pub fn conditional(&self, d: &PureDirection) -> Result<Vec<f64>> {
        self.conditional_at(&d.v, d.require_w()?)
    }

    /// `P_{X|v,w}`; fails with [`Error::ZeroConditional`] when the conditional
    /// trace is not above tolerance.
    pub fn induced_distribution(&self, d: &PureDirection) -> Result<DistributionX> {
        let cond = self.conditional(d)?;
        let total: f64 = cond.iter().sum();
        if total <= self.tol {
            return Err(Error::ZeroConditional(total));
        }
        Ok(DistributionX { p: cond.iter().map(|x| x / total).collect() })
    }

    pub fn marginal(&self, keep: Keep) -> Marginal {
        let (nx, nw, dv) = (self.num_x(), self.num_w(), self.dim_v());
        if !keep.v {
            let sx = if keep.x { nx } else { 1 };
            let sw = if keep.w { nw } else { 1 };
            let mut out = vec![0.0; sx * sw];
            for x in 0..nx {
                for w in 0..nw {
                    let i = if keep.x { x } else { 0 } * sw + if keep.w { w } else { 0 };
                    out[i] += linalg::trace_re(self.block(x, w));
                }
            }
            return Marginal::Diagonal(out);
        }
        let sx = if keep.x { nx } else { 1 };
        let sw = if keep.w { nw } else { 1 };
        let mut out = CMatrix::zeros(sx * sw * dv, sx * sw * dv);
        for x in 0..nx {
            for w in 0..nw {
                let slot = if keep.x { x } else { 0 } * sw + if keep.w { w } else { 0 };
                let mut view = out.view_mut((slot * dv, slot * dv), (dv, dv));
                view += self.block(x, w);
            }
        }
        Marginal::Operator(out)
    }

    /// Projects `v` out of every block at `d.w`: `B ← (I − vv†) B (I − vv†)`.
    pub fn project_out(&self, d: &PureDirection) -> Result<Self> {
        let w = d.require_w()?;
        if d.v.len() != self.dim_v() {
            return Err(Error::DimensionMismatch { expected: self.dim_v(), got: d.v.len() });
        }
        let proj = linalg::identity(self.dim_v()) - linalg::outer(&d.v);
        let mut out = self.clone();
        for x in 0..self.num_x() {
            let i = self.index(x, w);
            let b = &proj * self.blocks[i].as_ref() * &proj;
            out.blocks[i] = Arc::new(linalg::repair_psd(&b)?);
        }
        Ok(out)
    }

    /// Replaces the blocks at `(x, w)` by `f(x, w, block)`; the result is
    /// re-validated. Untouched blocks (where `f` returns `None`) stay shared.
    pub fn map_blocks(&self, f: impl Fn(usize, usize, &CMatrix) -> Option<CMatrix>) -> Result<Self> {
        let mut out = self.clone();
        for x in 0..self.num_x() {
            for w in 0..self.num_w() {
                let i = self.index(x, w);
                if let Some(b) = f(x, w, &self.blocks[i]) {
                    out.blocks[i] = Arc::new(linalg::repair_psd(&b)?);
                }
            }
        }
        Ok(out)
    }

    /// `α·self + β·other` (blockwise); both coefficients must be nonnegative.
    pub fn combine(&self, alpha: f64, other: &HybridState, beta: f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch);
        }
        if alpha < 0.0 || beta < 0.0 {
            return Err(Error::InvalidParameter("combination weights must be nonnegative".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| Arc::new(a.as_ref() * c(alpha) + b.as_ref() * c(beta)))
            .collect();
        Ok(Self { blocks, ..self.clone() })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.combine(factor, &HybridState::zero(self.n, self.m, self.q), 0.0)
    }

    /// Assembles a state from already-validated blocks.
    pub(crate) fn from_arcs(n: usize, m: usize, q: usize, blocks: Vec<Arc<CMatrix>>, tol: f64) -> Self {
        debug_assert_eq!(blocks.len(), 1 << (n + m));
        Self { n, m, q, blocks, tol }
    }

    /// The full block-diagonal density operator in `(x, w, v)` order. Only for
    /// tests and tiny systems.
    pub fn dense(&self) -> CMatrix {
        match self.marginal(Keep::XVW) {
            Marginal::Operator(m) => m,
            Marginal::Diagonal(_) => unreachable!(),
        }
    }
}

/// `‖a − b‖_Tr`, summed over blocks (valid since there are no cross-block
/// coherences).
pub fn trace_distance(a: &HybridState, b: &HybridState) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch);
    }
    Ok(a.blocks
        .iter()
        .zip(&b.blocks)
        .map(|(x, y)| if Arc::ptr_eq(x, y) { 0.0 } else { linalg::trace_norm_hermitian(&(x.as_ref() - y.as_ref())) })
        .sum())
}

/// Per-`w` trace distance `‖a_{XV|w} − b_{XV|w}‖_Tr`.
pub fn trace_distance_at(a: &HybridState, b: &HybridState, w: usize) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch);
    }
    Ok((0..a.num_x())
        .map(|x| linalg::trace_norm_hermitian(&(a.block(x, w) - b.block(x, w))))
        .sum())
}

/// Squared fidelity of two partial density operators.
pub fn fidelity(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    linalg::fidelity(a, b, DEFAULT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ket(bits: &[f64]) -> CVector {
        CVector::from_iterator(bits.len(), bits.iter().map(|&b| c(b)))
    }

    fn two_point_state() -> HybridState {
        // n=1, q=1, m=0: ρ_{V|0} = |0⟩⟨0|/2, ρ_{V|1} = |1⟩⟨1|/2.
        HybridState::from_blocks(
            1,
            0,
            1,
            vec![linalg::outer(&ket(&[1.0, 0.0])) * c(0.5), linalg::outer(&ket(&[0.0, 1.0])) * c(0.5)],
        )
        .unwrap()
    }

    #[test]
    fn total_trace_examples() {
        assert_abs_diff_eq!(HybridState::maximally_mixed(2, 1, 1).total_trace(), 1.0, epsilon = 1e-12);
        assert_eq!(HybridState::zero(2, 1, 1).total_trace(), 0.0);
        let (n, m, q) = (2, 1, 2);
        let s = HybridState::maximally_mixed(n, m, q).project_out(&PureDirection::basis(q, 0, 1)).unwrap();
        assert_abs_diff_eq!(s.total_trace(), 1.0 - 0.125, epsilon = 1e-12);
    }

    #[test]
    fn conditional_examples() {
        let s = HybridState::maximally_mixed(2, 1, 1);
        let d = PureDirection::at(ket(&[0.6, 0.8]), 1).unwrap();
        for p in s.conditional(&d).unwrap() {
            assert_abs_diff_eq!(p, 1.0 / 16.0, epsilon = 1e-12);
        }
        assert!(HybridState::zero(2, 1, 1).conditional(&d).unwrap().iter().all(|&p| p == 0.0));
        let cond = two_point_state().conditional(&PureDirection::basis(1, 0, 0)).unwrap();
        assert_abs_diff_eq!(cond[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cond[1], 0.0, epsilon = 1e-12);
        let wrong = PureDirection::at(ket(&[1.0, 0.0, 0.0]), 0).unwrap();
        assert!(matches!(s.conditional(&wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn induced_distribution_examples() {
        let p = two_point_state().induced_distribution(&PureDirection::basis(1, 0, 0)).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
        let zero = HybridState::zero(1, 0, 1).induced_distribution(&PureDirection::basis(1, 0, 0));
        assert!(matches!(zero, Err(Error::ZeroConditional(_))));
        let u = HybridState::maximally_mixed(3, 0, 1).induced_distribution(&PureDirection::basis(1, 1, 0)).unwrap();
        assert!(u.as_slice().iter().all(|&x| (x - 0.125).abs() < 1e-12));
    }

    #[test]
    fn marginal_examples() {
        let s = HybridState::maximally_mixed(2, 1, 1);
        let Marginal::Diagonal(px) = s.marginal(Keep::X) else { panic!() };
        assert!(px.iter().all(|&p| (p - 0.25).abs() < 1e-12));
        let Marginal::Operator(rv) = s.marginal(Keep::V) else { panic!() };
        assert!((rv - linalg::identity(2) * c(0.5)).norm() < 1e-12);

        let mut blocks = vec![linalg::zeros(2); 4];
        blocks[(1 << 1) | 1] = linalg::outer(&ket(&[1.0, 0.0]));
        let one = HybridState::from_blocks(1, 1, 1, blocks).unwrap();
        let Marginal::Operator(vw) = one.marginal(Keep::VW) else { panic!() };
        assert_abs_diff_eq!(vw[(2, 2)].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vw.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn project_out_examples() {
        let (n, m, q) = (2, 1, 1);
        let s = HybridState::maximally_mixed(n, m, q);
        let d = PureDirection::basis(q, 0, 1);
        let once = s.project_out(&d).unwrap();
        let expect = (linalg::identity(2) - linalg::outer(&ket(&[1.0, 0.0]))) * c(1.0 / 16.0);
        for x in 0..4 {
            assert!((once.block(x, 1) - &expect).norm() < 1e-12);
            assert!(Arc::ptr_eq(once.block_arc(x, 0), s.block_arc(x, 0)));
        }
        let twice = once.project_out(&d).unwrap();
        assert!(trace_distance(&once, &twice).unwrap() < 1e-12);
        assert!(once.conditional(&d).unwrap().iter().all(|&p| p.abs() < 1e-15));
    }

    #[test]
    fn trace_distance_examples() {
        let s = HybridState::maximally_mixed(1, 1, 1);
        assert_eq!(trace_distance(&s, &s).unwrap(), 0.0);
        let a = HybridState::from_fn(0, 0, 1, |_, _| linalg::outer(&ket(&[1.0, 0.0]))).unwrap();
        let b = HybridState::from_fn(0, 0, 1, |_, _| linalg::outer(&ket(&[0.0, 1.0]))).unwrap();
        assert_abs_diff_eq!(trace_distance(&a, &b).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_distance_matches_dense_oracle_after_projection() {
        // Independent route: SVD of the dense difference operator.
        let (n, m, q) = (2, 1, 2);
        let s = HybridState::maximally_mixed(n, m, q);
        let t = s.project_out(&PureDirection::basis(q, 2, 0)).unwrap();
        let dense = linalg::trace_norm(&(s.dense() - t.dense()));
        let blockwise = trace_distance(&s, &t).unwrap();
        assert_abs_diff_eq!(blockwise, dense, epsilon = 1e-12);
        assert_abs_diff_eq!(blockwise, 2f64.powi(-((q + m) as i32)), epsilon = 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let rho = linalg::identity(2) * c(0.5);
        assert_abs_diff_eq!(fidelity(&rho, &rho).unwrap(), 1.0, epsilon = 1e-12);
        let p0 = linalg::outer(&ket(&[1.0, 0.0]));
        let p1 = linalg::outer(&ket(&[0.0, 1.0]));
        assert_abs_diff_eq!(fidelity(&p0, &p1).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&rho, &p0).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn distribution_validation() {
        assert!(DistributionX::new(vec![0.5, 0.5], 1e-9).is_ok());
        assert!(DistributionX::new(vec![0.7, 0.5], 1e-9).is_err());
        assert!(DistributionX::new(vec![1.0, 0.0, 0.0], 1e-9).is_err());
        assert_abs_diff_eq!(DistributionX::uniform(4).l2_norm(), 0.25, epsilon = 1e-15);
    }
}
