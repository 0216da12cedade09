//! Channels on the hybrid memory `V ⊗ W` that keep `W` classical.
//!
//! A channel is given per input label `w` as Kraus operators
//! `E_{w,k} : C^{2^q} → C^{2^q} ⊗ C^{2^m}` (rows ordered `(w', v)`). Because
//! the input is classical in `w`, applying the channel to a block only needs
//! the diagonal output sectors; validation makes sure the dropped
//! off-diagonal sectors really vanish.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};

/// Why a Kraus family is not a valid classical-memory channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelViolation {
    InputCount { expected: usize, got: usize },
    Shape { w: usize, k: usize, rows: usize, cols: usize },
    Empty { w: usize },
    Completeness { w: usize, deviation: f64 },
    Coherence { w: usize, entry: (usize, usize), sectors: (usize, usize), magnitude: f64 },
}

impl fmt::Display for ChannelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InputCount { expected, got } => write!(f, "expected Kraus lists for {expected} inputs, got {got}"),
            Self::Shape { w, k, rows, cols } => write!(f, "operator E[w={w}, k={k}] has shape {rows}×{cols}"),
            Self::Empty { w } => write!(f, "input w={w} has no Kraus operators"),
            Self::Completeness { w, deviation } => {
                write!(f, "Σ E†E deviates from the identity by {deviation:e} at input w={w}")
            }
            Self::Coherence { w, entry, sectors, magnitude } => write!(
                f,
                "input w={w}, test |{}⟩⟨{}|: coherence {magnitude:e} between output sectors {} and {}",
                entry.0, entry.1, sectors.0, sectors.1
            ),
        }
    }
}

/// Checks completeness `Σ_k E†E = I` for every input and output
/// classicality on the matrix-unit basis `|i⟩⟨j|` of input states.
pub fn validate_channel(q: usize, m: usize, ops: &[Vec<CMatrix>], tol: f64) -> std::result::Result<(), ChannelViolation> {
    let (dv, nw) = (1usize << q, 1usize << m);
    if ops.len() != nw {
        return Err(ChannelViolation::InputCount { expected: nw, got: ops.len() });
    }
    for (w, family) in ops.iter().enumerate() {
        if family.is_empty() {
            return Err(ChannelViolation::Empty { w });
        }
        for (k, e) in family.iter().enumerate() {
            if e.nrows() != dv * nw || e.ncols() != dv {
                return Err(ChannelViolation::Shape { w, k, rows: e.nrows(), cols: e.ncols() });
            }
        }
        let mut gram = linalg::zeros(dv);
        for e in family {
            gram += e.adjoint() * e;
        }
        let deviation = (gram - linalg::identity(dv)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if deviation > tol {
            return Err(ChannelViolation::Completeness { w, deviation });
        }
        for i in 0..dv {
            for j in 0..dv {
                let mut out = CMatrix::zeros(dv * nw, dv * nw);
                for e in family {
                    out += e.column(i) * e.column(j).adjoint();
                }
                for s1 in 0..nw {
                    for s2 in 0..nw {
                        if s1 == s2 {
                            continue;
                        }
                        let blk = out.view((s1 * dv, s2 * dv), (dv, dv));
                        let magnitude = blk.iter().map(|z| z.norm()).fold(0.0, f64::max);
                        if magnitude > tol {
                            return Err(ChannelViolation::Coherence { w, entry: (i, j), sectors: (s1, s2), magnitude });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct KrausChannel {
    q: usize,
    m: usize,
    ops: Vec<Vec<CMatrix>>,
    /// Per input `w`, per Kraus index: the nonzero output sectors `(w', E^{(w')})`.
    sectors: Vec<Vec<Vec<(usize, CMatrix)>>>,
}

impl KrausChannel {
    /// Validates and builds a channel from full `2^{q+m} × 2^q` operators.
    pub fn new(q: usize, m: usize, ops: Vec<Vec<CMatrix>>) -> Result<Self> {
        validate_channel(q, m, &ops, 1e-9).map_err(|v| Error::InvalidChannel(v.to_string()))?;
        let dv = 1usize << q;
        let sectors = ops
            .iter()
            .map(|family| {
                family
                    .iter()
                    .map(|e| {
                        (0..1usize << m)
                            .filter_map(|s| {
                                let piece = e.rows(s * dv, dv).into_owned();
                                let mag = piece.iter().map(|z| z.norm()).fold(0.0, f64::max);
                                (mag > 1e-15).then_some((s, piece))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { q, m, ops, sectors })
    }

    /// Builds a channel whose Kraus operators each target one output label:
    /// `per_w[w]` lists `(w', K)` with `K` acting on `V`.
    pub fn from_sectors(q: usize, m: usize, per_w: Vec<Vec<(usize, CMatrix)>>) -> Result<Self> {
        let dv = 1usize << q;
        let mut ops = Vec::with_capacity(per_w.len());
        for family in per_w {
            let mut full = Vec::with_capacity(family.len());
            for (target, k) in family {
                if target >= 1 << m || k.nrows() != dv || k.ncols() != dv {
                    return Err(Error::InvalidChannel(format!("sector operator targets w={target} with shape {:?}", k.shape())));
                }
                let mut e = CMatrix::zeros(dv << m, dv);
                e.view_mut((target * dv, 0), (dv, dv)).copy_from(&k);
                full.push(e);
            }
            ops.push(full);
        }
        Self::new(q, m, ops)
    }

    pub fn identity(q: usize, m: usize) -> Self {
        Self::classical_map(q, m, &(0..1usize << m).collect::<Vec<_>>()).expect("identity is valid")
    }

    /// Deterministic relabeling `w ↦ table[w]`, leaving `V` untouched.
    pub fn classical_map(q: usize, m: usize, table: &[usize]) -> Result<Self> {
        if table.len() != 1 << m {
            return Err(Error::InvalidChannel(format!("classical table needs {} entries", 1usize << m)));
        }
        let per_w = table.iter().map(|&t| vec![(t, linalg::identity(1 << q))]).collect();
        Self::from_sectors(q, m, per_w)
    }

    /// `V ← U V U†` for every `w`, with `w` unchanged.
    pub fn unitary(q: usize, m: usize, u: &CMatrix) -> Result<Self> {
        let per_w = (0..1usize << m).map(|w| vec![(w, u.clone())]).collect();
        Self::from_sectors(q, m, per_w)
    }

    /// Discards `V` and `W` and prepares `|v⟩` at label `w`.
    pub fn prepare(q: usize, m: usize, v: usize, w: usize) -> Result<Self> {
        let dv = 1usize << q;
        let per_w = (0..1usize << m)
            .map(|_| {
                (0..dv)
                    .map(|i| {
                        let mut k = linalg::zeros(dv);
                        k[(v, i)] = c(1.0);
                        (w, k)
                    })
                    .collect()
            })
            .collect();
        Self::from_sectors(q, m, per_w)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kraus(&self, w: usize) -> &[CMatrix] {
        &self.ops[w]
    }

    /// Adds `weight · Φ(|w⟩⟨w| ⊗ block)` into the per-label output buffers.
    pub fn apply_into(&self, w: usize, block: &CMatrix, weight: f64, out: &mut [CMatrix]) {
        for pieces in &self.sectors[w] {
            for (target, e) in pieces {
                out[*target] += e * block * e.adjoint() * c(weight);
            }
        }
    }

    /// `Φ(|w⟩⟨w| ⊗ block)` as one block per output label.
    pub fn apply(&self, w: usize, block: &CMatrix) -> Vec<CMatrix> {
        let mut out = vec![linalg::zeros(1 << self.q); 1 << self.m];
        self.apply_into(w, block, 1.0, &mut out);
        out
    }

    /// Traces of the output sectors: how much of `block` lands on each `w'`.
    pub fn output_traces(&self, w: usize, block: &CMatrix) -> Vec<f64> {
        let mut out = vec![0.0; 1 << self.m];
        for pieces in &self.sectors[w] {
            for (target, e) in pieces {
                out[*target] += linalg::trace_re(&(e * block * e.adjoint()));
            }
        }
        out
    }

    /// Candidate preimage directions `E^{(w')†}|v⟩` for an output direction,
    /// with the input label they live on.
    pub fn preimages(&self, v: &CVector, target: usize) -> Vec<(usize, CVector)> {
        let mut out = Vec::new();
        for (w, family) in self.sectors.iter().enumerate() {
            for pieces in family {
                for (t, e) in pieces {
                    if *t == target {
                        out.push((w, e.adjoint() * v));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_and_reset_are_valid() {
        let id = KrausChannel::identity(1, 1);
        assert!(validate_channel(1, 1, &id.ops, 1e-9).is_ok());
        let reset = KrausChannel::classical_map(0, 1, &[0, 0]).unwrap();
        assert!(validate_channel(0, 1, &reset.ops, 1e-9).is_ok());
    }

    #[test]
    fn overcomplete_family_is_rejected() {
        let two = linalg::identity(2) * c(2f64.sqrt());
        let err = validate_channel(1, 0, &[vec![two]], 1e-9).unwrap_err();
        assert!(matches!(err, ChannelViolation::Completeness { w: 0, .. }));
        assert!(matches!(err, ChannelViolation::Completeness { deviation, .. } if (deviation - 1.0).abs() < 1e-12));
    }

    #[test]
    fn coherent_write_is_rejected_but_dephased_write_is_not() {
        // |v⟩ ↦ |v⟩ ⊗ (|0⟩+|1⟩)/√2 on W creates coherence between w'=0 and 1.
        let s = c(std::f64::consts::FRAC_1_SQRT_2);
        let mut e = CMatrix::zeros(2, 1);
        e[(0, 0)] = s;
        e[(1, 0)] = s;
        let coherent = vec![vec![e.clone()], vec![e]];
        assert!(matches!(validate_channel(0, 1, &coherent, 1e-9), Err(ChannelViolation::Coherence { .. })));
        // The same write followed by measurement: two Kraus ops that cancel the coherence.
        let h = c(0.5);
        let mut plus = CMatrix::zeros(2, 1);
        plus[(0, 0)] = h;
        plus[(1, 0)] = h;
        let mut minus = CMatrix::zeros(2, 1);
        minus[(0, 0)] = h;
        minus[(1, 0)] = -h;
        let dephased = vec![vec![plus.clone(), minus.clone()], vec![plus, minus]];
        assert!(validate_channel(0, 1, &dephased, 1e-9).is_ok());
        let ch = KrausChannel::new(0, 1, dephased).unwrap();
        let out = ch.apply(0, &linalg::identity(1));
        assert_abs_diff_eq!(out[0][(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1][(0, 0)].re, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn output_traces_follow_the_table() {
        let ch = KrausChannel::classical_map(1, 1, &[1, 1]).unwrap();
        let block = linalg::identity(2) * c(0.25);
        assert_eq!(ch.output_traces(0, &block), vec![0.0, 0.5]);
    }

    #[test]
    fn prepare_discards_input() {
        let ch = KrausChannel::prepare(1, 0, 1, 0).unwrap();
        let out = ch.apply(0, &(linalg::identity(2) * c(0.5)));
        assert_abs_diff_eq!(out[0][(1, 1)].re, 1.0, epsilon = 1e-12);
    }
}
