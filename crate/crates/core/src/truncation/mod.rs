//! Truncation: removing memory directions whose induced distribution on `X`
//! breaks a predicate, one direction at a time, until none is left.
//!
//! For each memory label `w` the procedure keeps an orthonormal basis `Q` of
//! the remaining subspace `𝒱_w`. Each round looks for a unit `v ∈ 𝒱_w` with
//! positive conditional trace on which the predicate fails, records the
//! weight `Tr[ρ_{X|v,w}]` and shrinks `𝒱_w` to `𝒱_w ∩ v⊥`. The truncated state
//! is `Π_w ρ_{XV|w} Π_w` with `Π_w = QQ†`.
//!
//! Searching happens in whitened coordinates: with `S = Σ_x Q†ρ_{x,w}Q` and
//! `W = U D^{-1/2}` over the eigenvalues of `S` above [`TRACE_FLOOR`], the
//! family `K_x = W†Q†ρ_{x,w}QW` sums to the identity, so the normalized
//! conditional at unit `y` is just `y†K_x y`. The `L∞`, row-correlation and
//! trace-ratio predicates are then eigenvalue problems and decided exactly;
//! only the `L₂` predicate needs the heuristic search in [`search`].

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cq::{self, HybridState, PureDirection};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::rng;

mod pipeline;
pub mod search;

pub use pipeline::{
    pipeline_stage, run_truncated, truncation_error_report, BoundCheck, PipelineParams, PipelineStage, StageReport,
    TruncatedRun, TruncatedStep,
};
pub use search::SearchBudget;

/// Directions whose conditional trace is below this are treated as carrying
/// no weight: their induced distribution is numerically meaningless.
pub const TRACE_FLOOR: f64 = 1e-10;

/// Relative excess over a threshold that counts as a violation; absorbs
/// rounding in quantities that sit exactly on their threshold.
pub const VIOLATION_TOL: f64 = 1e-9;

/// A condition on `P_{X|v,w}` (and, for the trace ratio, on a reference
/// state) that every remaining direction must satisfy.
#[derive(Debug, Clone)]
pub enum Predicate {
    Always,
    Never,
    /// `‖P_{X|v,w}‖₂ ≤ theta`.
    L2 { theta: f64 },
    /// `‖P_{X|v,w}‖∞ ≤ theta`.
    LInf { theta: f64 },
    /// `|⟨row, P_{X|v,w}⟩| ≤ theta`.
    Even { row: Vec<i8>, theta: f64 },
    /// `Tr[ρ_{X|v,w}] ≥ gamma · Tr[reference_{X|v,w}]`.
    TraceRatio { reference: HybridState, gamma: f64 },
    All(Vec<Predicate>),
}

impl Predicate {
    /// Whether "no violation" is decided exactly rather than by search.
    pub fn is_exact(&self) -> bool {
        match self {
            Predicate::L2 { .. } => false,
            Predicate::All(ps) => ps.iter().all(Predicate::is_exact),
            _ => true,
        }
    }

    /// Evaluates the predicate at one direction of `state`. Directions with
    /// conditional trace below [`TRACE_FLOOR`] satisfy it vacuously.
    pub fn holds_at(&self, state: &HybridState, v: &CVector, w: usize) -> Result<bool> {
        let v = linalg::normalize(v).ok_or_else(|| Error::InvalidParameter("direction must be nonzero".into()))?;
        let cond = state.conditional_at(&v, w)?;
        let total: f64 = cond.iter().sum();
        if total <= TRACE_FLOOR {
            return Ok(true);
        }
        let within = |value: f64, theta: f64| value <= theta * (1.0 + VIOLATION_TOL);
        Ok(match self {
            Predicate::Always => true,
            Predicate::Never => false,
            Predicate::L2 { theta } => within(cond.iter().map(|p| p * p).sum::<f64>().sqrt() / total, *theta),
            Predicate::LInf { theta } => within(cond.iter().copied().fold(0.0, f64::max) / total, *theta),
            Predicate::Even { row, theta } => {
                let corr: f64 = row.iter().zip(&cond).map(|(&m, p)| f64::from(m) * p).sum();
                within(corr.abs() / total, *theta)
            }
            Predicate::TraceRatio { reference, gamma } => {
                let reference_trace: f64 = reference.conditional_at(&v, w)?.iter().sum();
                within(gamma * reference_trace, total)
            }
            Predicate::All(ps) => {
                for p in ps {
                    if !p.holds_at(state, &v, w)? {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }

    fn validate(&self, state: &HybridState) -> Result<()> {
        match self {
            Predicate::Even { row, .. } if row.len() != state.num_x() => {
                Err(Error::DimensionMismatch { expected: state.num_x(), got: row.len() })
            }
            Predicate::TraceRatio { reference, .. } if !reference.same_shape(state) => Err(Error::ShapeMismatch),
            Predicate::All(ps) => ps.iter().try_for_each(|p| p.validate(state)),
            _ => Ok(()),
        }
    }
}

/// A direction on which a predicate fails.
#[derive(Debug, Clone)]
pub struct Violation {
    /// Unit vector in the full memory space, inside the searched subspace.
    pub v: CVector,
    /// The violated quantity (`‖P‖₂`, `‖P‖∞`, `|⟨row, P⟩|` or the trace ratio).
    pub value: f64,
    /// Relative excess over the threshold; the largest one is removed first.
    pub excess: f64,
}

/// The searched subspace in whitened coordinates.
struct Whitened {
    /// `QW`: whitened coordinates to (unnormalized) memory vectors.
    map: CMatrix,
    family: Vec<CMatrix>,
}

fn whiten(state: &HybridState, w: usize, basis: &CMatrix) -> Option<Whitened> {
    let restricted: Vec<CMatrix> = (0..state.num_x()).map(|x| basis.adjoint() * state.block(x, w) * basis).collect();
    let mut total = CMatrix::zeros(basis.ncols(), basis.ncols());
    for r in &restricted {
        total += r;
    }
    let (vals, vecs) = linalg::eigh(&total);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > TRACE_FLOOR).collect();
    if keep.is_empty() {
        return None;
    }
    let mut white = CMatrix::zeros(basis.ncols(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        white.set_column(j, &(vecs.column(i) * C64::new(vals[i].sqrt().recip(), 0.0)));
    }
    let family = restricted.iter().map(|r| linalg::hermitize(&(white.adjoint() * r * &white))).collect();
    Some(Whitened { map: basis * white, family })
}

fn candidate(pred: &Predicate, wh: &Whitened, w: usize, budget: &SearchBudget, stream: u64) -> Option<(f64, CVector, f64)> {
    let k = wh.map.ncols();
    match pred {
        Predicate::Always => None,
        // The heaviest remaining direction: the last whitened axis.
        Predicate::Never => Some((1.0, linalg::basis_vector(k, k - 1), 0.0)),
        Predicate::L2 { theta } => {
            let (f, y) = search::max_l2_squared(&wh.family, budget, stream);
            let value = f.max(0.0).sqrt();
            Some((value / theta - 1.0, y, value))
        }
        Predicate::LInf { theta } => wh
            .family
            .iter()
            .map(linalg::top_eigenpair)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(l, y)| (l / theta - 1.0, y, l)),
        Predicate::Even { row, theta } => {
            let mut corr = CMatrix::zeros(k, k);
            for (&m, kx) in row.iter().zip(&wh.family) {
                corr += kx * C64::new(f64::from(m), 0.0);
            }
            let (vals, vecs) = linalg::eigh(&corr);
            let i = (0..k).max_by(|&a, &b| vals[a].abs().total_cmp(&vals[b].abs()))?;
            Some((vals[i].abs() / theta - 1.0, vecs.column(i).into_owned(), vals[i].abs()))
        }
        Predicate::TraceRatio { reference, gamma } => {
            let rel = linalg::hermitize(&(wh.map.adjoint() * reference.v_operator_at(w) * &wh.map));
            let (l, y) = linalg::top_eigenpair(&rel);
            Some((gamma * l - 1.0, y, l))
        }
        Predicate::All(ps) => ps
            .iter()
            .enumerate()
            .filter_map(|(i, p)| candidate(p, wh, w, budget, stream.wrapping_mul(31).wrapping_add(i as u64)))
            .filter(|c| c.0 > VIOLATION_TOL)
            .max_by(|a, b| a.0.total_cmp(&b.0)),
    }
}

/// Looks for a direction in `span(basis)` at label `w` with positive
/// conditional trace on which `pred` fails; returns the most violating one
/// found. `stream` selects the random stream of the search.
pub fn find_violation(
    state: &HybridState,
    w: usize,
    basis: &CMatrix,
    pred: &Predicate,
    budget: &SearchBudget,
    stream: u64,
) -> Result<Option<Violation>> {
    if w >= state.num_w() {
        return Err(Error::InvalidParameter(format!("memory label {w} out of range")));
    }
    if basis.nrows() != state.dim_v() {
        return Err(Error::DimensionMismatch { expected: state.dim_v(), got: basis.nrows() });
    }
    pred.validate(state)?;
    if basis.ncols() == 0 {
        return Ok(None);
    }
    let Some(wh) = whiten(state, w, basis) else { return Ok(None) };
    Ok(candidate(pred, &wh, w, budget, stream).filter(|c| c.0 > VIOLATION_TOL).and_then(|(excess, y, value)| {
        linalg::normalize(&(&wh.map * y)).map(|v| Violation { v, value, excess })
    }))
}

/// One removed direction and its weight `Tr[ρ_{X|v,w}]`.
#[derive(Debug, Clone)]
pub struct Removal {
    pub direction: PureDirection,
    pub weight: f64,
    pub value: f64,
}

impl Removal {
    pub fn w(&self) -> usize {
        self.direction.w.expect("removals carry their label")
    }
}

/// How the "no violation left" verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub exact: bool,
    pub budget: SearchBudget,
    pub searches: usize,
}

#[derive(Debug, Clone)]
pub struct TruncationOutcome {
    pub state: HybridState,
    /// In removal order; within one label the directions are orthonormal.
    pub removed: Vec<Removal>,
    /// Orthonormal basis (columns) of the remaining subspace per label.
    pub remaining: Vec<CMatrix>,
    pub search: SearchReport,
}

impl TruncationOutcome {
    pub fn removed_at(&self, w: usize) -> impl Iterator<Item = &Removal> {
        self.removed.iter().filter(move |r| r.w() == w)
    }

    pub fn is_noop(&self) -> bool {
        self.removed.is_empty()
    }

    pub fn projector(&self, w: usize) -> CMatrix {
        &self.remaining[w] * self.remaining[w].adjoint()
    }
}

/// Runs the truncation loop, labels in increasing order, always removing
/// the most violating direction found.
pub fn truncate(s: &HybridState, pred: &Predicate, budget: &SearchBudget) -> Result<TruncationOutcome> {
    pred.validate(s)?;
    let dv = s.dim_v();
    let guard = dv * s.num_w();
    let mut removed = Vec::new();
    let mut remaining = Vec::with_capacity(s.num_w());
    let mut searches = 0;
    for w in 0..s.num_w() {
        let mut basis = linalg::identity(dv);
        for round in 0.. {
            // Every removal shrinks 𝒱_w, so more rounds than dimensions is a bug.
            if removed.len() > guard || round > dv {
                return Err(Error::NonTermination(removed.len()));
            }
            searches += 1;
            let stream = ((w as u64) << 16) | round as u64;
            let Some(found) = find_violation(s, w, &basis, pred, budget, stream)? else { break };
            // v lies in 𝒱_w, where the current state agrees with the input.
            let weight = (0..s.num_x()).map(|x| linalg::quad_form(s.block(x, w), &found.v)).sum::<f64>().max(0.0);
            basis = linalg::complement_in_span(&basis, &found.v);
            removed.push(Removal { direction: PureDirection { v: found.v, w: Some(w) }, weight, value: found.value });
        }
        remaining.push(basis);
    }
    let projectors: Vec<Option<CMatrix>> =
        remaining.iter().map(|q| (q.ncols() < dv).then(|| q * q.adjoint())).collect();
    let state = s.map_blocks(|_, w, b| projectors[w].as_ref().map(|p| linalg::hermitize(&(p * b * p))))?;
    Ok(TruncationOutcome {
        state,
        removed,
        remaining,
        search: SearchReport { exact: pred.is_exact(), budget: *budget, searches },
    })
}

/// Re-runs the search on a truncated state over the full memory space at
/// every label, with the caller's budget (typically a fresh seed).
pub fn residual_violation(state: &HybridState, pred: &Predicate, budget: &SearchBudget) -> Result<Option<(usize, Violation)>> {
    let full = linalg::identity(state.dim_v());
    for w in 0..state.num_w() {
        if let Some(v) = find_violation(state, w, &full, pred, budget, (1 << 40) | w as u64)? {
            return Ok(Some((w, v)));
        }
    }
    Ok(None)
}

fn normalized(cond: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = cond.iter().sum();
    (total > TRACE_FLOOR).then(|| cond.into_iter().map(|p| p / total).collect())
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// For a direction with positive trace in the truncated state, the
/// normalized projection `v′` of `v` onto `𝒱_w` and the largest gap among
/// `P^{trunc}_{X|v,w}`, `P^{orig}_{X|v′,w}` and `P^{trunc}_{X|v′,w}`.
/// `None` when the truncated conditional trace is below the floor.
pub fn id_dist_at(
    original: &HybridState,
    outcome: &TruncationOutcome,
    v: &CVector,
    w: usize,
) -> Result<Option<(CVector, f64)>> {
    let Some(p_trunc) = normalized(outcome.state.conditional_at(v, w)?) else { return Ok(None) };
    let Some(v_prime) = linalg::normalize(&(outcome.projector(w) * v)) else { return Ok(None) };
    let Some(p_orig) = normalized(original.conditional_at(&v_prime, w)?) else { return Ok(None) };
    let Some(p_again) = normalized(outcome.state.conditional_at(&v_prime, w)?) else { return Ok(None) };
    Ok(Some((v_prime, max_gap(&p_trunc, &p_orig).max(max_gap(&p_trunc, &p_again)))))
}

#[derive(Debug, Clone)]
pub struct IdDistReport {
    pub checked: usize,
    pub max_deviation: f64,
    /// The worst direction if it deviates by more than `1e-8`.
    pub counterexample: Option<(PureDirection, f64)>,
}

/// Checks [`id_dist_at`] on `samples` random directions with positive
/// truncated trace, labels drawn uniformly among those with weight left.
pub fn check_id_dist(original: &HybridState, outcome: &TruncationOutcome, samples: usize, seed: u64) -> Result<IdDistReport> {
    let mut r = rng::substream(seed, "id-dist");
    let live: Vec<usize> = (0..outcome.state.num_w()).filter(|&w| outcome.state.w_trace(w) > TRACE_FLOOR).collect();
    let mut report = IdDistReport { checked: 0, max_deviation: 0.0, counterexample: None };
    if live.is_empty() {
        return Ok(report);
    }
    let mut attempts = 0;
    while report.checked < samples && attempts < 50 * samples.max(1) {
        attempts += 1;
        let w = live[r.gen_range(0..live.len())];
        let v = rng::random_unit_vector(original.dim_v(), &mut r);
        let Some((_, dev)) = id_dist_at(original, outcome, &v, w)? else { continue };
        report.checked += 1;
        if dev > report.max_deviation {
            report.max_deviation = dev;
            if dev > 1e-8 {
                report.counterexample = Some((PureDirection { v, w: Some(w) }, dev));
            }
        }
    }
    Ok(report)
}

/// Per-label comparison of the truncation distance with the bound
/// `3 Σ_i √(weight_i · Tr[ρ_{XV|w}])`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RemovalAccounting {
    pub w: usize,
    pub measured: f64,
    pub bound: f64,
}

impl RemovalAccounting {
    pub fn holds(&self, slack: f64) -> bool {
        self.measured <= self.bound + slack
    }
}

pub fn removal_accounting(original: &HybridState, outcome: &TruncationOutcome) -> Result<Vec<RemovalAccounting>> {
    (0..original.num_w())
        .map(|w| {
            let total = original.w_trace(w).max(0.0);
            let bound = 3.0 * outcome.removed_at(w).map(|r| (r.weight * total).sqrt()).sum::<f64>();
            Ok(RemovalAccounting { w, measured: cq::trace_distance_at(original, &outcome.state, w)?, bound })
        })
        .collect()
}
