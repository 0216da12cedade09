//! The per-step truncation pipeline and its accounting against the exact
//! evolution.
//!
//! One stage maps `τ` to `τ⋆` (remove directions with large `L₂` norm),
//! then `τ∘` (drop the `(x, w)` blocks where `P^{τ⋆}_{X|w}(x)` is large),
//! then `τ∞` (remove directions with a large `L∞` norm or that lost too much
//! trace since `τ⋆`), and finally one copy `τ^{(a)}` per row `a` with the
//! directions correlated with row `a` removed. Row `a` then evolves from its
//! own copy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{truncate, Predicate, Removal, SearchBudget, TruncationOutcome, TRACE_FLOOR};
use crate::cq::{self, HybridState};
use crate::error::{Error, Result};
use crate::extractor::BiasMatrix;
use crate::linalg;
use crate::program::{self, BranchingProgram, LearningInstance};

/// `ℓ` and `r` for an `n`-bit secret, with the derived thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub n: usize,
    pub ell: f64,
    pub r: f64,
}

impl PipelineParams {
    pub fn new(n: usize, ell: f64, r: f64) -> Result<Self> {
        if !ell.is_finite() || !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParameter(format!("need finite ℓ and r ≥ 0, got ℓ={ell}, r={r}")));
        }
        Ok(Self { n, ell, r })
    }

    /// `2^ℓ · 2^{-n/2}`.
    pub fn theta_l2(&self) -> f64 {
        (self.ell - self.n as f64 / 2.0).exp2()
    }

    /// `2^{2ℓ+5r} · 2^{-n}`.
    pub fn theta_g(&self) -> f64 {
        (2.0 * self.ell + 5.0 * self.r - self.n as f64).exp2()
    }

    /// `2^{2ℓ+9r} · 2^{-n}`.
    pub fn theta_inf(&self) -> f64 {
        (2.0 * self.ell + 9.0 * self.r - self.n as f64).exp2()
    }

    /// `2^{-r}`.
    pub fn theta_even(&self) -> f64 {
        (-self.r).exp2()
    }

    /// `1 − 2^{-r}`.
    pub fn gamma(&self) -> f64 {
        1.0 - (-self.r).exp2()
    }
}

/// Distances between consecutive stages and what each stage removed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// `‖τ⋆ − τ‖_Tr`.
    pub d_star: f64,
    /// `‖τ∘ − τ⋆‖_Tr`.
    pub d_circ: f64,
    /// `‖τ∞ − τ∘‖_Tr`.
    pub d_inf: f64,
    /// `E_a ‖τ^{(a)} − τ∞‖_Tr`.
    pub d_even_mean: f64,
    pub star_weights: Vec<f64>,
    pub inf_weights: Vec<f64>,
    /// Directions removed per row in the last stage.
    pub even_removed: Vec<usize>,
    /// Per label, `Σ_{x : g(x,w)=0} P^{τ⋆}_{X|w}(x)` (zero for empty labels).
    pub g_dropped: Vec<f64>,
    /// Whether every "no violation" verdict of the stage was exact.
    pub exact: bool,
}

impl StageReport {
    pub fn total(&self) -> f64 {
        self.d_star + self.d_circ + self.d_inf + self.d_even_mean
    }
}

#[derive(Debug, Clone)]
pub struct PipelineStage {
    pub star: TruncationOutcome,
    pub circ: HybridState,
    pub inf: TruncationOutcome,
    /// `copies[0]` is `τ∞`; the rest are the row copies that differ from it.
    pub copies: Vec<HybridState>,
    /// Row `a` evolves from `copies[choice[a]]`.
    pub choice: Vec<usize>,
    /// `g[w][x]`.
    pub g: Vec<Vec<bool>>,
    pub report: StageReport,
}

impl PipelineStage {
    pub fn copy_for(&self, a: usize) -> &HybridState {
        &self.copies[self.choice[a]]
    }
}

fn weights(removed: &[Removal]) -> Vec<f64> {
    removed.iter().map(|r| r.weight).collect()
}

/// Runs the four truncations on `s`.
pub fn pipeline_stage(s: &HybridState, p: &PipelineParams, matrix: &BiasMatrix, budget: &SearchBudget) -> Result<PipelineStage> {
    if matrix.cols() != s.num_x() || p.n != s.n() {
        return Err(Error::DimensionMismatch { expected: s.num_x(), got: matrix.cols() });
    }
    let star = truncate(s, &Predicate::L2 { theta: p.theta_l2() }, budget)?;

    let theta_g = p.theta_g();
    let mut g_dropped = Vec::with_capacity(s.num_w());
    let g: Vec<Vec<bool>> = (0..s.num_w())
        .map(|w| {
            let weights = star.state.x_weights_at(w);
            let total: f64 = weights.iter().sum();
            if total <= TRACE_FLOOR {
                g_dropped.push(0.0);
                return vec![false; s.num_x()];
            }
            let keep: Vec<bool> = weights.iter().map(|&wt| wt / total <= theta_g).collect();
            g_dropped.push(weights.iter().zip(&keep).filter(|(_, &k)| !k).map(|(wt, _)| wt / total).sum());
            keep
        })
        .collect();
    let circ = star.state.map_blocks(|x, w, b| (!g[w][x]).then(|| linalg::zeros(b.nrows())))?;

    let capped = Predicate::All(vec![
        Predicate::LInf { theta: p.theta_inf() },
        Predicate::TraceRatio { reference: star.state.clone(), gamma: p.gamma() },
    ]);
    let inf = truncate(&circ, &capped, budget)?;

    let theta_even = p.theta_even();
    let per_row: Vec<TruncationOutcome> = (0..matrix.rows())
        .into_par_iter()
        .map(|a| truncate(&inf.state, &Predicate::Even { row: matrix.row(a).to_vec(), theta: theta_even }, budget))
        .collect::<Result<_>>()?;

    let mut copies = vec![inf.state.clone()];
    let mut choice = Vec::with_capacity(per_row.len());
    let mut even_removed = Vec::with_capacity(per_row.len());
    let mut d_even = 0.0;
    for out in per_row {
        even_removed.push(out.removed.len());
        if out.is_noop() {
            choice.push(0);
        } else {
            d_even += cq::trace_distance(&out.state, &inf.state)?;
            choice.push(copies.len());
            copies.push(out.state);
        }
    }

    let report = StageReport {
        d_star: cq::trace_distance(s, &star.state)?,
        d_circ: cq::trace_distance(&star.state, &circ)?,
        d_inf: cq::trace_distance(&circ, &inf.state)?,
        d_even_mean: d_even / matrix.rows() as f64,
        star_weights: weights(&star.removed),
        inf_weights: weights(&inf.removed),
        even_removed,
        g_dropped,
        exact: star.search.exact && inf.search.exact,
    };
    Ok(PipelineStage { star, circ, inf, copies, choice, g, report })
}

#[derive(Debug, Clone)]
pub struct TruncatedStep {
    /// `τ^{(t)}`, the input of the stage.
    pub tau: HybridState,
    pub stage: PipelineStage,
    /// `‖τ^{(t)} − ρ^{(t)}‖_Tr`.
    pub distance: f64,
    /// `E_a ‖τ^{(t,a)} − ρ^{(t)}‖_Tr`, which bounds the next step's distance.
    pub row_distance: f64,
}

#[derive(Debug, Clone)]
pub struct TruncatedRun {
    pub steps: Vec<TruncatedStep>,
    /// The exact states `ρ^{(0..=T)}`.
    pub rho: Vec<HybridState>,
    /// `τ^{(T)}`.
    pub last: HybridState,
    /// `‖τ^{(t)} − ρ^{(t)}‖_Tr` for `t = 0..=T`.
    pub distances: Vec<f64>,
    /// The triangle-inequality bound on `distances[t]`: the sum of all
    /// earlier stage distances.
    pub accumulated: Vec<f64>,
}

impl TruncatedRun {
    /// Largest `distances[t] − accumulated[t]`; nonpositive when the
    /// accounting holds.
    pub fn worst_slack(&self) -> f64 {
        self.distances.iter().zip(&self.accumulated).map(|(d, a)| d - a).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evolves the truncated system alongside the exact one. Step `t` searches
/// with the budget's seed offset by `t`.
pub fn run_truncated(
    inst: &LearningInstance,
    prog: &BranchingProgram,
    p: &PipelineParams,
    budget: &SearchBudget,
) -> Result<TruncatedRun> {
    let rho = program::run_program(inst, prog)?;
    let mut tau = rho[0].clone();
    let mut steps = Vec::with_capacity(inst.steps);
    let mut distances = vec![0.0];
    let mut accumulated = vec![0.0];
    for t in 0..inst.steps {
        let stage = pipeline_stage(&tau, p, &inst.matrix, &budget.with_seed(budget.seed.wrapping_add(t as u64)))?;
        let per_copy: Vec<f64> = stage.copies.iter().map(|c| cq::trace_distance(c, &rho[t])).collect::<Result<_>>()?;
        let row_distance = stage.choice.iter().map(|&i| per_copy[i]).sum::<f64>() / stage.choice.len() as f64;
        let next = program::evolve_mixture(&stage.copies, &stage.choice, t, prog, &inst.matrix)?;
        accumulated.push(accumulated[t] + stage.report.total());
        steps.push(TruncatedStep { tau, stage, distance: distances[t], row_distance });
        distances.push(cq::trace_distance(&next, &rho[t + 1])?);
        tau = next;
    }
    Ok(TruncatedRun { steps, rho, last: tau, distances, accumulated })
}

/// One measured quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
    /// Set when the parameters do not meet the bound's preconditions, so a
    /// failure carries no information.
    pub informational: bool,
}

impl BoundCheck {
    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }
}

/// Compares one stage against the per-stage bounds for memory `(q, m)`:
/// `3·2^{q−2r}` for `τ⋆`, `2^{-5r}` for `τ∘` and for each label's dropped
/// mass, `5·2^{q−2r}` for `τ∞`, `2^{-2r}` for the row copies on average, and
/// `2^{-2m}·2^{-4r}` for each direction removed by the `L₂` step.
pub fn truncation_error_report(
    report: &StageReport,
    p: &PipelineParams,
    q: usize,
    m: usize,
    preconditions_hold: bool,
) -> Vec<BoundCheck> {
    let (q, m, r) = (q as f64, m as f64, p.r);
    let check = |name: &str, measured: f64, bound: f64| BoundCheck {
        name: name.into(),
        measured,
        bound,
        holds: measured <= bound + 1e-12,
        informational: !preconditions_hold,
    };
    vec![
        check("l2-stage", report.d_star, 3.0 * (q - 2.0 * r).exp2()),
        check("g-stage", report.d_circ, (-5.0 * r).exp2()),
        check("g-dropped-mass", report.g_dropped.iter().copied().fold(0.0, f64::max), (-5.0 * r).exp2()),
        check("linf-stage", report.d_inf, 5.0 * (q - 2.0 * r).exp2()),
        check("row-stage", report.d_even_mean, (-2.0 * r).exp2()),
        check(
            "l2-removed-weight",
            report.star_weights.iter().copied().fold(0.0, f64::max),
            (-2.0 * m - 4.0 * r).exp2(),
        ),
    ]
}
