//! Badness levels: counting, per classical memory label, how often the path
//! to it went through a step where some memory direction had its progress
//! towards a fixed target distribution `P` split unevenly by the sample.
//!
//! With `σ = τ·(Diag P ⊗ I)`, row `a` is *bad* at label `w` when some
//! direction `v` has both `|⟨M_a, P^σ_{X|v,w}⟩| > 2^{-r}` and
//! `⟨P^τ_{X|v,w}, P⟩ ≥ ½·2^{-n}`. The register `B` holds, per label, a
//! distribution over levels `0..=T`; a bad `(w, a)` shifts it up by one before
//! the channel moves the mass on.
//!
//! Detection runs two procedures. The exact one works in coordinates where
//! `τ_{V|w} = I`: both conditions are quadratic forms `v†Xv > 0`,
//! `v†Yv ≥ 0`, and since the joint numerical range of two Hermitian forms is
//! convex, such a `v` exists iff `min_{λ∈[0,1]} λ_max(λX + (1−λ)Y) > 0`
//! (a convex function of `λ`, minimized by golden-section search). The
//! second follows the counting argument's own construction: keep the
//! eigendirections of `σ_{V|w}` above `2^{-4r-2ℓ-n}` and compare the norm of
//! the whitened correlation operator there with a margin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cq::{DistributionX, HybridState};
use crate::error::{Error, Result};
use crate::extractor::BiasMatrix;
use crate::linalg::{self, c, CMatrix, CVector};
use crate::program::{BranchingProgram, LearningInstance};
use crate::truncation::{PipelineParams, TruncatedRun, TRACE_FLOOR};

/// Tolerance on the (2^n-scaled) exact detector's decision value.
pub const DETECT_TOL: f64 = 1e-9;

/// A fixed target distribution with `2^ℓ·2^{-n/2} ≤ ‖P‖₂ ≤ 4·2^ℓ·2^{-n/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    pub p: DistributionX,
    pub ell: f64,
}

impl TargetDistribution {
    pub fn new(p: DistributionX, ell: f64) -> Result<Self> {
        let theta = (ell - p.bits() as f64 / 2.0).exp2();
        let norm = p.l2_norm();
        if norm < theta * (1.0 - 1e-9) || norm > 4.0 * theta * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "target norm {norm} outside [{theta}, {}]",
                4.0 * theta
            )));
        }
        Ok(Self { p, ell })
    }

    /// Skips the norm window: the level accounting itself holds for any
    /// target, which the synthetic checks use.
    pub fn unchecked(p: DistributionX, ell: f64) -> Self {
        Self { p, ell }
    }

    pub fn n(&self) -> usize {
        self.p.bits()
    }
}

/// `σ = τ·(Diag P ⊗ I)`.
#[derive(Debug, Clone)]
pub struct SigmaSystem {
    pub state: HybridState,
}

pub fn sigma_of(tau: &HybridState, target: &TargetDistribution) -> Result<SigmaSystem> {
    if target.p.len() != tau.num_x() {
        return Err(Error::DimensionMismatch { expected: tau.num_x(), got: target.p.len() });
    }
    let p = target.p.as_slice();
    let state = tau.map_blocks(|x, _, b| Some(b * c(p[x])))?;
    Ok(SigmaSystem { state })
}

/// Detection parameters: `ℓ`, `r`, `n` and the margin of the proof-style
/// detector, which flags `(w, a)` when the restricted correlation norm
/// exceeds `2^{-r}·(1 − margin)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BadnessParams {
    pub pipeline: PipelineParams,
    pub margin: f64,
}

impl BadnessParams {
    pub fn new(pipeline: PipelineParams) -> Self {
        Self { pipeline, margin: 0.5 }
    }

    /// The threshold `ℓ′` of the norm guard: `4·2^{5ℓ+13r} = 2^{ℓ′}`.
    pub fn ell_prime(&self) -> f64 {
        5.0 * self.pipeline.ell + 13.0 * self.pipeline.r + 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Bad,
    NotBad,
    /// Within tolerance of the boundary; counted as bad.
    Undecided,
}

impl Verdict {
    pub fn counts_as_bad(self) -> bool {
        self != Verdict::NotBad
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub verdict: Verdict,
    /// `2^n · min_λ λ_max(λX + (1−λ)Y)`, maximized over the sign of the
    /// correlation; positive means bad.
    pub exact_value: f64,
    /// Norm of the whitened correlation operator on the heavy subspace.
    pub proof_norm: f64,
    pub proof_threshold: f64,
    /// A direction satisfying both conditions, when one was found.
    pub witness: Option<CVector>,
    /// The exact detector found a clear witness that the proof-style one
    /// missed.
    pub disagree: bool,
    /// The norm guard `‖P^σ_{X|v,w}‖₂ ≤ 2^{ℓ′}·2^{-n/2}` failed at a probed
    /// direction.
    pub guard_violated: bool,
    /// No direction carries weight (or none is heavy enough for the
    /// proof-style detector).
    pub degenerate: bool,
}

fn whitening(s: &CMatrix) -> Option<CMatrix> {
    let (vals, vecs) = linalg::eigh(s);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > TRACE_FLOOR).collect();
    if keep.is_empty() {
        return None;
    }
    let mut w = CMatrix::zeros(s.nrows(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        w.set_column(j, &(vecs.column(i) * c(vals[i].sqrt().recip())));
    }
    Some(w)
}

fn congruence(w: &CMatrix, m: &CMatrix) -> CMatrix {
    linalg::hermitize(&(w.adjoint() * m * w))
}

fn lmax_mix(x: &CMatrix, y: &CMatrix, lambda: f64) -> f64 {
    linalg::top_eigenpair(&(x * c(lambda) + y * c(1.0 - lambda))).0
}

/// `min_{λ∈[0,1]} λ_max(λX + (1−λ)Y)` and its minimizer.
fn min_max_eig(x: &CMatrix, y: &CMatrix) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut m1 = hi - ratio * (hi - lo);
    let mut m2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (lmax_mix(x, y, m1), lmax_mix(x, y, m2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - ratio * (hi - lo);
            f1 = lmax_mix(x, y, m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + ratio * (hi - lo);
            f2 = lmax_mix(x, y, m2);
        }
    }
    let mid = (lo + hi) / 2.0;
    [(lmax_mix(x, y, 0.0), 0.0), (lmax_mix(x, y, 1.0), 1.0), (lmax_mix(x, y, mid), mid)]
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("three candidates")
}

/// Searches `span(u₀, u₁)` for a unit `y` with `y†Xy > 0` and `y†Yy ≥ 0`,
/// maximizing the smaller of the two.
fn witness_in_pair(x: &CMatrix, y: &CMatrix, u0: &CVector, u1: &CVector) -> Option<(f64, CVector)> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let count = 2000;
    let mut best: Option<(f64, CVector)> = None;
    for i in 0..count {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
        let (theta, phi) = (z.acos(), golden * i as f64);
        let v = u0 * c((theta / 2.0).cos()) + u1 * num_complex::Complex64::from_polar((theta / 2.0).sin(), phi);
        let Some(v) = linalg::normalize(&v) else { continue };
        let score = linalg::quad_form(x, &v).min(linalg::quad_form(y, &v));
        if score > 0.0 && best.as_ref().map_or(true, |b| score > b.0) {
            best = Some((score, v));
        }
    }
    best
}

/// Decides whether `(w, a)` is bad for the state `tau` (the row's truncated
/// copy) and target `P`.
pub fn detect_bad(
    tau: &HybridState,
    w: usize,
    row: &[i8],
    target: &TargetDistribution,
    params: &BadnessParams,
) -> Result<Detection> {
    if row.len() != tau.num_x() || target.p.len() != tau.num_x() {
        return Err(Error::DimensionMismatch { expected: tau.num_x(), got: row.len() });
    }
    let n = tau.n() as f64;
    let scale = n.exp2();
    let p = target.p.as_slice();
    let theta = (-params.pipeline.r).exp2();
    let dv = tau.dim_v();
    let (mut s_sigma, mut corr) = (linalg::zeros(dv), linalg::zeros(dv));
    for x in 0..tau.num_x() {
        let b = tau.block(x, w) * c(p[x] * scale);
        corr += &b * c(f64::from(row[x]));
        s_sigma += b;
    }
    let mut out = Detection {
        verdict: Verdict::NotBad,
        exact_value: f64::NEG_INFINITY,
        proof_norm: 0.0,
        proof_threshold: theta * (1.0 - params.margin),
        witness: None,
        disagree: false,
        guard_violated: false,
        degenerate: true,
    };
    let Some(white) = whitening(&tau.v_operator_at(w)) else { return Ok(out) };
    let map = white.clone();
    // Whitened (τ_{V|w} = I) and scaled by 2^n.
    let sig = congruence(&white, &s_sigma);
    let cor = congruence(&white, &corr);
    let k = sig.nrows();
    let y = &sig - linalg::identity(k) * c(0.5);

    let guard = (params.ell_prime() - n / 2.0).exp2();
    let sigma_norm_at = |v: &CVector| -> f64 {
        let full = &map * v;
        let weights: Vec<f64> = (0..tau.num_x()).map(|x| linalg::quad_form(tau.block(x, w), &full) * p[x]).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        weights.iter().map(|q| (q / total).powi(2)).sum::<f64>().sqrt()
    };

    for sign in [1.0, -1.0] {
        let x = &cor * c(sign) - &sig * c(theta);
        let (value, lambda) = min_max_eig(&x, &y);
        if value > out.exact_value {
            out.exact_value = value;
        }
        if value > DETECT_TOL && out.witness.is_none() {
            let d = 1e-6;
            let u0 = linalg::top_eigenpair(&(&x * c((lambda - d).max(0.0)) + &y * c(1.0 - (lambda - d).max(0.0)))).1;
            let u1 = linalg::top_eigenpair(&(&x * c((lambda + d).min(1.0)) + &y * c(1.0 - (lambda + d).min(1.0)))).1;
            let found = [linalg::top_eigenpair(&x).1, linalg::top_eigenpair(&y).1]
                .iter()
                .chain([&u0, &u1])
                .filter_map(|v| {
                    let ok = linalg::quad_form(&x, v) > 0.0 && linalg::quad_form(&y, v) >= 0.0;
                    ok.then(|| (linalg::quad_form(&x, v).min(linalg::quad_form(&y, v)), v.clone()))
                })
                .chain(witness_in_pair(&x, &y, &u0, &u1))
                .max_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, v)) = found {
                out.guard_violated |= sigma_norm_at(&v) > guard;
                out.witness = linalg::normalize(&(&map * v));
            }
        }
    }

    // Proof-style: heavy eigendirections of σ_{V|w}, whitened correlation there.
    let heavy = (-4.0 * params.pipeline.r - 2.0 * params.pipeline.ell).exp2();
    let (vals, vecs) = linalg::eigh(&sig);
    let keep: Vec<usize> = (0..k).filter(|&i| vals[i] >= heavy).collect();
    out.degenerate = keep.is_empty();
    if !keep.is_empty() {
        let mut proj = CMatrix::zeros(k, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            proj.set_column(j, &(vecs.column(i) * c(vals[i].sqrt().recip())));
        }
        let pi = congruence(&proj, &cor);
        let (pv, pvecs) = linalg::eigh(&pi);
        let top = (0..pv.len()).max_by(|&a, &b| pv[a].abs().total_cmp(&pv[b].abs())).expect("nonempty");
        out.proof_norm = pv[top].abs();
        out.guard_violated |= sigma_norm_at(&(&proj * pvecs.column(top))) > guard;
    }
    let proof_flags = out.proof_norm > out.proof_threshold;

    out.verdict = if out.exact_value > DETECT_TOL {
        Verdict::Bad
    } else if out.exact_value < -DETECT_TOL || !proof_flags {
        Verdict::NotBad
    } else {
        Verdict::Undecided
    };
    out.disagree = out.exact_value > 10.0 * DETECT_TOL && out.witness.is_some() && !proof_flags;
    Ok(out)
}

/// Joint mass `Tr[τ_{XV|w}]·P_{B|w}(β)` per label and level `0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadnessRegister {
    pub mass: Vec<Vec<f64>>,
}

impl BadnessRegister {
    /// Level 0 everywhere, with the labels' weights.
    pub fn initial(w_traces: &[f64], horizon: usize) -> Self {
        let mass = w_traces
            .iter()
            .map(|&tr| {
                let mut row = vec![0.0; horizon + 1];
                row[0] = tr;
                row
            })
            .collect();
        Self { mass }
    }

    pub fn horizon(&self) -> usize {
        self.mass.first().map_or(0, |r| r.len() - 1)
    }

    pub fn w_mass(&self, w: usize) -> f64 {
        self.mass[w].iter().sum()
    }

    /// `P_{B|w}`; level 0 for labels without mass.
    pub fn distribution(&self, w: usize) -> Vec<f64> {
        let total = self.w_mass(w);
        if total <= 0.0 {
            let mut d = vec![0.0; self.horizon() + 1];
            d[0] = 1.0;
            return d;
        }
        self.mass[w].iter().map(|m| m / total).collect()
    }

    /// `⟨β|τ_B|β⟩`.
    pub fn level_mass(&self) -> Vec<f64> {
        (0..=self.horizon()).map(|b| self.mass.iter().map(|r| r[b]).sum()).collect()
    }

    /// The level permutation for one row: labels marked bad move up by one.
    /// Mass already at the top level cannot move and is an overflow.
    pub fn shifted(&self, bad: &[bool]) -> Result<Self> {
        let top = self.horizon();
        let mut mass = self.mass.clone();
        for (w, row) in mass.iter_mut().enumerate() {
            if bad[w] {
                if row[top] > 0.0 {
                    return Err(Error::RegisterOverflow { w });
                }
                row.rotate_right(1);
            }
        }
        Ok(Self { mass })
    }

    /// `Σ_β P_{B|w}(β)·2^β`.
    pub fn level_moment(&self, w: usize) -> f64 {
        self.distribution(w).iter().enumerate().map(|(b, p)| p * (b as f64).exp2()).sum()
    }
}

/// `flows[a][w][w']`: trace carried from label `w` to `w'` when row `a` is
/// sampled (both sample values, truncated copy included).
pub type Flows = Vec<Vec<Vec<f64>>>;

/// One register update: `mass'[w'] = E_a Σ_w flows[a][w][w'] · P_{B|w}`
/// with the distribution shifted for bad `(w, a)`.
pub fn badness_step(reg: &BadnessRegister, flows: &Flows, bad: &[Vec<bool>]) -> Result<BadnessRegister> {
    if flows.len() != bad.len() || flows.is_empty() {
        return Err(Error::InvalidParameter("need flows and verdicts for every row".into()));
    }
    let nw = reg.mass.len();
    let levels = reg.horizon() + 1;
    let dists: Vec<Vec<f64>> = (0..nw).map(|w| reg.distribution(w)).collect();
    let mut mass = vec![vec![0.0; levels]; nw];
    let inv = 1.0 / flows.len() as f64;
    for (a, flow) in flows.iter().enumerate() {
        for w in 0..nw {
            let mut dist = dists[w].clone();
            if bad[a][w] {
                if dist[levels - 1] > 0.0 && reg.mass[w][levels - 1] > 0.0 {
                    return Err(Error::RegisterOverflow { w });
                }
                dist.rotate_right(1);
            }
            for (target, &f) in flow[w].iter().enumerate() {
                if f != 0.0 {
                    for (m, d) in mass[target].iter_mut().zip(&dist) {
                        *m += inv * f * d;
                    }
                }
            }
        }
    }
    Ok(BadnessRegister { mass })
}

/// Per-step flows of a truncated run; they do not depend on the target.
pub fn run_flows(run: &TruncatedRun, prog: &BranchingProgram, matrix: &BiasMatrix) -> Vec<Flows> {
    run.steps
        .iter()
        .enumerate()
        .map(|(t, step)| {
            (0..matrix.rows())
                .into_par_iter()
                .map(|a| {
                    let copy = step.stage.copy_for(a);
                    (0..copy.num_w())
                        .map(|w| {
                            let mut out = vec![0.0; copy.num_w()];
                            for b in [1i8, -1] {
                                let mut block = linalg::zeros(copy.dim_v());
                                for x in (0..copy.num_x()).filter(|&x| matrix.get(a, x) == b) {
                                    block += copy.block(x, w);
                                }
                                for (o, tr) in out.iter_mut().zip(prog.channel(t, a, b).output_traces(w, &block)) {
                                    *o += tr;
                                }
                            }
                            out
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// The register along a run for one target, with the detections behind it.
#[derive(Debug, Clone)]
pub struct BadnessTrace {
    /// `registers[t]` for `t = 0..=T`.
    pub registers: Vec<BadnessRegister>,
    /// `verdicts[t][w][a]`.
    pub verdicts: Vec<Vec<Vec<Verdict>>>,
    /// Largest `|Σ_β mass − Tr[τ^{(t)}_{XV|w}]|` per step.
    pub consistency: Vec<f64>,
    pub disagreements: usize,
    pub guard_violations: usize,
}

impl BadnessTrace {
    /// `Pr_a[(w, a) bad]` per step and label.
    pub fn bad_rates(&self) -> Vec<Vec<f64>> {
        self.verdicts
            .iter()
            .map(|per_w| {
                per_w
                    .iter()
                    .map(|row| row.iter().filter(|v| v.counts_as_bad()).count() as f64 / row.len().max(1) as f64)
                    .collect()
            })
            .collect()
    }

    /// `p̂`: the largest per-step, per-label bad rate.
    pub fn p_hat(&self) -> f64 {
        self.bad_rates().iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Replays the badness accounting of `run` for `target` up to step `until`
/// (the whole run when `None`).
pub fn replay(
    inst: &LearningInstance,
    run: &TruncatedRun,
    flows: &[Flows],
    target: &TargetDistribution,
    params: &BadnessParams,
    until: Option<usize>,
) -> Result<BadnessTrace> {
    let steps = until.unwrap_or(run.steps.len()).min(run.steps.len());
    let horizon = inst.steps;
    let tau0 = &run.rho[0];
    let mut registers = vec![BadnessRegister::initial(
        &(0..tau0.num_w()).map(|w| tau0.w_trace(w)).collect::<Vec<_>>(),
        horizon,
    )];
    let mut verdicts = Vec::with_capacity(steps);
    let mut consistency = vec![0.0];
    let (mut disagreements, mut guard_violations) = (0, 0);
    for t in 0..steps {
        let stage = &run.steps[t].stage;
        let detections: Vec<Vec<Detection>> = (0..inst.matrix.rows())
            .into_par_iter()
            .map(|a| {
                (0..tau0.num_w())
                    .map(|w| detect_bad(stage.copy_for(a), w, inst.matrix.row(a), target, params))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let bad: Vec<Vec<bool>> =
            detections.iter().map(|row| row.iter().map(|d| d.verdict.counts_as_bad()).collect()).collect();
        for d in detections.iter().flatten() {
            disagreements += usize::from(d.disagree);
            guard_violations += usize::from(d.guard_violated);
        }
        verdicts.push((0..tau0.num_w()).map(|w| detections.iter().map(|row| row[w].verdict).collect()).collect());
        let next = badness_step(&registers[t], &flows[t], &bad)?;
        let tau_next = run.steps.get(t + 1).map_or(&run.last, |s| &s.tau);
        consistency.push((0..tau_next.num_w()).map(|w| (next.w_mass(w) - tau_next.w_trace(w)).abs()).fold(0.0, f64::max));
        registers.push(next);
    }
    Ok(BadnessTrace { registers, verdicts, consistency, disagreements, guard_violations })
}

/// `Σ_β P_{B|w}(β)·2^β·2^{-n}·(1−2^{-r})^{-3t}`.
pub fn ipbound_rhs(reg: &BadnessRegister, w: usize, t: usize, n: usize, r: f64) -> f64 {
    reg.level_moment(w) * (-(n as f64)).exp2() * (1.0 - (-r).exp2()).powi(-3 * t as i32)
}

/// `max_v ⟨P^τ_{X|v,w}, P⟩` over directions with weight above the floor:
/// the top eigenvalue of `Σ_x P(x)τ_{x,w}` whitened by `τ_{V|w}`.
pub fn max_progress(tau: &HybridState, w: usize, target: &TargetDistribution) -> Option<f64> {
    let white = whitening(&tau.v_operator_at(w))?;
    let mut s = linalg::zeros(tau.dim_v());
    for (x, &px) in target.p.as_slice().iter().enumerate() {
        s += tau.block(x, w) * c(px);
    }
    Some(linalg::top_eigenpair(&congruence(&white, &s)).0)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IpBoundRow {
    pub t: usize,
    pub w: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl IpBoundRow {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + slack)
    }
}

/// The progress bound at every step and label with weight, each against
/// its worst direction.
pub fn verify_ipbound(run: &TruncatedRun, trace: &BadnessTrace, target: &TargetDistribution, r: f64) -> Vec<IpBoundRow> {
    let n = target.n();
    let mut rows = Vec::new();
    for (t, reg) in trace.registers.iter().enumerate() {
        let tau = run.steps.get(t).map_or(&run.last, |s| &s.tau);
        for w in 0..tau.num_w() {
            if let Some(lhs) = max_progress(tau, w, target) {
                rows.push(IpBoundRow { t, w, lhs, rhs: ipbound_rhs(reg, w, t, n, r) });
            }
        }
    }
    rows
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelWeightRow {
    pub t: usize,
    pub beta: usize,
    pub mass: f64,
    pub bound: f64,
}

/// `⟨β|τ^{(t)}_B|β⟩ ≤ p̂^β·C(t, β)` for every `β ≤ t` (and no mass above
/// `t`), with `p̂` in place of the per-step bad probability.
pub fn verify_badness_weight(registers: &[BadnessRegister], p_hat: f64) -> Vec<LevelWeightRow> {
    let mut rows = Vec::new();
    for (t, reg) in registers.iter().enumerate() {
        for (beta, &mass) in reg.level_mass().iter().enumerate() {
            let bound = if beta <= t { p_hat.powi(beta as i32) * binomial(t, beta) } else { 0.0 };
            rows.push(LevelWeightRow { t, beta, mass, bound });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaVerdict {
    /// No direction to check.
    Vacuous,
    /// The register's level moment is too small for such a direction to
    /// exist.
    Contradiction,
    Pass,
    Fail,
}

/// One heavy direction run through the weight chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRow {
    pub t: usize,
    pub w: usize,
    /// `Tr[τ^{(t)}_{X|v,w}]`.
    pub weight: f64,
    /// `2^{-2m}·2^{-4r}`.
    pub bound: f64,
    /// `Σ_β P_{B|w}(β)·2^β` and the `2^{2ℓ}(1−2^{-r})^{3t}` it must exceed.
    pub moment: f64,
    pub required: f64,
    /// `2^{-ℓ} Σ_{β≥ℓ} ⟨β|τ_B|β⟩·2^β`.
    pub chain_bound: f64,
    pub verdict: LemmaVerdict,
}

/// The weight chain for a direction at `(t, w)` with weight `weight`,
/// given the register at step `t`.
pub fn weight_chain(reg: &BadnessRegister, t: usize, w: usize, weight: f64, params: &PipelineParams, m: usize) -> ChainRow {
    let (ell, r) = (params.ell, params.r);
    let moment = reg.level_moment(w);
    let required = (2.0 * ell).exp2() * (1.0 - (-r).exp2()).powi(3 * t as i32);
    let start = ell.ceil().max(0.0) as usize;
    let chain_bound =
        (-ell).exp2() * reg.level_mass().iter().enumerate().skip(start).map(|(b, m)| m * (b as f64).exp2()).sum::<f64>();
    let bound = (-2.0 * m as f64 - 4.0 * r).exp2();
    let verdict = if moment <= required {
        LemmaVerdict::Contradiction
    } else if weight < bound {
        LemmaVerdict::Pass
    } else {
        LemmaVerdict::Fail
    };
    ChainRow { t, w, weight, bound, moment, required, chain_bound, verdict }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MainLemmaReport {
    pub verdict: LemmaVerdict,
    pub rows: Vec<ChainRow>,
    /// Heavy directions whose own progress exceeded the register's bound.
    pub ipbound_failures: usize,
}

/// For every direction the `L₂` step removed, takes its conditional
/// distribution as the target, replays the levels up to that step and runs
/// the weight chain. A real direction that the register rules out can only
/// arise if the progress bound failed, and that is counted separately.
pub fn main_lemma_check(
    inst: &LearningInstance,
    prog: &BranchingProgram,
    run: &TruncatedRun,
    params: &BadnessParams,
) -> Result<MainLemmaReport> {
    let flows = run_flows(run, prog, &inst.matrix);
    let mut rows = Vec::new();
    let mut ipbound_failures = 0;
    for (t, step) in run.steps.iter().enumerate() {
        for removal in &step.stage.star.removed {
            let w = removal.w();
            let Ok(p) = step.tau.induced_distribution(&removal.direction) else { continue };
            let target = TargetDistribution::unchecked(p, params.pipeline.ell);
            let trace = replay(inst, run, &flows, &target, params, Some(t))?;
            let reg = &trace.registers[t];
            let progress = target.p.inner(&target.p);
            if progress > ipbound_rhs(reg, w, t, inst.n, params.pipeline.r) * (1.0 + 1e-8) {
                ipbound_failures += 1;
            }
            rows.push(weight_chain(reg, t, w, removal.weight, &params.pipeline, inst.m));
        }
    }
    let verdict = if rows.is_empty() {
        LemmaVerdict::Vacuous
    } else if ipbound_failures > 0 || rows.iter().any(|r| r.verdict == LemmaVerdict::Fail) {
        LemmaVerdict::Fail
    } else {
        LemmaVerdict::Pass
    };
    Ok(MainLemmaReport { verdict, rows, ipbound_failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cq::DEFAULT_TOL;
    use crate::extractor::inner_product_matrix;
    use crate::program::zoo;
    use crate::rng;
    use crate::truncation::{run_truncated, SearchBudget};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn params(n: usize, ell: f64, r: f64) -> BadnessParams {
        BadnessParams::new(PipelineParams::new(n, ell, r).unwrap())
    }

    fn random_state(n: usize, m: usize, q: usize, seed: u64) -> HybridState {
        let mut r = rng::substream(seed, "badness-state");
        let blocks: Vec<CMatrix> = (0..1usize << (n + m)).map(|_| rng::random_psd(1 << q, 1 << q, r.gen(), &mut r)).collect();
        let s = HybridState::from_blocks(n, m, q, blocks).unwrap();
        let total = s.total_trace();
        s.scaled(1.0 / total).unwrap()
    }

    fn random_distribution(len: usize, seed: u64) -> DistributionX {
        let mut r = rng::substream(seed, "target");
        DistributionX::from_weights(&(0..len).map(|_| r.gen::<f64>().powi(3)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn sigma_scaling_examples() {
        let s = random_state(2, 1, 1, 1);
        let uniform = TargetDistribution::unchecked(DistributionX::uniform(2), 0.0);
        let sig = sigma_of(&s, &uniform).unwrap();
        assert!(crate::cq::trace_distance(&sig.state, &s.scaled(0.25).unwrap()).unwrap() < 1e-15);
        let point = TargetDistribution::unchecked(DistributionX::point_mass(2, 3), 0.0);
        let sig = sigma_of(&s, &point).unwrap();
        for x in 0..4 {
            assert_eq!(sig.state.w_trace(0) > 0.0, true);
            assert_eq!(linalg::trace_re(sig.state.block(x, 1)) > 0.0, x == 3);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sigma_identities(seed in 0u64..10_000) {
            let s = random_state(3, 1, 2, seed);
            let target = TargetDistribution::unchecked(random_distribution(8, seed), 0.0);
            let sig = sigma_of(&s, &target).unwrap();
            let mut r = rng::substream(seed, "sigma-dirs");
            for _ in 0..5 {
                let v = rng::random_unit_vector(4, &mut r);
                let w = r.gen_range(0..2);
                let tau_p = s.induced_distribution(&crate::cq::PureDirection::at(v.clone(), w).unwrap()).unwrap();
                let ip = tau_p.inner(&target.p);
                let tau_tr: f64 = s.conditional_at(&v, w).unwrap().iter().sum();
                let sig_cond = sig.state.conditional_at(&v, w).unwrap();
                let sig_tr: f64 = sig_cond.iter().sum();
                prop_assert!((sig_tr - tau_tr * ip).abs() < 1e-9);
                for x in 0..8 {
                    let expected = tau_p.as_slice()[x] * target.p.as_slice()[x] / ip;
                    prop_assert!((sig_cond[x] / sig_tr - expected).abs() < 1e-9);
                }
                // Cauchy–Schwarz cap.
                prop_assert!(ip <= tau_p.l2_norm() * target.p.l2_norm() + 1e-15);
            }
        }

        #[test]
        fn exact_detector_matches_sampling(seed in 0u64..10_000) {
            // Oracle: dense sampling of the sphere. Any sampled witness forces
            // "bad"; a "not bad" verdict must leave every sample failing.
            let s = random_state(2, 0, 1, seed);
            let target = TargetDistribution::unchecked(random_distribution(4, seed + 1), 0.0);
            let mut r = rng::substream(seed, "detector-oracle");
            let row = [1i8, -1, 1, -1];
            let rr: f64 = r.gen_range(0.5..3.0);
            let det = detect_bad(&s, 0, &row, &target, &params(2, 0.0, rr)).unwrap();
            let theta = (-rr).exp2();
            let sampled_bad = (0..4000).any(|_| {
                let v = rng::random_unit_vector(2, &mut r);
                let cond = s.conditional_at(&v, 0).unwrap();
                let tr: f64 = cond.iter().sum();
                let sig: Vec<f64> = cond.iter().zip(target.p.as_slice()).map(|(a, b)| a * b).collect();
                let sig_tr: f64 = sig.iter().sum();
                let corr: f64 = sig.iter().zip(&row).map(|(a, &m)| a * f64::from(m)).sum::<f64>() / sig_tr;
                corr.abs() > theta * (1.0 + 1e-6) && sig_tr / tr >= 0.5 * 0.25 * (1.0 + 1e-6)
            });
            if sampled_bad {
                prop_assert_eq!(det.verdict, Verdict::Bad);
            }
            if det.verdict == Verdict::Bad {
                let v = det.witness.clone().expect("bad verdicts carry a witness");
                let cond = s.conditional_at(&v, 0).unwrap();
                let tr: f64 = cond.iter().sum();
                let sig: Vec<f64> = cond.iter().zip(target.p.as_slice()).map(|(a, b)| a * b).collect();
                let sig_tr: f64 = sig.iter().sum();
                let corr: f64 = sig.iter().zip(&row).map(|(a, &m)| a * f64::from(m)).sum::<f64>() / sig_tr;
                prop_assert!(corr.abs() > theta * (1.0 - 1e-6));
                prop_assert!(sig_tr / tr >= 0.125 * (1.0 - 1e-6));
            }
        }
    }

    #[test]
    fn uniform_target_after_even_split_is_not_bad() {
        // With P uniform, ⟨M_a, P^σ⟩ = ⟨M_a, P^τ⟩, which the row stage caps.
        let n = 3;
        let matrix = inner_product_matrix(n).unwrap();
        let s = random_state(n, 1, 1, 9);
        let p = PipelineParams::new(n, 3.0, 1.0).unwrap();
        let budget = SearchBudget::reduced(1);
        let stage = crate::truncation::pipeline_stage(&s, &p, &matrix, &budget).unwrap();
        let target = TargetDistribution::unchecked(DistributionX::uniform(n), 0.0);
        for a in 0..8 {
            for w in 0..2 {
                let d = detect_bad(stage.copy_for(a), w, matrix.row(a), &target, &BadnessParams::new(p)).unwrap();
                assert_eq!(d.verdict, Verdict::NotBad, "a={a} w={w} value={}", d.exact_value);
            }
        }
    }

    #[test]
    fn target_off_support_is_never_bad() {
        // P lives on x = 3, τ only on x ∈ {0, 1}: the progress condition fails.
        let blocks: Vec<CMatrix> = (0..4)
            .map(|x| if x < 2 { linalg::outer(&linalg::basis_vector(2, x)) * c(0.5) } else { linalg::zeros(2) })
            .collect();
        let s = HybridState::from_blocks(2, 0, 1, blocks).unwrap();
        let target = TargetDistribution::unchecked(DistributionX::point_mass(2, 3), 0.0);
        for row in [[1i8, 1, 1, 1], [1, -1, 1, -1]] {
            let d = detect_bad(&s, 0, &row, &target, &params(2, 0.0, 1.0)).unwrap();
            assert_eq!(d.verdict, Verdict::NotBad);
        }
    }

    #[test]
    fn planted_bad_direction_is_found_by_both_detectors() {
        // |0⟩ carries x ∈ {0, 1} with P favouring x = 0: correlation of row
        // (1, −1, ·, ·) is 0.5 = 2·2^{-r} at r = 2, and ⟨P^τ, P⟩ = 2^{-n}.
        let n = 2;
        let target = TargetDistribution::unchecked(DistributionX::new(vec![0.375, 0.125, 0.25, 0.25], 1e-12).unwrap(), 0.0);
        let e0 = linalg::outer(&linalg::basis_vector(2, 0));
        let e1 = linalg::outer(&linalg::basis_vector(2, 1));
        let blocks = vec![&e0 * c(0.25), &e0 * c(0.25), &e1 * c(0.25), &e1 * c(0.25)];
        let s = HybridState::from_blocks(n, 0, 1, blocks).unwrap();
        // Check the construction by hand.
        let cond = s.conditional_at(&linalg::basis_vector(2, 0), 0).unwrap();
        let p_tau: Vec<f64> = cond.iter().map(|x| x / 0.5).collect();
        assert_abs_diff_eq!(p_tau.iter().zip(target.p.as_slice()).map(|(a, b)| a * b).sum::<f64>(), 0.25, epsilon = 1e-15);
        let d = detect_bad(&s, 0, &[1, -1, 1, -1], &target, &params(n, 0.0, 2.0)).unwrap();
        assert_eq!(d.verdict, Verdict::Bad);
        assert!(d.proof_norm > d.proof_threshold);
        assert!(!d.disagree);
        let witness = d.witness.unwrap();
        assert!(witness[0].norm() > 0.99, "{witness}");
    }

    #[test]
    fn register_shift_examples() {
        let reg = BadnessRegister::initial(&[0.25, 0.75], 3);
        assert_eq!(reg.shifted(&[false, false]).unwrap(), reg);
        let moved = reg.shifted(&[true, true]).unwrap();
        assert_eq!(moved.mass[0], vec![0.0, 0.25, 0.0, 0.0]);
        assert_eq!(moved.mass[1], vec![0.0, 0.75, 0.0, 0.0]);
        let full = BadnessRegister { mass: vec![vec![0.0, 0.0, 0.0, 1.0]] };
        assert!(matches!(full.shifted(&[true]), Err(Error::RegisterOverflow { w: 0 })));
        // One forced bad step doubles the progress allowance.
        assert_eq!(moved.level_moment(0), 2.0 * reg.level_moment(0));
    }

    #[test]
    fn mixed_rows_average_the_shifts() {
        // Two rows, identity flows; row 0 bad at w = 0 only.
        let reg = BadnessRegister::initial(&[0.5, 0.5], 2);
        let flows: Flows = vec![vec![vec![0.5, 0.0], vec![0.0, 0.5]]; 2];
        let next = badness_step(&reg, &flows, &[vec![true, false], vec![false, false]]).unwrap();
        assert_eq!(next.mass[0], vec![0.25, 0.25, 0.0]);
        assert_eq!(next.mass[1], vec![0.5, 0.0, 0.0]);
    }

    fn exact_binomial_register(p_num: usize, rows: usize, steps: usize) -> Vec<BadnessRegister> {
        let mut regs = vec![BadnessRegister::initial(&[1.0], steps)];
        let flows: Flows = vec![vec![vec![1.0]]; rows];
        for t in 0..steps {
            let bad: Vec<Vec<bool>> = (0..rows).map(|a| vec![a < p_num]).collect();
            regs.push(badness_step(&regs[t], &flows, &bad).unwrap());
        }
        regs
    }

    #[test]
    fn synthetic_bernoulli_levels_are_binomial() {
        // Oracle: C(t, β) p^β (1 − p)^{t−β} computed directly.
        let (p_num, rows, steps) = (1, 4, 8);
        let p = p_num as f64 / rows as f64;
        let regs = exact_binomial_register(p_num, rows, steps);
        for (t, reg) in regs.iter().enumerate() {
            for (beta, &mass) in reg.level_mass().iter().enumerate() {
                let exact = if beta <= t { binomial(t, beta) * p.powi(beta as i32) * (1.0 - p).powi((t - beta) as i32) } else { 0.0 };
                assert_abs_diff_eq!(mass, exact, epsilon = 1e-12);
            }
        }
        assert!(verify_badness_weight(&regs, p).iter().all(|r| r.mass <= r.bound + 1e-12));
        // Always bad: all mass at β = t.
        let regs = exact_binomial_register(4, 4, 5);
        assert_abs_diff_eq!(regs[5].level_mass()[5], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn start_state_has_ipbound_equality() {
        let inst = LearningInstance::inner_product(3, 1, 0, 2).unwrap();
        let prog = zoo::greedy_store(&inst).unwrap();
        let bp = params(3, 0.5, 1.0);
        let run = run_truncated(&inst, &prog, &bp.pipeline, &SearchBudget::reduced(2)).unwrap();
        let flows = run_flows(&run, &prog, &inst.matrix);
        let target = TargetDistribution::unchecked(random_distribution(8, 4), 0.5);
        let trace = replay(&inst, &run, &flows, &target, &bp, None).unwrap();
        let rows = verify_ipbound(&run, &trace, &target, bp.pipeline.r);
        let first = rows.iter().find(|r| r.t == 0).unwrap();
        assert_abs_diff_eq!(first.lhs, first.rhs, epsilon = 1e-12);
        assert_abs_diff_eq!(first.lhs, 0.125, epsilon = 1e-12);
        assert!(rows.iter().all(|r| r.holds(1e-8)), "{rows:?}");
        assert!(trace.consistency.iter().all(|&d| d < DEFAULT_TOL));
    }

    #[test]
    fn chain_examples() {
        let p = PipelineParams::new(8, 2.0, 1.0).unwrap();
        // All mass at level 0: at t = 0 the moment 1 cannot reach 2^{2ℓ}.
        let flat = BadnessRegister::initial(&[1.0], 4);
        assert_eq!(weight_chain(&flat, 0, 0, 0.3, &p, 1).verdict, LemmaVerdict::Contradiction);
        // Mass moved to the top level: the chain allows heavy directions.
        let corrupted = BadnessRegister { mass: vec![vec![0.0, 0.0, 0.0, 0.0, 1.0]] };
        let row = weight_chain(&corrupted, 2, 0, 0.3, &p, 1);
        assert_eq!(row.verdict, LemmaVerdict::Fail);
        assert!(row.chain_bound > row.bound);
    }

    #[test]
    fn quiet_runs_are_vacuous() {
        let inst = LearningInstance::inner_product(2, 1, 0, 2).unwrap();
        let prog = crate::program::build_random_guess(&inst);
        let run = run_truncated(&inst, &prog, &PipelineParams::new(2, 2.0, 1.0).unwrap(), &SearchBudget::reduced(0)).unwrap();
        let report = main_lemma_check(&inst, &prog, &run, &params(2, 2.0, 1.0)).unwrap();
        assert_eq!(report.verdict, LemmaVerdict::Vacuous);
    }

    #[test]
    fn norm_window_is_enforced() {
        assert!(TargetDistribution::new(DistributionX::uniform(6), 0.0).is_ok());
        assert!(TargetDistribution::new(DistributionX::uniform(6), 1.0).is_err());
        assert!(TargetDistribution::new(DistributionX::point_mass(6, 0), 0.0).is_err());
        assert!(TargetDistribution::new(DistributionX::point_mass(6, 0), 2.0).is_ok());
    }
}
