//! Branching programs with hybrid memory and their exact evolution.
//!
//! At every step a uniform row `a` is drawn, `b = M(a, x)` is revealed, and
//! the memory is updated by `Φ_{t,a,b}`. Instead of sampling `a` the
//! evolution averages over all rows in closed form, so every number produced
//! here (traces, success probabilities) is exact up to rounding.

mod channel;
pub mod classical;
pub mod file;
pub mod zoo;

use std::sync::Arc;

use rayon::prelude::*;

pub use channel::{validate_channel, ChannelViolation, KrausChannel};

use crate::cq::HybridState;
use crate::error::{Error, Result};
use crate::extractor::BiasMatrix;
use crate::linalg::{self, CMatrix};

/// The channels of one step, indexed by `(a, b)`.
#[derive(Debug, Clone)]
pub struct ChannelTable {
    rows: usize,
    channels: Vec<Arc<KrausChannel>>,
}

impl ChannelTable {
    pub fn uniform(rows: usize, channel: Arc<KrausChannel>) -> Self {
        Self { rows, channels: vec![channel; 2 * rows] }
    }

    /// `f(a, b)` with `b ∈ {−1, 1}`; returning the same `Arc` for several
    /// entries lets evolution apply that channel once per block.
    pub fn from_fn(rows: usize, mut f: impl FnMut(usize, i8) -> Arc<KrausChannel>) -> Self {
        let mut channels = Vec::with_capacity(2 * rows);
        for a in 0..rows {
            channels.push(f(a, 1));
            channels.push(f(a, -1));
        }
        Self { rows, channels }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn get(&self, a: usize, b: i8) -> &Arc<KrausChannel> {
        &self.channels[2 * a + usize::from(b == -1)]
    }

    fn iter(&self) -> impl Iterator<Item = &Arc<KrausChannel>> {
        self.channels.iter()
    }
}

#[derive(Debug, Clone)]
pub enum Schedule {
    /// The same table at every step.
    Stationary(ChannelTable),
    PerStep(Vec<ChannelTable>),
}

#[derive(Debug, Clone)]
pub struct BranchingProgram {
    q: usize,
    m: usize,
    steps: usize,
    schedule: Schedule,
    /// Guess for each `(v, w)`, indexed `(v << m) | w`.
    output: Vec<usize>,
}

impl BranchingProgram {
    pub fn new(q: usize, m: usize, steps: usize, schedule: Schedule, output: Vec<usize>) -> Result<Self> {
        if output.len() != 1 << (q + m) {
            return Err(Error::DimensionMismatch { expected: 1 << (q + m), got: output.len() });
        }
        let tables: Vec<&ChannelTable> = match &schedule {
            Schedule::Stationary(t) => vec![t],
            Schedule::PerStep(ts) => {
                if ts.is_empty() {
                    return Err(Error::InvalidParameter("a per-step schedule needs at least one table".into()));
                }
                if ts.len() != steps {
                    return Err(Error::InvalidParameter(format!("schedule has {} steps, program length is {steps}", ts.len())));
                }
                ts.iter().collect()
            }
        };
        let rows = tables.first().map(|t| t.rows());
        for t in &tables {
            if Some(t.rows()) != rows {
                return Err(Error::InvalidParameter("channel tables disagree on the number of rows".into()));
            }
            if let Some(ch) = t.iter().find(|ch| ch.q() != q || ch.m() != m) {
                return Err(Error::InvalidChannel(format!(
                    "channel acts on q={}, m={} but the program has q={q}, m={m}",
                    ch.q(),
                    ch.m()
                )));
            }
        }
        Ok(Self { q, m, steps, schedule, output })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rows(&self) -> usize {
        self.table(0).rows()
    }

    pub fn table(&self, t: usize) -> &ChannelTable {
        match &self.schedule {
            Schedule::Stationary(table) => table,
            Schedule::PerStep(tables) => &tables[t],
        }
    }

    pub fn channel(&self, t: usize, a: usize, b: i8) -> &Arc<KrausChannel> {
        self.table(t).get(a, b)
    }

    pub fn guess(&self, v: usize, w: usize) -> usize {
        self.output[(v << self.m) | w]
    }

    pub fn output(&self) -> &[usize] {
        &self.output
    }

    /// Checks that the program fits `inst`: same memory sizes, one row per
    /// sample value, guesses inside `𝒳`.
    pub fn check_against(&self, inst: &LearningInstance) -> Result<()> {
        if self.q != inst.q || self.m != inst.m {
            return Err(Error::InvalidParameter(format!(
                "program memory (q={}, m={}) differs from the instance (q={}, m={})",
                self.q, self.m, inst.q, inst.m
            )));
        }
        if self.steps < inst.steps {
            return Err(Error::InvalidParameter(format!("program has {} steps, instance needs {}", self.steps, inst.steps)));
        }
        if self.rows() != inst.matrix.rows() {
            return Err(Error::DimensionMismatch { expected: inst.matrix.rows(), got: self.rows() });
        }
        if let Some(&g) = self.output.iter().find(|&&g| g >= inst.matrix.cols()) {
            return Err(Error::InvalidParameter(format!("guess {g} is outside the domain of x")));
        }
        Ok(())
    }
}

/// A learning problem together with the memory budget and the number of samples.
#[derive(Debug, Clone)]
pub struct LearningInstance {
    pub matrix: Arc<BiasMatrix>,
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub steps: usize,
}

impl LearningInstance {
    pub fn new(matrix: Arc<BiasMatrix>, q: usize, m: usize, steps: usize) -> Result<Self> {
        let n = matrix
            .n()
            .ok_or_else(|| Error::InvalidParameter(format!("matrix has {} columns, not a power of two", matrix.cols())))?;
        if n + m + 2 * q > 30 {
            return Err(Error::SizeCap(format!("n={n}, m={m}, q={q} is too large for exact evolution")));
        }
        Ok(Self { matrix, n, q, m, steps })
    }

    pub fn inner_product(n: usize, q: usize, m: usize, steps: usize) -> Result<Self> {
        Self::new(Arc::new(crate::extractor::inner_product_matrix(n)?), q, m, steps)
    }
}

/// `ρ^{(0)}`: uniform `x`, memory maximally mixed and independent of `x`.
pub fn init_state(inst: &LearningInstance) -> HybridState {
    HybridState::maximally_mixed(inst.n, inst.m, inst.q)
}

fn check_state(s: &HybridState, prog: &BranchingProgram, matrix: &BiasMatrix) -> Result<()> {
    if s.q() != prog.q() || s.m() != prog.m() {
        return Err(Error::ShapeMismatch);
    }
    if s.num_x() != matrix.cols() {
        return Err(Error::DimensionMismatch { expected: matrix.cols(), got: s.num_x() });
    }
    if prog.rows() != matrix.rows() {
        return Err(Error::DimensionMismatch { expected: matrix.rows(), got: prog.rows() });
    }
    Ok(())
}

/// One step of exact evolution where row `a` acts on `states[choice[a]]`:
///
/// `Σ_x |x⟩⟨x| ⊗ (1/|𝒜|) Σ_a Φ_{t,a,M(a,x)}(ρ^{(choice[a])}_{VW|x})`.
///
/// With a single state this is the ordinary step; the truncation pipeline
/// uses different per-row states. Identical `(channel, state)` pairs are
/// applied once and weighted by their multiplicity, in first-seen order, so
/// the summation order (and hence the output bits) is fixed.
pub fn evolve_mixture(
    states: &[HybridState],
    choice: &[usize],
    t: usize,
    prog: &BranchingProgram,
    matrix: &BiasMatrix,
) -> Result<HybridState> {
    let first = states.first().ok_or(Error::InvalidParameter("no states to evolve".into()))?;
    for s in states {
        check_state(s, prog, matrix)?;
    }
    if choice.len() != matrix.rows() || choice.iter().any(|&i| i >= states.len()) {
        return Err(Error::InvalidParameter("state choice must name one state per row".into()));
    }
    if t >= prog.steps() {
        return Err(Error::InvalidParameter(format!("step {t} is past the program length {}", prog.steps())));
    }
    let (nw, dv) = (first.num_w(), first.dim_v());
    let inv_rows = 1.0 / matrix.rows() as f64;
    let per_x: Vec<Vec<CMatrix>> = (0..first.num_x())
        .into_par_iter()
        .map(|x| {
            let mut groups: Vec<(&Arc<KrausChannel>, usize, usize)> = Vec::new();
            for (a, &s) in choice.iter().enumerate() {
                let ch = prog.channel(t, a, matrix.get(a, x));
                match groups.iter_mut().find(|(g, gs, _)| Arc::ptr_eq(g, ch) && *gs == s) {
                    Some(entry) => entry.2 += 1,
                    None => groups.push((ch, s, 1)),
                }
            }
            let mut out = vec![linalg::zeros(dv); nw];
            for (ch, s, count) in groups {
                for w in 0..nw {
                    ch.apply_into(w, states[s].block(x, w), count as f64 * inv_rows, &mut out);
                }
            }
            out
        })
        .collect();
    let mut blocks = Vec::with_capacity(first.num_x() * nw);
    for out in per_x {
        for b in out {
            blocks.push(Arc::new(linalg::repair_psd(&b)?));
        }
    }
    Ok(HybridState::from_arcs(first.n(), first.m(), first.q(), blocks, first.tol()))
}

pub fn evolve_step(s: &HybridState, t: usize, prog: &BranchingProgram, matrix: &BiasMatrix) -> Result<HybridState> {
    evolve_mixture(std::slice::from_ref(s), &vec![0; matrix.rows()], t, prog, matrix)
}

/// `Σ_x |x⟩⟨x| ⊗ Φ_{t,a,M(a,x)}(ρ_{VW|x})` for one fixed row `a`.
pub fn apply_row(s: &HybridState, t: usize, a: usize, prog: &BranchingProgram, matrix: &BiasMatrix) -> Result<HybridState> {
    check_state(s, prog, matrix)?;
    let (nw, dv) = (s.num_w(), s.dim_v());
    let mut blocks = Vec::with_capacity(s.num_x() * nw);
    for x in 0..s.num_x() {
        let ch = prog.channel(t, a, matrix.get(a, x));
        let mut out = vec![linalg::zeros(dv); nw];
        for w in 0..nw {
            ch.apply_into(w, s.block(x, w), 1.0, &mut out);
        }
        for b in out {
            blocks.push(Arc::new(linalg::repair_psd(&b)?));
        }
    }
    Ok(HybridState::from_arcs(s.n(), s.m(), s.q(), blocks, s.tol()))
}

/// All states `ρ^{(0)}, …, ρ^{(T)}` of the instance.
pub fn run_program(inst: &LearningInstance, prog: &BranchingProgram) -> Result<Vec<HybridState>> {
    prog.check_against(inst)?;
    let mut states = vec![init_state(inst)];
    for t in 0..inst.steps {
        let next = evolve_step(&states[t], t, prog, &inst.matrix)?;
        states.push(next);
    }
    Ok(states)
}

/// `Σ_{x,v,w : x̃(v,w) = x} ⟨x,v,w|ρ|x,v,w⟩`.
pub fn success_probability(s: &HybridState, prog: &BranchingProgram) -> f64 {
    let mut total = 0.0;
    for w in 0..s.num_w() {
        for v in 0..s.dim_v() {
            let x = prog.guess(v, w);
            if x < s.num_x() {
                total += s.block(x, w)[(v, v)].re;
            }
        }
    }
    total
}

/// Identity channels and the constant guess `x̃ = 0`.
pub fn build_random_guess(inst: &LearningInstance) -> BranchingProgram {
    let id = Arc::new(KrausChannel::identity(inst.q, inst.m));
    let table = ChannelTable::uniform(inst.matrix.rows(), id);
    BranchingProgram::new(inst.q, inst.m, inst.steps, Schedule::Stationary(table), vec![0; 1 << (inst.q + inst.m)])
        .expect("identity program is well formed")
}
