//! Purely classical learners, simulated on their own state space.
//!
//! Encoding Gaussian elimination as channels on `2^m` labels is hopeless
//! (`m` grows like `n²`), so classical learners get a separate path: the
//! joint distribution of `(x, memory)` is tracked sparsely over the states
//! that are actually reachable.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LearningInstance;
use crate::error::{Error, Result};
use crate::extractor::{inner_product_matrix, BiasMatrix};
use crate::rng;

/// States above this count abort the exact tracker.
pub const EXACT_STATE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    GaussElim,
    Majority,
    Counter,
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-elim" => Ok(Self::GaussElim),
            "majority" => Ok(Self::Majority),
            "counter" => Ok(Self::Counter),
            other => Err(Error::Unsupported(format!("unknown classical learner '{other}'"))),
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GaussElim => "gauss-elim",
            Self::Majority => "majority",
            Self::Counter => "counter",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum SuccessMode {
    /// Sparse enumeration of every reachable `(x, memory)` pair.
    Exact,
    /// Gaussian elimination on the inner-product matrix only: the rank of the
    /// collected rows is a sufficient statistic, giving an exact Markov chain.
    RankChain,
    MonteCarlo { trials: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOutcome {
    pub kind: LearnerKind,
    pub mode: SuccessMode,
    pub success: f64,
    /// Zero for the exact modes.
    pub std_error: f64,
    /// Largest number of `(x, memory)` pairs tracked at once (exact mode).
    pub peak_states: usize,
}

trait Learner {
    type State: Clone + Ord;
    fn init(&self) -> Self::State;
    fn update(&self, s: &Self::State, a: usize, b: i8) -> Self::State;
    fn guess(&self, s: &Self::State) -> usize;
}

/// Row-reduced echelon form over `F₂` of the collected equations
/// `⟨a, x⟩ = bit`; each row packs `a` in the low `n` bits and the bit above.
struct GaussElim {
    n: usize,
}

impl Learner for GaussElim {
    type State = Vec<u64>;

    fn init(&self) -> Vec<u64> {
        Vec::new()
    }

    fn update(&self, rows: &Vec<u64>, a: usize, b: i8) -> Vec<u64> {
        let mask = (1u64 << self.n) - 1;
        let mut r = a as u64 | (u64::from(b == -1) << self.n);
        for &row in rows {
            let pivot = 63 - (row & mask).leading_zeros();
            if r >> pivot & 1 == 1 {
                r ^= row;
            }
        }
        if r & mask == 0 {
            return rows.clone();
        }
        let pivot = 63 - (r & mask).leading_zeros();
        let mut out: Vec<u64> = rows.iter().map(|&row| if row >> pivot & 1 == 1 { row ^ r } else { row }).collect();
        out.push(r);
        out.sort_unstable();
        out
    }

    /// Free variables set to zero: each pivot variable equals its row's bit.
    fn guess(&self, rows: &Vec<u64>) -> usize {
        let mask = (1u64 << self.n) - 1;
        rows.iter()
            .map(|&row| {
                let pivot = 63 - (row & mask).leading_zeros();
                ((row >> self.n) & 1) << pivot
            })
            .fold(0, |acc, bit| acc | bit as usize)
    }
}

/// Per-coordinate vote over samples whose row contains that coordinate:
/// tally `+1` for `b = −1`, `−1` for `b = 1`; guess 1 on a positive tally.
struct Majority {
    n: usize,
}

impl Learner for Majority {
    type State = Vec<i32>;

    fn init(&self) -> Vec<i32> {
        vec![0; self.n]
    }

    fn update(&self, s: &Vec<i32>, a: usize, b: i8) -> Vec<i32> {
        let mut out = s.clone();
        for (i, tally) in out.iter_mut().enumerate() {
            if a >> i & 1 == 1 {
                *tally += if b == -1 { 1 } else { -1 };
            }
        }
        out
    }

    fn guess(&self, s: &Vec<i32>) -> usize {
        s.iter().enumerate().filter(|(_, &t)| t > 0).fold(0, |acc, (i, _)| acc | 1 << i)
    }
}

/// Only learns from unit rows `a = e_i`, recording the revealed bit and
/// counting how many coordinates are known.
struct Counter;

impl Learner for Counter {
    /// `(known mask, known values)`.
    type State = (usize, usize);

    fn init(&self) -> (usize, usize) {
        (0, 0)
    }

    fn update(&self, &(known, vals): &(usize, usize), a: usize, b: i8) -> (usize, usize) {
        if a.count_ones() != 1 || known & a != 0 {
            return (known, vals);
        }
        (known | a, if b == -1 { vals | a } else { vals })
    }

    fn guess(&self, &(_, vals): &(usize, usize)) -> usize {
        vals
    }
}

fn exact<L: Learner>(learner: &L, matrix: &BiasMatrix, steps: usize) -> Result<(f64, usize)> {
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let mut dist: BTreeMap<(usize, L::State), f64> = (0..cols).map(|x| ((x, learner.init()), 1.0 / cols as f64)).collect();
    let mut peak = dist.len();
    for _ in 0..steps {
        let mut next: BTreeMap<(usize, L::State), f64> = BTreeMap::new();
        for ((x, s), p) in &dist {
            let share = p / rows as f64;
            for a in 0..rows {
                *next.entry((*x, learner.update(s, a, matrix.get(a, *x)))).or_insert(0.0) += share;
            }
            if next.len() > EXACT_STATE_CAP {
                return Err(Error::SizeCap(format!("more than {EXACT_STATE_CAP} reachable states; use Monte Carlo")));
            }
        }
        dist = next;
        peak = peak.max(dist.len());
    }
    let success = dist.iter().filter(|((x, s), _)| learner.guess(s) == *x).map(|(_, p)| p).sum();
    Ok((success, peak))
}

fn monte_carlo<L: Learner>(learner: &L, matrix: &BiasMatrix, steps: usize, trials: usize, seed: u64) -> (f64, f64) {
    let mut r = rng::substream(seed, "classical-learner");
    let mut hits = 0usize;
    for _ in 0..trials {
        let x = r.gen_range(0..matrix.cols());
        let mut s = learner.init();
        for _ in 0..steps {
            let a = r.gen_range(0..matrix.rows());
            s = learner.update(&s, a, matrix.get(a, x));
        }
        hits += usize::from(learner.guess(&s) == x);
    }
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// Exact success of Gaussian elimination on uniform rows of `F₂^n`: rank
/// grows from `r` with probability `1 − 2^{r−n}`; at rank `r` the zero-filled
/// solution is right with probability `2^{r−n}`.
pub fn gauss_elim_rank_chain(n: usize, steps: usize) -> f64 {
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    for _ in 0..steps {
        let mut next = vec![0.0; n + 1];
        for (r, &mass) in p.iter().enumerate() {
            let stay = 2f64.powi(r as i32 - n as i32);
            next[r] += mass * stay;
            if r < n {
                next[r + 1] += mass * (1.0 - stay);
            }
        }
        p = next;
    }
    p.iter().enumerate().map(|(r, mass)| mass * 2f64.powi(r as i32 - n as i32)).sum()
}

fn run<L: Learner>(learner: &L, inst: &LearningInstance, kind: LearnerKind, mode: SuccessMode) -> Result<ClassicalOutcome> {
    let (success, std_error, peak_states) = match mode {
        SuccessMode::Exact => {
            let (p, peak) = exact(learner, &inst.matrix, inst.steps)?;
            (p, 0.0, peak)
        }
        SuccessMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::InvalidParameter("Monte Carlo needs at least one trial".into()));
            }
            let (p, se) = monte_carlo(learner, &inst.matrix, inst.steps, trials, seed);
            (p, se, 0)
        }
        SuccessMode::RankChain => {
            if kind != LearnerKind::GaussElim || *inst.matrix != inner_product_matrix(inst.n)? {
                return Err(Error::Unsupported("the rank chain applies to gauss-elim on the inner-product matrix only".into()));
            }
            (gauss_elim_rank_chain(inst.n, inst.steps), 0.0, 0)
        }
    };
    Ok(ClassicalOutcome { kind, mode, success, std_error, peak_states })
}

/// Success probability of a classical learner on `inst` (memory sizes of the
/// instance are ignored: the learner keeps whatever it needs).
pub fn build_classical_learner(inst: &LearningInstance, kind: LearnerKind, mode: SuccessMode) -> Result<ClassicalOutcome> {
    if inst.matrix.rows() != inst.matrix.cols() {
        return Err(Error::Unsupported("classical learners read rows as vectors in F₂^n".into()));
    }
    match kind {
        LearnerKind::GaussElim => run(&GaussElim { n: inst.n }, inst, kind, mode),
        LearnerKind::Majority => run(&Majority { n: inst.n }, inst, kind, mode),
        LearnerKind::Counter => run(&Counter, inst, kind, mode),
    }
}
