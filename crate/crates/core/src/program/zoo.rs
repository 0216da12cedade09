//! Baseline programs: hand-built learners and random ones.
//!
//! The hand-built learners only look at the row that reveals the lowest bit
//! of `x` directly (`M(a, x) = (−1)^{x₀}`; row 1 of the inner-product matrix)
//! and guess the remaining bits as zero.

use std::f64::consts::FRAC_PI_8;
use std::sync::Arc;

use rand::Rng;

use super::{BranchingProgram, ChannelTable, KrausChannel, LearningInstance, Schedule};
use crate::error::{Error, Result};
use crate::extractor::BiasMatrix;
use crate::linalg::{self, c, CMatrix};
use crate::rng;

/// The row whose sample equals `(−1)^{x₀}`.
pub fn bit_revealing_row(matrix: &BiasMatrix) -> Option<usize> {
    (0..matrix.rows()).find(|&a| (0..matrix.cols()).all(|x| matrix.get(a, x) == if x & 1 == 0 { 1 } else { -1 }))
}

fn revealing_row(inst: &LearningInstance) -> Result<usize> {
    bit_revealing_row(&inst.matrix).ok_or_else(|| Error::Unsupported("matrix has no row revealing a single bit of x".into()))
}

fn require_memory(inst: &LearningInstance, q: usize, m: usize, name: &str) -> Result<()> {
    if inst.q != q || inst.m != m {
        return Err(Error::Unsupported(format!("{name} needs q={q}, m={m}; instance has q={}, m={}", inst.q, inst.m)));
    }
    Ok(())
}

/// Per-step tables: `on_bit(b)` on the revealing row, `reset` elsewhere at
/// `t = 0` and the identity elsewhere afterwards.
fn bit_schedule(inst: &LearningInstance, on_bit: impl Fn(i8) -> Arc<KrausChannel>, reset: Arc<KrausChannel>) -> Result<Schedule> {
    let row = revealing_row(inst)?;
    let id = Arc::new(KrausChannel::identity(inst.q, inst.m));
    let (plus, minus) = (on_bit(1), on_bit(-1));
    let tables = (0..inst.steps.max(1))
        .map(|t| {
            ChannelTable::from_fn(inst.matrix.rows(), |a, b| match (a == row, b, t) {
                (true, 1, _) => plus.clone(),
                (true, _, _) => minus.clone(),
                (false, _, 0) => reset.clone(),
                _ => id.clone(),
            })
        })
        .collect();
    Ok(Schedule::PerStep(tables))
}

/// `q = 0, m = 1`: stores the revealed bit classically, `w ← [b = −1]`.
pub fn one_sample_bit(inst: &LearningInstance) -> Result<BranchingProgram> {
    require_memory(inst, 0, 1, "one-sample-bit")?;
    let write = |bit: usize| Arc::new(KrausChannel::classical_map(0, 1, &[bit, bit]).expect("constant table"));
    let schedule = bit_schedule(inst, |b| write(usize::from(b == -1)), write(0))?;
    BranchingProgram::new(0, 1, inst.steps.max(1), schedule, vec![0, 1])
}

fn prepare_then(u: &CMatrix, state: usize) -> Result<KrausChannel> {
    let per_w = vec![(0..2)
        .map(|i| {
            let mut k = linalg::zeros(2);
            k[(state, i)] = c(1.0);
            (0, u * k)
        })
        .collect()];
    KrausChannel::from_sectors(1, 0, per_w)
}

fn ry(theta: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    CMatrix::from_row_slice(2, 2, &[c(co), c(-s), c(s), c(co)])
}

/// `q = 1, m = 0`: overwrites the qubit with `|[b = −1]⟩`.
pub fn greedy_store(inst: &LearningInstance) -> Result<BranchingProgram> {
    require_memory(inst, 1, 0, "greedy-store")?;
    let prep = |v: usize| Arc::new(KrausChannel::prepare(1, 0, v, 0).expect("valid preparation"));
    let schedule = bit_schedule(inst, |b| prep(usize::from(b == -1)), prep(0))?;
    BranchingProgram::new(1, 0, inst.steps.max(1), schedule, vec![0, 1])
}

/// `q = 1, m = 0`: starts from `|0⟩` and rotates by `±angle` about `Y` on
/// every revealed bit, so repeated evidence accumulates coherently.
pub fn rotate_accumulate(inst: &LearningInstance, angle: f64) -> Result<BranchingProgram> {
    require_memory(inst, 1, 0, "rotate-accumulate")?;
    let row = revealing_row(inst)?;
    let rot = |b: i8| ry(if b == -1 { angle } else { -angle });
    let id = Arc::new(KrausChannel::identity(1, 0));
    let reset = Arc::new(prepare_then(&linalg::identity(2), 0)?);
    let start = [Arc::new(prepare_then(&rot(1), 0)?), Arc::new(prepare_then(&rot(-1), 0)?)];
    let later = [Arc::new(KrausChannel::unitary(1, 0, &rot(1))?), Arc::new(KrausChannel::unitary(1, 0, &rot(-1))?)];
    let tables = (0..inst.steps.max(1))
        .map(|t| {
            ChannelTable::from_fn(inst.matrix.rows(), |a, b| {
                let i = usize::from(b == -1);
                match (a == row, t) {
                    (true, 0) => start[i].clone(),
                    (true, _) => later[i].clone(),
                    (false, 0) => reset.clone(),
                    _ => id.clone(),
                }
            })
        })
        .collect();
    BranchingProgram::new(1, 0, inst.steps.max(1), Schedule::PerStep(tables), vec![0, 1])
}

/// `q = 1, m = 0`: with probability `p` replaces the qubit by `|[b = −1]⟩`,
/// otherwise keeps it.
pub fn dephase_vote(inst: &LearningInstance, p: f64) -> Result<BranchingProgram> {
    require_memory(inst, 1, 0, "dephase-vote")?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("replacement probability {p} outside [0, 1]")));
    }
    let vote = |b: i8| {
        let target = usize::from(b == -1);
        let mut ops: Vec<(usize, CMatrix)> = (0..2)
            .map(|i| {
                let mut k = linalg::zeros(2);
                k[(target, i)] = c(p.sqrt());
                (0, k)
            })
            .collect();
        ops.push((0, linalg::identity(2) * c((1.0 - p).sqrt())));
        Arc::new(KrausChannel::from_sectors(1, 0, vec![ops]).expect("valid vote channel"))
    };
    let reset = Arc::new(KrausChannel::prepare(1, 0, 0, 0)?);
    let schedule = bit_schedule(inst, vote, reset)?;
    BranchingProgram::new(1, 0, inst.steps.max(1), schedule, vec![0, 1])
}

/// The memory-only programs used for the side-information bound: all have
/// one qubit and no classical bits.
pub fn qubit_zoo(inst: &LearningInstance) -> Result<Vec<(&'static str, BranchingProgram)>> {
    require_memory(inst, 1, 0, "qubit zoo")?;
    Ok(vec![
        ("random-guess", super::build_random_guess(inst)),
        ("greedy-store", greedy_store(inst)?),
        ("rotate-accumulate", rotate_accumulate(inst, FRAC_PI_8)?),
        ("dephase-vote", dephase_vote(inst, 0.5)?),
    ])
}

/// A random channel: per input label, `kraus` Gaussian operators each
/// aimed at a random output label, normalized by `(Σ G†G)^{-1/2}`.
pub fn random_channel<R: Rng + ?Sized>(q: usize, m: usize, kraus: usize, rng: &mut R) -> Result<KrausChannel> {
    let dv = 1usize << q;
    let per_w = (0..1usize << m)
        .map(|_| {
            let raw: Vec<(usize, CMatrix)> =
                (0..kraus.max(1)).map(|_| (rng.gen_range(0..1usize << m), rng::gaussian_matrix(dv, dv, rng))).collect();
            let mut gram = linalg::zeros(dv);
            for (_, g) in &raw {
                gram += g.adjoint() * g;
            }
            let inv_sqrt = linalg::spectral_map(&gram, |l| 1.0 / l.sqrt());
            raw.into_iter().map(|(t, g)| (t, g * &inv_sqrt)).collect()
        })
        .collect();
    KrausChannel::from_sectors(q, m, per_w)
}

/// A program with an independent random channel for every `(t, a, b)` and
/// random guesses.
pub fn random_program<R: Rng + ?Sized>(inst: &LearningInstance, kraus: usize, rng: &mut R) -> Result<BranchingProgram> {
    let steps = inst.steps.max(1);
    let mut tables = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut channels = Vec::with_capacity(2 * inst.matrix.rows());
        for _ in 0..2 * inst.matrix.rows() {
            channels.push(Arc::new(random_channel(inst.q, inst.m, kraus, rng)?));
        }
        let mut it = channels.into_iter();
        tables.push(ChannelTable::from_fn(inst.matrix.rows(), |_, _| it.next().expect("two channels per row")));
    }
    let output = (0..1usize << (inst.q + inst.m)).map(|_| rng.gen_range(0..inst.matrix.cols())).collect();
    BranchingProgram::new(inst.q, inst.m, steps, Schedule::PerStep(tables), output)
}
