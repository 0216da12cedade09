//! Maximizing `‖P_{X|v}‖₂²` over directions.
//!
//! In whitened coordinates (`Σ_x K_x = I`) the conditional distribution at a
//! unit vector `y` is `P(x) = y† K_x y`, so the target is the quartic
//! `F(y) = Σ_x (y† K_x y)²`. It is convex in `yy†` but maximized over the
//! sphere, hence non-convex; the search combines a dense grid (two
//! dimensions, via the Bloch sphere) or many random starts (higher
//! dimensions) with the ascent iteration `y ← normalize(Σ_x (y†K_x y) K_x y)`,
//! which never decreases `F`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix, CVector};
use crate::rng;

/// How hard the heuristic searches look. Reports carry the budget because a
/// "no violation found" verdict is only as good as the search behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    /// Grid size on the Bloch sphere for two-dimensional supports.
    pub grid_points: usize,
    /// Random starting points for supports of dimension three or more.
    pub random_starts: usize,
    /// Ascent steps applied to every start before ranking.
    pub warmup_iters: usize,
    /// How many of the best starts are refined to convergence.
    pub refine_top: usize,
    pub refine_iters: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { grid_points: 10_000, random_starts: 1000, warmup_iters: 3, refine_top: 16, refine_iters: 200, seed: 0 }
    }
}

impl SearchBudget {
    /// A smaller budget for bulk suites: 2000 grid points, 200 random starts.
    pub fn reduced(seed: u64) -> Self {
        Self { grid_points: 2000, random_starts: 200, seed, ..Self::default() }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Dense row-major copies of the whitened family, for allocation-free
/// inner loops.
pub(crate) struct Family {
    d: usize,
    mats: Vec<Vec<C64>>,
}

impl Family {
    pub(crate) fn new(mats: &[CMatrix]) -> Self {
        let d = mats.first().map_or(0, |m| m.nrows());
        let mats = mats.iter().map(|m| (0..d * d).map(|i| m[(i / d, i % d)]).collect()).collect();
        Self { d, mats }
    }

    fn mul(&self, k: usize, y: &[C64], out: &mut [C64]) {
        let m = &self.mats[k];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &m[i * self.d..(i + 1) * self.d];
            *o = row.iter().zip(y).map(|(a, b)| a * b).sum();
        }
    }

    fn value(&self, y: &[C64], buf: &mut [C64]) -> f64 {
        (0..self.mats.len())
            .map(|k| {
                self.mul(k, y, buf);
                let p: f64 = y.iter().zip(buf.iter()).map(|(a, b)| (a.conj() * b).re).sum();
                p * p
            })
            .sum()
    }

    /// One ascent step in place; returns the value at the new point.
    fn ascend(&self, y: &mut [C64], buf: &mut [C64], acc: &mut [C64]) -> f64 {
        acc.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
        for k in 0..self.mats.len() {
            self.mul(k, y, buf);
            let p: f64 = y.iter().zip(buf.iter()).map(|(a, b)| (a.conj() * b).re).sum();
            for (a, b) in acc.iter_mut().zip(buf.iter()) {
                *a += b * p;
            }
        }
        let norm = acc.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            for (yi, a) in y.iter_mut().zip(acc.iter()) {
                *yi = a / norm;
            }
        }
        self.value(y, buf)
    }
}

fn bloch_points(count: usize) -> impl Iterator<Item = [f64; 3]> {
    // Fibonacci lattice: near-uniform coverage with no clustering at the poles.
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count).map(move |i| {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
        let rad = (1.0 - z * z).max(0.0).sqrt();
        let phi = golden * i as f64;
        [rad * phi.cos(), rad * phi.sin(), z]
    })
}

fn bloch_to_vector(n: [f64; 3]) -> Vec<C64> {
    let theta = n[2].clamp(-1.0, 1.0).acos();
    let phi = n[1].atan2(n[0]);
    vec![C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)]
}

/// The maximum of `F` found by the search, with its maximizer.
pub fn max_l2_squared(family: &[CMatrix], budget: &SearchBudget, stream: u64) -> (f64, CVector) {
    let fam = Family::new(family);
    let d = fam.d;
    let mut buf = vec![C64::new(0.0, 0.0); d];
    let mut acc = buf.clone();
    if d == 1 {
        let y = vec![C64::new(1.0, 0.0)];
        return (fam.value(&y, &mut buf), CVector::from_vec(y));
    }
    let mut starts: Vec<(f64, Vec<C64>)> = Vec::new();
    if d == 2 {
        // P(x) = t_x/2 + k_x·n on the Bloch sphere: evaluate without matrices.
        let coeffs: Vec<[f64; 4]> = family
            .iter()
            .map(|k| {
                let (a, b, dd) = (k[(0, 0)].re, k[(0, 1)], k[(1, 1)].re);
                [(a + dd) / 2.0, b.re, -b.im, (a - dd) / 2.0]
            })
            .collect();
        let mut graded: Vec<(f64, [f64; 3])> = bloch_points(budget.grid_points.max(1))
            .map(|n| {
                let f = coeffs.iter().map(|c| (c[0] + c[1] * n[0] + c[2] * n[1] + c[3] * n[2]).powi(2)).sum();
                (f, n)
            })
            .collect();
        graded.sort_by(|a, b| b.0.total_cmp(&a.0));
        starts.extend(graded.into_iter().take(budget.refine_top.max(1)).map(|(f, n)| (f, bloch_to_vector(n))));
    } else {
        let mut r = rng::trial_stream(budget.seed, "l2-search", stream);
        let mut candidates: Vec<Vec<C64>> =
            family.iter().map(|k| linalg::top_eigenpair(k).1.iter().copied().collect()).collect();
        for _ in 0..budget.random_starts {
            candidates.push(rng::random_unit_vector(d, &mut r).iter().copied().collect());
        }
        for mut y in candidates {
            let mut f = fam.value(&y, &mut buf);
            for _ in 0..budget.warmup_iters {
                f = fam.ascend(&mut y, &mut buf, &mut acc);
            }
            starts.push((f, y));
        }
        starts.sort_by(|a, b| b.0.total_cmp(&a.0));
        starts.truncate(budget.refine_top.max(1));
    }
    let mut best = (f64::NEG_INFINITY, vec![C64::new(0.0, 0.0); d]);
    for (mut f, mut y) in starts {
        for _ in 0..budget.refine_iters {
            let next = fam.ascend(&mut y, &mut buf, &mut acc);
            let done = next - f <= 1e-15 * next.abs().max(1e-300);
            f = next;
            if done {
                break;
            }
        }
        if f > best.0 {
            best = (f, y);
        }
    }
    (best.0, CVector::from_vec(best.1))
}
