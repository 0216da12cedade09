//! Learning-problem matrices `M : A × X → {−1, +1}` and their extractor
//! properties: submatrix bias, the inner-product Parseval certificate, a
//! falsification search for ℓ₂-extractor violations, and the quantum
//! extractor error against side information that depends only on `a`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cq::DistributionX;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};

/// A ±1 matrix stored row-major; rows are indexed by samples `a`, columns by
/// hidden values `x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<i8>,
}

impl BiasMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<i8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("matrix must be nonempty".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: entries.len() });
        }
        if let Some(e) = entries.iter().find(|&&e| e != 1 && e != -1) {
            return Err(Error::InvalidParameter(format!("entry {e} is not ±1")));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> i8) -> Result<Self> {
        let mut entries = Vec::with_capacity(rows * cols);
        for a in 0..rows {
            for x in 0..cols {
                entries.push(f(a, x));
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `log₂ |X|` when the column count is a power of two.
    pub fn n(&self) -> Option<usize> {
        self.cols.is_power_of_two().then(|| self.cols.trailing_zeros() as usize)
    }

    pub fn get(&self, a: usize, x: usize) -> i8 {
        self.entries[a * self.cols + x]
    }

    pub fn row(&self, a: usize) -> &[i8] {
        &self.entries[a * self.cols..(a + 1) * self.cols]
    }

    /// Parses the text format: `R C` on the first line, then `R` lines of `C`
    /// tokens from `{+1, -1, 1, -1}`. Anything else is rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty matrix file".into() })?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let parse_dim = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse { line: hline + 1, msg: format!("bad dimension {s:?}") })
        };
        if dims.len() != 2 {
            return Err(Error::Parse { line: hline + 1, msg: "header must be `R C`".into() });
        }
        let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
        let mut entries = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (i, line) in lines {
            seen += 1;
            if seen > rows {
                return Err(Error::Parse { line: i + 1, msg: "more rows than declared".into() });
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != cols {
                return Err(Error::Parse { line: i + 1, msg: format!("expected {cols} entries, found {}", toks.len()) });
            }
            for t in toks {
                entries.push(match t {
                    "+1" | "1" => 1,
                    "-1" => -1,
                    other => return Err(Error::Parse { line: i + 1, msg: format!("invalid entry {other:?}") }),
                });
            }
        }
        if seen != rows {
            return Err(Error::Parse { line: hline + 1 + seen, msg: format!("declared {rows} rows, found {seen}") });
        }
        Self::new(rows, cols, entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for a in 0..self.rows {
            let row: Vec<&str> = self.row(a).iter().map(|&e| if e == 1 { "+1" } else { "-1" }).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Extractor exponents `(k, ℓ, r)`, optionally with the primed triple used
/// for the stronger extractor assumed by the main theorem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractorParams {
    pub k: f64,
    pub l: f64,
    pub r: f64,
    pub primed: Option<(f64, f64, f64)>,
}

impl ExtractorParams {
    pub fn new(n: usize, k: f64, l: f64, r: f64) -> Result<Self> {
        if l > n as f64 || l < 0.0 || r < 0.0 || k < 0.0 {
            return Err(Error::InvalidParameter(format!("need 0 ≤ ℓ ≤ n, r ≥ 0, k ≥ 0 (got k={k}, ℓ={l}, r={r})")));
        }
        Ok(Self { k, l, r, primed: None })
    }
}

/// `M(a, x) = (−1)^{a·x}` over 𝔽₂ⁿ.
pub fn inner_product_matrix(n: usize) -> Result<BiasMatrix> {
    if !(1..=12).contains(&n) {
        return Err(Error::InvalidParameter(format!("inner-product size n={n} outside 1..=12")));
    }
    let size = 1usize << n;
    BiasMatrix::from_fn(size, size, |a, x| if (a & x).count_ones() % 2 == 0 { 1 } else { -1 })
}

/// `⟨M_a, P⟩ = Σ_x M_a(x) P(x)`.
pub fn row_correlation(row: &[i8], p: &DistributionX) -> f64 {
    row.iter().zip(p.as_slice()).map(|(&m, &px)| f64::from(m) * px).sum()
}

/// How [`submatrix_bias_scan`] explores row subsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanMode {
    /// Every row subset; capped at 16×16.
    Exhaustive,
    /// `samples` random row subsets; the result is a lower bound.
    Randomized { samples: usize, seed: u64 },
}

fn min_count(total: usize, exponent: f64) -> usize {
    let need = (total as f64) * 2f64.powf(-exponent);
    (need - 1e-9).ceil().max(1.0) as usize
}

/// Best relative bias over column subsets of size ≥ `min_cols`, given the
/// per-column sums of a fixed row subset of size `nrows`. For a fixed size
/// the extreme sums come from the largest / smallest columns, so this is
/// exact.
fn best_columns(col_sums: &mut [i64], nrows: usize, min_cols: usize) -> f64 {
    col_sums.sort_unstable_by(|a, b| b.cmp(a));
    let total = col_sums.len();
    let (mut top, mut bottom) = (0i64, 0i64);
    let mut best = 0.0_f64;
    for j in 1..=total {
        top += col_sums[j - 1];
        bottom += col_sums[total - j];
        if j >= min_cols {
            let mag = top.abs().max(bottom.abs()) as f64;
            best = best.max(mag / (nrows * j) as f64);
        }
    }
    best
}

/// Maximum of `|Σ entries| / area` over submatrices with at least
/// `2^{-k}|A|` rows and `2^{-ℓ}|X|` columns.
pub fn submatrix_bias_scan(m: &BiasMatrix, k: f64, l: f64, mode: ScanMode) -> Result<f64> {
    let (rows, cols) = (m.rows(), m.cols());
    let (rmin, cmin) = (min_count(rows, k).min(rows), min_count(cols, l).min(cols));
    let mut sums = vec![0i64; cols];
    let mut best = 0.0_f64;
    let mut eval_rows = |subset: &[usize], sums: &mut Vec<i64>| {
        sums.iter_mut().for_each(|s| *s = 0);
        for &a in subset {
            for (s, &e) in sums.iter_mut().zip(m.row(a)) {
                *s += i64::from(e);
            }
        }
        best = best.max(best_columns(sums, subset.len(), cmin));
    };
    match mode {
        ScanMode::Exhaustive => {
            if rows > 16 || cols > 16 {
                return Err(Error::SizeCap(format!("exhaustive scan is capped at 16×16, matrix is {rows}×{cols}")));
            }
            let mut subset = Vec::with_capacity(rows);
            for mask in 1u32..(1 << rows) {
                if (mask.count_ones() as usize) < rmin {
                    continue;
                }
                subset.clear();
                subset.extend((0..rows).filter(|&a| mask >> a & 1 == 1));
                eval_rows(&subset, &mut sums);
            }
        }
        ScanMode::Randomized { samples, seed } => {
            let mut rng = crate::rng::substream(seed, "submatrix-bias-scan");
            let mut all: Vec<usize> = (0..rows).collect();
            for _ in 0..samples {
                let size = rng.gen_range(rmin..=rows);
                all.shuffle(&mut rng);
                let subset = all[..size].to_vec();
                eval_rows(&subset, &mut sums);
            }
        }
    }
    Ok(best)
}

/// For the inner-product matrix on `n` bits, returns `k = n − 2ℓ − 2r` such
/// that the matrix is a `(k, ℓ)`-L₂ extractor with error `2^{-r}`.
///
/// Parseval gives `Σ_a ⟨M_a,P⟩² = 2ⁿ‖P‖₂² ≤ 2^{2ℓ}` whenever
/// `‖P‖₂ ≤ 2^ℓ 2^{-n/2}`, so at most `2^{2ℓ+2r}` rows reach correlation
/// `2^{-r}`, a `2^{-k}` fraction.
pub fn parseval_certificate(n: usize, l: f64, r: f64) -> Result<f64> {
    let k = n as f64 - 2.0 * l - 2.0 * r;
    if k <= 0.0 {
        return Err(Error::InvalidParameter(format!("n={n}, ℓ={l}, r={r} give k={k} ≤ 0")));
    }
    Ok(k)
}

/// Outcome of [`l2_violation_search`]; `fraction` is exact for `witness`.
#[derive(Debug, Clone)]
pub struct ViolationSearch {
    pub fraction: f64,
    pub witness: DistributionX,
    pub radius: f64,
    pub restarts: usize,
}

/// Fraction of rows with `|⟨M_a, P⟩| ≥ 2^{-r}`.
pub fn violating_fraction(m: &BiasMatrix, p: &DistributionX, r: f64) -> f64 {
    let thr = 2f64.powf(-r);
    let hits = (0..m.rows()).filter(|&a| row_correlation(m.row(a), p).abs() >= thr * (1.0 - 1e-12)).count();
    hits as f64 / m.rows() as f64
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let (mut cum, mut theta) = (0.0, 0.0);
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Maps onto simplex ∩ ℓ₂-ball: simplex projection, then shrink toward the
/// uniform distribution (the ball's only guaranteed interior point).
fn make_feasible(y: &[f64], radius: f64) -> Vec<f64> {
    let p = project_simplex(y);
    let size = p.len() as f64;
    let u = 1.0 / size;
    let dev2: f64 = p.iter().map(|x| (x - u) * (x - u)).sum();
    let slack = radius * radius - 1.0 / size;
    if dev2 <= slack || dev2 == 0.0 {
        return p;
    }
    let lambda = (slack.max(0.0) / dev2).sqrt() * (1.0 - 1e-12);
    p.iter().map(|x| u + lambda * (x - u)).collect()
}

/// Heuristic search for a distribution with `‖P‖₂ ≤ 2^ℓ 2^{-n/2}` that
/// correlates with many rows: projected gradient ascent on
/// `Σ_a softplus(|⟨M_a,P⟩| − 2^{-r})`. Every candidate is rechecked exactly,
/// so the returned fraction is a certified lower bound on the true maximum.
pub fn l2_violation_search(m: &BiasMatrix, l: f64, r: f64, seed: u64, restarts: usize) -> Result<ViolationSearch> {
    let cols = m.cols();
    if cols > 1 << 10 {
        return Err(Error::SizeCap(format!("violation search supports |X| ≤ 1024, got {cols}")));
    }
    let n = m.n().ok_or_else(|| Error::InvalidParameter("column count must be a power of two".into()))?;
    let radius = 2f64.powf(l) * 2f64.powf(-(n as f64) / 2.0);
    let thr = 2f64.powf(-r);
    let sharp = 40.0 / thr;
    let mut rng = crate::rng::substream(seed, "l2-violation-search");

    let uniform = DistributionX::uniform(n);
    let mut best = ViolationSearch { fraction: violating_fraction(m, &uniform, r), witness: uniform, radius, restarts };
    // Uniform on s points has ℓ₂ norm s^{-1/2}; smaller supports are infeasible.
    let min_support = ((1.0 / (radius * radius) - 1e-9).ceil().max(1.0) as usize).min(cols);

    let consider = |p: &[f64], best: &mut ViolationSearch| {
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > radius * (1.0 + 1e-12) {
            return;
        }
        if let Ok(d) = DistributionX::new(p.to_vec(), 1e-9) {
            let f = violating_fraction(m, &d, r);
            if f > best.fraction {
                *best = ViolationSearch { fraction: f, witness: d, radius, restarts };
            }
        }
    };

    // The most concentrated flat candidate: uniform on a prefix block.
    let mut flat = vec![0.0; cols];
    flat[..min_support].iter_mut().for_each(|v| *v = 1.0 / min_support as f64);
    consider(&flat, &mut best);

    let mut corr = vec![0.0; m.rows()];
    for _ in 0..restarts {
        let support = rng.gen_range(min_support..=cols);
        let mut idx: Vec<usize> = (0..cols).collect();
        idx.shuffle(&mut rng);
        let mut y = vec![0.0; cols];
        for &i in &idx[..support] {
            y[i] = rng.gen::<f64>() + 0.5;
        }
        let total: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= total);
        let mut p = make_feasible(&y, radius);
        let mut step = 0.5 * radius;
        for _ in 0..120 {
            consider(&p, &mut best);
            for (a, ca) in corr.iter_mut().enumerate() {
                *ca = m.row(a).iter().zip(&p).map(|(&e, &px)| f64::from(e) * px).sum();
            }
            let mut grad = vec![0.0; cols];
            for (a, &ca) in corr.iter().enumerate() {
                let z = sharp * (ca.abs() - thr);
                let weight = 1.0 / (1.0 + (-z).exp()) * ca.signum();
                if weight.abs() < 1e-12 {
                    continue;
                }
                for (g, &e) in grad.iter_mut().zip(m.row(a)) {
                    *g += weight * f64::from(e);
                }
            }
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-15 {
                break;
            }
            let y: Vec<f64> = p.iter().zip(&grad).map(|(px, g)| px + step * g / gnorm).collect();
            p = make_feasible(&y, radius);
            step *= 0.97;
        }
        consider(&p, &mut best);
    }
    Ok(best)
}

/// `‖ρ_{M(A,X) X V} − U ⊗ ρ_X ⊗ ρ_V‖_Tr` for uniform `A`, `X` and side
/// information `ρ_{V|a}` depending only on `a`.
pub fn quantum_extractor_error(m: &BiasMatrix, family: &[CMatrix]) -> Result<f64> {
    if family.len() != m.rows() {
        return Err(Error::DimensionMismatch { expected: m.rows(), got: family.len() });
    }
    let dim = family[0].nrows();
    for rho in family {
        if rho.nrows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: rho.nrows() });
        }
        let tr = linalg::trace_re(rho);
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("side-information state has trace {tr}")));
        }
    }
    let (rows, cols) = (m.rows() as f64, m.cols() as f64);
    let mut rho_v = linalg::zeros(dim);
    for rho in family {
        rho_v += rho;
    }
    rho_v /= c(rows);
    let target = &rho_v * c(0.5 / cols);
    let mut total = 0.0;
    for x in 0..m.cols() {
        let mut plus = linalg::zeros(dim);
        let mut minus = linalg::zeros(dim);
        for (a, rho) in family.iter().enumerate() {
            if m.get(a, x) == 1 {
                plus += rho;
            } else {
                minus += rho;
            }
        }
        let scale = c(1.0 / (rows * cols));
        total += linalg::trace_norm_hermitian(&(plus * scale - &target));
        total += linalg::trace_norm_hermitian(&(minus * scale - &target));
    }
    Ok(total)
}
