//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! fails. Runs without the libtest harness so the lines come out in order.
//!
//! Every criterion records the numbers it measured; criterion 16 reruns
//! 1–15 on a different thread count and compares those records bit for
//! bit, then does the same for the `qlml` binary's reports.

use std::cell::OnceCell;
use std::process::Command;
use std::time::Instant;

use qlml_core::badness::{self, BadnessParams, BadnessRegister, BadnessTrace, TargetDistribution};
use qlml_core::cq::{self, DistributionX, HybridState};
use qlml_core::lab::{self, ParameterSet};
use qlml_core::linalg::{self, CMatrix};
use qlml_core::program::classical::{build_classical_learner, LearnerKind, SuccessMode};
use qlml_core::program::{self, zoo, LearningInstance};
use qlml_core::rng::{self, StreamRng};
use qlml_core::truncation::{
    self, pipeline_stage, run_truncated, PipelineParams, Predicate, SearchBudget, TruncatedRun,
};
use rand::Rng;

const SEED: u64 = 20240601;
const SLACK: f64 = 1e-8;

/// Measured values, kept for the determinism comparison.
#[derive(Default)]
struct Log {
    values: Vec<u64>,
}

impl Log {
    fn push(&mut self, x: f64) -> f64 {
        self.values.push(x.to_bits());
        x
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Res = Result<Outcome, qlml_core::Error>;

fn stream(label: &str, i: u64) -> StreamRng {
    rng::trial_stream(SEED, label, i)
}

/// A random state with skewed `(x, w)` weights and random-rank blocks.
fn random_state(n: usize, m: usize, q: usize, r: &mut StreamRng) -> HybridState {
    let dv = 1 << q;
    let weights: Vec<Vec<f64>> = (0..1usize << n).map(|_| (0..1usize << m).map(|_| r.gen::<f64>().powi(3) + 1e-3).collect()).collect();
    let total: f64 = weights.iter().flatten().sum();
    let blocks: Vec<Vec<CMatrix>> = weights
        .iter()
        .map(|row| {
            row.iter()
                .map(|&wt| {
                    let rank = r.gen_range(1..=dv);
                    rng::random_psd(dv, rank, wt / total, r)
                })
                .collect()
        })
        .collect();
    HybridState::from_fn(n, m, q, |x, w| blocks[x][w].clone()).expect("valid random state")
}

fn x_marginal_gap(s: &HybridState) -> f64 {
    let uniform = 1.0 / s.num_x() as f64;
    (0..s.num_x())
        .map(|x| ((0..s.num_w()).map(|w| linalg::trace_re(s.block(x, w))).sum::<f64>() - uniform).abs())
        .fold(0.0, f64::max)
}

/// Small truncated runs with their badness replay, shared by 10, 12 and 13.
struct RunData {
    inst: LearningInstance,
    params: PipelineParams,
    run: TruncatedRun,
    trace: BadnessTrace,
    target: TargetDistribution,
}

#[derive(Default)]
struct Ctx {
    runs: OnceCell<Vec<RunData>>,
}

impl Ctx {
    fn runs(&self) -> Result<&[RunData], qlml_core::Error> {
        if self.runs.get().is_none() {
            let mut out = Vec::new();
            for i in 0..10u64 {
                let mut r = stream("truncated-runs", i);
                let (n, m) = if i < 7 { (3, (i % 2) as usize) } else { (4, 0) };
                let inst = LearningInstance::inner_product(n, 1, m, 3)?;
                let prog = zoo::random_program(&inst, 2, &mut r)?;
                let params = PipelineParams::new(n, r.gen_range(0.3..0.8), r.gen_range(1.0..2.5))?;
                let run = run_truncated(&inst, &prog, &params, &SearchBudget::reduced(SEED + i))?;
                let flows = badness::run_flows(&run, &prog, &inst.matrix);
                let weights: Vec<f64> = (0..1usize << n).map(|_| r.gen::<f64>() + 0.2).collect();
                let target = TargetDistribution::unchecked(DistributionX::from_weights(&weights)?, params.ell);
                let trace = badness::replay(&inst, &run, &flows, &target, &BadnessParams::new(params), None)?;
                out.push(RunData { inst, params, run, trace, target });
            }
            let _ = self.runs.set(out);
        }
        Ok(self.runs.get().expect("just set"))
    }
}

fn c1_random_guess(_: &Ctx, log: &mut Log) -> Res {
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        let inst = LearningInstance::inner_product(n, 1, 1, 3)?;
        let prog = program::build_random_guess(&inst);
        let states = program::run_program(&inst, &prog)?;
        let p = program::success_probability(states.last().expect("final state"), &prog);
        worst = worst.max(log.push((p - (-(n as f64)).exp2()).abs()));
    }
    Ok(outcome(worst <= 1e-12, format!("n = 1..8, max |success − 2^-n| = {worst:.2e}")))
}

fn c2_one_sample(_: &Ctx, log: &mut Log) -> Res {
    let inst = LearningInstance::inner_product(1, 0, 1, 1)?;
    let prog = zoo::one_sample_bit(&inst)?;
    let states = program::run_program(&inst, &prog)?;
    let p = log.push(program::success_probability(&states[1], &prog));
    // Best deterministic guess g(a, b) over the four equally likely (a, x).
    let m = &inst.matrix;
    let mut best: f64 = 0.0;
    for g in 0..16usize {
        let guess = |a: usize, b: i8| (g >> (2 * a + usize::from(b == -1))) & 1;
        let hits = (0..2).flat_map(|a| (0..2).map(move |x| (a, x))).filter(|&(a, x)| guess(a, m.get(a, x)) == x).count();
        best = best.max(hits as f64 / 4.0);
    }
    log.push(best);
    let pass = (p - 0.75).abs() <= 1e-12 && (best - 0.75).abs() <= 1e-12;
    Ok(outcome(pass, format!("program {p}, brute-force optimum {best}")))
}

fn rank_of(rows: &[u8]) -> usize {
    let mut basis = [0u8; 8];
    let mut rank = 0;
    for &row in rows {
        let mut v = row;
        for bit in (0..8).rev() {
            if v >> bit & 1 == 0 {
                continue;
            }
            if basis[bit] == 0 {
                basis[bit] = v;
                rank += 1;
                break;
            }
            v ^= basis[bit];
        }
    }
    rank
}

fn c3_gauss_elim(_: &Ctx, log: &mut Log) -> Res {
    let (n, steps, trials) = (8usize, 28usize, 100_000usize);
    let inst = LearningInstance::inner_product(n, 0, 0, steps)?;
    let learner = log.push(build_classical_learner(&inst, LearnerKind::GaussElim, SuccessMode::RankChain)?.success);
    let mut r = stream("rank-oracle", 0);
    let full = (0..trials)
        .filter(|_| {
            let rows: Vec<u8> = (0..steps).map(|_| r.gen()).collect();
            rank_of(&rows) == n
        })
        .count();
    let oracle = log.push(full as f64 / trials as f64);
    // Laplace-smoothed rate, so an all-success estimate keeps a nonzero error.
    let smoothed = (full as f64 + 1.0) / (trials as f64 + 2.0);
    let se = (smoothed * (1.0 - smoothed) / trials as f64).sqrt();
    let product: f64 = (0..n).map(|i| 1.0 - 2f64.powi(i as i32 - steps as i32)).product();
    log.push(product);
    let pass = (learner - oracle).abs() <= 2.0 * se && (product - oracle).abs() <= 2.0 * se;
    Ok(outcome(pass, format!("learner {learner:.8}, rank oracle {oracle:.8} ± {se:.1e}, product {product:.8}")))
}

fn c4_uniform_marginal(_: &Ctx, log: &mut Log) -> Res {
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let mut r = stream("marginal", i);
        let inst = LearningInstance::inner_product(r.gen_range(1..=3), r.gen_range(0..=1), r.gen_range(0..=1), 4)?;
        let prog = zoo::random_program(&inst, r.gen_range(1..=3), &mut r)?;
        for s in program::run_program(&inst, &prog)? {
            worst = worst.max(x_marginal_gap(&s));
        }
    }
    log.push(worst);
    Ok(outcome(worst <= 1e-9, format!("20 programs, max marginal deviation {worst:.2e}")))
}

fn c5_contractivity(_: &Ctx, log: &mut Log) -> Res {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100u64 {
        let mut r = stream("contractivity", i);
        let (n, m, q) = (r.gen_range(1..=3), r.gen_range(0..=1), r.gen_range(0..=2));
        let inst = LearningInstance::inner_product(n, q, m, 1)?;
        let prog = zoo::random_program(&inst, r.gen_range(1..=3), &mut r)?;
        let (a, b) = (random_state(n, m, q, &mut r), random_state(n, m, q, &mut r));
        let before = cq::trace_distance(&a, &b)?;
        let after = cq::trace_distance(
            &program::evolve_step(&a, 0, &prog, &inst.matrix)?,
            &program::evolve_step(&b, 0, &prog, &inst.matrix)?,
        )?;
        worst = worst.max(after - before);
    }
    log.push(worst);
    Ok(outcome(worst <= 1e-9, format!("100 pairs, max increase {worst:.2e}")))
}

fn c6_projection(_: &Ctx, log: &mut Log) -> Res {
    let (mut violations, mut margin) = (0, f64::INFINITY);
    for i in 0..1000u64 {
        let mut r = stream("projection", i);
        let d = r.gen_range(1..=16);
        let rho = rng::random_psd(d, r.gen_range(1..=d), r.gen_range(0.05..1.0), &mut r);
        let proj = rng::random_projector(d, r.gen_range(0..=d), &mut r);
        let c = lab::projection_distance_check(&rho, &proj, SLACK)?;
        violations += usize::from(!c.holds());
        margin = margin.min(log.push(c.margin()));
    }
    Ok(outcome(violations == 0, format!("1000 pairs, {violations} violations, min margin {margin:.2e}")))
}

fn c7_fvdg(_: &Ctx, log: &mut Log) -> Res {
    let (mut violations, mut margin) = (0, f64::INFINITY);
    for i in 0..1000u64 {
        let mut r = stream("fvdg", i);
        let d = r.gen_range(1..=16);
        let rho = rng::random_psd(d, r.gen_range(1..=d), r.gen_range(0.05..1.0), &mut r);
        let sigma = rng::random_psd(d, r.gen_range(1..=d), r.gen_range(0.0..1.0) * linalg::trace_re(&rho), &mut r);
        for c in lab::fvdg_variant_check(&rho, &sigma, SLACK)? {
            violations += usize::from(!c.holds());
            margin = margin.min(log.push(c.margin()));
        }
    }
    Ok(outcome(violations == 0, format!("1000 pairs, {violations} violations, min margin {margin:.2e}")))
}

/// Criteria 8 and 9 share the truncations.
struct TruncationSuite {
    residual_worst: f64,
    id_dist_worst: f64,
    accounting_worst: f64,
    accounting_ratio: f64,
    removed: usize,
    states: usize,
}

fn truncation_suite(log: &mut Log) -> Result<TruncationSuite, qlml_core::Error> {
    let mut s = TruncationSuite { residual_worst: 0.0, id_dist_worst: 0.0, accounting_worst: f64::NEG_INFINITY, accounting_ratio: 0.0, removed: 0, states: 0 };
    for i in 0..100u64 {
        let mut r = stream("truncation", i);
        let (n, q, m) = (r.gen_range(2..=6), r.gen_range(1..=2), r.gen_range(0..=3));
        let state = random_state(n, m, q, &mut r);
        let theta = PipelineParams::new(n, r.gen_range(0.2..1.2), 1.0)?.theta_l2();
        let pred = Predicate::L2 { theta };
        let outcome = truncation::truncate(&state, &pred, &SearchBudget::default().with_seed(SEED + i))?;
        let residual = truncation::residual_violation(&outcome.state, &pred, &SearchBudget::default().with_seed(!(SEED + i)))?;
        let excess = residual.map_or(0.0, |(_, v)| v.value / theta - 1.0);
        s.residual_worst = s.residual_worst.max(log.push(excess));
        let id = truncation::check_id_dist(&state, &outcome, 10, SEED + i)?;
        s.id_dist_worst = s.id_dist_worst.max(log.push(id.max_deviation));
        for row in truncation::removal_accounting(&state, &outcome)? {
            s.accounting_worst = s.accounting_worst.max(log.push(row.measured - row.bound));
            if row.bound > 0.0 {
                s.accounting_ratio = s.accounting_ratio.max(row.measured / row.bound);
            }
        }
        s.removed += outcome.removed.len();
        s.states += 1;
    }
    Ok(s)
}

fn c8_9_truncation(log: &mut Log) -> Result<(Outcome, Outcome), qlml_core::Error> {
    let s = truncation_suite(log)?;
    let c8 = outcome(
        s.residual_worst <= 1e-6 && s.id_dist_worst <= SLACK,
        format!(
            "{} states, {} directions removed, worst residual excess {:.2e}, worst id-dist gap {:.2e}",
            s.states, s.removed, s.residual_worst, s.id_dist_worst
        ),
    );
    let c9 = outcome(s.accounting_worst <= SLACK, format!("max distance − bound {:.3e}, max distance / bound {:.3}", s.accounting_worst, s.accounting_ratio));
    Ok((c8, c9))
}

fn c10_markov(ctx: &Ctx, log: &mut Log) -> Res {
    let (mut checked, mut skipped, mut worst) = (0, 0, f64::NEG_INFINITY);
    let mut consider = |stage: &truncation::PipelineStage, p: &PipelineParams, budget: &SearchBudget| -> Result<(), qlml_core::Error> {
        let theta = p.theta_l2();
        let residual = truncation::residual_violation(&stage.star.state, &Predicate::L2 { theta }, budget)?;
        if residual.is_some_and(|(_, v)| v.value > theta * (1.0 + 1e-6)) {
            skipped += 1;
            return Ok(());
        }
        checked += 1;
        let dropped = stage.report.g_dropped.iter().copied().fold(0.0, f64::max);
        worst = worst.max(log.push(dropped - (-5.0 * p.r).exp2()));
        Ok(())
    };
    for i in 0..30u64 {
        let mut r = stream("markov", i);
        let (n, q, m) = (r.gen_range(2..=4), r.gen_range(0..=1), r.gen_range(0..=1));
        let state = random_state(n, m, q, &mut r);
        let p = PipelineParams::new(n, r.gen_range(0.2..1.0), r.gen_range(0.05..0.6))?;
        let matrix = qlml_core::extractor::inner_product_matrix(n)?;
        let stage = pipeline_stage(&state, &p, &matrix, &SearchBudget::reduced(SEED + i))?;
        consider(&stage, &p, &SearchBudget::reduced(!(SEED + i)))?;
    }
    for (i, d) in ctx.runs()?.iter().enumerate() {
        for step in &d.run.steps {
            consider(&step.stage, &d.params, &SearchBudget::reduced(!(SEED + i as u64)))?;
        }
    }
    Ok(outcome(
        checked > 0 && worst <= SLACK,
        format!("{checked} stages ({skipped} without the postcondition), max dropped − 2^-5r {worst:.3e}"),
    ))
}

fn c11_anticoncentration(_: &Ctx, log: &mut Log) -> Res {
    let grid = [1e-4, 1e-3, 1e-2, 0.04, 0.09];
    let (samples, mut violations, mut ratio) = (100_000usize, 0, 0.0f64);
    for i in 0..5u64 {
        let sigma = rng::random_hermitian(8, &mut stream("anti-sigma", i));
        for (j, &eps) in grid.iter().enumerate() {
            let est = lab::anticoncentration_estimate(&sigma, eps, samples, SEED + 10 * i + j as u64, 10.0)?;
            log.push(est.probability);
            violations += usize::from(!est.holds());
            ratio = ratio.max(est.probability / est.bound);
        }
    }
    let mut worst_z = 0.0f64;
    for i in 0..3u64 {
        let sigma = rng::random_hermitian(2, &mut stream("anti-qubit", i));
        for (j, &eps) in grid.iter().enumerate() {
            let exact = lab::closed_form_qubit(&sigma, eps)?;
            let est = lab::anticoncentration_estimate(&sigma, eps, samples, SEED + 100 + 10 * i + j as u64, 10.0)?;
            log.push(est.probability);
            let se = (exact * (1.0 - exact) / samples as f64).sqrt();
            let gap = (est.probability - exact).abs();
            let z = if gap == 0.0 { 0.0 } else { gap / se };
            worst_z = worst_z.max(z);
        }
    }
    Ok(outcome(
        violations == 0 && worst_z <= 3.0,
        format!("25 estimates, {violations} above 10√ε + e^-8 (max ratio {ratio:.3}); d = 2 worst gap {worst_z:.2} SE"),
    ))
}

fn binomial(t: usize, k: usize) -> u128 {
    (0..k as u128).fold(1, |acc, i| acc * (t as u128 - i) / (i + 1))
}

fn c12_badness(ctx: &Ctx, log: &mut Log) -> Res {
    // Synthetic: `bad` of `rows` rows are bad for every label, labels mix.
    let mut synth_worst: f64 = 0.0;
    for (bad_rows, rows) in [(1usize, 4usize), (1, 2), (3, 8)] {
        let horizon = 10;
        // Flows carry absolute mass: each label sends half of its 1/2 to each.
        let flows: badness::Flows = vec![vec![vec![0.25, 0.25]; 2]; rows];
        let bad: Vec<Vec<bool>> = (0..rows).map(|a| vec![a < bad_rows; 2]).collect();
        let mut reg = BadnessRegister::initial(&[0.5, 0.5], horizon);
        for t in 0..=horizon {
            let levels = reg.level_mass();
            let denom = (rows as f64).powi(t as i32);
            for (beta, &mass) in levels.iter().enumerate() {
                let exact = if beta <= t {
                    (binomial(t, beta) * (bad_rows as u128).pow(beta as u32) * ((rows - bad_rows) as u128).pow((t - beta) as u32)) as f64
                        / denom
                } else {
                    0.0
                };
                synth_worst = synth_worst.max((mass - exact).abs());
                let p = bad_rows as f64 / rows as f64;
                let bound = if beta <= t { p.powi(beta as i32) * binomial(t, beta) as f64 } else { 0.0 };
                synth_worst = synth_worst.max(mass - bound);
            }
            if t < horizon {
                reg = badness::badness_step(&reg, &flows, &bad)?;
            }
        }
    }
    log.push(synth_worst);
    let (mut real_worst, mut p_max) = (f64::NEG_INFINITY, 0.0f64);
    for d in ctx.runs()? {
        let p_hat = d.trace.p_hat();
        p_max = p_max.max(p_hat);
        for row in badness::verify_badness_weight(&d.trace.registers, p_hat) {
            real_worst = real_worst.max(log.push(row.mass - row.bound));
        }
    }
    Ok(outcome(
        synth_worst <= 1e-12 && real_worst <= 1e-12,
        format!("synthetic max error {synth_worst:.2e}; 10 runs, max p̂ {p_max:.3}, max mass − bound {real_worst:.2e}"),
    ))
}

fn c13_ipbound(ctx: &Ctx, log: &mut Log) -> Res {
    let (mut rows, mut failures, mut start_gap, mut ratio) = (0, 0, 0.0f64, 0.0f64);
    for d in ctx.runs()? {
        for row in badness::verify_ipbound(&d.run, &d.trace, &d.target, d.params.r) {
            rows += 1;
            failures += usize::from(!row.holds(SLACK));
            log.push(row.lhs);
            if row.t == 0 {
                start_gap = start_gap.max((row.lhs - row.rhs).abs() / row.rhs.max(f64::MIN_POSITIVE));
            } else {
                ratio = ratio.max(row.lhs / row.rhs);
            }
        }
        debug_assert_eq!(d.inst.steps, d.run.steps.len());
    }
    Ok(outcome(
        rows > 0 && failures == 0 && start_gap <= 1e-9,
        format!("{rows} rows, {failures} failures, t = 0 relative gap {start_gap:.1e}, later max lhs/rhs {ratio:.4}"),
    ))
}

fn c14_params(_: &Ctx, log: &mut Log) -> Res {
    let worked = ParameterSet::from_integers(260, 3, 590, 256, 101, 260, 40);
    let report = lab::parameter_check(&worked);
    log.push(report.r);
    let int = |v: i64| lab::parse_rational(&v.to_string()).expect("integer");
    let perturbed = [
        (ParameterSet { q: int(4), ..worked.clone() }, "q <= r - 7"),
        (ParameterSet { ell_prime: int(261), ..worked.clone() }, "l' <= n"),
        (ParameterSet { m: int(591), ..worked.clone() }, "m <= (k' - 1) l' / 44"),
        (ParameterSet { steps: int(257), ..worked.clone() }, "T <= 2^(r - 2)"),
    ];
    let rejected = perturbed.iter().filter(|(p, name)| lab::parameter_check(p).failing() == vec![*name]).count();
    Ok(outcome(
        report.all_hold() && rejected == perturbed.len(),
        format!("worked tuple {}, r = {}; {rejected}/{} perturbations rejected", if report.all_hold() { "holds" } else { "fails" }, report.exact[0], perturbed.len()),
    ))
}

fn c15_information(_: &Ctx, log: &mut Log) -> Res {
    let mut c1_fail = 0;
    for i in 0..200u64 {
        let mut r = stream("c1", i);
        let qubits = r.gen_range(1..=3);
        let blocks = lab::random_cq_state(r.gen_range(2..=8), qubits, &mut r);
        let check = lab::lemma_c1_check(&blocks, qubits, SLACK)?;
        log.push(check.information);
        c1_fail += usize::from(!check.holds());
    }
    let mut bracket_fail = 0;
    for i in 0..20u64 {
        let mut r = stream("xi-grid", i);
        let blocks = lab::random_cq_state(r.gen_range(2..=8), 1, &mut r);
        let dep = lab::xi_dependency(&blocks)?;
        let grid = lab::xi_qubit_grid(&blocks, 22)?;
        log.push(grid.xi);
        // The true minimum lies in [grid − resolution, grid].
        let ok = dep.lower <= grid.xi + 1e-12 && grid.xi - grid.resolution <= dep.upper + 1e-12;
        bracket_fail += usize::from(!ok);
    }
    let base = LearningInstance::inner_product(6, 1, 0, 1)?;
    let strength = lab::extractor_strength(&base.matrix, 1, 16, SEED)?;
    let (mut bound_fail, mut programs, mut margin) = (0, 0, f64::INFINITY);
    for steps in 1..=8 {
        let inst = LearningInstance::inner_product(6, 1, 0, steps)?;
        for (_, prog) in zoo::qubit_zoo(&inst)? {
            let b = lab::theorem_c_bound_check(&inst, &prog, strength)?;
            log.push(b.check.measured);
            bound_fail += usize::from(!b.check.holds());
            margin = margin.min(b.check.margin());
            programs += 1;
        }
    }
    Ok(outcome(
        c1_fail + bracket_fail + bound_fail == 0,
        format!(
            "information bounds {c1_fail}/200 fail; ξ bracket {bracket_fail}/20 fail; success bound {bound_fail}/{programs} fail (r = {:.2}, min margin {margin:.3})",
            strength.r
        ),
    ))
}

type Criterion = fn(&Ctx, &mut Log) -> Res;

/// Criteria with a runtime cap, in seconds.
fn time_limit(id: usize) -> Option<f64> {
    match id {
        1 => Some(5.0),
        3 => Some(30.0),
        6 => Some(20.0),
        11 => Some(60.0),
        _ => None,
    }
}

struct SuiteRun {
    lines: Vec<(usize, Outcome, f64)>,
    log: Log,
}

fn run_suite() -> SuiteRun {
    let ctx = Ctx::default();
    let mut log = Log::default();
    let mut lines = Vec::new();
    let fail = |e: qlml_core::Error| outcome(false, format!("error: {e}"));
    let timed = |lines: &mut Vec<(usize, Outcome, f64)>, id: usize, f: Criterion, log: &mut Log| {
        let start = Instant::now();
        let o = f(&ctx, log).unwrap_or_else(fail);
        lines.push((id, o, start.elapsed().as_secs_f64()));
    };
    let early: [(usize, Criterion); 7] = [
        (1, c1_random_guess),
        (2, c2_one_sample),
        (3, c3_gauss_elim),
        (4, c4_uniform_marginal),
        (5, c5_contractivity),
        (6, c6_projection),
        (7, c7_fvdg),
    ];
    for (id, f) in early {
        timed(&mut lines, id, f, &mut log);
    }
    let start = Instant::now();
    match c8_9_truncation(&mut log) {
        Ok((c8, c9)) => {
            let secs = start.elapsed().as_secs_f64();
            lines.push((8, c8, secs));
            lines.push((9, c9, 0.0));
        }
        Err(e) => {
            lines.push((8, fail(e), 0.0));
            lines.push((9, outcome(false, "no truncations".into()), 0.0));
        }
    }
    let late: [(usize, Criterion); 6] = [
        (10, c10_markov),
        (11, c11_anticoncentration),
        (12, c12_badness),
        (13, c13_ipbound),
        (14, c14_params),
        (15, c15_information),
    ];
    for (id, f) in late {
        timed(&mut lines, id, f, &mut log);
    }
    SuiteRun { lines, log }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

fn cli_reports(threads: usize) -> Vec<Vec<u8>> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../..");
    let cfg = format!("{root}/configs/ip_n4.cfg");
    let mat = format!("{root}/configs/ip2.mat");
    let commands: Vec<Vec<&str>> = vec![
        vec!["simulate", "--config", &cfg],
        vec!["truncate", "--config", &cfg],
        vec!["verify-lemma", "anticoncentration", "--samples", "20000", "--seed", "3"],
        vec!["verify-lemma", "information-bounds", "--seed", "3"],
        vec!["verify-lemma", "xi-oracle", "--seed", "3"],
        vec!["verify-lemma", "quantum-memory-success", "--steps", "3"],
        vec!["extractor-scan", "--matrix", &mat, "--k", "0", "--l", "0"],
        vec!["params-check", "--n", "260", "--q", "3", "--m", "590", "--steps", "256", "--k-prime", "101", "--ell-prime", "260", "--r-prime", "40"],
    ];
    commands
        .iter()
        .map(|args| {
            let out = Command::new(env!("CARGO_BIN_EXE_qlml"))
                .args(args)
                .env("QLML_THREADS", threads.to_string())
                .output()
                .expect("qlml runs");
            out.stdout
        })
        .collect()
}

fn main() {
    let suite_start = Instant::now();
    let first = pool(1).install(run_suite);
    let mut failed = 0;
    for (id, o, secs) in &first.lines {
        let over = time_limit(*id).filter(|&cap| *secs > cap);
        let pass = o.pass && over.is_none();
        failed += usize::from(!pass);
        let timing = match over {
            Some(cap) => format!(" [took {secs:.1} s, cap {cap} s]"),
            None => format!(" [{secs:.1} s]"),
        };
        println!("criterion {id}: {} — {}{timing}", if pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let second = pool(4).install(run_suite);
    let suite_same = first.log.values == second.log.values
        && first.lines.iter().zip(&second.lines).all(|(a, b)| a.1.detail == b.1.detail && a.1.pass == b.1.pass);
    let (a, b) = (cli_reports(1), cli_reports(3));
    let cli_same = a == b && a.iter().all(|r| !r.is_empty());
    let pass = suite_same && cli_same;
    failed += usize::from(!pass);
    println!(
        "criterion 16: {} — suite rerun on 4 threads: {} measured values {}; {} CLI reports {}",
        if pass { "PASS" } else { "FAIL" },
        first.log.values.len(),
        if suite_same { "identical" } else { "DIFFER" },
        a.len(),
        if cli_same { "byte-identical" } else { "DIFFER" },
    );
    println!("{} of 16 criteria passed in {:.1} s", 16 - failed, suite_start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
