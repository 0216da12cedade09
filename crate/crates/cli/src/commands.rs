//! Subcommand implementations. Each returns its records in a fixed order;
//! the caller writes them and derives the exit code.

use qlml_core::badness::{self, BadnessParams, LemmaVerdict, TargetDistribution};
use qlml_core::cq::DistributionX;
use qlml_core::extractor::{submatrix_bias_scan, ScanMode};
use qlml_core::lab::{self, ParameterSet};
use qlml_core::program::classical::{build_classical_learner, LearnerKind, SuccessMode};
use qlml_core::program::{self, zoo, LearningInstance};
use qlml_core::rng;
use qlml_core::truncation::{run_truncated, truncation_error_report};
use rand::Rng;
use serde_json::json;

use crate::config::{load_matrix, RunConfig};
use crate::record::{self, Record};
use crate::{CliError, Common, LemmaArgs, ParamsArgs, ScanArgs};

const SLACK: f64 = 1e-8;

fn need_config(common: &Common) -> Result<RunConfig, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    RunConfig::load(path)
}

fn seed_of(common: &Common, cfg: Option<&RunConfig>) -> u64 {
    common.seed.or(cfg.map(|c| c.seed)).unwrap_or(0)
}

pub fn simulate(common: &Common) -> Result<Vec<Record>, CliError> {
    let cfg = need_config(common)?;
    let seed = seed_of(common, Some(&cfg));
    let inst = cfg.instance()?;
    if let Some(kind) = cfg.program.name.as_deref().and_then(|n| n.parse::<LearnerKind>().ok()) {
        let mode = match kind {
            LearnerKind::GaussElim if cfg.instance.matrix == "inner-product" => SuccessMode::RankChain,
            _ => SuccessMode::Exact,
        };
        let out = build_classical_learner(&inst, kind, mode)?;
        return Ok(vec![Record::State { t: inst.steps, trace: 1.0, success: out.success }]);
    }
    let (name, prog) = cfg.program(&inst)?;
    let states = program::run_program(&inst, &prog)?;
    let mut records = Vec::with_capacity(states.len() + 2);
    let (mut trace_dev, mut marginal_dev) = (0.0_f64, 0.0_f64);
    let uniform = 1.0 / inst.matrix.cols() as f64;
    for (t, s) in states.iter().enumerate() {
        let trace = s.total_trace();
        trace_dev = trace_dev.max((trace - 1.0).abs());
        for x in 0..s.num_x() {
            let px: f64 = (0..s.num_w()).map(|w| s.x_weights_at(w)[x]).sum();
            marginal_dev = marginal_dev.max((px - uniform).abs());
        }
        records.push(Record::State { t, trace, success: program::success_probability(s, &prog) });
    }
    let params = json!({"program": name, "n": inst.n, "q": inst.q, "m": inst.m, "steps": inst.steps});
    records.push(record::check("trace-preserved", params.clone(), trace_dev, 1e-9, trace_dev <= 1e-9, seed));
    records.push(record::check("uniform-marginal", params, marginal_dev, 1e-9, marginal_dev <= 1e-9, seed));
    Ok(records)
}

fn target_for(spec: &str, n: usize, ell: f64, seed: u64) -> Result<TargetDistribution, CliError> {
    let p = match spec {
        "uniform" => DistributionX::uniform(n),
        "random" => {
            let mut r = rng::substream(seed, "target");
            DistributionX::from_weights(&(0..1usize << n).map(|_| r.gen::<f64>()).collect::<Vec<_>>())?
        }
        other => match other.strip_prefix("point:").and_then(|x| x.parse::<usize>().ok()) {
            Some(x) if x < 1 << n => DistributionX::point_mass(n, x),
            _ => return Err(CliError::Config(format!("unknown target '{other}'"))),
        },
    };
    Ok(TargetDistribution::unchecked(p, ell))
}

pub fn truncate(common: &Common) -> Result<Vec<Record>, CliError> {
    let cfg = need_config(common)?;
    let seed = seed_of(common, Some(&cfg));
    let inst = cfg.instance()?;
    let (name, prog) = cfg.program(&inst)?;
    let (p, report) = cfg.pipeline(inst.n)?;
    let preconditions = report.as_ref().is_some_and(|r| r.all_hold());
    let budget = cfg.budget(common.budget.as_deref(), seed)?;
    let run = run_truncated(&inst, &prog, &p, &budget)?;

    let base = json!({"program": name, "n": inst.n, "q": inst.q, "m": inst.m, "steps": inst.steps, "ell": p.ell, "r": p.r});
    let with_t = |t: usize| {
        let mut v = base.clone();
        v["t"] = json!(t);
        v
    };
    let mut records = Vec::new();
    for (t, step) in run.steps.iter().enumerate() {
        let rep = &step.stage.report;
        records.push(Record::Truncation {
            t,
            distance: step.distance,
            d_star: rep.d_star,
            d_circ: rep.d_circ,
            d_inf: rep.d_inf,
            d_even_mean: rep.d_even_mean,
            removed: rep.star_weights.len() + rep.inf_weights.len() + rep.even_removed.iter().sum::<usize>(),
            exact: rep.exact,
        });
        for b in truncation_error_report(rep, &p, inst.q, inst.m, preconditions) {
            let rec = if b.informational {
                record::info(&b.name, with_t(t), b.measured, b.bound, seed)
            } else {
                record::check(&b.name, with_t(t), b.measured, b.bound, b.holds, seed)
            };
            records.push(rec);
        }
    }
    let slack = run.worst_slack().max(0.0);
    records.push(record::check("distance-accumulation", base.clone(), slack, 1e-9, slack <= 1e-9, seed));

    // Badness accounting for the configured target.
    let bp = BadnessParams { pipeline: p, margin: cfg.margin() };
    let target = target_for(cfg.badness.target.as_deref().unwrap_or("random"), inst.n, p.ell, seed)?;
    let flows = badness::run_flows(&run, &prog, &inst.matrix);
    let trace = badness::replay(&inst, &run, &flows, &target, &bp, None)?;
    if cfg.badness.records {
        for (t, per_w) in trace.verdicts.iter().enumerate() {
            for (w, row) in per_w.iter().enumerate() {
                for (a, v) in row.iter().enumerate() {
                    let d = badness::detect_bad(run.steps[t].stage.copy_for(a), w, inst.matrix.row(a), &target, &bp)?;
                    records.push(Record::Badness {
                        t,
                        w,
                        a,
                        verdict: serde_json::to_value(v).expect("verdict").as_str().unwrap_or_default().to_string(),
                        witness_norm: d.witness.as_ref().map_or(0.0, |v| v.norm()),
                        exact_value: record::finite(d.exact_value),
                        proof_margin: d.proof_threshold - d.proof_norm,
                    });
                }
            }
        }
    }
    let rows = badness::verify_ipbound(&run, &trace, &target, p.r);
    let worst = rows.iter().max_by(|a, b| (a.lhs / a.rhs).total_cmp(&(b.lhs / b.rhs)));
    if let Some(w) = worst {
        let holds = rows.iter().all(|r| r.holds(SLACK));
        records.push(record::check("ipbound", base.clone(), w.lhs, w.rhs, holds, seed));
    }
    let p_hat = trace.p_hat();
    let weight = badness::verify_badness_weight(&trace.registers, p_hat);
    let worst = weight.iter().max_by(|a, b| (a.mass - a.bound).total_cmp(&(b.mass - b.bound)));
    if let Some(w) = worst {
        let mut params = base.clone();
        params["p_hat"] = json!(p_hat);
        let holds = weight.iter().all(|r| r.mass <= r.bound + 1e-12);
        records.push(record::check("badness-weight", params, w.mass, w.bound, holds, seed));
    }
    let consistency = trace.consistency.iter().copied().fold(0.0, f64::max);
    records.push(record::check("register-consistency", base.clone(), consistency, 1e-9, consistency <= 1e-9, seed));
    let disagreements = trace.disagreements as f64;
    records.push(record::check("detector-agreement", base.clone(), disagreements, 0.0, disagreements == 0.0, seed));
    records.push(record::info("norm-guard", base.clone(), trace.guard_violations as f64, 0.0, seed));

    let main = badness::main_lemma_check(&inst, &prog, &run, &bp)?;
    let heaviest = main.rows.iter().map(|r| r.weight).fold(0.0, f64::max);
    let bound = (-2.0 * inst.m as f64 - 4.0 * p.r).exp2();
    let mut params = base;
    params["verdict"] = json!(serde_json::to_value(main.verdict).expect("verdict"));
    params["directions"] = json!(main.rows.len());
    let holds = main.verdict != LemmaVerdict::Fail;
    records.push(if preconditions {
        record::check("removed-weight-chain", params, heaviest, bound, holds, seed)
    } else {
        record::info("removed-weight-chain", params, heaviest, bound, seed)
    });
    Ok(records)
}

pub fn verify_lemma(common: &Common, args: &LemmaArgs) -> Result<Vec<Record>, CliError> {
    let cfg = common.config.as_ref().map(|p| RunConfig::load(p)).transpose()?;
    let seed = seed_of(common, cfg.as_ref());
    let mut records = Vec::new();
    match args.name.as_str() {
        "anticoncentration" => {
            let d = args.d.unwrap_or(8);
            let samples = common.samples.unwrap_or(100_000);
            let c = args.c.unwrap_or(lab::CALIBRATED_C);
            let mut r = rng::substream(seed, "sigma");
            let sigma = rng::random_hermitian(d, &mut r);
            for &eps in args.eps.as_deref().unwrap_or(&[0.01]) {
                let est = lab::anticoncentration_estimate(&sigma, eps, samples, seed, c)?;
                let params = json!({"d": d, "eps": eps, "samples": samples, "c": c, "std_error": est.std_error});
                records.push(record::check("anticoncentration", params, est.probability, est.bound, est.holds(), seed));
            }
        }
        "projection-distance" => {
            let trials = common.samples.unwrap_or(1000);
            let mut worst = f64::NEG_INFINITY;
            let mut violations = 0;
            for i in 0..trials {
                let mut r = rng::trial_stream(seed, "projection-distance", i as u64);
                let d = r.gen_range(1..=16);
                let rho = rng::random_psd(d, r.gen_range(1..=d), r.gen_range(0.01..=1.0), &mut r);
                let proj = rng::random_projector(d, r.gen_range(0..=d), &mut r);
                let chk = lab::projection_distance_check(&rho, &proj, SLACK)?;
                worst = worst.max(chk.measured - chk.bound);
                violations += usize::from(!chk.holds());
            }
            let params = json!({"trials": trials, "violations": violations});
            records.push(record::check("projection-distance", params, worst, SLACK, violations == 0, seed));
        }
        "fvdg-variant" => {
            let trials = common.samples.unwrap_or(1000);
            let mut worst = f64::NEG_INFINITY;
            let mut violations = 0;
            for i in 0..trials {
                let mut r = rng::trial_stream(seed, "fvdg-variant", i as u64);
                let d = r.gen_range(1..=16);
                let ta = r.gen_range(0.01..=1.0);
                let rho = rng::random_psd(d, r.gen_range(1..=d), ta, &mut r);
                let sigma = rng::random_psd(d, r.gen_range(1..=d), ta * r.gen_range(0.0..=1.0), &mut r);
                for chk in lab::fvdg_variant_check(&rho, &sigma, SLACK)? {
                    worst = worst.max(chk.measured - chk.bound);
                    violations += usize::from(!chk.holds());
                }
            }
            let params = json!({"trials": trials, "violations": violations});
            records.push(record::check("fvdg-variant", params, worst, SLACK, violations == 0, seed));
        }
        "information-bounds" => {
            let trials = common.samples.unwrap_or(200);
            let max_q = args.q.unwrap_or(3);
            let (mut worst, mut violations) = (f64::NEG_INFINITY, 0);
            for i in 0..trials {
                let mut r = rng::trial_stream(seed, "information-bounds", i as u64);
                let q = r.gen_range(1..=max_q);
                let nx = r.gen_range(2..=8);
                let blocks = lab::random_cq_state(nx, q, &mut r);
                let chk = lab::lemma_c1_check(&blocks, q, SLACK)?;
                for side in [chk.lower, chk.upper] {
                    worst = worst.max(side.measured - side.bound);
                }
                violations += usize::from(!chk.holds());
            }
            let params = json!({"trials": trials, "max_q": max_q, "violations": violations});
            records.push(record::check("information-bounds", params, worst, SLACK, violations == 0, seed));
        }
        "xi-oracle" => {
            let trials = common.samples.unwrap_or(20);
            let (mut worst, mut violations, mut resolution) = (f64::NEG_INFINITY, 0, 0.0);
            for i in 0..trials {
                let mut r = rng::trial_stream(seed, "xi-oracle", i as u64);
                let nx = r.gen_range(2..=8);
                let blocks = lab::random_cq_state(nx, 1, &mut r);
                let dep = lab::xi_dependency(&blocks)?;
                let oracle = lab::xi_qubit_grid(&blocks, 22)?;
                resolution = oracle.resolution;
                let below = dep.lower - (oracle.xi + oracle.resolution);
                let above = oracle.xi - dep.upper;
                worst = worst.max(below).max(above);
                violations += usize::from(below > 0.0 || above > 1e-12);
            }
            let params = json!({"trials": trials, "resolution": resolution, "violations": violations});
            records.push(record::check("xi-bracket", params, worst, 0.0, violations == 0, seed));
        }
        "quantum-memory-success" => {
            let n = args.n.or(cfg.as_ref().and_then(|c| c.instance.n)).unwrap_or(6);
            let max_t = args.steps.or(cfg.as_ref().map(|c| c.instance.steps)).unwrap_or(8);
            let families = common.samples.unwrap_or(16);
            let base = LearningInstance::inner_product(n, 1, 0, 0)?;
            let strength = lab::extractor_strength(&base.matrix, 1, families, seed)?;
            for steps in 0..=max_t {
                let inst = LearningInstance::inner_product(n, 1, 0, steps)?;
                for (name, prog) in zoo::qubit_zoo(&inst)? {
                    let chk = lab::theorem_c_bound_check(&inst, &prog, strength)?;
                    let params = json!({"program": name, "n": n, "steps": steps, "q": strength.q, "r": strength.r});
                    records.push(record::check(
                        "quantum-memory-success",
                        params,
                        chk.check.measured,
                        chk.check.bound,
                        chk.check.holds(),
                        seed,
                    ));
                }
            }
        }
        other => return Err(CliError::Config(format!("unknown lemma '{other}'"))),
    }
    Ok(records)
}

pub fn extractor_scan(common: &Common, args: &ScanArgs) -> Result<Vec<Record>, CliError> {
    let seed = common.seed.unwrap_or(0);
    let base = std::env::current_dir().unwrap_or_default();
    let m = load_matrix(&args.matrix.display().to_string(), None, &base)?;
    let mode = match common.samples {
        Some(samples) if samples > 0 => ScanMode::Randomized { samples, seed },
        _ => ScanMode::Exhaustive,
    };
    let bias = submatrix_bias_scan(&m, args.k, args.l, mode)?;
    let params = json!({
        "matrix": args.matrix.display().to_string(),
        "k": args.k,
        "l": args.l,
        "exhaustive": matches!(mode, ScanMode::Exhaustive),
    });
    Ok(vec![match args.r {
        Some(r) => {
            let bound = (-r).exp2();
            record::check("submatrix-bias", params, bias, bound, bias <= bound, seed)
        }
        None => record::info("submatrix-bias", params, bias, 1.0, seed),
    }])
}

pub fn params_check(common: &Common, args: &ParamsArgs) -> Result<Vec<Record>, CliError> {
    let seed = common.seed.unwrap_or(0);
    let field = |v: &Option<String>, name: &str| -> Result<_, CliError> {
        let s = v.as_deref().ok_or_else(|| CliError::Config(format!("--{name} is required")))?;
        Ok(lab::parse_rational(s)?)
    };
    let set = ParameterSet {
        n: field(&args.n, "n")?,
        q: field(&args.q, "q")?,
        m: field(&args.m, "m")?,
        steps: field(&args.steps, "steps")?,
        k_prime: field(&args.k_prime, "k-prime")?,
        ell_prime: field(&args.ell_prime, "ell-prime")?,
        r_prime: field(&args.r_prime, "r-prime")?,
    };
    let report = lab::parameter_check(&set);
    let derived = json!({"r": report.exact[0], "k": report.exact[1], "l": report.exact[2]});
    Ok(report
        .checks
        .iter()
        .map(|c| {
            let mut params = derived.clone();
            params["inequality"] = json!(c.name);
            record::check("parameter", params, c.lhs, c.rhs, c.holds, seed)
        })
        .collect())
}
