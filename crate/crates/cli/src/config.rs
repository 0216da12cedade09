//! Run configuration: TOML, one level of sections, unknown keys rejected.
//!
//! ```toml
//! seed = 1
//!
//! [instance]
//! matrix = "inner-product"   # or a matrix file, relative to this config
//! n = 4
//! q = 1
//! m = 0
//! steps = 4
//!
//! [program]
//! name = "greedy-store"      # or: file = "prog.toml"
//!
//! [pipeline]
//! ell = 1.0                  # or the primed triple k_prime / ell_prime / r_prime
//! r = 1.0
//!
//! [search]
//! budget = "reduced"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use qlml_core::extractor::BiasMatrix;
use qlml_core::lab::{parameter_check, parse_rational, ParameterReport, ParameterSet};
use qlml_core::program::{self, file::parse_program, zoo, BranchingProgram, LearningInstance};
use qlml_core::rng;
use qlml_core::truncation::{PipelineParams, SearchBudget};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub instance: InstanceSection,
    #[serde(default)]
    pub program: ProgramSection,
    pub pipeline: Option<PipelineSection>,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub badness: BadnessSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    #[serde(default = "inner_product")]
    pub matrix: String,
    pub n: Option<usize>,
    #[serde(default)]
    pub q: usize,
    #[serde(default)]
    pub m: usize,
    pub steps: usize,
}

fn inner_product() -> String {
    "inner-product".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSection {
    pub name: Option<String>,
    pub file: Option<PathBuf>,
    /// Kraus operators per channel for `name = "random"`.
    pub kraus: Option<usize>,
    pub angle: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub ell: Option<f64>,
    pub r: Option<f64>,
    pub k_prime: Option<String>,
    pub ell_prime: Option<String>,
    pub r_prime: Option<String>,
    /// Refuse to run when the parameter inequalities fail.
    #[serde(default)]
    pub enforce: bool,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub budget: Option<String>,
    pub grid_points: Option<usize>,
    pub random_starts: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BadnessSection {
    /// `random` (default), `uniform` or `point:<x>`.
    pub target: Option<String>,
    /// Emit one record per `(t, w, a)` verdict.
    #[serde(default)]
    pub records: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn matrix(&self) -> Result<BiasMatrix, CliError> {
        load_matrix(&self.instance.matrix, self.instance.n, &self.base)
    }

    pub fn instance(&self) -> Result<LearningInstance, CliError> {
        let i = &self.instance;
        Ok(LearningInstance::new(Arc::new(self.matrix()?), i.q, i.m, i.steps)?)
    }

    /// The program to run, with the name it is reported under.
    pub fn program(&self, inst: &LearningInstance) -> Result<(String, BranchingProgram), CliError> {
        let p = &self.program;
        if let Some(file) = &p.file {
            let path = self.resolve(file);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok((file.display().to_string(), parse_program(&text, inst.matrix.rows(), inst.steps)?));
        }
        let name = p.name.clone().unwrap_or_else(|| "random-guess".into());
        let prog = match name.as_str() {
            "random-guess" => program::build_random_guess(inst),
            "greedy-store" => zoo::greedy_store(inst)?,
            "one-sample-bit" => zoo::one_sample_bit(inst)?,
            "rotate-accumulate" => zoo::rotate_accumulate(inst, p.angle.unwrap_or(std::f64::consts::FRAC_PI_8))?,
            "dephase-vote" => zoo::dephase_vote(inst, p.p.unwrap_or(0.5))?,
            "random" => {
                let mut r = rng::substream(self.seed, "program");
                zoo::random_program(inst, p.kraus.unwrap_or(2), &mut r)?
            }
            other => return Err(CliError::Config(format!("unknown program '{other}'"))),
        };
        Ok((name, prog))
    }

    /// Pipeline thresholds, either given directly or derived from the
    /// primed triple; the second value is the parameter check when the
    /// triple was given.
    pub fn pipeline(&self, n: usize) -> Result<(PipelineParams, Option<ParameterReport>), CliError> {
        let p = self.pipeline.as_ref().ok_or_else(|| CliError::Config("missing [pipeline] section".into()))?;
        match (&p.k_prime, &p.ell_prime, &p.r_prime) {
            (Some(k), Some(l), Some(r)) => {
                let i = &self.instance;
                let int = |v: usize| parse_rational(&v.to_string());
                let set = ParameterSet {
                    n: int(n)?,
                    q: int(i.q)?,
                    m: int(i.m)?,
                    steps: int(i.steps)?,
                    k_prime: parse_rational(k)?,
                    ell_prime: parse_rational(l)?,
                    r_prime: parse_rational(r)?,
                };
                let report = parameter_check(&set);
                if p.enforce && !report.all_hold() {
                    return Err(CliError::Config(format!("parameter inequalities fail: {}", report.failing().join("; "))));
                }
                Ok((PipelineParams::new(n, report.ell, report.r)?, Some(report)))
            }
            (None, None, None) => {
                let (ell, r) = p
                    .ell
                    .zip(p.r)
                    .ok_or_else(|| CliError::Config("[pipeline] needs ell and r, or k_prime, ell_prime and r_prime".into()))?;
                if p.enforce {
                    return Err(CliError::Config("enforce needs the primed triple".into()));
                }
                Ok((PipelineParams::new(n, ell, r)?, None))
            }
            _ => Err(CliError::Config("give all of k_prime, ell_prime and r_prime".into())),
        }
    }

    pub fn margin(&self) -> f64 {
        self.pipeline.as_ref().map_or(default_margin(), |p| p.margin)
    }

    pub fn budget(&self, flag: Option<&str>, seed: u64) -> Result<SearchBudget, CliError> {
        let mut b = parse_budget(flag.or(self.search.budget.as_deref()).unwrap_or("default"), seed)?;
        if flag.is_none() {
            b.grid_points = self.search.grid_points.unwrap_or(b.grid_points);
            b.random_starts = self.search.random_starts.unwrap_or(b.random_starts);
        }
        Ok(b)
    }
}

/// `default`, `reduced`, or `grid=N,starts=M` (either part optional).
pub fn parse_budget(spec: &str, seed: u64) -> Result<SearchBudget, CliError> {
    match spec {
        "default" => return Ok(SearchBudget::default().with_seed(seed)),
        "reduced" => return Ok(SearchBudget::reduced(seed)),
        _ => {}
    }
    let mut b = SearchBudget::default().with_seed(seed);
    for part in spec.split(',') {
        let (key, value) = part.split_once('=').ok_or_else(|| CliError::Config(format!("bad budget '{spec}'")))?;
        let v: usize = value.trim().parse().map_err(|_| CliError::Config(format!("bad budget value '{value}'")))?;
        match key.trim() {
            "grid" => b.grid_points = v,
            "starts" => b.random_starts = v,
            other => return Err(CliError::Config(format!("unknown budget key '{other}'"))),
        }
    }
    Ok(b)
}

/// `inner-product` (with `n`) or a matrix file.
pub fn load_matrix(spec: &str, n: Option<usize>, base: &Path) -> Result<BiasMatrix, CliError> {
    if spec == "inner-product" {
        let n = n.ok_or_else(|| CliError::Config("inner-product matrix needs n".into()))?;
        return Ok(qlml_core::extractor::inner_product_matrix(n)?);
    }
    let path = if Path::new(spec).is_absolute() { PathBuf::from(spec) } else { base.join(spec) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let m = BiasMatrix::parse(&text)?;
    if let (Some(n), Some(got)) = (n, m.n()) {
        if n != got {
            return Err(CliError::Config(format!("matrix file has n = {got}, config says {n}")));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn minimal_config() {
        let cfg = parse("[instance]\nn = 3\nsteps = 2\n").unwrap();
        assert_eq!(cfg.seed, 0);
        let inst = cfg.instance().unwrap();
        assert_eq!((inst.n, inst.q, inst.m, inst.steps), (3, 0, 0, 2));
        assert_eq!(cfg.program(&inst).unwrap().0, "random-guess");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[instance]\nn = 3\nsteps = 2\nbogus = 1\n").is_err());
        assert!(parse("typo = 1\n[instance]\nn = 3\nsteps = 2\n").is_err());
    }

    #[test]
    fn primed_triple_derives_thresholds() {
        let cfg = parse(
            "[instance]\nn = 4\nsteps = 2\n[pipeline]\nk_prime = \"101\"\nell_prime = \"260\"\nr_prime = \"40\"\n",
        )
        .unwrap();
        let (p, report) = cfg.pipeline(4).unwrap();
        assert_eq!(p.r, 10.0);
        assert!(!report.unwrap().all_hold());
        let strict = parse(
            "[instance]\nn = 4\nsteps = 2\n[pipeline]\nk_prime = \"101\"\nell_prime = \"260\"\nr_prime = \"40\"\nenforce = true\n",
        )
        .unwrap();
        assert!(matches!(strict.pipeline(4), Err(CliError::Config(_))));
    }

    #[test]
    fn budgets() {
        assert_eq!(parse_budget("reduced", 3).unwrap(), SearchBudget::reduced(3));
        let b = parse_budget("grid=500,starts=20", 1).unwrap();
        assert_eq!((b.grid_points, b.random_starts, b.seed), (500, 20, 1));
        assert!(parse_budget("grid=x", 0).is_err());
        assert!(parse_budget("fast", 0).is_err());
    }
}
