//! Config-driven runner for the qlml toolkit. Every subcommand produces a
//! stream of JSON records (one per line, closed by a summary) and exits 0
//! when all checks pass, 1 when one fails and 2 on configuration or input
//! errors.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod record;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qlml_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "qlml", version, about = "Exact simulation and lemma checks for hybrid-memory learners")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sample / trial count for randomized checks.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Search budget: `default`, `reduced` or `grid=N,starts=M`.
    #[arg(long, global = true)]
    pub budget: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact evolution of the configured program.
    Simulate,
    /// Truncated evolution with stage bounds and badness accounting.
    Truncate,
    /// One of the standalone inequality checks.
    VerifyLemma(LemmaArgs),
    /// Largest submatrix bias of a matrix file.
    ExtractorScan(ScanArgs),
    /// The parameter inequalities, in exact arithmetic.
    ParamsCheck(ParamsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LemmaArgs {
    /// anticoncentration | projection-distance | fvdg-variant |
    /// xi-oracle | theorem-c
    pub name: String,
    /// Dimension of the random Hermitian operator.
    #[arg(long)]
    pub d: Option<usize>,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Constant in the anti-concentration bound.
    #[arg(long)]
    pub c: Option<f64>,
    /// Qubits of side information.
    #[arg(long)]
    pub q: Option<usize>,
    /// Secret length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Largest program length.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub k: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l: f64,
    /// Turns the report into a check against `2^{-r}`.
    #[arg(long)]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    #[arg(long)]
    pub k_prime: Option<String>,
    #[arg(long)]
    pub ell_prime: Option<String>,
    #[arg(long)]
    pub r_prime: Option<String>,
}

pub fn records_for(cli: &Cli) -> Result<Vec<record::Record>, CliError> {
    match &cli.command {
        Command::Simulate => commands::simulate(&cli.common),
        Command::Truncate => commands::truncate(&cli.common),
        Command::VerifyLemma(a) => commands::verify_lemma(&cli.common, a),
        Command::ExtractorScan(a) => commands::extractor_scan(&cli.common, a),
        Command::ParamsCheck(a) => commands::params_check(&cli.common, a),
    }
}

/// Runs the command and writes its report; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let records = match records_for(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    // `--out` wins; otherwise the config's `out`, relative to the config.
    let out = cli.common.out.clone().or_else(|| {
        let cfg = config::RunConfig::load(cli.common.config.as_ref()?).ok()?;
        Some(cfg.resolve(cfg.out.as_ref()?))
    });
    let written = match &out {
        Some(path) => record::emit_report(&records, path),
        None => {
            print!("{}", record::render(&records));
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: writing report: {e}");
        return 2;
    }
    let failed = record::failures(&records);
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
        1
    } else {
        0
    }
}

/// Caps the global thread pool from `QLML_THREADS`.
pub fn init_threads() {
    if let Some(n) = std::env::var("QLML_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        // Fails only if the pool was already built, in which case it stays.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
