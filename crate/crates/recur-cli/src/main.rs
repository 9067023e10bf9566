//! Experiment driver: resolves a run configuration (defaults, config file,
//! flags), executes one subcommand against the library, and writes CSV or
//! JSON with the config embedded so the run can be replayed exactly.
//!
//! Exit codes: 0 success (for verify-conditions: every section passed),
//! 1 failed conditions or an unclassified runtime error, 2 bad
//! configuration, 3 ambiguity budget exceeded, 4 precision or resample
//! budget exhausted.

mod config;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recur::conditions::{verify_conditions, ConditionsOpts};
use recur::cylinders::{enumerate, expansion_sum, EnumerateOpts};
use recur::error::{OrbitError, RunError};
use recur::exec::with_workers;
use recur::measures::Measure;
use recur::precision::PrecisionOpts;
use recur::recurrence::{
    dichotomy_experiment, estimate_hits, pair_matrix, window_count, EstimateOpts, RateFunction,
    SeriesVerdict,
};
use recur::{parse_system, SystemDescriptor};

use config::{doubling_windows, parse_window, RunConfig};
use output::{write_conditions, write_table, Cell, Table};

#[derive(Parser)]
#[command(name = "recur", version, about = "Near-return experiments for expanding interval maps")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check scaling, mixing, distortion, sum and conformality bounds
    VerifyConditions(CommonArgs),
    /// Estimate near-return probabilities at fixed times
    Estimate(EstimateArgs),
    /// Joint hit counts and independence ratios over a pair grid
    Pair(PairArgs),
    /// Hit-count moments and the anti-concentration bound on one window
    Zn(WindowArgs),
    /// Window hit rates across doubling windows, with the series verdict
    Dichotomy(WindowArgs),
    /// Cylinder census per depth: counts, lengths, expansion sums
    Cylinders(CylinderArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// System name: beta:2, beta:phi, beta:2.5, gauss, cantor3
    #[arg(long)]
    system: Option<String>,
    /// Master seed; every random stream derives from it
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo sample count
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads (0 = library default); never changes the output
    #[arg(long)]
    workers: Option<usize>,
    /// Rate function, e.g. power:c=0.01,a=0 or logpow:c=1,b=2 or const:c=0.01
    #[arg(long)]
    psi: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// Working-precision cap in bits
    #[arg(long)]
    max_bits: Option<u32>,
    /// Guard digits kept beyond the largest shift
    #[arg(long)]
    guard: Option<usize>,
    /// Resamples allowed per sample index
    #[arg(long)]
    resample_cap: Option<u32>,
    /// Tolerated fraction of ambiguous classifications
    #[arg(long)]
    ambiguity_cap: Option<f64>,
}

#[derive(Args, Clone)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated return times, e.g. 5,10,20
    #[arg(long)]
    n: Option<String>,
}

#[derive(Args, Clone)]
struct PairArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Largest return time of the pair grid (at most 64)
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args, Clone)]
struct WindowArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Inclusive time window start:end
    #[arg(long)]
    window: Option<String>,
    /// Threshold of the anti-concentration bound (zn only)
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Clone)]
struct CylinderArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Deepest cylinder level reported
    #[arg(long)]
    depth: Option<usize>,
    /// Minimum cylinder length kept in the Gauss enumeration
    #[arg(long)]
    prune_len: Option<f64>,
}

enum Failure {
    Config(String),
    Run(RunError),
    Io(std::io::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "{msg}"),
            Failure::Run(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "{e}"),
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(RunError::AmbiguityBudget { .. }) => 3,
            Failure::Run(RunError::ResampleCapExceeded { .. })
            | Failure::Run(RunError::Orbit(OrbitError::PrecisionExhausted { .. })) => 4,
            Failure::Run(_) | Failure::Io(_) => 1,
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Failure {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::Io(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Cmd::VerifyConditions(a) => resolve("verify-conditions", a, |_| Ok(())).and_then(run_conditions),
        Cmd::Estimate(a) => resolve("estimate", &a.common, |cfg| {
            if let Some(list) = &a.n {
                cfg.set("n", list)?;
            }
            Ok(())
        })
        .and_then(run_estimate),
        Cmd::Pair(a) => resolve("pair", &a.common, |cfg| {
            if let Some(m) = a.n_max {
                cfg.n_max = m;
            }
            Ok(())
        })
        .and_then(run_pair),
        Cmd::Zn(a) => resolve("zn", &a.common, |cfg| {
            if let Some(w) = &a.window {
                cfg.window = parse_window(w)?;
            }
            if let Some(l) = a.lambda {
                cfg.lambda = l;
            }
            Ok(())
        })
        .and_then(run_zn),
        Cmd::Dichotomy(a) => resolve("dichotomy", &a.common, |cfg| {
            if let Some(w) = &a.window {
                cfg.window = parse_window(w)?;
            }
            Ok(())
        })
        .and_then(run_dichotomy),
        Cmd::Cylinders(a) => resolve("cylinders", &a.common, |cfg| {
            if let Some(d) = a.depth {
                cfg.depth = d;
            }
            if let Some(p) = a.prune_len {
                cfg.prune_len = p;
            }
            Ok(())
        })
        .and_then(run_cylinders),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

/// Defaults, then the config file, then flags; `extra` applies the
/// command-specific flags.
fn resolve(
    command: &'static str,
    common: &CommonArgs,
    extra: impl FnOnce(&mut RunConfig) -> Result<(), String>,
) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::new(command);
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("config {}: {e}", path.display())))?;
        cfg.apply_file(&text).map_err(Failure::Config)?;
    }
    if let Some(s) = &common.system {
        cfg.system = s.clone();
    }
    if let Some(p) = &common.psi {
        cfg.psi = Some(RateFunction::parse(p).map_err(Failure::Config)?);
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.samples {
        cfg.samples = v;
    }
    if let Some(v) = common.workers {
        cfg.workers = v;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &common.format {
        cfg.set("format", v).map_err(Failure::Config)?;
    }
    if let Some(v) = common.max_bits {
        cfg.max_bits = v;
    }
    if let Some(v) = common.guard {
        cfg.guard = Some(v);
    }
    if let Some(v) = common.resample_cap {
        cfg.resample_cap = v;
    }
    if let Some(v) = common.ambiguity_cap {
        cfg.ambiguity_cap = Some(v);
    }
    extra(&mut cfg).map_err(Failure::Config)?;
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn system_of(cfg: &RunConfig) -> SystemDescriptor {
    parse_system(&cfg.system).expect("system validated")
}

fn estimate_opts(cfg: &RunConfig) -> EstimateOpts {
    EstimateOpts {
        samples: cfg.samples,
        master: cfg.seed,
        precision: PrecisionOpts {
            max_bits: cfg.max_bits,
            guard: cfg.guard,
            resample_cap: cfg.resample_cap,
        },
        ambiguity_cap: cfg.ambiguity_cap,
    }
}

fn run_conditions(cfg: RunConfig) -> Result<u8, Failure> {
    let sys = system_of(&cfg);
    let mut opts = ConditionsOpts::for_system(&sys);
    opts.reseed(cfg.seed);
    let report = with_workers(cfg.workers, || verify_conditions(&sys, &opts));
    for s in &report.sections {
        println!("{}: {} ({})", s.name, if s.pass { "PASS" } else { "FAIL" }, s.detail);
    }
    println!(
        "gamma = {} ({}); mass/r^delta in [{}, {}]",
        report.gamma,
        report.gamma_source,
        report.eta_lower.unwrap_or(f64::NAN),
        report.eta_upper.unwrap_or(f64::NAN),
    );
    let path = write_conditions(&cfg, &report)?;
    println!("wrote {}", path.display());
    Ok(if report.all_pass() { 0 } else { 1 })
}

fn run_estimate(cfg: RunConfig) -> Result<u8, Failure> {
    let sys = system_of(&cfg);
    let measure = Measure::for_system(&sys);
    let rate = cfg.psi.clone().expect("psi validated");
    let opts = estimate_opts(&cfg);
    let estimates =
        with_workers(cfg.workers, || estimate_hits(&sys, &measure, &cfg.ns, &rate, &opts))?;
    let mut table = Table {
        name: "an",
        columns: &["n", "psi", "psi_delta", "estimate", "stderr", "hits", "ambiguous"],
        rows: Vec::new(),
    };
    for est in &estimates {
        let psi = rate.eval(est.n);
        table.push(vec![
            Cell::Count(est.n as u64),
            Cell::Real(psi),
            Cell::Real(psi.powf(sys.delta)),
            Cell::Real(est.value),
            Cell::Real(est.std_error),
            Cell::Count(est.hits as u64),
            Cell::Count(est.ambiguous as u64),
        ]);
    }
    let path = write_table(&cfg, &table)?;
    println!("wrote {} ({} rows)", path.display(), table.rows.len());
    Ok(0)
}

fn run_pair(cfg: RunConfig) -> Result<u8, Failure> {
    let sys = system_of(&cfg);
    let measure = Measure::for_system(&sys);
    let rate = cfg.psi.clone().expect("psi validated");
    let opts = estimate_opts(&cfg);
    let matrix =
        with_workers(cfg.workers, || pair_matrix(&sys, &measure, cfg.n_max, &rate, &opts))?;
    let mut table = Table {
        name: "pair",
        columns: &["m", "n", "estimate", "stderr", "ratio"],
        rows: Vec::new(),
    };
    for m in 1..cfg.n_max {
        for n in (m + 1)..=cfg.n_max {
            let joint = matrix.joint_rate(m, n);
            let se = (joint * (1.0 - joint) / matrix.decided as f64).sqrt();
            let ratio = matrix.independence_ratio(m, n).map_or(f64::NAN, |(r, _)| r);
            table.push(vec![
                Cell::Count(m as u64),
                Cell::Count(n as u64),
                Cell::Real(joint),
                Cell::Real(se),
                Cell::Real(ratio),
            ]);
        }
    }
    let path = write_table(&cfg, &table)?;
    println!("wrote {} ({} pairs, {} decided samples)", path.display(), table.rows.len(), matrix.decided);
    Ok(0)
}

fn run_zn(cfg: RunConfig) -> Result<u8, Failure> {
    let sys = system_of(&cfg);
    let measure = Measure::for_system(&sys);
    let rate = cfg.psi.clone().expect("psi validated");
    let opts = estimate_opts(&cfg);
    let wc = with_workers(cfg.workers, || {
        window_count(&sys, &measure, cfg.window, &rate, cfg.lambda, &opts)
    })?;
    let mut table = Table {
        name: "zn",
        columns: &["N", "mean", "second_moment", "pz_lhs", "pz_rhs"],
        rows: Vec::new(),
    };
    table.push(vec![
        Cell::Count(cfg.window.1 as u64),
        Cell::Real(wc.mean),
        Cell::Real(wc.mean_sq),
        Cell::Real(wc.anti_lhs),
        Cell::Real(wc.anti_rhs),
    ]);
    let path = write_table(&cfg, &table)?;
    println!(
        "wrote {}: mean {} on [{}, {}], P(Z > {} E Z) = {} >= {}",
        path.display(),
        wc.mean,
        cfg.window.0,
        cfg.window.1,
        cfg.lambda,
        wc.anti_lhs,
        wc.anti_rhs
    );
    Ok(0)
}

fn verdict_name(v: SeriesVerdict) -> &'static str {
    match v {
        SeriesVerdict::Convergent => "convergent",
        SeriesVerdict::Divergent => "divergent",
        SeriesVerdict::HeuristicConvergent => "heuristic-convergent",
        SeriesVerdict::HeuristicDivergent => "heuristic-divergent",
    }
}

fn run_dichotomy(cfg: RunConfig) -> Result<u8, Failure> {
    let sys = system_of(&cfg);
    let measure = Measure::for_system(&sys);
    let rate = cfg.psi.clone().expect("psi validated");
    let opts = estimate_opts(&cfg);
    let windows = doubling_windows(cfg.window.0, cfg.window.1);
    let report = with_workers(cfg.workers, || {
        dichotomy_experiment(&sys, &measure, &rate, cfg.window.0, windows, &opts)
    })?;
    let mut table = Table {
        name: "dichotomy",
        columns: &["window_start", "window_end", "hit_fraction", "series_partial_sum", "verdict"],
        rows: Vec::new(),
    };
    for w in &report.windows {
        table.push(vec![
            Cell::Count(w.range.0 as u64),
            Cell::Count(w.range.1 as u64),
            Cell::Real(w.any_hit_fraction),
            Cell::Real(w.series_partial),
            Cell::Text(verdict_name(report.verdict).to_string()),
        ]);
    }
    let path = write_table(&cfg, &table)?;
    println!("wrote {} ({} windows)", path.display(), table.rows.len());
    println!("series {}: {}", verdict_name(report.verdict), report.interpretation);
    Ok(0)
}

fn run_cylinders(cfg: RunConfig) -> Result<u8, Failure> {
    let sys = system_of(&cfg);
    let mut table = Table {
        name: "cylinders",
        columns: &[
            "depth",
            "cylinders",
            "min_length",
            "max_length",
            "omitted_length",
            "ksum_lo",
            "ksum_hi",
        ],
        rows: Vec::new(),
    };
    for depth in 1..=cfg.depth {
        let opts = EnumerateOpts { depth, prune_len: cfg.prune_len, ..Default::default() };
        let e = enumerate(&sys, &opts).map_err(RunError::from)?;
        let mut min_len = f64::INFINITY;
        let mut max_len = 0.0f64;
        for r in &e.records {
            let len = r.length().to_f64();
            min_len = min_len.min(len);
            max_len = max_len.max(len);
        }
        let sums = expansion_sum(&sys, &opts).map_err(RunError::from)?;
        table.push(vec![
            Cell::Count(depth as u64),
            Cell::Count(e.records.len() as u64),
            Cell::Real(min_len),
            Cell::Real(max_len),
            Cell::Real(e.omitted_length.to_f64()),
            Cell::Real(sums.lo.to_f64()),
            Cell::Real(sums.hi.to_f64()),
        ]);
    }
    let path = write_table(&cfg, &table)?;
    println!("wrote {} ({} depths)", path.display(), table.rows.len());
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use config::uses_sampling;

    #[test]
    fn exit_codes_split_by_failure_class() {
        assert_eq!(Failure::Config("x".into()).code(), 2);
        assert_eq!(Failure::Run(RunError::AmbiguityBudget { rate: 0.5, cap: 0.1 }).code(), 3);
        assert_eq!(
            Failure::Run(RunError::ResampleCapExceeded {
                index: 0,
                cap: 16,
                source: OrbitError::PrecisionExhausted { cap: 4096 },
            })
            .code(),
            4
        );
        assert_eq!(
            Failure::Run(RunError::Orbit(OrbitError::PrecisionExhausted { cap: 64 })).code(),
            4
        );
        assert_eq!(Failure::Run(RunError::Orbit(OrbitError::OutsideSupport)).code(), 1);
    }

    #[test]
    fn sampling_commands_are_the_four_estimators() {
        for c in ["estimate", "pair", "zn", "dichotomy"] {
            assert!(uses_sampling(c));
        }
        for c in ["verify-conditions", "cylinders"] {
            assert!(!uses_sampling(c));
        }
    }
}
