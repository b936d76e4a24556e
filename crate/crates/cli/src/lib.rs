//! Command-line front end: model loading, experiment dispatch, deterministic
//! seeding and artifact emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use bpre::annealed::{annealed_table, fekete_bounds, smallest_reachable, AnnealedTable, FeketeTable, CLOSURE_CAP};
use bpre::lab::{
    example1_suite, example2_suite, monotone_rho, mrca_regime_suite, positivity_diagnostics, rho_report,
    MonotoneRho, MrcaRegimeReport, PositivityDiagnostics, RhoReport, DEFAULT_DELTA,
};
use bpre::spine::{conditioned_mrca_sample, simulate_forward, MrcaDistribution, MrcaMethod, Stream};
use bpre::{EnvironmentModel, Error, Regime};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONTRACT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Largest population size tallied individually by `simulate`.
const SMALL_VALUE_BINS: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "bpre", version, about = "Small values of supercritical branching processes in random environment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward Monte Carlo of Z_n from one individual.
    Simulate(SimulateArgs),
    /// Exact annealed small-value table P_{z0}(Z_n = j) and Fekete bounds.
    Exact(ExactArgs),
    /// Certified bounds and estimates for the small-value rate.
    Rho(RhoArgs),
    /// Conditioned MRCA laws given Z_n = 2.
    Mrca(MrcaArgs),
    /// The two-environment counterexamples.
    Examples(ExamplesArgs),
    /// Model diagnostics.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub replicates: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n_max: usize,
    /// Largest target size j; the generating functions are truncated there.
    #[arg(long, default_value_t = 4)]
    pub degree: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RhoArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n_max: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MrcaArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub replicates: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExamplesArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub which: u8,
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 10)]
    pub a: usize,
    #[arg(long, default_value_t = 16)]
    pub n_max: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_budget() => EXIT_BUDGET,
            _ => EXIT_CONTRACT,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// What a run produced: the one-line summary and the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub written: Vec<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. The summary goes to stdout and errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> CliResult<Outcome> {
    match command {
        Command::Simulate(a) => run_simulate(a),
        Command::Exact(a) => run_exact(a),
        Command::Rho(a) => run_rho(a),
        Command::Mrca(a) => run_mrca(a),
        Command::Examples(a) => run_examples(a),
        Command::Validate(a) => run_validate(a),
    }
}

fn load_model(path: &Path) -> CliResult<EnvironmentModel> {
    if !path.is_file() {
        return Err(CliError::Contract(format!("model file {} not found", path.display())));
    }
    Ok(EnvironmentModel::from_path(path)?)
}

fn require_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Contract("seed required: pass --seed".into()))
}

fn check_out(out: &Option<PathBuf>) -> CliResult<()> {
    if let Some(path) = out {
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
        if let Some(dir) = parent {
            if !dir.is_dir() {
                return Err(CliError::Contract(format!("output directory {} does not exist", dir.display())));
            }
        }
    }
    Ok(())
}

/// Canonical configuration of a stochastic run. The model enters through its
/// canonical JSON so that the hash does not depend on file paths.
#[derive(Debug, Serialize)]
struct ConfigRecord<'a> {
    command: &'a str,
    model: &'a EnvironmentModel,
    n_list: &'a [usize],
    replicates: u64,
    seed: u64,
    delta: Option<f64>,
    version: &'a str,
}

fn config_hash(record: &ConfigRecord<'_>) -> String {
    let json = serde_json::to_string(record).expect("config serialises");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> CliResult<Vec<PathBuf>> {
    let Some(path) = out else { return Ok(Vec::new()) };
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    write_file(path, &text)?;
    Ok(vec![path.clone()])
}

/// Writes the JSON report and, next to it, the plot CSV (same stem, `.csv`).
fn write_json_and_csv<T: Serialize>(out: &Option<PathBuf>, value: &T, csv: &str) -> CliResult<Vec<PathBuf>> {
    let mut written = write_json(out, value)?;
    if let Some(path) = out {
        let csv_path = path.with_extension("csv");
        if &csv_path != path {
            write_file(&csv_path, csv)?;
            written.push(csv_path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub config_hash: String,
    pub seed: u64,
    pub model_id: String,
    pub n: usize,
    pub replicates: u64,
    pub survivors: u64,
    /// counts[j - 1] = #{Z_n = j}, j = 1..=8.
    pub small_value_counts: Vec<u64>,
    pub mean_size: f64,
    /// Sample mean of Z_n e^{-S_n}; its expectation is 1.
    pub mean_normalized: f64,
    pub normalized_std_error: f64,
}

pub fn simulate_report(model: &EnvironmentModel, n: usize, replicates: u64, seed: u64) -> CliResult<SimulateReport> {
    if replicates == 0 {
        return Err(CliError::Contract("replicates must be >= 1".into()));
    }
    let record = ConfigRecord {
        command: "simulate",
        model,
        n_list: &[n],
        replicates,
        seed,
        delta: None,
        version: env!("CARGO_PKG_VERSION"),
    };
    let draws: Vec<(u64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let traj = simulate_forward(model, 1, n, &mut Stream::new(seed, i))?;
            let z = traj.sizes[n];
            let s_n: f64 = traj.states.iter().map(|&k| model.laws()[k].log_mean()).sum();
            Ok((z, z as f64 * (-s_n).exp()))
        })
        .collect::<bpre::Result<_>>()?;
    let r = replicates as f64;
    let mut counts = vec![0u64; SMALL_VALUE_BINS];
    let mut survivors = 0;
    for &(z, _) in &draws {
        if z > 0 {
            survivors += 1;
        }
        if (1..=SMALL_VALUE_BINS as u64).contains(&z) {
            counts[z as usize - 1] += 1;
        }
    }
    let mean_size = draws.iter().map(|d| d.0 as f64).sum::<f64>() / r;
    let mean_normalized = draws.iter().map(|d| d.1).sum::<f64>() / r;
    let var = if replicates > 1 {
        draws.iter().map(|d| (d.1 - mean_normalized).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    Ok(SimulateReport {
        config_hash: config_hash(&record),
        seed,
        model_id: model.fingerprint(),
        n,
        replicates,
        survivors,
        small_value_counts: counts,
        mean_size,
        mean_normalized,
        normalized_std_error: (var / r).sqrt(),
    })
}

fn run_simulate(a: &SimulateArgs) -> CliResult<Outcome> {
    let seed = require_seed(a.seed)?;
    check_out(&a.out)?;
    let model = load_model(&a.model)?;
    let rep = simulate_report(&model, a.n, a.replicates, seed)?;
    let written = write_json(&a.out, &rep)?;
    let summary = format!(
        "simulate: n={} replicates={} survivors={} P(Z_n=1)~{:.6e} mean Z_n e^-S_n={:.4}+-{:.4} [estimated] seed={} config={}",
        rep.n,
        rep.replicates,
        rep.survivors,
        rep.small_value_counts[0] as f64 / rep.replicates as f64,
        rep.mean_normalized,
        rep.normalized_std_error,
        rep.seed,
        &rep.config_hash[..16]
    );
    Ok(Outcome { summary, written })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactReport {
    pub model_id: String,
    pub z0: usize,
    pub table: AnnealedTable,
    pub fekete: FeketeTable,
}

pub fn exact_report(model: &EnvironmentModel, n_max: usize, degree: usize) -> CliResult<ExactReport> {
    if degree == 0 {
        return Err(CliError::Contract("degree must be >= 1".into()));
    }
    let z0 = smallest_reachable(model, CLOSURE_CAP)?.z0;
    let targets: Vec<usize> = (1..=degree).collect();
    let table = annealed_table(model, z0, &targets, n_max)?;
    let fekete = fekete_bounds(model, z0, n_max)?;
    Ok(ExactReport { model_id: model.fingerprint(), z0, table, fekete })
}

fn run_exact(a: &ExactArgs) -> CliResult<Outcome> {
    check_out(&a.out)?;
    let model = load_model(&a.model)?;
    let rep = exact_report(&model, a.n_max, a.degree)?;
    let written = write_json_and_csv(&a.out, &rep, &rep.fekete.to_csv())?;
    let summary = format!(
        "exact: z0={} n_max={} P(Z_n=z0)={:.6e} min a_n/n={:.6} [certified]",
        rep.z0,
        a.n_max,
        rep.table.get(a.n_max, rep.z0).unwrap_or(f64::NAN),
        rep.fekete.upper_bound()
    );
    Ok(Outcome { summary, written })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum RhoOutput {
    Extinction(Box<RhoReport>),
    Monotone(MonotoneRho),
}

fn run_rho(a: &RhoArgs) -> CliResult<Outcome> {
    check_out(&a.out)?;
    let model = load_model(&a.model)?;
    if model.one_step_extinction() <= 0.0 {
        let m = monotone_rho(&model)?;
        let written = write_json(&a.out, &RhoOutput::Monotone(m))?;
        let summary = format!("rho: no extinction possible, monotone case rho={:.6} [certified]", m.rho);
        return Ok(Outcome { summary, written });
    }
    let rep = rho_report(&model, a.n_max)?;
    let csv = emit_plot_data(&PlotSource::Rho(&rep));
    let summary = format!(
        "rho: z0={} fekete_upper={:.6} [certified] lambda0={:.6} [certified]{}{}",
        rep.z0,
        rep.certified.fekete_upper,
        rep.certified.lambda0.lambda0,
        rep.certified
            .lf_closed_form
            .as_ref()
            .map(|lf| format!(" lf_rho={:.6} ({}) [certified]", lf.rho, lf.regime))
            .unwrap_or_default(),
        rep.estimated
            .slope_estimate
            .map(|s| format!(" slope={s:.6} [estimated]"))
            .unwrap_or_default(),
    );
    let written = write_json_and_csv(&a.out, &RhoOutput::Extinction(Box::new(rep)), &csv)?;
    Ok(Outcome { summary, written })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrcaArtifact {
    pub config_hash: String,
    pub seed: u64,
    pub model_id: String,
    pub method: MrcaMethod,
    /// Regime suite for all-LF models.
    pub regime_report: Option<MrcaRegimeReport>,
    /// Raw conditioned laws otherwise.
    pub distributions: Vec<MrcaDistribution>,
}

pub fn mrca_artifact(
    model: &EnvironmentModel,
    n_list: &[usize],
    replicates: u64,
    seed: u64,
    delta: f64,
) -> CliResult<MrcaArtifact> {
    if n_list.is_empty() {
        return Err(CliError::Contract("--n-list needs at least one horizon".into()));
    }
    let record = ConfigRecord {
        command: "mrca",
        model,
        n_list,
        replicates,
        seed,
        delta: Some(delta),
        version: env!("CARGO_PKG_VERSION"),
    };
    let (regime_report, distributions) = if model.all_lf() {
        (Some(mrca_regime_suite(model, n_list, replicates, seed, delta)?), Vec::new())
    } else {
        let ds = n_list
            .iter()
            .map(|&n| {
                conditioned_mrca_sample(
                    model,
                    n,
                    2,
                    MrcaMethod::Geiger,
                    replicates,
                    bpre::lab::horizon_seed(seed, n),
                )
            })
            .collect::<bpre::Result<Vec<_>>>()?;
        (None, ds)
    };
    Ok(MrcaArtifact {
        config_hash: config_hash(&record),
        seed,
        model_id: model.fingerprint(),
        method: MrcaMethod::Geiger,
        regime_report,
        distributions,
    })
}

fn run_mrca(a: &MrcaArgs) -> CliResult<Outcome> {
    let seed = require_seed(a.seed)?;
    check_out(&a.out)?;
    let model = load_model(&a.model)?;
    let art = mrca_artifact(&model, &a.n_list, a.replicates, seed, a.delta)?;
    let csv = emit_plot_data(&PlotSource::Mrca(&art));
    let accepted: Vec<String> = match &art.regime_report {
        Some(r) => r.points.iter().map(|p| format!("{}:{}", p.n, p.distribution.accepted)).collect(),
        None => art.distributions.iter().map(|d| format!("{}:{}", d.n, d.accepted)).collect(),
    };
    let regime = art.regime_report.as_ref().map(|r| format!(" regime={}", r.regime)).unwrap_or_default();
    let summary = format!(
        "mrca:{regime} accepted(n:count)={} [estimated] seed={} config={}",
        accepted.join(","),
        art.seed,
        &art.config_hash[..16]
    );
    let written = write_json_and_csv(&a.out, &art, &csv)?;
    Ok(Outcome { summary, written })
}

fn run_examples(a: &ExamplesArgs) -> CliResult<Outcome> {
    check_out(&a.out)?;
    if a.which == 1 {
        let rep = example1_suite(a.r, a.p, a.n_max)?;
        let written = write_json(&a.out, &rep)?;
        let summary = format!(
            "examples 1: max |log P_1(Z_n=1) - n log r|={:.3e} final gap={} [certified] {}",
            rep.max_log_error,
            rep.final_gap.map_or("n/a".to_string(), |g| format!("{g:.6}")),
            rep.note
        );
        Ok(Outcome { summary, written })
    } else {
        let rep = example2_suite(a.r, a.p, a.a, a.n_max)?;
        let written = write_json(&a.out, &rep)?;
        let summary = format!(
            "examples 2: fixed point={:.12} residual={:.1e} bounds separate={} [certified] {}",
            rep.fixed_point, rep.fixed_point_residual, rep.bounds_separate, rep.note
        );
        Ok(Outcome { summary, written })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub model_id: String,
    pub diagnostics: PositivityDiagnostics,
    /// None when the closure search failed.
    pub z0: Option<usize>,
    pub closure: Vec<usize>,
    pub closure_capped: bool,
    pub warnings: Vec<String>,
}

pub fn validate_model(model: &EnvironmentModel) -> ValidationReport {
    let diagnostics = positivity_diagnostics(model);
    let mut warnings = Vec::new();
    if diagnostics.drift == 0.0 {
        warnings.push("not supercritical boundary: E[X]=0".to_string());
    } else if diagnostics.drift < 0.0 {
        warnings.push(format!("not supercritical: E[X]={:.6}", diagnostics.drift));
    }
    if diagnostics.one_step_extinction == 0.0 {
        warnings.push("P(Z_1=0)=0: rates follow the monotone case".to_string());
    }
    let (z0, closure, closure_capped) = match smallest_reachable(model, CLOSURE_CAP) {
        Ok(r) => (Some(r.z0), r.closure.into_iter().collect(), r.capped),
        Err(e) => {
            warnings.push(format!("no reachable positive size: {e}"));
            (None, Vec::new(), false)
        }
    };
    ValidationReport { model_id: model.fingerprint(), diagnostics, z0, closure, closure_capped, warnings }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn run_validate(a: &ValidateArgs) -> CliResult<Outcome> {
    check_out(&a.out)?;
    let model = load_model(&a.model)?;
    let rep = validate_model(&model);
    let d = &rep.diagnostics;
    let mut summary = format!(
        "validate: supercritical: {} (E[X]={:.6}), P(Z_1=0)={:.6}, gamma={:.6}, positive rate conditions: {}, lattice: {}, LF-pure: {}",
        yes_no(d.supercritical),
        d.drift,
        d.one_step_extinction,
        d.gamma,
        if d.positive_rate_applies { "pass" } else { "fail" },
        yes_no(d.lattice),
        yes_no(d.lf_pure),
    );
    if let Some(regime) = d.regime {
        let _ = write!(summary, ", regime: {}", regime_label(regime));
    }
    match rep.z0 {
        Some(z0) => {
            let head: Vec<String> = rep.closure.iter().take(4).map(|k| k.to_string()).collect();
            let more = if rep.closure.len() > 4 { ", ..." } else { "" };
            let _ = write!(
                summary,
                ", z0={z0}, closure={{{}{more}}} ({} sizes{})",
                head.join(", "),
                rep.closure.len(),
                if rep.closure_capped { ", capped" } else { "" }
            );
        }
        None => summary.push_str(", z0: none"),
    }
    for w in &rep.warnings {
        let _ = write!(summary, "\nwarning: {w}");
    }
    let written = write_json(&a.out, &rep)?;
    Ok(Outcome { summary, written })
}

fn regime_label(r: Regime) -> &'static str {
    match r {
        Regime::Strongly => "Strongly",
        Regime::Intermediate => "Intermediate",
        Regime::Weakly => "Weakly",
    }
}

/// Reports that can be flattened into plot data.
pub enum PlotSource<'a> {
    Rho(&'a RhoReport),
    Mrca(&'a MrcaArtifact),
}

fn fmt_num(x: f64) -> String {
    format!("{x:.15e}")
}

fn push_row(out: &mut String, n: usize, quantity: &str, k: Option<usize>, value: f64, lo: Option<f64>, hi: Option<f64>) {
    let k = k.map(|k| k.to_string()).unwrap_or_default();
    let lo = lo.map(fmt_num).unwrap_or_default();
    let hi = hi.map(fmt_num).unwrap_or_default();
    let _ = writeln!(out, "{n},{quantity},{k},{},{lo},{hi}", fmt_num(value));
}

fn push_distribution(out: &mut String, d: &MrcaDistribution) {
    for b in &d.bins {
        let p = d.prob(b.k);
        let se = d.std_error(b.k);
        push_row(out, d.n, "mrca_prob", Some(b.k), p, Some((p - 1.96 * se).max(0.0)), Some((p + 1.96 * se).min(1.0)));
    }
}

/// Tidy CSV with header `n,quantity,k,value,lo,hi`; `k` and the interval
/// columns are empty where they do not apply.
pub fn emit_plot_data(source: &PlotSource<'_>) -> String {
    let mut out = String::from("n,quantity,k,value,lo,hi\n");
    match source {
        PlotSource::Rho(rep) => {
            let c = &rep.certified;
            for row in &c.fekete.rows {
                push_row(&mut out, row.n, "a_n_over_n", None, row.a_n_over_n, None, None);
            }
            for row in &c.fekete.rows {
                push_row(&mut out, row.n, "lambda0", None, c.lambda0.lambda0, None, None);
            }
            if let Some(lf) = &c.lf_closed_form {
                for row in &c.fekete.rows {
                    push_row(&mut out, row.n, "lf_rho", None, lf.rho, None, None);
                }
            }
            for row in &c.fekete.rows {
                if let Some(s) = row.slope {
                    push_row(&mut out, row.n, "slope_estimate", None, s, None, None);
                }
            }
        }
        PlotSource::Mrca(art) => {
            if let Some(r) = &art.regime_report {
                for p in &r.points {
                    push_distribution(&mut out, &p.distribution);
                    if let Some(exact) = &p.exact {
                        for (i, q) in exact.iter().enumerate() {
                            push_row(&mut out, p.n, "mrca_exact", Some(i + 1), *q, None, None);
                        }
                    }
                }
            }
            for d in &art.distributions {
                push_distribution(&mut out, d);
            }
        }
    }
    out
}
