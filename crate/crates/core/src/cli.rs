//! `cbmm` command-line interface.
//!
//! Exit codes: 0 on success, 1 for input or validation errors, 2 for
//! numerical failures.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::fit::{init_params, FitConfig, FitError};
use crate::harness::{
    flow_csv, rank_models, ranking_csv, replicate_csv, resolve_threads, run_replicates, stability_csv,
    stability_fits, stability_table, timed_fit, HarnessError, DEFAULT_REPLICATES,
};
use crate::io::{
    metrics_csv, parse_matrix, read_fit_result, read_ground_truth, read_spec, write_fit_result, write_ground_truth,
    write_spec, write_triplets, DenseLabels, GroundTruthFile, MatrixFormat,
};
use crate::link::Temperature;
use crate::metrics::{evaluate, Truth};
use crate::oracle::{fit_oracle, OracleConfig};
use crate::response::ResponseMatrix;
use crate::synthetic::{generate, Pattern, SyntheticSpec};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Fit(f) => f.into(),
            HarnessError::Cell { source: FitError::NonFiniteLoss { .. }, .. } => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cbmm", version, about = "Constrained block MM estimation of 2PL IRT parameters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit abilities, discriminations and easiness to a response matrix.
    Fit(FitCmd),
    /// Generate a synthetic response matrix and its ground truth.
    Simulate(SimulateCmd),
    /// Score a fit against a ground-truth file.
    Metrics(MetricsCmd),
    /// Compare accuracy and ability rankings.
    Rank(RankCmd),
    /// Agreement of fits across initialization scales.
    Stability(StabilityCmd),
    /// Simulate-and-fit replicates for one synthetic design.
    Replicate(ReplicateCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Triplet,
    Dense,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Triplet => MatrixFormat::Triplet,
            FormatArg::Dense => MatrixFormat::Dense,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cbmm,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    Mcar,
    Mar,
    Mnar,
}

impl From<PatternArg> for Pattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Mcar => Pattern::Mcar,
            PatternArg::Mar => Pattern::Mar,
            PatternArg::Mnar => Pattern::Mnar,
        }
    }
}

#[derive(Debug, Args)]
pub struct MatrixInput {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "triplet")]
    pub format: FormatArg,
    /// Dense files: first row holds column labels.
    #[arg(long)]
    pub header_row: bool,
    /// Dense files: first column holds row labels.
    #[arg(long)]
    pub label_col: bool,
}

impl MatrixInput {
    fn load(&self) -> Result<ResponseMatrix, CliError> {
        let labels = DenseLabels { header_row: self.header_row, label_col: self.label_col };
        parse_matrix(&self.input, self.format.into(), labels).map_err(input)
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Relative loss-change tolerance (default 1e-4; 1e-10 for the oracle).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap (default 1000; 20000 for the oracle).
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub init_sd_log_a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub init_sd_b: f64,
    /// Box bound on |theta|, a and |b|.
    #[arg(long)]
    pub clamp_bound: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> Result<FitConfig, CliError> {
        let defaults = FitConfig::default();
        let cfg = FitConfig {
            sigma: Temperature::new(self.sigma).map_err(input)?,
            tol: self.tol.unwrap_or(defaults.tol),
            max_iter: self.max_iter.unwrap_or(defaults.max_iter),
            seed: self.seed,
            init_sd_log_a: self.init_sd_log_a,
            init_sd_b: self.init_sd_b,
            clamp_bound: self.clamp_bound,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub matrix: MatrixInput,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "cbmm")]
    pub method: MethodArg,
    /// Set discriminations below this value to exactly zero after fitting.
    #[arg(long)]
    pub a_zero_threshold: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Read the synthetic spec from a TOML file; explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
    #[arg(long)]
    pub mar_beta: Option<f64>,
    #[arg(long)]
    pub mnar_col_rate: Option<f64>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SimArgs {
    fn spec(&self) -> Result<SyntheticSpec, CliError> {
        let mut spec = match &self.config {
            Some(path) => read_spec(path).map_err(input)?,
            None => SyntheticSpec::default(),
        };
        if let Some(v) = self.n {
            spec.n_models = v;
        }
        if let Some(v) = self.j {
            spec.n_items = v;
        }
        if let Some(v) = self.sigma {
            spec.sigma = v;
        }
        if let Some(v) = self.rho {
            spec.rho = v;
        }
        if let Some(v) = self.pattern {
            spec.pattern = v.into();
        }
        if let Some(v) = self.mar_beta {
            spec.mar_beta = v;
        }
        if let Some(v) = self.mnar_col_rate {
            spec.mnar_col_rate = Some(v);
        }
        if let Some(v) = self.sparsity {
            spec.sparsity = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        spec.validate().map_err(input)?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Response matrix output (triplet format).
    #[arg(long, default_value = "responses.csv")]
    pub output: PathBuf,
    /// Ground-truth output (JSON).
    #[arg(long, default_value = "truth.json")]
    pub truth: PathBuf,
    /// Also write the effective spec as TOML.
    #[arg(long)]
    pub write_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsCmd {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankCmd {
    #[command(flatten)]
    pub matrix: MatrixInput,
    #[arg(long)]
    pub fit: PathBuf,
    /// Restrict the summary correlation to the top percentage of models by accuracy.
    #[arg(long)]
    pub top_pct: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, default_value = "ranking.csv")]
    pub output: PathBuf,
    #[arg(long, default_value = "flow.csv")]
    pub flow_output: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityCmd {
    #[command(flatten)]
    pub matrix: MatrixInput,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Initialization variances of log a and b.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub scales: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = "stability.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplicateCmd {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub fit_seed: u64,
    #[arg(long)]
    pub clamp_bound: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = "replicates.csv")]
    pub output: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn run_fit(cmd: &FitCmd) -> Result<(), CliError> {
    let m = cmd.matrix.load()?;
    let mut cfg = cmd.solver.config()?;
    let mut result = match cmd.method {
        MethodArg::Cbmm => timed_fit(&m, &cfg, None)?.0,
        MethodArg::Oracle => {
            let defaults = OracleConfig::for_temperature(cfg.sigma);
            let ocfg = OracleConfig {
                tol: cmd.solver.tol.unwrap_or(defaults.tol),
                max_iter: cmd.solver.max_iter.unwrap_or(defaults.max_iter),
                seed: cfg.seed,
                ..defaults
            };
            cfg.tol = ocfg.tol;
            let init = init_params(m.n_models(), m.n_items(), &cfg);
            fit_oracle(&m, cfg.sigma, &ocfg, &init)?
        }
    };
    if let Some(threshold) = cmd.a_zero_threshold {
        for v in &mut result.params.a {
            if *v < threshold {
                *v = 0.0;
            }
        }
    }
    write_fit_result(&result, &cmd.output).map_err(input)?;
    println!(
        "iterations={} final_loss={} converged={}",
        result.iterations,
        result.final_loss(),
        result.converged
    );
    Ok(())
}

fn run_simulate(cmd: &SimulateCmd) -> Result<(), CliError> {
    let spec = cmd.sim.spec()?;
    let g = generate(&spec).map_err(input)?;
    write_triplets(&g.responses, &cmd.output).map_err(input)?;
    write_ground_truth(&GroundTruthFile::from_truth(&g, &spec), &cmd.truth).map_err(input)?;
    if let Some(path) = &cmd.write_config {
        write_spec(&spec, path).map_err(input)?;
    }
    println!(
        "n_models={} n_items={} observed={} realized_missing_rate={} zero_items={}",
        spec.n_models,
        spec.n_items,
        g.responses.n_observed(),
        g.responses.missing_rate(),
        g.zero_mask.len()
    );
    Ok(())
}

fn run_metrics(cmd: &MetricsCmd) -> Result<(), CliError> {
    let r = read_fit_result(&cmd.fit).map_err(input)?;
    let truth = read_ground_truth(&cmd.truth).map_err(input)?;
    if truth.n_models != r.params.n_models() || truth.n_items != r.params.n_items() {
        return Err(CliError::Input(format!(
            "fit is {}x{} but ground truth is {}x{}",
            r.params.n_models(),
            r.params.n_items(),
            truth.n_models,
            truth.n_items
        )));
    }
    let scores = truth.scores().map_err(input)?;
    let t = Temperature::new(truth.sigma).map_err(input)?;
    let view = Truth {
        theta: &truth.theta,
        a: &truth.a,
        b: &truth.b,
        scores: scores.as_deref(),
    };
    let report = evaluate(&view, &r.params, t).map_err(input)?;
    let csv = metrics_csv(&report);
    match &cmd.output {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_rank(cmd: &RankCmd) -> Result<(), CliError> {
    let m = cmd.matrix.load()?;
    let r = read_fit_result(&cmd.fit).map_err(input)?;
    let report = rank_models(&m, &r.params, cmd.top_pct, cmd.top_k)?;
    write_text(&cmd.output, &ranking_csv(&report))?;
    write_text(&cmd.flow_output, &flow_csv(&report.flow))?;
    let top = report.spearman_top.map(|v| format!(" spearman_top={v}")).unwrap_or_default();
    println!("spearman={}{} cv_a={}", report.spearman, top, report.cv_a);
    Ok(())
}

fn run_stability(cmd: &StabilityCmd) -> Result<(), CliError> {
    let m = cmd.matrix.load()?;
    let cfg = cmd.solver.config()?;
    let threads = resolve_threads(cmd.threads);
    let grid = stability_fits(&m, &cmd.scales, cmd.replicates, &cfg, threads)?;
    let cells = stability_table(&cmd.scales, &grid)?;
    write_text(&cmd.output, &stability_csv(&cells))?;
    println!("cells={} fits={}", cells.len(), cmd.scales.len() * cmd.replicates);
    Ok(())
}

fn run_replicate(cmd: &ReplicateCmd) -> Result<(), CliError> {
    let spec = cmd.sim.spec()?;
    let defaults = FitConfig::default();
    let cfg = FitConfig {
        sigma: spec.temperature(),
        tol: cmd.tol.unwrap_or(defaults.tol),
        max_iter: cmd.max_iter.unwrap_or(defaults.max_iter),
        seed: cmd.fit_seed,
        clamp_bound: cmd.clamp_bound,
        ..defaults
    };
    let rows = run_replicates(&spec, &cfg, cmd.replicates, resolve_threads(cmd.threads))?;
    write_text(&cmd.output, &replicate_csv(&rows))?;
    println!("replicates={}", rows.len());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(c) => run_fit(c),
        Command::Simulate(c) => run_simulate(c),
        Command::Metrics(c) => run_metrics(c),
        Command::Rank(c) => run_rank(c),
        Command::Stability(c) => run_stability(c),
        Command::Replicate(c) => run_replicate(c),
    }
}
