//! `lvgm`: simulate, identify and score AR latent-variable graphical models.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lvgm::covariance::{log_returns, DataMatrix};
use lvgm::io::{read_json, to_json_string, write_json};
use lvgm::model::{
    assemble_joint, mean_abs_coherence, partial_coherence, spectral_errors, write_coherence_csv,
    write_errors_csv, write_mean_coherence_csv,
};
use lvgm::scoring::{
    model_report, rescore, sweep, sweep_report, ModelReport, RegPath, ScoreRule, SweepConfig,
};
use lvgm::simulate::{gen_model_with, sample, GenConfig, TrueModel, TrueModelJson};
use lvgm::slsolve::RegParams;
use lvgm::specpoly::FreqGrid;

#[derive(Parser, Debug)]
#[command(
    name = "lvgm",
    version,
    about = "Identify AR latent-variable graphical models from time series"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a random true model and sample data from it.
    Simulate(SimulateArgs),
    /// Sweep a regularization path, select a model and export it.
    Identify(IdentifyArgs),
    /// Rescore a stored model against a data file.
    Score(ScoreArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Manifest variables.
    #[arg(long, default_value_t = 15)]
    m: usize,
    /// Latent variables.
    #[arg(long, default_value_t = 1)]
    l: usize,
    /// AR order.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Expected off-diagonal density of the true graph.
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Sample length.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Discarded initial samples; derived from the model when unset.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Per-variable manifest variance.
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    /// Output directory for `truth.json` and `data.csv`.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RuleArg {
    /// `f = D·p`.
    Product,
    /// `f = D + α p`.
    Additive,
}

#[derive(Args, Debug)]
struct ScoringArgs {
    /// Bartlett window of the reference correlogram; `⌈N^{1/3}⌉` when unset.
    #[arg(long)]
    window: Option<usize>,
    /// Frequency grid size.
    #[arg(long, default_value_t = 512)]
    grid_points: usize,
    #[arg(long, value_enum, default_value_t = RuleArg::Product)]
    rule: RuleArg,
    /// Weight of `p` in the additive rule; `1/N` when unset.
    #[arg(long)]
    alpha: Option<f64>,
    /// Treat the input as prices and convert to percentage log returns.
    #[arg(long)]
    returns: bool,
    /// Keep the sample mean.
    #[arg(long)]
    no_demean: bool,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    /// Data CSV, one column per variable, optional header.
    #[arg(long, short)]
    data: PathBuf,
    /// AR order.
    #[arg(long, short, default_value_t = 1)]
    n: usize,
    /// λ range of the log grid.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.1, 10.0])]
    lambda: Vec<f64>,
    /// γ range of the log grid.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.1, 10.0], conflicts_with = "lambda_gamma")]
    gamma: Vec<f64>,
    /// Grid over λγ instead of γ.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    lambda_gamma: Option<Vec<f64>>,
    /// Grid points per axis.
    #[arg(long, num_args = 2, value_names = ["K_LAMBDA", "K_GAMMA"], default_values_t = [5, 5])]
    points: Vec<usize>,
    /// Explicit path: JSON array of `{"lambda": .., "gamma": ..}`; overrides the grid.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Force `l = 0` (sparse-only identification).
    #[arg(long)]
    no_latent: bool,
    /// True model JSON; enables the error-curve export.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Worker threads for the path sweep.
    #[arg(long)]
    threads: Option<usize>,
    /// Optimality tolerance of both solvers.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long, short)]
    data: PathBuf,
    /// Model JSON written by `identify`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Invalid command-line configuration.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 1;
    }
    if let Some(e) = err.downcast_ref::<lvgm::Error>() {
        return match e {
            lvgm::Error::Io(_)
            | lvgm::Error::Csv(_)
            | lvgm::Error::Json(_)
            | lvgm::Error::InvalidData(_) => 3,
            e if e.is_solver_failure() => 2,
            _ => 1,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some()
        || err.downcast_ref::<serde_json::Error>().is_some()
    {
        return 3;
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Identify(a) => cmd_identify(&a),
        Command::Score(a) => cmd_score(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(config_err("--samples must be positive"));
    }
    if !(a.variance > 0.0) {
        return Err(config_err("--variance must be positive"));
    }
    let mut cfg = GenConfig::new(a.m, a.l, a.n, a.density, a.seed);
    cfg.variance = a.variance;
    let model = gen_model_with(&cfg)?;
    let data = sample(&model, a.samples, a.burn_in, a.seed)?;
    ensure_dir(&a.out)?;
    write_json(a.out.join("truth.json"), &model.to_json())?;
    let path = a.out.join("data.csv");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    data.write_csv(BufWriter::new(file))?;
    println!(
        "true model: m={} l={} n={} edges={} -> {}",
        model.m(),
        model.l(),
        model.n(),
        model.edges().len(),
        a.out.display()
    );
    Ok(())
}

fn load_data(path: &Path, returns: bool) -> Result<DataMatrix> {
    let data = DataMatrix::from_csv(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(if returns { log_returns(&data)? } else { data })
}

fn sweep_config(n: usize, s: &ScoringArgs) -> Result<SweepConfig> {
    if s.grid_points < 8 {
        return Err(config_err("--grid-points must be at least 8"));
    }
    let mut cfg = SweepConfig::new(n);
    cfg.window = s.window;
    cfg.demean = !s.no_demean;
    cfg.solver.grid_points = s.grid_points;
    cfg.fixed.grid_points = s.grid_points;
    cfg.rule = match s.rule {
        RuleArg::Product => {
            if s.alpha.is_some() {
                return Err(config_err("--alpha only applies to the additive rule"));
            }
            ScoreRule::Product
        }
        RuleArg::Additive => ScoreRule::Additive { alpha: s.alpha },
    };
    Ok(cfg)
}

#[derive(Deserialize)]
struct PathPoint {
    lambda: f64,
    gamma: f64,
}

fn build_path(a: &IdentifyArgs) -> Result<RegPath> {
    if let Some(p) = &a.path {
        let points: Vec<PathPoint> =
            read_json(p).with_context(|| format!("reading {}", p.display()))?;
        let regs = points
            .iter()
            .map(|q| RegParams::new(q.lambda, q.gamma).map_err(|e| config_err(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        return RegPath::new(regs).map_err(|e| config_err(e.to_string()));
    }
    let lam = (a.lambda[0], a.lambda[1]);
    let (k1, k2) = (a.points[0], a.points[1]);
    let path = match &a.lambda_gamma {
        Some(lg) => RegPath::log_grid_lambda_gamma(lam, k1, (lg[0], lg[1]), k2),
        None => RegPath::log_grid(lam, k1, (a.gamma[0], a.gamma[1]), k2),
    };
    path.map_err(|e| config_err(e.to_string()))
}

/// Undirected graph with `m + l` nodes; edge count `|E| + m·l`.
fn write_dot(path: &Path, labels: &[String], edges: &[(usize, usize)], l: usize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "graph lvgm {{")?;
    for name in labels {
        writeln!(w, "  \"{name}\" [shape=circle];")?;
    }
    for c in 0..l {
        writeln!(w, "  \"h{c}\" [shape=box, style=filled, fillcolor=gray];")?;
    }
    for &(k, h) in edges {
        writeln!(w, "  \"{}\" -- \"{}\";", labels[k], labels[h])?;
    }
    for c in 0..l {
        for name in labels {
            writeln!(w, "  \"h{c}\" -- \"{name}\" [style=dashed];")?;
        }
    }
    writeln!(w, "}}")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct IdentifySummary {
    selected: usize,
    lambda: f64,
    gamma: f64,
    edges: usize,
    l: usize,
    #[serde(rename = "D")]
    d: f64,
    p: usize,
    f: f64,
    failed_points: usize,
}

fn cmd_identify(a: &IdentifyArgs) -> Result<()> {
    if !(a.tol > 0.0) {
        return Err(config_err("--tol must be positive"));
    }
    if a.threads == Some(0) {
        return Err(config_err("--threads must be positive"));
    }
    let data = load_data(&a.data, a.scoring.returns)?;
    let path = build_path(a)?;
    let mut cfg = sweep_config(a.n, &a.scoring)?;
    cfg.solver.latent = !a.no_latent;
    cfg.solver.tol = a.tol;
    cfg.fixed.tol = a.tol;
    cfg.threads = a.threads;
    let truth = match &a.truth {
        Some(p) => {
            let j: TrueModelJson =
                read_json(p).with_context(|| format!("reading {}", p.display()))?;
            let t = TrueModel::from_json(&j)?;
            if t.m() != data.m() {
                return Err(config_err(format!(
                    "truth has m={}, data has {} columns",
                    t.m(),
                    data.m()
                )));
            }
            Some(t)
        }
        None => None,
    };

    let sw = sweep(&data, &path, &cfg)?;
    let sel = sw.selected_model();
    ensure_dir(&a.out)?;
    write_json(a.out.join("sweep.json"), &sweep_report(&path, &sw))?;
    let report = model_report(sel);
    write_json(a.out.join("model.json"), &report)?;

    let labels = data.labels();
    write_dot(&a.out.join("graph.dot"), &labels, &report.edges, report.l)?;

    let grid = FreqGrid::new(cfg.solver.grid_points)?;
    let joint = assemble_joint(&sel.solution)?;
    let mut joint_labels = labels.clone();
    joint_labels.extend((0..joint.l()).map(|c| format!("h{c}")));
    let pc = partial_coherence(&joint, &grid)?;
    write_coherence_csv(a.out.join("coherence.csv"), &grid, &pc, &joint_labels)?;
    write_mean_coherence_csv(
        a.out.join("mean_coherence.csv"),
        &mean_abs_coherence(&pc),
        &joint_labels,
    )?;

    if let Some(t) = &truth {
        let errs = spectral_errors(
            (t.sigma(), t.lambda()),
            (&sel.solution.sigma(), &sel.solution.lambda()),
            &grid,
        )?;
        write_errors_csv(a.out.join("errors.csv"), &errs)?;
    }

    let summary = IdentifySummary {
        selected: sw.selected,
        lambda: sel.reg.lambda(),
        gamma: sel.reg.gamma(),
        edges: report.edges.len(),
        l: report.l,
        d: sel.d,
        p: sel.p,
        f: sel.f,
        failed_points: sw.outcomes.iter().filter(|o| o.is_err()).count(),
    };
    println!("{}", to_json_string(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct ScoreReport {
    #[serde(rename = "D")]
    d: f64,
    p: usize,
    f: f64,
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let data = load_data(&a.data, a.scoring.returns)?;
    let model: ModelReport =
        read_json(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let cfg = sweep_config(model.n, &a.scoring)?;
    let (d, p, f) = rescore(&model, &data, &cfg)?;
    let text = to_json_string(&ScoreReport { d, p, f })?;
    match &a.out {
        Some(path) => {
            fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}
