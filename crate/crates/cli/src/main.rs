//! `edge-lab`: reproducible experiments over the edge-lab core.
//!
//! Exit codes: 0 success, 2 a reported quantity missed its tolerance, 1 error.

mod config;
mod run;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{parse_list, parse_theta, read_points, ExperimentConfig, Format, Model};
use edge_lab_core::feynman_kac::DifferenceModel;
use run::Artifact;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const BUILD_ID: &str = env!("EDGE_LAB_BUILD_ID");

#[derive(Parser, Debug)]
#[command(name = "edge-lab", version, about = "Edge-fluctuation parameter recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML or JSON configuration, or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; falls back to the config, then to EDGE_LAB_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; the manifest goes next to it as `<out>.manifest.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a beta-Hermite or spiked spectrum.
    Sample(SampleArgs),
    /// Low eigenvalues of discretized stochastic Airy operators.
    SaoSpec(SaoSpecArgs),
    /// The recovery functional T on a configuration.
    #[command(name = "estimate-T")]
    EstimateT(EstimatorArgs),
    /// Energy-based inverse-temperature recovery.
    RecoverBeta(RecoverBetaArgs),
    /// Number of Robin components from a paired trace fit.
    RecoverR0(TraceArgs),
    /// Points inside an interval predicted from the points outside.
    RigidityCount(RigidityArgs),
    /// Eigenvalue-based expected-trace curve and its fit.
    TraceVerify(TraceArgs),
    /// Paired constant difference of two expected-trace curves.
    TraceDelta(TraceArgs),
    /// Brownian-bridge identities.
    BridgeVerify(BridgeArgs),
    /// Path-integral expected trace against the eigenvalue oracle.
    FkVerify(FkArgs),
    /// Rerun the experiment recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct OperatorArgs {
    /// θ as `r,beta,w` or `r,beta,(w1,...)`; `inf` is Dirichlet.
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma list of spike strengths.
    #[arg(long)]
    spikes: Option<String>,
}

#[derive(Args, Debug)]
struct SaoSpecArgs {
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma list of boundary weights; `inf` is Dirichlet.
    #[arg(long)]
    w: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct EstimatorArgs {
    /// File with one real per line.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    operator: OperatorArgs,
}

#[derive(Args, Debug)]
struct RecoverBetaArgs {
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// β of the sampled ensemble.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args, Debug)]
struct RigidityArgs {
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Interval `lo,hi`.
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    r0: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[command(flatten)]
    operator: OperatorArgs,
    /// `kappa,sigma,upsilon`.
    #[arg(long)]
    eta: Option<String>,
    /// Comma list or `start:stop:step`.
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    #[arg(long = "paired-with")]
    paired_with: Option<String>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
}

#[derive(Args, Debug)]
struct FkArgs {
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long = "oracle-replicas")]
    oracle_replicas: Option<usize>,
}

#[derive(Args, Debug)]
struct BridgeArgs {
    #[arg(long)]
    item: Option<String>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    HalfOrder,
    PinnedHalfOrder,
}

impl From<ModelArg> for DifferenceModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::HalfOrder => DifferenceModel::HalfOrder,
            ModelArg::PinnedHalfOrder => DifferenceModel::PinnedHalfOrder,
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_operator(cfg: &mut ExperimentConfig, a: &OperatorArgs) {
    set(&mut cfg.operator.theta, a.theta.clone());
    if a.h.is_some() {
        cfg.operator.h = a.h;
    }
    if a.l.is_some() {
        cfg.operator.l = a.l;
    }
}

fn apply_estimator(cfg: &mut ExperimentConfig, a: &EstimatorArgs) -> Result<()> {
    if let Some(p) = &a.points {
        cfg.estimator.points = Some(read_points(p)?);
    }
    set(&mut cfg.estimator.c1, a.c1);
    set(&mut cfg.estimator.c2, a.c2);
    set(&mut cfg.estimator.m, a.m);
    apply_operator(cfg, &a.operator);
    Ok(())
}

fn apply_trace(cfg: &mut ExperimentConfig, a: &TraceArgs) -> Result<()> {
    apply_operator(cfg, &a.operator);
    if a.eta.is_some() {
        cfg.operator.eta = a.eta.clone();
    }
    if let Some(g) = &a.t_grid {
        cfg.trace.t_grid = parse_list(g)?;
    }
    if a.paired_with.is_some() {
        cfg.operator.paired_with = a.paired_with.clone();
    }
    if a.tolerance.is_some() {
        cfg.trace.tolerance = a.tolerance;
    }
    if let Some(m) = a.model {
        cfg.trace.model = m.into();
    }
    Ok(())
}

/// Layers config file, subcommand flags and global flags.
fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let (name, file) = match &cli.command {
        Command::Replay { manifest } => (None, Some(manifest.as_path())),
        c => (Some(experiment_name(c)), cli.config.as_deref()),
    };
    let mut cfg = match file {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = name {
        anyhow::ensure!(
            cfg.experiment.is_empty() || cfg.experiment == name,
            "config describes {:?} but the subcommand is {name:?}",
            cfg.experiment
        );
        cfg.experiment = name.to_string();
    }
    match &cli.command {
        Command::Sample(a) => {
            set(&mut cfg.ensemble.model, a.model);
            set(&mut cfg.ensemble.n, a.n);
            if a.p.is_some() {
                cfg.ensemble.p = a.p;
            }
            set(&mut cfg.ensemble.beta, a.beta);
            if let Some(s) = &a.spikes {
                cfg.ensemble.spikes = parse_list(s)?;
            }
        }
        Command::SaoSpec(a) => {
            if a.r.is_some() || a.beta.is_some() || a.w.is_some() {
                let base = parse_theta(&cfg.operator.theta)?;
                let r = a.r.unwrap_or(base.r);
                let beta = a.beta.unwrap_or(base.beta);
                let w = match &a.w {
                    Some(w) => w.clone(),
                    None if r == base.r => base.w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                    None => vec!["inf"; r].join(","),
                };
                cfg.operator.theta = format!("{r},{beta},({w})");
            }
            if a.h.is_some() {
                cfg.operator.h = a.h;
            }
            if a.l.is_some() {
                cfg.operator.l = a.l;
            }
            set(&mut cfg.operator.k, a.k);
        }
        Command::EstimateT(a) => apply_estimator(&mut cfg, a)?,
        Command::RecoverBeta(a) => {
            if let Some(p) = &a.points {
                cfg.estimator.points = Some(read_points(p)?);
            }
            set(&mut cfg.ensemble.n, a.n);
            set(&mut cfg.ensemble.beta, a.beta);
            set(&mut cfg.estimator.tolerance, a.tolerance);
        }
        Command::RigidityCount(a) => {
            apply_estimator(&mut cfg, &a.estimator)?;
            if let Some(b) = &a.b {
                let v = parse_list(b)?;
                anyhow::ensure!(v.len() == 2 && v[0] < v[1], "--b takes lo,hi with lo < hi");
                cfg.estimator.b = Some([v[0], v[1]]);
            }
            if a.r0.is_some() {
                cfg.estimator.r0 = a.r0;
            }
            if a.beta.is_some() {
                cfg.estimator.beta = a.beta;
            }
        }
        Command::RecoverR0(a) | Command::TraceVerify(a) | Command::TraceDelta(a) => apply_trace(&mut cfg, a)?,
        Command::FkVerify(a) => {
            apply_trace(&mut cfg, &a.trace)?;
            set(&mut cfg.trace.oracle_replicas, a.oracle_replicas);
        }
        Command::BridgeVerify(a) => {
            set(&mut cfg.bridge.item, a.item.clone());
            set(&mut cfg.bridge.paths, a.paths);
            set(&mut cfg.bridge.steps, a.steps);
            set(&mut cfg.bridge.delta, a.delta);
        }
        Command::Replay { .. } => {}
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cfg.seed.is_none() {
        if let Ok(s) = std::env::var("EDGE_LAB_SEED") {
            cfg.seed = Some(s.trim().parse().with_context(|| format!("EDGE_LAB_SEED is not a u64: {s:?}"))?);
        }
    }
    if cli.replicas.is_some() {
        cfg.replicas = cli.replicas;
    }
    set(&mut cfg.format, cli.format);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    run::resolve(&mut cfg)?;
    Ok(cfg)
}

fn experiment_name(c: &Command) -> &'static str {
    match c {
        Command::Sample(_) => "sample",
        Command::SaoSpec(_) => "sao-spec",
        Command::EstimateT(_) => "estimate-T",
        Command::RecoverBeta(_) => "recover-beta",
        Command::RecoverR0(_) => "recover-r0",
        Command::RigidityCount(_) => "rigidity-count",
        Command::TraceVerify(_) => "trace-verify",
        Command::TraceDelta(_) => "trace-delta",
        Command::BridgeVerify(_) => "bridge-verify",
        Command::FkVerify(_) => "fk-verify",
        Command::Replay { .. } => "replay",
    }
}

fn render(art: &Artifact, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&art.header)?;
            for row in &art.rows {
                w.write_record(row)?;
            }
            Ok(w.into_inner().context("flushing CSV")?)
        }
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(&art.json)?;
            v.push(b'\n');
            Ok(v)
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn execute(cli: &Cli) -> Result<u8> {
    let cfg = build_config(cli)?;
    let start = Instant::now();
    let art = run::run(&cfg)?;
    let body = render(&art, cfg.format)?;
    let code = if art.breach.is_some() { 2 } else { 0 };
    let manifest = json!({
        "experiment": cfg.experiment,
        "seed": cfg.seed(),
        "build_id": BUILD_ID,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "exit_code": code,
        "tolerance_breach": art.breach,
        "config": cfg,
    });
    let manifest = serde_json::to_string_pretty(&manifest)? + "\n";
    match &cfg.out {
        Some(out) => {
            std::fs::write(out, &body).with_context(|| format!("writing {}", out.display()))?;
            let mp = manifest_path(out);
            std::fs::write(&mp, manifest).with_context(|| format!("writing {}", mp.display()))?;
        }
        None => {
            std::io::stdout().write_all(&body)?;
            eprint!("{manifest}");
        }
    }
    if let Some(b) = &art.breach {
        eprintln!("tolerance breach: {b}");
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
