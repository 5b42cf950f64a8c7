//! Experiment configuration: a TOML (or JSON) document with one block per
//! module, overridden by command-line flags and resolved to concrete values
//! before a run so the manifest echo regenerates the run on its own.

use anyhow::{bail, ensure, Context, Result};
use edge_lab_core::feynman_kac::DifferenceModel;
use edge_lab_core::{EstimatorSettings, GeneralizedParams, GridSpec, SaoParams};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[default]
    BetaHermite,
    SpikedWishart,
    SpikedGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub ensemble: EnsembleBlock,
    pub operator: OperatorBlock,
    pub estimator: EstimatorBlock,
    pub trace: TraceBlock,
    pub bridge: BridgeBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            seed: None,
            replicas: None,
            format: Format::Csv,
            out: None,
            ensemble: EnsembleBlock::default(),
            operator: OperatorBlock::default(),
            estimator: EstimatorBlock::default(),
            trace: TraceBlock::default(),
            bridge: BridgeBlock::default(),
        }
    }
}

/// Random-matrix sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleBlock {
    pub model: Model,
    pub n: usize,
    /// Second dimension of the Wishart data matrix; defaults to n.
    pub p: Option<usize>,
    pub beta: f64,
    pub spikes: Vec<f64>,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        Self { model: Model::BetaHermite, n: 200, p: None, beta: 2.0, spikes: Vec::new() }
    }
}

/// Operator parameters. θ and η are written as comma lists, e.g.
/// `theta = "2,2,(0,inf)"` for r = 2, β = 2, w = (0, ∞).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorBlock {
    pub theta: String,
    /// `kappa,sigma,upsilon`; defaults to the values that make 2Ĥ the SAO.
    pub eta: Option<String>,
    pub paired_with: Option<String>,
    pub h: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub k: usize,
}

impl Default for OperatorBlock {
    fn default() -> Self {
        Self { theta: "1,2,inf".into(), eta: None, paired_with: None, h: None, l: None, k: 10 }
    }
}

/// Settings of the recovery functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorBlock {
    pub c1: f64,
    pub c2: f64,
    pub m: usize,
    /// Inline point configuration; a points file given on the command line
    /// is read into this field.
    pub points: Option<Vec<f64>>,
    /// Interval B = [lo, hi) for the rigidity count.
    pub b: Option<[f64; 2]>,
    /// (r₀, β) of the operator behind a supplied configuration.
    pub r0: Option<usize>,
    pub beta: Option<f64>,
    /// Relative tolerance of recovered β against the sampling β.
    pub tolerance: f64,
}

impl Default for EstimatorBlock {
    fn default() -> Self {
        let s = EstimatorSettings::default();
        Self { c1: s.c1, c2: s.c2, m: s.m, points: None, b: None, r0: None, beta: None, tolerance: 0.2 }
    }
}

/// Trace-curve experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceBlock {
    pub t_grid: Vec<f64>,
    pub model: DifferenceModel,
    /// Absolute tolerance on the fitted constant, or relative tolerance of
    /// the path integral against the eigenvalue oracle.
    pub tolerance: Option<f64>,
    pub oracle_replicas: usize,
}

impl Default for TraceBlock {
    fn default() -> Self {
        Self {
            t_grid: (3..=10).map(|k| k as f64 / 10.0).collect(),
            model: DifferenceModel::default(),
            tolerance: None,
            oracle_replicas: 200,
        }
    }
}

/// Bridge Monte Carlo budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeBlock {
    pub item: String,
    pub paths: usize,
    pub steps: usize,
    pub delta: f64,
    pub kappa: f64,
    pub t_grid: Vec<f64>,
}

impl Default for BridgeBlock {
    fn default() -> Self {
        Self { item: "all".into(), paths: 100_000, steps: 4096, delta: 0.01, kappa: 1.0, t_grid: vec![0.25, 0.5, 1.0] }
    }
}

/// A manifest wraps the resolved configuration; either form can be loaded.
#[derive(Deserialize)]
struct ManifestEnvelope {
    config: ExperimentConfig,
}

impl ExperimentConfig {
    /// Reads a TOML or JSON configuration, or the `config` of a manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if value.get("config").is_some_and(serde_json::Value::is_object) {
                let env: ManifestEnvelope = serde_json::from_value(value)?;
                return Ok(env.config);
            }
            Ok(serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?)
        } else {
            Ok(toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("seed resolved before the run")
    }

    pub fn replicas(&self) -> usize {
        self.replicas.expect("replicas resolved before the run")
    }

    pub fn theta(&self) -> Result<SaoParams> {
        parse_theta(&self.operator.theta)
    }

    pub fn paired_theta(&self) -> Result<Option<SaoParams>> {
        self.operator.paired_with.as_deref().map(parse_theta).transpose()
    }

    pub fn eta(&self, theta: &SaoParams) -> Result<GeneralizedParams> {
        match &self.operator.eta {
            Some(s) => parse_eta(s),
            None => Ok(theta.sao_eta()),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let h = self.operator.h.expect("grid resolved before the run");
        let l = self.operator.l.expect("grid resolved before the run");
        Ok(GridSpec::new(h, l)?)
    }

    pub fn settings(&self) -> Result<EstimatorSettings> {
        Ok(EstimatorSettings::new(self.estimator.c1, self.estimator.c2, self.estimator.m)?)
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        _ => s.parse::<f64>().with_context(|| format!("not a number: {s:?}")),
    }
}

/// Parses `r,beta,w` or `r,beta,(w1,…,wr)`; `inf` marks a Dirichlet component.
pub fn parse_theta(s: &str) -> Result<SaoParams> {
    let cleaned: String = s.chars().filter(|c| !matches!(c, '(' | ')' | ' ')).collect();
    let parts: Vec<&str> = cleaned.split(',').filter(|p| !p.is_empty()).collect();
    ensure!(parts.len() >= 3, "theta needs r, beta and at least one boundary weight, got {s:?}");
    let r: usize = parts[0].parse().with_context(|| format!("r must be a positive integer in {s:?}"))?;
    let beta = parse_number(parts[1])?;
    let w = parts[2..].iter().map(|p| parse_number(p)).collect::<Result<Vec<_>>>()?;
    Ok(SaoParams::new(r, beta, w)?)
}

/// Parses `kappa,sigma,upsilon`.
pub fn parse_eta(s: &str) -> Result<GeneralizedParams> {
    let v = parse_list(s)?;
    ensure!(v.len() == 3, "eta needs kappa, sigma and upsilon, got {s:?}");
    Ok(GeneralizedParams::new(v[0], v[1], v[2])?)
}

/// A comma list of numbers, or `start:stop:step`.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.contains(':') {
        let v: Vec<f64> = s.split(':').map(parse_number).collect::<Result<_>>()?;
        ensure!(v.len() == 3 && v[2] > 0.0 && v[1] >= v[0], "ranges are start:stop:step with step > 0, got {s:?}");
        let n = ((v[1] - v[0]) / v[2] + 1e-9).floor() as usize;
        // round to the step's decimals so 0.3:1:0.1 yields 0.3, 0.4, …
        return Ok((0..=n).map(|k| ((v[0] + k as f64 * v[2]) * 1e12).round() / 1e12).collect());
    }
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_number).collect()
}

/// One real per line; blank lines, `#` comments and a non-numeric header are
/// skipped.
pub fn read_points(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading points {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match parse_number(field) {
            Ok(x) => out.push(x),
            Err(_) if i == 0 => continue,
            Err(e) => bail!("{}:{}: {e}", path.display(), i + 1),
        }
    }
    ensure!(!out.is_empty(), "{} holds no points", path.display());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_forms() {
        let t = parse_theta("2,2,(0,inf)").unwrap();
        assert_eq!((t.r, t.beta), (2, 2.0));
        assert_eq!(t.w, vec![0.0, f64::INFINITY]);
        assert_eq!(parse_theta("1, 1, inf").unwrap().w, vec![f64::INFINITY]);
        assert!(parse_theta("2,2,0").is_err());
        assert!(parse_theta("1,2").is_err());
    }

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_list("0.3:1:0.1").unwrap(), vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(parse_list("0.25, 0.5").unwrap(), vec![0.25, 0.5]);
        assert!(parse_list("1:0:0.1").is_err());
    }

    #[test]
    fn config_round_trips_through_toml_and_json() {
        let mut c = ExperimentConfig { experiment: "trace-delta".into(), seed: Some(7), replicas: Some(3), ..Default::default() };
        c.operator.paired_with = Some("1,1,inf".into());
        c.operator.h = Some(0.05);
        c.operator.l = Some(60.0);
        c.estimator.points = Some(vec![0.0, 2.0]);
        let t = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<ExperimentConfig>(&t).unwrap(), c);
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&j).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("experiment = \"sample\"\nbogus = 1\n").is_err());
    }
}
