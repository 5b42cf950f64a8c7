//! Recovery statistics on point configurations: exponential traces, the
//! functional `T`, the rigidity count, and the inverse-temperature estimator
//! built from the beta-ensemble energy.

use crate::error::{invalid, Error, Result};
use crate::sao_operator::{GeneralizedParams, SaoParams};
use crate::special::{digamma_unchecked, ln_gamma, trigamma};
use serde::{Deserialize, Serialize};

/// √(2/π), the leading heat-trace coefficient of the scalar operator.
pub const LEADING_SAO: f64 = 0.797_884_560_802_865_4;

/// Default ceiling on the truncation tail bound before traces get flagged.
pub const DEFAULT_TAIL_POLICY: f64 = 1e-6;

/// How a configuration was truncated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Number of retained points K.
    pub count: usize,
    /// Largest retained point λ_K.
    pub last: Option<f64>,
    pub source: String,
}

/// Finite ascending point configuration, the stand-in for an infinite
/// spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub points: Vec<f64>,
    pub truncation: Truncation,
}

impl PointConfiguration {
    pub fn new(points: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(invalid("configuration points must be finite"));
        }
        if points.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("configuration points must be ascending"));
        }
        let truncation = Truncation { count: points.len(), last: points.last().copied(), source: source.into() };
        Ok(Self { points, truncation })
    }

    /// Sorts arbitrary finite points first.
    pub fn from_unsorted(mut points: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        points.sort_by(|a, b| a.total_cmp(b));
        Self::new(points, source)
    }

    pub fn empty() -> Self {
        Self { points: Vec::new(), truncation: Truncation { count: 0, last: None, source: "empty".into() } }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Gap between the two largest retained points.
    pub fn last_gap(&self) -> Option<f64> {
        let n = self.points.len();
        (n >= 2).then(|| self.points[n - 1] - self.points[n - 2])
    }

    /// Splits off the points in the half-open interval [lo, hi); returns the
    /// configuration outside it and the number of points removed.
    pub fn remove_interval(&self, lo: f64, hi: f64) -> (PointConfiguration, usize) {
        let outside: Vec<f64> = self.points.iter().copied().filter(|&x| x < lo || x >= hi).collect();
        let removed = self.points.len() - outside.len();
        let mut cfg = self.clone();
        cfg.truncation.source = format!("{} outside [{lo}, {hi})", self.truncation.source);
        cfg.points = outside;
        (cfg, removed)
    }
}

/// Exponential trace with its truncation diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpTrace {
    pub value: f64,
    /// Bound on the contribution of the points beyond the truncation,
    /// extrapolated from the last gap; infinite when no gap is available.
    pub tail_bound: f64,
}

impl ExpTrace {
    pub fn exceeds(&self, policy: f64) -> bool {
        self.tail_bound > policy
    }
}

/// Σ_k e^{−t·λ_k/2} over the configuration.
pub fn exp_trace(config: &PointConfiguration, t: f64) -> Result<ExpTrace> {
    if !(t > 0.0) {
        return Err(invalid(format!("trace time must be positive, got {t}")));
    }
    // sum from the largest points so small terms accumulate first
    let value = config.points.iter().rev().map(|&x| (-0.5 * t * x).exp()).sum();
    let tail_bound = match (config.points.last(), config.last_gap()) {
        (Some(&last), Some(gap)) if gap > 0.0 => (-0.5 * t * last).exp() * (1.0 + 2.0 / (t * gap)),
        _ => f64::INFINITY,
    };
    Ok(ExpTrace { value, tail_bound })
}

/// Constants and truncation level of the functional `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub c1: f64,
    pub c2: f64,
    /// Outer index M; the statistic averages over N_M = ⌈M^{1+c₂}⌉ times.
    pub m: usize,
    /// Largest admissible truncation tail bound.
    pub tail_policy: f64,
}

impl Default for EstimatorSettings {
    /// c₁ = 0.05, c₂ = 0.5, M = 8: N_M = 23 and t_n ∈ [0.317, 0.951].
    fn default() -> Self {
        Self { c1: 0.05, c2: 0.5, m: 8, tail_policy: DEFAULT_TAIL_POLICY }
    }
}

impl EstimatorSettings {
    pub fn new(c1: f64, c2: f64, m: usize) -> Result<Self> {
        let s = Self { c1, c2, m, tail_policy: DEFAULT_TAIL_POLICY };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(invalid("c1 and c2 must be positive"));
        }
        if self.m == 0 {
            return Err(invalid("M must be at least 1"));
        }
        Ok(())
    }

    /// N_m = ⌈m^{1+c₂}⌉.
    pub fn block_len(&self, m: usize) -> usize {
        let x = (m as f64).powf(1.0 + self.c2);
        // guard against powf landing a hair above an integer
        (x - 1e-9 * x).ceil().max(1.0) as usize
    }

    /// t_n = e^{−c₁ n}.
    pub fn time(&self, n: usize) -> f64 {
        (-self.c1 * n as f64).exp()
    }

    /// All times t_1, …, t_{N_M}.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.block_len(self.m)).map(|n| self.time(n)).collect()
    }
}

/// Value of `T` at finite M with its stabilization diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TEstimate {
    pub value: f64,
    /// Block averages A_{N_m} for m = 1..M.
    pub blocks: Vec<f64>,
    /// |A_{N_M} − A_{N_{M−1}}| (0 when M = 1).
    pub last_increment: f64,
    /// Block increments grew over the last three blocks.
    pub diverging: bool,
    /// Some trace exceeded the truncation tail policy.
    pub tail_flag: bool,
    pub max_tail_bound: f64,
}

fn block_averages(terms: &[f64], s: &EstimatorSettings) -> Vec<f64> {
    // fixed-order prefix sums so every block average is reproducible
    let mut prefix = Vec::with_capacity(terms.len() + 1);
    prefix.push(0.0);
    for t in terms {
        prefix.push(prefix.last().unwrap() + t);
    }
    (1..=s.m).map(|m| {
        let nm = s.block_len(m);
        prefix[nm] / nm as f64
    })
    .collect()
}

fn divergence(blocks: &[f64]) -> (f64, bool) {
    let inc: Vec<f64> = blocks.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let last = inc.last().copied().unwrap_or(0.0);
    let k = inc.len();
    let diverging = k >= 3 && inc[k - 1] > inc[k - 2] && inc[k - 2] > inc[k - 3];
    (last, diverging)
}

fn t_from_terms(terms: &[f64], s: &EstimatorSettings, max_tail: f64) -> TEstimate {
    let blocks: Vec<f64> = block_averages(terms, s).into_iter().map(|a| 0.5 + 2.0 * a).collect();
    let (last_increment, diverging) = divergence(&blocks);
    TEstimate {
        value: *blocks.last().expect("M ≥ 1"),
        blocks,
        last_increment,
        diverging,
        tail_flag: max_tail > s.tail_policy,
        max_tail_bound: max_tail,
    }
}

/// `T` evaluated on an arbitrary trace curve t ↦ trace(t).
pub fn estimator_t_from_trace(trace: impl Fn(f64) -> f64, s: &EstimatorSettings) -> Result<TEstimate> {
    s.validate()?;
    let terms: Vec<f64> = s.times().into_iter().map(|t| trace(t) - LEADING_SAO * t.powf(-1.5)).collect();
    Ok(t_from_terms(&terms, s, 0.0))
}

/// `T` on a point configuration: ½ + (2/N_M) Σ (Tr e^{−t_n Λ/2} − √(2/π) t_n^{−3/2}).
pub fn estimator_t(config: &PointConfiguration, s: &EstimatorSettings) -> Result<TEstimate> {
    s.validate()?;
    if config.is_empty() {
        return Err(invalid("T needs a nonempty configuration"));
    }
    let mut max_tail: f64 = 0.0;
    let mut terms = Vec::new();
    for t in s.times() {
        let tr = exp_trace(config, t)?;
        max_tail = max_tail.max(tr.tail_bound);
        terms.push(tr.value - LEADING_SAO * t.powf(-1.5));
    }
    Ok(t_from_terms(&terms, s, max_tail))
}

/// Rigidity count M(X) with its nearest integer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityCount {
    pub value: f64,
    pub nearest: i64,
    pub blocks: Vec<f64>,
    pub diverging: bool,
    pub tail_flag: bool,
}

fn rigidity_from_terms(terms: &[f64], s: &EstimatorSettings, max_tail: f64) -> RigidityCount {
    let blocks = block_averages(terms, s);
    let (_, diverging) = divergence(&blocks);
    let value = *blocks.last().expect("M ≥ 1");
    RigidityCount {
        value,
        nearest: value.round() as i64,
        blocks,
        diverging,
        tail_flag: max_tail > s.tail_policy,
    }
}

fn rigidity_offset(r0: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    Ok(0.5 * (r0 as f64 + 1.0 / beta) - 0.25)
}

/// Number of points inside `b = [lo, hi)` predicted from the points outside,
/// given the operator's (r₀, β).
pub fn rigidity_count(
    outside: &PointConfiguration,
    b: (f64, f64),
    known: (usize, f64),
    s: &EstimatorSettings,
) -> Result<RigidityCount> {
    s.validate()?;
    if outside.points.iter().any(|&x| x >= b.0 && x < b.1) {
        return Err(invalid("the outside configuration has points inside B"));
    }
    let offset = rigidity_offset(known.0, known.1)?;
    let mut max_tail: f64 = 0.0;
    let mut terms = Vec::new();
    for t in s.times() {
        let tr = exp_trace(outside, t)?;
        max_tail = max_tail.max(tr.tail_bound);
        terms.push(LEADING_SAO * t.powf(-1.5) + offset - tr.value);
    }
    Ok(rigidity_from_terms(&terms, s, max_tail))
}

/// Rigidity count from an analytic trace of the outside points.
pub fn rigidity_count_from_trace(
    outside_trace: impl Fn(f64) -> f64,
    known: (usize, f64),
    s: &EstimatorSettings,
) -> Result<RigidityCount> {
    s.validate()?;
    let offset = rigidity_offset(known.0, known.1)?;
    let terms: Vec<f64> = s
        .times()
        .into_iter()
        .map(|t| LEADING_SAO * t.powf(-1.5) + offset - outside_trace(t))
        .collect();
    Ok(rigidity_from_terms(&terms, s, 0.0))
}

/// Beta-ensemble energy ½Σ x²/2 − (1/n) Σ_{i<j} log|x_j − x_i|.
pub fn hamiltonian_energy(points: &[f64]) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return Err(invalid("energy of an empty configuration"));
    }
    let confinement: f64 = points.iter().map(|x| x * x / 4.0).sum();
    let mut repulsion = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i + 1..n {
            let d = (points[j] - points[i]).abs();
            if d == 0.0 {
                return Err(invalid("coincident points make the energy infinite"));
            }
            row += d.ln();
        }
        repulsion += row;
    }
    Ok(confinement - repulsion / n as f64)
}

/// Digamma ψ(z).
pub fn digamma(z: f64) -> Result<f64> {
    crate::special::digamma(z)
}

/// Limit of the normalized energy statistic, F(β) = log(β²/4) − 2ψ(1+β/2).
#[allow(non_snake_case)]
pub fn F_beta(beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid(format!("F needs beta > 0, got {beta}")));
    }
    Ok((beta * beta / 4.0).ln() - 2.0 * digamma_unchecked(1.0 + beta / 2.0))
}

/// F'(β) = 2/β − ψ'(1+β/2).
#[allow(non_snake_case)]
pub fn F_beta_derivative(beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("F' needs beta > 0"));
    }
    Ok(2.0 / beta - trigamma(1.0 + beta / 2.0)?)
}

/// −4(H − 3n/8 + ½ log n) − 1, which converges to F(β).
pub fn energy_statistic(h: f64, n: usize) -> f64 {
    let nf = n as f64;
    -4.0 * (h - 3.0 * nf / 8.0 + 0.5 * nf.ln()) - 1.0
}

/// Energy level at which the statistic equals F(β) exactly.
pub fn energy_for_beta(beta: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    Ok(3.0 * nf / 8.0 - 0.5 * nf.ln() - (1.0 + F_beta(beta)?) / 4.0)
}

const BETA_BRACKET: (f64, f64) = (1e-6, 1e6);

/// Recovers β from an observed energy by inverting F on [1e-6, 1e6].
pub fn beta_from_energy(h: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("beta recovery needs n ≥ 2"));
    }
    let target = energy_statistic(h, n);
    let (mut lo, mut hi) = (BETA_BRACKET.0.ln(), BETA_BRACKET.1.ln());
    let f = |lb: f64| F_beta(lb.exp()).expect("positive beta");
    let (flo, fhi) = (f(lo), f(hi));
    if !(target >= flo && target <= fhi) {
        return Err(Error::OutOfRange { value: target, range: format!("[{flo:.6}, {fhi:.6}]") });
    }
    // F is increasing; bisect in log β to relative width 1e-13
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// log Z_{GβE,n}, the normalization of e^{−βn H_n} over ℝⁿ.
pub fn log_z_gbe(n: usize, beta: f64) -> Result<f64> {
    if n == 0 || !(beta > 0.0) {
        return Err(invalid("log Z needs n ≥ 1 and beta > 0"));
    }
    let nf = n as f64;
    let mut s = 0.5 * nf * (2.0 * std::f64::consts::PI).ln();
    s += (-beta * nf * nf / 4.0 + (beta / 4.0 - 0.5) * nf) * (nf * beta / 2.0).ln();
    s += (1..=n).map(|j| ln_gamma(1.0 + j as f64 * beta / 2.0)).sum::<f64>();
    s -= nf * ln_gamma(1.0 + beta / 2.0);
    Ok(s)
}

/// Mean and variance of H_n under GβE from central differences of log Z:
/// E[H] = −(1/n) ∂_β log Z and Var[H] = (1/n²) ∂²_β log Z.
pub fn energy_moments(n: usize, beta: f64, dbeta: f64) -> Result<(f64, f64)> {
    let nf = n as f64;
    let zp = log_z_gbe(n, beta + dbeta)?;
    let z0 = log_z_gbe(n, beta)?;
    let zm = log_z_gbe(n, beta - dbeta)?;
    let mean = -(zp - zm) / (2.0 * dbeta) / nf;
    let var = (zp - 2.0 * z0 + zm) / (dbeta * dbeta) / (nf * nf);
    Ok((mean, var))
}

/// ¼(2r₀ − r + rσ²/κ + r(r−1)υ²/κ), the constant term of the expected trace.
pub fn trace_constant_formula(theta: &SaoParams, eta: &GeneralizedParams) -> f64 {
    let r = theta.r as f64;
    let r0 = theta.r0() as f64;
    0.25 * (2.0 * r0 - r + r * eta.sigma.powi(2) / eta.kappa + r * (r - 1.0) * eta.upsilon.powi(2) / eta.kappa)
}

/// r/(√(2π)κ), the t^{−3/2} coefficient of the expected trace.
pub fn leading_coefficient(theta: &SaoParams, eta: &GeneralizedParams) -> f64 {
    theta.r as f64 / ((2.0 * std::f64::consts::PI).sqrt() * eta.kappa)
}

/// A Monte Carlo or analytic trace curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCurve {
    pub points: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

impl TraceCurve {
    pub fn new(points: Vec<TracePoint>) -> Result<Self> {
        if points.iter().any(|p| !(p.t > 0.0 && p.t <= 1.0) || !p.value.is_finite()) {
            return Err(invalid("trace curve needs t in (0,1] and finite values"));
        }
        let up = points.windows(2).all(|w| w[0].t < w[1].t);
        let down = points.windows(2).all(|w| w[0].t > w[1].t);
        if !(up || down) {
            return Err(invalid("trace curve times must be strictly monotone"));
        }
        Ok(Self { points })
    }
}
