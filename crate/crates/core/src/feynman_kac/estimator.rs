//! Monte Carlo of the expected trace E Tr e^{−tĤ} through the path-integral
//! representation, split by the number of jumps.
//!
//! Starting points are importance-sampled from κt·e^{−κtx}; local times use
//! bins of width h so the bulk terms match the discretized noise cell for
//! cell; the boundary terms use the exact per-step conditional law of the
//! reflected bridge.

use super::jumps::{build_jump_path, combined_local_times, row_norm2, row_states, SiSampler};
use super::matching::{combinatorial_constant, Matching};
use crate::bridge_mc::{
    local_time_field, reflected_kernel, reflected_step_factor, sample_reflected_bridge_with, BridgePath,
    LocalTimeField, SparseRow, TimePartition,
};
use crate::ensembles::FieldTag;
use crate::error::{invalid, Result};
use crate::sao_operator::{GeneralizedParams, GridSpec, SaoParams};
use crate::seed;
use crate::stats::Estimate;
use rand::Rng;
use serde::Serialize;

/// Largest number of component indices supported by the estimator.
pub const MAX_COMPONENTS: usize = 3;
/// Relative standard error above which an estimate is flagged.
pub const VARIANCE_FLAG: f64 = 0.1;

/// Time discretization and jump truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FkOptions {
    pub steps: usize,
    /// Largest jump count N̂ sampled; heavier terms are reported as mass.
    pub max_jumps: usize,
}

impl Default for FkOptions {
    fn default() -> Self {
        Self { steps: 2048, max_jumps: 12 }
    }
}

/// Contributions of N̂ = 0, N̂ = 2 and N̂ ≥ 4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSplit {
    pub t0: Estimate,
    pub t2: Estimate,
    pub t4plus: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FkEstimate {
    pub t: f64,
    pub total: Estimate,
    pub split: TraceSplit,
    /// Mean Poisson probability of N̂ beyond the truncation.
    pub truncation_mass: f64,
    pub samples: usize,
    pub variance_flag: bool,
}

struct Setup<'a> {
    theta: &'a SaoParams,
    eta: &'a GeneralizedParams,
    t: f64,
    delta: f64,
    opts: FkOptions,
    tag: Option<FieldTag>,
}

impl<'a> Setup<'a> {
    fn new(theta: &'a SaoParams, eta: &'a GeneralizedParams, t: f64, delta: f64, opts: FkOptions) -> Result<Self> {
        theta.validate()?;
        eta.validate()?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("t must be positive, got {t}")));
        }
        if theta.r > MAX_COMPONENTS {
            return Err(invalid(format!("the path-integral estimator supports r ≤ {MAX_COMPONENTS}")));
        }
        if opts.steps < 2 || opts.max_jumps % 2 != 0 {
            return Err(invalid("need at least two steps and an even jump cap"));
        }
        let tag = if theta.r > 1 { Some(FieldTag::from_beta(theta.beta)?) } else { None };
        Ok(Self { theta, eta, t, delta, opts, tag })
    }

    fn half_sigma2(&self) -> f64 {
        0.5 * self.eta.sigma * self.eta.sigma
    }

    fn rate(&self, l2: f64) -> f64 {
        (self.theta.r as f64 - 1.0).powi(2) * l2 / 2.0
    }
}

/// Bridge quantities shared by all jump configurations.
struct PathData {
    path: BridgePath,
    field: LocalTimeField,
    total: SparseRow,
    l2: f64,
    drift: f64,
    /// ln E[e^{−w_j ℓ_s}] for state j and step s.
    log_boundary: Vec<Vec<f64>>,
}

fn path_data<R: Rng + ?Sized>(s: &Setup, x: f64, rng: &mut R) -> Result<PathData> {
    let path = sample_reflected_bridge_with(rng, x, x, s.t, s.opts.steps);
    let field = local_time_field(&path, s.delta, &TimePartition::PerStep)?;
    let total = field.total();
    let l2 = row_norm2(&total, s.delta);
    let drift = total
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| ((total.first_bin + k as i64) as f64 + 0.5) * s.delta * v)
        .sum::<f64>()
        * s.delta;
    let dt = path.dt();
    let log_boundary = s
        .theta
        .w
        .iter()
        .map(|&w| path.values.windows(2).map(|v| reflected_step_factor(v[0], v[1], dt, w).ln()).collect())
        .collect();
    Ok(PathData { path, field, total, l2, drift, log_boundary })
}

impl PathData {
    fn boundary(&self, states: &[usize]) -> f64 {
        states.iter().enumerate().map(|(k, &j)| self.log_boundary[j][k]).sum::<f64>().exp()
    }

    fn constant_boundary(&self, j: usize) -> f64 {
        self.log_boundary[j].iter().sum::<f64>().exp()
    }
}

fn split_norm(states: &[usize], rows: &[SparseRow], r: usize, delta: f64) -> f64 {
    let mut parts = vec![SparseRow { first_bin: 0, values: Vec::new() }; r];
    for (row, &j) in rows.iter().zip(states) {
        parts[j].add_scaled(row, 1.0);
    }
    parts.iter().map(|p| row_norm2(p, delta)).sum()
}

/// λ^m / m! for m = 0, 1, …, upto.
fn poisson_terms(lambda: f64, upto: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(upto + 1);
    let mut term = 1.0;
    for m in 0..=upto {
        if m > 0 {
            term *= lambda / m as f64;
        }
        out.push(term);
    }
    out
}

/// Σ_{m > cap} λ^m/m! · e^{−λ}.
fn poisson_tail(lambda: f64, cap: usize) -> f64 {
    let mut term = (-lambda).exp();
    let mut below = 0.0;
    for m in 0..=cap {
        if m > 0 {
            term *= lambda / m as f64;
        }
        below += term;
    }
    (1.0 - below).max(0.0)
}

/// [T0, T2, T≥4, truncation] for one importance-sampled starting point.
fn sample_terms<R: Rng + ?Sized>(s: &Setup, rng: &mut R) -> Result<[f64; 4]> {
    let kt = s.eta.kappa * s.t;
    let x = -(1.0 - rng.random::<f64>()).ln() / kt;
    let d = path_data(s, x, rng)?;
    let weight = reflected_kernel(s.t, x, x) * (-s.eta.kappa * (d.drift - s.t * x)).exp() / kt;
    let r = s.theta.r;
    let hs2 = s.half_sigma2();

    let t0: f64 = (0..r).map(|i| d.constant_boundary(i)).sum::<f64>() * (hs2 * d.l2).exp();
    let (Some(tag), true) = (s.tag, d.l2 > 0.0) else {
        return Ok([weight * t0, 0.0, 0.0, 0.0]);
    };
    let lambda = s.rate(d.l2);
    let ups2 = s.eta.upsilon * s.eta.upsilon;
    let sampler = SiSampler::new(&d.field)?;
    let rows = d.field.rows.len();

    // N̂ = 2: one excursion i → j → i, summed over j exactly
    let pair = Matching::new(2, vec![(1, 2)])?;
    let si = sampler.sample(&pair, rng);
    let (lo, hi) = (si.times[0].min(si.times[1]), si.times[0].max(si.times[1]));
    let inside: Vec<bool> = d.field.intervals.iter().map(|&(a, b)| (lo..hi).contains(&(0.5 * (a + b)))).collect();
    let mut mid = SparseRow { first_bin: 0, values: Vec::new() };
    for (row, _) in d.field.rows.iter().zip(&inside).filter(|(_, &m)| m) {
        mid.add_scaled(row, 1.0);
    }
    let mut out = d.total.clone();
    out.add_scaled(&mid, -1.0);
    let bulk2 = (hs2 * (row_norm2(&out, s.delta) + row_norm2(&mid, s.delta))).exp();
    let mut states = vec![0usize; rows];
    let mut t2 = 0.0;
    for i in 0..r {
        for j in (0..r).filter(|&j| j != i) {
            let c = combinatorial_constant(&pair, &[(i, j), (j, i)], tag)?;
            for (k, st) in states.iter_mut().enumerate() {
                *st = if inside[k] { j } else { i };
            }
            t2 += c * d.boundary(&states);
        }
    }
    t2 *= lambda * ups2 / ((r - 1) * (r - 1)) as f64 * bulk2;

    // N̂ ≥ 4: count drawn from the truncated Poisson weights
    let cap = s.opts.max_jumps / 2;
    let terms = poisson_terms(lambda, cap);
    let heavy: f64 = terms[2..].iter().sum();
    let mut t4 = 0.0;
    if heavy > 0.0 {
        let u = rng.random::<f64>() * heavy;
        let mut m = 2;
        let mut acc = terms[2];
        while acc < u && m < cap {
            m += 1;
            acc += terms[m];
        }
        let q = Matching::uniform(2 * m, rng)?;
        let si = sampler.sample(&q, rng);
        for i in 0..r {
            let (jump, p_hat) = build_jump_path(i, s.t, &si.times, &q, r, rng)?;
            if jump.end_state() != i {
                continue;
            }
            let c = combinatorial_constant(&p_hat, &jump.jumps(), tag)?;
            if c == 0.0 {
                continue;
            }
            let st = row_states(&jump, &d.field.intervals);
            let norm = split_norm(&st, &d.field.rows, r, s.delta);
            t4 += c * (hs2 * norm).exp() * d.boundary(&st);
        }
        t4 *= heavy * ups2.powi(m as i32);
    }
    Ok([weight * t0, weight * t2, weight * t4, poisson_tail(lambda, cap)])
}

/// E Tr e^{−tĤ_{θ,η}} for t ∈ (0.2, 1], with local-time bins matched to
/// `grid`.
pub fn mc_expected_trace(
    theta: &SaoParams,
    eta: &GeneralizedParams,
    t: f64,
    grid: &GridSpec,
    n_samples: usize,
    seed: u64,
) -> Result<FkEstimate> {
    if !(t > 0.2 && t <= 1.0) {
        return Err(invalid(format!("the estimator is calibrated for t in (0.2, 1], got {t}")));
    }
    mc_expected_trace_with(theta, eta, t, grid.h, n_samples, seed, FkOptions::default())
}

/// As [`mc_expected_trace`] with an explicit bin width and discretization.
pub fn mc_expected_trace_with(
    theta: &SaoParams,
    eta: &GeneralizedParams,
    t: f64,
    delta: f64,
    n_samples: usize,
    seed: u64,
    opts: FkOptions,
) -> Result<FkEstimate> {
    let setup = Setup::new(theta, eta, t, delta, opts)?;
    if n_samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let draws = seed::par_replicas(seed, n_samples, |_, sd| sample_terms(&setup, &mut seed::rng(sd)));
    let draws: Vec<[f64; 4]> = draws.into_iter().collect::<Result<_>>()?;
    let column = |k: usize| Estimate::from_samples(&draws.iter().map(|d| d[k]).collect::<Vec<_>>());
    let total = Estimate::from_samples(&draws.iter().map(|d| d[0] + d[1] + d[2]).collect::<Vec<_>>());
    let truncation_mass = draws.iter().map(|d| d[3]).sum::<f64>() / n_samples as f64;
    Ok(FkEstimate {
        t,
        total,
        split: TraceSplit { t0: column(0), t2: column(1), t4plus: column(2) },
        truncation_mass,
        samples: n_samples,
        variance_flag: !(total.stderr <= VARIANCE_FLAG * total.value.abs()),
    })
}

/// One literal draw of the path-integral integrand at a fixed start (x, i).
#[derive(Debug, Clone)]
pub struct FkSample {
    pub x: f64,
    pub start: usize,
    pub path: BridgePath,
    pub field: LocalTimeField,
    pub jump: super::jumps::JumpPath,
    pub matching: Matching,
    /// 𝔐_t.
    pub off_diagonal: f64,
    /// 𝔥_t without the boundary terms.
    pub exponent: f64,
    /// E[e^{−Σ_j w_j 𝔏^{(j,0)}} | grid values].
    pub boundary: f64,
    /// Û(t) = i.
    pub returns: bool,
    /// N̂ exceeded the jump cap; the draw contributes 0.
    pub truncated: bool,
}

impl FkSample {
    /// 𝔐_t e^{𝔥_t} 1{Û(t) = i}, boundary terms averaged.
    pub fn value(&self) -> f64 {
        if !self.returns || self.truncated || self.off_diagonal == 0.0 {
            return 0.0;
        }
        self.off_diagonal * self.exponent.exp() * self.boundary
    }
}

/// Draws N̂, q̂, the self-intersection times and the walk exactly as in the
/// path-integral representation, without stratification.
#[allow(clippy::too_many_arguments)]
pub fn draw_fk_sample<R: Rng + ?Sized>(
    theta: &SaoParams,
    eta: &GeneralizedParams,
    x: f64,
    start: usize,
    t: f64,
    delta: f64,
    opts: FkOptions,
    rng: &mut R,
) -> Result<FkSample> {
    let s = Setup::new(theta, eta, t, delta, opts)?;
    if start >= theta.r {
        return Err(invalid(format!("start state {start} outside 0..{}", theta.r)));
    }
    let d = path_data(&s, x, rng)?;
    let lambda = s.rate(d.l2);
    let n = super::jumps::sample_jump_count(d.l2, theta.r, rng)?;
    let truncated = n > opts.max_jumps;
    let q = if truncated || n == 0 { Matching::empty() } else { Matching::uniform(n, rng)? };
    let times = if q.n == 0 { Vec::new() } else { SiSampler::new(&d.field)?.sample(&q, rng).times };
    let (jump, matching) = build_jump_path(start, t, &times, &q, theta.r, rng)?;
    let off_diagonal = match (q.n, s.tag) {
        (0, _) => 1.0,
        (n, Some(tag)) => eta.upsilon.powi(n as i32) * combinatorial_constant(&matching, &jump.jumps(), tag)?,
        (_, None) => 0.0,
    };
    let parts = combined_local_times(&jump, &d.field)?;
    let bulk: f64 = parts.iter().map(|p| row_norm2(p, delta)).sum();
    let exponent = -eta.kappa * d.drift + lambda + s.half_sigma2() * bulk;
    let boundary = d.boundary(&row_states(&jump, &d.field.intervals));
    let returns = jump.end_state() == start;
    Ok(FkSample { x, start, path: d.path, field: d.field, jump, matching, off_diagonal, exponent, boundary, returns, truncated })
}
