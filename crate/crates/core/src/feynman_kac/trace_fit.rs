//! Eigenvalue-based expected traces: fits of the small-t expansion and the
//! covariance trend between traces at different times.

use crate::error::{invalid, Error, Result};
use crate::sao_operator::{all_eigenvalues, build_generalized, GeneralizedParams, GridSpec, SaoParams};
use crate::seed;
use crate::stats::{self, covariance, least_squares, mean_stderr, quantile};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bootstrap resamples behind every confidence interval.
pub const BOOTSTRAP: usize = 400;
/// Design condition number above which a fit is flagged.
pub const CONDITION_LIMIT: f64 = 1e6;

/// Tr e^{−tĤ} at each t for one noise realization.
pub fn eigen_traces(theta: &SaoParams, eta: &GeneralizedParams, grid: &GridSpec, ts: &[f64], seed: u64) -> Result<Vec<f64>> {
    let op = build_generalized(theta, eta, grid, seed)?;
    let eigs = all_eigenvalues(&op)?;
    Ok(ts.iter().map(|&t| eigs.iter().map(|l| (-t * l).exp()).sum()).collect())
}

/// Replica × time table of traces; replica k uses sub-seed k of `seed`.
pub fn eigen_trace_table(
    theta: &SaoParams,
    eta: &GeneralizedParams,
    grid: &GridSpec,
    ts: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    seed::par_replicas(seed, replicas, |_, s| eigen_traces(theta, eta, grid, ts, s)).into_iter().collect()
}

/// Column means and standard errors of a replica table.
pub fn column_summary(table: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let cols = table.first().map_or(0, Vec::len);
    (0..cols).map(|k| mean_stderr(&table.iter().map(|row| row[k]).collect::<Vec<_>>())).collect()
}

fn column_means(table: &[Vec<f64>], pick: &[usize]) -> Vec<f64> {
    let cols = table[0].len();
    (0..cols).map(|k| pick.iter().map(|&i| table[i][k]).sum::<f64>() / pick.len() as f64).collect()
}

/// Coefficients of a·t^{−3/2} + b + c·t^{1/2} and the design condition.
pub fn fit_trace_curve(ts: &[f64], ys: &[f64]) -> Result<([f64; 3], f64)> {
    let rows: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t.powf(-1.5), 1.0, t.sqrt()]).collect();
    let ls = least_squares(&rows, ys)?;
    Ok(([ls.coefficients[0], ls.coefficients[1], ls.coefficients[2]], ls.condition))
}

/// Coefficients of b + c·t^{1/2} and the design condition.
pub fn fit_difference_curve(ts: &[f64], ys: &[f64]) -> Result<([f64; 2], f64)> {
    let rows: Vec<Vec<f64>> = ts.iter().map(|&t| vec![1.0, t.sqrt()]).collect();
    let ls = least_squares(&rows, ys)?;
    Ok(([ls.coefficients[0], ls.coefficients[1]], ls.condition))
}

fn percentile_ci(mut xs: Vec<f64>) -> (f64, f64) {
    xs.sort_by(|a, b| a.total_cmp(b));
    (quantile(&xs, 0.025), quantile(&xs, 0.975))
}

fn bootstrap<F>(replicas: usize, seed: u64, statistic: F) -> Result<Vec<f64>>
where
    F: Fn(&[usize]) -> Result<f64> + Sync + Send,
{
    seed::par_replicas(seed, BOOTSTRAP, |_, s| {
        let mut rng = seed::rng(s);
        let pick: Vec<usize> = (0..replicas).map(|_| rng.random_range(0..replicas)).collect();
        statistic(&pick)
    })
    .into_iter()
    .collect()
}

fn check_grid(ts: &[f64]) -> Result<()> {
    if ts.len() < 4 {
        return Err(invalid("the trace fit needs at least four times"));
    }
    if ts.iter().any(|&t| !(0.3 - 1e-12..=1.0 + 1e-12).contains(&t)) {
        return Err(invalid("fit times must lie in [0.3, 1]"));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TracePointSummary {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceFit {
    pub leading: f64,
    pub constant: f64,
    pub half_order: f64,
    pub leading_ci: (f64, f64),
    pub constant_ci: (f64, f64),
    pub condition: f64,
    pub ill_conditioned: bool,
    pub curve: Vec<TracePointSummary>,
}

fn summarize(ts: &[f64], table: &[Vec<f64>]) -> Vec<TracePointSummary> {
    ts.iter().zip(column_summary(table)).map(|(&t, (mean, stderr))| TracePointSummary { t, mean, stderr }).collect()
}

/// Fits the replica-mean eigenvalue traces of Ĥ_{θ,η} on `t_grid`.
pub fn trace_constant_fit(
    theta: &SaoParams,
    eta: &GeneralizedParams,
    grid: &GridSpec,
    t_grid: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<TraceFit> {
    check_grid(t_grid)?;
    if replicas < 2 {
        return Err(invalid("need at least two replicas"));
    }
    let table = eigen_trace_table(theta, eta, grid, t_grid, replicas, seed)?;
    let all: Vec<usize> = (0..replicas).collect();
    let (coef, condition) = fit_trace_curve(t_grid, &column_means(&table, &all))?;
    let boot = bootstrap(replicas, seed::derive_seed(seed, u64::MAX), |pick| {
        Ok(fit_trace_curve(t_grid, &column_means(&table, pick))?.0[0])
    })?;
    let boot_b = bootstrap(replicas, seed::derive_seed(seed, u64::MAX), |pick| {
        Ok(fit_trace_curve(t_grid, &column_means(&table, pick))?.0[1])
    })?;
    Ok(TraceFit {
        leading: coef[0],
        constant: coef[1],
        half_order: coef[2],
        leading_ci: percentile_ci(boot),
        constant_ci: percentile_ci(boot_b),
        condition,
        ill_conditioned: !(condition < CONDITION_LIMIT),
        curve: summarize(t_grid, &table),
    })
}

/// Model for the difference of two expected-trace curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceModel {
    /// Δb + Δc·t^{1/2}, both fitted.
    HalfOrder,
    /// The t^{1/2} coefficient fixed at its boundary value
    /// −(Σ w_θ − Σ w_θ')/√(2π) over finite weights, then Δb + Δd·t fitted.
    #[default]
    PinnedHalfOrder,
}

/// Coefficient of t^{1/2} in E Tr e^{−tĤ} contributed by the Robin weights.
pub fn boundary_half_order(theta: &SaoParams) -> f64 {
    -theta.w.iter().filter(|w| w.is_finite()).sum::<f64>() / (2.0 * std::f64::consts::PI).sqrt()
}

fn fit_difference(model: DifferenceModel, pinned: f64, ts: &[f64], ys: &[f64]) -> Result<([f64; 2], f64)> {
    match model {
        DifferenceModel::HalfOrder => fit_difference_curve(ts, ys),
        DifferenceModel::PinnedHalfOrder => {
            let rows: Vec<Vec<f64>> = ts.iter().map(|&t| vec![1.0, t]).collect();
            let rest: Vec<f64> = ts.iter().zip(ys).map(|(&t, y)| y - pinned * t.sqrt()).collect();
            let ls = least_squares(&rows, &rest)?;
            Ok(([ls.coefficients[0], ls.coefficients[1]], ls.condition))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairedFit {
    pub model: DifferenceModel,
    /// b_θ − b_θ'.
    pub delta_constant: f64,
    /// Fitted Δc (half-order model) or Δd (pinned model).
    pub delta_correction: f64,
    pub ci: (f64, f64),
    pub condition: f64,
    pub ill_conditioned: bool,
    /// Per-t mean and stderr of the paired trace differences.
    pub curve: Vec<TracePointSummary>,
}

/// Fits the difference of expected traces between two operators built on
/// the same grid with the same noise seeds.
#[allow(clippy::too_many_arguments)]
pub fn paired_constant_fit(
    (theta, eta): (&SaoParams, &GeneralizedParams),
    (theta2, eta2): (&SaoParams, &GeneralizedParams),
    grid: &GridSpec,
    t_grid: &[f64],
    replicas: usize,
    seed: u64,
    model: DifferenceModel,
) -> Result<PairedFit> {
    check_grid(t_grid)?;
    if theta.r != theta2.r || eta.kappa != eta2.kappa {
        return Err(invalid("paired fits need equal r and κ so the leading terms cancel"));
    }
    if replicas < 2 {
        return Err(invalid("need at least two replicas"));
    }
    let table: Vec<Vec<f64>> = seed::par_replicas(seed, replicas, |_, s| -> Result<Vec<f64>> {
        let a = eigen_traces(theta, eta, grid, t_grid, s)?;
        let b = eigen_traces(theta2, eta2, grid, t_grid, s)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let all: Vec<usize> = (0..replicas).collect();
    let pinned = boundary_half_order(theta) - boundary_half_order(theta2);
    let (coef, condition) = fit_difference(model, pinned, t_grid, &column_means(&table, &all))?;
    let boot = bootstrap(replicas, seed::derive_seed(seed, u64::MAX), |pick| {
        Ok(fit_difference(model, pinned, t_grid, &column_means(&table, pick))?.0[0])
    })?;
    Ok(PairedFit {
        model,
        delta_constant: coef[0],
        delta_correction: coef[1],
        ci: percentile_ci(boot),
        condition,
        ill_conditioned: !(condition < CONDITION_LIMIT),
        curve: summarize(t_grid, &table),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariancePair {
    pub s: f64,
    pub t: f64,
    pub ratio: f64,
    pub covariance: f64,
    /// Cov / ratio^{1/4}.
    pub normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    pub pairs: Vec<CovariancePair>,
    pub max_normalized: f64,
    /// Largest time; the anchored trend uses the pairs (s, anchor).
    pub anchor: f64,
    /// Slope of the normalized covariance against −ln(ratio) over pairs
    /// sharing the largest time; positive means growth as the ratio shrinks.
    pub anchored_slope: f64,
    pub anchored_ci: (f64, f64),
    /// The same slope over all off-diagonal pairs, which also mixes in the
    /// growth of the covariance with the overall time scale.
    pub pooled_slope: f64,
    pub pooled_ci: (f64, f64),
    /// Normalized covariance at the smallest ratio over that at the ratio
    /// closest to ½.
    pub small_over_half: f64,
    pub pass: bool,
}

fn pair_stats(ts: &[f64], table: &[Vec<f64>], pick: &[usize]) -> Vec<CovariancePair> {
    let col = |k: usize| pick.iter().map(|&i| table[i][k]).collect::<Vec<_>>();
    let mut out = Vec::new();
    for a in 0..ts.len() {
        for b in a..ts.len() {
            let (s, t) = (ts[a].min(ts[b]), ts[a].max(ts[b]));
            let ratio = s / t;
            let cov = covariance(&col(a), &col(b));
            out.push(CovariancePair { s, t, ratio, covariance: cov, normalized: cov / ratio.powf(0.25) });
        }
    }
    out
}

fn growth(pairs: &[CovariancePair], anchor: Option<f64>) -> f64 {
    let used: Vec<&CovariancePair> = match anchor {
        Some(t) => pairs.iter().filter(|p| p.t == t).collect(),
        None => pairs.iter().filter(|p| p.ratio < 1.0).collect(),
    };
    let x: Vec<f64> = used.iter().map(|p| -p.ratio.ln()).collect();
    let y: Vec<f64> = used.iter().map(|p| p.normalized).collect();
    stats::linear_regression(&x, &y).1
}

/// Covariances of traces over all pairs of `ts` across replicas.
pub fn trace_covariance_check(
    theta: &SaoParams,
    eta: &GeneralizedParams,
    grid: &GridSpec,
    ts: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<CovarianceReport> {
    if ts.len() < 3 || ts.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(invalid("need at least three times in (0, 1]"));
    }
    let anchor = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if ts.iter().filter(|&&t| t < anchor).count() < 2 {
        return Err(Error::Degenerate("need at least two distinct times below the largest".into()));
    }
    if replicas < 3 {
        return Err(invalid("need at least three replicas"));
    }
    let table = eigen_trace_table(theta, eta, grid, ts, replicas, seed)?;
    let all: Vec<usize> = (0..replicas).collect();
    let pairs = pair_stats(ts, &table, &all);
    let boot = |anchor: Option<f64>| {
        bootstrap(replicas, seed::derive_seed(seed, u64::MAX), |pick| Ok(growth(&pair_stats(ts, &table, pick), anchor)))
            .map(percentile_ci)
    };
    let anchored_ci = boot(Some(anchor))?;
    let pooled_ci = boot(None)?;
    let max_normalized = pairs.iter().map(|p| p.normalized).fold(f64::NEG_INFINITY, f64::max);
    let smallest = pairs.iter().min_by(|a, b| a.ratio.total_cmp(&b.ratio)).expect("nonempty");
    let half = pairs
        .iter()
        .filter(|p| p.ratio < 1.0)
        .min_by(|a, b| (a.ratio - 0.5).abs().total_cmp(&(b.ratio - 0.5).abs()))
        .expect("nonempty");
    let small_over_half = smallest.normalized / half.normalized;
    Ok(CovarianceReport {
        pass: anchored_ci.0 <= 0.0 && small_over_half < 3.0,
        anchor,
        anchored_slope: growth(&pairs, Some(anchor)),
        anchored_ci,
        pooled_slope: growth(&pairs, None),
        pooled_ci,
        pairs,
        max_normalized,
        small_over_half,
    })
}
