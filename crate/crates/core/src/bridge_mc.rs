//! Brownian and reflected Brownian bridges, their local times, and Monte
//! Carlo checks of the bridge identities behind the small-t trace expansion.
//!
//! Paths live on a uniform time grid and are read as piecewise linear between
//! grid points when occupation times are needed. Quantities at the boundary
//! (hitting 0, local time at 0) instead use the exact conditional law of the
//! bridge between consecutive grid values, so they carry no grid bias.

use crate::error::{invalid, Result};
use crate::seed;
use crate::special::{erfc, erfcx};
use crate::stats::{self, Estimate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::f64::consts::PI;

/// Π_B(t; x, y), the Gaussian heat kernel.
pub fn bridge_kernel(t: f64, x: f64, y: f64) -> f64 {
    (-(x - y).powi(2) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Π_X(t; x, y) = Π_B(t; x, y) + Π_B(t; x, −y), the reflected kernel.
pub fn reflected_kernel(t: f64, x: f64, y: f64) -> f64 {
    bridge_kernel(t, x, y) + bridge_kernel(t, x, -y)
}

/// Π_B(t; x, y) − Π_B(t; x, −y), the kernel killed at 0.
pub fn dirichlet_kernel(t: f64, x: f64, y: f64) -> f64 {
    bridge_kernel(t, x, y) - bridge_kernel(t, x, -y)
}

/// A bridge sampled at `steps + 1` equally spaced times on [0, t].
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePath {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub values: Vec<f64>,
    pub reflected: bool,
}

impl BridgePath {
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.t / self.steps() as f64
    }

    /// The path |B|.
    pub fn reflect(&self) -> BridgePath {
        BridgePath {
            t: self.t,
            x: self.x.abs(),
            y: self.y.abs(),
            values: self.values.iter().map(|v| v.abs()).collect(),
            reflected: true,
        }
    }

    /// Trapezoidal ∫₀ᵗ path(s) ds.
    pub fn integral(&self) -> f64 {
        let v = &self.values;
        let inner: f64 = v[1..v.len() - 1].iter().sum();
        self.dt() * (inner + 0.5 * (v[0] + v[v.len() - 1]))
    }
}

fn check_bridge_args(t: f64, steps: usize) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("bridge horizon must be positive, got {t}")));
    }
    if steps < 2 {
        return Err(invalid("a bridge needs at least 2 steps"));
    }
    Ok(())
}

/// Brownian bridge from x to y over [0, t] drawn from `rng`.
pub fn sample_bridge_with<R: Rng + ?Sized>(rng: &mut R, x: f64, y: f64, t: f64, steps: usize) -> BridgePath {
    let sd = (t / steps as f64).sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    let mut w = 0.0;
    values.push(0.0);
    for _ in 0..steps {
        let g: f64 = StandardNormal.sample(rng);
        w += sd * g;
        values.push(w);
    }
    let end = w;
    let s = steps as f64;
    for (k, v) in values.iter_mut().enumerate() {
        *v = x + *v - (k as f64 / s) * (end - (y - x));
    }
    values[0] = x;
    values[steps] = y;
    BridgePath { t, x, y, values, reflected: false }
}

/// Brownian bridge from x to y over [0, t]; exact Gaussian law at the grid
/// times and exact endpoints.
pub fn sample_bridge(x: f64, y: f64, t: f64, steps: usize, seed: u64) -> Result<BridgePath> {
    check_bridge_args(t, steps)?;
    Ok(sample_bridge_with(&mut seed::rng(seed), x, y, t, steps))
}

/// Reflected bridge X^{x,y}_t (x, y ≥ 0): a bridge to +y or −y chosen with
/// the kernel weights, then reflected.
pub fn sample_reflected_bridge_with<R: Rng + ?Sized>(rng: &mut R, x: f64, y: f64, t: f64, steps: usize) -> BridgePath {
    let p_plus = 1.0 / (1.0 + (-2.0 * x * y / t).exp());
    let end = if rng.random::<f64>() < p_plus { y } else { -y };
    sample_bridge_with(rng, x, end, t, steps).reflect()
}

/// How the time axis is split into rows of a local-time field.
#[derive(Debug, Clone, PartialEq)]
pub enum TimePartition {
    Whole,
    PerStep,
    /// Step indices 0 = b₀ < b₁ < … < b_m = steps.
    Breaks(Vec<usize>),
}

/// Local time restricted to a contiguous run of spatial bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    /// Bin j covers [jδ, (j+1)δ).
    pub first_bin: i64,
    pub values: Vec<f64>,
}

impl SparseRow {
    fn empty() -> Self {
        Self { first_bin: 0, values: Vec::new() }
    }

    /// Σ_j a_j b_j over common bins.
    pub fn dot(&self, other: &SparseRow) -> f64 {
        let lo = self.first_bin.max(other.first_bin);
        let hi = (self.first_bin + self.values.len() as i64).min(other.first_bin + other.values.len() as i64);
        (lo..hi)
            .map(|j| self.values[(j - self.first_bin) as usize] * other.values[(j - other.first_bin) as usize])
            .sum()
    }

    /// Adds `other` scaled by `c` into this row, widening as needed.
    pub fn add_scaled(&mut self, other: &SparseRow, c: f64) {
        if other.values.is_empty() {
            return;
        }
        if self.values.is_empty() {
            self.first_bin = other.first_bin;
            self.values = other.values.iter().map(|v| c * v).collect();
            return;
        }
        let lo = self.first_bin.min(other.first_bin);
        let hi = (self.first_bin + self.values.len() as i64).max(other.first_bin + other.values.len() as i64);
        if lo < self.first_bin || hi > self.first_bin + self.values.len() as i64 {
            let mut wide = vec![0.0; (hi - lo) as usize];
            let off = (self.first_bin - lo) as usize;
            wide[off..off + self.values.len()].copy_from_slice(&self.values);
            self.values = wide;
            self.first_bin = lo;
        }
        let off = (other.first_bin - self.first_bin) as usize;
        for (k, v) in other.values.iter().enumerate() {
            self.values[off + k] += c * v;
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Histogram local time L[interval][bin] with bin width δ.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeField {
    pub delta: f64,
    pub intervals: Vec<(f64, f64)>,
    pub rows: Vec<SparseRow>,
}

impl LocalTimeField {
    /// ∫ L dy over row `i`, which equals the interval's length.
    pub fn row_mass(&self, i: usize) -> f64 {
        self.rows[i].sum() * self.delta
    }

    /// Local time over the whole horizon.
    pub fn total(&self) -> SparseRow {
        let mut acc = SparseRow::empty();
        for r in &self.rows {
            acc.add_scaled(r, 1.0);
        }
        acc
    }

    /// ‖L‖₂² of the total local time.
    pub fn norm2_squared(&self) -> f64 {
        let t = self.total();
        t.values.iter().map(|v| v * v).sum::<f64>() * self.delta
    }

    /// ⟨L_a, L_b⟩ in L²(dy).
    pub fn inner(&self, a: usize, b: usize) -> f64 {
        self.rows[a].dot(&self.rows[b]) * self.delta
    }

    /// Same field on bins of width 2δ.
    pub fn coarsen(&self) -> LocalTimeField {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                if r.values.is_empty() {
                    return SparseRow::empty();
                }
                let lo = r.first_bin.div_euclid(2);
                let hi = (r.first_bin + r.values.len() as i64 - 1).div_euclid(2);
                let mut values = vec![0.0; (hi - lo + 1) as usize];
                for (k, v) in r.values.iter().enumerate() {
                    let j = (r.first_bin + k as i64).div_euclid(2);
                    values[(j - lo) as usize] += 0.5 * v;
                }
                SparseRow { first_bin: lo, values }
            })
            .collect();
        LocalTimeField { delta: 2.0 * self.delta, intervals: self.intervals.clone(), rows }
    }
}

/// Deposits the occupation density of the segment a → b (duration s) into
/// `buf`, whose first entry is bin `b0`.
fn deposit(buf: &mut [f64], b0: i64, a: f64, b: f64, s: f64, delta: f64) {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let jlo = (lo / delta).floor() as i64;
    let jhi = (hi / delta).floor() as i64;
    if jlo == jhi {
        buf[(jlo - b0) as usize] += s / delta;
        return;
    }
    let rate = s / (hi - lo) / delta;
    for j in jlo..=jhi {
        let left = (j as f64 * delta).max(lo);
        let right = ((j + 1) as f64 * delta).min(hi);
        if right > left {
            buf[(j - b0) as usize] += rate * (right - left);
        }
    }
}

fn row_for(values: &[f64], dt: f64, delta: f64) -> SparseRow {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let b0 = (lo / delta).floor() as i64;
    let b1 = (hi / delta).floor() as i64;
    let mut buf = vec![0.0; (b1 - b0 + 1) as usize];
    for w in values.windows(2) {
        deposit(&mut buf, b0, w[0], w[1], dt, delta);
    }
    SparseRow { first_bin: b0, values: buf }
}

/// Occupation-density local time of the piecewise-linear path, one row per
/// time interval of `partition`.
pub fn local_time_field(path: &BridgePath, delta: f64, partition: &TimePartition) -> Result<LocalTimeField> {
    if !(delta > 0.0) {
        return Err(invalid("bin width must be positive"));
    }
    let steps = path.steps();
    let breaks: Vec<usize> = match partition {
        TimePartition::Whole => vec![0, steps],
        TimePartition::PerStep => (0..=steps).collect(),
        TimePartition::Breaks(b) => {
            if b.first() != Some(&0) || b.last() != Some(&steps) || b.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("breaks must increase strictly from 0 to the step count"));
            }
            b.clone()
        }
    };
    let dt = path.dt();
    let mut intervals = Vec::with_capacity(breaks.len() - 1);
    let mut rows = Vec::with_capacity(breaks.len() - 1);
    for w in breaks.windows(2) {
        intervals.push((w[0] as f64 * dt, w[1] as f64 * dt));
        rows.push(row_for(&path.values[w[0]..=w[1]], dt, delta));
    }
    Ok(LocalTimeField { delta, intervals, rows })
}

/// ‖L‖₂² of the whole path, Richardson-extrapolated in the bin width:
/// 2·f(δ) − f(2δ).
pub fn self_intersection(path: &BridgePath, delta: f64) -> Result<f64> {
    let field = local_time_field(path, delta, &TimePartition::Whole)?;
    Ok(2.0 * field.norm2_squared() - field.coarsen().norm2_squared())
}

/// Probability that a Brownian bridge between grid values a and b over time
/// s touches 0.
pub fn step_hit_probability(a: f64, b: f64, s: f64) -> f64 {
    if a * b <= 0.0 {
        1.0
    } else {
        (-2.0 * a * b / s).exp()
    }
}

/// P[no zero hit] for a reflected bridge between a, b ≥ 0 over time s.
pub fn reflected_step_no_hit(a: f64, b: f64, s: f64) -> f64 {
    let q = (-2.0 * a * b / s).exp();
    (1.0 - q) / (1.0 + q)
}

/// E[e^{−wℓ}] for the boundary local time ℓ of a reflected bridge between
/// a, b ≥ 0 over time s; `w = ∞` gives the no-hit probability.
pub fn reflected_step_factor(a: f64, b: f64, s: f64, w: f64) -> f64 {
    if w == f64::INFINITY {
        return reflected_step_no_hit(a, b, s);
    }
    if w == 0.0 {
        return 1.0;
    }
    let q = (-2.0 * a * b / s).exp();
    let hit = 2.0 * q / (1.0 + q);
    1.0 - hit * w * (PI * s / 2.0).sqrt() * erfcx((a + b + w * s) / (2.0 * s).sqrt())
}

/// E[ℓ] for the boundary local time of a reflected bridge step.
pub fn reflected_step_local_time(a: f64, b: f64, s: f64) -> f64 {
    let q = (-2.0 * a * b / s).exp();
    2.0 * q / (1.0 + q) * (PI * s / 2.0).sqrt() * erfcx((a + b) / (2.0 * s).sqrt())
}

fn require_reflected(path: &BridgePath) -> Result<()> {
    if !path.reflected {
        return Err(invalid("this functional needs a reflected path"));
    }
    Ok(())
}

/// E[𝔏⁰_t | grid values] for a reflected path.
pub fn expected_boundary_local_time(path: &BridgePath) -> Result<f64> {
    require_reflected(path)?;
    let s = path.dt();
    Ok(path.values.windows(2).map(|w| reflected_step_local_time(w[0], w[1], s)).sum())
}

/// E[e^{−w𝔏⁰_t} | grid values] for a reflected path.
pub fn boundary_factor(path: &BridgePath, w: f64) -> Result<f64> {
    require_reflected(path)?;
    let s = path.dt();
    Ok(path.values.windows(2).map(|v| reflected_step_factor(v[0], v[1], s, w)).product())
}

/// Exact draw of whether the continuous bridge behind a signed grid path
/// touches 0.
pub fn sample_zero_hit<R: Rng + ?Sized>(path: &BridgePath, rng: &mut R) -> Result<bool> {
    if path.reflected {
        return Err(invalid("zero hits are drawn on the signed path"));
    }
    let s = path.dt();
    for w in path.values.windows(2) {
        let p = step_hit_probability(w[0], w[1], s);
        if p >= 1.0 || rng.random::<f64>() < p {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Exact draw of the local time at `level` of the continuous bridge behind a
/// signed grid path, given its grid values.
pub fn sample_level_local_time<R: Rng + ?Sized>(path: &BridgePath, level: f64, rng: &mut R) -> Result<f64> {
    if path.reflected {
        return Err(invalid("level local times are drawn on the signed path"));
    }
    let s = path.dt();
    let mut total = 0.0;
    for w in path.values.windows(2) {
        let (a, b) = (w[0] - level, w[1] - level);
        let c = a.abs() + b.abs();
        let d = b - a;
        let p_hit = ((d * d - c * c) / (2.0 * s)).exp();
        if rng.random::<f64>() < p_hit {
            // given a hit, (c + ℓ)² − c² is exponential with mean 2s
            let u: f64 = 1.0 - rng.random::<f64>();
            total += (c * c - 2.0 * s * u.ln()).sqrt() - c;
        }
    }
    Ok(total)
}

/// Boundary local time read off occupation times near 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryLocalTime {
    pub value: f64,
    /// Slope of the linear fit in ε.
    pub slope: f64,
    pub converged: bool,
}

/// (1/2ε)·(time within ε of 0) on a ladder of ε, extrapolated linearly to
/// ε = 0. Signed paths are measured through |B|.
pub fn boundary_local_time(path: &BridgePath, epsilons: &[f64]) -> Result<BoundaryLocalTime> {
    if epsilons.len() < 2 || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("need at least two positive epsilons"));
    }
    let s = path.dt();
    let occupation = |eps: f64| -> f64 {
        let mut occ = 0.0;
        for w in path.values.windows(2) {
            let (lo, hi) = if w[0] <= w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
            if hi - lo < 1e-300 {
                if lo.abs() < eps {
                    occ += s;
                }
                continue;
            }
            let overlap = (hi.min(eps) - lo.max(-eps)).max(0.0);
            occ += s * overlap / (hi - lo);
        }
        occ / (2.0 * eps)
    };
    let ys: Vec<f64> = epsilons.iter().map(|&e| occupation(e)).collect();
    let (value, slope, _) = stats::linear_regression(epsilons, &ys);
    if ys.iter().all(|&y| y == 0.0) {
        return Ok(BoundaryLocalTime { value: 0.0, slope: 0.0, converged: true });
    }
    let smallest = epsilons
        .iter()
        .zip(&ys)
        .min_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, y)| *y)
        .unwrap_or(0.0);
    let converged = value >= 0.0 && (value - smallest).abs() <= 0.5 * smallest.max(1e-12);
    Ok(BoundaryLocalTime { value: value.max(0.0), slope, converged })
}

/// Boundary handling for [`reflected_expectation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryRule {
    Reflecting,
    Dirichlet,
}

/// Monte Carlo of Π_B(t;x,x)·E[F(|B^{x,x}|)] ± Π_B(t;x,−x)·E[F(|B^{x,−x}|)],
/// which equals Π_X(t;x,x)·E[F(X^{x,x})] (plus sign) or its counterpart
/// killed at 0 (minus sign).
pub fn reflected_expectation<F>(
    f: F,
    x: f64,
    t: f64,
    steps: usize,
    n_paths: usize,
    seed: u64,
    rule: BoundaryRule,
) -> Result<Estimate>
where
    F: Fn(&BridgePath) -> f64 + Sync,
{
    check_bridge_args(t, steps)?;
    if n_paths < 2 {
        return Err(invalid("need at least two paths"));
    }
    let sign = match rule {
        BoundaryRule::Reflecting => 1.0,
        BoundaryRule::Dirichlet => -1.0,
    };
    let (same, cross) = (bridge_kernel(t, x, x), bridge_kernel(t, x, -x));
    let samples = seed::par_replicas(seed, n_paths, |_, s| {
        let mut rng = seed::rng(s);
        let a = sample_bridge_with(&mut rng, x, x, t, steps).reflect();
        let b = sample_bridge_with(&mut rng, x, -x, t, steps).reflect();
        same * f(&a) + sign * cross * f(&b)
    });
    Ok(Estimate::from_samples(&samples))
}

/// Mean of ‖L_t‖₂² (Richardson in δ) over bridges from x to y, optionally
/// reflected.
pub fn self_intersection_mean(
    x: f64,
    y: f64,
    t: f64,
    reflected: bool,
    steps: usize,
    delta: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    check_bridge_args(t, steps)?;
    let samples: Vec<f64> = seed::par_replicas(seed, n_paths, |_, s| {
        let mut p = sample_bridge_with(&mut seed::rng(s), x, y, t, steps);
        if reflected {
            p = p.reflect();
        }
        self_intersection(&p, delta).expect("positive bin width")
    });
    if delta <= 0.0 {
        return Err(invalid("bin width must be positive"));
    }
    Ok(Estimate::from_samples(&samples))
}

/// Fraction of bridges x → x over [0, t] that touch 0, with exact per-step
/// hit draws.
pub fn zero_hit_probability(x: f64, t: f64, steps: usize, n_paths: usize, seed: u64) -> Result<Estimate> {
    check_bridge_args(t, steps)?;
    let hits: Vec<f64> = seed::par_replicas(seed, n_paths, |_, s| {
        let mut rng = seed::rng(s);
        let p = sample_bridge_with(&mut rng, x, x, t, steps);
        f64::from(u8::from(sample_zero_hit(&p, &mut rng).expect("signed path")))
    });
    Ok(Estimate::from_samples(&hits))
}

/// P[L^y_t ≤ ℓ] for the bridge x → z over [0, t]; the jump at ℓ = 0 is the
/// probability of never reaching y.
pub fn pitman_cdf(ell: f64, x: f64, z: f64, y: f64, t: f64) -> f64 {
    if ell < 0.0 {
        return 0.0;
    }
    let c = (x - y).abs() + (z - y).abs();
    let d = z - x;
    1.0 - (-((c + ell).powi(2) - d * d) / (2.0 * t)).exp()
}

/// E[(L^y_t)²] for the bridge x → x.
pub fn pitman_second_moment(x: f64, y: f64, t: f64) -> f64 {
    let c = 2.0 * (x - y).abs();
    2.0 * t * (-c * c / (2.0 * t)).exp() - c * (2.0 * PI * t).sqrt() * erfc(c / (2.0 * t).sqrt())
}

/// Outcome of comparing sampled bridge local times with their exact law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PitmanCheck {
    pub ks: f64,
    pub pass: bool,
    pub atom_empirical: f64,
    pub atom_exact: f64,
    pub second_moment: Estimate,
    pub second_moment_exact: f64,
}

/// KS distance between sampled L^y_t(B^{x,x}) and its exact conditional law.
pub fn pitman_density_check(x: f64, y: f64, t: f64, steps: usize, n_paths: usize, seed: u64) -> Result<PitmanCheck> {
    check_bridge_args(t, steps)?;
    if n_paths < 10_000 {
        return Err(invalid("the local-time law check needs at least 10⁴ paths"));
    }
    let samples: Vec<f64> = seed::par_replicas(seed, n_paths, |_, s| {
        let mut rng = seed::rng(s);
        let p = sample_bridge_with(&mut rng, x, x, t, steps);
        sample_level_local_time(&p, y, &mut rng).expect("signed path")
    });
    let cdf = |l: f64| pitman_cdf(l, x, x, y, t);
    let cdf_left = |l: f64| if l <= 0.0 { 0.0 } else { cdf(l) };
    let ks = stats::ks_one_sample(&samples, cdf, cdf_left);
    let atom_empirical = samples.iter().filter(|&&l| l == 0.0).count() as f64 / n_paths as f64;
    let squares: Vec<f64> = samples.iter().map(|l| l * l).collect();
    Ok(PitmanCheck {
        ks,
        pass: ks < 0.02,
        atom_empirical,
        atom_exact: cdf(0.0),
        second_moment: Estimate::from_samples(&squares),
        second_moment_exact: pitman_second_moment(x, y, t),
    })
}

/// Brownian-scaling comparison of self-intersection norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiltReport {
    pub t: f64,
    pub x: f64,
    /// Two-sample KS between ‖L_t(|B^{x,±x}_t|)‖² and t^{3/2}‖L₁(|B^{x/√t,±x/√t}_1|)‖², one per sign.
    pub ks: [f64; 2],
    /// Largest relative gap between the two sides on coupled paths.
    pub coupled_max_rel_diff: f64,
    /// Mean of t^{−3/2}‖L_t(|B^{x,x}_t|)‖².
    pub scaled_mean: Estimate,
    pub pass: bool,
}

/// Checks ‖L_t(|B^{x,±x}_t|)‖² = t^{3/2}‖L₁(|B^{x/√t,±x/√t}_1|)‖² in law. Bins
/// scale with √t on the horizon-t side so both sides see the same grid.
pub fn silt_scaling_check(t: f64, x: f64, steps: usize, delta: f64, n_paths: usize, seed: u64) -> Result<SiltReport> {
    check_bridge_args(t, steps)?;
    if !(t <= 1.0) {
        return Err(invalid("scaling check needs t in (0, 1]"));
    }
    let rt = t.sqrt();
    let mut ks = [0.0; 2];
    let mut scaled = Vec::new();
    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
        let direct: Vec<f64> = seed::par_replicas(seed::derive_seed(seed, 2 * k as u64), n_paths, |_, s| {
            let p = sample_bridge_with(&mut seed::rng(s), x, sign * x, t, steps).reflect();
            self_intersection(&p, delta * rt).expect("positive bin width")
        });
        let unit: Vec<f64> = seed::par_replicas(seed::derive_seed(seed, 2 * k as u64 + 1), n_paths, |_, s| {
            let p = sample_bridge_with(&mut seed::rng(s), x / rt, sign * x / rt, 1.0, steps).reflect();
            t.powf(1.5) * self_intersection(&p, delta).expect("positive bin width")
        });
        ks[k] = stats::ks_two_sample(&direct, &unit).0;
        if k == 0 {
            scaled = direct.iter().map(|v| v / t.powf(1.5)).collect();
        }
    }
    let coupled: Vec<f64> = seed::par_replicas(seed::derive_seed(seed, 99), 200.min(n_paths), |_, s| {
        let a = sample_bridge_with(&mut seed::rng(s), x, x, t, steps).reflect();
        let b = sample_bridge_with(&mut seed::rng(s), x / rt, x / rt, 1.0, steps).reflect();
        let lhs = self_intersection(&a, delta * rt).expect("positive bin width");
        let rhs = t.powf(1.5) * self_intersection(&b, delta).expect("positive bin width");
        (lhs - rhs).abs() / lhs.abs().max(1e-300)
    });
    let coupled_max_rel_diff = coupled.into_iter().fold(0.0, f64::max);
    Ok(SiltReport {
        t,
        x,
        ks,
        coupled_max_rel_diff,
        scaled_mean: Estimate::from_samples(&scaled),
        pass: ks[0] < 0.03 && ks[1] < 0.03,
    })
}

/// Monte Carlo budget for the asymptotic checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeBudget {
    pub paths: usize,
    pub steps: usize,
    pub delta: f64,
}

impl Default for BridgeBudget {
    fn default() -> Self {
        Self { paths: 20_000, steps: 1024, delta: 0.01 }
    }
}

/// One line of [`verify_bridge_asymptotics`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportItem {
    pub item: String,
    pub t: Option<f64>,
    pub estimate: f64,
    pub stderr: f64,
    /// Exact value at this t when available, otherwise the t → 0 limit.
    pub target: f64,
    pub limit: f64,
    pub pass: bool,
    pub note: Option<String>,
}

/// ∫₀^∞ f by composite Simpson on [0, upper] (f must be negligible beyond).
pub(crate) fn simpson(f: impl Fn(f64) -> f64, upper: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = upper / n as f64;
    let mut s = f(0.0) + f(upper);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// t^{3/2}·∫₀^∞ e^{−κtx}Π_B(t;x,x) dx, which equals 1/(√(2π)κ) for every t.
pub fn leading_term(kappa: f64, t: f64) -> f64 {
    let upper = 60.0 / (kappa * t);
    t.powf(1.5) * simpson(|x| (-kappa * t * x).exp() * bridge_kernel(t, x, x), upper, 20_000)
}

/// ∫₀^∞ e^{−κtx}Π_B(t;x,−x) dx = ¼e^{κ²t³/8}erfc(κt^{3/2}/(2√2)).
pub fn boundary_constant(kappa: f64, t: f64) -> f64 {
    let z = kappa * t.powf(1.5) / (2.0 * 2f64.sqrt());
    0.25 * erfcx(z)
}

fn boundary_constant_quadrature(kappa: f64, t: f64) -> f64 {
    let upper = 40.0 * t.sqrt() + 1.0;
    simpson(|x| (-kappa * t * x).exp() * bridge_kernel(t, x, -x), upper, 20_000)
}

/// t^{−1/2}∫₀^∞ e^{−κtx}erfc(√(2/t)·x) dx, the boundary local-time term.
pub fn boundary_local_time_term(kappa: f64, t: f64) -> f64 {
    let upper = 30.0 * t.sqrt();
    simpson(|x| (-kappa * t * x).exp() * erfc((2.0 / t).sqrt() * x), upper, 20_000) / t.sqrt()
}

struct XSample {
    weight: f64,
    path: BridgePath,
}

/// x ~ Exp(κt), then X^{x,x}_t; the weight Π_X(t;x,x)/(κt e^{−κtx})·e^{−κtx}
/// turns averages into ∫₀^∞ e^{−κtx}Π_X(t;x,x)E[·] dx.
fn draw_x_bridge(rng: &mut seed::Rng, kappa: f64, t: f64, steps: usize) -> XSample {
    let rate = kappa * t;
    let u: f64 = 1.0 - rng.random::<f64>();
    let x = -u.ln() / rate;
    let weight = reflected_kernel(t, x, x) / rate;
    XSample { weight, path: sample_reflected_bridge_with(rng, x, x, t, steps) }
}

/// Numerical checks of the small-t behaviour of the bridge integrals that
/// make up the scalar trace expansion.
pub fn verify_bridge_asymptotics(kappa: f64, t_grid: &[f64], budget: BridgeBudget, seed: u64) -> Result<Vec<ReportItem>> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa must be positive"));
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(invalid("t grid must lie in (0, 1]"));
    }
    check_bridge_args(1.0, budget.steps)?;
    let mut out = Vec::new();
    let lead = 1.0 / ((2.0 * PI).sqrt() * kappa);
    let displayed = 1.0 / (2.0 * PI * kappa);
    let item = |name: &str, t: Option<f64>, e: Estimate, target: f64, limit: f64, tol: f64, note: Option<String>| ReportItem {
        item: name.to_string(),
        t,
        estimate: e.value,
        stderr: e.stderr,
        target,
        limit,
        pass: e.agrees_with(target, tol, 3.0),
        note,
    };
    for (ti, &t) in t_grid.iter().enumerate() {
        let exact = |v: f64| Estimate { value: v, stderr: 0.0 };
        out.push(item(
            "leading",
            Some(t),
            exact(leading_term(kappa, t)),
            lead,
            lead,
            1e-6 * lead,
            Some(format!("coefficient 1/(sqrt(2 pi) kappa) = {lead:.6}; the alternative 1/(2 pi kappa) = {displayed:.6} does not match")),
        ));
        let bc = boundary_constant(kappa, t);
        out.push(item(
            "robin_constant",
            Some(t),
            exact(boundary_constant_quadrature(kappa, t)),
            bc,
            0.25,
            1e-8,
            None,
        ));
        out.push(item(
            "leading_dirichlet",
            Some(t),
            exact(2.0 * boundary_constant_quadrature(kappa, t)),
            2.0 * bc,
            0.5,
            1e-8,
            None,
        ));

        let base = seed::derive_seed(seed, ti as u64);
        let steps = budget.steps;
        let delta = budget.delta * t.sqrt();
        let rows: Vec<[f64; 4]> = seed::par_replicas(base, budget.paths, |_, s| {
            let mut rng = seed::rng(s);
            let XSample { weight, path } = draw_x_bridge(&mut rng, kappa, t, steps);
            let l2 = self_intersection(&path, delta).expect("positive bin width");
            let no_hit = boundary_factor(&path, f64::INFINITY).expect("reflected");
            let lt = expected_boundary_local_time(&path).expect("reflected");
            let z = 0.5 * l2; // σ² = 1
            let remainder = z.exp() - 1.0 - z;
            [weight * l2, weight * l2 * no_hit, weight * lt / t.sqrt(), weight * remainder]
        });
        let col = |k: usize| Estimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
        let si_limit = 1.0 / (2.0 * kappa);
        out.push(item("self_intersection", Some(t), col(0), si_limit, si_limit, 0.1 * si_limit, None));
        out.push(item("self_intersection_dirichlet", Some(t), col(1), si_limit, si_limit, 0.1 * si_limit, None));
        let blt = boundary_local_time_term(kappa, t);
        out.push(item("boundary_lc", Some(t), col(2), blt, 1.0 / (2.0 * PI).sqrt(), 0.03 * blt, None));
        out.push(item("remainder", Some(t), col(3), 0.0, 0.0, 0.05, None));
    }
    let integral = integral_item(budget, seed::derive_seed(seed, u64::MAX))?;
    let target = 2f64.sqrt() / (3.0 * PI.sqrt());
    out.push(item("integral", None, integral, target, target, 0.03 * target, None));
    Ok(out)
}

/// ∫₀^∞ e^{−2x²}/√(2π)·E[‖L₁(B^{0,−2x})‖²] dx, with x drawn half-normal
/// (sd ½), under which the integrand weight is the constant ¼.
pub fn integral_item(budget: BridgeBudget, seed: u64) -> Result<Estimate> {
    check_bridge_args(1.0, budget.steps)?;
    let samples: Vec<f64> = seed::par_replicas(seed, budget.paths, |_, s| {
        let mut rng = seed::rng(s);
        let g: f64 = StandardNormal.sample(&mut rng);
        let x = 0.5 * g.abs();
        let p = sample_bridge_with(&mut rng, 0.0, -2.0 * x, 1.0, budget.steps);
        0.25 * self_intersection(&p, budget.delta).expect("positive bin width")
    });
    Ok(Estimate::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn kernels() {
        let (t, x) = (0.7, 0.4);
        assert_abs_diff_eq!(reflected_kernel(t, x, x), (1.0 + (-2.0 * x * x / t).exp()) / (2.0 * PI * t).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(dirichlet_kernel(t, x, x), (1.0 - (-2.0 * x * x / t).exp()) / (2.0 * PI * t).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn bridge_endpoints_and_determinism() {
        let a = sample_bridge(1.0, -1.0, 2.0, 64, 5).unwrap();
        assert_eq!(a.values[0], 1.0);
        assert_eq!(a.values[64], -1.0);
        assert_eq!(a, sample_bridge(1.0, -1.0, 2.0, 64, 5).unwrap());
        assert!(a.reflect().values.iter().all(|v| *v >= 0.0));
        assert!(sample_bridge(0.0, 0.0, 0.0, 64, 5).is_err());
        assert!(sample_bridge(0.0, 0.0, 1.0, 1, 5).is_err());
    }

    #[test]
    fn bridge_moments() {
        let n = 20_000;
        let mids: Vec<f64> = (0..n).map(|i| sample_bridge(0.0, 0.0, 1.0, 16, i).unwrap().values[8]).collect();
        let v = stats::variance(&mids);
        assert!((v - 0.25).abs() < 0.02 * 0.25 + 3.0 * 0.25 * (2.0 / n as f64).sqrt());
        let quarter: Vec<f64> = (0..n).map(|i| sample_bridge(1.0, -1.0, 1.0, 16, i).unwrap().values[4]).collect();
        let e = Estimate::from_samples(&quarter);
        assert!(e.agrees_with(0.5, 0.0, 4.0));
    }

    #[test]
    fn linear_path_local_time() {
        let steps = 100;
        let values: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        let path = BridgePath { t: 2.0, x: 0.0, y: 1.0, values, reflected: false };
        let f = local_time_field(&path, 0.05, &TimePartition::Whole).unwrap();
        let total = f.total();
        for (k, v) in total.values.iter().enumerate() {
            let j = total.first_bin + k as i64;
            if (0..20).contains(&j) {
                assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-9);
            }
        }
        assert_abs_diff_eq!(f.row_mass(0), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn coarsen_preserves_mass() {
        let p = sample_bridge(0.3, 0.1, 1.0, 256, 2).unwrap();
        let f = local_time_field(&p, 0.01, &TimePartition::PerStep).unwrap();
        let c = f.coarsen();
        for i in 0..f.rows.len() {
            assert_abs_diff_eq!(c.row_mass(i), f.row_mass(i), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(f.total().sum() * f.delta, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn step_factors_limits() {
        let (a, b, s) = (0.1, 0.05, 0.01);
        assert_abs_diff_eq!(reflected_step_factor(a, b, s, 0.0), 1.0);
        let big = reflected_step_factor(a, b, s, 1e9);
        assert_abs_diff_eq!(big, reflected_step_no_hit(a, b, s), epsilon = 1e-6);
        // small-w expansion: 1 − w·E[ℓ]
        let w = 1e-6;
        let small = reflected_step_factor(a, b, s, w);
        assert_abs_diff_eq!((1.0 - small) / w, reflected_step_local_time(a, b, s), epsilon = 1e-6);
    }

    #[test]
    fn step_factor_matches_sampled_local_time() {
        // reflected step a → b: the signed bridge ends at +b or −b with odds 1 : q
        let (a, b, s, w): (f64, f64, f64, f64) = (0.05, 0.08, 0.01, 3.0);
        let q = (-2.0 * a * b / s).exp();
        let mut rng = seed::rng(11);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let end = if rng.random::<f64>() < 1.0 / (1.0 + q) { b } else { -b };
            let path = BridgePath { t: s, x: a, y: end, values: vec![a, end], reflected: false };
            let l = sample_level_local_time(&path, 0.0, &mut rng).unwrap();
            acc += (-w * l).exp();
        }
        let mc = acc / n as f64;
        assert!((mc - reflected_step_factor(a, b, s, w)).abs() < 4.0 * 0.3 / (n as f64).sqrt());
    }

    #[test]
    fn boundary_local_time_away_from_zero() {
        let p = sample_bridge(5.0, 5.0, 1.0, 256, 0).unwrap();
        let b = boundary_local_time(&p, &[0.02, 0.04, 0.08]).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.converged);
        assert!(expected_boundary_local_time(&p.reflect()).unwrap() < 1e-12);
    }

    #[test]
    fn reflected_expectation_constant_functional() {
        let (x, t) = (0.3, 0.8);
        let e = reflected_expectation(|_| 1.0, x, t, 8, 10, 0, BoundaryRule::Reflecting).unwrap();
        assert_abs_diff_eq!(e.value, reflected_kernel(t, x, x), epsilon = 1e-14);
        let d = reflected_expectation(|_| 1.0, x, t, 8, 10, 0, BoundaryRule::Dirichlet).unwrap();
        assert_abs_diff_eq!(d.value, dirichlet_kernel(t, x, x), epsilon = 1e-14);
    }

    #[test]
    fn reflected_bound_by_twice_free() {
        let (x, t) = (0.2, 1.0);
        let f = |p: &BridgePath| p.integral();
        let direct: Vec<f64> = (0..4000)
            .map(|i| {
                let mut rng = seed::rng(i);
                reflected_kernel(t, x, x) * f(&sample_reflected_bridge_with(&mut rng, x, x, t, 64))
            })
            .collect();
        let free: Vec<f64> = (0..4000)
            .map(|i| 2.0 * bridge_kernel(t, x, x) * f(&sample_bridge_with(&mut seed::rng(10_000 + i), x, x, t, 64).reflect()))
            .collect();
        let (a, b) = (Estimate::from_samples(&direct), Estimate::from_samples(&free));
        assert!(a.value <= b.value + 3.0 * (a.stderr.hypot(b.stderr)));
    }

    #[test]
    fn pitman_far_level_is_an_atom() {
        let mut rng = seed::rng(1);
        let p = sample_bridge(0.0, 0.0, 1.0, 256, 4).unwrap();
        assert_eq!(sample_level_local_time(&p, 20.0, &mut rng).unwrap(), 0.0);
        assert!(pitman_cdf(0.0, 0.0, 0.0, 20.0, 1.0) > 1.0 - 1e-12);
    }

    #[test]
    fn pitman_second_moment_formula() {
        assert_abs_diff_eq!(pitman_second_moment(0.0, 0.0, 1.0), 2.0, epsilon = 1e-15);
        // against quadrature of 2ℓ·P[L > ℓ]
        let (x, y, t) = (0.1, 0.4, 0.7);
        let quad = simpson(|l| 2.0 * l * (1.0 - pitman_cdf(l, x, x, y, t)), 20.0, 20_000);
        assert_abs_diff_eq!(pitman_second_moment(x, y, t), quad, epsilon = 1e-10);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for &t in &[0.1, 0.5, 1.0] {
            assert_abs_diff_eq!(leading_term(0.7, t), 1.0 / ((2.0 * PI).sqrt() * 0.7), epsilon = 1e-8);
            assert_abs_diff_eq!(boundary_constant(0.7, t), boundary_constant_quadrature(0.7, t), epsilon = 1e-10);
        }
        assert!((boundary_constant(1.0, 1e-3) - 0.25).abs() < 1e-4);
        assert!((boundary_local_time_term(1.0, 1e-4) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn occupation_identity(seed in 0u64..1000, x in -1.0f64..1.0, y in -1.0f64..1.0, delta in 0.005f64..0.2, parts in 1usize..6) {
            let p = sample_bridge(x, y, 0.9, 120, seed).unwrap();
            let breaks: Vec<usize> = (0..=parts).map(|k| k * 120 / parts).collect();
            let f = local_time_field(&p, delta, &TimePartition::Breaks(breaks)).unwrap();
            for (i, (a, b)) in f.intervals.iter().enumerate() {
                prop_assert!((f.row_mass(i) - (b - a)).abs() < 1e-9);
            }
        }
    }
}
