//! Finite-difference discretizations of the stochastic Airy operator and of
//! its generalized form −½ d²/dx² + κx + ξ on the half-line.
//!
//! The half-line is cut at `L` with a hard wall and split into `N` cells of
//! width `h` centred at x_k = (k+½)h. Component α of cell k sits at global
//! index k·m + α, where m = r (or 2r when quaternion entries are embedded as
//! 2×2 complex blocks), so the matrix is Hermitian with half-bandwidth m.
//! Both boundaries use midpoint ghost values: the ghost at −h/2 equals g·f₀
//! with g = (1 − hw/2)/(1 + hw/2) for a Robin weight w and g = −1 for
//! Dirichlet, which keeps the scheme second order and makes Dirichlet the
//! exact w → ∞ limit of Robin.

use crate::ensembles::{dedup_kramers, quaternion_block};
use crate::error::{invalid, Error, Result};
use crate::estimators::PointConfiguration;
use crate::linalg::HermitianBand;
use crate::seed;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Relative tolerance for collapsing Kramers pairs of embedded spectra.
pub const KRAMERS_TOL: f64 = 1e-6;
/// Largest admissible relative eigen-residual ‖Av − λv‖/‖A‖∞.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Operator parameters θ = (r, β, w).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaoParams {
    pub r: usize,
    pub beta: f64,
    /// Boundary weight per component; `f64::INFINITY` means Dirichlet.
    pub w: Vec<f64>,
}

impl SaoParams {
    pub fn new(r: usize, beta: f64, w: Vec<f64>) -> Result<Self> {
        let p = Self { r, beta, w };
        p.validate()?;
        Ok(p)
    }

    /// Scalar operator with a single boundary weight.
    pub fn scalar(beta: f64, w: f64) -> Result<Self> {
        Self::new(1, beta, vec![w])
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(invalid("r must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if self.r > 1 && ![1.0, 2.0, 4.0].contains(&self.beta) {
            return Err(invalid("matrix-valued operators need beta in {1, 2, 4}"));
        }
        if self.w.len() != self.r {
            return Err(invalid(format!("expected {} boundary weights, got {}", self.r, self.w.len())));
        }
        if self.w.iter().any(|w| w.is_nan() || *w == f64::NEG_INFINITY) {
            return Err(invalid("boundary weights must be finite or +inf"));
        }
        Ok(())
    }

    /// Number of Robin (finite-weight) components.
    pub fn r0(&self) -> usize {
        self.w.iter().filter(|w| w.is_finite()).count()
    }

    /// Whether entries are quaternions embedded as 2×2 complex blocks.
    pub fn embedded(&self) -> bool {
        self.r > 1 && self.beta == 4.0
    }

    /// Rows per cell.
    pub fn block(&self) -> usize {
        if self.embedded() {
            2 * self.r
        } else {
            self.r
        }
    }

    /// The generalized parameters for which 2Ĥ equals the SAO itself:
    /// (r/2, 1/√β, 1/√2).
    pub fn sao_eta(&self) -> GeneralizedParams {
        GeneralizedParams {
            kappa: self.r as f64 / 2.0,
            sigma: self.beta.sqrt().recip(),
            upsilon: std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

/// Drift slope κ and noise strengths σ (diagonal), υ (off-diagonal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedParams {
    pub kappa: f64,
    pub sigma: f64,
    pub upsilon: f64,
}

impl GeneralizedParams {
    pub fn new(kappa: f64, sigma: f64, upsilon: f64) -> Result<Self> {
        let p = Self { kappa, sigma, upsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !(ok(self.kappa) && ok(self.sigma) && ok(self.upsilon)) {
            return Err(invalid("kappa, sigma and upsilon must be positive"));
        }
        Ok(())
    }
}

/// Uniform cell grid on [0, L].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl GridSpec {
    pub fn new(h: f64, l: f64) -> Result<Self> {
        if !(h > 0.0) || h > 0.1 {
            return Err(invalid(format!("mesh step must lie in (0, 0.1], got {h}")));
        }
        if !(l >= 10.0) || !l.is_finite() {
            return Err(invalid(format!("domain length must be at least 10, got {l}")));
        }
        let n = (l / h).round() as usize;
        if n < 10 {
            return Err(invalid("grid needs at least 10 cells"));
        }
        if (n as f64 * h - l).abs() > 1e-12 * l.max(1.0) {
            return Err(invalid(format!("L = {l} is not a multiple of h = {h}")));
        }
        Ok(Self { h, l, n })
    }

    /// Cell midpoint x_k = (k+½)h.
    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h
    }
}

/// Which operator a matrix discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatorKind {
    /// −½ d² + κx + ξ.
    Generalized,
    /// The SAO itself, equal to twice the generalized operator at `sao_eta`.
    Sao,
}

/// A built discretization together with its provenance.
#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub matrix: HermitianBand,
    pub grid: GridSpec,
    pub theta: SaoParams,
    pub eta: GeneralizedParams,
    pub kind: OperatorKind,
    /// `None` for noiseless builds.
    pub seed: Option<u64>,
    /// Per-cell noise increments Ξ_k (before the 1/h cell average), in the
    /// complex embedding; empty for noiseless builds.
    pub noise: Vec<DMatrix<Complex64>>,
}

impl DiscretizedOperator {
    pub fn dimension(&self) -> usize {
        self.matrix.dim()
    }

    /// Each eigenvalue appears this many times in the matrix spectrum.
    pub fn multiplicity(&self) -> usize {
        if self.theta.embedded() {
            2
        } else {
            1
        }
    }

    /// Number of distinct eigenvalues after collapsing Kramers pairs.
    pub fn spectral_size(&self) -> usize {
        self.dimension() / self.multiplicity()
    }

    /// Factor converting this operator's eigenvalues to the SAO scale, on
    /// which traces are written as Σ e^{−tλ/2}.
    pub fn trace_scale(&self) -> f64 {
        match self.kind {
            OperatorKind::Generalized => 2.0,
            OperatorKind::Sao => 1.0,
        }
    }
}

fn ghost_factor(w: f64, h: f64) -> Result<f64> {
    if w == f64::INFINITY {
        return Ok(-1.0);
    }
    if !(1.0 + 0.5 * h * w > 0.0) {
        return Err(invalid(format!("Robin weight {w} too negative for h = {h}; need w > {}", -2.0 / h)));
    }
    Ok((1.0 - 0.5 * h * w) / (1.0 + 0.5 * h * w))
}

/// Assembles scale·(−½Δ_h + κx) plus optional noise.
fn assemble(
    theta: &SaoParams,
    eta: &GeneralizedParams,
    grid: &GridSpec,
    seed: Option<u64>,
    scale: f64,
) -> Result<(HermitianBand, Vec<DMatrix<Complex64>>)> {
    theta.validate()?;
    eta.validate()?;
    let h = grid.h;
    let m = theta.block();
    let n = grid.n;
    let mut a = HermitianBand::zeros(n * m, m);
    let ghosts: Vec<f64> = theta.w.iter().map(|&w| ghost_factor(w, h)).collect::<Result<_>>()?;
    let inv_h2 = 1.0 / (h * h);
    let comp = |alpha: usize| if theta.embedded() { alpha / 2 } else { alpha };

    for k in 0..n {
        let drift = eta.kappa * grid.midpoint(k);
        for alpha in 0..m {
            let i = k * m + alpha;
            let kinetic = match k {
                0 => 0.5 * (2.0 - ghosts[comp(alpha)]) * inv_h2,
                _ if k == n - 1 => 1.5 * inv_h2,
                _ => inv_h2,
            };
            a.set(i, i, Complex64::new(scale * (kinetic + drift), 0.0));
            if k + 1 < n {
                a.set(i + m, i, Complex64::new(-0.5 * scale * inv_h2, 0.0));
            }
        }
    }

    let mut noise = Vec::new();
    if let Some(seed) = seed {
        let mut rng = seed::rng(seed);
        let mut g = move || -> f64 { StandardNormal.sample(&mut rng) };
        let r = theta.r;
        let sd_diag = eta.sigma * h.sqrt();
        let comps = if r > 1 { theta.beta as usize } else { 1 };
        let sd_off = eta.upsilon * (h / comps as f64).sqrt();
        noise.reserve(n);
        for k in 0..n {
            let mut xi = DMatrix::<Complex64>::zeros(m, m);
            for i in 0..r {
                let d = sd_diag * g();
                if theta.embedded() {
                    xi[(2 * i, 2 * i)] = Complex64::new(d, 0.0);
                    xi[(2 * i + 1, 2 * i + 1)] = Complex64::new(d, 0.0);
                } else {
                    xi[(i, i)] = Complex64::new(d, 0.0);
                }
            }
            for i in 0..r {
                for j in i + 1..r {
                    match comps {
                        1 => {
                            let v = Complex64::new(sd_off * g(), 0.0);
                            xi[(i, j)] = v;
                            xi[(j, i)] = v;
                        }
                        2 => {
                            let v = Complex64::new(sd_off * g(), sd_off * g());
                            xi[(i, j)] = v;
                            xi[(j, i)] = v.conj();
                        }
                        _ => {
                            let (qa, qb, qc, qd) = (sd_off * g(), sd_off * g(), sd_off * g(), sd_off * g());
                            let q = quaternion_block(qa, qb, qc, qd);
                            for (s, v) in q.iter().enumerate() {
                                let (p, c) = (2 * i + s / 2, 2 * j + s % 2);
                                xi[(p, c)] = *v;
                                xi[(c, p)] = v.conj();
                            }
                        }
                    }
                }
            }
            let base = k * m;
            for p in 0..m {
                for c in 0..=p {
                    let v = xi[(p, c)] * (scale / h);
                    if v != Complex64::ZERO {
                        a.add(base + p, base + c, v);
                    }
                }
            }
            noise.push(xi);
        }
    }
    Ok((a, noise))
}

/// Discretizes Ĥ = −½ d²/dx² + κx + ξ with noise drawn from `seed`.
pub fn build_generalized(
    theta: &SaoParams,
    eta: &GeneralizedParams,
    grid: &GridSpec,
    seed: u64,
) -> Result<DiscretizedOperator> {
    let (matrix, noise) = assemble(theta, eta, grid, Some(seed), 1.0)?;
    Ok(DiscretizedOperator {
        matrix,
        grid: *grid,
        theta: theta.clone(),
        eta: *eta,
        kind: OperatorKind::Generalized,
        seed: Some(seed),
        noise,
    })
}

/// Discretizes the SAO H_θ; identical, entry for entry, to twice the
/// generalized build at `theta.sao_eta()` with the same seed.
pub fn build_sao(theta: &SaoParams, grid: &GridSpec, seed: u64) -> Result<DiscretizedOperator> {
    let eta = theta.sao_eta();
    let (matrix, noise) = assemble(theta, &eta, grid, Some(seed), 2.0)?;
    Ok(DiscretizedOperator { matrix, grid: *grid, theta: theta.clone(), eta, kind: OperatorKind::Sao, seed: Some(seed), noise })
}

/// The deterministic operator −½ d²/dx² + κx (noise switched off).
pub fn build_noiseless(theta: &SaoParams, kappa: f64, grid: &GridSpec) -> Result<DiscretizedOperator> {
    let eta = GeneralizedParams::new(kappa, 1.0, 1.0)?;
    let (matrix, noise) = assemble(theta, &eta, grid, None, 1.0)?;
    Ok(DiscretizedOperator {
        matrix,
        grid: *grid,
        theta: theta.clone(),
        eta,
        kind: OperatorKind::Generalized,
        seed: None,
        noise,
    })
}

/// The `k` algebraically smallest distinct eigenvalues, ascending.
///
/// Small `k` goes through inertia bisection and every eigenvalue is checked
/// by inverse iteration; large `k` uses the full band reduction, checked
/// against the trace identity.
pub fn smallest_eigenvalues(op: &DiscretizedOperator, k: usize) -> Result<Vec<f64>> {
    let size = op.spectral_size();
    if k == 0 || k > size {
        return Err(invalid(format!("k must lie in 1..={size}, got {k}")));
    }
    let mult = op.multiplicity();
    if 8 * k >= size || k > 64 {
        let mut all = all_eigenvalues(op)?;
        all.truncate(k);
        return Ok(all);
    }
    let raw = op.matrix.smallest_by_bisection(mult * k);
    for &lam in raw.iter().step_by(mult) {
        let (_, res) = op.matrix.inverse_iteration(lam);
        if !(res <= RESIDUAL_TOL) {
            return Err(Error::Convergence { what: format!("eigenvalue {lam} failed the residual check"), residual: res });
        }
    }
    if mult == 2 {
        dedup_kramers(&raw, KRAMERS_TOL)
    } else {
        Ok(raw)
    }
}

/// The full distinct spectrum, ascending.
pub fn all_eigenvalues(op: &DiscretizedOperator) -> Result<Vec<f64>> {
    let eig = op.matrix.eigenvalues()?;
    let sum: f64 = eig.iter().sum();
    let tr = op.matrix.trace();
    let scale = op.matrix.norm_inf() * (op.dimension() as f64).sqrt();
    if (sum - tr).abs() > RESIDUAL_TOL * scale.max(1.0) {
        return Err(Error::Convergence { what: "trace identity of the band eigensolver".into(), residual: (sum - tr).abs() });
    }
    if op.multiplicity() == 2 {
        dedup_kramers(&eig, KRAMERS_TOL)
    } else {
        Ok(eig)
    }
}

/// Keeps the first `k` eigenvalues, recording the truncation and grid.
pub fn spectrum_to_configuration(eigs: &[f64], k: usize, grid: Option<&GridSpec>) -> Result<PointConfiguration> {
    let k = k.min(eigs.len());
    let source = match grid {
        Some(g) => format!("discretized spectrum h={} L={} K={k}", g.h, g.l),
        None => format!("spectrum K={k}"),
    };
    PointConfiguration::new(eigs[..k].to_vec(), source)
}
