//! Finite-n random matrix models and their edge rescaling.
//!
//! Gaussian entries follow one convention in every field: real N(0,1),
//! complex with N(0,½) parts, quaternion with four N(0,¼) components, so
//! E|entry|² = 1 throughout. Quaternion matrices are handled through the
//! 2×2 complex embedding and each Kramers pair is reported once.

use crate::error::{invalid, Error, Result};
use crate::estimators::PointConfiguration;
use crate::linalg::tridiagonal_eigenvalues;
use crate::seed;
use crate::special::erfc;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Ground field ℝ, ℂ or ℍ, tagged by its inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum FieldTag {
    Real,
    Complex,
    Quaternion,
}

impl FieldTag {
    pub fn beta(self) -> u8 {
        match self {
            FieldTag::Real => 1,
            FieldTag::Complex => 2,
            FieldTag::Quaternion => 4,
        }
    }

    pub fn from_beta(beta: f64) -> Result<Self> {
        match beta {
            b if b == 1.0 => Ok(FieldTag::Real),
            b if b == 2.0 => Ok(FieldTag::Complex),
            b if b == 4.0 => Ok(FieldTag::Quaternion),
            _ => Err(invalid(format!("beta must be 1, 2 or 4 for a matrix field, got {beta}"))),
        }
    }

    /// Number of real components per entry.
    pub fn components(self) -> usize {
        self.beta() as usize
    }
}

impl TryFrom<u8> for FieldTag {
    type Error = Error;
    fn try_from(b: u8) -> Result<Self> {
        FieldTag::from_beta(b as f64)
    }
}

impl From<FieldTag> for u8 {
    fn from(f: FieldTag) -> u8 {
        f.beta()
    }
}

/// Spike strengths ℓ₀ ≥ ℓ₁ ≥ … ≥ ℓ_{r−1} ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpikeVector(Vec<f64>);

impl SpikeVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("spike vector needs at least one entry"));
        }
        if entries.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(invalid("spikes must be finite and nonnegative"));
        }
        if entries.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("spikes must be non-increasing (ℓ₀ largest)"));
        }
        Ok(Self(entries))
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SpikeVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpikeVector::new(v)
    }
}

impl From<SpikeVector> for Vec<f64> {
    fn from(s: SpikeVector) -> Vec<f64> {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikedKind {
    Wishart,
    GaussianInvariant,
}

/// A spiked Wishart or spiked Gaussian-invariant model at finite size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedModelSpec {
    pub kind: SpikedKind,
    pub n: usize,
    /// Second dimension of the data matrix; ignored for the Gaussian model.
    pub p: usize,
    pub beta: FieldTag,
    pub spikes: SpikeVector,
}

impl SpikedModelSpec {
    pub fn wishart(n: usize, p: usize, beta: FieldTag, spikes: SpikeVector) -> Result<Self> {
        let s = Self { kind: SpikedKind::Wishart, n, p, beta, spikes };
        s.validate()?;
        Ok(s)
    }

    pub fn gaussian(n: usize, beta: FieldTag, spikes: SpikeVector) -> Result<Self> {
        let s = Self { kind: SpikedKind::GaussianInvariant, n, p: n, beta, spikes };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.spikes.rank();
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        match self.kind {
            SpikedKind::Wishart if self.p < r => {
                Err(invalid(format!("Wishart model needs p ≥ r, got p={} r={r}", self.p)))
            }
            SpikedKind::GaussianInvariant if self.n < r => {
                Err(invalid(format!("Gaussian model needs n ≥ r, got n={} r={r}", self.n)))
            }
            _ => Ok(()),
        }
    }

    /// Aspect ratio p/n at the sampled sizes (1 for the Gaussian model).
    pub fn gamma(&self) -> f64 {
        match self.kind {
            SpikedKind::Wishart => self.p as f64 / self.n as f64,
            SpikedKind::GaussianInvariant => 1.0,
        }
    }

    /// Spectral edge e.
    pub fn edge(&self) -> f64 {
        match self.kind {
            SpikedKind::Wishart => (1.0 + self.gamma().sqrt()).powi(2),
            SpikedKind::GaussianInvariant => 2.0,
        }
    }

    /// Critical spike τ separating outliers from the bulk.
    pub fn threshold(&self) -> f64 {
        match self.kind {
            SpikedKind::Wishart => self.gamma().sqrt(),
            SpikedKind::GaussianInvariant => 1.0,
        }
    }

    /// Almost-sure location of the outlier produced by a supercritical spike.
    pub fn outlier_location(&self, spike: f64) -> f64 {
        match self.kind {
            SpikedKind::Wishart => (1.0 + spike) * (1.0 + self.gamma() / spike),
            SpikedKind::GaussianInvariant => spike + 1.0 / spike,
        }
    }

    /// Edge scaling constant s_n.
    pub fn edge_scale(&self) -> f64 {
        let n23 = (self.n as f64).powf(2.0 / 3.0);
        match self.kind {
            SpikedKind::Wishart => {
                let g = self.gamma();
                g.powf(-0.5) * (1.0 + g.powf(-0.5)).powf(-4.0 / 3.0) * n23
            }
            SpikedKind::GaussianInvariant => n23,
        }
    }
}

/// Where a spectrum came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SpectrumSource {
    BetaHermite { n: usize, beta: f64 },
    Spiked(SpikedModelSpec),
}

/// Ascending eigenvalues of one sampled matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<f64>,
    pub source: SpectrumSource,
    pub seed: u64,
}

impl SpectrumSample {
    pub fn largest(&self) -> f64 {
        *self.eigenvalues.last().expect("spectra are nonempty")
    }
}

/// Beta-Hermite spectrum with density ∝ |Δ(x)|^β e^{−βn Σ x²/4}, whose
/// empirical law tends to the semicircle on [−2, 2].
pub fn sample_beta_hermite(n: usize, beta: f64, seed: u64) -> Result<SpectrumSample> {
    if n < 2 {
        return Err(invalid(format!("beta-Hermite needs n ≥ 2, got {n}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    let mut rng = seed::rng(seed);
    let nf = n as f64;
    let diag_scale = (2.0 / (beta * nf)).sqrt();
    let off_scale = 1.0 / (beta * nf).sqrt();
    let diag: Vec<f64> = (0..n)
        .map(|_| diag_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let off: Vec<f64> = (1..n)
        .rev()
        .map(|k| {
            let chi2 = ChiSquared::new(beta * k as f64).expect("positive degrees of freedom");
            off_scale * chi2.sample(&mut rng).sqrt()
        })
        .collect();
    let eigenvalues = tridiagonal_eigenvalues(&diag, &off)?;
    Ok(SpectrumSample { eigenvalues, source: SpectrumSource::BetaHermite { n, beta }, seed })
}

/// One standard Gaussian entry of F_β in its complex 2×2-embedded form
/// (for β ≤ 2 only the (0,0) slot is used).
fn field_gaussian<R: Rng>(rng: &mut R, field: FieldTag) -> [Complex64; 4] {
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    match field {
        FieldTag::Real => [Complex64::new(g(), 0.0), Complex64::ZERO, Complex64::ZERO, Complex64::ZERO],
        FieldTag::Complex => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            [Complex64::new(s * g(), s * g()), Complex64::ZERO, Complex64::ZERO, Complex64::ZERO]
        }
        FieldTag::Quaternion => {
            let (a, b, c, d) = (0.5 * g(), 0.5 * g(), 0.5 * g(), 0.5 * g());
            quaternion_block(a, b, c, d)
        }
    }
}

/// 2×2 complex embedding of a + bi + cj + dk, row-major.
pub(crate) fn quaternion_block(a: f64, b: f64, c: f64, d: f64) -> [Complex64; 4] {
    [Complex64::new(a, b), Complex64::new(c, d), Complex64::new(-c, d), Complex64::new(a, -b)]
}

/// Dense n×p matrix of standard F_β Gaussians, embedded in ℂ (2n×2p for β=4).
fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, field: FieldTag) -> DMatrix<Complex64> {
    let m = if field == FieldTag::Quaternion { 2 } else { 1 };
    let mut out = DMatrix::<Complex64>::zeros(m * rows, m * cols);
    for i in 0..rows {
        for j in 0..cols {
            let e = field_gaussian(rng, field);
            if m == 1 {
                out[(i, j)] = e[0];
            } else {
                out[(2 * i, 2 * j)] = e[0];
                out[(2 * i, 2 * j + 1)] = e[1];
                out[(2 * i + 1, 2 * j)] = e[2];
                out[(2 * i + 1, 2 * j + 1)] = e[3];
            }
        }
    }
    out
}

fn hermitian_spectrum(m: DMatrix<Complex64>, field: FieldTag) -> Result<Vec<f64>> {
    let mut eig: Vec<f64> = if field == FieldTag::Real {
        m.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect()
    } else {
        m.symmetric_eigenvalues().iter().copied().collect()
    };
    eig.sort_by(|a, b| a.total_cmp(b));
    if field == FieldTag::Quaternion {
        dedup_kramers(&eig, 1e-8)
    } else {
        Ok(eig)
    }
}

/// Collapses a doubly degenerate sorted spectrum, checking each pair agrees
/// to `rel_tol` (relative to max(1, |λ|)).
pub fn dedup_kramers(sorted: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    if sorted.len() % 2 != 0 {
        return Err(Error::Degenerate("odd-length spectrum cannot pair up".into()));
    }
    let mut out = Vec::with_capacity(sorted.len() / 2);
    for pair in sorted.chunks_exact(2) {
        let split = (pair[1] - pair[0]).abs();
        if split > rel_tol * pair[0].abs().max(1.0) {
            return Err(Error::Convergence { what: "Kramers pair split".into(), residual: split });
        }
        out.push(0.5 * (pair[0] + pair[1]));
    }
    Ok(out)
}

/// Eigenvalues of (1/n)·D Σ D* with D an n×p matrix of standard F_β
/// Gaussians and Σ = diag(1, …, 1, 1+ℓ_{r−1}, …, 1+ℓ₀).
pub fn sample_spiked_wishart(spec: &SpikedModelSpec, seed: u64) -> Result<SpectrumSample> {
    if spec.kind != SpikedKind::Wishart {
        return Err(invalid("sample_spiked_wishart needs a Wishart spec"));
    }
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let (n, p) = (spec.n, spec.p);
    let m = if spec.beta == FieldTag::Quaternion { 2 } else { 1 };
    let mut d = gaussian_matrix(&mut rng, n, p, spec.beta);
    let r = spec.spikes.rank();
    // column j (in F_β units) is scaled by √Σ_jj; the last column carries ℓ₀
    for (k, l) in spec.spikes.entries().iter().enumerate() {
        let col = p - 1 - k;
        let s = (1.0 + l).sqrt();
        for c in m * col..m * col + m {
            d.column_mut(c).scale_mut(s);
        }
    }
    debug_assert!(r <= p);
    let w = (&d * d.adjoint()).unscale(n as f64);
    let eigenvalues = hermitian_spectrum(w, spec.beta)?;
    Ok(SpectrumSample { eigenvalues, source: SpectrumSource::Spiked(spec.clone()), seed })
}

/// Eigenvalues of X/√n + diag(0, …, 0, ℓ_{r−1}, …, ℓ₀) with X = (D + D*)/√2
/// a GOE/GUE/GSE matrix.
pub fn sample_spiked_gaussian(spec: &SpikedModelSpec, seed: u64) -> Result<SpectrumSample> {
    if spec.kind != SpikedKind::GaussianInvariant {
        return Err(invalid("sample_spiked_gaussian needs a Gaussian-invariant spec"));
    }
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let n = spec.n;
    let m = if spec.beta == FieldTag::Quaternion { 2 } else { 1 };
    let d = gaussian_matrix(&mut rng, n, n, spec.beta);
    let mut y = (&d + d.adjoint()).unscale(std::f64::consts::SQRT_2 * (n as f64).sqrt());
    for (k, l) in spec.spikes.entries().iter().enumerate() {
        let i = n - 1 - k;
        for c in m * i..m * i + m {
            y[(c, c)] += Complex64::new(*l, 0.0);
        }
    }
    let eigenvalues = hermitian_spectrum(y, spec.beta)?;
    Ok(SpectrumSample { eigenvalues, source: SpectrumSource::Spiked(spec.clone()), seed })
}

/// Edge constants (e, s_n) of a sample's model.
pub fn edge_constants(source: &SpectrumSource) -> (f64, f64) {
    match source {
        SpectrumSource::BetaHermite { n, .. } => (2.0, (*n as f64).powf(2.0 / 3.0)),
        SpectrumSource::Spiked(spec) => (spec.edge(), spec.edge_scale()),
    }
}

/// Maps each eigenvalue λ to s_n(e − λ), ascending.
pub fn edge_rescale(sample: &SpectrumSample) -> Result<PointConfiguration> {
    if sample.eigenvalues.is_empty() {
        return Err(invalid("cannot rescale an empty spectrum"));
    }
    let (e, s) = edge_constants(&sample.source);
    let points: Vec<f64> = sample.eigenvalues.iter().rev().map(|l| s * (e - l)).collect();
    PointConfiguration::new(points, "edge-rescaled spectrum")
}

/// Spike at finite n whose edge-scaled criticality parameter is `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalSpike {
    pub spike: f64,
    /// The raw formula went negative and was clipped to 0.
    pub clipped: bool,
}

/// Inverts the finite-n criticality relation: ℓ = τ − w·c·n^{−1/3}, clipped
/// at 0, with ℓ = 0 for w = +∞.
pub fn critical_spike_from_w(w: f64, n: usize, model: &SpikedModelSpec) -> Result<CriticalSpike> {
    if w.is_nan() || w == f64::NEG_INFINITY {
        return Err(invalid("w must be a real number or +inf"));
    }
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if w == f64::INFINITY {
        return Ok(CriticalSpike { spike: 0.0, clipped: false });
    }
    let n13 = (n as f64).powf(-1.0 / 3.0);
    let raw = match model.kind {
        SpikedKind::Wishart => {
            let sg = model.gamma().sqrt();
            sg - w * sg * (1.0 + 1.0 / sg).powf(2.0 / 3.0) * n13
        }
        SpikedKind::GaussianInvariant => 1.0 - w * n13,
    };
    Ok(if raw < 0.0 {
        CriticalSpike { spike: 0.0, clipped: true }
    } else {
        CriticalSpike { spike: raw, clipped: false }
    })
}

/// Limiting total error of the optimal spike-detection test,
/// erfc((r/4)·√(−log(1−λ))).
pub fn lrt_error_curve(lambda: f64, r: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(invalid(format!("lambda must lie in [0,1), got {lambda}")));
    }
    if r == 0 {
        return Err(invalid("r must be positive"));
    }
    Ok(erfc(r as f64 / 4.0 * (-(1.0 - lambda).ln()).sqrt()))
}
