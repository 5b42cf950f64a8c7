use super::tridiag::tridiagonal_eigenvalues;
use crate::error::Result;
use nalgebra::DMatrix;
use num_complex::Complex64;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Complex Hermitian matrix with half-bandwidth `b`, stored as its lower band.
///
/// One extra sub-diagonal of storage is reserved for the bulge created
/// while reducing to tridiagonal form.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianBand {
    n: usize,
    b: usize,
    data: Vec<C>,
}

impl HermitianBand {
    pub fn zeros(n: usize, b: usize) -> Self {
        Self { n, b, data: vec![ZERO; n * (b + 2)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    #[inline]
    fn slot(&self, i: usize, d: usize) -> usize {
        i * (self.b + 2) + d
    }

    /// Entry `A[i][j]`; zero outside the band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C {
        if i >= j {
            let d = i - j;
            if d <= self.b + 1 {
                self.data[self.slot(i, d)]
            } else {
                ZERO
            }
        } else {
            self.get(j, i).conj()
        }
    }

    /// Sets `A[i][j]` (and implicitly `A[j][i]` to its conjugate). Diagonal
    /// entries keep only their real part.
    pub fn set(&mut self, i: usize, j: usize, v: C) {
        assert!(i.abs_diff(j) <= self.b, "entry ({i},{j}) outside bandwidth {}", self.b);
        self.set_raw(i, j, v);
    }

    #[inline]
    fn set_raw(&mut self, i: usize, j: usize, v: C) {
        if i >= j {
            let v = if i == j { C::new(v.re, 0.0) } else { v };
            let s = self.slot(i, i - j);
            self.data[s] = v;
        } else {
            self.set_raw(j, i, v.conj());
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: C) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    /// Multiplies every entry by `s`.
    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i).re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.b);
                let hi = (i + self.b).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).norm()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// True when every stored entry is real.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|v| v.im == 0.0)
    }

    pub fn matvec(&self, v: &[C]) -> Vec<C> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.b);
                let hi = (i + self.b).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * v[j]).sum()
            })
            .collect()
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let a = self.b.min(i);
            let radius: f64 = (i - a..=(i + self.b).min(self.n - 1))
                .filter(|&j| j != i)
                .map(|j| self.get(i, j).norm())
                .sum();
            let d = self.get(i, i).re;
            lo = lo.min(d - radius);
            hi = hi.max(d + radius);
        }
        (lo, hi)
    }

    /// Applies the unitary rotation G = [[c, s], [-s̄, c]] on rows/columns
    /// (p, p+1) as A ← G A Gᴴ.
    fn rotate(&mut self, p: usize, c: f64, s: C) {
        let q = p + 1;
        let reach = self.b + 1;
        let lo = p.saturating_sub(reach);
        let hi = (q + reach).min(self.n - 1);
        for k in lo..=hi {
            if k == p || k == q {
                continue;
            }
            let apk = self.get(p, k);
            let aqk = self.get(q, k);
            let np = apk * c + s * aqk;
            let nq = -s.conj() * apk + aqk * c;
            self.store_rotated(p, k, np);
            self.store_rotated(q, k, nq);
        }
        let x = self.get(p, p).re;
        let z = self.get(q, q).re;
        let y = self.get(p, q);
        let cs_yb = s * y.conj() * c;
        let s2 = s.norm_sqr();
        let npp = c * c * x + 2.0 * cs_yb.re + s2 * z;
        let nqq = s2 * x - 2.0 * cs_yb.re + c * c * z;
        let nqp = -s.conj() * x * c + y.conj() * c * c - s.conj() * s.conj() * y + s.conj() * z * c;
        self.set_raw(p, p, C::new(npp, 0.0));
        self.set_raw(q, q, C::new(nqq, 0.0));
        self.set_raw(q, p, nqp);
    }

    /// Stores a rotated entry; positions beyond the bulge slot stay zero.
    #[inline]
    fn store_rotated(&mut self, i: usize, k: usize, v: C) {
        if i.abs_diff(k) <= self.b + 1 {
            self.set_raw(i, k, v);
        }
    }

    /// Zeroes `A[i][j]` with a rotation on rows (i-1, i).
    fn annihilate(&mut self, i: usize, j: usize) {
        let a = self.get(i - 1, j);
        let bq = self.get(i, j);
        if bq == ZERO {
            return;
        }
        let (c, s) = if a == ZERO {
            (0.0, C::new(1.0, 0.0))
        } else {
            let rho = a.norm().hypot(bq.norm());
            (a.norm() / rho, (a / a.norm()) * bq.conj() / rho)
        };
        self.rotate(i - 1, c, s);
        self.set_raw(i, j, ZERO);
    }

    /// Unitarily similar real symmetric tridiagonal form (diagonal, off-diagonal).
    pub fn tridiagonalize(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut a = self.clone();
        let b = a.b;
        if b >= 2 && n > 2 {
            for j in 0..n - 2 {
                let imax = (j + b).min(n - 1);
                for i in (j + 2..=imax).rev() {
                    a.annihilate(i, j);
                    let mut p = i - 1;
                    while p + b + 1 < n {
                        let k = p + b + 1;
                        if a.get(k, p) == ZERO {
                            break;
                        }
                        a.annihilate(k, p);
                        p = k - 1;
                    }
                }
            }
        }
        let diag = a.diagonal();
        let off = (0..n.saturating_sub(1)).map(|i| a.get(i + 1, i).norm()).collect();
        (diag, off)
    }

    /// Full spectrum, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let (d, e) = self.tridiagonalize();
        tridiagonal_eigenvalues(&d, &e)
    }

    /// Number of eigenvalues strictly below `sigma` (Sylvester inertia of an
    /// unpivoted LDLᴴ factorization of A − σI).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.n;
        let b = self.b;
        let tiny = f64::EPSILON * (1.0 + self.norm_inf());
        let mut d = vec![0.0f64; n];
        // l[i*b + (i-j-1)] = L[i][j] for j in i-b..i
        let mut l = vec![ZERO; n * b.max(1)];
        let mut count = 0;
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..i {
                let mut acc = self.get(i, j);
                for k in j0.max(j.saturating_sub(b))..j {
                    acc -= l[i * b + (i - k - 1)] * l[j * b + (j - k - 1)].conj() * d[k];
                }
                l[i * b + (i - j - 1)] = acc / d[j];
            }
            let mut di = self.get(i, i).re - sigma;
            for k in j0..i {
                di -= l[i * b + (i - k - 1)].norm_sqr() * d[k];
            }
            if di.abs() < tiny {
                di = -tiny;
            }
            if di < 0.0 {
                count += 1;
            }
            d[i] = di;
        }
        count
    }

    /// The `k` smallest eigenvalues by bisection on inertia counts.
    pub fn smallest_by_bisection(&self, k: usize) -> Vec<f64> {
        let (glo, ghi) = self.gershgorin();
        let scale = glo.abs().max(ghi.abs()).max(1.0);
        let tol = 4.0 * f64::EPSILON * scale;
        let mut out = Vec::with_capacity(k);
        let mut lo = glo - tol;
        for idx in 0..k.min(self.n) {
            let mut a = lo;
            let mut b = ghi + tol;
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if self.count_below(mid) > idx {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            let lam = 0.5 * (a + b);
            out.push(lam);
            lo = a;
        }
        out
    }

    /// Inverse iteration at `lambda`; returns a unit eigenvector estimate and
    /// the relative residual ‖Av − λv‖ / ‖A‖∞.
    pub fn inverse_iteration(&self, lambda: f64) -> (Vec<C>, f64) {
        let n = self.n;
        let norm = self.norm_inf().max(f64::MIN_POSITIVE);
        let lu = BandLu::factor(self, lambda, f64::EPSILON * norm);
        let mut v: Vec<C> = (0..n)
            .map(|i| C::new(1.0 + 0.1 * ((i * 7919) % 101) as f64 / 101.0, 0.0))
            .collect();
        let mut best = (v.clone(), f64::INFINITY);
        for _ in 0..4 {
            let mut y = lu.solve(&v);
            let ny = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(ny > 0.0) || !ny.is_finite() {
                break;
            }
            for z in &mut y {
                *z /= ny;
            }
            let av = self.matvec(&y);
            let res = av
                .iter()
                .zip(&y)
                .map(|(a, z)| (a - z * lambda).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / norm;
            if res < best.1 {
                best = (y.clone(), res);
            }
            v = y;
            if res < 1e-14 {
                break;
            }
        }
        best
    }
}

/// LU factorization with partial pivoting of A − σI for a Hermitian band A.
struct BandLu {
    n: usize,
    b: usize,
    width: usize,
    // row p holds columns p-b ..= p+2b
    a: Vec<C>,
    piv: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn at(&self, p: usize, col: usize) -> usize {
        p * self.width + col + self.b - p
    }

    fn factor(m: &HermitianBand, sigma: f64, floor: f64) -> Self {
        let n = m.n;
        let b = m.b;
        let width = 3 * b + 1;
        let mut lu = Self { n, b, width, a: vec![ZERO; n * width], piv: vec![0; n] };
        for i in 0..n {
            for j in i.saturating_sub(b)..=(i + b).min(n - 1) {
                let mut v = m.get(i, j);
                if i == j {
                    v -= sigma;
                }
                let s = lu.at(i, j);
                lu.a[s] = v;
            }
        }
        for k in 0..n {
            let last = (k + b).min(n - 1);
            let mut p = k;
            let mut best = lu.a[lu.at(k, k)].norm();
            for r in k + 1..=last {
                let v = lu.a[lu.at(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            lu.piv[k] = p;
            let cmax = (k + 2 * b).min(n - 1);
            if p != k {
                for col in k..=cmax {
                    let (x, y) = (lu.at(k, col), lu.at(p, col));
                    lu.a.swap(x, y);
                }
            }
            let dk = lu.at(k, k);
            if lu.a[dk].norm() < floor {
                lu.a[dk] = C::new(floor, 0.0);
            }
            let pivot = lu.a[dk];
            for r in k + 1..=last {
                let rk = lu.at(r, k);
                let factor = lu.a[rk] / pivot;
                lu.a[rk] = factor;
                if factor == ZERO {
                    continue;
                }
                for col in k + 1..=cmax {
                    let src = lu.a[lu.at(k, col)];
                    let dst = lu.at(r, col);
                    lu.a[dst] -= factor * src;
                }
            }
        }
        lu
    }

    fn solve(&self, rhs: &[C]) -> Vec<C> {
        let n = self.n;
        let b = self.b;
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for r in k + 1..=(k + b).min(n - 1) {
                x[r] -= self.a[self.at(r, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for col in k + 1..=(k + 2 * b).min(n - 1) {
                acc -= self.a[self.at(k, col)] * x[col];
            }
            x[k] = acc / self.a[self.at(k, k)];
        }
        x
    }
}
