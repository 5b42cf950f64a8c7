use crate::error::{Error, Result};

/// All eigenvalues of the real symmetric tridiagonal matrix with diagonal
/// `diag` and sub-diagonal `off` (`off.len() == diag.len() - 1`), ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if off.len() + 1 != n {
        return Err(Error::InvalidParameter(format!(
            "tridiagonal with {n} diagonal entries needs {} off-diagonal entries, got {}",
            n - 1,
            off.len()
        )));
    }
    // Root-free rational QL on the squared off-diagonal (Pal-Walker-Kahan).
    let mut d = diag.to_vec();
    let mut e2 = vec![0.0; n];
    for (dst, v) in e2.iter_mut().zip(off) {
        *dst = v * v;
    }
    let (mut shift, mut scale, mut floor, mut tol2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for l in 0..n {
        let size = d[l].abs() + e2[l].sqrt();
        if scale <= size {
            scale = size;
            floor = f64::EPSILON * scale;
            tol2 = floor * floor;
        }
        let mut m = l;
        while e2[m] > tol2 {
            m += 1;
        }
        let mut iter = 0;
        while m != l {
            iter += 1;
            if iter > 60 {
                return Err(Error::Convergence {
                    what: format!("rational QL stalled at index {l} of {n}"),
                    residual: e2[l].sqrt(),
                });
            }
            let s0 = e2[l].sqrt();
            let g0 = d[l];
            let p0 = (d[l + 1] - g0) / (2.0 * s0);
            let r0 = p0.hypot(1.0);
            d[l] = s0 / (p0 + r0.copysign(p0));
            let step = g0 - d[l];
            for x in &mut d[l + 1..] {
                *x -= step;
            }
            shift += step;
            let mut g = if d[m] == 0.0 { floor } else { d[m] };
            let mut h = g;
            let mut s = 0.0;
            let mut i = m;
            while i > l {
                i -= 1;
                let p = g * h;
                let r = p + e2[i];
                e2[i + 1] = s * r;
                s = e2[i] / r;
                d[i + 1] = h + s * (h + d[i]);
                g = d[i] - e2[i] / g;
                if g == 0.0 {
                    g = floor;
                }
                h = g * p / r;
            }
            e2[l] = s * g;
            d[l] = h;
            if h == 0.0 || e2[l].abs() <= (tol2 / h).abs() {
                break;
            }
            e2[l] *= h;
            if e2[l] == 0.0 {
                break;
            }
        }
        d[l] += shift;
    }
    d.sort_by(|a, b| a.total_cmp(b));
    Ok(d)
}
