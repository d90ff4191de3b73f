//! Eigenpairs of symmetric tridiagonal matrices via Sturm-sequence bisection
//! and inverse iteration. Only the few largest eigenvalues are needed, so the
//! O(q) count per bisection step beats any full decomposition here.

use alloc::vec;
use alloc::vec::Vec;

use crate::float;

/// Pivot floor for the Sturm recurrence; matrices here have entries around
/// 1/h^2, so this only guards against exact cancellation.
const PIVMIN: f64 = 1e-280;

/// Number of eigenvalues of `tridiag(off, d, off)` strictly below `x`.
fn sturm_count(d: &[f64], off: f64, x: f64) -> usize {
    let off2 = off * off;
    let mut count = 0usize;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for &di in &d[1..] {
        if float::abs(q) < PIVMIN {
            q = -PIVMIN;
        }
        q = (di - x) - off2 / q;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th smallest eigenvalue (1-based) by bisection on the Sturm count.
fn bisect_eigenvalue(d: &[f64], off: f64, k: usize, lo0: f64, hi0: f64) -> f64 {
    let mut lo = lo0;
    let mut hi = hi0;
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, off, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `(T - shift I) x = b` in place, where `T = tridiag(off, d, off)`,
/// by Gaussian elimination with partial pivoting. Row swaps widen the band to
/// two superdiagonals. Returns false if the solution is not finite.
fn shifted_solve(d: &[f64], off: f64, shift: f64, b: &mut [f64]) -> bool {
    let n = d.len();
    let mut diag: Vec<f64> = d.iter().map(|&x| x - shift).collect();
    if n == 1 {
        if float::abs(diag[0]) < PIVMIN {
            diag[0] = PIVMIN;
        }
        b[0] /= diag[0];
        return b[0].is_finite();
    }
    let mut sup = vec![off; n - 1];
    let mut sup2 = vec![0.0; n - 2];
    let mut sub = vec![off; n - 1];

    for i in 0..n - 1 {
        if float::abs(sub[i]) > float::abs(diag[i]) {
            // swap rows i and i+1:
            //   row i:   (diag[i], sup[i],     sup2[i])
            //   row i+1: (sub[i],  diag[i+1],  sup[i+1])
            core::mem::swap(&mut diag[i], &mut sub[i]);
            core::mem::swap(&mut sup[i], &mut diag[i + 1]);
            if i + 2 < n {
                core::mem::swap(&mut sup2[i], &mut sup[i + 1]);
            }
            b.swap(i, i + 1);
        }
        if float::abs(diag[i]) < PIVMIN {
            diag[i] = PIVMIN;
        }
        let m = sub[i] / diag[i];
        diag[i + 1] -= m * sup[i];
        if i + 2 < n {
            sup[i + 1] -= m * sup2[i];
        }
        b[i + 1] -= m * b[i];
    }
    if float::abs(diag[n - 1]) < PIVMIN {
        diag[n - 1] = PIVMIN;
    }

    b[n - 1] /= diag[n - 1];
    b[n - 2] = (b[n - 2] - sup[n - 2] * b[n - 1]) / diag[n - 2];
    for i in (0..n - 2).rev() {
        b[i] = (b[i] - sup[i] * b[i + 1] - sup2[i] * b[i + 2]) / diag[i];
    }
    b.iter().all(|x| x.is_finite())
}

/// Result of one tridiagonal eigensolve.
pub(crate) struct TridiagEigen {
    /// Eigenvalues, largest first.
    pub values: Vec<f64>,
    /// Unit eigenvectors (Euclidean norm), matching `values`.
    pub vectors: Vec<Vec<f64>>,
}

/// Computes the `count` largest eigenpairs of `tridiag(off, d, off)`.
///
/// `guess(k, i)` seeds inverse iteration for the k-th largest eigenvector at
/// interior index i; a crude shape of the expected mode keeps the iteration
/// well-conditioned even when the bisection shift is accurate to roundoff.
pub(crate) fn largest_eigenpairs(
    d: &[f64],
    off: f64,
    count: usize,
    guess: impl Fn(usize, usize) -> f64,
) -> TridiagEigen {
    let q = d.len();
    assert!(count >= 1 && count <= q);

    // Gershgorin enclosure of the whole spectrum
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &di in d {
        lo = float::min(lo, di - 2.0 * float::abs(off));
        hi = float::max(hi, di + 2.0 * float::abs(off));
    }
    let pad = 1e-10 * float::max(float::abs(lo), float::abs(hi)) + 1e-10;
    lo -= pad;
    hi += pad;

    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for k in 0..count {
        // k-th largest is the (q - k)-th smallest, 1-based
        let lambda = bisect_eigenvalue(d, off, q - k, lo, hi);
        values.push(lambda);
        vectors.push(inverse_iteration(d, off, lambda, k, &guess));
    }
    TridiagEigen { values, vectors }
}

fn inverse_iteration(
    d: &[f64],
    off: f64,
    lambda: f64,
    mode: usize,
    guess: &impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let q = d.len();
    let scale = d.iter().fold(0.0, |m, &x| float::max(m, float::abs(x))) + 2.0 * float::abs(off);
    let mut shift = lambda;
    let mut v: Vec<f64> = (0..q).map(|i| guess(mode, i)).collect();
    normalize(&mut v);

    for attempt in 0..6 {
        let mut w = v.clone();
        if !shifted_solve(d, off, shift, &mut w) {
            // singular to working precision: nudge the shift and retry
            shift = lambda + (attempt + 1) as f64 * 1e-13 * scale;
            continue;
        }
        normalize(&mut w);
        let res = residual(d, off, lambda, &w);
        v = w;
        if res < 1e-10 * scale {
            break;
        }
    }
    v
}

fn normalize(v: &mut [f64]) {
    let n = float::sqrt(v.iter().map(|x| x * x).sum());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn residual(d: &[f64], off: f64, lambda: f64, v: &[f64]) -> f64 {
    let q = v.len();
    let mut r: f64 = 0.0;
    for i in 0..q {
        let mut t = (d[i] - lambda) * v[i];
        if i > 0 {
            t += off * v[i - 1];
        }
        if i + 1 < q {
            t += off * v[i + 1];
        }
        r = float::max(r, float::abs(t));
    }
    r
}
