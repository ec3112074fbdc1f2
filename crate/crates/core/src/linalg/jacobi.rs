//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use crate::error::{Error, Result};

pub(crate) const MAX_SWEEPS: usize = 100;
pub(crate) const RELATIVE_OFF_TOL: f64 = 1e-13;

/// Diagonalizes the row-major symmetric matrix `a` in place.
///
/// Returns the (unsorted) eigenvalues and, when requested, the eigenvectors as
/// rows of a row-major `p x p` buffer (row `k` pairs with eigenvalue `k`).
pub(crate) fn jacobi(a: &mut [f64], p: usize, want_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    debug_assert_eq!(a.len(), p * p);
    let mut vt = want_vectors.then(|| {
        let mut v = vec![0.0; p * p];
        for i in 0..p {
            v[i * p + i] = 1.0;
        }
        v
    });

    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = RELATIVE_OFF_TOL * total;

    for sweep in 0..=MAX_SWEEPS {
        let off = off_diagonal_norm(a, p);
        if off <= target || off == 0.0 {
            let values = (0..p).map(|i| a[i * p + i]).collect();
            return Ok((values, vt));
        }
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence { iterations: MAX_SWEEPS, residual: off });
        }
        for r in 0..p {
            for s in (r + 1)..p {
                let ars = a[r * p + s];
                if ars == 0.0 {
                    continue;
                }
                let arr = a[r * p + r];
                let ass = a[s * p + s];
                // after a few sweeps, entries below rounding relative to both
                // diagonals are simply dropped
                if sweep > 3 && (arr.abs() + 100.0 * ars.abs() == arr.abs()) && (ass.abs() + 100.0 * ars.abs() == ass.abs()) {
                    a[r * p + s] = 0.0;
                    a[s * p + r] = 0.0;
                    continue;
                }
                let theta = (ass - arr) / (2.0 * ars);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);
                rotate(a, p, r, s, t, sn, tau, ars);
                if let Some(v) = vt.as_mut() {
                    let (row_r, row_s) = two_rows(v, p, r, s);
                    for (x, y) in row_r.iter_mut().zip(row_s.iter_mut()) {
                        let g = *x;
                        let h = *y;
                        *x = g - sn * (h + g * tau);
                        *y = h + sn * (g - h * tau);
                    }
                }
            }
        }
    }
    unreachable!("loop returns on the final sweep")
}

#[allow(clippy::too_many_arguments)]
fn rotate(a: &mut [f64], p: usize, r: usize, s: usize, t: f64, sn: f64, tau: f64, ars: f64) {
    a[r * p + r] -= t * ars;
    a[s * p + s] += t * ars;
    a[r * p + s] = 0.0;
    a[s * p + r] = 0.0;
    for k in 0..p {
        if k == r || k == s {
            continue;
        }
        let g = a[k * p + r];
        let h = a[k * p + s];
        let new_g = g - sn * (h + g * tau);
        let new_h = h + sn * (g - h * tau);
        a[k * p + r] = new_g;
        a[r * p + k] = new_g;
        a[k * p + s] = new_h;
        a[s * p + k] = new_h;
    }
}

fn two_rows(v: &mut [f64], p: usize, r: usize, s: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(r < s);
    let (head, tail) = v.split_at_mut(s * p);
    (&mut head[r * p..(r + 1) * p], &mut tail[..p])
}

fn off_diagonal_norm(a: &[f64], p: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            acc += 2.0 * a[i * p + j] * a[i * p + j];
        }
    }
    acc.sqrt()
}
