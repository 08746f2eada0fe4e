//! Small dense-free solvers for the SPD systems produced by implicit diffusion.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative residual `|b - Ax| / |b|` (absolute when `b = 0`).
    pub residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thomas algorithm for a tridiagonal system. `lower[0]` and
/// `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = upper[0] / beta;
    x[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / beta;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Jacobi-preconditioned conjugate gradient for an SPD operator.
///
/// `x` holds the initial guess on entry and the solution on exit. Stops when
/// `|r| <= tol * |b|`.
pub fn pcg<F>(apply: F, diag: &[f64], rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let b_norm = norm2(rhs);
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut res = norm2(&r) / scale;
    if res <= tol || b_norm == 0.0 && res == 0.0 {
        return Ok(SolveStats { iterations: 0, residual: res });
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverDivergence { residual: res });
        }
        let alpha = rz / pap;
        let (mut rr, mut rz_new) = (0.0, 0.0);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] / diag[i];
            rr += r[i] * r[i];
            rz_new += r[i] * z[i];
        }
        res = rr.sqrt() / scale;
        if !res.is_finite() {
            return Err(Error::SolverDivergence { residual: res });
        }
        if res <= tol {
            return Ok(SolveStats { iterations: it, residual: res });
        }
        let ratio = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + ratio * p[i];
        }
    }
    Err(Error::SolverDivergence { residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_hand_solution() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] -> x = [1 1 1]
        let x = solve_tridiagonal(&[0.0, -1.0, -1.0], &[2.0; 3], &[-1.0, -1.0, 0.0], &[1.0, 0.0, 1.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 50;
        let apply = |u: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { u[i - 1] } else { 0.0 };
                let r = if i + 1 < n { u[i + 1] } else { 0.0 };
                out[i] = 3.0 * u[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let stats = pcg(apply, &vec![3.0; n], &b, &mut x, 1e-13, 500).unwrap();
        assert!(stats.residual <= 1e-13);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for (a, b) in ax.iter().zip(&b) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn pcg_reports_cap() {
        let apply = |u: &[f64], out: &mut [f64]| {
            out[0] = u[0];
            out[1] = 1e6 * u[1];
        };
        let mut x = vec![0.0; 2];
        let err = pcg(apply, &[1e6, 1.0], &[1.0, 1.0], &mut x, 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::SolverDivergence { .. }));
    }
}
