//! Eigenvalues of small dense Hermitian matrices via cyclic Jacobi rotations.

use super::{DenseMatrix, NumericsError};
use num_complex::Complex64;

const MAX_SWEEPS: usize = 100;
const OFF_DIAG_REL_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues of a Hermitian matrix, sorted in descending order.
///
/// Intended for small Gram matrices (the path counts of interest are <= 16).
/// Tiny negative eigenvalues down to `-1e-9 * trace` are numerical noise from
/// a positive semi-definite source and are clamped to zero. Sweeps stop when
/// the off-diagonal Frobenius norm falls below `1e-12 * ||A||_F`.
pub fn hermitian_eigenvalues(theta: &DenseMatrix) -> Result<Vec<f64>, NumericsError> {
    let n = theta.rows();
    assert_eq!(n, theta.cols(), "matrix must be square");
    let scale = theta.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..n {
            if (theta.get(i, j) - theta.get(j, i).conj()).norm() > HERMITIAN_TOL * scale {
                return Err(NumericsError::NotHermitian);
            }
        }
    }

    let mut a = theta.clone();
    // Symmetrize exactly so rounding in the caller cannot bias the sweeps.
    for i in 0..n {
        a.set(i, i, Complex64::new(a.get(i, i).re, 0.0));
        for j in 0..i {
            let m = (a.get(i, j) + a.get(j, i).conj()) * 0.5;
            a.set(i, j, m);
            a.set(j, i, m.conj());
        }
    }

    let frob: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| a.get(i, j).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let tol = OFF_DIAG_REL_TOL * frob;

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| a.get(i, j).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                jacobi_rotate(&mut a, p, q);
            }
        }
    }

    let trace: f64 = (0..n).map(|i| a.get(i, i).re).sum();
    let clamp_tol = 1e-9 * trace.max(0.0);
    let mut eigs: Vec<f64> = (0..n)
        .map(|i| {
            let v = a.get(i, i).re;
            if v < 0.0 && v >= -clamp_tol {
                0.0
            } else {
                v
            }
        })
        .collect();
    eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(eigs)
}

/// One complex Jacobi rotation zeroing entry (p, q) of the Hermitian `a`.
fn jacobi_rotate(a: &mut DenseMatrix, p: usize, q: usize) {
    let beta = a.get(p, q);
    let abs_beta = beta.norm();
    if abs_beta == 0.0 {
        return;
    }
    let phase = beta / abs_beta;
    let app = a.get(p, p).re;
    let aqq = a.get(q, q).re;

    // Real rotation angle from tan(2 theta) = 2|beta| / (aqq - app).
    let t = if app == aqq {
        1.0
    } else {
        let tau = (aqq - app) / (2.0 * abs_beta);
        tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let sigma = t * c;
    let s = phase * sigma; // J(p,q) entry; J(q,p) = -conj(s)

    let n = a.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = akp * c - akq * s.conj();
        let new_kq = akp * s + akq * c;
        a.set(k, p, new_kp);
        a.set(p, k, new_kp.conj());
        a.set(k, q, new_kq);
        a.set(q, k, new_kq.conj());
    }
    let new_pp = c * c * app + sigma * sigma * aqq - 2.0 * c * sigma * abs_beta;
    let new_qq = sigma * sigma * app + c * c * aqq + 2.0 * c * sigma * abs_beta;
    a.set(p, p, Complex64::new(new_pp, 0.0));
    a.set(q, q, Complex64::new(new_qq, 0.0));
    a.set(p, q, Complex64::default());
    a.set(q, p, Complex64::default());
}
