//! Banded matrix storage, banded Cholesky factorization and triangular solves.
//!
//! Storage is diagonal-major: one contiguous sequence per (sub-)diagonal, so
//! the band-restricted inner loops walk short flat arrays.

use super::{NumericsError, OpCounter};
use num_complex::Complex64;

/// Lower-triangular matrix with `bandwidth` stored sub-diagonals.
///
/// Entry (i, j) is implied zero whenever `j > i` or `i - j > bandwidth`.
/// `diagonals[d][j]` holds entry (j + d, j).
#[derive(Debug, Clone, PartialEq)]
pub struct BandedLowerTriangular {
    dim: usize,
    bandwidth: usize,
    diagonals: Vec<Vec<Complex64>>,
}

impl BandedLowerTriangular {
    /// All-zero banded matrix. `bandwidth` is clamped to `dim - 1`.
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let bandwidth = bandwidth.min(dim - 1);
        let diagonals = (0..=bandwidth).map(|d| vec![Complex64::default(); dim - d]).collect();
        Self { dim, bandwidth, diagonals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored sub-diagonals (Q).
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Entry (i, j), zero outside the stored band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if j > i || i - j > self.bandwidth {
            Complex64::default()
        } else {
            self.diagonals[i - j][j]
        }
    }

    /// Sets entry (i, j); panics outside the stored band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        assert!(j <= i && i - j <= self.bandwidth, "({i},{j}) outside band");
        self.diagonals[i - j][j] = value;
    }

    /// Dense copy, for oracles and small-scale inspection.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![Complex64::default(); self.dim]; self.dim];
        for (d, diag) in self.diagonals.iter().enumerate() {
            for (j, &v) in diag.iter().enumerate() {
                out[j + d][j] = v;
            }
        }
        out
    }

    /// y = L x (counted).
    pub fn mul_vec(&self, x: &[Complex64], ops: &mut OpCounter) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim, "length mismatch");
        let mut y = vec![Complex64::default(); self.dim];
        for (d, diag) in self.diagonals.iter().enumerate() {
            for (j, &v) in diag.iter().enumerate() {
                y[j + d] += v * x[j];
            }
        }
        let nnz: u64 = self.diagonals.iter().map(|d| d.len() as u64).sum();
        ops.add_mults(nnz);
        ops.add_adds(nnz);
        y
    }
}

/// Hermitian matrix with half-bandwidth `half_bandwidth`; the lower band is
/// stored and the upper band is implied by conjugate symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedHermitianMatrix {
    dim: usize,
    half_bandwidth: usize,
    diagonals: Vec<Vec<Complex64>>,
}

impl BandedHermitianMatrix {
    pub fn zeros(dim: usize, half_bandwidth: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let half_bandwidth = half_bandwidth.min(dim - 1);
        let diagonals = (0..=half_bandwidth)
            .map(|d| vec![Complex64::default(); dim - d])
            .collect();
        Self { dim, half_bandwidth, diagonals }
    }

    /// Builds from a dense Hermitian matrix given as rows, keeping the lower
    /// band. With `half_bandwidth = dim - 1` this is a full dense Hermitian.
    pub fn from_dense_lower(rows: &[Vec<Complex64>], half_bandwidth: usize) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim, half_bandwidth);
        for i in 0..dim {
            for j in i.saturating_sub(m.half_bandwidth)..=i {
                m.set_lower(i, j, rows[i][j]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Half-bandwidth Q; the full bandwidth is 2Q + 1.
    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    /// Entry (i, j) including the implied upper band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if i >= j {
            if i - j > self.half_bandwidth {
                Complex64::default()
            } else {
                self.diagonals[i - j][j]
            }
        } else if j - i > self.half_bandwidth {
            Complex64::default()
        } else {
            self.diagonals[j - i][i].conj()
        }
    }

    /// Sets lower-band entry (i, j) with i >= j; the mirrored upper entry
    /// follows by conjugate symmetry.
    #[inline]
    pub fn set_lower(&mut self, i: usize, j: usize, value: Complex64) {
        assert!(j <= i && i - j <= self.half_bandwidth, "({i},{j}) outside lower band");
        self.diagonals[i - j][j] = value;
    }

    /// Adds `value` to the (real) diagonal entry i.
    #[inline]
    pub fn add_diagonal(&mut self, i: usize, value: f64) {
        self.diagonals[0][i] += value;
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![Complex64::default(); self.dim]; self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i][j] = self.get(i, j);
            }
        }
        out
    }

    /// y = M x using the implied full band (counted).
    pub fn mul_vec(&self, x: &[Complex64], ops: &mut OpCounter) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim, "length mismatch");
        let mut y = vec![Complex64::default(); self.dim];
        let mut n_ops = 0u64;
        for i in 0..self.dim {
            let lo = i.saturating_sub(self.half_bandwidth);
            let hi = (i + self.half_bandwidth).min(self.dim - 1);
            let mut acc = Complex64::default();
            for j in lo..=hi {
                acc += self.get(i, j) * x[j];
            }
            n_ops += (hi - lo + 1) as u64;
            y[i] = acc;
        }
        ops.add_mults(n_ops);
        ops.add_adds(n_ops);
        y
    }
}

/// Relative pivot floor: a pivot at or below this fraction of the largest
/// diagonal entry is treated as loss of positive definiteness.
const PIVOT_REL_FLOOR: f64 = 1e-14;

/// Banded Cholesky factorization `M = L L^H`.
///
/// The factor keeps the half-bandwidth of the input. Inner sums run only
/// over the band, starting at `j_start = max(0, i - Q)`. A non-positive
/// pivot (relative to the largest diagonal of `M`) aborts with the offending
/// index; the inputs factored here are positive definite by construction, so
/// such a failure indicates an upstream bug.
pub fn banded_cholesky(
    m: &BandedHermitianMatrix,
    ops: &mut OpCounter,
) -> Result<BandedLowerTriangular, NumericsError> {
    let n = m.dim();
    let q = m.half_bandwidth();
    let max_diag = (0..n).map(|i| m.get(i, i).re).fold(0.0_f64, f64::max);
    let floor = PIVOT_REL_FLOOR * max_diag;

    let mut l = BandedLowerTriangular::zeros(n, q);
    let mut mults = 0u64;
    let mut adds = 0u64;

    for i in 0..n {
        let j_start = i.saturating_sub(q);
        for j in j_start..=i {
            if j == i {
                let mut sum = 0.0;
                for p in j_start..i {
                    sum += l.get(i, p).norm_sqr();
                }
                mults += (i - j_start) as u64;
                adds += (i - j_start) as u64;
                let pivot = m.get(i, i).re - sum;
                if pivot <= floor {
                    return Err(NumericsError::NonPositivePivot { index: i });
                }
                l.set(i, i, Complex64::new(pivot.sqrt(), 0.0));
            } else {
                let mut sum = Complex64::default();
                for p in j_start..j {
                    sum += l.get(i, p) * l.get(j, p).conj();
                }
                mults += (j - j_start) as u64;
                adds += (j - j_start) as u64;
                let value = (m.get(i, j) - sum) / l.get(j, j).re;
                mults += 1;
                adds += 1;
                l.set(i, j, value);
            }
        }
    }
    ops.add_mults(mults);
    ops.add_adds(adds);
    Ok(l)
}

/// Forward substitution `L z = b` restricted to the band.
pub fn forward_substitution(
    l: &BandedLowerTriangular,
    b: &[Complex64],
    ops: &mut OpCounter,
) -> Result<Vec<Complex64>, NumericsError> {
    let n = l.dim();
    assert_eq!(b.len(), n, "length mismatch");
    let q = l.bandwidth();
    let mut z = vec![Complex64::default(); n];
    let mut mults = 0u64;
    for i in 0..n {
        let j_start = i.saturating_sub(q);
        let mut acc = b[i];
        for j in j_start..i {
            acc -= l.get(i, j) * z[j];
        }
        mults += (i - j_start) as u64;
        let d = l.get(i, i);
        if d.norm_sqr() == 0.0 {
            return Err(NumericsError::ZeroDiagonal { index: i });
        }
        z[i] = acc / d;
        mults += 1;
    }
    ops.add_mults(mults);
    ops.add_adds(mults);
    Ok(z)
}

/// Backward substitution `L^H s = z` against the conjugate-transposed band;
/// inner sums run up to `j_end = min(N - 1, i + Q)`.
pub fn backward_substitution(
    l: &BandedLowerTriangular,
    z: &[Complex64],
    ops: &mut OpCounter,
) -> Result<Vec<Complex64>, NumericsError> {
    let n = l.dim();
    assert_eq!(z.len(), n, "length mismatch");
    let q = l.bandwidth();
    let mut s = vec![Complex64::default(); n];
    let mut mults = 0u64;
    for i in (0..n).rev() {
        let j_end = (i + q).min(n - 1);
        let mut acc = z[i];
        for j in i + 1..=j_end {
            acc -= l.get(j, i).conj() * s[j];
        }
        mults += (j_end - i) as u64;
        let d = l.get(i, i);
        if d.norm_sqr() == 0.0 {
            return Err(NumericsError::ZeroDiagonal { index: i });
        }
        s[i] = acc / d.conj();
        mults += 1;
    }
    ops.add_mults(mults);
    ops.add_adds(mults);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Independent dense Cholesky oracle on row-major dense storage.
    fn dense_cholesky_oracle(a: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let n = a.len();
        let mut l = vec![vec![Complex64::default(); n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = Complex64::default();
                for p in 0..j {
                    sum += l[i][p] * l[j][p].conj();
                }
                if i == j {
                    l[i][i] = Complex64::new((a[i][i].re - sum.re).sqrt(), 0.0);
                } else {
                    l[i][j] = (a[i][j] - sum) / l[j][j].re;
                }
            }
        }
        l
    }

    /// Independent dense solve oracle (Gauss elimination, partial pivot).
    fn dense_solve_oracle(a: &[Vec<Complex64>], b: &[Complex64]) -> Vec<Complex64> {
        let n = a.len();
        let mut m: Vec<Vec<Complex64>> = a.to_vec();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&r1, &r2| {
                    m[r1][col]
                        .norm_sqr()
                        .partial_cmp(&m[r2][col].norm_sqr())
                        .unwrap()
                })
                .unwrap();
            m.swap(col, piv);
            rhs.swap(col, piv);
            for row in col + 1..n {
                let f = m[row][col] / m[col][col];
                for k in col..n {
                    let v = m[col][k];
                    m[row][k] -= f * v;
                }
                let v = rhs[col];
                rhs[row] -= f * v;
            }
        }
        let mut x = vec![Complex64::default(); n];
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for k in i + 1..n {
                acc -= m[i][k] * x[k];
            }
            x[i] = acc / m[i][i];
        }
        x
    }

    /// Random positive definite banded Hermitian: B B^H + I from a random
    /// banded lower-triangular B.
    fn random_banded_pd(n: usize, q: usize, seed: u64) -> BandedHermitianMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut b = BandedLowerTriangular::zeros(n, q);
        for d in 0..=b.bandwidth() {
            for j in 0..n - d {
                b.set(j + d, j, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        let bd = b.to_dense();
        let mut psi = BandedHermitianMatrix::zeros(n, q);
        for i in 0..n {
            for j in i.saturating_sub(q)..=i {
                let mut acc = Complex64::default();
                for p in 0..n {
                    acc += bd[i][p] * bd[j][p].conj();
                }
                if i == j {
                    acc += Complex64::new(1.0, 0.0);
                }
                psi.set_lower(i, j, acc);
            }
        }
        psi
    }

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_factors_to_identity() {
        let mut psi = BandedHermitianMatrix::zeros(4, 0);
        for i in 0..4 {
            psi.set_lower(i, i, Complex64::new(1.0, 0.0));
        }
        let l = banded_cholesky(&psi, &mut OpCounter::new()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((l.get(i, j) - Complex64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn two_by_two_hand_case() {
        // [[4, 2], [2, 4]] = L L^H with L = [[2, 0], [1, sqrt(3)]].
        let mut psi = BandedHermitianMatrix::zeros(2, 1);
        psi.set_lower(0, 0, Complex64::new(4.0, 0.0));
        psi.set_lower(1, 0, Complex64::new(2.0, 0.0));
        psi.set_lower(1, 1, Complex64::new(4.0, 0.0));
        let l = banded_cholesky(&psi, &mut OpCounter::new()).unwrap();
        assert!((l.get(0, 0).re - 2.0).abs() < 1e-15);
        assert!((l.get(1, 0).re - 1.0).abs() < 1e-15);
        assert!((l.get(1, 1).re - 3.0_f64.sqrt()).abs() < 1e-15);

        // Forward substitution hand case: b = [2, 1 + sqrt(3)] -> z = [1, 1].
        let b = vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0 + 3.0_f64.sqrt(), 0.0),
        ];
        let z = forward_substitution(&l, &b, &mut OpCounter::new()).unwrap();
        assert!((z[0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((z[1] - Complex64::new(1.0, 0.0)).norm() < 1e-14);

        // Backward substitution round trip: multiply L^H s and compare.
        let s = backward_substitution(&l, &z, &mut OpCounter::new()).unwrap();
        for i in 0..2 {
            let mut acc = Complex64::default();
            for j in 0..2 {
                acc += l.get(j, i).conj() * s[j];
            }
            assert!((acc - z[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_oracle_and_reconstructs() {
        let psi = random_banded_pd(32, 4, 9);
        let l = banded_cholesky(&psi, &mut OpCounter::new()).unwrap();
        let oracle = dense_cholesky_oracle(&psi.to_dense());
        let ld = l.to_dense();
        let n = psi.dim();
        let mut max_err = 0.0_f64;
        let mut max_rec = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                max_err = max_err.max((ld[i][j] - oracle[i][j]).norm());
                let mut rec = Complex64::default();
                for p in 0..n {
                    rec += ld[i][p] * ld[j][p].conj();
                }
                max_rec = max_rec.max((rec - psi.get(i, j)).norm());
            }
        }
        assert!(max_err < 1e-10, "factor mismatch {max_err}");
        assert!(max_rec < 1e-10, "reconstruction error {max_rec}");
    }

    #[test]
    fn factor_matches_dense_oracle_across_instances() {
        // 200 random positive definite banded instances.
        let mut rng = ChaCha12Rng::seed_from_u64(1234);
        for inst in 0..200u64 {
            let n = rng.gen_range(2usize..=128);
            let q = rng.gen_range(0usize..=16.min(n - 1));
            let psi = random_banded_pd(n, q, 1000 + inst);
            let l = banded_cholesky(&psi, &mut OpCounter::new()).unwrap();
            let oracle = dense_cholesky_oracle(&psi.to_dense());
            let ld = l.to_dense();
            let scale = (0..n).map(|i| oracle[i][i].re).fold(0.0_f64, f64::max);
            for i in 0..n {
                for j in 0..=i {
                    let err = (ld[i][j] - oracle[i][j]).norm();
                    assert!(err < 1e-9 * scale.max(1.0), "inst {inst} entry ({i},{j}): {err}");
                }
            }

            // Solve correctness against the direct system.
            let b = random_vec(n, 5000 + inst);
            let z = forward_substitution(&l, &b, &mut OpCounter::new()).unwrap();
            let s = backward_substitution(&l, &z, &mut OpCounter::new()).unwrap();
            let recon = psi.mul_vec(&s, &mut OpCounter::new());
            let bmax = b.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
            let err = max_abs_diff(&recon, &b);
            assert!(err <= 1e-8 * bmax, "inst {inst} solve residual {err}");
        }
    }

    #[test]
    fn solve_round_trip_recovers_input() {
        let psi = random_banded_pd(24, 3, 77);
        let l = banded_cholesky(&psi, &mut OpCounter::new()).unwrap();
        let z_true = random_vec(24, 78);
        let b = l.mul_vec(&z_true, &mut OpCounter::new());
        let z = forward_substitution(&l, &b, &mut OpCounter::new()).unwrap();
        assert!(max_abs_diff(&z, &z_true) < 1e-10);
    }

    #[test]
    fn combined_solve_matches_dense_solver() {
        let psi = random_banded_pd(20, 5, 42);
        let l = banded_cholesky(&psi, &mut OpCounter::new()).unwrap();
        let b = random_vec(20, 43);
        let z = forward_substitution(&l, &b, &mut OpCounter::new()).unwrap();
        let s = backward_substitution(&l, &z, &mut OpCounter::new()).unwrap();
        let want = dense_solve_oracle(&psi.to_dense(), &b);
        assert!(max_abs_diff(&s, &want) < 1e-9);
    }

    #[test]
    fn non_positive_pivot_reports_index() {
        let mut psi = BandedHermitianMatrix::zeros(3, 1);
        psi.set_lower(0, 0, Complex64::new(1.0, 0.0));
        psi.set_lower(1, 0, Complex64::new(2.0, 0.0));
        // Schur complement at index 1 is 1 - 4 < 0.
        psi.set_lower(1, 1, Complex64::new(1.0, 0.0));
        psi.set_lower(2, 1, Complex64::new(0.1, 0.0));
        psi.set_lower(2, 2, Complex64::new(1.0, 0.0));
        assert_eq!(
            banded_cholesky(&psi, &mut OpCounter::new()),
            Err(NumericsError::NonPositivePivot { index: 1 })
        );
    }

    #[test]
    fn zero_diagonal_rejected_in_solves() {
        let l = BandedLowerTriangular::zeros(2, 1);
        let b = random_vec(2, 1);
        assert!(matches!(
            forward_substitution(&l, &b, &mut OpCounter::new()),
            Err(NumericsError::ZeroDiagonal { index: 0 })
        ));
        assert!(matches!(
            backward_substitution(&l, &b, &mut OpCounter::new()),
            Err(NumericsError::ZeroDiagonal { index: 1 })
        ));
    }

    #[test]
    fn identity_solves_are_identity() {
        let mut l = BandedLowerTriangular::zeros(5, 2);
        for i in 0..5 {
            l.set(i, i, Complex64::new(1.0, 0.0));
        }
        let b = random_vec(5, 2);
        let z = forward_substitution(&l, &b, &mut OpCounter::new()).unwrap();
        assert!(max_abs_diff(&z, &b) < 1e-15);
        let s = backward_substitution(&l, &b, &mut OpCounter::new()).unwrap();
        assert!(max_abs_diff(&s, &b) < 1e-15);
    }

    #[test]
    fn cholesky_mult_count_scales_linearly_in_n() {
        // Log-log slope of counted multiplications vs N at fixed Q.
        let q = 4;
        let ns = [64usize, 128, 256, 512];
        let mut counts = Vec::new();
        for (k, &n) in ns.iter().enumerate() {
            let psi = random_banded_pd(n, q, 300 + k as u64);
            let mut ops = OpCounter::new();
            banded_cholesky(&psi, &mut ops).unwrap();
            counts.push(ops.complex_mults as f64);
        }
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = counts.iter().map(|&c| c.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
        assert!((slope - 1.0).abs() <= 0.1, "slope {slope}");
    }
}
