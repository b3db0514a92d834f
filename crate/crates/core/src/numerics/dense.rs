//! Small dense complex matrices (row-major).

use super::OpCounter;
use num_complex::Complex64;

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::default(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[Complex64]) {
        assert_eq!(col.len(), self.rows);
        for (i, &v) in col.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    /// C = self * other (counted).
    pub fn mul(&self, other: &DenseMatrix, ops: &mut OpCounter) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.get(i, p);
                if a == Complex64::default() {
                    continue;
                }
                let src = other.row(p).to_vec();
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(&src) {
                    *d += a * s;
                }
            }
        }
        ops.add_mults((self.rows * self.cols * other.cols) as u64);
        ops.add_adds((self.rows * self.cols * other.cols) as u64);
        out
    }

    /// y = self * x (counted).
    pub fn mul_vec(&self, x: &[Complex64], ops: &mut OpCounter) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols, "length mismatch");
        let y = (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        ops.add_mults((self.rows * self.cols) as u64);
        ops.add_adds((self.rows * self.cols) as u64);
        y
    }

    /// Gram matrix self^H * self, exploiting Hermitian symmetry (counted at
    /// the cost of the computed half).
    pub fn gram(&self, ops: &mut OpCounter) -> DenseMatrix {
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = Complex64::default();
                for p in 0..self.rows {
                    acc += self.get(p, i).conj() * self.get(p, j);
                }
                g.set(i, j, acc);
                g.set(j, i, acc.conj());
            }
        }
        let half = (n * (n + 1) / 2 * self.rows) as u64;
        ops.add_mults(half);
        ops.add_adds(half);
        g
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}
