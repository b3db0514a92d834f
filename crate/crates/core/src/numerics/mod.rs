//! Complex-valued numerical kernels.
//!
//! Everything in here is a pure function of its inputs; the only mutable
//! state is the [`OpCounter`] threaded through the counted kernels.

mod banded;
mod dense;
mod eigen;
pub(crate) mod fft;
mod special;

pub use banded::{
    backward_substitution, banded_cholesky, forward_substitution, BandedHermitianMatrix,
    BandedLowerTriangular,
};
pub use dense::DenseMatrix;
pub use eigen::hermitian_eigenvalues;
pub use fft::dft_unitary;
pub use special::{erfc, q_function_approx};

use num_complex::Complex64;
use thiserror::Error;

/// Errors reported by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericsError {
    /// An operation received an empty vector.
    #[error("empty input")]
    EmptyInput,
    /// Cholesky factorization met a non-positive pivot. Since the matrices
    /// factored here are positive definite by construction, this signals an
    /// upstream bug rather than an input condition.
    #[error("non-positive Cholesky pivot at index {index}")]
    NonPositivePivot { index: usize },
    /// A triangular solve met a zero diagonal entry.
    #[error("zero diagonal at index {index} in triangular solve")]
    ZeroDiagonal { index: usize },
    /// The eigensolver was handed a matrix that is not Hermitian.
    #[error("matrix is not Hermitian within tolerance")]
    NotHermitian,
}

/// Tally of complex arithmetic performed inside counted kernels.
///
/// One complex multiplication counts as 1 regardless of how it is realised
/// (complex x complex, complex x real, or a complex division); additions and
/// subtractions count as complex additions. Square roots are not counted.
/// Counts are monotone within a scope and merge by summation.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter {
    pub complex_mults: u64,
    pub complex_adds: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add_mults(&mut self, n: u64) {
        self.complex_mults += n;
    }

    #[inline]
    pub fn add_adds(&mut self, n: u64) {
        self.complex_adds += n;
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Merge counts from another (single-threaded) scope.
    pub fn merge(&mut self, other: &OpCounter) {
        self.complex_mults += other.complex_mults;
        self.complex_adds += other.complex_adds;
    }
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Euclidean norm of a complex vector.
pub fn norm(v: &[Complex64]) -> f64 {
    norm_sq(v).sqrt()
}

/// Largest entrywise absolute difference between two vectors.
pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len(), "vector length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
