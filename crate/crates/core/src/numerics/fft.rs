//! Unitary DFT with a radix-2 fast path.

use super::{NumericsError, OpCounter};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Unitary discrete Fourier transform of `v`, or its inverse.
///
/// The forward kernel is `(1/sqrt(N)) exp(-j 2 pi m n / N)` and the inverse
/// conjugates it, so forward and inverse are exact adjoints and both preserve
/// the Euclidean norm. Power-of-two lengths take an O(N log N) radix-2 path;
/// every other length is evaluated by direct O(N^2) summation. Both paths
/// agree numerically.
pub fn dft_unitary(
    v: &[Complex64],
    inverse: bool,
    ops: &mut OpCounter,
) -> Result<Vec<Complex64>, NumericsError> {
    let n = v.len();
    if n == 0 {
        return Err(NumericsError::EmptyInput);
    }
    let mut out = if n.is_power_of_two() {
        let twiddles = half_twiddles(n, inverse);
        let mut buf = v.to_vec();
        fft_pow2(&mut buf, &twiddles, ops);
        buf
    } else {
        dft_direct(v, inverse, ops)
    };
    let scale = 1.0 / (n as f64).sqrt();
    for z in &mut out {
        *z *= scale;
    }
    ops.add_mults(n as u64);
    Ok(out)
}

/// Twiddle factors `exp(sign j 2 pi k / n)` for k in 0..n/2.
pub(crate) fn half_twiddles(n: usize, inverse: bool) -> Vec<Complex64> {
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * TAU * k as f64 / n as f64))
        .collect()
}

/// In-place radix-2 decimation-in-time transform (no normalization).
///
/// `twiddles[k]` must hold `exp(sign j 2 pi k / n)` for k in 0..n/2.
pub(crate) fn fft_pow2(buf: &mut [Complex64], twiddles: &[Complex64], ops: &mut OpCounter) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n == 1 {
        return;
    }
    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = twiddles[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
            }
        }
        len <<= 1;
    }
    let log2n = n.trailing_zeros() as u64;
    ops.add_mults((n as u64 / 2) * log2n);
    ops.add_adds(n as u64 * log2n);
}

/// Direct O(N^2) evaluation of the (un-normalized) DFT sum.
fn dft_direct(v: &[Complex64], inverse: bool, ops: &mut OpCounter) -> Vec<Complex64> {
    let n = v.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = vec![Complex64::default(); n];
    for (m, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::default();
        for (k, x) in v.iter().enumerate() {
            // Reduce m*k modulo n before forming the angle so large products
            // do not lose phase precision.
            let t = (m * k) % n;
            let w = Complex64::from_polar(1.0, sign * TAU * t as f64 / n as f64);
            acc += x * w;
        }
        *slot = acc;
    }
    ops.add_mults((n * n) as u64);
    ops.add_adds((n * (n - 1)) as u64);
    out
}
