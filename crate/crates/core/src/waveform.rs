//! DAFT/IDAFT chirp transforms and frame assembly.
//!
//! The DAFT matrix is `A = L_c2 F L_c1` where `L_c = diag(exp(-j 2 pi c n^2))`
//! and `F` is the unitary DFT. Setting `c1 = c2 = 0` collapses the whole
//! waveform path to plain DFT-based OFDM; the chirp scalings are skipped
//! entirely in that case so the reduction is bit-exact.

use crate::numerics::{fft, OpCounter};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Guard interval flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixMode {
    /// Zeros appended after the modulated block.
    ZeroPad,
    /// Chirp-periodic prefix prepended before the modulated block.
    CyclicPrefix,
}

/// Frame geometry and chirp parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AfdmConfig {
    /// Number of chirp subcarriers N.
    pub n: usize,
    /// Guard length in samples (zero padding or prefix).
    pub guard_len: usize,
    pub prefix_mode: PrefixMode,
    /// First chirp rate, cycles per sample^2.
    pub c1: f64,
    /// Second chirp rate.
    pub c2: f64,
}

impl AfdmConfig {
    pub fn new(n: usize, guard_len: usize, prefix_mode: PrefixMode, c1: f64, c2: f64) -> Self {
        assert!(n >= 1, "need at least one subcarrier");
        Self { n, guard_len, prefix_mode, c1, c2 }
    }

    /// Config with the default chirp rates for the given maximum normalized
    /// Doppler (see [`default_chirp_params`]).
    pub fn with_default_chirps(
        n: usize,
        guard_len: usize,
        prefix_mode: PrefixMode,
        nu_max: f64,
    ) -> Self {
        let (c1, c2) = default_chirp_params(nu_max, n);
        Self::new(n, guard_len, prefix_mode, c1, c2)
    }

    /// Transmitted frame length N + guard.
    pub fn frame_len(&self) -> usize {
        self.n + self.guard_len
    }

    /// Per-symbol energy boost of the zero-padded arm relative to the
    /// prefix arm under the equal-total-transmit-power convention.
    pub fn energy_factor(&self) -> f64 {
        match self.prefix_mode {
            PrefixMode::ZeroPad => (self.n + self.guard_len) as f64 / self.n as f64,
            PrefixMode::CyclicPrefix => 1.0,
        }
    }
}

/// Default chirp rates: `c1 = (2 ceil(nu_max) + 1) / (2N)` ties the first
/// chirp rate to the maximum Doppler spread, and `c2 = 1 / (2 N^2)` is a
/// small non-resonant second rate. Both are plain config fields, so any
/// experiment can override them.
pub fn default_chirp_params(nu_max: f64, n: usize) -> (f64, f64) {
    assert!(nu_max >= 0.0, "nu_max must be non-negative");
    let c1 = (2.0 * nu_max.ceil() + 1.0) / (2.0 * n as f64);
    let c2 = 1.0 / (2.0 * (n as f64) * (n as f64));
    (c1, c2)
}

enum DftPlan {
    Radix2 { fwd: Vec<Complex64>, inv: Vec<Complex64> },
    /// Cached unitary DFT matrix (row-major) and its inverse, for lengths
    /// without a radix-2 path.
    Direct { fwd: Vec<Complex64>, inv: Vec<Complex64> },
}

/// Precomputed DAFT operator for one frame geometry.
///
/// Immutable after construction and safe to share across threads. The chirp
/// phase sequences and (for power-of-two N) the DFT twiddles are cached.
pub struct DaftOperator {
    n: usize,
    chirp1: Option<Vec<Complex64>>,
    chirp2: Option<Vec<Complex64>>,
    plan: DftPlan,
    /// Row-major dense `A`, cached for short non-radix lengths where whole
    /// matrix products beat repeated column transforms.
    dense_a: Option<Vec<Complex64>>,
}

impl DaftOperator {
    pub fn new(config: &AfdmConfig) -> Self {
        let n = config.n;
        let chirp = |c: f64| -> Option<Vec<Complex64>> {
            if c == 0.0 {
                None
            } else {
                Some(
                    (0..n)
                        .map(|k| {
                            let k2 = (k * k) as f64;
                            Complex64::from_polar(1.0, -TAU * c * k2)
                        })
                        .collect(),
                )
            }
        };
        let plan = if n.is_power_of_two() {
            DftPlan::Radix2 { fwd: fft::half_twiddles(n, false), inv: fft::half_twiddles(n, true) }
        } else {
            let scale = 1.0 / (n as f64).sqrt();
            let cell = |m: usize, k: usize, sign: f64| {
                Complex64::from_polar(scale, sign * TAU * ((m * k) % n) as f64 / n as f64)
            };
            let fwd = (0..n * n).map(|i| cell(i / n, i % n, -1.0)).collect();
            let inv = (0..n * n).map(|i| cell(i / n, i % n, 1.0)).collect();
            DftPlan::Direct { fwd, inv }
        };
        let chirp1 = chirp(config.c1);
        let chirp2 = chirp(config.c2);
        let dense_a = match &plan {
            DftPlan::Direct { fwd, .. } if n <= 16 => {
                let one = Complex64::new(1.0, 0.0);
                Some(
                    (0..n * n)
                        .map(|i| {
                            let (p, m) = (i / n, i % n);
                            let c2 = chirp2.as_ref().map_or(one, |c| c[p]);
                            let c1 = chirp1.as_ref().map_or(one, |c| c[m]);
                            c2 * fwd[i] * c1
                        })
                        .collect(),
                )
            }
            _ => None,
        };
        Self { n, chirp1, chirp2, plan, dense_a }
    }

    /// Cached row-major dense `A` when the length is short and non-radix.
    pub(crate) fn dense_daft_rows(&self) -> Option<&[Complex64]> {
        self.dense_a.as_deref()
    }

    /// Transform length N.
    pub fn dim(&self) -> usize {
        self.n
    }

    fn dft(&self, v: &mut Vec<Complex64>, inverse: bool, ops: &mut OpCounter) {
        match &self.plan {
            DftPlan::Radix2 { fwd, inv } => {
                let tw = if inverse { inv } else { fwd };
                fft::fft_pow2(v, tw, ops);
                let scale = 1.0 / (self.n as f64).sqrt();
                for z in v.iter_mut() {
                    *z *= scale;
                }
                ops.add_mults(self.n as u64);
            }
            DftPlan::Direct { fwd, inv } => {
                let m = if inverse { inv } else { fwd };
                let n = self.n;
                let mut out = vec![Complex64::default(); n];
                for (row, slot) in out.iter_mut().enumerate() {
                    let mut acc = Complex64::default();
                    for (k, x) in v.iter().enumerate() {
                        acc += m[row * n + k] * x;
                    }
                    *slot = acc;
                }
                ops.add_mults((n * n) as u64 + n as u64);
                ops.add_adds((n * n) as u64);
                *v = out;
            }
        }
    }

    /// Forward transform `x = A r` into the affine frequency domain.
    ///
    /// Evaluated as a chirp scaling, one unitary DFT, and a second chirp
    /// scaling; equals the dense matrix-vector product with `A`.
    pub fn daft(&self, v: &[Complex64], ops: &mut OpCounter) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n, "length mismatch");
        let mut w = v.to_vec();
        if let Some(c1) = &self.chirp1 {
            for (z, c) in w.iter_mut().zip(c1) {
                *z *= c;
            }
            ops.add_mults(self.n as u64);
        }
        self.dft(&mut w, false, ops);
        if let Some(c2) = &self.chirp2 {
            for (z, c) in w.iter_mut().zip(c2) {
                *z *= c;
            }
            ops.add_mults(self.n as u64);
        }
        w
    }

    /// Inverse transform `s = A^H x` into the time domain.
    pub fn idaft(&self, x: &[Complex64], ops: &mut OpCounter) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n, "length mismatch");
        let mut w = x.to_vec();
        if let Some(c2) = &self.chirp2 {
            for (z, c) in w.iter_mut().zip(c2) {
                *z *= c.conj();
            }
            ops.add_mults(self.n as u64);
        }
        self.dft(&mut w, true, ops);
        if let Some(c1) = &self.chirp1 {
            for (z, c) in w.iter_mut().zip(c1) {
                *z *= c.conj();
            }
            ops.add_mults(self.n as u64);
        }
        w
    }
}

/// Appends the guard interval to the modulated block `s`.
///
/// Zero padding appends `guard_len` zeros. The chirp-periodic prefix prepends
/// the last `guard_len` samples of `s`, each corrected by
/// `exp(-j 2 pi c1 (N^2 + 2 N n))` at prefix position `n = k - guard_len`,
/// which reduces to an ordinary cyclic prefix when `c1 = 0`.
pub fn assemble_frame(s: &[Complex64], config: &AfdmConfig) -> Vec<Complex64> {
    let n = config.n;
    assert_eq!(s.len(), n, "modulated block must have length N");
    let g = config.guard_len;
    match config.prefix_mode {
        PrefixMode::ZeroPad => {
            let mut frame = Vec::with_capacity(n + g);
            frame.extend_from_slice(s);
            frame.resize(n + g, Complex64::default());
            frame
        }
        PrefixMode::CyclicPrefix => {
            let mut frame = Vec::with_capacity(n + g);
            for k in 0..g {
                let nn = k as f64 - g as f64; // prefix position in -g..-1
                let src = s[n - g + k];
                if config.c1 == 0.0 {
                    frame.push(src);
                } else {
                    let phase = -TAU * config.c1 * ((n * n) as f64 + 2.0 * n as f64 * nn);
                    frame.push(src * Complex64::from_polar(1.0, phase));
                }
            }
            frame.extend_from_slice(s);
            frame
        }
    }
}

/// Receiver-side window: the N samples aligned with the modulated block.
///
/// In zero-padded mode the guard tail is discarded; in prefix mode the prefix
/// is stripped.
pub fn extract_data_block(rx_frame: &[Complex64], config: &AfdmConfig) -> Vec<Complex64> {
    assert_eq!(rx_frame.len(), config.frame_len(), "frame length mismatch");
    match config.prefix_mode {
        PrefixMode::ZeroPad => rx_frame[..config.n].to_vec(),
        PrefixMode::CyclicPrefix => rx_frame[config.guard_len..].to_vec(),
    }
}
