//! Doubly selective channel model.
//!
//! A channel realization is a set of P paths, each a complex gain, an integer
//! delay and a real normalized Doppler shift. Gains are Rayleigh
//! (circular complex Gaussian with variance 1/P) and Dopplers follow the
//! Jakes law `nu = nu_max cos(theta)`, `theta ~ U[-pi, pi]`.
//!
//! Time is indexed relative to the start of the modulated block: prefix
//! samples live at negative indices, the zero-padding tail past N - 1. The
//! receiver keeps samples 0..N-1 after prefix handling, which is exactly the
//! window the N x N time-domain matrix describes.

use crate::numerics::{BandedLowerTriangular, DenseMatrix, OpCounter};
use crate::waveform::{AfdmConfig, DaftOperator, PrefixMode};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("path delay {delay} is not below the block length {n}")]
    DelayExceedsFrame { delay: usize, n: usize },
}

/// Statistical description of the channel: path count, maximum normalized
/// Doppler and the fixed set of integer delays (first delay is zero).
/// Per-path gain variance is 1/P.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub num_paths: usize,
    pub nu_max: f64,
    pub delays: Vec<usize>,
}

impl ChannelProfile {
    pub fn new(num_paths: usize, nu_max: f64, delays: Vec<usize>) -> Self {
        assert!(num_paths >= 1, "need at least one path");
        assert_eq!(delays.len(), num_paths, "one delay per path");
        assert!(nu_max >= 0.0, "nu_max must be non-negative");
        assert_eq!(delays[0], 0, "first delay must be zero");
        let mut sorted = delays.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), delays.len(), "delays must be distinct");
        assert!(delays.windows(2).all(|w| w[0] < w[1]), "delays must be increasing");
        Self { num_paths, nu_max, delays }
    }

    /// Consecutive-delay profile {0, 1, ..., P-1}, the Q = P - 1 convention.
    pub fn consecutive(num_paths: usize, nu_max: f64) -> Self {
        Self::new(num_paths, nu_max, (0..num_paths).collect())
    }

    /// Maximum delay spread Q.
    pub fn max_delay(&self) -> usize {
        *self.delays.last().expect("non-empty")
    }

    /// Per-path gain variance 1/P.
    pub fn gain_variance(&self) -> f64 {
        1.0 / self.num_paths as f64
    }
}

/// One path of a sampled channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTap {
    pub gain: Complex64,
    pub delay: usize,
    pub doppler: f64,
}

/// One draw of the channel: P (gain, delay, Doppler) triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<PathTap>,
}

impl ChannelRealization {
    /// Copy with every gain scaled by a real amplitude factor. Used to fold
    /// the zero-padding power boost into the channel seen by the detectors.
    pub fn with_gain_scale(&self, amplitude: f64) -> Self {
        Self {
            paths: self
                .paths
                .iter()
                .map(|p| PathTap { gain: p.gain * amplitude, ..*p })
                .collect(),
        }
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }
}

/// Draws gains i.i.d. circular complex Gaussian with variance 1/P and
/// Dopplers from the Jakes law; delays are the profile's fixed set.
pub fn sample_realization<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    rng: &mut R,
) -> ChannelRealization {
    let comp_std = (0.5 * profile.gain_variance()).sqrt();
    let normal = Normal::new(0.0, comp_std).expect("valid std");
    let paths = profile
        .delays
        .iter()
        .map(|&delay| {
            let gain = Complex64::new(normal.sample(rng), normal.sample(rng));
            let theta = rng.gen_range(-PI..PI);
            PathTap { gain, delay, doppler: profile.nu_max * theta.cos() }
        })
        .collect();
    ChannelRealization { paths }
}

enum TdRepr {
    Banded(BandedLowerTriangular),
    Dense(DenseMatrix),
}

/// The N x N time-domain channel matrix H.
///
/// In zero-padded mode H is lower-triangular and banded with bandwidth Q + 1:
/// entry (p, p - l) holds the sum over paths of delay l of
/// `h_i exp(-j 2 pi nu_i p / N)`, and entries that would wrap are dropped.
/// In prefix mode the wrapped entries are kept and carry the chirp-periodic
/// prefix phase, which makes the matrix circulant-like.
pub struct TdChannelMatrix {
    n: usize,
    mode: PrefixMode,
    delays: Vec<usize>,
    repr: TdRepr,
}

impl TdChannelMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn prefix_mode(&self) -> PrefixMode {
        self.mode
    }

    /// Delay set of the realization the matrix was built from.
    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    /// Maximum delay spread Q.
    pub fn max_delay(&self) -> usize {
        self.delays.last().copied().unwrap_or(0)
    }

    /// Entry (p, q), implied zeros included.
    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        match &self.repr {
            TdRepr::Banded(b) => b.get(p, q),
            TdRepr::Dense(d) => d.get(p, q),
        }
    }

    /// The banded representation (zero-padded mode only).
    pub fn as_banded(&self) -> Option<&BandedLowerTriangular> {
        match &self.repr {
            TdRepr::Banded(b) => Some(b),
            TdRepr::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match &self.repr {
            TdRepr::Banded(b) => {
                let mut d = DenseMatrix::zeros(self.n, self.n);
                for p in 0..self.n {
                    for q in p.saturating_sub(b.bandwidth())..=p {
                        d.set(p, q, b.get(p, q));
                    }
                }
                d
            }
            TdRepr::Dense(d) => d.clone(),
        }
    }

    /// y = H x (counted).
    pub fn mul_vec(&self, x: &[Complex64], ops: &mut OpCounter) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n, "length mismatch");
        match &self.repr {
            TdRepr::Banded(b) => b.mul_vec(x, ops),
            TdRepr::Dense(d) => d.mul_vec(x, ops),
        }
    }
}

/// Per-path Doppler phase sequence `exp(-j 2 pi nu p / N)` for p in 0..N,
/// generated by a phase recurrence (one complex multiply per sample).
fn doppler_phases(nu: f64, n: usize) -> Vec<Complex64> {
    let step = Complex64::from_polar(1.0, -TAU * nu / n as f64);
    let mut out = Vec::with_capacity(n);
    let mut ph = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        out.push(ph);
        ph *= step;
    }
    out
}

/// Builds the N x N time-domain matrix for a realization under the given
/// frame configuration. Rejects delays that reach the block length.
pub fn build_td_matrix(
    real: &ChannelRealization,
    config: &AfdmConfig,
) -> Result<TdChannelMatrix, ChannelError> {
    let n = config.n;
    for tap in &real.paths {
        if tap.delay >= n {
            return Err(ChannelError::DelayExceedsFrame { delay: tap.delay, n });
        }
    }
    let mut delays: Vec<usize> = real.paths.iter().map(|p| p.delay).collect();
    delays.sort_unstable();
    delays.dedup();
    let q = real.max_delay();

    match config.prefix_mode {
        PrefixMode::ZeroPad => {
            let mut b = BandedLowerTriangular::zeros(n, q);
            for tap in &real.paths {
                let phases = doppler_phases(tap.doppler, n);
                for p in tap.delay..n {
                    let cur = b.get(p, p - tap.delay);
                    b.set(p, p - tap.delay, cur + tap.gain * phases[p]);
                }
            }
            Ok(TdChannelMatrix { n, mode: PrefixMode::ZeroPad, delays, repr: TdRepr::Banded(b) })
        }
        PrefixMode::CyclicPrefix => {
            let mut d = DenseMatrix::zeros(n, n);
            for tap in &real.paths {
                let phases = doppler_phases(tap.doppler, n);
                for p in 0..n {
                    if p >= tap.delay {
                        let q_col = p - tap.delay;
                        d.set(p, q_col, d.get(p, q_col) + tap.gain * phases[p]);
                    } else {
                        // Wrapped entry sourced from the chirp-periodic
                        // prefix sample s(N + p - l).
                        let q_col = n + p - tap.delay;
                        let m = p as f64 - tap.delay as f64; // negative
                        let cpp = if config.c1 == 0.0 {
                            Complex64::new(1.0, 0.0)
                        } else {
                            Complex64::from_polar(
                                1.0,
                                -TAU * config.c1 * ((n * n) as f64 + 2.0 * n as f64 * m),
                            )
                        };
                        d.set(p, q_col, d.get(p, q_col) + tap.gain * phases[p] * cpp);
                    }
                }
            }
            Ok(TdChannelMatrix { n, mode: PrefixMode::CyclicPrefix, delays, repr: TdRepr::Dense(d) })
        }
    }
}

/// Passes a transmitted frame through the time-varying channel and adds
/// white circular Gaussian noise of variance `sigma2`.
///
/// The convolution runs sample-by-sample over the whole frame with the tap
/// phases referenced to the start of the modulated block, so the kept window
/// 0..N-1 agrees with the matrix model to rounding. Returns the full
/// received frame; [`crate::waveform::extract_data_block`] selects the
/// receiver window.
pub fn apply_channel<R: Rng + ?Sized>(
    frame: &[Complex64],
    real: &ChannelRealization,
    config: &AfdmConfig,
    sigma2: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let len = config.frame_len();
    assert_eq!(frame.len(), len, "frame length mismatch");
    // Index of the first modulated sample inside the physical frame.
    let block_start = match config.prefix_mode {
        PrefixMode::ZeroPad => 0i64,
        PrefixMode::CyclicPrefix => config.guard_len as i64,
    };
    let mut out = vec![Complex64::default(); len];
    for tap in &real.paths {
        // Phase at data-relative time of physical sample 0, then a
        // one-multiply-per-sample recurrence.
        let step = Complex64::from_polar(1.0, -TAU * tap.doppler / config.n as f64);
        let mut ph =
            Complex64::from_polar(1.0, -TAU * tap.doppler * (-block_start) as f64 / config.n as f64);
        for (m, slot) in out.iter_mut().enumerate() {
            if m >= tap.delay {
                *slot += tap.gain * ph * frame[m - tap.delay];
            }
            ph *= step;
        }
    }
    if sigma2 > 0.0 {
        let comp_std = (0.5 * sigma2).sqrt();
        let normal = Normal::new(0.0, comp_std).expect("valid std");
        for slot in &mut out {
            *slot += Complex64::new(normal.sample(rng), normal.sample(rng));
        }
    }
    out
}

/// Effective channel matrix `H_eff = A H A^H`, built column by column via the
/// fast transforms (N applications, O(N^2 log N) total). Short non-radix
/// lengths use the cached dense `A` and one banded triple product instead.
pub fn effective_matrix(h: &TdChannelMatrix, op: &DaftOperator, ops: &mut OpCounter) -> DenseMatrix {
    let n = h.dim();
    assert_eq!(n, op.dim(), "dimension mismatch");
    if let (Some(a), Some(band)) = (op.dense_daft_rows(), h.as_banded()) {
        return effective_from_dense_a(a, band, &h.delays, n, ops);
    }
    let mut out = DenseMatrix::zeros(n, n);
    let mut unit = vec![Complex64::default(); n];
    for q in 0..n {
        unit[q] = Complex64::new(1.0, 0.0);
        let td = op.idaft(&unit, ops);
        unit[q] = Complex64::default();
        let mixed = h.mul_vec(&td, ops);
        let col = op.daft(&mixed, ops);
        out.set_column(q, &col);
    }
    out
}

/// `A H A^H` with the banded `H` expanded against the cached dense `A`.
fn effective_from_dense_a(
    a: &[Complex64],
    band: &BandedLowerTriangular,
    delays: &[usize],
    n: usize,
    ops: &mut OpCounter,
) -> DenseMatrix {
    // tmp = A H, accumulated column-by-column over the non-zero taps.
    let mut tmp = vec![Complex64::default(); n * n];
    let mut nnz = 0u64;
    for q in 0..n {
        for &l in delays {
            let p = q + l;
            if p >= n {
                continue;
            }
            let coef = band.get(p, q);
            nnz += 1;
            for i in 0..n {
                tmp[i * n + q] += a[i * n + p] * coef;
            }
        }
    }
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::default();
            for k in 0..n {
                acc += tmp[i * n + k] * a[j * n + k].conj();
            }
            out.set(i, j, acc);
        }
    }
    ops.add_mults(nnz * n as u64 + (n as u64).pow(3));
    ops.add_adds(nnz * n as u64 + (n as u64).pow(3));
    out
}

/// Near-singular threshold for the geometric-series phase (radians). Below
/// it the closed-form denominator loses precision and the sum is evaluated
/// directly, which is exact there.
const ZETA_PHASE_EPS: f64 = 1e-9;

/// Entry (p, q) of the subchannel matrix `A Delta_nu Pi^l A^H` of one path,
/// evaluated in closed form:
/// `(1/N) exp(j 2pi/N [N c1 l^2 - q l + N c2 (q^2 - p^2)]) zeta(l, nu, p, q)`
/// with `zeta = sum_{n=l}^{N-1} exp(-j 2pi/N (p - q + nu + 2 N c1 l) n)`,
/// a geometric series unless the per-step phase is a multiple of 2 pi.
pub fn subchannel_entry(
    delay: usize,
    doppler: f64,
    p: usize,
    q: usize,
    config: &AfdmConfig,
) -> Complex64 {
    let n = config.n;
    debug_assert!(p < n && q < n);
    let nf = n as f64;
    let l = delay as f64;
    let pf = p as f64;
    let qf = q as f64;

    let prefactor_angle =
        TAU / nf * (nf * config.c1 * l * l - qf * l + nf * config.c2 * (qf * qf - pf * pf));
    let prefactor = Complex64::from_polar(1.0 / nf, prefactor_angle);

    // Per-step phase of the zeta sum.
    let alpha = TAU / nf * (pf - qf + doppler + 2.0 * nf * config.c1 * l);
    let wrapped = alpha.rem_euclid(TAU);
    let dist = wrapped.min(TAU - wrapped);
    let terms = n - delay;
    let zeta = if dist < ZETA_PHASE_EPS {
        // Direct summation; exact in the near-singular regime.
        let mut acc = Complex64::default();
        for k in delay..n {
            acc += Complex64::from_polar(1.0, -alpha * k as f64);
        }
        acc
    } else {
        let w = Complex64::from_polar(1.0, -alpha);
        let first = Complex64::from_polar(1.0, -alpha * l);
        let top = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -alpha * terms as f64);
        first * top / (Complex64::new(1.0, 0.0) - w)
    };
    prefactor * zeta
}

/// Dense subchannel matrix of one path, from [`subchannel_entry`].
pub fn subchannel_matrix(delay: usize, doppler: f64, config: &AfdmConfig) -> DenseMatrix {
    DenseMatrix::from_fn(config.n, config.n, |p, q| subchannel_entry(delay, doppler, p, q, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs_diff;
    use crate::waveform::assemble_frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn random_realization(profile: &ChannelProfile, seed: u64) -> ChannelRealization {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        sample_realization(profile, &mut rng)
    }

    /// Dense oracle: H = sum_i h_i Delta_{nu_i} Pi^{l_i} from explicit
    /// diagonal and shift matrices, with wrap entries either dropped (ZP)
    /// or phase-corrected (CPP).
    fn dense_td_oracle(real: &ChannelRealization, config: &AfdmConfig) -> DenseMatrix {
        let n = config.n;
        let mut h = DenseMatrix::zeros(n, n);
        for tap in &real.paths {
            let delta = DenseMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::from_polar(1.0, -TAU * tap.doppler * i as f64 / n as f64)
                } else {
                    Complex64::default()
                }
            });
            let shift = DenseMatrix::from_fn(n, n, |i, j| {
                let plain = i >= tap.delay && j == i - tap.delay;
                let wrapped = i < tap.delay && j == n + i - tap.delay;
                match (config.prefix_mode, plain, wrapped) {
                    (_, true, _) => Complex64::new(1.0, 0.0),
                    (PrefixMode::CyclicPrefix, _, true) => {
                        let m = i as f64 - tap.delay as f64;
                        Complex64::from_polar(
                            1.0,
                            -TAU * config.c1 * ((n * n) as f64 + 2.0 * n as f64 * m),
                        )
                    }
                    _ => Complex64::default(),
                }
            });
            let prod = delta.mul(&shift, &mut OpCounter::new());
            for i in 0..n {
                for j in 0..n {
                    h.set(i, j, h.get(i, j) + tap.gain * prod.get(i, j));
                }
            }
        }
        h
    }

    #[test]
    fn degenerate_single_path_profile() {
        let profile = ChannelProfile::consecutive(1, 0.0);
        let real = random_realization(&profile, 1);
        assert_eq!(real.paths.len(), 1);
        assert_eq!(real.paths[0].delay, 0);
        assert_eq!(real.paths[0].doppler, 0.0);
    }

    #[test]
    fn gain_energy_is_normalized() {
        // E[sum |h_i|^2] = 1 within 1% over 1e5 draws.
        let profile = ChannelProfile::consecutive(4, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let r = sample_realization(&profile, &mut rng);
            acc += r.paths.iter().map(|p| p.gain.norm_sqr()).sum::<f64>();
        }
        let mean = acc / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean path energy {mean}");
    }

    #[test]
    fn doppler_follows_arcsine_law() {
        // Kolmogorov-Smirnov test of nu / nu_max against the cosine-of-uniform
        // CDF F(u) = 1 - arccos(u)/pi at the 1% level.
        let profile = ChannelProfile::consecutive(1, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let n = 100_000;
        let mut us: Vec<f64> = (0..n)
            .map(|_| sample_realization(&profile, &mut rng).paths[0].doppler)
            .collect();
        us.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d_stat = 0.0_f64;
        for (k, &u) in us.iter().enumerate() {
            let f = 1.0 - u.clamp(-1.0, 1.0).acos() / PI;
            let lo = k as f64 / n as f64;
            let hi = (k + 1) as f64 / n as f64;
            d_stat = d_stat.max((f - lo).abs()).max((hi - f).abs());
        }
        let critical = 1.628 / (n as f64).sqrt(); // alpha = 0.01
        assert!(d_stat < critical, "KS statistic {d_stat} >= {critical}");
    }

    #[test]
    fn identity_channel_matrix() {
        let real = ChannelRealization {
            paths: vec![PathTap { gain: Complex64::new(1.0, 0.0), delay: 0, doppler: 0.0 }],
        };
        let config = AfdmConfig::with_default_chirps(8, 0, PrefixMode::ZeroPad, 0.0);
        let h = build_td_matrix(&real, &config).unwrap();
        let dense = h.to_dense();
        assert!(dense.max_abs_diff(&DenseMatrix::identity(8)) < 1e-15);
    }

    #[test]
    fn pure_delay_is_shifted_identity() {
        let real = ChannelRealization {
            paths: vec![PathTap { gain: Complex64::new(1.0, 0.0), delay: 1, doppler: 0.0 }],
        };
        let config = AfdmConfig::with_default_chirps(4, 1, PrefixMode::ZeroPad, 0.0);
        let h = build_td_matrix(&real, &config).unwrap();
        for q in 0..4 {
            for p in 0..4 {
                let want = if p >= 1 && q == p - 1 { 1.0 } else { 0.0 };
                assert!((h.get(p, q) - Complex64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_dense_matrix_product_oracle() {
        for mode in [PrefixMode::ZeroPad, PrefixMode::CyclicPrefix] {
            let profile = ChannelProfile::consecutive(3, 1.0);
            let config = AfdmConfig::with_default_chirps(16, 2, mode, 1.0);
            let real = random_realization(&profile, 21);
            let h = build_td_matrix(&real, &config).unwrap();
            let oracle = dense_td_oracle(&real, &config);
            assert!(h.to_dense().max_abs_diff(&oracle) < 1e-12);
        }
    }

    #[test]
    fn zero_pad_structure_is_banded_lower_triangular() {
        // Every entry outside {p >= q, p - q in delays} must vanish.
        for &n in &[8usize, 16, 64] {
            let profile = ChannelProfile::new(3, 1.0, vec![0, 2, 5]);
            let config = AfdmConfig::with_default_chirps(n, 5, PrefixMode::ZeroPad, 1.0);
            let real = random_realization(&profile, n as u64);
            let h = build_td_matrix(&real, &config).unwrap();
            for p in 0..n {
                for q in 0..n {
                    let in_pattern = p >= q && profile.delays.contains(&(p - q));
                    if !in_pattern {
                        assert_eq!(h.get(p, q), Complex64::default(), "({p},{q}) must be zero");
                    }
                }
            }
        }
    }

    #[test]
    fn delay_reaching_block_length_rejected() {
        let real = ChannelRealization {
            paths: vec![PathTap { gain: Complex64::new(1.0, 0.0), delay: 4, doppler: 0.0 }],
        };
        let config = AfdmConfig::with_default_chirps(4, 4, PrefixMode::ZeroPad, 0.0);
        assert_eq!(
            build_td_matrix(&real, &config).err(),
            Some(ChannelError::DelayExceedsFrame { delay: 4, n: 4 })
        );
    }

    #[test]
    fn noiseless_identity_channel_passes_frame_through() {
        let real = ChannelRealization {
            paths: vec![PathTap { gain: Complex64::new(1.0, 0.0), delay: 0, doppler: 0.0 }],
        };
        let config = AfdmConfig::with_default_chirps(8, 2, PrefixMode::ZeroPad, 0.0);
        let s = random_vec(8, 31);
        let frame = assemble_frame(&s, &config);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let rx = apply_channel(&frame, &real, &config, 0.0, &mut rng);
        let kept = crate::waveform::extract_data_block(&rx, &config);
        assert!(max_abs_diff(&kept, &s) < 1e-15);
    }

    #[test]
    fn convolution_agrees_with_matrix_model() {
        // Model consistency: sample-domain convolution vs r = H s on the
        // kept window, both prefix modes, within 1e-12.
        for mode in [PrefixMode::ZeroPad, PrefixMode::CyclicPrefix] {
            let profile = ChannelProfile::consecutive(4, 1.0);
            let config = AfdmConfig::with_default_chirps(32, 3, mode, 1.0);
            let real = random_realization(&profile, 41);
            let s = random_vec(32, 42);
            let frame = assemble_frame(&s, &config);
            let mut rng = ChaCha12Rng::seed_from_u64(0);
            let rx = apply_channel(&frame, &real, &config, 0.0, &mut rng);
            let kept = crate::waveform::extract_data_block(&rx, &config);
            let h = build_td_matrix(&real, &config).unwrap();
            let want = h.mul_vec(&s, &mut OpCounter::new());
            assert!(max_abs_diff(&kept, &want) < 1e-12, "mode {mode:?}");
        }
    }

    #[test]
    fn noise_variance_matches_request() {
        let real = ChannelRealization {
            paths: vec![PathTap { gain: Complex64::default(), delay: 0, doppler: 0.0 }],
        };
        let config = AfdmConfig::with_default_chirps(1000, 0, PrefixMode::ZeroPad, 0.0);
        let frame = vec![Complex64::default(); 1000];
        let sigma2 = 0.37;
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let mut acc = 0.0;
        let reps = 1000;
        for _ in 0..reps {
            let rx = apply_channel(&frame, &real, &config, sigma2, &mut rng);
            acc += rx.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let mean = acc / (reps as f64 * 1000.0);
        assert!((mean - sigma2).abs() < 0.01 * sigma2, "sample variance {mean}");
    }

    #[test]
    fn effective_matrix_of_identity_channel_is_identity() {
        let real = ChannelRealization {
            paths: vec![PathTap { gain: Complex64::new(1.0, 0.0), delay: 0, doppler: 0.0 }],
        };
        let config = AfdmConfig::with_default_chirps(16, 0, PrefixMode::ZeroPad, 1.0);
        let op = DaftOperator::new(&config);
        let h = build_td_matrix(&real, &config).unwrap();
        let heff = effective_matrix(&h, &op, &mut OpCounter::new());
        assert!(heff.max_abs_diff(&DenseMatrix::identity(16)) < 1e-10);
    }

    #[test]
    fn ofdm_over_static_circulant_channel_diagonalizes() {
        let profile = ChannelProfile::consecutive(3, 0.0);
        let config = AfdmConfig::new(16, 4, PrefixMode::CyclicPrefix, 0.0, 0.0);
        let real = random_realization(&profile, 61);
        let op = DaftOperator::new(&config);
        let h = build_td_matrix(&real, &config).unwrap();
        let heff = effective_matrix(&h, &op, &mut OpCounter::new());
        for p in 0..16 {
            for q in 0..16 {
                if p != q {
                    assert!(heff.get(p, q).norm() < 1e-12, "off-diagonal ({p},{q})");
                }
            }
        }
    }

    #[test]
    fn identity_path_subchannel_is_identity() {
        let config = AfdmConfig::new(8, 0, PrefixMode::ZeroPad, 0.171, 1.0 / 128.0);
        let m = subchannel_matrix(0, 0.0, &config);
        assert!(m.max_abs_diff(&DenseMatrix::identity(8)) < 1e-12);
    }

    #[test]
    fn subchannel_entry_matches_constructive_product() {
        // Entry (2, 5) for N=8, l=1, nu=0.5, c1=3/16 against the dense
        // A Delta Pi A^H product.
        let config = AfdmConfig::new(8, 1, PrefixMode::ZeroPad, 3.0 / 16.0, 1.0 / 128.0);
        let got = subchannel_entry(1, 0.5, 2, 5, &config);
        let want = constructive_subchannel(&config, 1, 0.5).get(2, 5);
        assert!((got - want).norm() < 1e-10, "got {got}, want {want}");
    }

    /// A Delta_nu Pi^l A^H with the truncated (zero-padded) shift, built from
    /// dense matrices. Oracle for the closed-form entry.
    fn constructive_subchannel(config: &AfdmConfig, delay: usize, nu: f64) -> DenseMatrix {
        let n = config.n;
        let a = DenseMatrix::from_fn(n, n, |p, m| {
            let ang = -TAU
                * (config.c2 * (p * p) as f64
                    + (p * m) as f64 / n as f64
                    + config.c1 * (m * m) as f64);
            Complex64::from_polar(1.0 / (n as f64).sqrt(), ang)
        });
        let delta = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::from_polar(1.0, -TAU * nu * i as f64 / n as f64)
            } else {
                Complex64::default()
            }
        });
        let pi = DenseMatrix::from_fn(n, n, |i, j| {
            if i >= delay && j == i - delay {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        });
        let mut ops = OpCounter::new();
        a.mul(&delta, &mut ops).mul(&pi, &mut ops).mul(&a.hermitian(), &mut ops)
    }

    #[test]
    fn subchannel_grid_consistency_including_near_singular_branch() {
        // Full N=16 grids; the (l=1, nu=-1, c1=1/32) geometry makes the
        // zeta per-step phase hit exact multiples of 2 pi on some (p, q).
        let n = 16;
        let cases = [
            (1usize, 0.37, 3.0 / 32.0),
            (3, -0.82, 5.0 / 32.0),
            (1, -1.0, 1.0 / 32.0),
            (0, 0.0, 3.0 / 32.0),
        ];
        for &(l, nu, c1) in &cases {
            let config = AfdmConfig::new(n, l, PrefixMode::ZeroPad, c1, 1.0 / (2.0 * 256.0));
            let want = constructive_subchannel(&config, l, nu);
            let got = subchannel_matrix(l, nu, &config);
            let err = got.max_abs_diff(&want);
            assert!(err < 1e-9, "l={l} nu={nu} c1={c1}: {err}");
        }
    }

    #[test]
    fn subchannel_rows_are_unit_norm_in_full_matrix_form() {
        // Unitarity holds for the non-truncated (prefix) form: build the CPP
        // channel of a single unit path and conjugate by A.
        let config = AfdmConfig::with_default_chirps(16, 3, PrefixMode::CyclicPrefix, 1.0);
        let real = ChannelRealization {
            paths: vec![PathTap { gain: Complex64::new(1.0, 0.0), delay: 3, doppler: 0.7 }],
        };
        let op = DaftOperator::new(&config);
        let h = build_td_matrix(&real, &config).unwrap();
        let heff = effective_matrix(&h, &op, &mut OpCounter::new());
        for p in 0..16 {
            let row_energy: f64 = (0..16).map(|q| heff.get(p, q).norm_sqr()).sum();
            assert!((row_energy - 1.0).abs() < 1e-10, "row {p}: {row_energy}");
        }
    }

    #[test]
    fn effective_matrix_matches_subchannel_superposition() {
        // H_eff equals sum_i h_i H_i with H_i from the closed form (Eq. 5
        // route), zero-padded mode, N = 8.
        let profile = ChannelProfile::consecutive(3, 1.0);
        let config = AfdmConfig::with_default_chirps(8, 2, PrefixMode::ZeroPad, 1.0);
        let real = random_realization(&profile, 71);
        let op = DaftOperator::new(&config);
        let h = build_td_matrix(&real, &config).unwrap();
        let heff = effective_matrix(&h, &op, &mut OpCounter::new());
        let mut sum = DenseMatrix::zeros(8, 8);
        for tap in &real.paths {
            let hi = subchannel_matrix(tap.delay, tap.doppler, &config);
            for p in 0..8 {
                for q in 0..8 {
                    sum.set(p, q, sum.get(p, q) + tap.gain * hi.get(p, q));
                }
            }
        }
        assert!(heff.max_abs_diff(&sum) < 1e-9);
    }

    #[test]
    fn full_channel_preserves_mean_energy() {
        // E[||H s||^2] / ||s||^2 -> 1 for the non-truncated (prefix) matrix.
        let profile = ChannelProfile::consecutive(3, 1.0);
        let config = AfdmConfig::with_default_chirps(16, 2, PrefixMode::CyclicPrefix, 1.0);
        let s = random_vec(16, 81);
        let s_energy: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        let mut rng = ChaCha12Rng::seed_from_u64(82);
        let trials = 20_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let real = sample_realization(&profile, &mut rng);
            let h = build_td_matrix(&real, &config).unwrap();
            let hs = h.mul_vec(&s, &mut OpCounter::new());
            acc += hs.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let ratio = acc / (trials as f64 * s_energy);
        assert!((ratio - 1.0).abs() < 0.02, "energy ratio {ratio}");
    }
}
