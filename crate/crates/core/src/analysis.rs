//! Analytical BER predictors.
//!
//! Two chains: the ML union bound built from unconditional pairwise error
//! probabilities under Rayleigh path gains, and the per-subcarrier SINR
//! closed form for the MMSE detector.

use crate::channel::{build_td_matrix, sample_realization, subchannel_matrix, ChannelError,
    ChannelProfile};
use crate::modulation::{ModulationKind, ModulationScheme};
use crate::numerics::{
    backward_substitution, banded_cholesky, erfc, forward_substitution, hermitian_eigenvalues,
    q_function_approx, BandedHermitianMatrix, DenseMatrix, NumericsError, OpCounter,
};
use crate::waveform::{AfdmConfig, DaftOperator};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Enumeration guard shared with the ML detector.
pub const ENUMERATION_CAP: u128 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("candidate space {size} exceeds enumeration cap {cap}")]
    EnumerationCapExceeded { size: u128, cap: u128 },
    #[error("equalized-channel diagonal entry {index} = {value} falls outside (0, 1)")]
    SinrOutOfRange { index: usize, value: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Eigen-data of one pairwise error event: the spectrum of
/// `Theta = Phi(Delta)^H Phi(Delta)` where column i of `Phi` is `H_i Delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseErrorContext {
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
}

impl PairwiseErrorContext {
    /// Builds the Gram spectrum of the error event `delta` over the per-path
    /// subchannel matrices.
    pub fn from_delta(delta: &[Complex64], subchannels: &[DenseMatrix]) -> Self {
        let n = delta.len();
        let p = subchannels.len();
        let mut phi = DenseMatrix::zeros(n, p);
        let mut scratch = OpCounter::new();
        for (col, h_i) in subchannels.iter().enumerate() {
            let v = h_i.mul_vec(delta, &mut scratch);
            phi.set_column(col, &v);
        }
        let theta = phi.gram(&mut scratch);
        let eigenvalues =
            hermitian_eigenvalues(&theta).expect("Gram matrix is Hermitian by construction");
        let max = eigenvalues.first().copied().unwrap_or(0.0);
        let rank = eigenvalues.iter().filter(|&&l| l > 1e-10 * max).count();
        Self { eigenvalues, rank }
    }
}

/// Unconditional pairwise error probability under independent Rayleigh path
/// gains of variance 1/P:
/// `(1/12) prod_i 1/(1 + l_i g / (4P)) + (1/4) prod_i 1/(1 + l_i g / (3P))`
/// over the non-zero eigenvalues. At `gamma_s = 0` this is 1/3 regardless of
/// the error event.
pub fn pep_unconditional(ctx: &PairwiseErrorContext, gamma_s: f64, num_paths: usize) -> f64 {
    debug_assert!(gamma_s >= 0.0);
    let p = num_paths as f64;
    let mut prod4 = 1.0;
    let mut prod3 = 1.0;
    for &l in ctx.eigenvalues.iter().take(ctx.rank) {
        prod4 /= 1.0 + l * gamma_s / (4.0 * p);
        prod3 /= 1.0 + l * gamma_s / (3.0 * p);
    }
    prod4 / 12.0 + prod3 / 4.0
}

/// Union bound evaluator prepared for one channel geometry. The spectrum of
/// every error event depends only on `Delta = x - x_hat`, so ordered symbol
/// pairs are grouped by their per-position differences; the grouped sum is
/// identical to the naive double sum over all M^N (M^N - 1) pairs.
pub struct PreparedUnionBound {
    terms: Vec<BoundTerm>,
    num_paths: usize,
    normalizer: f64,
}

struct BoundTerm {
    ctx: PairwiseErrorContext,
    /// Pair multiplicity times the bit-error weight of the event.
    weighted_bits: f64,
}

/// Per-position difference class: a distinct value of `x(k) - x_hat(k)`
/// with the number of ordered symbol pairs producing it and their common
/// bit distance.
struct DiffClass {
    diff: Complex64,
    pair_count: f64,
    bits: u32,
}

fn difference_classes(modulation: &ModulationScheme) -> Vec<DiffClass> {
    let pts = modulation.points();
    let mut classes: Vec<DiffClass> = Vec::new();
    for a in 0..pts.len() {
        for b in 0..pts.len() {
            let diff = pts[a] - pts[b];
            let bits = modulation.bit_distance(a, b);
            match classes
                .iter_mut()
                .find(|c| c.diff.re.to_bits() == diff.re.to_bits() && c.diff.im.to_bits() == diff.im.to_bits())
            {
                Some(c) => {
                    // The Gray layouts used here give every pair with the
                    // same geometric difference the same bit distance.
                    assert_eq!(c.bits, bits, "difference class with mixed bit weights");
                    c.pair_count += 1.0;
                }
                None => classes.push(DiffClass { diff, pair_count: 1.0, bits }),
            }
        }
    }
    classes
}

impl PreparedUnionBound {
    /// Prepares the grouped union bound for a fixed path geometry
    /// `(delay, doppler)` per path. Path gains are averaged analytically.
    pub fn new(
        config: &AfdmConfig,
        geometry: &[(usize, f64)],
        modulation: &ModulationScheme,
    ) -> Result<Self, AnalysisError> {
        let n = config.n;
        let m = modulation.order();
        let mut size: u128 = 1;
        for _ in 0..n {
            size = size.saturating_mul(m as u128);
            if size > ENUMERATION_CAP {
                return Err(AnalysisError::EnumerationCapExceeded { size, cap: ENUMERATION_CAP });
            }
        }

        let subchannels: Vec<DenseMatrix> = geometry
            .iter()
            .map(|&(l, nu)| subchannel_matrix(l, nu, config))
            .collect();
        let classes = difference_classes(modulation);

        // Odometer over difference classes per position, skipping the
        // all-zero event.
        let mut terms = Vec::new();
        let mut pick = vec![0usize; n];
        let mut delta = vec![Complex64::default(); n];
        loop {
            let mut weight = 1.0;
            let mut bits = 0u32;
            for (k, &c) in pick.iter().enumerate() {
                weight *= classes[c].pair_count;
                bits += classes[c].bits;
                delta[k] = classes[c].diff;
            }
            if bits > 0 {
                let ctx = PairwiseErrorContext::from_delta(&delta, &subchannels);
                terms.push(BoundTerm { ctx, weighted_bits: weight * f64::from(bits) });
            }
            let mut pos = n;
            let done = loop {
                if pos == 0 {
                    break true;
                }
                pos -= 1;
                pick[pos] += 1;
                if pick[pos] < classes.len() {
                    break false;
                }
                pick[pos] = 0;
            };
            if done {
                break;
            }
        }

        let normalizer =
            (m as f64).powi(n as i32) * n as f64 * (modulation.bits_per_symbol() as f64);
        Ok(Self { terms, num_paths: geometry.len(), normalizer })
    }

    /// Un-clipped union bound at linear SNR `gamma_s`. Values above 1 are
    /// meaningful only as bound slack; clip for reporting.
    pub fn bound(&self, gamma_s: f64) -> f64 {
        let sum: f64 = self
            .terms
            .iter()
            .map(|t| pep_unconditional(&t.ctx, gamma_s, self.num_paths) * t.weighted_bits)
            .sum();
        sum / self.normalizer
    }
}

/// One-shot grouped evaluation of the ML union bound (un-clipped).
pub fn ml_union_bound(
    config: &AfdmConfig,
    geometry: &[(usize, f64)],
    modulation: &ModulationScheme,
    gamma_s: f64,
) -> Result<f64, AnalysisError> {
    Ok(PreparedUnionBound::new(config, geometry, modulation)?.bound(gamma_s))
}

/// Reference evaluation of the union bound as the literal double sum over
/// all ordered candidate pairs. Exponentially slower than the grouped form;
/// kept as the independent route for equivalence checks.
pub fn ml_union_bound_naive(
    config: &AfdmConfig,
    geometry: &[(usize, f64)],
    modulation: &ModulationScheme,
    gamma_s: f64,
) -> Result<f64, AnalysisError> {
    let n = config.n;
    let m = modulation.order();
    let mut size: u128 = 1;
    for _ in 0..n {
        size = size.saturating_mul(m as u128);
        if size > ENUMERATION_CAP {
            return Err(AnalysisError::EnumerationCapExceeded { size, cap: ENUMERATION_CAP });
        }
    }
    let total = size as usize;
    let subchannels: Vec<DenseMatrix> = geometry
        .iter()
        .map(|&(l, nu)| subchannel_matrix(l, nu, config))
        .collect();
    let pts = modulation.points();

    let decode = |mut code: usize| -> Vec<usize> {
        let mut idx = vec![0usize; n];
        for k in (0..n).rev() {
            idx[k] = code % m;
            code /= m;
        }
        idx
    };

    let mut sum = 0.0;
    for xa in 0..total {
        let ia = decode(xa);
        for xb in 0..total {
            if xa == xb {
                continue;
            }
            let ib = decode(xb);
            let bits: u32 = ia.iter().zip(&ib).map(|(&a, &b)| modulation.bit_distance(a, b)).sum();
            let delta: Vec<Complex64> =
                ia.iter().zip(&ib).map(|(&a, &b)| pts[a] - pts[b]).collect();
            let ctx = PairwiseErrorContext::from_delta(&delta, &subchannels);
            sum += pep_unconditional(&ctx, gamma_s, geometry.len()) * f64::from(bits);
        }
    }
    let normalizer = (m as f64).powi(n as i32) * n as f64 * modulation.bits_per_symbol() as f64;
    Ok(sum / normalizer)
}

/// Biased equalized-channel matrix `T = G_AF H_eff` of the MMSE detector and
/// the per-subcarrier SINRs `beta_i = T(i,i) / (1 - T(i,i))`.
///
/// The diagonal of `T` must be real within 1e-10 and inside (0, 1); anything
/// else is an internal-consistency failure.
pub fn mmse_bias_matrix(
    h_eff: &DenseMatrix,
    gamma_s: f64,
) -> Result<(DenseMatrix, Vec<f64>), AnalysisError> {
    assert!(gamma_s > 0.0 && gamma_s.is_finite(), "need finite positive SNR");
    let n = h_eff.cols();
    let mut scratch = OpCounter::new();
    let gram = h_eff.gram(&mut scratch);
    let mut psi_rows: Vec<Vec<Complex64>> = (0..n).map(|i| gram.row(i).to_vec()).collect();
    for (i, row) in psi_rows.iter_mut().enumerate() {
        row[i] += Complex64::new(1.0 / gamma_s, 0.0);
    }
    let psi = BandedHermitianMatrix::from_dense_lower(&psi_rows, n.saturating_sub(1));
    let l = banded_cholesky(&psi, &mut scratch)?;

    // T columns solve Psi t_col = gram_col.
    let mut t = DenseMatrix::zeros(n, n);
    for col in 0..n {
        let rhs = gram.column(col);
        let z = forward_substitution(&l, &rhs, &mut scratch)?;
        let tc = backward_substitution(&l, &z, &mut scratch)?;
        t.set_column(col, &tc);
    }

    let mut betas = Vec::with_capacity(n);
    for i in 0..n {
        let tii = t.get(i, i);
        if tii.im.abs() > 1e-10 {
            return Err(AnalysisError::SinrOutOfRange { index: i, value: tii.im });
        }
        let v = tii.re;
        if !(v > -1e-10 && v < 1.0 + 1e-10) {
            return Err(AnalysisError::SinrOutOfRange { index: i, value: v });
        }
        let clamped = v.clamp(0.0, 1.0 - f64::EPSILON);
        betas.push(clamped / (1.0 - clamped));
    }
    Ok((t, betas))
}

/// Modulation-dependent constants of the SINR-based BER approximation
/// `BER(beta) = a * erfc(sqrt(b * beta))` for Gray-coded alphabets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationBerConstants {
    pub a: f64,
    pub b: f64,
}

pub fn modulation_constants(kind: ModulationKind) -> ModulationBerConstants {
    match kind {
        // 0.5 erfc(sqrt(g)) is the exact BPSK bit error rate at SNR g.
        ModulationKind::Bpsk => ModulationBerConstants { a: 0.5, b: 1.0 },
        // Per-bit QPSK: Q(sqrt(g)) = 0.5 erfc(sqrt(g / 2)).
        ModulationKind::Qpsk => ModulationBerConstants { a: 0.5, b: 0.5 },
        // Gray-mapped 16QAM nearest-neighbour approximation.
        ModulationKind::Qam16 => ModulationBerConstants { a: 0.375, b: 0.1 },
    }
}

/// SINR-based BER approximation for one realization:
/// `(1/N) sum_i a erfc(sqrt(b T(i,i) / (1 - T(i,i))))`.
pub fn mmse_theoretical_ber(
    h_eff: &DenseMatrix,
    gamma_s: f64,
    kind: ModulationKind,
) -> Result<f64, AnalysisError> {
    let (_, betas) = mmse_bias_matrix(h_eff, gamma_s)?;
    let c = modulation_constants(kind);
    let n = betas.len() as f64;
    Ok(betas.iter().map(|&b| c.a * erfc((c.b * b).sqrt())).sum::<f64>() / n)
}

/// Realization-averaged SINR-based BER for a channel law: samples
/// `realizations` independent channels (gain-scaled for the zero-padded
/// power boost exactly like the simulator), evaluates the closed form on
/// each, and returns the mean with its standard error.
pub fn mmse_theoretical_ber_profile(
    config: &AfdmConfig,
    profile: &ChannelProfile,
    gamma_s: f64,
    kind: ModulationKind,
    realizations: usize,
    seed: u64,
) -> Result<(f64, f64), AnalysisError> {
    assert!(realizations >= 1);
    let op = DaftOperator::new(config);
    let amp = config.energy_factor().sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut vals = Vec::with_capacity(realizations);
    let mut scratch = OpCounter::new();
    for _ in 0..realizations {
        let real = sample_realization(profile, &mut rng).with_gain_scale(amp);
        let h = build_td_matrix(&real, config)?;
        let h_eff = crate::channel::effective_matrix(&h, &op, &mut scratch);
        vals.push(mmse_theoretical_ber(&h_eff, gamma_s, kind)?);
    }
    let mean = vals.iter().sum::<f64>() / realizations as f64;
    let std_err = if realizations > 1 {
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (realizations as f64 - 1.0);
        (var / realizations as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, std_err))
}

/// Chiani-style upper bound on Q used throughout the PEP chain; exposed so
/// callers can evaluate the N = 1 closed forms consistently.
pub fn q_approx(x: f64) -> f64 {
    q_function_approx(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::PrefixMode;
    use rand::{Rng, SeedableRng};

    fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>()
            / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>()
    }

    #[test]
    fn pep_at_zero_snr_is_one_third() {
        let ctx = PairwiseErrorContext { eigenvalues: vec![5.0, 1.0], rank: 2 };
        assert!((pep_unconditional(&ctx, 0.0, 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pep_single_eigenvalue_hand_case() {
        // r = 1, lambda = 4P, gamma = 1: 1/12 * 1/2 + 1/4 * 1/(1 + 4/3).
        let p = 3usize;
        let ctx = PairwiseErrorContext { eigenvalues: vec![4.0 * p as f64], rank: 1 };
        let want = 1.0 / 24.0 + 3.0 / 28.0;
        assert!((pep_unconditional(&ctx, 1.0, p) - want).abs() < 1e-15);
    }

    #[test]
    fn pep_high_snr_slope_equals_negative_rank() {
        for rank in 1..=4usize {
            let ctx = PairwiseErrorContext {
                eigenvalues: (0..rank).map(|k| 2.0 + k as f64).collect(),
                rank,
            };
            let gammas_db: Vec<f64> = (30..=60).step_by(5).map(f64::from).collect();
            let xs: Vec<f64> = gammas_db.iter().map(|db| (10f64.powf(db / 10.0)).ln()).collect();
            let ys: Vec<f64> = gammas_db
                .iter()
                .map(|db| pep_unconditional(&ctx, 10f64.powf(db / 10.0), 4).ln())
                .collect();
            let slope = fit_slope(&xs, &ys);
            assert!((slope + rank as f64).abs() <= 0.05, "rank {rank}: slope {slope}");
        }
    }

    #[test]
    fn pep_is_symmetric_in_delta_sign() {
        let config = AfdmConfig::with_default_chirps(4, 1, PrefixMode::ZeroPad, 1.0);
        let subs = vec![subchannel_matrix(0, 0.3, &config), subchannel_matrix(1, -0.7, &config)];
        let delta = vec![
            Complex64::new(2.0, 0.0),
            Complex64::default(),
            Complex64::new(0.0, -2.0),
            Complex64::new(-2.0, 2.0),
        ];
        let neg: Vec<Complex64> = delta.iter().map(|z| -z).collect();
        let a = PairwiseErrorContext::from_delta(&delta, &subs);
        let b = PairwiseErrorContext::from_delta(&neg, &subs);
        for g in [0.0, 1.0, 10.0, 1000.0] {
            assert_eq!(pep_unconditional(&a, g, 2), pep_unconditional(&b, g, 2));
        }
    }

    #[test]
    fn single_symbol_bpsk_bound_closed_form() {
        // N = 1, single path l = 0, nu = 0: only Delta = +-2, Theta = 4,
        // and the bound collapses to the scalar PEP.
        let config = AfdmConfig::new(1, 0, PrefixMode::ZeroPad, 0.5, 0.5);
        let bpsk = ModulationScheme::new(ModulationKind::Bpsk);
        for gamma in [0.5, 1.0, 10.0] {
            let bound = ml_union_bound(&config, &[(0, 0.0)], &bpsk, gamma).unwrap();
            let want = (1.0 / 12.0) / (1.0 + gamma) + 0.25 / (1.0 + 4.0 * gamma / 3.0);
            assert!((bound - want).abs() < 1e-12, "gamma {gamma}");
        }
    }

    #[test]
    fn grouped_bound_equals_naive_double_sum() {
        let config = AfdmConfig::with_default_chirps(3, 1, PrefixMode::ZeroPad, 1.0);
        let bpsk = ModulationScheme::new(ModulationKind::Bpsk);
        let geometry = [(0usize, 0.42), (1usize, -0.9)];
        for gamma in [1.0, 31.6] {
            let grouped = ml_union_bound(&config, &geometry, &bpsk, gamma).unwrap();
            let naive = ml_union_bound_naive(&config, &geometry, &bpsk, gamma).unwrap();
            assert!((grouped - naive).abs() <= 1e-12, "gamma {gamma}: {grouped} vs {naive}");
        }
        // Same identity for a complex alphabet.
        let qpsk = ModulationScheme::new(ModulationKind::Qpsk);
        let config2 = AfdmConfig::with_default_chirps(2, 1, PrefixMode::ZeroPad, 1.0);
        let grouped = ml_union_bound(&config2, &geometry, &qpsk, 5.0).unwrap();
        let naive = ml_union_bound_naive(&config2, &geometry, &qpsk, 5.0).unwrap();
        assert!((grouped - naive).abs() <= 1e-12);
    }

    #[test]
    fn enumeration_cap_enforced() {
        let config = AfdmConfig::with_default_chirps(8, 1, PrefixMode::ZeroPad, 1.0);
        let qam = ModulationScheme::new(ModulationKind::Qam16);
        assert!(matches!(
            ml_union_bound(&config, &[(0, 0.0)], &qam, 1.0),
            Err(AnalysisError::EnumerationCapExceeded { .. })
        ));
    }

    #[test]
    fn diversity_ordering_of_bounds() {
        // More paths means a steeper bound: at 20 dB the P = 4 bound lies
        // below P = 3 below P = 2, averaged over Jakes geometries.
        let bpsk = ModulationScheme::new(ModulationKind::Bpsk);
        let gamma = 100.0;
        let mut means = Vec::new();
        for p in [2usize, 3, 4] {
            let config = AfdmConfig::with_default_chirps(6, 2, PrefixMode::ZeroPad, 1.0);
            let profile = ChannelProfile::consecutive(p, 1.0);
            let mut rng = ChaCha12Rng::seed_from_u64(2024 + p as u64);
            let mut acc = 0.0;
            let draws = 20;
            for _ in 0..draws {
                let real = sample_realization(&profile, &mut rng);
                let geometry: Vec<(usize, f64)> =
                    real.paths.iter().map(|t| (t.delay, t.doppler)).collect();
                acc += ml_union_bound(&config, &geometry, &bpsk, gamma).unwrap();
            }
            means.push(acc / draws as f64);
        }
        assert!(means[2] < means[1] && means[1] < means[0], "bounds {means:?}");
    }

    #[test]
    fn bias_matrix_identity_channel_recovers_snr() {
        let (t, betas) = mmse_bias_matrix(&DenseMatrix::identity(8), 7.5).unwrap();
        for i in 0..8 {
            assert!((t.get(i, i).re - 7.5 / 8.5).abs() < 1e-12);
            assert!((betas[i] - 7.5).abs() < 1e-9);
        }
    }

    #[test]
    fn interference_variance_matches_sinr_identity() {
        // Monte-Carlo check of Var(sum_{j!=i} T(i,j) x(j) + (G w)(i))
        // against T(i,i)(1 - T(i,i)).
        let n = 16;
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let h_eff = DenseMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
        });
        let gamma = 10.0;
        let (t, _) = mmse_bias_matrix(&h_eff, gamma).unwrap();

        // G = Psi^{-1} H^H obtained through the same solve machinery.
        let mut scratch = OpCounter::new();
        let gram = h_eff.gram(&mut scratch);
        let mut rows: Vec<Vec<Complex64>> = (0..n).map(|i| gram.row(i).to_vec()).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] += Complex64::new(1.0 / gamma, 0.0);
        }
        let psi = BandedHermitianMatrix::from_dense_lower(&rows, n - 1);
        let l = banded_cholesky(&psi, &mut scratch).unwrap();
        let hh = h_eff.hermitian();
        let mut g = DenseMatrix::zeros(n, n);
        for col in 0..n {
            let rhs = hh.column(col);
            let z = forward_substitution(&l, &rhs, &mut scratch).unwrap();
            let gc = backward_substitution(&l, &z, &mut scratch).unwrap();
            g.set_column(col, &gc);
        }

        let qpsk = ModulationScheme::new(ModulationKind::Qpsk);
        let draws = 100_000;
        let mut acc = vec![0.0f64; n];
        let mut acc_sq = vec![0.0f64; n];
        let sigma = (0.5 / gamma).sqrt();
        let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
        use rand_distr::Distribution;
        for _ in 0..draws {
            let x: Vec<Complex64> =
                (0..n).map(|_| qpsk.points()[rng.gen_range(0..4)]).collect();
            let w: Vec<Complex64> =
                (0..n).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
            let tx = t.mul_vec(&x, &mut scratch);
            let gw = g.mul_vec(&w, &mut scratch);
            for i in 0..n {
                let interf = tx[i] - t.get(i, i) * x[i] + gw[i];
                acc[i] += interf.re;
                acc_sq[i] += interf.norm_sqr();
            }
        }
        for i in 0..n {
            let var = acc_sq[i] / draws as f64;
            let tii = t.get(i, i).re;
            let want = tii * (1.0 - tii);
            assert!(
                (var - want).abs() <= 0.03 * want,
                "subcarrier {i}: measured {var}, identity {want}"
            );
        }
    }

    #[test]
    fn betas_increase_with_snr() {
        let n = 8;
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let h_eff = DenseMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
        });
        let mut prev: Option<Vec<f64>> = None;
        for db in (0..=30).step_by(3) {
            let (_, betas) = mmse_bias_matrix(&h_eff, 10f64.powf(f64::from(db) / 10.0)).unwrap();
            if let Some(p) = prev {
                for i in 0..n {
                    assert!(betas[i] > p[i], "beta[{i}] not increasing at {db} dB");
                }
            }
            prev = Some(betas);
        }
    }

    #[test]
    fn bias_matrix_sanity_at_high_snr() {
        let n = 8;
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        // Full-rank with a safe margin: identity plus perturbation.
        let mut h_eff = DenseMatrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                let bump = Complex64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                h_eff.set(i, j, h_eff.get(i, j) + bump);
            }
        }
        let (t, _) = mmse_bias_matrix(&h_eff, 1e6).unwrap();
        let trace: Complex64 = (0..n).map(|i| t.get(i, i)).sum();
        assert!(trace.im.abs() < 1e-9, "trace must be real");
        for i in 0..n {
            let tii = t.get(i, i).re;
            assert!(tii > 0.0 && tii < 1.0);
            assert!((tii - 1.0).abs() < 1e-3, "T({i},{i}) = {tii} at 60 dB");
        }
    }

    #[test]
    fn theoretical_ber_reduces_to_awgn_on_identity_channel() {
        // BPSK: 0.5 erfc(sqrt(gamma)).
        for db in [0.0, 5.0, 10.0] {
            let gamma = 10f64.powf(db / 10.0);
            let got =
                mmse_theoretical_ber(&DenseMatrix::identity(16), gamma, ModulationKind::Bpsk)
                    .unwrap();
            let want = 0.5 * erfc(gamma.sqrt());
            assert!((got - want).abs() < 1e-9, "{db} dB: {got} vs {want}");
        }
        // QPSK at 10 dB: 0.5 erfc(sqrt(5)) ~= 7.827e-4 per bit.
        let got = mmse_theoretical_ber(&DenseMatrix::identity(16), 10.0, ModulationKind::Qpsk)
            .unwrap();
        assert!((got - 0.5 * erfc(5.0_f64.sqrt())).abs() < 1e-12);
        assert!((got - 7.827e-4).abs() < 5e-7);
    }

    #[test]
    fn qam16_constants_validated_against_exact_gray_demapping() {
        // Exact Gray-mapped 16QAM bit error rate on AWGN from per-axis
        // 4-PAM decision regions: (3/4) Q1 + (1/2) Q3 - (1/4) Q5 with
        // Qk = 0.5 erfc(k d / (sigma_d sqrt 2)), d = 1/sqrt(10),
        // sigma_d^2 = 1/(2 gamma).
        let c = modulation_constants(ModulationKind::Qam16);
        for db in [10.0, 14.0, 17.0, 20.0] {
            let gamma = 10f64.powf(db / 10.0);
            let qk = |k: f64| {
                let d = 1.0 / 10.0_f64.sqrt();
                let sigma_d = (0.5 / gamma).sqrt();
                0.5 * erfc(k * d / (sigma_d * 2.0_f64.sqrt()))
            };
            let exact = 0.75 * qk(1.0) + 0.5 * qk(3.0) - 0.25 * qk(5.0);
            let approx = c.a * erfc((c.b * gamma).sqrt());
            let rel = (approx - exact).abs() / exact;
            assert!(rel < 0.05, "{db} dB: approx {approx}, exact {exact}, rel {rel}");
        }
    }

    #[test]
    fn profile_average_reports_standard_error() {
        let config = AfdmConfig::with_default_chirps(8, 2, PrefixMode::ZeroPad, 0.5);
        let profile = ChannelProfile::consecutive(3, 0.5);
        let (mean, se) =
            mmse_theoretical_ber_profile(&config, &profile, 10.0, ModulationKind::Bpsk, 50, 7)
                .unwrap();
        assert!(mean > 0.0 && mean < 0.5);
        assert!(se > 0.0 && se < mean);
    }
}
