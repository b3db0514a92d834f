//! Monte-Carlo BER engine.
//!
//! Each trial is a pure function of `(master_seed, snr_index, trial_index)`:
//! bits, channel realization and noise come from a counter-derived stream,
//! all detectors of a sweep see the identical frame, and accumulation uses
//! integer counts merged commutatively, so results are bit-identical for any
//! worker count.

use crate::channel::{
    apply_channel, build_td_matrix, effective_matrix, sample_realization, ChannelError,
    ChannelProfile, TdChannelMatrix,
};
use crate::detectors::{
    detect_ml, detect_mmse_banded, detect_mmse_conventional, detect_mrc_td, DetectorError,
    DetectorKind, ML_SEARCH_CAP,
};
use crate::modulation::ModulationScheme;
use crate::numerics::{DenseMatrix, OpCounter};
use crate::waveform::{assemble_frame, extract_data_block, AfdmConfig, DaftOperator, PrefixMode};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// Full description of one BER experiment. Together with the worker count
/// (which never changes results) this reproduces every output bit-exactly.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub config: AfdmConfig,
    pub profile: ChannelProfile,
    pub modulation: ModulationScheme,
    pub detectors: Vec<DetectorKind>,
    /// Per-symbol SNR grid in dB of the prefix reference arm, strictly
    /// increasing.
    pub snr_grid_db: Vec<f64>,
    /// Exact frame count per point; when absent the stopping rule is
    /// `target_bit_errors` capped by `max_frames_per_point`.
    pub frames_per_point: Option<u64>,
    pub target_bit_errors: u64,
    pub max_frames_per_point: u64,
    pub master_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.detectors.is_empty() {
            return Err(SimError::InvalidSpec("at least one detector required".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(SimError::InvalidSpec("empty SNR grid".into()));
        }
        if !self.snr_grid_db.windows(2).all(|w| w[0] < w[1]) {
            return Err(SimError::InvalidSpec("SNR grid must be strictly increasing".into()));
        }
        // The prefix must cover the delay spread or the wrapped taps have no
        // prefix sample to draw from. Zero padding has no such constraint in
        // per-frame simulation: a delay beyond the guard still lands inside
        // the lower-triangular N x N model, and inter-frame bleed is not
        // modelled here, so a guard shorter than the spread only changes the
        // power-boost factor.
        if self.config.prefix_mode == PrefixMode::CyclicPrefix
            && self.profile.max_delay() > self.config.guard_len
        {
            return Err(SimError::InvalidSpec(format!(
                "prefix length {} shorter than the delay spread {}",
                self.config.guard_len,
                self.profile.max_delay()
            )));
        }
        if self.profile.max_delay() >= self.config.n {
            return Err(SimError::InvalidSpec("delay spread must be below N".into()));
        }
        if self.frames_per_point.is_none() && self.target_bit_errors == 0 {
            return Err(SimError::InvalidSpec("target_bit_errors must be positive".into()));
        }
        for det in &self.detectors {
            match det {
                DetectorKind::Ml => {
                    let mut size: u128 = 1;
                    for _ in 0..self.config.n {
                        size = size.saturating_mul(self.modulation.order() as u128);
                    }
                    if size > ML_SEARCH_CAP {
                        return Err(SimError::CapExceeded(format!(
                            "ML search space {size} exceeds {ML_SEARCH_CAP}"
                        )));
                    }
                }
                DetectorKind::MmseBanded | DetectorKind::MrcTd(_) => {
                    if self.config.prefix_mode != PrefixMode::ZeroPad {
                        return Err(SimError::InvalidSpec(format!(
                            "{} requires the zero-padded mode",
                            det.label()
                        )));
                    }
                }
                DetectorKind::MmseConventional => {}
            }
        }
        Ok(())
    }
}

/// Accumulated statistics of one detector at one SNR point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SnrPoint {
    pub frames: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    /// Frames excluded because the detector reported a failure.
    pub failed_frames: u64,
    /// Frames on which the iterative detector hit its sweep cap without
    /// meeting the convergence threshold (still counted in the BER).
    pub nonconverged_frames: u64,
    pub total_mults: u64,
    pub total_adds: u64,
    pub total_iterations: u64,
}

impl SnrPoint {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }

    /// 95% Wilson score interval for the bit error probability.
    pub fn ci95(&self) -> (f64, f64) {
        wilson_ci(self.bit_errors, self.bits)
    }

    pub fn mean_mults(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.total_mults as f64 / self.frames as f64
        }
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.total_iterations as f64 / self.frames as f64
        }
    }

    fn merge(&mut self, other: &SnrPoint) {
        self.frames += other.frames;
        self.bits += other.bits;
        self.bit_errors += other.bit_errors;
        self.frame_errors += other.frame_errors;
        self.failed_frames += other.failed_frames;
        self.nonconverged_frames += other.nonconverged_frames;
        self.total_mults += other.total_mults;
        self.total_adds += other.total_adds;
        self.total_iterations += other.total_iterations;
    }
}

/// 95% Wilson score interval.
pub fn wilson_ci(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Per-detector BER curve over the SNR grid.
#[derive(Debug, Clone)]
pub struct BerCurve {
    pub detector: DetectorKind,
    pub snr_db: Vec<f64>,
    pub points: Vec<SnrPoint>,
}

/// Equal-total-transmit-power scaling between the guard flavours.
///
/// The prefix arm is the reference. In zero-padded mode the data samples are
/// scaled by `sqrt((N + guard) / N)` so both arms radiate the same energy per
/// frame; the returned factor `(N + guard) / N` is the per-symbol energy
/// boost the receiver side must account for (here: by scaling the channel
/// gains handed to the detectors, which is algebraically the same as scaling
/// the detector-side SNR by the factor).
pub fn normalize_power(frame: &[Complex64], config: &AfdmConfig) -> (Vec<Complex64>, f64) {
    let factor = config.energy_factor();
    if factor == 1.0 {
        return (frame.to_vec(), 1.0);
    }
    let amp = factor.sqrt();
    (frame.iter().map(|z| z * amp).collect(), factor)
}

/// Fixed trial batch: stopping decisions happen only at batch boundaries so
/// the simulated frame set never depends on the worker count.
const TRIAL_BATCH: u64 = 256;

struct TrialContext {
    spec: ExperimentSpec,
    op: DaftOperator,
    sigma2: f64,
    gamma_detector: f64,
    amp: f64,
    needs_af: bool,
    point_idx: u64,
}

#[derive(Clone, Default)]
struct BatchAccum {
    per_detector: Vec<SnrPoint>,
}

impl BatchAccum {
    fn new(n_det: usize) -> Self {
        Self { per_detector: vec![SnrPoint::default(); n_det] }
    }

    fn merge(mut self, other: BatchAccum) -> Self {
        if self.per_detector.is_empty() {
            return other;
        }
        if other.per_detector.is_empty() {
            return self;
        }
        for (a, b) in self.per_detector.iter_mut().zip(&other.per_detector) {
            a.merge(b);
        }
        self
    }
}

/// Counter-derived per-trial stream: mixes (master, point, trial) into a
/// 256-bit seed so streams never collide and scheduling cannot reorder draws.
fn trial_rng(master: u64, point: u64, trial: u64) -> ChaCha8Rng {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let words = [
        splitmix(master),
        splitmix(master ^ splitmix(point)),
        splitmix(master ^ splitmix(trial.wrapping_add(0xA5A5_A5A5))),
        splitmix(point ^ splitmix(trial)),
    ];
    let mut seed = [0u8; 32];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

fn run_trial(ctx: &TrialContext, trial: u64, acc: &mut BatchAccum) {
    let spec = &ctx.spec;
    let n = spec.config.n;
    let bps = spec.modulation.bits_per_symbol();
    let mut rng = trial_rng(spec.master_seed, ctx.point_idx, trial);

    // Source bits and symbol indices.
    let tx_indices: Vec<usize> = (0..n)
        .map(|_| {
            let mut idx = 0usize;
            for _ in 0..bps {
                idx = (idx << 1) | usize::from(rng.gen::<bool>());
            }
            idx
        })
        .collect();
    let x: Vec<Complex64> = tx_indices.iter().map(|&k| spec.modulation.points()[k]).collect();

    // Transmit chain.
    let mut scratch = OpCounter::new();
    let s = ctx.op.idaft(&x, &mut scratch);
    let frame = assemble_frame(&s, &spec.config);
    let (tx_frame, _) = normalize_power(&frame, &spec.config);

    // Channel and noise.
    let real = sample_realization(&spec.profile, &mut rng);
    let rx_full = apply_channel(&tx_frame, &real, &spec.config, ctx.sigma2, &mut rng);
    let rx = extract_data_block(&rx_full, &spec.config);

    // Detector-side channel: the power boost rides on the gains.
    let real_det =
        if ctx.amp == 1.0 { real } else { real.with_gain_scale(ctx.amp) };
    let h = build_td_matrix(&real_det, &spec.config).expect("validated delays");

    // Shared affine-frequency view for ML / conventional MMSE.
    let (y, h_eff) = if ctx.needs_af {
        let y = ctx.op.daft(&rx, &mut scratch);
        let h_eff = effective_matrix(&h, &ctx.op, &mut scratch);
        (y, h_eff)
    } else {
        (Vec::new(), DenseMatrix::zeros(0, 0))
    };

    for (det_idx, det) in spec.detectors.iter().enumerate() {
        let result = match det {
            DetectorKind::Ml => detect_ml(&y, &h_eff, spec.modulation.points()),
            DetectorKind::MmseConventional => {
                detect_mmse_conventional(&y, &h_eff, ctx.gamma_detector, spec.modulation.points())
            }
            DetectorKind::MmseBanded => {
                detect_mmse_banded(&rx, &h, ctx.gamma_detector, &ctx.op, spec.modulation.points())
            }
            DetectorKind::MrcTd(params) => detect_mrc_td(
                &rx,
                &h,
                ctx.gamma_detector,
                params,
                &ctx.op,
                spec.modulation.points(),
            ),
        };
        let slot = &mut acc.per_detector[det_idx];
        match result {
            Ok(res) => {
                let mut errs = 0u64;
                for (&tx_idx, &rx_idx) in tx_indices.iter().zip(&res.hard_symbols) {
                    errs += u64::from(spec.modulation.bit_distance(tx_idx, rx_idx));
                }
                slot.frames += 1;
                slot.bits += (n * bps) as u64;
                slot.bit_errors += errs;
                slot.frame_errors += u64::from(errs > 0);
                slot.nonconverged_frames += u64::from(!res.converged);
                slot.total_mults += res.ops.complex_mults;
                slot.total_adds += res.ops.complex_adds;
                slot.total_iterations += res.iterations_used.unwrap_or(0) as u64;
            }
            Err(_) => {
                // Excluded from the error statistics but never dropped
                // silently.
                slot.failed_frames += 1;
            }
        }
    }
}

/// Runs the Monte-Carlo sweep; returns one curve per detector, in the order
/// of `spec.detectors`. `workers` only sets the thread count.
pub fn run_ber_sweep(spec: &ExperimentSpec, workers: usize) -> Result<Vec<BerCurve>, SimError> {
    spec.validate()?;
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::InvalidSpec(format!("thread pool: {e}")))?;

    let n_det = spec.detectors.len();
    let needs_af = spec
        .detectors
        .iter()
        .any(|d| matches!(d, DetectorKind::Ml | DetectorKind::MmseConventional));
    let energy_factor = spec.config.energy_factor();

    let mut curves: Vec<BerCurve> = spec
        .detectors
        .iter()
        .map(|&detector| BerCurve { detector, snr_db: spec.snr_grid_db.clone(), points: Vec::new() })
        .collect();

    for (point_idx, &snr_db) in spec.snr_grid_db.iter().enumerate() {
        let gamma_ref = 10f64.powf(snr_db / 10.0);
        let ctx = TrialContext {
            spec: spec.clone(),
            op: DaftOperator::new(&spec.config),
            sigma2: 1.0 / gamma_ref,
            gamma_detector: gamma_ref,
            amp: energy_factor.sqrt(),
            needs_af,
            point_idx: point_idx as u64,
        };

        let mut totals = BatchAccum::new(n_det);
        let mut next_trial = 0u64;
        loop {
            let frame_cap = spec.frames_per_point.unwrap_or(spec.max_frames_per_point);
            if next_trial >= frame_cap {
                break;
            }
            if spec.frames_per_point.is_none() {
                let all_done = totals
                    .per_detector
                    .iter()
                    .all(|p| p.bit_errors >= spec.target_bit_errors);
                if next_trial > 0 && all_done {
                    break;
                }
            }
            let batch = TRIAL_BATCH.min(frame_cap - next_trial);
            let start = next_trial;
            let batch_acc = if workers == 1 {
                let mut acc = BatchAccum::new(n_det);
                for t in start..start + batch {
                    run_trial(&ctx, t, &mut acc);
                }
                acc
            } else {
                pool.install(|| {
                    (start..start + batch)
                        .into_par_iter()
                        .fold(
                            || BatchAccum::new(n_det),
                            |mut acc, t| {
                                run_trial(&ctx, t, &mut acc);
                                acc
                            },
                        )
                        .reduce(|| BatchAccum::new(n_det), BatchAccum::merge)
                })
            };
            totals = totals.merge(batch_acc);
            next_trial += batch;
        }

        for (det_idx, curve) in curves.iter_mut().enumerate() {
            curve.points.push(totals.per_detector[det_idx]);
        }
    }
    Ok(curves)
}

/// One row of the complexity census.
#[derive(Debug, Clone)]
pub struct CensusRow {
    pub n: usize,
    pub detector: &'static str,
    pub mean_mults: f64,
}

/// Measures mean multiplication counts of the three MMSE-grade detectors on
/// random zero-padded instances with delay spread `q` at the given SNR.
pub fn run_complexity_census(
    n_grid: &[usize],
    q: usize,
    mrc: crate::detectors::MrcTdParams,
    gamma_db: f64,
    instances: usize,
    seed: u64,
) -> Result<Vec<CensusRow>, SimError> {
    let gamma = 10f64.powf(gamma_db / 10.0);
    let mut rows = Vec::new();
    for &n in n_grid {
        assert!(q < n, "census requires q < n");
        let config = AfdmConfig::with_default_chirps(n, q, PrefixMode::ZeroPad, 1.0);
        let profile = ChannelProfile::consecutive(q + 1, 1.0);
        let op = DaftOperator::new(&config);
        let modulation = ModulationScheme::new(crate::modulation::ModulationKind::Qpsk);
        let mut sums = [0u64; 3];
        for inst in 0..instances {
            let mut rng = trial_rng(seed, n as u64, inst as u64);
            let idx: Vec<usize> =
                (0..n).map(|_| rng.gen_range(0..modulation.order())).collect();
            let x: Vec<Complex64> = idx.iter().map(|&k| modulation.points()[k]).collect();
            let mut scratch = OpCounter::new();
            let s = op.idaft(&x, &mut scratch);
            let real = sample_realization(&profile, &mut rng);
            let h = build_td_matrix(&real, &config)?;
            let mut r = h.mul_vec(&s, &mut scratch);
            let sigma = (0.5 / gamma).sqrt();
            let normal = rand_distr::Normal::new(0.0, sigma).expect("valid std");
            use rand_distr::Distribution;
            for z in &mut r {
                *z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }

            let y = op.daft(&r, &mut scratch);
            let h_eff = effective_matrix(&h, &op, &mut scratch);
            let conv =
                detect_mmse_conventional(&y, &h_eff, gamma, modulation.points())?;
            let banded = detect_mmse_banded(&r, &h, gamma, &op, modulation.points())?;
            let mrc_res = detect_mrc_td(&r, &h, gamma, &mrc, &op, modulation.points())?;
            sums[0] += conv.ops.complex_mults;
            sums[1] += banded.ops.complex_mults;
            sums[2] += mrc_res.ops.complex_mults;
        }
        for (k, label) in ["mmse_conventional", "mmse_banded", "mrc_td"].iter().enumerate() {
            rows.push(CensusRow {
                n,
                detector: label,
                mean_mults: sums[k] as f64 / instances as f64,
            });
        }
    }
    Ok(rows)
}

/// Helper shared by the census consumers: least-squares slope of
/// `ln(mean_mults)` against `ln(n)` for one detector.
pub fn census_loglog_slope(rows: &[CensusRow], detector: &str) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.detector == detector)
        .map(|r| ((r.n as f64).ln(), r.mean_mults.ln()))
        .collect();
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - xm).powi(2)).sum::<f64>()
}

/// Kept-sample helper used by chain tests: returns the TD channel the
/// detector side sees for a realization under the experiment's power rule.
pub fn detector_side_channel(
    real: &crate::channel::ChannelRealization,
    config: &AfdmConfig,
) -> Result<TdChannelMatrix, ChannelError> {
    let amp = config.energy_factor().sqrt();
    let scaled = if amp == 1.0 { real.clone() } else { real.with_gain_scale(amp) };
    build_td_matrix(&scaled, config)
}
