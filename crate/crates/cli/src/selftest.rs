//! Built-in release gate: oracle-equivalence and fixed-point checks at small
//! N, one pass/fail line each, plus a negative control and a worker-count
//! determinism check on real CSV output.

use crate::commands::{cmd_ber_sim, OutputNaming};
use crate::config::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::TAU;
use zp_afdm::analysis::{ml_union_bound, ml_union_bound_naive};
use zp_afdm::channel::{
    apply_channel, build_td_matrix, effective_matrix, sample_realization, subchannel_matrix,
    ChannelProfile,
};
use zp_afdm::detectors::{detect_mmse_banded, detect_mmse_conventional, detect_mrc_td, MrcTdParams};
use zp_afdm::modulation::{ModulationKind, ModulationScheme};
use zp_afdm::numerics::{
    backward_substitution, banded_cholesky, erfc, forward_substitution, hermitian_eigenvalues,
    max_abs_diff, q_function_approx, BandedHermitianMatrix, DenseMatrix, OpCounter,
};
use zp_afdm::simulator::ExperimentSpec;
use zp_afdm::waveform::{assemble_frame, extract_data_block, AfdmConfig, DaftOperator, PrefixMode};
use zp_afdm::Complex64;

type CheckResult = Result<(), String>;

fn ensure(cond: bool, msg: impl Into<String>) -> CheckResult {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn dense_daft(config: &AfdmConfig) -> DenseMatrix {
    let n = config.n;
    DenseMatrix::from_fn(n, n, |p, m| {
        let ang = -TAU
            * (config.c2 * (p * p) as f64 + (p * m) as f64 / n as f64 + config.c1 * (m * m) as f64);
        Complex64::from_polar(1.0 / (n as f64).sqrt(), ang)
    })
}

fn check_daft_unitarity() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    for &n in &[6usize, 8, 16, 64] {
        let config = AfdmConfig::with_default_chirps(n, 0, PrefixMode::ZeroPad, 1.0);
        let op = DaftOperator::new(&config);
        let v = random_vec(n, &mut rng);
        let rt = op.daft(&op.idaft(&v, &mut OpCounter::new()), &mut OpCounter::new());
        let err = max_abs_diff(&rt, &v);
        ensure(err <= 1e-10, format!("round trip error {err} at n={n}"))?;
    }
    Ok(())
}

fn check_daft_matches_dense() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let config = AfdmConfig::with_default_chirps(16, 0, PrefixMode::ZeroPad, 1.0);
    let op = DaftOperator::new(&config);
    let a = dense_daft(&config);
    let v = random_vec(16, &mut rng);
    let got = op.daft(&v, &mut OpCounter::new());
    let want = a.mul_vec(&v, &mut OpCounter::new());
    let err = max_abs_diff(&got, &want);
    ensure(err <= 1e-10, format!("dense mismatch {err}"))
}

fn check_subchannel_grid() -> CheckResult {
    // Closed-form entries against the constructive A Delta Pi A^H product
    // over complete N = 16 grids, including a geometry whose zeta phase sits
    // on multiples of 2 pi.
    for &(l, nu, c1) in &[(1usize, 0.37, 3.0 / 32.0), (3, -0.82, 5.0 / 32.0), (1, -1.0, 1.0 / 32.0)] {
        let config = AfdmConfig::new(16, l, PrefixMode::ZeroPad, c1, 1.0 / 512.0);
        let a = dense_daft(&config);
        let delta = DenseMatrix::from_fn(16, 16, |i, j| {
            if i == j {
                Complex64::from_polar(1.0, -TAU * nu * i as f64 / 16.0)
            } else {
                Complex64::default()
            }
        });
        let pi = DenseMatrix::from_fn(16, 16, |i, j| {
            if i >= l && j == i - l {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        });
        let mut ops = OpCounter::new();
        let want = a.mul(&delta, &mut ops).mul(&pi, &mut ops).mul(&a.hermitian(), &mut ops);
        let got = subchannel_matrix(l, nu, &config);
        let err = got.max_abs_diff(&want);
        ensure(err <= 1e-9, format!("grid error {err} at l={l} nu={nu}"))?;
    }
    Ok(())
}

fn random_banded_pd(n: usize, q: usize, rng: &mut impl Rng) -> BandedHermitianMatrix {
    let mut rows = vec![vec![Complex64::default(); n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate().take(i + 1) {
            if i - j <= q {
                *slot = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
    }
    // Gram of a banded lower-triangular plus a ridge: positive definite with
    // half-bandwidth q.
    let mut psi = BandedHermitianMatrix::zeros(n, q);
    for i in 0..n {
        for j in i.saturating_sub(q)..=i {
            let mut acc = Complex64::default();
            for p in 0..n {
                acc += rows[i][p] * rows[j][p].conj();
            }
            if i == j {
                acc += Complex64::new(2.0, 0.0);
            }
            psi.set_lower(i, j, acc);
        }
    }
    psi
}

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

fn check_banded_cholesky_oracle() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let psi = random_banded_pd(32, 4, &mut rng);
    let l = banded_cholesky(&psi, &mut OpCounter::new()).map_err(|e| e.to_string())?;
    let want = dense_cholesky_oracle(&psi.to_dense());
    let ld = l.to_dense();
    let mut err = 0.0_f64;
    for i in 0..32 {
        for j in 0..32 {
            err = err.max((ld[i][j] - want[i][j]).norm());
        }
    }
    ensure(err <= 1e-9, format!("factor deviates from dense oracle by {err}"))
}

fn check_banded_solve_residual() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let psi = random_banded_pd(48, 6, &mut rng);
    let l = banded_cholesky(&psi, &mut OpCounter::new()).map_err(|e| e.to_string())?;
    let b = random_vec(48, &mut rng);
    let z = forward_substitution(&l, &b, &mut OpCounter::new()).map_err(|e| e.to_string())?;
    let s = backward_substitution(&l, &z, &mut OpCounter::new()).map_err(|e| e.to_string())?;
    let recon = psi.mul_vec(&s, &mut OpCounter::new());
    let bmax = b.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    let err = max_abs_diff(&recon, &b);
    ensure(err <= 1e-8 * bmax, format!("solve residual {err}"))
}

fn check_eigen_trace_det() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let phi = DenseMatrix::from_fn(6, 3, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let theta = phi.gram(&mut OpCounter::new());
    let eigs = hermitian_eigenvalues(&theta).map_err(|e| e.to_string())?;
    let trace: f64 = (0..3).map(|i| theta.get(i, i).re).sum();
    let sum: f64 = eigs.iter().sum();
    ensure((sum - trace).abs() <= 1e-9 * trace, format!("trace mismatch {sum} vs {trace}"))?;
    let m = |i: usize, j: usize| theta.get(i, j);
    let det = (m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
        - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)))
    .re;
    let prod: f64 = eigs.iter().product();
    ensure((prod - det).abs() <= 1e-8 * det.abs().max(1.0), format!("det mismatch {prod} vs {det}"))
}

fn check_union_bound_grouping() -> CheckResult {
    let config = AfdmConfig::with_default_chirps(3, 1, PrefixMode::ZeroPad, 1.0);
    let bpsk = ModulationScheme::new(ModulationKind::Bpsk);
    let geometry = [(0usize, 0.42), (1usize, -0.9)];
    for gamma in [1.0, 31.6] {
        let grouped = ml_union_bound(&config, &geometry, &bpsk, gamma).map_err(|e| e.to_string())?;
        let naive =
            ml_union_bound_naive(&config, &geometry, &bpsk, gamma).map_err(|e| e.to_string())?;
        ensure(
            (grouped - naive).abs() <= 1e-12,
            format!("grouped {grouped} vs naive {naive} at gamma {gamma}"),
        )?;
    }
    Ok(())
}

fn check_gray_mapping() -> CheckResult {
    for kind in [ModulationKind::Bpsk, ModulationKind::Qpsk, ModulationKind::Qam16] {
        let m = ModulationScheme::new(kind);
        let bps = m.bits_per_symbol();
        for idx in 0..m.order() {
            let bits: Vec<u8> = (0..bps).rev().map(|k| ((idx >> k) & 1) as u8).collect();
            let mapped = m.map_bits(&bits);
            ensure(mapped[0] == m.points()[idx], format!("{kind:?}: map({idx}) mismatch"))?;
            ensure(m.demap_symbols(&[idx]) == bits, format!("{kind:?}: demap({idx}) mismatch"))?;
        }
        let pts = m.points();
        let min_dist = (0..pts.len())
            .flat_map(|a| (0..pts.len()).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b)
            .map(|(a, b)| (pts[a] - pts[b]).norm())
            .fold(f64::INFINITY, f64::min);
        for a in 0..pts.len() {
            for b in 0..pts.len() {
                if a != b && (pts[a] - pts[b]).norm() < min_dist * 1.001 {
                    ensure(
                        m.bit_distance(a, b) == 1,
                        format!("{kind:?}: neighbours {a},{b} differ in more than one bit"),
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn check_model_consistency() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    for mode in [PrefixMode::ZeroPad, PrefixMode::CyclicPrefix] {
        let config = AfdmConfig::with_default_chirps(32, 3, mode, 1.0);
        let profile = ChannelProfile::consecutive(4, 1.0);
        let real = sample_realization(&profile, &mut rng);
        let s = random_vec(32, &mut rng);
        let frame = assemble_frame(&s, &config);
        let rx = apply_channel(&frame, &real, &config, 0.0, &mut rng);
        let kept = extract_data_block(&rx, &config);
        let h = build_td_matrix(&real, &config).map_err(|e| e.to_string())?;
        let want = h.mul_vec(&s, &mut OpCounter::new());
        let err = max_abs_diff(&kept, &want);
        ensure(err <= 1e-12, format!("convolution vs matrix {err} in {mode:?}"))?;
    }
    Ok(())
}

/// Shared helper: one random zero-padded instance and both MMSE routes.
fn mmse_pair(seed: u64) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let config = AfdmConfig::with_default_chirps(64, 8, PrefixMode::ZeroPad, 1.0);
    let profile = ChannelProfile::consecutive(9, 1.0);
    let real = sample_realization(&profile, &mut rng);
    let h = build_td_matrix(&real, &config).expect("valid delays");
    let op = DaftOperator::new(&config);
    let qpsk = ModulationScheme::new(ModulationKind::Qpsk);
    let x: Vec<Complex64> = (0..64).map(|_| qpsk.points()[rng.gen_range(0..4)]).collect();
    let s = op.idaft(&x, &mut OpCounter::new());
    let mut r = h.mul_vec(&s, &mut OpCounter::new());
    for z in &mut r {
        *z += Complex64::new(0.1 * rng.gen_range(-1.0..1.0), 0.1 * rng.gen_range(-1.0..1.0));
    }
    let banded = detect_mmse_banded(&r, &h, 10.0, &op, qpsk.points()).expect("banded");
    let y = op.daft(&r, &mut OpCounter::new());
    let h_eff = effective_matrix(&h, &op, &mut OpCounter::new());
    let conv = detect_mmse_conventional(&y, &h_eff, 10.0, qpsk.points()).expect("conventional");
    (banded.soft_estimate, conv.soft_estimate)
}

fn check_banded_equals_conventional() -> CheckResult {
    let (banded, conv) = mmse_pair(7);
    let err = max_abs_diff(&banded, &conv);
    ensure(err <= 1e-8, format!("banded vs conventional deviation {err}"))
}

fn check_negative_control() -> CheckResult {
    // Corrupt one Cholesky factor entry and demand that the reconstruction
    // check notices; guards the checks themselves against going silent.
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let psi = random_banded_pd(16, 3, &mut rng);
    let mut l = banded_cholesky(&psi, &mut OpCounter::new()).map_err(|e| e.to_string())?;
    l.set(5, 4, l.get(5, 4) + Complex64::new(1e-3, 0.0));
    let ld = l.to_dense();
    let mut err = 0.0_f64;
    for i in 0..16 {
        for j in 0..16 {
            let mut rec = Complex64::default();
            for p in 0..16 {
                rec += ld[i][p] * ld[j][p].conj();
            }
            err = err.max((rec - psi.get(i, j)).norm());
        }
    }
    ensure(err > 1e-9, format!("perturbed factor went unnoticed (err {err})"))
}

fn check_mrc_fixed_point() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let config = AfdmConfig::with_default_chirps(32, 3, PrefixMode::ZeroPad, 1.0);
    let profile = ChannelProfile::consecutive(4, 1.0);
    let op = DaftOperator::new(&config);
    let qpsk = ModulationScheme::new(ModulationKind::Qpsk);
    let mut fired = 0;
    for _ in 0..10 {
        let real = sample_realization(&profile, &mut rng);
        let h = build_td_matrix(&real, &config).map_err(|e| e.to_string())?;
        let x: Vec<Complex64> = (0..32).map(|_| qpsk.points()[rng.gen_range(0..4)]).collect();
        let s = op.idaft(&x, &mut OpCounter::new());
        let mut r = h.mul_vec(&s, &mut OpCounter::new());
        for z in &mut r {
            *z += Complex64::new(0.2 * rng.gen_range(-1.0..1.0), 0.2 * rng.gen_range(-1.0..1.0));
        }
        let params = MrcTdParams { max_iterations: 150, epsilon: 1e-10, literal_dn_count: false };
        let det = detect_mrc_td(&r, &h, 10.0, &params, &op, qpsk.points()).map_err(|e| e.to_string())?;
        if !det.converged {
            continue;
        }
        fired += 1;
        let st = op.idaft(&det.soft_estimate, &mut OpCounter::new());
        let hd = h.to_dense();
        let hs = hd.mul_vec(&st, &mut OpCounter::new());
        let mut worst = 0.0_f64;
        for i in 0..32 {
            let mut lhs = st[i] / 10.0;
            let mut rhs = Complex64::default();
            for p in 0..32 {
                lhs += hd.get(p, i).conj() * hs[p];
                rhs += hd.get(p, i).conj() * r[p];
            }
            worst = worst.max((lhs - rhs).norm());
        }
        ensure(worst <= 1e-8, format!("fixed-point residual {worst}"))?;
    }
    ensure(fired >= 3, format!("threshold fired on only {fired}/10 draws"))
}

fn check_scalar_functions() -> CheckResult {
    ensure((q_function_approx(0.0) - 1.0 / 3.0).abs() < 1e-15, "q(0) != 1/3")?;
    ensure(erfc(0.0) == 1.0, "erfc(0) != 1")?;
    ensure((erfc(1.0) - 0.157_299_207_050_285_13).abs() <= 1e-12, "erfc(1) off")?;
    ensure((erfc(-1.5) - (2.0 - erfc(1.5))).abs() <= 1e-12, "reflection identity off")
}

fn check_worker_determinism(scratch: &std::path::Path) -> CheckResult {
    // The same experiment emitted with 1 and 4 workers must produce
    // byte-identical CSV files (the manifest timestamp is injected).
    let entries = "waveform.n = 8\nwaveform.guard_len = 2\nchannel.paths = 3\n\
                   sim.snr_db = 0,6\nsim.frames_per_point = 400\n\
                   arm.zp_afdm.detectors = mmse_banded,mrc_td\n";
    std::fs::create_dir_all(scratch).map_err(|e| e.to_string())?;
    let cfg_path = scratch.join("selftest.cfg");
    std::fs::write(&cfg_path, entries).map_err(|e| e.to_string())?;
    let cfg = RunConfig::load(&cfg_path, &[]).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for (label, workers) in [("w1", 1usize), ("w4", 4usize)] {
        let dir = scratch.join(label);
        let naming = OutputNaming { dir: &dir, stem: "det", timestamp_unix: 0 };
        let files = cmd_ber_sim(&cfg, &naming, workers).map_err(|e| e.to_string())?;
        let mut all = Vec::new();
        for f in files {
            all.push(std::fs::read(f).map_err(|e| e.to_string())?);
        }
        bytes.push(all);
    }
    ensure(bytes[0] == bytes[1], "CSV output depends on the worker count")
}

fn check_experiment_spec_guard() -> CheckResult {
    // The prefix arm must reject a guard below the delay spread.
    let cfgd = AfdmConfig::with_default_chirps(16, 1, PrefixMode::CyclicPrefix, 1.0);
    let spec = ExperimentSpec {
        config: cfgd,
        profile: ChannelProfile::consecutive(3, 1.0),
        modulation: ModulationScheme::new(ModulationKind::Qpsk),
        detectors: vec![zp_afdm::detectors::DetectorKind::MmseConventional],
        snr_grid_db: vec![0.0],
        frames_per_point: Some(1),
        target_bit_errors: 1,
        max_frames_per_point: 1,
        master_seed: 0,
    };
    ensure(spec.validate().is_err(), "undersized prefix accepted")
}

/// Runs all checks; returns (name, result) pairs.
pub fn run_selftest(scratch: &std::path::Path) -> Vec<(&'static str, CheckResult)> {
    vec![
        ("daft_unitarity", check_daft_unitarity()),
        ("daft_vs_dense_operator", check_daft_matches_dense()),
        ("subchannel_closed_form_grid", check_subchannel_grid()),
        ("banded_cholesky_vs_dense_oracle", check_banded_cholesky_oracle()),
        ("banded_solve_residual", check_banded_solve_residual()),
        ("eigenvalues_trace_determinant", check_eigen_trace_det()),
        ("union_bound_grouped_vs_naive", check_union_bound_grouping()),
        ("gray_mapping_bijection", check_gray_mapping()),
        ("convolution_vs_matrix_model", check_model_consistency()),
        ("banded_equals_conventional_mmse", check_banded_equals_conventional()),
        ("mrc_td_fixed_point", check_mrc_fixed_point()),
        ("scalar_special_functions", check_scalar_functions()),
        ("cholesky_perturbation_detected", check_negative_control()),
        ("worker_count_determinism", check_worker_determinism(scratch)),
        ("prefix_guard_validation", check_experiment_spec_guard()),
    ]
}
