//! Subcommand implementations: BER sweeps, analytical curves, the
//! complexity census and the gnuplot emitter.

use crate::config::{fmt_f64, RunConfig, TheoryMode};
use crate::csvout::{cell, CsvDoc};
use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::{Path, PathBuf};
use zp_afdm::analysis::{mmse_theoretical_ber_profile, PreparedUnionBound};
use zp_afdm::channel::sample_realization;
use zp_afdm::simulator::{census_loglog_slope, run_ber_sweep, run_complexity_census};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const BER_COLUMNS: &[&str] = &[
    "snr_db",
    "bits",
    "bit_errors",
    "ber",
    "ci_low",
    "ci_high",
    "mean_mults",
    "mean_iters",
    "frames",
    "frame_errors",
    "failed_frames",
    "nonconverged_frames",
];

pub const THEORY_COLUMNS: &[&str] = &["snr_db", "bound_or_ber", "std_err", "mode", "raw_value"];

pub const COMPLEXITY_COLUMNS: &[&str] = &["n", "detector", "mean_mults"];

pub struct OutputNaming<'a> {
    pub dir: &'a Path,
    pub stem: &'a str,
    pub timestamp_unix: u64,
}

/// Runs every configured arm and emits one CSV per (arm, detector).
/// Returns the list of written files.
pub fn cmd_ber_sim(cfg: &RunConfig, naming: &OutputNaming, workers: usize) -> Result<Vec<PathBuf>> {
    if cfg.snr_db.is_empty() {
        bail!("sim.snr_db is required for ber-sim");
    }
    let mut written = Vec::new();
    for (arm, detectors) in &cfg.arms {
        let spec = cfg.experiment(*arm, detectors);
        spec.validate().map_err(anyhow::Error::from)?;
        let curves = run_ber_sweep(&spec, workers).map_err(anyhow::Error::from)?;
        for curve in &curves {
            let manifest = cfg.manifest_lines("ber-sim", Some(*arm), Some(curve.detector.label()));
            let mut doc = CsvDoc::new(BER_COLUMNS, &manifest, TOOL_VERSION, naming.timestamp_unix);
            for (snr, pt) in curve.snr_db.iter().zip(&curve.points) {
                let (lo, hi) = pt.ci95();
                doc.push_row(vec![
                    cell(*snr),
                    pt.bits.to_string(),
                    pt.bit_errors.to_string(),
                    cell(pt.ber()),
                    cell(lo),
                    cell(hi),
                    cell(pt.mean_mults()),
                    cell(pt.mean_iterations()),
                    pt.frames.to_string(),
                    pt.frame_errors.to_string(),
                    pt.failed_frames.to_string(),
                    pt.nonconverged_frames.to_string(),
                ]);
            }
            let path = naming.dir.join(format!(
                "{}_{}_{}.csv",
                naming.stem,
                arm.name(),
                curve.detector.label()
            ));
            doc.write_atomic(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Analytical curves: the Doppler-averaged ML union bound (zero-padded arms)
/// or the realization-averaged MMSE SINR closed form, one CSV per arm.
pub fn cmd_ber_theory(cfg: &RunConfig, naming: &OutputNaming) -> Result<Vec<PathBuf>> {
    if cfg.snr_db.is_empty() {
        bail!("sim.snr_db is required for ber-theory");
    }
    let mut written = Vec::new();
    for (arm, _) in &cfg.arms {
        let config = cfg.afdm_config(*arm);
        let profile = cfg.profile();
        let scheme = cfg.scheme();
        let boost = config.energy_factor();

        let mut doc = CsvDoc::new(
            THEORY_COLUMNS,
            &cfg.manifest_lines("ber-theory", Some(*arm), None),
            TOOL_VERSION,
            naming.timestamp_unix,
        );
        match cfg.theory_mode {
            TheoryMode::MlBound => {
                if config.prefix_mode != zp_afdm::waveform::PrefixMode::ZeroPad {
                    bail!("theory.mode = ml_bound applies to zero-padded arms only");
                }
                // Average the bound over Jakes Doppler draws; the Rayleigh
                // gain average is analytic inside the PEP.
                let mut rng = ChaCha12Rng::seed_from_u64(cfg.master_seed);
                let mut prepared = Vec::with_capacity(cfg.theory_doppler_draws);
                for _ in 0..cfg.theory_doppler_draws {
                    let real = sample_realization(&profile, &mut rng);
                    let geometry: Vec<(usize, f64)> =
                        real.paths.iter().map(|t| (t.delay, t.doppler)).collect();
                    prepared.push(
                        PreparedUnionBound::new(&config, &geometry, &scheme)
                            .map_err(anyhow::Error::from)?,
                    );
                }
                for &db in &cfg.snr_db {
                    let gamma_eff = 10f64.powf(db / 10.0) * boost;
                    let vals: Vec<f64> = prepared.iter().map(|p| p.bound(gamma_eff)).collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let std_err = if vals.len() > 1 {
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                            / (vals.len() as f64 - 1.0);
                        (var / vals.len() as f64).sqrt()
                    } else {
                        0.0
                    };
                    doc.push_row(vec![
                        cell(db),
                        cell(mean.min(1.0)),
                        cell(std_err),
                        "ml_bound".into(),
                        cell(mean),
                    ]);
                }
            }
            TheoryMode::MmseSinr => {
                for &db in &cfg.snr_db {
                    let gamma = 10f64.powf(db / 10.0);
                    let (mean, std_err) = mmse_theoretical_ber_profile(
                        &config,
                        &profile,
                        gamma,
                        cfg.modulation,
                        cfg.theory_realizations,
                        cfg.master_seed,
                    )
                    .map_err(anyhow::Error::from)?;
                    doc.push_row(vec![
                        cell(db),
                        cell(mean.min(1.0)),
                        cell(std_err),
                        "mmse_sinr".into(),
                        cell(mean),
                    ]);
                }
            }
        }
        let path = naming.dir.join(format!(
            "{}_theory_{}_{}.csv",
            naming.stem,
            cfg.theory_mode.name(),
            arm.name()
        ));
        doc.write_atomic(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Mean multiplication counts of the three detector flows over the N grid,
/// with fitted log-log slopes in the footer.
pub fn cmd_complexity(cfg: &RunConfig, naming: &OutputNaming) -> Result<Vec<PathBuf>> {
    let rows = run_complexity_census(
        &cfg.complexity_n_list,
        cfg.complexity_q,
        zp_afdm::detectors::MrcTdParams {
            max_iterations: cfg.complexity_k,
            ..Default::default()
        },
        cfg.complexity_gamma_db,
        cfg.complexity_instances,
        cfg.master_seed,
    )
    .map_err(anyhow::Error::from)?;

    let mut doc = CsvDoc::new(
        COMPLEXITY_COLUMNS,
        &cfg.manifest_lines("complexity", None, None),
        TOOL_VERSION,
        naming.timestamp_unix,
    );
    for row in &rows {
        doc.push_row(vec![row.n.to_string(), row.detector.to_string(), cell(row.mean_mults)]);
    }
    for det in ["mmse_conventional", "mmse_banded", "mrc_td"] {
        doc.push_footer(&format!("loglog_slope.{det}"), fmt_f64(census_loglog_slope(&rows, det)));
    }
    let path = naming.dir.join(format!("{}_complexity.csv", naming.stem));
    doc.write_atomic(&path)?;
    Ok(vec![path])
}

/// Emits a gnuplot script plotting the BER columns of the given CSV files.
pub fn emit_gnuplot(outputs: &[PathBuf], script_path: &Path) -> Result<()> {
    let mut body = String::from(
        "set datafile commentschars '#'\nset datafile separator ','\n\
         set logscale y\nset grid\nset xlabel 'SNR (dB)'\nset ylabel 'BER'\nplot \\\n",
    );
    let plots: Vec<String> = outputs
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            format!("  '{}' using 1:4 with linespoints title '{}'", p.display(), name.replace('_', " "))
        })
        .collect();
    body.push_str(&plots.join(", \\\n"));
    body.push('\n');
    std::fs::write(script_path, body)
        .with_context(|| format!("writing {}", script_path.display()))?;
    Ok(())
}
