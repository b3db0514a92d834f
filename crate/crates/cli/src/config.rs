//! Flat key/value experiment configs with dotted sections.
//!
//! The format is line-oriented: `key = value`, `#` comments, blank lines
//! ignored. Unknown keys are hard errors so manifests and configs stay in
//! one-to-one correspondence.

use anyhow::{anyhow, bail, Context, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use zp_afdm::channel::ChannelProfile;
use zp_afdm::detectors::{DetectorKind, MrcTdParams};
use zp_afdm::modulation::{ModulationKind, ModulationScheme};
use zp_afdm::simulator::ExperimentSpec;
use zp_afdm::waveform::{default_chirp_params, AfdmConfig, PrefixMode};

pub const KNOWN_KEYS: &[&str] = &[
    "waveform.n",
    "waveform.guard_len",
    "waveform.c1",
    "waveform.c2",
    "channel.paths",
    "channel.nu_max",
    "channel.delays",
    "modulation",
    "arms",
    "arm.zp_afdm.detectors",
    "arm.cpp_afdm.detectors",
    "arm.zp_ofdm.detectors",
    "arm.cp_ofdm.detectors",
    "detector.mrc_td.k",
    "detector.mrc_td.epsilon",
    "sim.snr_db",
    "sim.target_bit_errors",
    "sim.frames_per_point",
    "sim.max_frames_per_point",
    "sim.master_seed",
    "theory.mode",
    "theory.realizations",
    "theory.doppler_draws",
    "complexity.n_list",
    "complexity.q",
    "complexity.k",
    "complexity.gamma_db",
    "complexity.instances",
];

/// One transmit arm: guard flavour plus whether the chirps are zeroed
/// (the OFDM baselines).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    ZpAfdm,
    CppAfdm,
    ZpOfdm,
    CpOfdm,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::ZpAfdm => "zp_afdm",
            Arm::CppAfdm => "cpp_afdm",
            Arm::ZpOfdm => "zp_ofdm",
            Arm::CpOfdm => "cp_ofdm",
        }
    }

    pub fn prefix_mode(self) -> PrefixMode {
        match self {
            Arm::ZpAfdm | Arm::ZpOfdm => PrefixMode::ZeroPad,
            Arm::CppAfdm | Arm::CpOfdm => PrefixMode::CyclicPrefix,
        }
    }

    pub fn is_ofdm(self) -> bool {
        matches!(self, Arm::ZpOfdm | Arm::CpOfdm)
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "zp_afdm" => Arm::ZpAfdm,
            "cpp_afdm" => Arm::CppAfdm,
            "zp_ofdm" => Arm::ZpOfdm,
            "cp_ofdm" => Arm::CpOfdm,
            other => bail!("unknown arm `{other}`"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoryMode {
    MlBound,
    MmseSinr,
}

impl TheoryMode {
    pub fn name(self) -> &'static str {
        match self {
            TheoryMode::MlBound => "ml_bound",
            TheoryMode::MmseSinr => "mmse_sinr",
        }
    }
}

/// Fully resolved experiment description: every default materialized.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: usize,
    pub guard_len: usize,
    pub c1: f64,
    pub c2: f64,
    pub c1_was_auto: bool,
    pub c2_was_auto: bool,
    pub paths: usize,
    pub nu_max: f64,
    pub delays: Vec<usize>,
    pub modulation: ModulationKind,
    pub arms: Vec<(Arm, Vec<DetectorKind>)>,
    pub mrc_params: MrcTdParams,
    pub snr_db: Vec<f64>,
    pub target_bit_errors: u64,
    pub frames_per_point: Option<u64>,
    pub max_frames_per_point: u64,
    pub master_seed: u64,
    pub theory_mode: TheoryMode,
    pub theory_realizations: usize,
    pub theory_doppler_draws: usize,
    pub complexity_n_list: Vec<usize>,
    pub complexity_q: usize,
    pub complexity_k: usize,
    pub complexity_gamma_db: f64,
    pub complexity_instances: usize,
}

fn parse_entries(text: &str, source: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{source}:{}: expected `key = value`", lineno + 1))?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("{source}:{}: unknown key `{key}`", lineno + 1);
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn detector_list(raw: &str, mrc: MrcTdParams) -> Result<Vec<DetectorKind>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            Ok(match s {
                "ml" => DetectorKind::Ml,
                "mmse_conventional" => DetectorKind::MmseConventional,
                "mmse_banded" => DetectorKind::MmseBanded,
                "mrc_td" => DetectorKind::MrcTd(mrc),
                other => bail!("unknown detector `{other}`"),
            })
        })
        .collect()
}

impl RunConfig {
    /// Loads a config file and applies `--set key=value` overrides on top.
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut entries = parse_entries(&text, &path.display().to_string())?;
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got `{item}`"))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!("--set: unknown key `{key}`");
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Self::from_entries(&entries)
    }

    fn from_entries(entries: &BTreeMap<String, String>) -> Result<RunConfig> {
        let get = |key: &str| entries.get(key).map(String::as_str);
        let req = |key: &str| get(key).ok_or_else(|| anyhow!("missing required key `{key}`"));

        let n: usize = req("waveform.n")?.parse().context("waveform.n")?;
        if n == 0 {
            bail!("waveform.n must be positive");
        }
        let guard_len: usize = req("waveform.guard_len")?.parse().context("waveform.guard_len")?;
        let paths: usize = req("channel.paths")?.parse().context("channel.paths")?;
        let nu_max: f64 = get("channel.nu_max").unwrap_or("1.0").parse().context("channel.nu_max")?;

        let delays: Vec<usize> = match get("channel.delays").unwrap_or("auto") {
            "auto" => (0..paths).collect(),
            list => list
                .split(',')
                .map(|s| s.trim().parse::<usize>().context("channel.delays"))
                .collect::<Result<_>>()?,
        };
        if delays.len() != paths {
            bail!("channel.delays must list one delay per path");
        }

        let (auto_c1, auto_c2) = default_chirp_params(nu_max, n);
        let (c1, c1_was_auto) = match get("waveform.c1").unwrap_or("auto") {
            "auto" => (auto_c1, true),
            v => (v.parse::<f64>().context("waveform.c1")?, false),
        };
        let (c2, c2_was_auto) = match get("waveform.c2").unwrap_or("auto") {
            "auto" => (auto_c2, true),
            v => (v.parse::<f64>().context("waveform.c2")?, false),
        };

        let modulation = match get("modulation").unwrap_or("qpsk") {
            "bpsk" => ModulationKind::Bpsk,
            "qpsk" => ModulationKind::Qpsk,
            "qam16" => ModulationKind::Qam16,
            other => bail!("unknown modulation `{other}`"),
        };

        let mrc_params = MrcTdParams {
            max_iterations: get("detector.mrc_td.k").unwrap_or("30").parse().context("detector.mrc_td.k")?,
            epsilon: get("detector.mrc_td.epsilon").unwrap_or("1e-8").parse().context("detector.mrc_td.epsilon")?,
            literal_dn_count: false,
        };

        let mut arms = Vec::new();
        for arm_name in get("arms").unwrap_or("zp_afdm").split(',') {
            let arm_name = arm_name.trim();
            if arm_name.is_empty() {
                continue;
            }
            let arm = Arm::parse(arm_name)?;
            let key = format!("arm.{}.detectors", arm.name());
            let dets = match entries.get(&key) {
                Some(raw) => detector_list(raw, mrc_params)?,
                None => vec![DetectorKind::MmseConventional],
            };
            if dets.is_empty() {
                bail!("{key} lists no detectors");
            }
            arms.push((arm, dets));
        }
        if arms.is_empty() {
            bail!("arms lists no arm");
        }

        let snr_db: Vec<f64> = match get("sim.snr_db") {
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse::<f64>().context("sim.snr_db"))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };

        let frames_per_point = match get("sim.frames_per_point").unwrap_or("auto") {
            "auto" => None,
            v => Some(v.parse::<u64>().context("sim.frames_per_point")?),
        };

        let theory_mode = match get("theory.mode").unwrap_or("mmse_sinr") {
            "ml_bound" => TheoryMode::MlBound,
            "mmse_sinr" => TheoryMode::MmseSinr,
            other => bail!("unknown theory.mode `{other}`"),
        };

        Ok(RunConfig {
            n,
            guard_len,
            c1,
            c2,
            c1_was_auto,
            c2_was_auto,
            paths,
            nu_max,
            delays,
            modulation,
            arms,
            mrc_params,
            snr_db,
            target_bit_errors: get("sim.target_bit_errors").unwrap_or("500").parse().context("sim.target_bit_errors")?,
            frames_per_point,
            max_frames_per_point: get("sim.max_frames_per_point")
                .unwrap_or("2000000000")
                .parse()
                .context("sim.max_frames_per_point")?,
            master_seed: get("sim.master_seed").unwrap_or("1").parse().context("sim.master_seed")?,
            theory_mode,
            theory_realizations: get("theory.realizations").unwrap_or("1000").parse().context("theory.realizations")?,
            theory_doppler_draws: get("theory.doppler_draws").unwrap_or("100").parse().context("theory.doppler_draws")?,
            complexity_n_list: get("complexity.n_list")
                .unwrap_or("64,128,256,512")
                .split(',')
                .map(|s| s.trim().parse::<usize>().context("complexity.n_list"))
                .collect::<Result<_>>()?,
            complexity_q: get("complexity.q").unwrap_or("2").parse().context("complexity.q")?,
            complexity_k: get("complexity.k").unwrap_or("30").parse().context("complexity.k")?,
            complexity_gamma_db: get("complexity.gamma_db").unwrap_or("15").parse().context("complexity.gamma_db")?,
            complexity_instances: get("complexity.instances").unwrap_or("10").parse().context("complexity.instances")?,
        })
    }

    /// Waveform config of one arm (OFDM arms zero the chirp rates).
    pub fn afdm_config(&self, arm: Arm) -> AfdmConfig {
        let (c1, c2) = if arm.is_ofdm() { (0.0, 0.0) } else { (self.c1, self.c2) };
        AfdmConfig::new(self.n, self.guard_len, arm.prefix_mode(), c1, c2)
    }

    pub fn profile(&self) -> ChannelProfile {
        ChannelProfile::new(self.paths, self.nu_max, self.delays.clone())
    }

    pub fn scheme(&self) -> ModulationScheme {
        ModulationScheme::new(self.modulation)
    }

    /// Simulator spec of one arm.
    pub fn experiment(&self, arm: Arm, detectors: &[DetectorKind]) -> ExperimentSpec {
        ExperimentSpec {
            config: self.afdm_config(arm),
            profile: self.profile(),
            modulation: self.scheme(),
            detectors: detectors.to_vec(),
            snr_grid_db: self.snr_db.clone(),
            frames_per_point: self.frames_per_point,
            target_bit_errors: self.target_bit_errors,
            max_frames_per_point: self.max_frames_per_point,
            master_seed: self.master_seed,
        }
    }

    /// Resolved manifest lines embedded in every output file; enough to
    /// reproduce the file bit-exactly (together with the tool version).
    pub fn manifest_lines(&self, command: &str, arm: Option<Arm>, detector: Option<&str>) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "# {k} = {v}");
        };
        kv("command", command.to_string());
        if let Some(a) = arm {
            kv("arm", a.name().to_string());
        }
        if let Some(d) = detector {
            kv("detector", d.to_string());
        }
        kv("waveform.n", self.n.to_string());
        kv("waveform.guard_len", self.guard_len.to_string());
        if let Some(a) = arm {
            kv(
                "waveform.prefix_mode",
                match a.prefix_mode() {
                    PrefixMode::ZeroPad => "zero_pad".to_string(),
                    PrefixMode::CyclicPrefix => "cyclic_prefix".to_string(),
                },
            );
            let cfg = self.afdm_config(a);
            kv("waveform.c1", fmt_f64(cfg.c1));
            kv("waveform.c2", fmt_f64(cfg.c2));
        } else {
            kv("waveform.c1", fmt_f64(self.c1));
            kv("waveform.c2", fmt_f64(self.c2));
        }
        kv("waveform.c1_source", if self.c1_was_auto { "auto".into() } else { "explicit".into() });
        kv("waveform.c2_source", if self.c2_was_auto { "auto".into() } else { "explicit".into() });
        kv("channel.paths", self.paths.to_string());
        kv("channel.nu_max", fmt_f64(self.nu_max));
        kv(
            "channel.delays",
            self.delays.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        );
        kv("modulation", self.modulation.name().to_string());
        kv("detector.mrc_td.k", self.mrc_params.max_iterations.to_string());
        kv("detector.mrc_td.epsilon", fmt_f64(self.mrc_params.epsilon));
        kv(
            "sim.snr_db",
            self.snr_db.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","),
        );
        kv("sim.target_bit_errors", self.target_bit_errors.to_string());
        kv(
            "sim.frames_per_point",
            self.frames_per_point.map_or("auto".into(), |v| v.to_string()),
        );
        kv("sim.max_frames_per_point", self.max_frames_per_point.to_string());
        kv("sim.master_seed", self.master_seed.to_string());
        kv("theory.mode", self.theory_mode.name().to_string());
        kv("theory.realizations", self.theory_realizations.to_string());
        kv("theory.doppler_draws", self.theory_doppler_draws.to_string());
        kv(
            "snr_definition",
            "per-symbol SNR of the prefix reference arm; zero-padded arms carry an \
             (N+guard)/N symbol-energy boost at equal total frame power"
                .to_string(),
        );
        out
    }
}

/// Fixed 17-significant-digit rendering used everywhere numbers land in
/// files, so re-runs are byte-comparable.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
