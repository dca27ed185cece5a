//! `key = value` configuration with flag > file > default precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use orbbuf_core::features::{FeatureConfig, DEFAULT_PATTERN_SEED};
use orbbuf_core::frame_io::{SizeModel, SyntheticParams};
use orbbuf_core::netsim::{InterruptionSpec, LossyTraceParams};
use orbbuf_core::{derive_seed, CapacitySpec, PolicyKind};
use sha2::{Digest, Sha256};

use crate::CliError;

macro_rules! config_keys {
    ($($field:ident = $default:expr, $help:literal;)*) => {
        /// Every configuration key with its built-in default.
        pub const KEYS: &[(&str, &str)] = &[$((stringify!($field), $default)),*];

        /// One flag per configuration key.
        #[derive(Args, Clone, Debug, Default)]
        pub struct ConfigFlags {
            /// Read `key = value` settings from this file; flags override it.
            #[arg(long, value_name = "FILE")]
            pub config: Option<PathBuf>,
            $(
                #[arg(long, value_name = "VALUE", help = $help)]
                pub $field: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn values(&self) -> Vec<(&'static str, Option<&str>)> {
                vec![$((stringify!($field), self.$field.as_deref())),*]
            }
        }
    };
}

config_keys! {
    sequence_dir = "", "Directory of .pgm frames; empty generates a synthetic sequence";
    width = "96", "Synthetic frame width";
    height = "128", "Synthetic frame height";
    n_frames = "1000", "Synthetic frame count";
    dot_density = "0.02", "Fraction of synthetic pixels carrying a dot";
    shift_px = "1", "Synthetic drift in pixels per frame";
    noise_sigma = "0", "Std-dev of per-frame Gaussian noise";
    fps = "25", "Frame rate";
    policy = "orbbuf", "Eviction policy for run: drop-oldest, drop-youngest, random, orbbuf";
    policies = "drop-oldest,drop-youngest,random,orbbuf", "Comma-separated policies for compare and buffer-size";
    capacity = "1s", "Buffer capacity in frames (25) or seconds (1s)";
    capacities = "5,10,15,20,25,30,35", "Comma-separated capacities for the buffer-size study";
    trace = "", "Bandwidth trace CSV (t_ms,bytes_per_s); empty uses link_model";
    link_model = "constant", "Link without a trace file: constant or lossy";
    link_rate = "1.05x", "Link rate in bytes/s, or a multiple of the sustaining rate like 1.05x";
    trace_duration_ms = "auto", "Length of the lossy trace; auto spans the sequence";
    outage_probability = "0.15", "Chance that a lossy-trace segment is an outage";
    outage_min_ms = "200", "Shortest lossy-trace outage";
    outage_max_ms = "1200", "Longest lossy-trace outage";
    rate_factor_min = "0.6", "Lowest lossy-trace rate as a multiple of link_rate";
    rate_factor_max = "1.4", "Highest lossy-trace rate as a multiple of link_rate";
    intr_frame = "", "Frame at which an interruption starts; empty disables it";
    intr_latency_ms = "1000", "Interruption latency T in ms";
    intr_duration_frames = "50", "Interruption length L in frames";
    fast_threshold = "20", "FAST intensity threshold";
    max_keypoints = "500", "Keypoints kept per frame";
    patch_radius = "18", "Keypoint border margin and descriptor patch radius";
    match_max_hamming = "64", "Largest Hamming distance accepted as a match";
    pattern_seed = "auto", "Seed of the BRIEF test pattern; auto uses the built-in one";
    compression_ratio = "0.0916", "Encoded bytes per pixel";
    seed = "0", "Root seed for all randomness";
    seeds = "10", "Repetitions per capacity in the buffer-size study";
    distance_lo = "0", "First frame of the distance study";
    distance_hi = "30", "Last frame of the distance study";
    loss_max_k = "12", "Largest run of removed frames in the loss study";
    loss_threshold = "0.25", "Loss-study threshold as a fraction of median self-similarity";
    timing = "false", "Also write wall-clock enqueue timings (not reproducible)";
}

/// Parses the text of a config file. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
        let key = key.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", n + 1)));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key {key:?}", n + 1)));
        }
    }
    Ok(map)
}

/// Merges defaults, the optional config file and the flags.
pub fn effective_values(flags: &ConfigFlags) -> Result<BTreeMap<String, String>, CliError> {
    let mut map: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        map.extend(parse_config_text(&text)?);
    }
    for (key, value) in flags.values() {
        if let Some(v) = value {
            map.insert(key.to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

/// The effective configuration as `key = value` lines in key order.
pub fn render(values: &BTreeMap<String, String>) -> String {
    values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// First 16 hex digits of the SHA-256 of the rendered configuration.
pub fn run_id(values: &BTreeMap<String, String>) -> String {
    let digest = Sha256::digest(render(values).as_bytes());
    hex::encode(digest)[..16].to_string()
}

#[derive(Clone, Debug, PartialEq)]
pub enum SequenceSource {
    Dir(PathBuf),
    Synthetic(SyntheticParams),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinkRate {
    BytesPerSecond(f64),
    /// Multiple of the rate that exactly sustains the sequence.
    Sustaining(f64),
}

impl FromStr for LinkRate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (num, relative) = match s.strip_suffix(['x', 'X']) {
            Some(n) => (n.trim(), true),
            None => (s, false),
        };
        let v: f64 = num
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v > 0.0)
            .ok_or_else(|| format!("invalid link rate {s:?} (expected bytes/s or a multiple like 1.05x)"))?;
        Ok(if relative {
            LinkRate::Sustaining(v)
        } else {
            LinkRate::BytesPerSecond(v)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkModel {
    Constant,
    Lossy,
}

/// Typed view of the effective configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub source: SequenceSource,
    pub fps: f64,
    pub policy: PolicyKind,
    pub policies: Vec<PolicyKind>,
    pub capacity: CapacitySpec,
    pub capacities: Vec<CapacitySpec>,
    pub trace: Option<PathBuf>,
    pub link_model: LinkModel,
    pub link_rate: LinkRate,
    pub trace_duration_ms: Option<f64>,
    /// `mean_rate` and `duration_ms` are filled in once the sequence is known.
    pub lossy: LossyTraceParams,
    pub interruption: Option<InterruptionSpec>,
    pub features: FeatureConfig,
    pub size_model: SizeModel,
    pub seed: u64,
    pub seeds: u64,
    pub distance_range: (usize, usize),
    pub loss_max_k: usize,
    pub loss_threshold: f64,
    pub timing: bool,
}

/// Seed streams fanned out from the root seed.
pub mod streams {
    pub const SEQUENCE: u64 = 0;
    pub const POLICY: u64 = 1;
    pub const TRACE: u64 = 2;
}

impl RunConfig {
    pub fn from_values(values: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let get = |key: &str| values.get(key).map(String::as_str).unwrap_or("");
        fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
            raw.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid value {raw:?} for {key}")))
        }
        let num = |key: &str| parse::<f64>(key, get(key));
        let int = |key: &str| parse::<usize>(key, get(key));
        let list = |key: &str| -> Vec<String> {
            get(key)
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        };

        let seed: u64 = parse("seed", get("seed"))?;
        let fps = num("fps")?;
        if !(fps.is_finite() && fps > 0.0) {
            return Err(CliError::Usage(format!("fps must be positive, got {fps}")));
        }
        let source = match get("sequence_dir") {
            "" => {
                let p = SyntheticParams {
                    width: int("width")?,
                    height: int("height")?,
                    n_frames: int("n_frames")?,
                    dot_density: num("dot_density")?,
                    shift_px_per_frame: int("shift_px")?,
                    noise_sigma: num("noise_sigma")?,
                    fps,
                    seed: derive_seed(seed, streams::SEQUENCE),
                };
                p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                SequenceSource::Synthetic(p)
            }
            dir => SequenceSource::Dir(PathBuf::from(dir)),
        };

        let policy_kind = |s: &str| s.parse::<PolicyKind>().map_err(|e| CliError::Usage(e.to_string()));
        let policies = list("policies")
            .iter()
            .map(|s| policy_kind(s))
            .collect::<Result<Vec<_>, _>>()?;
        let capacity_spec = |s: &str| s.parse::<CapacitySpec>().map_err(CliError::Usage);
        let capacities = list("capacities")
            .iter()
            .map(|s| capacity_spec(s))
            .collect::<Result<Vec<_>, _>>()?;

        let link_model = match get("link_model") {
            "constant" => LinkModel::Constant,
            "lossy" => LinkModel::Lossy,
            other => {
                return Err(CliError::Usage(format!(
                    "link_model must be constant or lossy, got {other:?}"
                )))
            }
        };
        let trace_duration_ms = match get("trace_duration_ms") {
            "auto" => None,
            raw => Some(parse::<f64>("trace_duration_ms", raw)?).filter(|d| *d > 0.0),
        };
        let outage_ms = (
            parse("outage_min_ms", get("outage_min_ms"))?,
            parse("outage_max_ms", get("outage_max_ms"))?,
        );
        if outage_ms.0 > outage_ms.1 {
            return Err(CliError::Usage("outage_min_ms exceeds outage_max_ms".into()));
        }
        let outage_probability = num("outage_probability")?;
        if !(0.0..=1.0).contains(&outage_probability) {
            return Err(CliError::Usage("outage_probability must lie in [0, 1]".into()));
        }
        let lossy = LossyTraceParams {
            outage_probability,
            outage_ms,
            rate_factor: (num("rate_factor_min")?, num("rate_factor_max")?),
            seed: derive_seed(seed, streams::TRACE),
            ..Default::default()
        };

        let interruption = match get("intr_frame") {
            "" => None,
            raw => Some(InterruptionSpec {
                at_frame: parse("intr_frame", raw)?,
                latency_ms: num("intr_latency_ms")?,
                duration_frames: parse("intr_duration_frames", get("intr_duration_frames"))?,
            }),
        };

        let features = FeatureConfig {
            fast_threshold: parse("fast_threshold", get("fast_threshold"))?,
            max_keypoints: int("max_keypoints")?,
            patch_radius: int("patch_radius")?,
            match_max_hamming: parse("match_max_hamming", get("match_max_hamming"))?,
            pattern_seed: match get("pattern_seed") {
                "auto" => DEFAULT_PATTERN_SEED,
                raw => parse("pattern_seed", raw)?,
            },
        };
        features.validate().map_err(CliError::Usage)?;

        let ratio = num("compression_ratio")?;
        let size_model = SizeModel::new(ratio)
            .ok_or_else(|| CliError::Usage(format!("compression_ratio must lie in (0, 1], got {ratio}")))?;

        let loss_threshold = num("loss_threshold")?;
        if loss_threshold < 0.0 {
            return Err(CliError::Usage("loss_threshold must be non-negative".into()));
        }

        Ok(RunConfig {
            source,
            fps,
            policy: policy_kind(get("policy"))?,
            policies,
            capacity: capacity_spec(get("capacity"))?,
            capacities,
            trace: Some(get("trace")).filter(|s| !s.is_empty()).map(PathBuf::from),
            link_model,
            link_rate: get("link_rate").parse().map_err(CliError::Usage)?,
            trace_duration_ms,
            lossy,
            interruption,
            features,
            size_model,
            seed,
            seeds: parse("seeds", get("seeds"))?,
            distance_range: (int("distance_lo")?, int("distance_hi")?),
            loss_max_k: int("loss_max_k")?,
            loss_threshold,
            timing: parse("timing", get("timing"))?,
        })
    }

    pub fn policy_seed(&self) -> u64 {
        derive_seed(self.seed, streams::POLICY)
    }

    /// Policy seeds of the buffer-size study repetitions.
    pub fn repetition_seeds(&self) -> Vec<u64> {
        (0..self.seeds).map(|k| derive_seed(self.policy_seed(), k)).collect()
    }
}

/// Writes `effective_config.txt` into `out` and returns the run id.
pub fn write_sidecar(values: &BTreeMap<String, String>, out: &Path) -> std::io::Result<String> {
    let id = run_id(values);
    let text = format!("# run_id = {id}\n{}", render(values));
    std::fs::write(out.join("effective_config.txt"), text)?;
    Ok(id)
}
