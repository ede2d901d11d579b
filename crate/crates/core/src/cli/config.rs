//! Experiment configuration files.
//!
//! The format is line-oriented `key = value` with `[section]` headers and `#`
//! comments (a TOML subset). Every key is optional; omitted keys take the
//! defaults below, which reproduce the 20-node Gaussian-input experiment.
//!
//! ```text
//! [network]
//! topology = "random_geometric"   # random_geometric | ring_lattice | edge_list
//! nodes = 20
//! radius = 0.35                   # random_geometric
//! seed = 42                       # random_geometric
//! half_width = 2                  # ring_lattice
//! edge_list = "graph.txt"         # edge_list, relative to the config file
//! weights = "uniform"             # uniform | non_cooperative
//!
//! [signal]
//! source = "white_gaussian"       # white_gaussian | delay_line
//! taps = 5                        # length of the default moving-average system
//! system = [0.2, 0.2, 0.2, 0.2, 0.2]   # explicit unknown system, overrides taps
//! variances = [...]               # per-node regressor variances
//! variance_seed = 1               # draws variances when none are given
//! snr_db = 0.0
//! samples = "speech.wav"          # delay_line input; synthetic when absent
//! synthetic_length = 8000
//! synthetic_seed = 7
//! scale_exponent = 1.0            # node k scales samples by variance_k^exponent
//!
//! [run]
//! algorithms = ["atc_dlms", "cta_dlms", "atc_leaky", "cta_leaky"]
//! mu = 0.08
//! gamma = 0.002                   # applied to the *_leaky algorithms only
//! trials = 50
//! horizon = 1000
//! base_seed = 1
//! steady_window = 200
//! divergence_threshold = 1e6
//! denoise_algorithm = "atc_leaky"
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{ExperimentConfig, LabeledAlgorithm, WeightRule};
use crate::filters::{AlgorithmSpec, Strategy};
use crate::network::Topology;
use crate::signal::{
    default_variances, load_samples, synthetic_speech, NoiseSpec, SignalError, SourceSpec,
    UnknownSystem,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Samples(SignalError),
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// The key a validation error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }

    /// Whether the failure came from reading a file rather than its content.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            ConfigError::Io { .. } | ConfigError::Samples(SignalError::Io { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    RandomGeometric,
    RingLattice,
    EdgeList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Uniform,
    NonCooperative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKindName {
    WhiteGaussian,
    DelayLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub topology: TopologyKind,
    pub nodes: usize,
    pub radius: f64,
    pub seed: u64,
    pub half_width: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_list: Option<PathBuf>,
    pub weights: WeightKind,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            topology: TopologyKind::RandomGeometric,
            nodes: 20,
            radius: 0.35,
            seed: 42,
            half_width: 2,
            edge_list: None,
            weights: WeightKind::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub source: SourceKindName,
    pub taps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    pub variance_seed: u64,
    pub snr_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<PathBuf>,
    pub synthetic_length: usize,
    pub synthetic_seed: u64,
    pub scale_exponent: f64,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self {
            source: SourceKindName::WhiteGaussian,
            taps: 5,
            system: None,
            variances: None,
            variance_seed: 1,
            snr_db: 0.0,
            samples: None,
            synthetic_length: 8000,
            synthetic_seed: 7,
            scale_exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub algorithms: Vec<String>,
    pub mu: f64,
    pub gamma: f64,
    pub trials: usize,
    pub horizon: usize,
    pub base_seed: u64,
    pub steady_window: usize,
    pub divergence_threshold: f64,
    pub denoise_algorithm: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            algorithms: ALGORITHM_NAMES.iter().map(|s| s.to_string()).collect(),
            mu: 0.08,
            gamma: 0.002,
            trials: 50,
            horizon: 1000,
            base_seed: 1,
            steady_window: 200,
            divergence_threshold: 1e6,
            denoise_algorithm: "atc_leaky".into(),
        }
    }
}

/// Algorithm names accepted in `[run] algorithms`.
pub const ALGORITHM_NAMES: [&str; 4] = ["atc_dlms", "cta_dlms", "atc_leaky", "cta_leaky"];

fn algorithm_shape(name: &str) -> Option<(Strategy, bool)> {
    match name {
        "atc_dlms" => Some((Strategy::Atc, false)),
        "cta_dlms" => Some((Strategy::Cta, false)),
        "atc_leaky" => Some((Strategy::Atc, true)),
        "cta_leaky" => Some((Strategy::Cta, true)),
        _ => None,
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkSection,
    pub signal: SignalSection,
    pub run: RunSection,
}

impl ConfigFile {
    /// Parses configuration text and checks every constraint that does not
    /// need the filesystem.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| describe_toml_error(text, &e))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Renders the configuration back into the file format.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Materializes values that are otherwise derived at run time: the
    /// unknown system and the per-node variances.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let system = self
            .signal
            .system
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.signal.taps as f64; self.signal.taps]);
        out.signal.taps = system.len();
        out.signal.system = Some(system);
        if out.signal.variances.is_none() {
            out.signal.variances = Some(default_variances(
                self.network.nodes,
                self.signal.variance_seed,
            ));
        }
        out
    }

    fn check(&self) -> Result<(), ConfigError> {
        let net = &self.network;
        if net.nodes == 0 {
            return Err(ConfigError::invalid("nodes", "must be at least 1"));
        }
        match net.topology {
            TopologyKind::RandomGeometric => {
                if !(net.radius > 0.0 && net.radius <= 1.0) {
                    return Err(ConfigError::invalid("radius", "must lie in (0, 1]"));
                }
            }
            TopologyKind::RingLattice => {
                if 2 * net.half_width >= net.nodes {
                    return Err(ConfigError::invalid(
                        "half_width",
                        "needs 2*half_width < nodes",
                    ));
                }
            }
            TopologyKind::EdgeList => {
                if net.edge_list.is_none() {
                    return Err(ConfigError::invalid(
                        "edge_list",
                        "required when topology = \"edge_list\"",
                    ));
                }
            }
        }

        let sig = &self.signal;
        match &sig.system {
            Some(taps) if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) => {
                return Err(ConfigError::invalid(
                    "system",
                    "needs at least one finite coefficient",
                ))
            }
            None if sig.taps == 0 => {
                return Err(ConfigError::invalid("taps", "must be at least 1"))
            }
            _ => {}
        }
        if let Some(v) = &sig.variances {
            if v.len() != net.nodes {
                return Err(ConfigError::invalid(
                    "variances",
                    format!("has {} entries for {} nodes", v.len(), net.nodes),
                ));
            }
            if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(ConfigError::invalid(
                    "variances",
                    "entries must be positive and finite",
                ));
            }
        }
        if !sig.snr_db.is_finite() {
            return Err(ConfigError::invalid("snr_db", "must be finite"));
        }
        if !sig.scale_exponent.is_finite() {
            return Err(ConfigError::invalid("scale_exponent", "must be finite"));
        }
        let taps = sig.system.as_ref().map_or(sig.taps, Vec::len);
        if sig.samples.is_none() && sig.synthetic_length < taps {
            return Err(ConfigError::invalid(
                "synthetic_length",
                "must be at least the number of taps",
            ));
        }

        let run = &self.run;
        if !(run.mu > 0.0) || !run.mu.is_finite() {
            return Err(ConfigError::invalid("mu", "must be positive and finite"));
        }
        if !(run.gamma >= 0.0) || !run.gamma.is_finite() {
            return Err(ConfigError::invalid(
                "gamma",
                "must be nonnegative and finite",
            ));
        }
        if run.trials == 0 {
            return Err(ConfigError::invalid("trials", "must be at least 1"));
        }
        if run.horizon == 0 {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        if run.steady_window == 0 || run.steady_window > run.horizon {
            return Err(ConfigError::invalid(
                "steady_window",
                "must lie in 1..=horizon",
            ));
        }
        if !(run.divergence_threshold > 0.0) {
            return Err(ConfigError::invalid(
                "divergence_threshold",
                "must be positive",
            ));
        }
        if run.algorithms.is_empty() {
            return Err(ConfigError::invalid(
                "algorithms",
                "needs at least one entry",
            ));
        }
        for (i, name) in run.algorithms.iter().enumerate() {
            if algorithm_shape(name).is_none() {
                return Err(ConfigError::invalid(
                    "algorithms",
                    format!(
                        "unknown algorithm `{name}`; expected one of {}",
                        ALGORITHM_NAMES.join(", ")
                    ),
                ));
            }
            if run.algorithms[..i].contains(name) {
                return Err(ConfigError::invalid(
                    "algorithms",
                    format!("`{name}` listed twice"),
                ));
            }
        }
        if !run.algorithms.contains(&run.denoise_algorithm) {
            return Err(ConfigError::invalid(
                "denoise_algorithm",
                format!("`{}` is not in `algorithms`", run.denoise_algorithm),
            ));
        }
        if sig.source == SourceKindName::DelayLine
            && sig.samples.is_none()
            && sig.synthetic_length < run.horizon
        {
            return Err(ConfigError::invalid("horizon", "exceeds synthetic_length"));
        }
        Ok(())
    }

    /// Builds the experiment, reading any referenced files relative to
    /// `base_dir`. Also returns the sample rate of a WAV input.
    pub fn to_experiment(
        &self,
        base_dir: &Path,
    ) -> Result<(ExperimentConfig, Option<u32>), ConfigError> {
        self.check()?;
        let cfg = self.resolved();
        let net = &cfg.network;
        let topology = match net.topology {
            TopologyKind::RandomGeometric => {
                Topology::random_geometric(net.nodes, net.radius, net.seed)
            }
            TopologyKind::RingLattice => Topology::ring_lattice(net.nodes, net.half_width),
            TopologyKind::EdgeList => {
                let path = base_dir.join(net.edge_list.as_ref().expect("checked"));
                let text = fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Topology::from_edge_list(&text)
            }
        }
        .map_err(|e| ConfigError::invalid("topology", e.to_string()))?;
        if topology.node_count() != net.nodes {
            return Err(ConfigError::invalid(
                "nodes",
                format!("edge list defines {} nodes", topology.node_count()),
            ));
        }

        let sig = &cfg.signal;
        let system = UnknownSystem::new(sig.system.clone().expect("resolved"))
            .map_err(|e| ConfigError::invalid("system", e.to_string()))?;
        let variances = sig.variances.clone().expect("resolved");
        let mut sample_rate = None;
        let source = match sig.source {
            SourceKindName::WhiteGaussian => SourceSpec::white_gaussian(variances),
            SourceKindName::DelayLine => {
                let values = match &sig.samples {
                    Some(path) => {
                        let loaded =
                            load_samples(base_dir.join(path)).map_err(ConfigError::Samples)?;
                        sample_rate = loaded.sample_rate;
                        loaded.values
                    }
                    None => synthetic_speech(sig.synthetic_length, sig.synthetic_seed),
                };
                if values.len() < cfg.run.horizon {
                    return Err(ConfigError::invalid(
                        "horizon",
                        format!("exceeds the {} available samples", values.len()),
                    ));
                }
                SourceSpec::delay_line(variances, Arc::from(values), sig.scale_exponent)
            }
        }
        .map_err(|e| ConfigError::invalid("samples", e.to_string()))?;

        let run = &cfg.run;
        let algorithms = run
            .algorithms
            .iter()
            .map(|name| {
                let (strategy, leaky) = algorithm_shape(name).expect("checked");
                let gamma = if leaky { run.gamma } else { 0.0 };
                AlgorithmSpec::new(strategy, run.mu, gamma)
                    .map(|spec| LabeledAlgorithm {
                        label: name.clone(),
                        spec,
                        leaky,
                    })
                    .map_err(|e| ConfigError::invalid("mu", e.to_string()))
            })
            .collect::<Result<_, _>>()?;

        let experiment = ExperimentConfig {
            topology,
            weight_rule: match net.weights {
                WeightKind::Uniform => WeightRule::Uniform,
                WeightKind::NonCooperative => WeightRule::NonCooperative,
            },
            algorithms,
            source,
            noise: NoiseSpec::Snr(sig.snr_db),
            system,
            horizon: run.horizon,
            trials: run.trials,
            base_seed: run.base_seed,
            steady_window: run.steady_window,
            divergence_threshold: run.divergence_threshold,
            record_per_node: false,
            denoise_algorithm: run.denoise_algorithm.clone(),
        };
        experiment
            .validate()
            .map_err(|e| ConfigError::invalid("run", e.to_string()))?;
        Ok((experiment, sample_rate))
    }
}

/// Reads and parses a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ConfigFile::parse(&text)
}

/// Turns a TOML error into one that names the offending key where possible.
fn describe_toml_error(text: &str, err: &toml::de::Error) -> ConfigError {
    let message = err.message().to_string();
    if let Some(field) = message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
    {
        return ConfigError::invalid(field, "unknown key");
    }
    if let Some(span) = err.span() {
        let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
        let line = text[line_start..].lines().next().unwrap_or("");
        if let Some((key, _)) = line.split_once('=') {
            let key = key.trim();
            if !key.is_empty() && !key.starts_with('[') {
                return ConfigError::invalid(key, message);
            }
        }
        if let Some(section) = line
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
        {
            return ConfigError::invalid(section.trim(), message);
        }
    }
    ConfigError::Syntax(err.to_string())
}
