//! Seeded ensemble experiments: learning curves, parameter sweeps and the
//! speech-denoising run.
//!
//! Trial `t` draws its data from seed `base_seed + t`, and within a trial every
//! algorithm consumes the very same frames. Trials run in parallel; their
//! curves are reduced in trial order so results do not depend on scheduling.

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{
    detect_divergence, network_msd, squared_deviation, steady_state_msd, to_db, AnalysisError,
    MsdTrace,
};
use crate::filters::{init_state, step, AlgorithmSpec, FilterError, NodeState, Strategy};
use crate::network::{CombinationWeights, NetworkError, Topology};
use crate::signal::{
    delay_line_source, dot, gaussian_source, NoiseSpec, SampleFrame, SignalError, SourceKind,
    SourceSpec, UnknownSystem,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("node {node} is outside 1..={nodes}")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("no algorithm labeled `{0}`")]
    UnknownAlgorithm(String),
    #[error("denoising needs a delay-line source")]
    NotDelayLine,
    #[error("delay-line source has {available} samples but the horizon is {horizon}")]
    HorizonTooLong { available: usize, horizon: usize },
    #[error("`{label}` diverged at round {iteration} (node {node})")]
    Diverged {
        label: String,
        iteration: usize,
        node: usize,
    },
}

/// Every trial of one algorithm diverged, so no curve exists.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("all {trials} trials of `{label}` diverged")]
pub struct AllTrialsDiverged {
    pub label: String,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    Uniform,
    NonCooperative,
}

impl WeightRule {
    pub fn build(&self, topo: &Topology) -> CombinationWeights {
        match self {
            WeightRule::Uniform => CombinationWeights::uniform(topo),
            WeightRule::NonCooperative => CombinationWeights::non_cooperative(topo.node_count()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledAlgorithm {
    pub label: String,
    pub spec: AlgorithmSpec,
    /// Whether leakage sweeps apply to this algorithm. Plain diffusion LMS
    /// keeps `γ = 0` throughout.
    pub leaky: bool,
}

/// A fully resolved experiment. Building one performs no I/O.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub weight_rule: WeightRule,
    pub algorithms: Vec<LabeledAlgorithm>,
    pub source: SourceSpec,
    pub noise: NoiseSpec,
    pub system: UnknownSystem,
    pub horizon: usize,
    pub trials: usize,
    pub base_seed: u64,
    /// Final rounds averaged into a steady-state level.
    pub steady_window: usize,
    pub divergence_threshold: f64,
    /// Keep per-node curves in the traces.
    pub record_per_node: bool,
    /// Label of the algorithm used by [`denoise_speech`].
    pub denoise_algorithm: String,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |msg: String| Err(ExperimentError::Invalid(msg));
        let n = self.topology.node_count();
        if self.horizon == 0 {
            return invalid("horizon must be at least 1".into());
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return invalid("at least one algorithm is required".into());
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].iter().any(|b| b.label == a.label) {
                return invalid(format!("duplicate algorithm label `{}`", a.label));
            }
        }
        if self.source.node_count() != n {
            return invalid(format!(
                "{} regressor variances for {n} nodes",
                self.source.node_count()
            ));
        }
        if let NoiseSpec::PerNodeSnr(v) = &self.noise {
            if v.len() != n {
                return invalid(format!("{} per-node SNR values for {n} nodes", v.len()));
            }
        }
        if self.steady_window == 0 || self.steady_window > self.horizon {
            return invalid(format!(
                "steady-state window {} must be in 1..={}",
                self.steady_window, self.horizon
            ));
        }
        if !(self.divergence_threshold > 0.0) {
            return invalid("divergence threshold must be positive".into());
        }
        if self.source.kind() == SourceKind::DelayLine {
            let available = self.source.samples().map_or(0, |s| s.len());
            if available < self.horizon {
                return Err(ExperimentError::HorizonTooLong {
                    available,
                    horizon: self.horizon,
                });
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> CombinationWeights {
        self.weight_rule.build(&self.topology)
    }

    /// Frames of trial `t`, seeded with `base_seed + t`.
    pub fn trial_frames(
        &self,
        trial: usize,
    ) -> Result<Box<dyn Iterator<Item = SampleFrame>>, ExperimentError> {
        let seed = self.base_seed.wrapping_add(trial as u64);
        Ok(match self.source.kind() {
            SourceKind::WhiteGaussian => Box::new(gaussian_source(
                &self.source,
                &self.system,
                &self.noise,
                seed,
                self.horizon,
            )?),
            SourceKind::DelayLine => Box::new(
                delay_line_source(&self.source, &self.system, &self.noise, seed)?
                    .take(self.horizon),
            ),
        })
    }

    fn algorithm(&self, label: &str) -> Result<&LabeledAlgorithm, ExperimentError> {
        self.algorithms
            .iter()
            .find(|a| a.label == label)
            .ok_or_else(|| ExperimentError::UnknownAlgorithm(label.to_string()))
    }
}

/// The four algorithms compared throughout: ATC/CTA diffusion LMS and
/// ATC/CTA diffusion leaky LMS.
pub fn standard_algorithms(mu: f64, gamma: f64) -> Result<Vec<LabeledAlgorithm>, FilterError> {
    let entry = |label: &str, strategy, leaky: bool| -> Result<LabeledAlgorithm, FilterError> {
        Ok(LabeledAlgorithm {
            label: label.to_string(),
            spec: AlgorithmSpec::new(strategy, mu, if leaky { gamma } else { 0.0 })?,
            leaky,
        })
    };
    Ok(vec![
        entry("atc_dlms", Strategy::Atc, false)?,
        entry("cta_dlms", Strategy::Cta, false)?,
        entry("atc_leaky", Strategy::Atc, true)?,
        entry("cta_leaky", Strategy::Cta, true)?,
    ])
}

/// Learning curve of one algorithm, or the reason there is none.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmOutcome {
    pub label: String,
    pub trace: Result<MsdTrace, AllTrialsDiverged>,
}

/// Results of an ensemble, in configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub outcomes: Vec<AlgorithmOutcome>,
}

impl EnsembleResult {
    pub fn get(&self, label: &str) -> Option<&Result<MsdTrace, AllTrialsDiverged>> {
        self.outcomes
            .iter()
            .find(|o| o.label == label)
            .map(|o| &o.trace)
    }
}

/// Linear-domain curves of one algorithm in one trial; `None` if it diverged.
struct TrialCurve {
    msd: Vec<f64>,
    per_node: Option<Vec<f64>>,
}

fn run_trial(
    cfg: &ExperimentConfig,
    weights: &CombinationWeights,
    trial: usize,
    observe: &mut dyn FnMut(usize, &SampleFrame),
) -> Result<Vec<Option<TrialCurve>>, ExperimentError> {
    let n = cfg.topology.node_count();
    let m = cfg.system.len();
    let w_o = cfg.system.taps();
    let count = cfg.algorithms.len();
    let mut states: Vec<Option<NodeState>> = vec![Some(init_state(n, m)); count];
    let mut curves: Vec<TrialCurve> = (0..count)
        .map(|_| TrialCurve {
            msd: Vec::with_capacity(cfg.horizon),
            per_node: cfg
                .record_per_node
                .then(|| Vec::with_capacity(cfg.horizon * n)),
        })
        .collect();
    let mut rounds = 0;
    for frame in cfg.trial_frames(trial)? {
        rounds += 1;
        for (a, algo) in cfg.algorithms.iter().enumerate() {
            let Some(state) = &states[a] else { continue };
            observe(a, &frame);
            let next = step(state, &frame, &algo.spec, weights, &cfg.topology);
            if detect_divergence(&next, cfg.divergence_threshold).is_some() {
                states[a] = None;
                continue;
            }
            let curve = &mut curves[a];
            curve.msd.push(network_msd(next.estimates(), w_o));
            if let Some(per_node) = &mut curve.per_node {
                per_node.extend((0..n).map(|k| squared_deviation(next.w(k), w_o)));
            }
            states[a] = Some(next);
        }
    }
    if rounds != cfg.horizon {
        return Err(FilterError::SourceExhausted {
            produced: rounds,
            horizon: cfg.horizon,
        }
        .into());
    }
    Ok(curves
        .into_iter()
        .zip(states)
        .map(|(curve, state)| state.map(|_| curve))
        .collect())
}

fn run_ensemble_observed<F>(
    cfg: &ExperimentConfig,
    observer: F,
) -> Result<EnsembleResult, ExperimentError>
where
    F: Fn(usize) -> Box<dyn FnMut(usize, &SampleFrame)> + Sync,
{
    cfg.validate()?;
    let weights = cfg.weights();
    weights.validate(&cfg.topology)?;
    let trials: Vec<Vec<Option<TrialCurve>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &weights, t, &mut *observer(t)))
        .collect::<Result<_, _>>()?;

    let n = cfg.topology.node_count();
    let outcomes = cfg
        .algorithms
        .iter()
        .enumerate()
        .map(|(a, algo)| {
            let mut sum = vec![0.0; cfg.horizon];
            let mut node_sum = cfg.record_per_node.then(|| vec![0.0; cfg.horizon * n]);
            let mut kept = 0;
            for curve in trials.iter().filter_map(|t| t[a].as_ref()) {
                kept += 1;
                sum.iter_mut().zip(&curve.msd).for_each(|(s, x)| *s += x);
                if let (Some(acc), Some(per_node)) = (&mut node_sum, &curve.per_node) {
                    acc.iter_mut().zip(per_node).for_each(|(s, x)| *s += x);
                }
            }
            let trace = if kept == 0 {
                Err(AllTrialsDiverged {
                    label: algo.label.clone(),
                    trials: cfg.trials,
                })
            } else {
                let scale = kept as f64;
                Ok(MsdTrace {
                    per_iteration_db: sum.iter().map(|s| to_db(s / scale)).collect(),
                    per_node_db: node_sum.map(|acc| {
                        (0..n)
                            .map(|k| {
                                (0..cfg.horizon)
                                    .map(|i| to_db(acc[i * n + k] / scale))
                                    .collect()
                            })
                            .collect()
                    }),
                    trials: kept,
                    divergent_trials: cfg.trials - kept,
                })
            };
            AlgorithmOutcome {
                label: algo.label.clone(),
                trace,
            }
        })
        .collect();
    Ok(EnsembleResult { outcomes })
}

/// Ensemble-averaged network-MSD curves for every configured algorithm.
///
/// Divergent trials are dropped from an algorithm's average and counted in
/// its trace; an algorithm whose trials all diverged gets an
/// [`AllTrialsDiverged`] outcome without affecting the others.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleResult, ExperimentError> {
    run_ensemble_observed(cfg, |_| Box::new(|_, _| {}))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepValue {
    SteadyState(f64),
    /// At least one trial diverged at this grid point.
    Divergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub param: f64,
    /// `(label, value)` in configuration order.
    pub values: Vec<(String, SweepValue)>,
}

impl SweepPoint {
    pub fn get(&self, label: &str) -> Option<SweepValue> {
        self.values
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| *v)
    }
}

fn summarize(
    cfg: &ExperimentConfig,
    param: f64,
    result: EnsembleResult,
) -> Result<SweepPoint, ExperimentError> {
    let values = result
        .outcomes
        .into_iter()
        .map(|o| {
            let value = match o.trace {
                Ok(t) if t.divergent_trials == 0 => {
                    SweepValue::SteadyState(steady_state_msd(&t, cfg.steady_window)?)
                }
                _ => SweepValue::Divergent,
            };
            Ok((o.label, value))
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(SweepPoint { param, values })
}

fn check_grid(grid: &[f64]) -> Result<(), ExperimentError> {
    if grid.is_empty() {
        return Err(ExperimentError::Invalid("sweep grid is empty".into()));
    }
    Ok(())
}

/// Steady-state MSD of every algorithm at each step size.
pub fn sweep_step_size(
    cfg: &ExperimentConfig,
    mu_grid: &[f64],
) -> Result<Vec<SweepPoint>, ExperimentError> {
    check_grid(mu_grid)?;
    mu_grid
        .iter()
        .map(|&mu| {
            let mut point = cfg.clone();
            for a in &mut point.algorithms {
                a.spec = a.spec.with_mu(mu)?;
            }
            summarize(cfg, mu, run_ensemble(&point)?)
        })
        .collect()
}

/// Steady-state MSD at each leakage value. Only leaky algorithms take the
/// grid value; plain ones keep `γ = 0`.
pub fn sweep_leakage(
    cfg: &ExperimentConfig,
    gamma_grid: &[f64],
) -> Result<Vec<SweepPoint>, ExperimentError> {
    check_grid(gamma_grid)?;
    gamma_grid
        .iter()
        .map(|&gamma| {
            let mut point = cfg.clone();
            for a in point.algorithms.iter_mut().filter(|a| a.leaky) {
                a.spec = a.spec.with_gamma(gamma)?;
            }
            summarize(cfg, gamma, run_ensemble(&point)?)
        })
        .collect()
}

/// Waveforms at one node from a single delay-line run.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    /// Measurement `d_k(i)`.
    pub noisy: Vec<f64>,
    /// A-posteriori output `u_{k,i} · w_{k,i}`.
    pub filtered: Vec<f64>,
    /// `d_k(i) − u_{k,i} · w_{k,i}`.
    pub residual: Vec<f64>,
    /// Noiseless component `u_{k,i} · w°`.
    pub clean: Vec<f64>,
}

impl DenoiseOutput {
    pub fn len(&self) -> usize {
        self.noisy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy.is_empty()
    }

    /// SNR (dB) of the measurement against the clean component over
    /// samples `from..`.
    pub fn input_snr_db(&self, from: usize) -> f64 {
        snr_db(&self.clean[from..], &self.noisy[from..])
    }

    /// SNR (dB) of the filtered output against the clean component over
    /// samples `from..`.
    pub fn output_snr_db(&self, from: usize) -> f64 {
        snr_db(&self.clean[from..], &self.filtered[from..])
    }
}

fn snr_db(clean: &[f64], observed: &[f64]) -> f64 {
    let signal: f64 = clean.iter().map(|c| c * c).sum();
    let error: f64 = clean
        .iter()
        .zip(observed)
        .map(|(c, o)| (o - c).powi(2))
        .sum();
    10.0 * (signal / error).log10()
}

/// Runs the configured denoising algorithm once over the whole delay-line
/// sequence and records node `node` (one-based).
pub fn denoise_speech(
    cfg: &ExperimentConfig,
    node: usize,
) -> Result<DenoiseOutput, ExperimentError> {
    let n = cfg.topology.node_count();
    if node == 0 || node > n {
        return Err(ExperimentError::NodeOutOfRange { node, nodes: n });
    }
    if cfg.source.kind() != SourceKind::DelayLine {
        return Err(ExperimentError::NotDelayLine);
    }
    let algo = cfg.algorithm(&cfg.denoise_algorithm)?;
    let weights = cfg.weights();
    weights.validate(&cfg.topology)?;
    let k = node - 1;
    let source = delay_line_source(&cfg.source, &cfg.system, &cfg.noise, cfg.base_seed)?;
    let len = source.len();
    let mut out = DenoiseOutput {
        noisy: Vec::with_capacity(len),
        filtered: Vec::with_capacity(len),
        residual: Vec::with_capacity(len),
        clean: Vec::with_capacity(len),
    };
    let mut state = init_state(n, cfg.system.len());
    for (i, frame) in source.enumerate() {
        state = step(&state, &frame, &algo.spec, &weights, &cfg.topology);
        if let Some(report) = detect_divergence(&state, cfg.divergence_threshold) {
            return Err(ExperimentError::Diverged {
                label: algo.label.clone(),
                iteration: i + 1,
                node: report.node + 1,
            });
        }
        let y = dot(frame.u(k), state.w(k));
        out.noisy.push(frame.d(k));
        out.filtered.push(y);
        out.residual.push(frame.d(k) - y);
        out.clean.push(frame.clean(k));
    }
    Ok(out)
}
