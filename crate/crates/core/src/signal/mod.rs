//! Data generation under the linear measurement model `d = u·w° + v`.
//!
//! Two sources are provided: white Gaussian regressors drawn independently at
//! every node and instant, and a tapped delay line over a shared sample
//! sequence (speech or a synthetic stand-in) scaled per node.

mod samples;
mod speech;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use samples::{encode_wav, load_samples, write_text_samples, write_wav_samples, Samples};
pub use speech::synthetic_speech;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("unknown system must have at least one finite coefficient")]
    InvalidSystem,
    #[error("regressor variance for node {node} must be positive and finite, got {value}")]
    InvalidVariance { node: usize, value: f64 },
    #[error("expected {expected} per-node values, got {got}")]
    NodeCount { expected: usize, got: usize },
    #[error("signal power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("SNR must be finite, got {0}")]
    InvalidSnr(f64),
    #[error("the {0} source needs a different source kind")]
    WrongKind(&'static str),
    #[error("delay-line source has no samples")]
    EmptySamples,
    #[error("delay-line source has {len} samples, fewer than the {taps} filter taps")]
    TooFewSamples { len: usize, taps: usize },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The parameter vector `w°` every node tries to estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownSystem {
    taps: Vec<f64>,
}

impl UnknownSystem {
    pub fn new(taps: Vec<f64>) -> Result<Self, SignalError> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(SignalError::InvalidSystem);
        }
        Ok(Self { taps })
    }

    /// Length-`m` moving average: a lowpass FIR with unit DC gain.
    pub fn moving_average(m: usize) -> Result<Self, SignalError> {
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// `Σ taps`, the gain at zero frequency.
    pub fn dc_gain(&self) -> f64 {
        self.taps.iter().sum()
    }
}

/// Per-node regressor variances `σ²_{u,k}`: uniform on `[0.1, 1.0]` from
/// `seed`, with node 14 pinned to 0.35 in a 20-node network.
pub fn default_variances(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..=1.0)).collect();
    if n == 20 {
        v[13] = 0.35;
    }
    v
}

/// Noise variance giving `snr_db` against a noiseless measurement of power
/// `signal_power`.
pub fn noise_variance_for_snr(signal_power: f64, snr_db: f64) -> Result<f64, SignalError> {
    if !(signal_power > 0.0) || !signal_power.is_finite() {
        return Err(SignalError::NonPositivePower(signal_power));
    }
    if !snr_db.is_finite() {
        return Err(SignalError::InvalidSnr(snr_db));
    }
    Ok(signal_power / 10f64.powf(snr_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    WhiteGaussian,
    DelayLine,
}

/// Regressor statistics for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    kind: SourceKind,
    variances: Vec<f64>,
    samples: Option<Arc<[f64]>>,
    scale_exponent: f64,
}

impl SourceSpec {
    pub fn white_gaussian(variances: Vec<f64>) -> Result<Self, SignalError> {
        check_variances(&variances)?;
        Ok(Self {
            kind: SourceKind::WhiteGaussian,
            variances,
            samples: None,
            scale_exponent: 1.0,
        })
    }

    /// Delay line over `samples`, node `k` scaled by `variances[k]^scale_exponent`.
    ///
    /// An exponent of 1 multiplies by the variance itself; 0.5 by the standard
    /// deviation.
    pub fn delay_line(
        variances: Vec<f64>,
        samples: Arc<[f64]>,
        scale_exponent: f64,
    ) -> Result<Self, SignalError> {
        check_variances(&variances)?;
        if samples.is_empty() {
            return Err(SignalError::EmptySamples);
        }
        Ok(Self {
            kind: SourceKind::DelayLine,
            variances,
            samples: Some(samples),
            scale_exponent,
        })
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn samples(&self) -> Option<&[f64]> {
        self.samples.as_deref()
    }

    pub fn scale_exponent(&self) -> f64 {
        self.scale_exponent
    }

    /// Multiplier applied to the shared sequence at node `k` (delay line only).
    pub fn scale(&self, k: usize) -> f64 {
        self.variances[k].powf(self.scale_exponent)
    }
}

fn check_variances(variances: &[f64]) -> Result<(), SignalError> {
    if variances.is_empty() {
        return Err(SignalError::NodeCount {
            expected: 1,
            got: 0,
        });
    }
    for (k, &v) in variances.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(SignalError::InvalidVariance {
                node: k + 1,
                value: v,
            });
        }
    }
    Ok(())
}

/// Measurement-noise level.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// The same SNR (dB) at every node.
    Snr(f64),
    /// One SNR (dB) per node.
    PerNodeSnr(Vec<f64>),
    /// `v ≡ 0`.
    Noiseless,
}

impl NoiseSpec {
    /// Resolves per-node noise variances from per-node noiseless powers.
    ///
    /// A node with zero signal power gets zero noise, since no SNR can be
    /// calibrated against it.
    pub fn variances(&self, signal_powers: &[f64]) -> Result<Vec<f64>, SignalError> {
        let n = signal_powers.len();
        let snr_at = |k: usize| -> Option<f64> {
            match self {
                NoiseSpec::Snr(s) => Some(*s),
                NoiseSpec::PerNodeSnr(v) => Some(v[k]),
                NoiseSpec::Noiseless => None,
            }
        };
        if let NoiseSpec::PerNodeSnr(v) = self {
            if v.len() != n {
                return Err(SignalError::NodeCount {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        (0..n)
            .map(|k| match snr_at(k) {
                None => Ok(0.0),
                Some(_) if signal_powers[k] == 0.0 => Ok(0.0),
                Some(snr) => noise_variance_for_snr(signal_powers[k], snr),
            })
            .collect()
    }
}

/// All nodes' data at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFrame {
    nodes: usize,
    taps: usize,
    u: Vec<f64>,
    d: Vec<f64>,
    noise: Vec<f64>,
}

impl SampleFrame {
    /// Assembles a frame from regressor rows (row-major, `nodes × taps`) and
    /// measurements. The recorded noise is `d - u·w°` for the given system.
    pub fn new(u: Vec<f64>, d: Vec<f64>, system: &UnknownSystem) -> Self {
        let taps = system.len();
        let nodes = d.len();
        assert_eq!(u.len(), nodes * taps, "regressor table shape mismatch");
        let noise = (0..nodes)
            .map(|k| d[k] - dot(&u[k * taps..(k + 1) * taps], system.taps()))
            .collect();
        Self {
            nodes,
            taps,
            u,
            d,
            noise,
        }
    }

    fn from_parts(taps: usize, u: Vec<f64>, clean: Vec<f64>, draws: Vec<f64>) -> Self {
        let d: Vec<f64> = clean.iter().zip(&draws).map(|(c, v)| c + v).collect();
        let noise = d.iter().zip(&clean).map(|(d, c)| d - c).collect();
        Self {
            nodes: d.len(),
            taps,
            u,
            d,
            noise,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// Regressor row of node `k`.
    #[inline]
    pub fn u(&self, k: usize) -> &[f64] {
        &self.u[k * self.taps..(k + 1) * self.taps]
    }

    #[inline]
    pub fn d(&self, k: usize) -> f64 {
        self.d[k]
    }

    /// Realized additive noise at node `k`; `d(k) - u(k)·w°` exactly.
    pub fn noise(&self, k: usize) -> f64 {
        self.noise[k]
    }

    /// Noiseless measurement `u(k)·w°` at node `k`.
    pub fn clean(&self, k: usize) -> f64 {
        self.d[k] - self.noise[k]
    }

    pub fn regressors(&self) -> &[f64] {
        &self.u
    }

    pub fn measurements(&self) -> &[f64] {
        &self.d
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// White Gaussian regressors, fresh at every node and instant.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    system: UnknownSystem,
    std_u: Vec<f64>,
    std_v: Vec<f64>,
    rng: ChaCha8Rng,
    remaining: usize,
}

/// Stream of `horizon` frames with `u_k ~ N(0, σ²_{u,k} I)` and Gaussian noise
/// calibrated to `noise`.
pub fn gaussian_source(
    spec: &SourceSpec,
    system: &UnknownSystem,
    noise: &NoiseSpec,
    seed: u64,
    horizon: usize,
) -> Result<GaussianSource, SignalError> {
    if spec.kind != SourceKind::WhiteGaussian {
        return Err(SignalError::WrongKind("white Gaussian"));
    }
    let powers: Vec<f64> = spec
        .variances
        .iter()
        .map(|v| v * system.norm_sq())
        .collect();
    let noise_var = noise.variances(&powers)?;
    Ok(GaussianSource {
        system: system.clone(),
        std_u: spec.variances.iter().map(|v| v.sqrt()).collect(),
        std_v: noise_var.iter().map(|v| v.sqrt()).collect(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        remaining: horizon,
    })
}

impl GaussianSource {
    pub fn noise_std(&self) -> &[f64] {
        &self.std_v
    }
}

impl Iterator for GaussianSource {
    type Item = SampleFrame;

    fn next(&mut self) -> Option<SampleFrame> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let m = self.system.len();
        let n = self.std_u.len();
        let mut u = Vec::with_capacity(n * m);
        for &s in &self.std_u {
            for _ in 0..m {
                let z: f64 = self.rng.sample(StandardNormal);
                u.push(s * z);
            }
        }
        let mut clean = Vec::with_capacity(n);
        let mut draws = Vec::with_capacity(n);
        for k in 0..n {
            clean.push(dot(&u[k * m..(k + 1) * m], self.system.taps()));
            let z: f64 = self.rng.sample(StandardNormal);
            draws.push(self.std_v[k] * z);
        }
        Some(SampleFrame::from_parts(m, u, clean, draws))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Tapped delay line over a shared sequence; one frame per sample.
#[derive(Debug, Clone)]
pub struct DelayLineSource {
    system: UnknownSystem,
    samples: Arc<[f64]>,
    scales: Vec<f64>,
    std_v: Vec<f64>,
    rng: ChaCha8Rng,
    index: usize,
}

/// Node `k` sees `scale_k · [s(i), s(i-1), …, s(i-M+1)]` with zero pre-history.
/// Noise is calibrated per node against the empirical power of the noiseless
/// output over the whole sequence.
pub fn delay_line_source(
    spec: &SourceSpec,
    system: &UnknownSystem,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<DelayLineSource, SignalError> {
    let samples = match (&spec.kind, &spec.samples) {
        (SourceKind::DelayLine, Some(s)) => s.clone(),
        (SourceKind::DelayLine, None) => return Err(SignalError::EmptySamples),
        _ => return Err(SignalError::WrongKind("delay-line")),
    };
    let m = system.len();
    if samples.is_empty() {
        return Err(SignalError::EmptySamples);
    }
    if samples.len() < m {
        return Err(SignalError::TooFewSamples {
            len: samples.len(),
            taps: m,
        });
    }
    // Unscaled filter output; node powers follow by the squared scale.
    let base_power = (0..samples.len())
        .map(|i| {
            let y: f64 = (0..m)
                .filter(|&j| j <= i)
                .map(|j| system.taps()[j] * samples[i - j])
                .sum();
            y * y
        })
        .sum::<f64>()
        / samples.len() as f64;
    let scales: Vec<f64> = (0..spec.node_count()).map(|k| spec.scale(k)).collect();
    let powers: Vec<f64> = scales.iter().map(|s| s * s * base_power).collect();
    let noise_var = noise.variances(&powers)?;
    Ok(DelayLineSource {
        system: system.clone(),
        samples,
        scales,
        std_v: noise_var.iter().map(|v| v.sqrt()).collect(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        index: 0,
    })
}

impl DelayLineSource {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.std_v
    }
}

impl Iterator for DelayLineSource {
    type Item = SampleFrame;

    fn next(&mut self) -> Option<SampleFrame> {
        let i = self.index;
        if i >= self.samples.len() {
            return None;
        }
        self.index += 1;
        let m = self.system.len();
        let n = self.scales.len();
        let mut u = Vec::with_capacity(n * m);
        for &scale in &self.scales {
            for j in 0..m {
                u.push(if j <= i {
                    scale * self.samples[i - j]
                } else {
                    0.0
                });
            }
        }
        let mut clean = Vec::with_capacity(n);
        let mut draws = Vec::with_capacity(n);
        for k in 0..n {
            clean.push(dot(&u[k * m..(k + 1) * m], self.system.taps()));
            let z: f64 = self.rng.sample(StandardNormal);
            draws.push(self.std_v[k] * z);
        }
        Some(SampleFrame::from_parts(m, u, clean, draws))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.samples.len() - self.index;
        (left, Some(left))
    }
}
