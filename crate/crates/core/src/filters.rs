//! Diffusion LMS and diffusion leaky LMS in adapt-then-combine (ATC) and
//! combine-then-adapt (CTA) order.
//!
//! Both orderings share the same adaptation rule. Starting from a prior `ψ`,
//! node `k` forms
//!
//! ```text
//! (1 − μγ)·ψ + μ Σ_{l ∈ N_k} c(l,k) · u_l^T (d_l − u_l ψ)
//! ```
//!
//! and the combination rule `Σ_{l ∈ N_k} a(l,k) · x_l`. ATC adapts from the
//! previous estimate `w_k` into `φ_k` and then combines the `φ`s; CTA combines
//! the previous `w`s into `φ_k` and adapts from it. With `γ = 0` both reduce
//! to ordinary diffusion LMS.
//!
//! A round is strictly two-phase: every node finishes the first phase before
//! any node starts the second, and each phase reads only values produced by
//! the phase before it. Neighbor sums run in ascending node order, so results
//! are bit-reproducible and independent of the order nodes are visited.

use thiserror::Error;

use crate::analysis::{detect_divergence, DivergenceReport, DEFAULT_DIVERGENCE_THRESHOLD};
use crate::network::{CombinationWeights, Topology};
use crate::signal::{dot, SampleFrame};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("step size mu must be positive and finite, got {0}")]
    InvalidStepSize(f64),
    #[error("leakage gamma must be nonnegative and finite, got {0}")]
    InvalidLeakage(f64),
    #[error("estimate table has {got} entries, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("source ended after {produced} of {horizon} rounds")]
    SourceExhausted { produced: usize, horizon: usize },
    #[error("frame has {frame_nodes} nodes x {frame_taps} taps, filter has {nodes} x {taps}")]
    FrameMismatch {
        nodes: usize,
        taps: usize,
        frame_nodes: usize,
        frame_taps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Adapt, then combine.
    Atc,
    /// Combine, then adapt.
    Cta,
}

/// Step size, leakage and ordering of one diffusion filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmSpec {
    strategy: Strategy,
    mu: f64,
    gamma: f64,
}

impl AlgorithmSpec {
    /// `gamma = 0` gives plain diffusion LMS.
    ///
    /// `mu = 0` is accepted so that a frozen filter can serve as a baseline.
    pub fn new(strategy: Strategy, mu: f64, gamma: f64) -> Result<Self, FilterError> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(FilterError::InvalidStepSize(mu));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(FilterError::InvalidLeakage(gamma));
        }
        Ok(Self {
            strategy,
            mu,
            gamma,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_mu(self, mu: f64) -> Result<Self, FilterError> {
        Self::new(self.strategy, mu, self.gamma)
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self, FilterError> {
        Self::new(self.strategy, self.mu, gamma)
    }

    #[inline]
    fn leak(&self) -> f64 {
        1.0 - self.mu * self.gamma
    }
}

/// Per-node estimates `w` and intermediate estimates `φ`, both `N × M`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    nodes: usize,
    taps: usize,
    w: Vec<f64>,
    phi: Vec<f64>,
}

impl NodeState {
    /// All-zero state.
    pub fn zeros(nodes: usize, taps: usize) -> Self {
        Self {
            nodes,
            taps,
            w: vec![0.0; nodes * taps],
            phi: vec![0.0; nodes * taps],
        }
    }

    /// State with the given estimates and `φ = w`.
    pub fn from_estimates(nodes: usize, taps: usize, w: Vec<f64>) -> Result<Self, FilterError> {
        if w.len() != nodes * taps {
            return Err(FilterError::Shape {
                expected: nodes * taps,
                got: w.len(),
            });
        }
        Ok(Self {
            nodes,
            taps,
            phi: w.clone(),
            w,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    #[inline]
    pub fn w(&self, k: usize) -> &[f64] {
        &self.w[k * self.taps..(k + 1) * self.taps]
    }

    #[inline]
    pub fn phi(&self, k: usize) -> &[f64] {
        &self.phi[k * self.taps..(k + 1) * self.taps]
    }

    /// Row-major estimate table.
    pub fn estimates(&self) -> &[f64] {
        &self.w
    }

    pub fn intermediates(&self) -> &[f64] {
        &self.phi
    }
}

/// Zero initial state for `n` nodes and `m` taps.
pub fn init_state(n: usize, m: usize) -> NodeState {
    NodeState::zeros(n, m)
}

fn check_shapes(
    state: &NodeState,
    frame: &SampleFrame,
    weights: &CombinationWeights,
    topo: &Topology,
) {
    assert_eq!(frame.node_count(), state.nodes, "frame node count mismatch");
    assert_eq!(frame.taps(), state.taps, "frame tap count mismatch");
    assert_eq!(
        weights.node_count(),
        state.nodes,
        "weight table size mismatch"
    );
    assert_eq!(topo.node_count(), state.nodes, "topology size mismatch");
}

/// Writes `(1 − μγ)·prior + μ Σ_l c(l,k) u_l^T (d_l − u_l·prior)` into `out`.
#[inline]
fn adapt_node(
    k: usize,
    prior: &[f64],
    frame: &SampleFrame,
    spec: &AlgorithmSpec,
    weights: &CombinationWeights,
    topo: &Topology,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &l in topo.neighbors(k) {
        let c = weights.c(l, k);
        if c == 0.0 {
            continue;
        }
        let u = frame.u(l);
        let g = c * (frame.d(l) - dot(u, prior));
        for (acc, &uj) in out.iter_mut().zip(u) {
            *acc += g * uj;
        }
    }
    let leak = spec.leak();
    for (o, &p) in out.iter_mut().zip(prior) {
        *o = leak * p + spec.mu * *o;
    }
}

/// Writes `Σ_l a(l,k) · source_l` into `out`.
#[inline]
fn combine_node(
    k: usize,
    source: &[f64],
    taps: usize,
    weights: &CombinationWeights,
    topo: &Topology,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &l in topo.neighbors(k) {
        let a = weights.a(l, k);
        if a == 0.0 {
            continue;
        }
        for (acc, &x) in out.iter_mut().zip(&source[l * taps..(l + 1) * taps]) {
            *acc += a * x;
        }
    }
}

fn atc_step_in_order(
    state: &NodeState,
    frame: &SampleFrame,
    spec: &AlgorithmSpec,
    weights: &CombinationWeights,
    topo: &Topology,
    order: impl Iterator<Item = usize> + Clone,
) -> NodeState {
    check_shapes(state, frame, weights, topo);
    let m = state.taps;
    let mut next = NodeState::zeros(state.nodes, m);
    for k in order.clone() {
        adapt_node(
            k,
            state.w(k),
            frame,
            spec,
            weights,
            topo,
            &mut next.phi[k * m..(k + 1) * m],
        );
    }
    for k in order {
        combine_node(
            k,
            &next.phi,
            m,
            weights,
            topo,
            &mut next.w[k * m..(k + 1) * m],
        );
    }
    next
}

fn cta_step_in_order(
    state: &NodeState,
    frame: &SampleFrame,
    spec: &AlgorithmSpec,
    weights: &CombinationWeights,
    topo: &Topology,
    order: impl Iterator<Item = usize> + Clone,
) -> NodeState {
    check_shapes(state, frame, weights, topo);
    let m = state.taps;
    let mut next = NodeState::zeros(state.nodes, m);
    for k in order.clone() {
        combine_node(
            k,
            &state.w,
            m,
            weights,
            topo,
            &mut next.phi[k * m..(k + 1) * m],
        );
    }
    for k in order {
        let (phi, w) = (
            &next.phi[k * m..(k + 1) * m],
            &mut next.w[k * m..(k + 1) * m],
        );
        adapt_node(k, phi, frame, spec, weights, topo, w);
    }
    next
}

/// One adapt-then-combine round.
///
/// # Panics
///
/// If the frame, weights or topology disagree with the state's shape.
pub fn atc_step(
    state: &NodeState,
    frame: &SampleFrame,
    spec: &AlgorithmSpec,
    weights: &CombinationWeights,
    topo: &Topology,
) -> NodeState {
    atc_step_in_order(state, frame, spec, weights, topo, 0..state.nodes)
}

/// One combine-then-adapt round.
///
/// # Panics
///
/// If the frame, weights or topology disagree with the state's shape.
pub fn cta_step(
    state: &NodeState,
    frame: &SampleFrame,
    spec: &AlgorithmSpec,
    weights: &CombinationWeights,
    topo: &Topology,
) -> NodeState {
    cta_step_in_order(state, frame, spec, weights, topo, 0..state.nodes)
}

/// One round in the ordering named by `spec`.
pub fn step(
    state: &NodeState,
    frame: &SampleFrame,
    spec: &AlgorithmSpec,
    weights: &CombinationWeights,
    topo: &Topology,
) -> NodeState {
    match spec.strategy {
        Strategy::Atc => atc_step(state, frame, spec, weights, topo),
        Strategy::Cta => cta_step(state, frame, spec, weights, topo),
    }
}

/// Snapshots of a run. `snapshots[0]` is the initial state and
/// `snapshots[i]` the state after round `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub snapshots: Vec<NodeState>,
    /// Set when the run stopped early on a non-finite or runaway estimate;
    /// the offending state is the last snapshot.
    pub divergence: Option<DivergenceReport>,
}

/// Drives `horizon` rounds from the zero state, keeping every snapshot.
pub fn run_filter<I>(
    topo: &Topology,
    weights: &CombinationWeights,
    spec: &AlgorithmSpec,
    source: I,
    horizon: usize,
) -> Result<FilterRun, FilterError>
where
    I: IntoIterator<Item = SampleFrame>,
{
    let n = topo.node_count();
    let mut frames = source.into_iter().peekable();
    let m = match frames.peek() {
        Some(f) => f.taps(),
        None if horizon == 0 => 0,
        None => {
            return Err(FilterError::SourceExhausted {
                produced: 0,
                horizon,
            })
        }
    };
    let mut snapshots = vec![init_state(n, m)];
    for round in 1..=horizon {
        let frame = frames.next().ok_or(FilterError::SourceExhausted {
            produced: round - 1,
            horizon,
        })?;
        if frame.node_count() != n || frame.taps() != m {
            return Err(FilterError::FrameMismatch {
                nodes: n,
                taps: m,
                frame_nodes: frame.node_count(),
                frame_taps: frame.taps(),
            });
        }
        let next = step(snapshots.last().unwrap(), &frame, spec, weights, topo);
        let flagged = detect_divergence(&next, DEFAULT_DIVERGENCE_THRESHOLD);
        snapshots.push(next);
        if let Some(mut report) = flagged {
            report.iteration = Some(round);
            return Ok(FilterRun {
                snapshots,
                divergence: Some(report),
            });
        }
    }
    Ok(FilterRun {
        snapshots,
        divergence: None,
    })
}
