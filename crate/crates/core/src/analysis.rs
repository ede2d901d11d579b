//! Metrics and theory oracles: network MSD, steady state, divergence, the
//! leaky-LMS biased fixed point and mean-stability step-size bounds.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::filters::NodeState;

/// Value returned by [`network_msd_db`] when every estimate is exact.
pub const MSD_EXACT_SENTINEL: f64 = f64::NEG_INFINITY;

/// Max-norm above which an estimate counts as divergent.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("R + γI is singular")]
    Singular,
    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    Shape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("gamma must be nonnegative and finite, got {0}")]
    InvalidGamma(f64),
    #[error("regressor variance must be positive, got {0}")]
    InvalidVariance(f64),
    #[error("window {window} exceeds trace length {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error("window must be at least 1")]
    EmptyWindow,
}

/// `Σ_l ‖w_l − w°‖² / N` for a row-major `N × M` estimate table.
pub fn network_msd(estimates: &[f64], w_o: &[f64]) -> f64 {
    let m = w_o.len();
    assert!(
        m > 0 && estimates.len().is_multiple_of(m),
        "estimate table shape mismatch"
    );
    let n = estimates.len() / m;
    let total: f64 = estimates
        .chunks_exact(m)
        .map(|row| squared_deviation(row, w_o))
        .sum();
    total / n as f64
}

/// Network MSD in dB; [`MSD_EXACT_SENTINEL`] when the deviation is exactly zero.
pub fn network_msd_db(estimates: &[f64], w_o: &[f64]) -> f64 {
    to_db(network_msd(estimates, w_o))
}

pub fn squared_deviation(w: &[f64], w_o: &[f64]) -> f64 {
    w.iter().zip(w_o).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `10·log10(x)`, mapping exact zero to [`MSD_EXACT_SENTINEL`].
pub fn to_db(linear: f64) -> f64 {
    if linear == 0.0 {
        MSD_EXACT_SENTINEL
    } else {
        10.0 * linear.log10()
    }
}

/// `(R + γI)⁻¹ R w°`, the minimizer of `E|d − u w|² + γ wᵀw` for a single node.
pub fn leaky_fixed_point(
    r: &DMatrix<f64>,
    gamma: f64,
    w_o: &[f64],
) -> Result<Vec<f64>, AnalysisError> {
    let m = w_o.len();
    if r.nrows() != m || r.ncols() != m {
        return Err(AnalysisError::Shape {
            expected: m,
            rows: r.nrows(),
            cols: r.ncols(),
        });
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(AnalysisError::InvalidGamma(gamma));
    }
    let regularized = r + DMatrix::identity(m, m) * gamma;
    let rhs = r * DVector::from_column_slice(w_o);
    let lu = regularized.lu();
    if !lu.is_invertible() {
        return Err(AnalysisError::Singular);
    }
    let sol = lu.solve(&rhs).ok_or(AnalysisError::Singular)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::Singular);
    }
    Ok(sol.iter().copied().collect())
}

/// Mean-stability bound `2 / (γ + λ_max)` for white regressors with
/// `R = σ² I` of size `m`, so `λ_max = σ²` regardless of `m`.
pub fn step_size_upper_bound(sigma_u_sq: f64, m: usize, gamma: f64) -> Result<f64, AnalysisError> {
    if !(sigma_u_sq > 0.0) || !sigma_u_sq.is_finite() || m == 0 {
        return Err(AnalysisError::InvalidVariance(sigma_u_sq));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(AnalysisError::InvalidGamma(gamma));
    }
    Ok(2.0 / (gamma + sigma_u_sq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceCause {
    NonFinite,
    Exceeded { max_norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    /// Zero-based node index.
    pub node: usize,
    /// Round at which the divergence was first seen, when known.
    pub iteration: Option<usize>,
    pub cause: DivergenceCause,
}

/// Flags the first node whose estimate is non-finite or whose max-norm
/// exceeds `threshold`.
pub fn detect_divergence(state: &NodeState, threshold: f64) -> Option<DivergenceReport> {
    (0..state.node_count()).find_map(|k| {
        let row = state.w(k);
        let cause = if row.iter().any(|x| !x.is_finite()) {
            DivergenceCause::NonFinite
        } else {
            let max_norm = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if max_norm <= threshold {
                return None;
            }
            DivergenceCause::Exceeded { max_norm }
        };
        Some(DivergenceReport {
            node: k,
            iteration: None,
            cause,
        })
    })
}

/// Ensemble-averaged learning curve of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdTrace {
    /// Network MSD (dB) after each round, averaged in the linear domain.
    pub per_iteration_db: Vec<f64>,
    /// Optional per-node MSD (dB) curves, indexed `[node][round]`.
    pub per_node_db: Option<Vec<Vec<f64>>>,
    /// Trials contributing to the average.
    pub trials: usize,
    /// Trials excluded because they diverged.
    pub divergent_trials: usize,
}

impl MsdTrace {
    pub fn len(&self) -> usize {
        self.per_iteration_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_iteration_db.is_empty()
    }
}

/// Mean of the last `window` dB values of the trace.
pub fn steady_state_msd(trace: &MsdTrace, window: usize) -> Result<f64, AnalysisError> {
    steady_state_of(&trace.per_iteration_db, window)
}

pub fn steady_state_of(values_db: &[f64], window: usize) -> Result<f64, AnalysisError> {
    if window == 0 {
        return Err(AnalysisError::EmptyWindow);
    }
    if window > values_db.len() {
        return Err(AnalysisError::WindowTooLong {
            window,
            len: values_db.len(),
        });
    }
    let tail = &values_db[values_db.len() - window..];
    Ok(tail.iter().sum::<f64>() / window as f64)
}

/// First round index from which every later value stays within `tolerance_db`
/// of `level_db`.
pub fn settling_index(values_db: &[f64], level_db: f64, tolerance_db: f64) -> Option<usize> {
    let mut start = None;
    for (i, v) in values_db.iter().enumerate().rev() {
        if (v - level_db).abs() <= tolerance_db {
            start = Some(i);
        } else {
            break;
        }
    }
    start
}
