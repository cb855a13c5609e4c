//! Sparse Bayesian recovery of the UL grid representation.
//!
//! Both solvers alternate a posterior update over the vectorized gains with
//! closed-form updates of the angle offsets and per-delay Doppler values.

pub mod emvb;
pub mod fast;
pub mod mstep;

use crate::numeric::{CMat, CVec, C64};
use crate::ul::{Dictionaries, GridConfig, UlGridEstimate};
use serde::{Deserialize, Serialize};

pub use emvb::{e_step_alpha, e_step_gain, run_emvb};
pub use fast::{decide_and_update, run_fast_emvb, sparsity_factors, Action, FastState};
pub use mstep::{m_step_beta, m_step_upsilon};

/// Gamma-prior precisions over the vectorized gains.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperState {
    pub alpha: Vec<f64>,
    pub shape: f64,
    pub rate: f64,
}

impl HyperState {
    pub fn uniform(dim: usize, alpha: f64, shape: f64, rate: f64) -> Self {
        Self { alpha: vec![alpha; dim], shape, rate }
    }
}

/// Gaussian posterior of the vectorized gains.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePosterior {
    pub mean: CVec,
    pub cov: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub prior_shape: f64,
    pub prior_rate: f64,
    /// Early exit when the relative change of the gain mean drops below this.
    pub tol: f64,
    /// Doppler estimates are clipped to `[-doppler_bound, doppler_bound]` (Hz).
    pub doppler_bound: f64,
    /// Rows/columns of the gain mean below this fraction of the strongest are
    /// left out of the offset and Doppler updates.
    pub active_threshold: f64,
    /// Fast solver: stop when no action raises the log-evidence by more (nats).
    pub inner_tol: f64,
    /// Fast solver: action budget per posterior update.
    pub max_actions: usize,
    /// Keep the estimate after every outer iteration.
    pub keep_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 10,
            prior_shape: 1e-4,
            prior_rate: 1e-4,
            tol: 1e-4,
            doppler_bound: 2220.0,
            active_threshold: 1e-6,
            inner_tol: 1e-2,
            max_actions: 1000,
            keep_trace: false,
        }
    }
}

/// One user's UL recovery problem.
#[derive(Debug, Clone, Copy)]
pub struct UlProblem<'a> {
    pub dict: &'a Dictionaries,
    pub grid: &'a GridConfig,
    pub training: &'a [C64],
    /// M x N_t received training
    pub y: &'a CMat,
    pub noise_var: f64,
    pub sample_period: f64,
}

impl UlProblem<'_> {
    /// Noise variance used by the solvers; a tiny floor keeps noiseless problems defined.
    pub fn solver_noise_var(&self) -> f64 {
        let power: f64 = self.training.iter().map(|z| z.norm_sqr()).sum();
        self.noise_var.max(1e-12 * power)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutcome {
    pub estimate: UlGridEstimate,
    /// Outer iterations actually run.
    pub iterations: usize,
    /// Estimate after each outer iteration (only with `keep_trace`).
    pub trace: Vec<UlGridEstimate>,
}

impl SolverOutcome {
    /// Estimate after `iter` outer iterations; the final one if the run stopped earlier.
    pub fn at_iteration(&self, iter: usize) -> &UlGridEstimate {
        if iter == 0 || self.trace.is_empty() {
            return &self.estimate;
        }
        &self.trace[(iter - 1).min(self.trace.len() - 1)]
    }
}

pub(crate) fn relative_change(new: &CVec, old: &CVec) -> f64 {
    let denom = old.norm();
    if denom == 0.0 {
        if new.norm() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (new - old).norm() / denom
    }
}
