//! Full EM-VB solver: dense Gaussian posterior over all grid gains.

use super::{relative_change, HyperState, SolverConfig, SolverOutcome, SparsePosterior, UlProblem};
use crate::error::{Error, Result};
use crate::numeric::{CMat, CVec, C64};
use crate::sbl::mstep::{m_step_beta, m_step_upsilon};
use crate::ul::{build_measurement, MeasurementPack, UlGridEstimate};

/// Gaussian posterior of the gains given the precisions.
pub fn e_step_gain(gram: &CMat, proj: &CVec, alpha: &[f64], noise_var: f64) -> Result<SparsePosterior> {
    let n = gram.nrows();
    if alpha.len() != n || proj.len() != n {
        return Err(Error::Dimension(format!("Gram {n}, precisions {}, projection {}", alpha.len(), proj.len())));
    }
    let mut prec = gram / C64::new(noise_var, 0.0);
    for (i, a) in alpha.iter().enumerate() {
        prec[(i, i)] += C64::new(*a, 0.0);
    }
    let chol = match crate::numeric::hpd_cholesky(prec.clone()) {
        Some(c) => c,
        None => {
            let eig = nalgebra::SymmetricEigen::new(prec).eigenvalues;
            let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
            return Err(Error::Numerical(format!(
                "posterior precision is not positive definite (eigenvalues in [{lo:.3e}, {hi:.3e}], condition ~ {:.3e})",
                hi / lo.abs()
            )));
        }
    };
    let cov = chol.inverse();
    let mean = &cov * proj / C64::new(noise_var, 0.0);
    Ok(SparsePosterior { mean, cov })
}

/// Gamma-posterior mean of each precision.
pub fn e_step_alpha(post: &SparsePosterior, hyper: &HyperState) -> Vec<f64> {
    (0..post.mean.len())
        .map(|i| (hyper.shape + 1.0) / (hyper.rate + post.mean[i].norm_sqr() + post.cov[(i, i)].re))
        .collect()
}

pub(crate) fn m_steps(
    gains: &CMat,
    pack: &MeasurementPack,
    problem: &UlProblem,
    beta: &[f64],
    upsilon: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let beta = m_step_beta(gains, pack, problem.y, problem.grid, beta, cfg.active_threshold);
    let pack = build_measurement(problem.dict, problem.training, upsilon, &beta, problem.sample_period)?;
    let upsilon = m_step_upsilon(gains, &pack, problem.y, upsilon, cfg.doppler_bound, cfg.active_threshold);
    Ok((beta, upsilon))
}

/// Alternates the dense posterior update with the offset and Doppler updates.
pub fn run_emvb(problem: &UlProblem, cfg: &SolverConfig) -> Result<(SolverOutcome, SparsePosterior)> {
    let (na, nl) = (problem.grid.num_angles(), problem.grid.num_delays);
    let dim = na * nl;
    let noise_var = problem.solver_noise_var();
    let mut hyper = HyperState::uniform(dim, 1.0, cfg.prior_shape, cfg.prior_rate);
    let mut beta = vec![0.0; na];
    let mut upsilon = vec![0.0; nl];
    let mut post = SparsePosterior {
        mean: CVec::zeros(dim),
        cov: CMat::from_diagonal(&CVec::from_element(dim, C64::new(1.0, 0.0))),
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        let pack = build_measurement(problem.dict, problem.training, &upsilon, &beta, problem.sample_period)?;
        let prev = post.mean.clone();
        post = e_step_gain(&pack.gram(), &pack.project(problem.y), &hyper.alpha, noise_var)?;
        hyper.alpha = e_step_alpha(&post, &hyper);
        let gains = CMat::from_column_slice(na, nl, post.mean.as_slice());
        (beta, upsilon) = m_steps(&gains, &pack, problem, &beta, &upsilon, cfg)?;
        iterations += 1;
        if cfg.keep_trace {
            trace.push(UlGridEstimate { gains, beta: beta.clone(), upsilon: upsilon.clone() });
        }
        if relative_change(&post.mean, &prev) < cfg.tol {
            break;
        }
    }
    let estimate = UlGridEstimate::from_gain_vector(&post.mean, na, nl, beta, upsilon);
    Ok((SolverOutcome { estimate, iterations, trace }, post))
}
