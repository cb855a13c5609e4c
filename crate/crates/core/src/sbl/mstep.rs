//! Closed-form updates of the angle offsets and the per-delay Doppler values
//! given the posterior mean of the gains.

use crate::numeric::{CMat, C64};
use crate::ul::{GridConfig, MeasurementPack};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

fn strong(energy: &[f64], threshold: f64) -> Vec<usize> {
    let max = energy.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    (0..energy.len()).filter(|&i| energy[i] > threshold * max).collect()
}

fn solve_spd(h: DMatrix<f64>, r: DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        let x = ch.solve(&r);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    h.lu().solve(&r).filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Least-squares angle offsets for the rows of `gains` that carry energy.
///
/// Rows without energy keep `prev`. A singular system returns `prev` unchanged.
pub fn m_step_beta(
    gains: &CMat,
    pack: &MeasurementPack,
    y: &CMat,
    grid: &GridConfig,
    prev: &[f64],
    threshold: f64,
) -> Vec<f64> {
    let energy: Vec<f64> = (0..gains.nrows()).map(|n| gains.row(n).norm_squared()).collect();
    let rows = strong(&energy, threshold);
    if rows.is_empty() {
        log::warn!("angle-offset update skipped: all-zero gains");
        return prev.to_vec();
    }
    let w = gains * &pack.c;
    let resid = y - &pack.a * &w;
    let bhr = pack.b.adjoint() * resid;
    let bhb = pack.b.adjoint() * &pack.b;
    let wwt = w.conjugate() * w.transpose();
    let k = rows.len();
    let h = DMatrix::from_fn(k, k, |i, j| (bhb[(rows[i], rows[j])] * wwt[(rows[i], rows[j])]).re);
    let r = DVector::from_fn(k, |i, _| {
        let a = rows[i];
        (0..w.ncols()).map(|n| (w[(a, n)].conj() * bhr[(a, n)]).re).sum::<f64>()
    });
    let mut out = prev.to_vec();
    match solve_spd(h, r) {
        Some(x) => {
            for (i, &a) in rows.iter().enumerate() {
                out[a] = grid.clip_beta(a, x[i]);
            }
        }
        None => log::warn!("angle-offset normal matrix is singular; keeping previous offsets"),
    }
    out
}

/// Least-squares per-delay Doppler under the first-order time model.
///
/// Delay columns without energy keep `prev`; estimates are clipped to `±bound`.
pub fn m_step_upsilon(
    gains: &CMat,
    pack: &MeasurementPack,
    y: &CMat,
    prev: &[f64],
    bound: f64,
    threshold: f64,
) -> Vec<f64> {
    let energy: Vec<f64> = (0..gains.ncols()).map(|l| gains.column(l).norm_squared()).collect();
    let cols = strong(&energy, threshold);
    if cols.is_empty() {
        log::warn!("Doppler update skipped: all-zero gains");
        return prev.to_vec();
    }
    let nt = pack.train_len();
    let eps: Vec<f64> = (0..nt).map(|n| 2.0 * PI * n as f64 * pack.sample_period).collect();
    let d = &pack.d;
    let ag = &pack.a_tilde * gains;
    let resid = y - &ag * d;
    let q = gains.adjoint() * &pack.gram_angle * gains;
    let v = ag.adjoint() * resid;
    let k = cols.len();
    let h = DMatrix::from_fn(k, k, |i, j| {
        let (a, b) = (cols[i], cols[j]);
        let s: C64 = (0..nt).map(|n| d[(a, n)].conj() * d[(b, n)] * (eps[n] * eps[n])).sum();
        (q[(a, b)] * s).re
    });
    let r = DVector::from_fn(k, |i, _| {
        let a = cols[i];
        (0..nt).map(|n| eps[n] * (d[(a, n)].conj() * v[(a, n)]).im).sum::<f64>()
    });
    let mut out = prev.to_vec();
    match solve_spd(h, r) {
        Some(x) => {
            for (i, &a) in cols.iter().enumerate() {
                out[a] = x[i].clamp(-bound, bound);
            }
        }
        None => log::warn!("Doppler normal matrix is singular; keeping previous values"),
    }
    out
}
