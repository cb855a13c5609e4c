//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Offsets closer than this to an integer are treated as exactly on-grid.
pub const SNAP_TOL: f64 = 1e-12;

#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// Normalized Dirichlet kernel `(1/n) * sum_{k<n} exp(j 2 pi k x / n)`.
///
/// Equals 1 at integer multiples of `n` and 0 at other integers.
pub fn dirichlet(x: f64, n: usize) -> C64 {
    let nf = n as f64;
    let r = x.rem_euclid(nf);
    let near = r.round();
    if (r - near).abs() < SNAP_TOL {
        // x is an integer; kernel is a periodic delta (with the phase of x).
        return if (near as usize) % n == 0 { ONE } else { ZERO };
    }
    let mag = (PI * x).sin() / (nf * (PI * x / nf).sin());
    cis(PI * x * (nf - 1.0) / nf) * mag
}

/// Wraps an integer into `[-n/2, n/2)`.
#[inline]
pub fn wrap_centered(x: i64, n: usize) -> i64 {
    let n = n as i64;
    (x + n / 2).rem_euclid(n) - n / 2
}

/// Circular distance between two indices modulo `n`.
#[inline]
pub fn circ_dist(a: i64, b: i64, n: usize) -> i64 {
    let d = (a - b).rem_euclid(n as i64);
    d.min(n as i64 - d)
}

pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

pub fn unit_phase<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    cis(2.0 * PI * rng.random::<f64>())
}

/// Unitary DFT matrix with entries `exp(-j 2 pi r c / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |r, c| cis(-2.0 * PI * ((r * c) % n) as f64 / n as f64) * s)
}

/// Cholesky factor of a Hermitian matrix, `None` unless it is positive definite.
/// The complex factorization takes complex square roots and never fails on its own.
pub fn hpd_cholesky(m: CMat) -> Option<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
    let ch = m.cholesky()?;
    let ok = ch.l_dirty().diagonal().iter().all(|z| z.re > 0.0 && z.im.abs() <= 1e-12 * z.re);
    ok.then_some(ch)
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}
