//! Uplink training observation model: angle dictionaries, the cyclic-shift
//! training matrix, its Doppler-modulated version, and the stacked
//! measurement operator with its Kronecker structure.

use crate::channel::{steering, GeometryConfig, Link, UserChannel};
use crate::error::{Error, Result};
use crate::numeric::{cis, cn, unit_phase, CMat, CVec, C64, ONE};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlTrainingConfig {
    /// Absolute sample where user 0's slot (CP included) begins.
    pub train_start: i64,
    pub cp_len: usize,
    pub training: Vec<C64>,
}

impl UlTrainingConfig {
    /// Constant-amplitude training with random phases, so the power equals `len`.
    pub fn random_phase<R: Rng + ?Sized>(train_start: i64, cp_len: usize, len: usize, rng: &mut R) -> Self {
        Self { train_start, cp_len, training: (0..len).map(|_| unit_phase(rng)).collect() }
    }

    pub fn len(&self) -> usize {
        self.training.len()
    }

    pub fn is_empty(&self) -> bool {
        self.training.is_empty()
    }

    /// Training power `||t||^2`.
    pub fn power(&self) -> f64 {
        self.training.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn slot_start(&self, user: usize) -> i64 {
        self.train_start + ((self.cp_len + self.len()) * user) as i64
    }

    /// First post-CP training sample of `user`; the phase reference of the UL gains.
    pub fn reference_sample(&self, user: usize) -> i64 {
        self.slot_start(user) + self.cp_len as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleGridKind {
    /// Uniform in angle at cell midpoints of `(-90deg, 90deg)`.
    Midpoint,
    /// Uniform in `sin(theta)`: `sin(theta_n) = -1 + 2n/N`.
    Sine,
}

/// Angle and delay sampling grids of the sparse UL representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// radians, ascending
    pub angles: Vec<f64>,
    pub num_delays: usize,
    /// Allowed off-grid offset interval per angle point.
    pub beta_bounds: Vec<(f64, f64)>,
}

impl GridConfig {
    pub fn new(kind: AngleGridKind, num_angles: usize, num_delays: usize) -> Self {
        let n = num_angles as f64;
        let angles: Vec<f64> = (0..num_angles)
            .map(|i| match kind {
                AngleGridKind::Midpoint => -PI / 2.0 + (i as f64 + 0.5) * PI / n,
                AngleGridKind::Sine => (-1.0 + 2.0 * i as f64 / n).asin(),
            })
            .collect();
        Self::from_angles(angles, num_delays)
    }

    /// Offsets are bounded by the midpoints to the neighbouring grid points; the
    /// outer points use their inner half-interval on both sides.
    pub fn from_angles(angles: Vec<f64>, num_delays: usize) -> Self {
        let n = angles.len();
        let half = |i: usize, j: usize| (angles[j] - angles[i]).abs() / 2.0;
        let beta_bounds = (0..n)
            .map(|i| {
                if n == 1 {
                    return (0.0, 0.0);
                }
                let lo = if i > 0 { half(i - 1, i) } else { half(0, 1) };
                let hi = if i + 1 < n { half(i, i + 1) } else { half(n - 2, n - 1) };
                (-lo, hi)
            })
            .collect();
        Self { angles, num_delays, beta_bounds }
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn dim(&self) -> usize {
        self.num_angles() * self.num_delays
    }

    /// Mean grid interval `r`.
    pub fn interval(&self) -> f64 {
        let n = self.angles.len();
        if n < 2 {
            return 0.0;
        }
        (self.angles[n - 1] - self.angles[0]) / (n - 1) as f64
    }

    pub fn nearest_angle(&self, theta: f64) -> usize {
        let mut best = 0;
        for (i, a) in self.angles.iter().enumerate() {
            if (a - theta).abs() < (self.angles[best] - theta).abs() {
                best = i;
            }
        }
        best
    }

    pub fn clip_beta(&self, n: usize, beta: f64) -> f64 {
        let (lo, hi) = self.beta_bounds[n];
        beta.clamp(lo, hi)
    }
}

/// Sparse UL representation: gains over (angle, delay) plus off-grid corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct UlGridEstimate {
    /// N x L
    pub gains: CMat,
    /// radians, per angle point
    pub beta: Vec<f64>,
    /// Hz, per delay tap
    pub upsilon: Vec<f64>,
}

impl UlGridEstimate {
    pub fn zeros(num_angles: usize, num_delays: usize) -> Self {
        Self { gains: CMat::zeros(num_angles, num_delays), beta: vec![0.0; num_angles], upsilon: vec![0.0; num_delays] }
    }

    /// Column-major vectorization, index `l * N + n`.
    pub fn gain_vector(&self) -> CVec {
        CVec::from_column_slice(self.gains.as_slice())
    }

    pub fn from_gain_vector(g: &CVec, num_angles: usize, num_delays: usize, beta: Vec<f64>, upsilon: Vec<f64>) -> Self {
        Self { gains: CMat::from_column_slice(num_angles, num_delays, g.as_slice()), beta, upsilon }
    }

    /// Ground truth in the grid representation: each path lands on its nearest
    /// angle point and its delay tap, with the gain carrying the slot's phase
    /// reference. When paths share a cell their gains add and the offsets of
    /// the strongest path are kept.
    pub fn from_paths(user: &UserChannel, grid: &GridConfig, training: &UlTrainingConfig, sample_period: f64) -> Self {
        let mut out = Self::zeros(grid.num_angles(), grid.num_delays);
        let t_ref = training.reference_sample(user.user_index) as f64 * sample_period;
        let mut best = CMat::zeros(grid.num_angles(), grid.num_delays).map(|_: C64| 0.0f64);
        for p in &user.paths {
            let n = grid.nearest_angle(p.angle);
            let l = p.tap(sample_period);
            if l >= grid.num_delays {
                continue;
            }
            out.gains[(n, l)] += p.gain * cis(2.0 * PI * p.doppler * t_ref);
            if p.gain.norm() > best[(n, l)] {
                best[(n, l)] = p.gain.norm();
                out.beta[n] = p.angle - grid.angles[n];
                out.upsilon[l] = p.doppler;
            }
        }
        out
    }
}

/// Angle dictionary `A` and its angle derivative `B` over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionaries {
    pub a: CMat,
    pub b: CMat,
}

pub fn build_dictionaries(grid: &GridConfig, geom: &GeometryConfig) -> Dictionaries {
    let (m, n) = (geom.num_antennas, grid.num_angles());
    let mut a = CMat::zeros(m, n);
    let mut b = CMat::zeros(m, n);
    for (i, &theta) in grid.angles.iter().enumerate() {
        let (av, bv) = steering(theta, geom, Link::Ul);
        a.set_column(i, &av);
        b.set_column(i, &bv);
    }
    Dictionaries { a, b }
}

/// Cyclic-shift training matrix: `D[l, n] = t[(n - l) mod N_t]`.
pub fn shift_matrix(training: &[C64], num_delays: usize) -> CMat {
    let nt = training.len();
    CMat::from_fn(num_delays, nt, |l, n| training[(n + nt * num_delays - l) % nt])
}

/// Everything the solvers need for one linearization point `(beta, upsilon)`.
#[derive(Debug, Clone)]
pub struct MeasurementPack {
    pub a: CMat,
    pub b: CMat,
    /// `A + B diag(beta)`
    pub a_tilde: CMat,
    /// L x N_t cyclic-shift training
    pub d: CMat,
    /// L x N_t Doppler-modulated training (first-order)
    pub c: CMat,
    /// `A~^H A~`
    pub gram_angle: CMat,
    /// `conj(C) C^T`
    pub gram_delay: CMat,
    pub sample_period: f64,
}

const TAYLOR_WARN: f64 = 0.1;

pub fn build_measurement(
    dict: &Dictionaries,
    training: &[C64],
    upsilon: &[f64],
    beta: &[f64],
    sample_period: f64,
) -> Result<MeasurementPack> {
    let (n_ang, l) = (dict.a.ncols(), upsilon.len());
    if beta.len() != n_ang {
        return Err(Error::Dimension(format!("{} offsets for {} angle points", beta.len(), n_ang)));
    }
    let nt = training.len();
    if let Some(v) = upsilon.iter().find(|v| (2.0 * PI * *v * sample_period * nt as f64).abs() > TAYLOR_WARN) {
        log::warn!("Doppler {v} Hz is outside the first-order regime for N_t = {nt}");
    }
    let mut a_tilde = dict.a.clone();
    for (i, &bt) in beta.iter().enumerate() {
        if bt != 0.0 {
            let col = dict.b.column(i) * C64::new(bt, 0.0);
            let mut dst = a_tilde.column_mut(i);
            dst += col;
        }
    }
    let d = shift_matrix(training, l);
    let c = CMat::from_fn(l, nt, |r, n| d[(r, n)] * C64::new(1.0, 2.0 * PI * n as f64 * sample_period * upsilon[r]));
    let gram_angle = a_tilde.adjoint() * &a_tilde;
    let gram_delay = c.conjugate() * c.transpose();
    Ok(MeasurementPack { a: dict.a.clone(), b: dict.b.clone(), a_tilde, d, c, gram_angle, gram_delay, sample_period })
}

impl MeasurementPack {
    pub fn num_angles(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_delays(&self) -> usize {
        self.c.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.a.nrows()
    }

    pub fn train_len(&self) -> usize {
        self.c.ncols()
    }

    pub fn dim(&self) -> usize {
        self.num_angles() * self.num_delays()
    }

    /// `(Phi^H Phi)[i, j]` for vectorized indices `i = l N + n`.
    #[inline]
    pub fn gram_entry(&self, i: usize, j: usize) -> C64 {
        let n = self.num_angles();
        self.gram_delay[(i / n, j / n)] * self.gram_angle[(i % n, j % n)]
    }

    pub fn gram_diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.gram_entry(i, i).re).collect()
    }

    /// Dense `Phi^H Phi`.
    pub fn gram(&self) -> CMat {
        self.gram_delay.kronecker(&self.gram_angle)
    }

    /// Explicit stacked operator; row `n M + m`, column `l N + n'`.
    pub fn phi(&self) -> CMat {
        let (m, nt) = (self.num_antennas(), self.train_len());
        let mut out = CMat::zeros(m * nt, self.dim());
        for t in 0..nt {
            let block = self.c.column(t).transpose().kronecker(&self.a_tilde);
            out.view_mut((t * m, 0), (m, self.dim())).copy_from(&block);
        }
        out
    }

    /// `Phi^H y` for an observation given as an M x N_t matrix.
    pub fn project(&self, y: &CMat) -> CVec {
        let z = self.a_tilde.adjoint() * y * self.c.adjoint();
        CVec::from_column_slice(z.as_slice())
    }

    /// `Phi g` reshaped to M x N_t, i.e. `A~ G C`.
    pub fn apply(&self, gains: &CMat) -> CMat {
        &self.a_tilde * gains * &self.c
    }
}

/// Received UL training of one user (M x N_t), with the exact Doppler phase
/// and cyclic training index.
pub fn simulate_ul_rx<R: Rng + ?Sized>(
    user: &UserChannel,
    training: &UlTrainingConfig,
    geom: &GeometryConfig,
    num_delays: usize,
    sample_period: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<CMat> {
    let nt = training.len();
    let mut y = CMat::zeros(geom.num_antennas, nt);
    let t0 = training.reference_sample(user.user_index);
    for p in &user.paths {
        let tap = p.tap(sample_period);
        if tap > training.cp_len || tap >= num_delays {
            return Err(Error::Contract(format!(
                "path delay of {tap} samples exceeds the CP ({}) or the delay grid ({num_delays})",
                training.cp_len
            )));
        }
        let (a, _) = steering(p.angle, geom, Link::Ul);
        for n in 0..nt {
            let phase = cis(2.0 * PI * p.doppler * (t0 + n as i64) as f64 * sample_period);
            let s = p.gain * phase * training.training[(n + nt - tap % nt) % nt];
            let mut col = y.column_mut(n);
            col.axpy(s, &a, ONE);
        }
    }
    if noise_var > 0.0 {
        y.iter_mut().for_each(|z| *z += cn(rng, noise_var));
    }
    Ok(y)
}

/// Stacks an M x N_t observation column-major into `N_t M` entries.
pub fn vec_obs(y: &CMat) -> CVec {
    CVec::from_column_slice(y.as_slice())
}
