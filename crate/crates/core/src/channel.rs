//! Geometric multipath channel: array steering, path sampling and the
//! time-varying impulse response.

use crate::error::{Error, Result};
use crate::numeric::{cis, cn, CVec, C64, ONE, ZERO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Ul,
    Dl,
}

/// Uniform linear array at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub num_antennas: usize,
    /// meters
    pub antenna_spacing: f64,
    /// meters
    pub dl_wavelength: f64,
    /// meters
    pub ul_wavelength: f64,
}

impl GeometryConfig {
    /// Half-wavelength array (relative to the uplink carrier).
    pub fn half_wavelength(num_antennas: usize, ul_carrier_hz: f64, dl_carrier_hz: f64) -> Self {
        let ul_wavelength = SPEED_OF_LIGHT / ul_carrier_hz;
        Self {
            num_antennas,
            antenna_spacing: ul_wavelength / 2.0,
            dl_wavelength: SPEED_OF_LIGHT / dl_carrier_hz,
            ul_wavelength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || !(self.antenna_spacing > 0.0) {
            return Err(Error::Config("array needs M >= 1 and d > 0".into()));
        }
        if !(self.dl_wavelength > 0.0 && self.ul_wavelength > 0.0) {
            return Err(Error::Config("wavelengths must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self, link: Link) -> f64 {
        match link {
            Link::Ul => self.ul_wavelength,
            Link::Dl => self.dl_wavelength,
        }
    }

    /// Spatial frequency `M d sin(theta) / lambda`, i.e. the angle position in
    /// units of angle-domain bins.
    pub fn angle_bin_position(&self, theta: f64, link: Link) -> f64 {
        self.num_antennas as f64 * self.antenna_spacing * theta.sin() / self.wavelength(link)
    }
}

/// Steering vector `a(theta)` and its derivative with respect to theta.
pub fn steering(theta: f64, cfg: &GeometryConfig, link: Link) -> (CVec, CVec) {
    let k = 2.0 * PI * cfg.antenna_spacing / cfg.wavelength(link);
    let (s, c) = theta.sin_cos();
    let a = CVec::from_fn(cfg.num_antennas, |m, _| cis(k * m as f64 * s));
    let b = CVec::from_fn(cfg.num_antennas, |m, _| {
        a[m] * C64::new(0.0, k * m as f64 * c)
    });
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    /// seconds
    pub delay: f64,
    /// Hz
    pub doppler: f64,
    /// radians
    pub angle: f64,
    pub gain: C64,
}

impl PathParams {
    /// Delay in whole samples.
    pub fn tap(&self, sample_period: f64) -> usize {
        (self.delay / sample_period).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserChannel {
    pub user_index: usize,
    pub paths: Vec<PathParams>,
}

/// How path angles are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleDraw {
    /// Uniform over `angle_range`.
    Uniform,
    /// Uniform over the listed angles (radians) that fall inside `angle_range`.
    Candidates(Vec<f64>),
}

/// How Doppler shifts are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerDraw {
    Uniform,
    /// Uniform over integer multiples of `step` (Hz) inside `doppler_range`.
    Lattice { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_paths: usize,
    /// Allowed delays in samples.
    pub delay_pool: Vec<usize>,
    pub sample_period: f64,
    /// radians, `[lo, hi]`
    pub angle_range: (f64, f64),
    /// Hz, `[lo, hi]`
    pub doppler_range: (f64, f64),
    pub angle_draw: AngleDraw,
    pub doppler_draw: DopplerDraw,
    /// Minimum angular separation between paths of one user (radians).
    pub distinct_angles: Option<f64>,
    /// Forbid two paths of one user from sharing a delay.
    pub distinct_delays: bool,
    pub rng_seed: u64,
}

const MAX_REDRAWS: usize = 10_000;

/// Draws `num_users` independent users from the scenario's own seed.
pub fn sample_paths(cfg: &ScenarioConfig) -> Result<Vec<UserChannel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    (0..cfg.num_users).map(|k| sample_user(cfg, k, &mut rng)).collect()
}

/// Draws one user from a caller-owned RNG.
pub fn sample_user<R: Rng + ?Sized>(cfg: &ScenarioConfig, user_index: usize, rng: &mut R) -> Result<UserChannel> {
    if cfg.delay_pool.is_empty() {
        return Err(Error::Config("empty delay pool".into()));
    }
    if cfg.num_paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    if cfg.distinct_delays && cfg.delay_pool.len() < cfg.num_paths {
        return Err(Error::Config("delay pool smaller than path count with distinct delays".into()));
    }
    let candidates: Option<Vec<f64>> = match &cfg.angle_draw {
        AngleDraw::Uniform => None,
        AngleDraw::Candidates(c) => {
            let (lo, hi) = cfg.angle_range;
            let v: Vec<f64> = c.iter().copied().filter(|&t| t >= lo && t <= hi).collect();
            if v.is_empty() {
                return Err(Error::Config("no angle candidates inside the angle range".into()));
            }
            Some(v)
        }
    };
    let gain_var = 1.0 / cfg.num_paths as f64;
    let mut paths: Vec<PathParams> = Vec::with_capacity(cfg.num_paths);
    let mut redraws = 0;
    while paths.len() < cfg.num_paths {
        let tap = cfg.delay_pool[rng.random_range(0..cfg.delay_pool.len())];
        let angle = match &candidates {
            None => uniform(rng, cfg.angle_range),
            Some(c) => c[rng.random_range(0..c.len())],
        };
        let doppler = match cfg.doppler_draw {
            DopplerDraw::Uniform => uniform(rng, cfg.doppler_range),
            DopplerDraw::Lattice { step } => {
                let lo = (cfg.doppler_range.0 / step).ceil() as i64;
                let hi = (cfg.doppler_range.1 / step).floor() as i64;
                if hi < lo {
                    return Err(Error::Config("Doppler lattice has no point in range".into()));
                }
                rng.random_range(lo..=hi) as f64 * step
            }
        };
        let gain = cn(rng, gain_var);
        let delay = tap as f64 * cfg.sample_period;
        let clash = paths.iter().any(|p| {
            (cfg.distinct_delays && p.tap(cfg.sample_period) == tap)
                || cfg.distinct_angles.is_some_and(|sep| (p.angle - angle).abs() < sep)
        });
        if clash {
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(Error::Config("could not satisfy path separation constraints".into()));
            }
            continue;
        }
        paths.push(PathParams { delay, doppler, angle, gain });
    }
    Ok(UserChannel { user_index, paths })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Per-antenna channel coefficient of delay tap `delay_tap` at absolute sample
/// `time_index`.
pub fn channel_at(
    user: &UserChannel,
    delay_tap: usize,
    time_index: i64,
    cfg: &GeometryConfig,
    sample_period: f64,
    link: Link,
) -> CVec {
    let mut h = CVec::from_element(cfg.num_antennas, ZERO);
    for p in user.paths.iter().filter(|p| p.tap(sample_period) == delay_tap) {
        let (a, _) = steering(p.angle, cfg, link);
        let rot = p.gain * cis(2.0 * PI * p.doppler * time_index as f64 * sample_period);
        h.axpy(rot, &a, ONE);
    }
    h
}
