//! Equivalence of the closed-form delay-Doppler predictor and the
//! sample-by-sample time-domain channel.

use super::config::ExperimentConfig;
use crate::channel::{PathParams, UserChannel};
use crate::error::Result;
use crate::numeric::cn;
use crate::otfs::{dd_io_predict, dda_channel, demodulate, modulate, propagate_time_domain, OtfsGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DOPPLER_LADDER_HZ: [f64; 4] = [2220.0, 1110.0, 555.0, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Worst relative error over the zero-Doppler, integer-delay channels.
    pub zero_doppler_error: f64,
    /// `(max Doppler in Hz, relative residual)` along the Doppler ladder.
    pub doppler_residuals: Vec<(f64, f64)>,
}

impl OracleReport {
    /// Residuals strictly shrink as the Doppler shrinks (a zero residual ends the ladder).
    pub fn monotone(&self) -> bool {
        self.doppler_residuals.windows(2).all(|w| w[1].1 < w[0].1 || w[0].1 == 0.0 && w[1].1 == 0.0)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.zero_doppler_error < tol && self.monotone()
    }
}

fn rel(a: &OtfsGrid, b: &OtfsGrid) -> f64 {
    (&a.data - &b.data).norm() / b.data.norm()
}

/// Compares both channel models on random antenna grids: `trials` random
/// zero-Doppler users, then one user whose path Dopplers are scaled along the
/// Doppler ladder.
pub fn oracle_check(cfg: &ExperimentConfig, trials: usize) -> Result<OracleReport> {
    let geom = cfg.geometry();
    let otfs = cfg.otfs_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let user = |rng: &mut ChaCha8Rng| -> UserChannel {
        let p = cfg.scenario.num_paths;
        let (lo, hi) = cfg.scenario.angle_range_deg;
        UserChannel {
            user_index: 0,
            paths: (0..p)
                .map(|_| PathParams {
                    delay: rng.random_range(0..cfg.scenario.delay_taps.min(otfs.cp_len + 1)) as f64 * otfs.sample_period,
                    doppler: 0.0,
                    angle: rng.random_range(lo..hi).to_radians(),
                    gain: cn(rng, 1.0 / p as f64),
                })
                .collect(),
        }
    };
    let grids = |rng: &mut ChaCha8Rng| -> Vec<OtfsGrid> {
        (0..geom.num_antennas)
            .map(|_| OtfsGrid { data: crate::numeric::CMat::from_fn(otfs.delay_bins, otfs.doppler_bins, |_, _| cn(rng, 1.0)) })
            .collect()
    };
    let compare = |u: &UserChannel, x: &[OtfsGrid], rng: &mut ChaCha8Rng| -> Result<f64> {
        let s = modulate(x, &otfs)?;
        let z = propagate_time_domain(&s, u, &geom, &otfs, 0.0, rng)?;
        let td = demodulate(&z, &otfs)?;
        let pred = dd_io_predict(x, &dda_channel(u, &otfs, &geom), &otfs, 0.0, rng)?;
        Ok(rel(&pred, &td))
    };
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let u = user(&mut rng);
        let x = grids(&mut rng);
        worst = worst.max(compare(&u, &x, &mut rng)?);
    }
    let signs: Vec<f64> = (0..cfg.scenario.num_paths).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = user(&mut rng);
    let x = grids(&mut rng);
    let mut residuals = Vec::new();
    for nu in DOPPLER_LADDER_HZ {
        let scaled: Vec<f64> = signs.iter().map(|s| s * nu).collect();
        let u = UserChannel {
            user_index: 0,
            paths: base.paths.iter().zip(&scaled).map(|(p, &d)| PathParams { doppler: d, ..*p }).collect(),
        };
        residuals.push((nu, compare(&u, &x, &mut rng)?));
    }
    Ok(OracleReport { zero_doppler_error: worst, doppler_residuals: residuals })
}
