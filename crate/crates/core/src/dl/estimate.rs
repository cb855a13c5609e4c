//! The three DL estimators of the dominant delay-Doppler-angle coefficients,
//! their pilot patterns, and pilot-overhead accounting.

use super::reconstruct::{Signature, SignatureSet};
use super::schedule::SchedulingPlan;
use crate::error::{Error, Result};
use crate::numeric::{unit_phase, CMat, CVec, C64};
use crate::otfs::{CubeEntry, OtfsConfig, OtfsGrid};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispersionBounds {
    /// Largest delay signature.
    pub l_g: usize,
    /// Largest Doppler signature magnitude.
    pub n_g: usize,
}

pub fn dispersion_bounds(sets: &[SignatureSet]) -> Result<DispersionBounds> {
    let all: Vec<&Signature> = sets.iter().flat_map(|s| &s.triples).collect();
    if all.is_empty() {
        return Err(Error::Contract("no signatures".into()));
    }
    Ok(DispersionBounds {
        l_g: all.iter().map(|s| s.i).max().unwrap_or(0),
        n_g: all.iter().map(|s| s.j.unsigned_abs() as usize).max().unwrap_or(0),
    })
}

/// Dominant DD-angle coefficients, ordered like the signature set.
pub type DominantChannelVector = Vec<C64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsRegion {
    pub l_s: usize,
    pub n_s: usize,
    pub h_d: usize,
    pub h_dd: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Embedded,
    Scheduled,
    LeastSquares,
}

impl Scheme {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Scheme::Embedded),
            2 => Ok(Scheme::Scheduled),
            3 => Ok(Scheme::LeastSquares),
            _ => Err(Error::Config(format!("unknown DL scheme {i}"))),
        }
    }
}

/// Pilot symbols placed in the transmit delay-Doppler-angle cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotPattern {
    pub scheme: Scheme,
    pub pilot_power: f64,
    pub bounds: DispersionBounds,
    pub placements: Vec<CubeEntry>,
    /// Only for the least-squares scheme.
    pub region: Option<LsRegion>,
}

impl PilotPattern {
    fn lookup(&self) -> HashMap<(i64, usize, usize), C64> {
        self.placements.iter().map(|e| ((e.layer, e.delay, e.doppler_col), e.value)).collect()
    }

    /// One pilot at delay 0, Doppler column `n_G` on every used angle layer.
    pub fn embedded(sets: &[SignatureSet], pilot_power: f64, otfs: &OtfsConfig) -> Result<Self> {
        let bounds = dispersion_bounds(sets)?;
        if 2 * bounds.n_g >= otfs.doppler_bins || bounds.l_g >= otfs.delay_bins {
            return Err(Error::Contract("dispersion does not fit the delay-Doppler grid".into()));
        }
        let layers: HashSet<i64> = sets.iter().flat_map(|s| s.triples.iter().map(|t| t.q)).collect();
        let mut layers: Vec<i64> = layers.into_iter().collect();
        layers.sort_unstable();
        let placements = layers
            .into_iter()
            .map(|q| CubeEntry { delay: 0, doppler_col: bounds.n_g, layer: q, value: C64::new(pilot_power.sqrt(), 0.0) })
            .collect();
        Ok(Self { scheme: Scheme::Embedded, pilot_power, bounds, placements, region: None })
    }

    /// Random unit-modulus pilots over an `h_d x h_dd` block on every used layer.
    pub fn least_squares<R: Rng + ?Sized>(
        sets: &[SignatureSet],
        region: LsRegion,
        pilot_power: f64,
        otfs: &OtfsConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let bounds = dispersion_bounds(sets)?;
        let (ld, nd) = (otfs.delay_bins as i64, otfs.doppler_bins as i64);
        for s in sets.iter().flat_map(|s| &s.triples) {
            let last_l = (region.l_s + region.h_d - 1 + s.i) as i64;
            let lo_n = region.n_s as i64 + s.j;
            let hi_n = (region.n_s + region.h_dd - 1) as i64 + s.j;
            if last_l >= ld - 1 || lo_n <= 0 || hi_n >= nd - 1 {
                return Err(Error::Contract(format!("pilot block {region:?} violates the boundary assumption for {s:?}")));
            }
        }
        let mut layers: Vec<i64> = sets.iter().flat_map(|s| s.triples.iter().map(|t| t.q)).collect();
        layers.sort_unstable();
        layers.dedup();
        let amp = pilot_power.sqrt();
        let mut placements = Vec::new();
        for q in layers {
            for l in region.l_s..region.l_s + region.h_d {
                for n in region.n_s..region.n_s + region.h_dd {
                    placements.push(CubeEntry { delay: l, doppler_col: n, layer: q, value: unit_phase(rng) * amp });
                }
            }
        }
        Ok(Self { scheme: Scheme::LeastSquares, pilot_power, bounds, placements, region: Some(region) })
    }

    /// Training rows of every scheduled transmit region: `sqrt(power)` times a
    /// unitary DFT column per path. With `data`, the rest of each region is
    /// filled with random unit-modulus symbols.
    pub fn scheduled<R: Rng + ?Sized>(
        plan: &SchedulingPlan,
        sets: &[SignatureSet],
        pilot_power: f64,
        otfs: &OtfsConfig,
        mut data: Option<&mut R>,
    ) -> Result<Self> {
        let bounds = dispersion_bounds(sets)?;
        let amp = pilot_power.sqrt();
        let mut placements = Vec::new();
        for t in &plan.transmit {
            let p_count = sets
                .iter()
                .find(|s| s.user == t.user)
                .map(|s| s.len())
                .ok_or_else(|| Error::Contract(format!("no signatures for user {}", t.user)))?;
            let f = crate::numeric::dft_matrix(p_count);
            for u in 0..t.region.delay_len {
                for v in 0..t.region.doppler_len {
                    let delay = (t.region.delay + u) % otfs.delay_bins;
                    let doppler_col = (t.region.doppler_col + v) % otfs.doppler_bins;
                    let value = if u == 0 && v < p_count {
                        f[(v, t.path)] * amp
                    } else if let Some(rng) = data.as_deref_mut() {
                        unit_phase(rng)
                    } else {
                        continue;
                    };
                    placements.push(CubeEntry { delay, doppler_col, layer: t.layer, value });
                }
            }
        }
        Ok(Self { scheme: Scheme::Scheduled, pilot_power, bounds, placements, region: None })
    }
}

fn distinct_delay_doppler(sigs: &SignatureSet) -> Result<()> {
    let mut seen = HashSet::new();
    for s in &sigs.triples {
        if !seen.insert((s.i, s.j)) {
            return Err(Error::Contract(format!("two paths share delay-Doppler bin ({}, {})", s.i, s.j)));
        }
    }
    Ok(())
}

/// Embedded-pilot estimator: one received sample per path, descaled and de-twisted.
pub fn scheme1_estimate(y: &OtfsGrid, sigs: &SignatureSet, pattern: &PilotPattern, otfs: &OtfsConfig) -> Result<DominantChannelVector> {
    distinct_delay_doppler(sigs)?;
    let amp = pattern.pilot_power.sqrt();
    let n_g = pattern.bounds.n_g as i64;
    Ok(sigs
        .triples
        .iter()
        .map(|s| {
            let col = (n_g + s.j).rem_euclid(otfs.doppler_bins as i64) as usize;
            let l = s.i % otfs.delay_bins;
            y.data[(l, col)] / (otfs.twist(l, s.j as f64) * amp)
        })
        .collect())
}

/// Training matrix of one user in the scheduled scheme (rows: training cells, columns: paths).
pub fn scheme2_training_matrix(plan: &SchedulingPlan, sigs: &SignatureSet, pattern: &PilotPattern, otfs: &OtfsConfig) -> Result<(CMat, usize, usize)> {
    let group = plan
        .group_of(sigs.user)
        .ok_or_else(|| Error::Contract(format!("user {} is not scheduled", sigs.user)))?;
    let rect = group.region;
    let p_count = sigs.len();
    if rect.doppler_len < p_count {
        return Err(Error::Contract("observation region narrower than the path count".into()));
    }
    let map = pattern.lookup();
    let (ld, nd) = (otfs.delay_bins as i64, otfs.doppler_bins as i64);
    let t = CMat::from_fn(p_count, p_count, |v, p| {
        let s = sigs.triples[p];
        let l = (rect.delay as i64 - s.i as i64).rem_euclid(ld) as usize;
        let n = ((rect.doppler_col + v) as i64 - s.j).rem_euclid(nd) as usize;
        let x = map.get(&(s.q, l, n)).copied().unwrap_or_default();
        otfs.twist(rect.delay, s.j as f64) * x
    });
    Ok((t, rect.delay, rect.doppler_col))
}

/// Scheduled-region estimator: invert the `P x P` training matrix on the
/// first row of the user's observation rectangle.
pub fn scheme2_estimate(
    y: &OtfsGrid,
    plan: &SchedulingPlan,
    sigs: &SignatureSet,
    pattern: &PilotPattern,
    otfs: &OtfsConfig,
) -> Result<DominantChannelVector> {
    let (t, l, n0) = scheme2_training_matrix(plan, sigs, pattern, otfs)?;
    let obs = CVec::from_fn(sigs.len(), |v, _| y.data[(l, (n0 + v) % otfs.doppler_bins)]);
    let lu = t.lu();
    if lu.determinant().norm() < 1e-300 {
        return Err(Error::Numerical("training matrix is singular; choose a different training placement".into()));
    }
    let h = lu
        .solve(&obs)
        .ok_or_else(|| Error::Numerical("training matrix is singular; choose a different training placement".into()))?;
    Ok(h.iter().copied().collect())
}

/// Observation window and design matrix of the least-squares scheme.
pub fn scheme3_design(sigs: &SignatureSet, pattern: &PilotPattern, otfs: &OtfsConfig) -> Result<(CMat, Vec<(usize, usize)>)> {
    let region = pattern.region.ok_or_else(|| Error::Contract("pattern has no least-squares region".into()))?;
    if sigs.is_empty() {
        return Err(Error::Contract("no signatures".into()));
    }
    let i_min = sigs.triples.iter().map(|s| s.i).min().unwrap_or(0);
    let j_min = sigs.triples.iter().map(|s| s.j).min().unwrap_or(0);
    let j_max = sigs.triples.iter().map(|s| s.j).max().unwrap_or(0);
    let rows = region.l_s + i_min..=region.l_s + region.h_d - 1 + pattern.bounds.l_g;
    let cols = region.n_s as i64 + j_min..=(region.n_s + region.h_dd - 1) as i64 + j_max;
    let width = (region.h_dd as i64 + j_max - j_min) as usize;
    let cells: Vec<(usize, usize)> = rows
        .clone()
        .flat_map(|l| cols.clone().map(move |n| (l, n as usize)))
        .collect();
    debug_assert!(cells.iter().enumerate().all(|(k, &(l, n))| {
        k == width * (l - (region.l_s + i_min)) + (n as i64 - (region.n_s as i64 + j_min)) as usize
    }));
    let map = pattern.lookup();
    let (ld, nd) = (otfs.delay_bins as i64, otfs.doppler_bins as i64);
    let psi = CMat::from_fn(cells.len(), sigs.len(), |r, p| {
        let (l, n) = cells[r];
        let s = sigs.triples[p];
        let sl = (l as i64 - s.i as i64).rem_euclid(ld) as usize;
        let sn = (n as i64 - s.j).rem_euclid(nd) as usize;
        let x = map.get(&(s.q, sl, sn)).copied().unwrap_or_default();
        otfs.twist(l, s.j as f64) * x
    });
    Ok((psi, cells))
}

/// Least-squares estimator over the dispersed pilot block.
pub fn scheme3_estimate(y: &OtfsGrid, sigs: &SignatureSet, pattern: &PilotPattern, otfs: &OtfsConfig) -> Result<DominantChannelVector> {
    let (psi, cells) = scheme3_design(sigs, pattern, otfs)?;
    let obs = CVec::from_fn(cells.len(), |r, _| y.data[(cells[r].0 % otfs.delay_bins, cells[r].1 % otfs.doppler_bins)]);
    let normal = psi.adjoint() * &psi;
    let scale = (0..normal.nrows()).map(|i| normal[(i, i)].re).fold(0.0, f64::max);
    let deficient = || coherence_error(&psi, sigs);
    let chol = crate::numeric::hpd_cholesky(normal.clone()).ok_or_else(deficient)?;
    let min_pivot = chol.l().diagonal().iter().map(|z| z.re * z.re).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-10 * scale) {
        return Err(deficient());
    }
    Ok(chol.solve(&(psi.adjoint() * obs)).iter().copied().collect())
}

fn coherence_error(psi: &CMat, sigs: &SignatureSet) -> Error {
    let p = psi.ncols();
    let mut worst = (0, 0, -1.0);
    for a in 0..p {
        for b in a + 1..p {
            let na = psi.column(a).norm();
            let nb = psi.column(b).norm();
            let c = if na * nb > 0.0 { psi.column(a).dotc(&psi.column(b)).norm() / (na * nb) } else { 1.0 };
            if c > worst.2 {
                worst = (a, b, c);
            }
        }
    }
    if p == 1 || worst.2 < 0.0 {
        return Error::Numerical("least-squares design has a zero column".into());
    }
    Error::Numerical(format!(
        "least-squares design is rank deficient; most coherent paths {:?} and {:?} (|cos| = {:.6})",
        sigs.triples[worst.0], sigs.triples[worst.1], worst.2
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadInputs {
    pub users: usize,
    pub paths: usize,
    pub antennas: usize,
    pub h_d: usize,
    pub h_dd: usize,
    pub train_len: usize,
    pub cp_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadReport {
    /// UL training samples.
    pub ul_samples: usize,
    /// DL pilot grids per scheme (upper bounds for schemes 1 and 3).
    pub scheme1_grids: usize,
    pub scheme2_grids: usize,
    pub scheme3_grids: usize,
}

pub fn pilot_overhead(x: &OverheadInputs) -> OverheadReport {
    let block = x.h_d * x.h_dd;
    OverheadReport {
        ul_samples: x.users * (x.cp_len + x.train_len),
        scheme1_grids: (x.users * x.paths).min(x.antennas),
        scheme2_grids: x.users * x.paths * x.paths,
        scheme3_grids: (x.users * x.paths * block).min(x.antennas * block),
    }
}
