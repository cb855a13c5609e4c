//! From the UL grid estimate to DL path parameters and delay-Doppler-angle signatures.

use crate::channel::{GeometryConfig, Link, PathParams};
use crate::numeric::{cis, wrap_centered, C64};
use crate::otfs::OtfsConfig;
use crate::ul::{GridConfig, UlGridEstimate};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Duplex {
    Tdd,
    Fdd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    Count(usize),
    /// Stop once this fraction of the total gain energy is captured.
    EnergyFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCoord {
    pub angle: usize,
    pub delay: usize,
    pub gain: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub coords: Vec<GridCoord>,
    /// False when fewer nonzero entries exist than were requested.
    pub complete: bool,
}

/// Strongest grid entries first; ties go to the lower delay, then the lower angle index.
pub fn extract_dominant_paths(est: &UlGridEstimate, selection: Selection) -> Extraction {
    let g = &est.gains;
    let mut cells: Vec<GridCoord> = (0..g.ncols())
        .flat_map(|l| (0..g.nrows()).map(move |n| (n, l)))
        .filter(|&(n, l)| g[(n, l)].norm_sqr() > 0.0)
        .map(|(n, l)| GridCoord { angle: n, delay: l, gain: g[(n, l)] })
        .collect();
    cells.sort_by(|a, b| {
        b.gain
            .norm_sqr()
            .total_cmp(&a.gain.norm_sqr())
            .then(a.delay.cmp(&b.delay))
            .then(a.angle.cmp(&b.angle))
    });
    match selection {
        Selection::Count(p) => {
            let complete = cells.len() >= p;
            cells.truncate(p);
            Extraction { coords: cells, complete }
        }
        Selection::EnergyFraction(f) => {
            let total: f64 = cells.iter().map(|c| c.gain.norm_sqr()).sum();
            let mut acc = 0.0;
            let mut out = Vec::new();
            for c in cells {
                if acc >= f * total && !out.is_empty() {
                    break;
                }
                acc += c.gain.norm_sqr();
                out.push(c);
            }
            Extraction { coords: out, complete: true }
        }
    }
}

/// UL path estimate; the gain still carries the UL slot's phase reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlPathEstimate {
    pub delay: f64,
    pub doppler: f64,
    pub angle: f64,
    pub coupled_gain: C64,
}

pub fn grid_to_params(coords: &[GridCoord], est: &UlGridEstimate, grid: &GridConfig, sample_period: f64) -> Vec<UlPathEstimate> {
    coords
        .iter()
        .map(|c| UlPathEstimate {
            delay: c.delay as f64 * sample_period,
            doppler: est.upsilon[c.delay],
            angle: grid.angles[c.angle] + est.beta[c.angle],
            coupled_gain: c.gain,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedPathSet {
    pub paths: Vec<PathParams>,
    pub mode: Duplex,
    /// FDD gains cannot be transferred; they are kept only for convenience.
    pub gain_valid: bool,
}

/// Maps UL parameters to the DL. The gain is rotated from the UL reference
/// sample to `dl_reference`; in FDD the Doppler scales with the carrier ratio.
pub fn map_to_dl(
    ul: &[UlPathEstimate],
    mode: Duplex,
    geom: &GeometryConfig,
    sample_period: f64,
    ul_reference: i64,
    dl_reference: i64,
) -> ReconstructedPathSet {
    let ratio = match mode {
        Duplex::Tdd => 1.0,
        Duplex::Fdd => geom.ul_wavelength / geom.dl_wavelength,
    };
    let paths = ul
        .iter()
        .map(|p| {
            let rot = 2.0 * PI * p.doppler * (ratio * dl_reference as f64 - ul_reference as f64) * sample_period;
            PathParams { delay: p.delay, doppler: p.doppler * ratio, angle: p.angle, gain: p.coupled_gain * cis(rot) }
        })
        .collect();
    ReconstructedPathSet { paths, mode, gain_valid: mode == Duplex::Tdd }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureRounding {
    /// Toward negative infinity.
    Floor,
    Nearest,
}

/// Delay bin `i`, Doppler bin `j`, angle bin `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, i64, i64)", into = "(usize, i64, i64)")]
pub struct Signature {
    pub i: usize,
    pub j: i64,
    pub q: i64,
}

impl From<(usize, i64, i64)> for Signature {
    fn from((i, j, q): (usize, i64, i64)) -> Self {
        Self { i, j, q }
    }
}

impl From<Signature> for (usize, i64, i64) {
    fn from(s: Signature) -> Self {
        (s.i, s.j, s.q)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureSet {
    pub user: usize,
    pub triples: Vec<Signature>,
}

impl SignatureSet {
    /// Distinct angle bins, ascending.
    pub fn angle_bins(&self) -> Vec<i64> {
        let mut q: Vec<i64> = self.triples.iter().map(|s| s.q).collect();
        q.sort_unstable();
        q.dedup();
        q
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

// Quantities that are integers up to rounding noise (e.g. 64*0.5*sin(30deg))
// must not drop a bin under floor.
const FLOOR_SLACK: f64 = 1e-9;

fn round_to_bin(x: f64, rounding: SignatureRounding) -> i64 {
    match rounding {
        SignatureRounding::Floor => (x + FLOOR_SLACK).floor() as i64,
        SignatureRounding::Nearest => x.round() as i64,
    }
}

pub fn compute_signatures(
    user: usize,
    paths: &[PathParams],
    otfs: &OtfsConfig,
    geom: &GeometryConfig,
    rounding: SignatureRounding,
) -> SignatureSet {
    let triples = paths
        .iter()
        .map(|p| Signature {
            i: round_to_bin(p.delay / otfs.sample_period, rounding).rem_euclid(otfs.delay_bins as i64) as usize,
            j: wrap_centered(round_to_bin(otfs.doppler_position(p.doppler), rounding), otfs.doppler_bins),
            q: wrap_centered(round_to_bin(geom.angle_bin_position(p.angle, Link::Dl), rounding), geom.num_antennas),
        })
        .collect();
    SignatureSet { user, triples }
}
