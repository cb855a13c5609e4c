//! OTFS modulation and demodulation, exact time-domain propagation, and the
//! closed-form delay-Doppler(-angle) channel.
//!
//! Doppler bins `j` in `[-N_D/2, N_D/2)` are stored at column `j + N_D/2`.

use crate::channel::{GeometryConfig, Link, UserChannel};
use crate::error::{Error, Result};
use crate::numeric::{cis, cn, dirichlet, CMat, C64, ZERO};
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtfsConfig {
    /// L_D
    pub delay_bins: usize,
    /// N_D, even
    pub doppler_bins: usize,
    pub cp_len: usize,
    /// seconds
    pub sample_period: f64,
    /// Absolute sample index where the OTFS block (including its first CP) begins.
    pub otfs_start: i64,
}

impl OtfsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delay_bins == 0 || self.doppler_bins == 0 || self.doppler_bins % 2 != 0 {
            return Err(Error::Config("need L_D >= 1 and an even N_D >= 2".into()));
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::Config("sample period must be positive".into()));
        }
        Ok(())
    }

    pub fn symbol_len(&self) -> usize {
        self.delay_bins + self.cp_len
    }

    pub fn stream_len(&self) -> usize {
        self.symbol_len() * self.doppler_bins
    }

    /// OFDM symbol period T (seconds).
    pub fn symbol_period(&self) -> f64 {
        self.symbol_len() as f64 * self.sample_period
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        1.0 / (self.delay_bins as f64 * self.sample_period)
    }

    /// Doppler bin width `1/(N_D T)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.doppler_bins as f64 * self.symbol_period())
    }

    /// Doppler shift in units of Doppler bins.
    pub fn doppler_position(&self, doppler: f64) -> f64 {
        doppler / self.doppler_resolution()
    }

    /// First post-CP sample of the block; the closed-form channel's phase reference.
    pub fn reference_sample(&self) -> i64 {
        self.otfs_start + self.cp_len as i64
    }

    /// Intra-symbol Doppler phase at output delay row `l` for Doppler shift `d` bins.
    pub fn twist(&self, l: usize, d: f64) -> C64 {
        cis(2.0 * PI * l as f64 * d / (self.doppler_bins * self.symbol_len()) as f64)
    }

    pub fn doppler_col(&self, j: i64) -> usize {
        (j + self.doppler_bins as i64 / 2).rem_euclid(self.doppler_bins as i64) as usize
    }
}

/// One `L_D x N_D` delay-Doppler block.
#[derive(Debug, Clone, PartialEq)]
pub struct OtfsGrid {
    pub data: CMat,
}

impl OtfsGrid {
    pub fn zeros(cfg: &OtfsConfig) -> Self {
        Self { data: CMat::zeros(cfg.delay_bins, cfg.doppler_bins) }
    }

    pub fn delay_bins(&self) -> usize {
        self.data.nrows()
    }

    pub fn doppler_bins(&self) -> usize {
        self.data.ncols()
    }

    /// Entry at delay `l` and centered Doppler index `j`.
    pub fn at(&self, l: usize, j: i64) -> C64 {
        let n = self.doppler_bins() as i64;
        self.data[(l, (j + n / 2).rem_euclid(n) as usize)]
    }

    pub fn add_noise<R: Rng + ?Sized>(&mut self, noise_var: f64, rng: &mut R) {
        if noise_var > 0.0 {
            self.data.iter_mut().for_each(|z| *z += cn(rng, noise_var));
        }
    }

    /// Row-major dump: every entry as little-endian `f64` real part then imaginary part.
    pub fn write_le<W: Write>(&self, w: &mut W) -> Result<()> {
        for l in 0..self.delay_bins() {
            for c in 0..self.doppler_bins() {
                let z = self.data[(l, c)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_le<R: Read>(r: &mut R, delay_bins: usize, doppler_bins: usize) -> Result<Self> {
        let mut data = CMat::zeros(delay_bins, doppler_bins);
        let mut buf = [0u8; 8];
        for l in 0..delay_bins {
            for c in 0..doppler_bins {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf);
                r.read_exact(&mut buf)?;
                let im = f64::from_le_bytes(buf);
                data[(l, c)] = C64::new(re, im);
            }
        }
        Ok(Self { data })
    }
}

fn check_grid(x: &OtfsGrid, cfg: &OtfsConfig) -> Result<()> {
    if x.delay_bins() != cfg.delay_bins || x.doppler_bins() != cfg.doppler_bins {
        return Err(Error::Dimension(format!(
            "grid is {}x{}, config wants {}x{}",
            x.delay_bins(),
            x.doppler_bins(),
            cfg.delay_bins,
            cfg.doppler_bins
        )));
    }
    Ok(())
}

/// Per-antenna transmit streams: Doppler-axis inverse DFT per delay row, then a
/// cyclic prefix per OFDM symbol.
pub fn modulate(x: &[OtfsGrid], cfg: &OtfsConfig) -> Result<Vec<Vec<C64>>> {
    let (ld, nd, lcp) = (cfg.delay_bins, cfg.doppler_bins, cfg.cp_len);
    let ifft = FftPlanner::new().plan_fft_inverse(nd);
    let scale = 1.0 / (nd as f64).sqrt();
    let mut row = vec![ZERO; nd];
    x.iter()
        .map(|grid| {
            check_grid(grid, cfg)?;
            let mut s = vec![ZERO; cfg.stream_len()];
            for l in 0..ld {
                for c in 0..nd {
                    row[c] = grid.data[(l, c)] * scale;
                }
                ifft.process(&mut row);
                for (n, &v) in row.iter().enumerate() {
                    let base = n * cfg.symbol_len();
                    s[base + lcp + l] = v;
                    if l + lcp >= ld {
                        s[base + l + lcp - ld] = v;
                    }
                }
            }
            Ok(s)
        })
        .collect()
}

/// Drops the cyclic prefixes and applies the Doppler-axis DFT.
pub fn demodulate(z: &[C64], cfg: &OtfsConfig) -> Result<OtfsGrid> {
    if z.len() != cfg.stream_len() {
        return Err(Error::Dimension(format!("stream length {} != {}", z.len(), cfg.stream_len())));
    }
    let (ld, nd, lcp) = (cfg.delay_bins, cfg.doppler_bins, cfg.cp_len);
    let fft = FftPlanner::new().plan_fft_forward(nd);
    let scale = 1.0 / (nd as f64).sqrt();
    let mut out = OtfsGrid::zeros(cfg);
    let mut row = vec![ZERO; nd];
    for l in 0..ld {
        for (n, v) in row.iter_mut().enumerate() {
            *v = z[n * cfg.symbol_len() + lcp + l] * scale;
        }
        fft.process(&mut row);
        for c in 0..nd {
            out.data[(l, c)] = row[c];
        }
    }
    Ok(out)
}

/// Linear time-varying downlink filtering of the per-antenna streams, sample by sample.
pub fn propagate_time_domain<R: Rng + ?Sized>(
    s: &[Vec<C64>],
    user: &UserChannel,
    geom: &GeometryConfig,
    cfg: &OtfsConfig,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<C64>> {
    if s.len() != geom.num_antennas {
        return Err(Error::Dimension(format!("{} streams for {} antennas", s.len(), geom.num_antennas)));
    }
    let len = cfg.stream_len();
    if s.iter().any(|v| v.len() != len) {
        return Err(Error::Dimension("stream length does not match the config".into()));
    }
    let mut z = vec![ZERO; len];
    for p in &user.paths {
        let tap = p.tap(cfg.sample_period);
        if tap > cfg.cp_len {
            return Err(Error::Contract(format!("path delay of {tap} samples exceeds the CP")));
        }
        let (a, _) = crate::channel::steering(p.angle, geom, Link::Dl);
        for r in tap..len {
            let beam: C64 = (0..geom.num_antennas).map(|m| a[m] * s[m][r - tap]).sum();
            let phase = cis(2.0 * PI * p.doppler * (cfg.otfs_start + r as i64) as f64 * cfg.sample_period);
            z[r] += p.gain * phase * beam;
        }
    }
    if noise_var > 0.0 {
        z.iter_mut().for_each(|v| *v += cn(rng, noise_var));
    }
    Ok(z)
}

/// One path in delay-Doppler-angle coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdaPath {
    pub tap: usize,
    /// Doppler shift in Doppler bins (real-valued).
    pub doppler_pos: f64,
    /// Spatial frequency in angle bins (real-valued).
    pub angle_pos: f64,
    /// Gain including the block's reference phase.
    pub coef: C64,
}

/// Closed-form delay-Doppler-angle channel of one user, kept in P-term form.
#[derive(Debug, Clone, PartialEq)]
pub struct DdaChannel {
    pub delay_bins: usize,
    pub doppler_bins: usize,
    pub num_antennas: usize,
    pub paths: Vec<DdaPath>,
}

pub fn dda_channel(user: &UserChannel, cfg: &OtfsConfig, geom: &GeometryConfig) -> DdaChannel {
    let t_ref = cfg.reference_sample() as f64 * cfg.sample_period;
    let paths = user
        .paths
        .iter()
        .map(|p| DdaPath {
            tap: p.tap(cfg.sample_period),
            doppler_pos: cfg.doppler_position(p.doppler),
            angle_pos: geom.angle_bin_position(p.angle, Link::Dl),
            coef: p.gain * cis(2.0 * PI * p.doppler * t_ref),
        })
        .collect();
    DdaChannel { delay_bins: cfg.delay_bins, doppler_bins: cfg.doppler_bins, num_antennas: geom.num_antennas, paths }
}

impl DdaChannel {
    fn doppler_weight(&self, p: &DdaPath, j: i64) -> C64 {
        dirichlet(p.doppler_pos - j as f64, self.doppler_bins)
    }

    fn angle_weight(&self, p: &DdaPath, q: i64) -> C64 {
        dirichlet(p.angle_pos - q as f64, self.num_antennas) * (self.num_antennas as f64).sqrt()
    }

    /// Per-antenna delay-Doppler coefficient at delay `i`, Doppler `j`, antenna `m`.
    pub fn antenna_entry(&self, i: usize, j: i64, m: usize) -> C64 {
        let mf = self.num_antennas as f64;
        self.paths
            .iter()
            .filter(|p| p.tap == i)
            .map(|p| p.coef * self.doppler_weight(p, j) * cis(2.0 * PI * m as f64 * p.angle_pos / mf))
            .sum()
    }

    /// Delay-Doppler-angle coefficient at `(i, j, q)`.
    pub fn angle_entry(&self, i: usize, j: i64, q: i64) -> C64 {
        self.paths
            .iter()
            .filter(|p| p.tap == i)
            .map(|p| p.coef * self.doppler_weight(p, j) * self.angle_weight(p, q))
            .sum()
    }

    /// Total energy over the full `(i, j, q)` cube.
    pub fn total_energy(&self) -> f64 {
        let mut taps: Vec<usize> = self.paths.iter().map(|p| p.tap).collect();
        taps.sort_unstable();
        taps.dedup();
        let (nd, m) = (self.doppler_bins as i64, self.num_antennas as i64);
        let mut e = 0.0;
        for &i in &taps {
            for j in -nd / 2..nd / 2 {
                for q in -m / 2..m / 2 {
                    e += self.angle_entry(i, j, q).norm_sqr();
                }
            }
        }
        e
    }
}

/// Delay-Doppler input-output relation evaluated per path: beamform the
/// antenna grids, then a twisted circular convolution in delay and Doppler.
pub fn dd_io_predict<R: Rng + ?Sized>(
    x: &[OtfsGrid],
    channel: &DdaChannel,
    cfg: &OtfsConfig,
    noise_var: f64,
    rng: &mut R,
) -> Result<OtfsGrid> {
    if x.len() != channel.num_antennas {
        return Err(Error::Dimension(format!("{} grids for {} antennas", x.len(), channel.num_antennas)));
    }
    for g in x {
        check_grid(g, cfg)?;
    }
    let (ld, nd) = (cfg.delay_bins, cfg.doppler_bins);
    let mf = channel.num_antennas as f64;
    let mut y = OtfsGrid::zeros(cfg);
    for p in &channel.paths {
        let mut beam = CMat::zeros(ld, nd);
        for (m, g) in x.iter().enumerate() {
            beam += &g.data * cis(2.0 * PI * m as f64 * p.angle_pos / mf);
        }
        for d in -(nd as i64) / 2..(nd as i64) / 2 {
            let w = p.coef * channel.doppler_weight(p, d);
            if w == ZERO {
                continue;
            }
            for l in 0..ld {
                let src_l = (l + ld - p.tap % ld) % ld;
                let tw = w * cfg.twist(l, d as f64);
                for c in 0..nd {
                    let src_c = (c as i64 - d).rem_euclid(nd as i64) as usize;
                    y.data[(l, c)] += tw * beam[(src_l, src_c)];
                }
            }
        }
    }
    y.add_noise(noise_var, rng);
    Ok(y)
}

/// One transmitted symbol in the delay-Doppler-angle cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeEntry {
    pub delay: usize,
    /// Stored Doppler column (`j + N_D/2`).
    pub doppler_col: usize,
    /// Angle layer in `[-M/2, M/2)`.
    pub layer: i64,
    pub value: C64,
}

/// Received grid for a sparse angle-domain transmit cube (noiseless).
pub fn dd_io_predict_angle(cube: &[CubeEntry], channel: &DdaChannel, cfg: &OtfsConfig) -> OtfsGrid {
    let (ld, nd) = (cfg.delay_bins, cfg.doppler_bins);
    let mut y = OtfsGrid::zeros(cfg);
    for p in &channel.paths {
        let dw: Vec<(i64, C64)> = (-(nd as i64) / 2..(nd as i64) / 2)
            .map(|d| (d, channel.doppler_weight(p, d)))
            .filter(|(_, w)| *w != ZERO)
            .collect();
        for e in cube {
            let aw = channel.angle_weight(p, e.layer);
            if aw == ZERO {
                continue;
            }
            let base = p.coef * aw * e.value;
            let l = (e.delay + p.tap) % ld;
            for &(d, w) in &dw {
                let c = (e.doppler_col as i64 + d).rem_euclid(nd as i64) as usize;
                y.data[(l, c)] += base * w * cfg.twist(l, d as f64);
            }
        }
    }
    y
}

/// Antenna-domain grids for an angle-domain cube: `x_m = M^{-1/2} sum_q exp(-j 2 pi q m / M) xbar_q`.
pub fn cube_to_antennas(cube: &[CubeEntry], cfg: &OtfsConfig, num_antennas: usize) -> Vec<OtfsGrid> {
    let mf = num_antennas as f64;
    let mut out = vec![OtfsGrid::zeros(cfg); num_antennas];
    for e in cube {
        for (m, g) in out.iter_mut().enumerate() {
            g.data[(e.delay, e.doppler_col)] += e.value * cis(-2.0 * PI * (e.layer as f64) * m as f64 / mf) / mf.sqrt();
        }
    }
    out
}
