//! Experiment configuration: a built-in profile overlaid with a TOML file.

use crate::channel::{GeometryConfig, SPEED_OF_LIGHT};
use crate::dl::{Duplex, SignatureRounding};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::otfs::OtfsConfig;
use crate::sbl::SolverConfig;
use crate::ul::{AngleGridKind, GridConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
#[derive(clap::ValueEnum)]
pub enum Profile {
    /// Desk-scale dimensions for quick runs and CI.
    #[default]
    Small,
    /// Full-size system: 64 antennas, 512 x 128 delay-Doppler grid.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Emvb,
    Fast,
    /// Both solvers on identical data.
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Snr,
    #[serde(alias = "n_t")]
    TrainLen,
    #[serde(alias = "p")]
    Paths,
    /// km/h
    Speed,
    EmIter,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::TrainLen => "train_len",
            SweepAxis::Paths => "paths",
            SweepAxis::Speed => "speed",
            SweepAxis::EmIter => "em_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub num_users: usize,
    pub num_paths: usize,
    /// Delays are drawn from taps `0..delay_taps`.
    pub delay_taps: usize,
    pub angle_range_deg: (f64, f64),
    /// Doppler is drawn from `[-max_doppler_hz, max_doppler_hz]`.
    pub max_doppler_hz: f64,
    /// Overrides `max_doppler_hz` with `speed * f_ul / c` when set.
    pub speed_kmh: Option<f64>,
    /// Angles on shared UL/DL grid points, delays on taps, Doppler on the DL resolution.
    pub on_grid: bool,
    pub distinct_delays: bool,
    pub min_angle_sep_deg: Option<f64>,
    /// `inf` gives a noiseless run.
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub num_antennas: usize,
    pub ul_carrier_hz: f64,
    /// Ignored in TDD, where both links share the UL carrier.
    pub dl_carrier_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtfsParams {
    pub delay_bins: usize,
    pub doppler_bins: usize,
    pub cp_len: usize,
    pub sample_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub len: usize,
    pub cp_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub num_angles: usize,
    pub num_delays: usize,
    pub kind: AngleGridKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlParams {
    /// 1: embedded pilot, 2: scheduled regions, 3: least squares.
    pub scheme: u8,
    pub rounding: SignatureRounding,
    pub ls_block: (usize, usize),
    pub angle_gap: i64,
    /// Delay rows of a scheduled observation region.
    pub region_delay: usize,
    /// Doppler columns of a scheduled region; at least the path count.
    pub region_doppler: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub solver: SolverChoice,
    pub mode: Duplex,
    /// Write 0 instead of wall-clock solver time, making output byte-reproducible.
    pub record_runtime: bool,
    pub execution: Execution,
    pub sweep: SweepConfig,
    pub scenario: ScenarioParams,
    pub geometry: GeometryParams,
    pub otfs: OtfsParams,
    pub training: TrainingParams,
    pub grid: GridParams,
    pub em: SolverConfig,
    pub dl: DlParams,
}

impl Profile {
    pub fn config(self) -> ExperimentConfig {
        let em = SolverConfig::default();
        match self {
            Profile::Small => ExperimentConfig {
                seed: 1,
                trials: 20,
                solver: SolverChoice::Fast,
                mode: Duplex::Tdd,
                record_runtime: true,
                execution: Execution::default(),
                sweep: SweepConfig { axis: SweepAxis::Snr, values: vec![5.0, 10.0, 15.0, 20.0, 25.0] },
                scenario: ScenarioParams {
                    num_users: 2,
                    num_paths: 4,
                    delay_taps: 8,
                    angle_range_deg: (-10.0, 50.0),
                    max_doppler_hz: 2220.0,
                    speed_kmh: None,
                    on_grid: false,
                    distinct_delays: false,
                    min_angle_sep_deg: None,
                    snr_db: 20.0,
                },
                geometry: GeometryParams { num_antennas: 16, ul_carrier_hz: 6e9, dl_carrier_hz: 5.98e9 },
                otfs: OtfsParams { delay_bins: 64, doppler_bins: 16, cp_len: 8, sample_period: 5e-8 },
                training: TrainingParams { len: 16, cp_len: 8 },
                grid: GridParams { num_angles: 32, num_delays: 8, kind: AngleGridKind::Midpoint },
                em,
                dl: DlParams { scheme: 3, rounding: SignatureRounding::Nearest, ls_block: (4, 4), angle_gap: 2, region_delay: 1, region_doppler: 4 },
            },
            Profile::Paper => ExperimentConfig {
                seed: 1,
                trials: 50,
                solver: SolverChoice::Fast,
                mode: Duplex::Tdd,
                record_runtime: true,
                execution: Execution::default(),
                sweep: SweepConfig { axis: SweepAxis::Snr, values: vec![5.0, 10.0, 15.0, 20.0, 25.0] },
                scenario: ScenarioParams {
                    num_users: 8,
                    num_paths: 12,
                    delay_taps: 16,
                    angle_range_deg: (-10.0, 50.0),
                    max_doppler_hz: 2220.0,
                    speed_kmh: None,
                    on_grid: false,
                    distinct_delays: false,
                    min_angle_sep_deg: None,
                    snr_db: 20.0,
                },
                geometry: GeometryParams { num_antennas: 64, ul_carrier_hz: 6e9, dl_carrier_hz: 5.98e9 },
                otfs: OtfsParams { delay_bins: 512, doppler_bins: 128, cp_len: 32, sample_period: 5e-8 },
                training: TrainingParams { len: 40, cp_len: 32 },
                grid: GridParams { num_angles: 90, num_delays: 20, kind: AngleGridKind::Midpoint },
                em,
                dl: DlParams { scheme: 3, rounding: SignatureRounding::Nearest, ls_block: (4, 4), angle_gap: 2, region_delay: 1, region_doppler: 12 },
            },
        }
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Profile defaults overlaid with `overlay` (TOML text). A `profile` key in
    /// the text picks the base unless `profile` is given.
    pub fn from_toml(text: &str, profile: Option<Profile>) -> Result<Self> {
        let mut overlay: toml::Table = toml::from_str(text)?;
        let named = match overlay.remove("profile") {
            Some(v) => Some(v.try_into::<Profile>().map_err(|e| Error::Config(format!("profile: {e}")))?),
            None => None,
        };
        let base = profile.or(named).unwrap_or_default().config();
        let mut value = toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut value, toml::Value::Table(overlay));
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, profile: Option<Profile>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml(&text, profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Config("empty sweep".into()));
        }
        if !(1..=3).contains(&self.dl.scheme) {
            return Err(Error::Config(format!("unknown DL scheme {}", self.dl.scheme)));
        }
        if self.scenario.delay_taps == 0 || self.scenario.delay_taps > self.grid.num_delays {
            return Err(Error::Config("delay taps must fit the delay grid".into()));
        }
        if self.scenario.delay_taps > self.training.cp_len + 1 || self.scenario.delay_taps > self.otfs.cp_len + 1 {
            return Err(Error::Config("delay taps exceed the cyclic prefix".into()));
        }
        self.otfs_config().validate()?;
        self.geometry().validate()
    }

    /// Copy with one sweep coordinate applied.
    pub fn at(&self, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} needs positive integer values, got {value}", self.sweep.axis.label())))
            }
        };
        match self.sweep.axis {
            SweepAxis::Snr => c.scenario.snr_db = value,
            SweepAxis::TrainLen => c.training.len = count()?,
            SweepAxis::Paths => c.scenario.num_paths = count()?,
            SweepAxis::Speed => c.scenario.speed_kmh = Some(value),
            SweepAxis::EmIter => c.em.max_iter = count()?,
        }
        Ok(c)
    }

    pub fn geometry(&self) -> GeometryConfig {
        let dl = match self.mode {
            Duplex::Tdd => self.geometry.ul_carrier_hz,
            Duplex::Fdd => self.geometry.dl_carrier_hz,
        };
        GeometryConfig::half_wavelength(self.geometry.num_antennas, self.geometry.ul_carrier_hz, dl)
    }

    /// DL block starts right after the UL training slots of all users.
    pub fn otfs_config(&self) -> OtfsConfig {
        OtfsConfig {
            delay_bins: self.otfs.delay_bins,
            doppler_bins: self.otfs.doppler_bins,
            cp_len: self.otfs.cp_len,
            sample_period: self.otfs.sample_period,
            otfs_start: (self.scenario.num_users * (self.training.cp_len + self.training.len)) as i64,
        }
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig::new(self.grid.kind, self.grid.num_angles, self.grid.num_delays)
    }

    pub fn max_doppler(&self) -> f64 {
        match self.scenario.speed_kmh {
            Some(v) => v / 3.6 * self.geometry.ul_carrier_hz / SPEED_OF_LIGHT,
            None => self.scenario.max_doppler_hz,
        }
    }

    /// Training power, also the per-cell DL pilot power.
    pub fn pilot_power(&self) -> f64 {
        self.training.len as f64
    }

    /// Noise variance from the SNR definition `10 log10(pilot power / noise variance)`.
    pub fn noise_var(&self) -> f64 {
        self.pilot_power() / 10f64.powf(self.scenario.snr_db / 10.0)
    }
}
