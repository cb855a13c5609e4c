//! Monte-Carlo trials: channel draw, UL recovery, DL reconstruction and
//! DL estimation, scored against the true channel.

use super::config::{ExperimentConfig, SolverChoice, SweepAxis};
use super::metrics::{mse, mse_real_or_scaled};
use crate::channel::{sample_user, AngleDraw, DopplerDraw, GeometryConfig, Link, ScenarioConfig, UserChannel};
use crate::dl::*;
use crate::error::{Error, Result};
use crate::numeric::{cn, db, C64};
use crate::otfs::{dd_io_predict_angle, dda_channel, OtfsConfig};
use crate::sbl::{run_emvb, run_fast_emvb, SolverConfig, SolverOutcome, UlProblem};
use crate::ul::{build_dictionaries, simulate_ul_rx, Dictionaries, GridConfig, UlGridEstimate, UlTrainingConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRecord {
    pub sweep: String,
    pub value: f64,
    pub trial: usize,
    pub mse_g: f64,
    pub mse_beta: f64,
    pub mse_upsilon: f64,
    pub mse_hno: f64,
    /// Solver wall-clock time summed over users.
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub value: f64,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scores {
    g: f64,
    beta: f64,
    upsilon: f64,
    hno: f64,
}

const STREAMS: u64 = 4;
const CHANNEL: u64 = 0;
const UL_NOISE: u64 = 1;
const DL_PILOTS: u64 = 2;
const DL_NOISE: u64 = 3;

/// Random streams depend on the seed and trial only, so every sweep value
/// sees the same channels and noise shapes.
fn stream(seed: u64, trial: usize, purpose: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(trial as u64 * STREAMS + purpose);
    r
}

/// Everything drawn for one trial at one sweep value.
pub struct Trial {
    pub cfg: ExperimentConfig,
    pub trial: usize,
    pub geom: GeometryConfig,
    pub otfs: OtfsConfig,
    pub grid: GridConfig,
    pub dict: Dictionaries,
    pub training: UlTrainingConfig,
    pub users: Vec<UserChannel>,
    /// Same as `users` in TDD; scaled Doppler and fresh gains in FDD.
    pub dl_users: Vec<UserChannel>,
    pub ul_rx: Vec<crate::numeric::CMat>,
    pub noise_var: f64,
}

pub fn scenario_config(cfg: &ExperimentConfig, grid: &GridConfig, geom: &GeometryConfig, otfs: &OtfsConfig) -> ScenarioConfig {
    let s = &cfg.scenario;
    let fd = cfg.max_doppler();
    let (angle_draw, doppler_draw) = if s.on_grid {
        let on_dl_bin = |t: &f64| {
            let mu = geom.angle_bin_position(*t, Link::Dl);
            (mu - mu.round()).abs() < 1e-9
        };
        (
            AngleDraw::Candidates(grid.angles.iter().copied().filter(on_dl_bin).collect()),
            DopplerDraw::Lattice { step: otfs.doppler_resolution() },
        )
    } else {
        (AngleDraw::Uniform, DopplerDraw::Uniform)
    };
    ScenarioConfig {
        num_users: s.num_users,
        num_paths: s.num_paths,
        delay_pool: (0..s.delay_taps).collect(),
        sample_period: cfg.otfs.sample_period,
        angle_range: (s.angle_range_deg.0.to_radians(), s.angle_range_deg.1.to_radians()),
        doppler_range: (-fd, fd),
        angle_draw,
        doppler_draw,
        distinct_angles: s.min_angle_sep_deg.map(f64::to_radians),
        distinct_delays: s.distinct_delays,
        rng_seed: cfg.seed,
    }
}

impl Trial {
    pub fn prepare(cfg: &ExperimentConfig, trial: usize) -> Result<Self> {
        let geom = cfg.geometry();
        let otfs = cfg.otfs_config();
        let grid = cfg.grid_config();
        let dict = build_dictionaries(&grid, &geom);
        let sc = scenario_config(cfg, &grid, &geom, &otfs);
        let mut rng = stream(cfg.seed, trial, CHANNEL);
        let training = UlTrainingConfig::random_phase(0, cfg.training.cp_len, cfg.training.len, &mut rng);
        let users = (0..sc.num_users).map(|k| sample_user(&sc, k, &mut rng)).collect::<Result<Vec<_>>>()?;
        let dl_users = match cfg.mode {
            Duplex::Tdd => users.clone(),
            Duplex::Fdd => {
                let ratio = geom.ul_wavelength / geom.dl_wavelength;
                let var = 1.0 / sc.num_paths as f64;
                users
                    .iter()
                    .map(|u| UserChannel {
                        user_index: u.user_index,
                        paths: u
                            .paths
                            .iter()
                            .map(|p| crate::channel::PathParams { doppler: p.doppler * ratio, gain: cn(&mut rng, var), ..*p })
                            .collect(),
                    })
                    .collect()
            }
        };
        let noise_var = cfg.noise_var();
        let mut nrng = stream(cfg.seed, trial, UL_NOISE);
        let ul_rx = users
            .iter()
            .map(|u| simulate_ul_rx(u, &training, &geom, grid.num_delays, cfg.otfs.sample_period, noise_var, &mut nrng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg: cfg.clone(), trial, geom, otfs, grid, dict, training, users, dl_users, ul_rx, noise_var })
    }

    pub fn problem(&self, user: usize) -> UlProblem<'_> {
        UlProblem {
            dict: &self.dict,
            grid: &self.grid,
            training: &self.training.training,
            y: &self.ul_rx[user],
            noise_var: self.noise_var,
            sample_period: self.cfg.otfs.sample_period,
        }
    }

    /// Runs one solver for every user; returns the outcomes and total milliseconds.
    pub fn solve(&self, which: SolverChoice, em: &SolverConfig) -> Result<(Vec<SolverOutcome>, f64)> {
        let start = Instant::now();
        let out = (0..self.users.len())
            .map(|k| match which {
                SolverChoice::Emvb => run_emvb(&self.problem(k), em).map(|r| r.0),
                SolverChoice::Fast => run_fast_emvb(&self.problem(k), em).map(|r| r.0),
                SolverChoice::Paired => Err(Error::Config("paired is not a single solver".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        let ms = if self.cfg.record_runtime { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        Ok((out, ms))
    }

    /// Grid-representation truth of one user.
    pub fn ul_truth(&self, user: usize) -> UlGridEstimate {
        UlGridEstimate::from_paths(&self.users[user], &self.grid, &self.training, self.cfg.otfs.sample_period)
    }

    fn ul_scores(&self, user: usize, est: &UlGridEstimate) -> Result<(f64, f64, f64)> {
        let truth = self.ul_truth(user);
        let g = mse(est.gain_vector().as_slice(), truth.gain_vector().as_slice())?;
        let ts = self.cfg.otfs.sample_period;
        let mut rows: Vec<usize> = self.users[user].paths.iter().map(|p| self.grid.nearest_angle(p.angle)).collect();
        rows.sort_unstable();
        rows.dedup();
        let mut cols: Vec<usize> = self.users[user].paths.iter().map(|p| p.tap(ts)).collect();
        cols.sort_unstable();
        cols.dedup();
        let half: Vec<f64> = rows.iter().map(|&n| (self.grid.beta_bounds[n].1 - self.grid.beta_bounds[n].0) / 2.0).collect();
        let beta = mse_real_or_scaled(
            &rows.iter().map(|&n| est.beta[n]).collect::<Vec<_>>(),
            &rows.iter().map(|&n| truth.beta[n]).collect::<Vec<_>>(),
            &half,
        )?;
        let bound = vec![self.cfg.em.doppler_bound; cols.len()];
        let upsilon = mse_real_or_scaled(
            &cols.iter().map(|&l| est.upsilon[l]).collect::<Vec<_>>(),
            &cols.iter().map(|&l| truth.upsilon[l]).collect::<Vec<_>>(),
            &bound,
        )?;
        Ok((g, beta, upsilon))
    }

    /// DL signatures reconstructed from the UL estimates.
    pub fn dl_signatures(&self, estimates: &[UlGridEstimate]) -> Result<Vec<SignatureSet>> {
        let ts = self.cfg.otfs.sample_period;
        estimates
            .iter()
            .enumerate()
            .map(|(k, est)| {
                let ex = extract_dominant_paths(est, Selection::Count(self.users[k].paths.len()));
                let ul = grid_to_params(&ex.coords, est, &self.grid, ts);
                let rec = map_to_dl(&ul, self.cfg.mode, &self.geom, ts, self.training.reference_sample(k), self.otfs.reference_sample());
                let set = dedup(compute_signatures(k, &rec.paths, &self.otfs, &self.geom, self.cfg.dl.rounding));
                if set.is_empty() {
                    return Err(Error::Numerical(format!("no paths recovered for user {k}")));
                }
                Ok(set)
            })
            .collect()
    }

    pub fn pilot_pattern(&self, sets: &[SignatureSet]) -> Result<(PilotPattern, Option<SchedulingPlan>)> {
        let pp = self.cfg.pilot_power();
        match self.cfg.dl.scheme {
            1 => Ok((PilotPattern::embedded(sets, pp, &self.otfs)?, None)),
            2 => {
                let bounds = dispersion_bounds(sets)?;
                let widest = sets.iter().map(|s| s.len()).max().unwrap_or(1);
                let params = ScheduleParams {
                    delay_bins: self.otfs.delay_bins,
                    doppler_bins: self.otfs.doppler_bins,
                    num_antennas: self.geom.num_antennas,
                    angle_gap: self.cfg.dl.angle_gap,
                    delay_gap: None,
                    doppler_gap: None,
                    region_delay: self.cfg.dl.region_delay,
                    region_doppler: self.cfg.dl.region_doppler.max(widest),
                };
                let plan = schedule_paths(sets, bounds, &params)?;
                let pat = PilotPattern::scheduled::<ChaCha8Rng>(&plan, sets, pp, &self.otfs, None)?;
                Ok((pat, Some(plan)))
            }
            _ => {
                let bounds = dispersion_bounds(sets)?;
                let (h_d, h_dd) = self.cfg.dl.ls_block;
                let region = LsRegion { l_s: 0, n_s: bounds.n_g + 1, h_d, h_dd };
                let mut rng = stream(self.cfg.seed, self.trial, DL_PILOTS);
                Ok((PilotPattern::least_squares(sets, region, pp, &self.otfs, &mut rng)?, None))
            }
        }
    }

    /// DL estimation for every user and its normalized error against the true
    /// delay-Doppler-angle entries at the true signatures.
    fn dl_scores(&self, sets: &[SignatureSet]) -> Result<Vec<f64>> {
        let (pattern, plan) = self.pilot_pattern(sets)?;
        let mut nrng = stream(self.cfg.seed, self.trial, DL_NOISE);
        let mut out = Vec::with_capacity(sets.len());
        for (k, sigs) in sets.iter().enumerate() {
            let dda = dda_channel(&self.dl_users[k], &self.otfs, &self.geom);
            let mut y = dd_io_predict_angle(&pattern.placements, &dda, &self.otfs);
            y.add_noise(self.noise_var, &mut nrng);
            let est = match (self.cfg.dl.scheme, &plan) {
                (1, _) => scheme1_estimate(&y, sigs, &pattern, &self.otfs)?,
                (2, Some(plan)) => scheme2_estimate(&y, plan, sigs, &pattern, &self.otfs)?,
                _ => scheme3_estimate(&y, sigs, &pattern, &self.otfs)?,
            };
            let by_triple: HashMap<Signature, C64> = sigs.triples.iter().copied().zip(est).collect();
            let truth = dedup(compute_signatures(k, &self.dl_users[k].paths, &self.otfs, &self.geom, SignatureRounding::Nearest));
            let h: Vec<C64> = truth.triples.iter().map(|s| dda.angle_entry(s.i, s.j, s.q)).collect();
            let h_est: Vec<C64> = truth.triples.iter().map(|s| by_triple.get(s).copied().unwrap_or_default()).collect();
            out.push(mse(&h_est, &h)?);
        }
        Ok(out)
    }

    fn score(&self, estimates: &[UlGridEstimate]) -> Result<Scores> {
        let k = estimates.len() as f64;
        let mut s = Scores { g: 0.0, beta: 0.0, upsilon: 0.0, hno: 0.0 };
        for (u, est) in estimates.iter().enumerate() {
            let (g, b, v) = self.ul_scores(u, est)?;
            s.g += g / k;
            s.beta += b / k;
            s.upsilon += v / k;
        }
        s.hno = self.dl_scores(&self.dl_signatures(estimates)?)?.iter().sum::<f64>() / k;
        Ok(s)
    }
}

fn dedup(mut set: SignatureSet) -> SignatureSet {
    let mut seen = std::collections::HashSet::new();
    set.triples.retain(|t| seen.insert(*t));
    set
}

fn record(label: String, value: f64, trial: usize, s: Scores, runtime_ms: f64) -> MseRecord {
    MseRecord { sweep: label, value, trial, mse_g: s.g, mse_beta: s.beta, mse_upsilon: s.upsilon, mse_hno: s.hno, runtime_ms }
}

fn solvers(choice: SolverChoice) -> Vec<(SolverChoice, &'static str)> {
    match choice {
        SolverChoice::Paired => vec![(SolverChoice::Emvb, ":emvb"), (SolverChoice::Fast, ":fast")],
        c => vec![(c, "")],
    }
}

/// One trial at one sweep value; one record per solver (two in paired mode).
pub fn run_point(cfg: &ExperimentConfig, value: f64, trial: usize) -> Result<Vec<MseRecord>> {
    let applied = cfg.at(value)?;
    let t = Trial::prepare(&applied, trial)?;
    let mut out = Vec::new();
    for (which, suffix) in solvers(cfg.solver) {
        let (res, ms) = t.solve(which, &applied.em)?;
        let est: Vec<UlGridEstimate> = res.into_iter().map(|o| o.estimate).collect();
        out.push(record(format!("{}{suffix}", cfg.sweep.axis.label()), value, trial, t.score(&est)?, ms));
    }
    Ok(out)
}

/// Iteration sweep: one traced run up to the largest requested iteration,
/// scored at every requested iteration count.
fn run_em_trace(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<MseRecord>> {
    let max_iter = cfg.sweep.values.iter().copied().fold(0.0, f64::max) as usize;
    let mut applied = cfg.at(max_iter as f64)?;
    applied.em.keep_trace = true;
    let t = Trial::prepare(&applied, trial)?;
    let mut out = Vec::new();
    for (which, suffix) in solvers(cfg.solver) {
        let (res, ms) = t.solve(which, &applied.em)?;
        for &v in &cfg.sweep.values {
            cfg.at(v)?;
            let est: Vec<UlGridEstimate> = res.iter().map(|o| o.at_iteration(v as usize).clone()).collect();
            out.push(record(format!("em_iter{suffix}"), v, trial, t.score(&est)?, ms));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep: String,
    pub value: f64,
    pub completed: usize,
    pub failed: usize,
    pub mse_g: Option<f64>,
    pub mse_beta: Option<f64>,
    pub mse_upsilon: Option<f64>,
    pub mse_hno: Option<f64>,
    pub mse_g_db: Option<f64>,
    pub mse_beta_db: Option<f64>,
    pub mse_upsilon_db: Option<f64>,
    pub mse_hno_db: Option<f64>,
    pub runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedGap {
    pub value: f64,
    /// Mean MSE(g) of the fast solver minus that of the full solver, in dB.
    pub gap_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: String,
    pub solver: SolverChoice,
    pub seed: u64,
    pub trials: usize,
    pub points: Vec<PointSummary>,
    pub paired: Vec<PairedGap>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<MseRecord>,
    pub summary: SweepSummary,
}

impl SweepResult {
    pub fn point(&self, sweep: &str, value: f64) -> Option<&PointSummary> {
        self.summary.points.iter().find(|p| p.sweep == sweep && p.value == value)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(cfg: &ExperimentConfig, records: &[MseRecord], failures: Vec<TrialFailure>) -> SweepSummary {
    let base = cfg.sweep.axis.label();
    let mut points = Vec::new();
    for (_, suffix) in solvers(cfg.solver) {
        let label = format!("{base}{suffix}");
        for &v in &cfg.sweep.values {
            let rs: Vec<&MseRecord> = records.iter().filter(|r| r.sweep == label && r.value == v).collect();
            let col = |f: fn(&MseRecord) -> f64| mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (g, b, u, h) = (col(|r| r.mse_g), col(|r| r.mse_beta), col(|r| r.mse_upsilon), col(|r| r.mse_hno));
            points.push(PointSummary {
                sweep: label.clone(),
                value: v,
                completed: rs.len(),
                failed: failures.iter().filter(|f| f.value == v).count(),
                mse_g: g,
                mse_beta: b,
                mse_upsilon: u,
                mse_hno: h,
                mse_g_db: g.map(db),
                mse_beta_db: b.map(db),
                mse_upsilon_db: u.map(db),
                mse_hno_db: h.map(db),
                runtime_ms: col(|r| r.runtime_ms),
            });
        }
    }
    let paired = if cfg.solver == SolverChoice::Paired {
        cfg.sweep
            .values
            .iter()
            .map(|&v| {
                let get = |s: &str| points.iter().find(|p| p.sweep == format!("{base}{s}") && p.value == v).and_then(|p| p.mse_g_db);
                PairedGap { value: v, gap_db: get(":fast").zip(get(":emvb")).map(|(f, e)| f - e) }
            })
            .collect()
    } else {
        Vec::new()
    };
    SweepSummary { axis: base.to_string(), solver: cfg.solver, seed: cfg.seed, trials: cfg.trials, points, paired, failures }
}

/// Runs every (sweep value, trial) pair. Failed trials are listed in the
/// summary and left out of the records.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let outcomes: Vec<(Vec<f64>, usize, Result<Vec<MseRecord>>)> = if cfg.sweep.axis == SweepAxis::EmIter {
        let items: Vec<usize> = (0..cfg.trials).collect();
        cfg.execution.map(items, |t| (cfg.sweep.values.clone(), t, run_em_trace(cfg, t)))
    } else {
        let items: Vec<(f64, usize)> = cfg.sweep.values.iter().flat_map(|&v| (0..cfg.trials).map(move |t| (v, t))).collect();
        cfg.execution.map(items, |(v, t)| (vec![v], t, run_point(cfg, v, t)))
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (values, trial, res) in outcomes {
        match res {
            Ok(r) => records.extend(r),
            Err(e) => {
                log::warn!("trial {trial} at {values:?} failed: {e}");
                failures.extend(values.into_iter().map(|value| TrialFailure { value, trial, error: e.to_string() }));
            }
        }
    }
    // group rows by solver label, keeping value and trial order within each
    let labels: Vec<String> = solvers(cfg.solver).iter().map(|(_, s)| format!("{}{s}", cfg.sweep.axis.label())).collect();
    records.sort_by_key(|r| labels.iter().position(|l| *l == r.sweep));
    let summary = summarize(cfg, &records, failures);
    Ok(SweepResult { records, summary })
}
