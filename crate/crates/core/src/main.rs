use clap::{Parser, Subcommand};
use mimo_otfs::dl::{compute_signatures, dispersion_bounds, pilot_overhead, schedule_paths, verify_plan, OverheadInputs, ScheduleParams};
use mimo_otfs::harness::{oracle_check, run_sweep, write_outputs, ExperimentConfig, Profile, Trial};
use std::collections::HashSet;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(version, about = "Uplink-aided downlink channel estimation for massive MIMO-OTFS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file overlaid on the profile defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep; writes results.csv and summary.json
    Sweep,
    /// Closed-form predictor vs time-domain simulation
    OracleCheck {
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
    /// Scheduling plan (JSON) for one scenario draw
    Schedule,
    /// Pilot-overhead report (JSON)
    Overhead {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        paths: Option<usize>,
    },
}

fn run(cli: Cli) -> mimo_otfs::Result<bool> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), cli.profile)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Sweep => {
            let res = run_sweep(&cfg)?;
            let (csv, json) = write_outputs(&cli.out, &res)?;
            for p in &res.summary.points {
                println!(
                    "{} {:>10} mse_g {:>9.3} dB  mse_hno {:>9.3} dB  ({} ok, {} failed)",
                    p.sweep,
                    p.value,
                    p.mse_g_db.unwrap_or(f64::NAN),
                    p.mse_hno_db.unwrap_or(f64::NAN),
                    p.completed,
                    p.failed
                );
            }
            println!("wrote {} and {}", csv.display(), json.display());
            Ok(true)
        }
        Command::OracleCheck { trials } => {
            let r = oracle_check(&cfg, trials)?;
            println!("zero-Doppler relative error: {:.3e}", r.zero_doppler_error);
            for (nu, e) in &r.doppler_residuals {
                println!("Doppler {nu:>7.1} Hz: relative residual {e:.3e}");
            }
            let ok = r.passed(1e-9);
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
        Command::Schedule => {
            let t = Trial::prepare(&cfg, 0)?;
            let sets: Vec<_> = t
                .dl_users
                .iter()
                .map(|u| {
                    let mut s = compute_signatures(u.user_index, &u.paths, &t.otfs, &t.geom, cfg.dl.rounding);
                    let mut seen = HashSet::new();
                    s.triples.retain(|x| seen.insert(*x));
                    s
                })
                .collect();
            let params = ScheduleParams {
                delay_bins: t.otfs.delay_bins,
                doppler_bins: t.otfs.doppler_bins,
                num_antennas: t.geom.num_antennas,
                angle_gap: cfg.dl.angle_gap,
                delay_gap: None,
                doppler_gap: None,
                region_delay: cfg.dl.region_delay,
                region_doppler: cfg.dl.region_doppler.max(cfg.scenario.num_paths),
            };
            let plan = schedule_paths(&sets, dispersion_bounds(&sets)?, &params)?;
            let ok = match verify_plan(&plan, &sets) {
                Ok(()) => true,
                Err(v) => {
                    v.iter().for_each(|m| log::error!("{m}"));
                    false
                }
            };
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("plan.json");
            std::fs::write(&path, serde_json::to_string_pretty(&plan)?)?;
            println!("{} groups for {} users; wrote {}", plan.groups.len(), sets.len(), path.display());
            Ok(ok)
        }
        Command::Overhead { users, paths } => {
            let x = OverheadInputs {
                users: users.unwrap_or(cfg.scenario.num_users),
                paths: paths.unwrap_or(cfg.scenario.num_paths),
                antennas: cfg.geometry.num_antennas,
                h_d: cfg.dl.ls_block.0,
                h_dd: cfg.dl.ls_block.1,
                train_len: cfg.training.len,
                cp_len: cfg.training.cp_len,
            };
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "inputs": x, "report": pilot_overhead(&x) }))?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
