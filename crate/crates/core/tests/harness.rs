use mimo_otfs::exec::Execution;
use mimo_otfs::harness::*;
use std::path::Path;
use std::process::Command;

fn quick(values: Vec<f64>) -> ExperimentConfig {
    let mut cfg = Profile::Small.config();
    cfg.trials = 2;
    cfg.record_runtime = false;
    cfg.solver = SolverChoice::Fast;
    cfg.em.max_iter = 3;
    cfg.sweep = SweepConfig { axis: SweepAxis::Snr, values };
    cfg
}

fn csv(res: &SweepResult) -> String {
    let mut buf = Vec::new();
    write_csv(&res.records, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn sweep_is_reproducible_and_order_independent() {
    let mut cfg = quick(vec![10.0, 20.0]);
    cfg.execution = Execution::Sequential;
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    cfg.execution = Execution::Parallel;
    let c = run_sweep(&cfg).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(csv(&a), csv(&c));
    assert_eq!(a.summary, c.summary);

    cfg.seed += 1;
    assert_ne!(csv(&a), csv(&run_sweep(&cfg).unwrap()));
}

#[test]
fn csv_layout() {
    let res = run_sweep(&quick(vec![15.0])).unwrap();
    let text = csv(&res);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sweep,value,trial,mse_g,mse_beta,mse_upsilon,mse_hno,runtime_ms"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for (trial, row) in rows.iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 8);
        assert_eq!(f[0], "snr");
        assert_eq!(f[1], "1.50000000e1");
        assert_eq!(f[2], trial.to_string());
        for x in &f[3..] {
            let (mantissa, _) = x.split_once('e').unwrap();
            assert_eq!(mantissa.split_once('.').unwrap().1.len(), 8, "{x}");
            assert!(x.parse::<f64>().unwrap() >= 0.0);
        }
        assert_eq!(f[7].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn summary_holds_linear_and_db_means() {
    let values = vec![5.0, 10.0, 15.0, 20.0, 25.0];
    let res = run_sweep(&quick(values.clone())).unwrap();
    assert_eq!(res.summary.points.len(), 5);
    assert!(res.summary.failures.is_empty());
    for (p, v) in res.summary.points.iter().zip(&values) {
        assert_eq!(p.value, *v);
        assert_eq!(p.completed, 2);
        let rows: Vec<_> = res.records.iter().filter(|r| r.value == *v).collect();
        let mean = rows.iter().map(|r| r.mse_g).sum::<f64>() / rows.len() as f64;
        assert!((p.mse_g.unwrap() - mean).abs() <= 1e-12 * mean);
        assert!((p.mse_g_db.unwrap() - 10.0 * mean.log10()).abs() < 1e-9);
    }
    let json: serde_json::Value = serde_json::to_value(&res.summary).unwrap();
    assert_eq!(json["points"].as_array().unwrap().len(), 5);
    assert!(json["points"][0]["mse_hno_db"].is_number());
}

#[test]
fn paired_sweep_labels_both_solvers() {
    let mut cfg = quick(vec![20.0]);
    cfg.solver = SolverChoice::Paired;
    let res = run_sweep(&cfg).unwrap();
    let full = res.point("snr:emvb", 20.0).unwrap().mse_g_db.unwrap();
    let fast = res.point("snr:fast", 20.0).unwrap().mse_g_db.unwrap();
    assert_eq!(res.summary.paired.len(), 1);
    assert!((res.summary.paired[0].gap_db.unwrap() - (fast - full)).abs() < 1e-9);
}

#[test]
fn em_iteration_axis_reports_each_budget() {
    let mut cfg = quick(vec![1.0, 3.0]);
    cfg.sweep.axis = SweepAxis::EmIter;
    let res = run_sweep(&cfg).unwrap();
    assert_eq!(res.records.len(), 4);
    assert!(res.point("em_iter", 1.0).is_some());
    assert!(res.point("em_iter", 3.0).is_some());
    cfg.sweep.values = vec![1.5];
    let bad = run_sweep(&cfg).unwrap();
    assert!(bad.records.is_empty());
    assert_eq!(bad.summary.failures.len(), 2);
}

fn cli(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mimo-otfs")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn cli_sweep_writes_outputs_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "trials = 1\nrecord_runtime = false\nsolver = \"fast\"\n[em]\nmax_iter = 2\n[sweep]\naxis = \"snr\"\nvalues = [10, 20]\n",
    )
    .unwrap();
    let out = cli(&["sweep", "--config", "run.toml", "--seed", "7", "--out", "res", "--profile", "small"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("res/results.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("res/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["points"].as_array().unwrap().len(), 2);

    let again = cli(&["sweep", "--config", "run.toml", "--seed", "7", "--out", "res2", "--profile", "small"], dir.path());
    assert!(again.status.success());
    assert_eq!(text, std::fs::read_to_string(dir.path().join("res2/results.csv")).unwrap());
}

#[test]
fn cli_other_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let oracle = cli(&["oracle-check", "--trials", "1", "--profile", "small"], dir.path());
    assert!(oracle.status.success());
    assert!(String::from_utf8_lossy(&oracle.stdout).contains("PASS"));

    std::fs::write(
        dir.path().join("separable.toml"),
        "[scenario]\non_grid = true\ndistinct_delays = true\nmin_angle_sep_deg = 1.0\n[grid]\nkind = \"sine\"\n[otfs]\ndelay_bins = 128\ndoppler_bins = 32\n",
    )
    .unwrap();
    let sched = cli(&["schedule", "--profile", "small", "--config", "separable.toml", "--out", "plan"], dir.path());
    assert!(sched.status.success(), "{}", String::from_utf8_lossy(&sched.stderr));
    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan/plan.json")).unwrap()).unwrap();
    assert!(!plan["groups"].as_array().unwrap().is_empty());

    let over = cli(&["overhead", "--users", "8", "--profile", "paper"], dir.path());
    assert!(over.status.success());
    let report: serde_json::Value = serde_json::from_slice(&over.stdout).unwrap();
    assert_eq!(report["report"]["ul_samples"], 8 * (32 + 40));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "trials = \"many\"\n").unwrap();
    let out = cli(&["sweep", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
