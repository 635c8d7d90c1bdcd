use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pdesync::bounds::{rhs_theorem2, update_functionals};
use pdesync::harness::config::{ScenarioConfig, SignalSource};
use pdesync::harness::io::{load_run_dir, read_report, write_run_dir, CONFIG_FILE, REPORT_JSON, TRACKING_CSV};
use pdesync::harness::run::simulate;
use pdesync::harness::verify::{constants_for, verify, Estimate};
use pdesync::harness::HarnessError;
use pdesync::mas::InitialDataSpec;
use pdesync::signals::{Knobs, ScenarioSignals, TimeSignal};

const CSV_FILES: [&str; 6] = [
    "estimation.csv",
    "observer_error.csv",
    "tracking.csv",
    "sync.csv",
    "closed_loop.csv",
    "functionals.csv",
];

fn short_benchmark(knobs: Knobs) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::benchmark(knobs);
    cfg.intervals = 60;
    cfg.dt = 2e-3;
    cfg.horizon = 1.0;
    cfg.cadence = 5;
    cfg.sigmas = vec![0.5, 2.5, 4.5];
    cfg
}

fn pdesync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdesync"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn runs_are_byte_identical() {
    let cfg = short_benchmark(Knobs::new(1.0, 1.0, 4.0, 5.0, 5.0));
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_run_dir(a.path(), &simulate(&cfg).unwrap()).unwrap();
    write_run_dir(b.path(), &simulate(&cfg).unwrap()).unwrap();
    for file in CSV_FILES.iter().chain(&[CONFIG_FILE]) {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert!(!x.is_empty(), "{file} is empty");
        assert!(x == y, "{file} differs between runs");
    }
}

#[test]
fn verification_from_files_matches_in_memory() {
    let cfg = short_benchmark(Knobs::new(1.0, 1.0, 4.0, 5.0, 5.0));
    let run = simulate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_dir(dir.path(), &run).unwrap();
    let loaded = load_run_dir(dir.path()).unwrap();
    assert_eq!(loaded.config, cfg);
    assert_eq!(loaded.init_norms, run.init_norms);
    assert_eq!(loaded.series.times, run.series.times);
    assert_eq!(loaded.series.tracking, run.series.tracking);
    assert_eq!(loaded.series.j, run.series.j);
    let direct = verify(&cfg, &run.series, &run.init_norms).unwrap();
    let reread = verify(&loaded.config, &loaded.series, &loaded.init_norms).unwrap();
    assert_eq!(direct, reread);
    assert!(direct.pass, "{}", direct.summary());
}

#[test]
fn zero_everything_passes_with_zero_margins() {
    let mut cfg = short_benchmark(Knobs::default());
    cfg.initial = InitialDataSpec::zero(5);
    let run = simulate(&cfg).unwrap();
    let report = verify(&cfg, &run.series, &run.init_norms).unwrap();
    assert!(report.pass);
    for est in Estimate::ALL {
        assert_eq!(report.worst_margin(est), Some(0.0), "{est}");
    }
    assert!(run.series.j.iter().all(|&j| j == 0.0));
}

#[test]
fn pair_checks_do_not_depend_on_order() {
    let cfg = short_benchmark(Knobs::new(1.0, 1.0, 2.0, 3.0, 0.0));
    let run = simulate(&cfg).unwrap();
    let report = verify(&cfg, &run.series, &run.init_norms).unwrap();
    for i in 1..=5 {
        for j in (i + 1)..=5 {
            let a = report.find(Estimate::Synchronization, &[i, j], 2.5).unwrap();
            let b = report.find(Estimate::Synchronization, &[j, i], 2.5).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.agents, vec![i, j]);
        }
    }
    let pairs = pdesync::metrics::agent_pairs(5);
    for (row, tracking) in run.series.sync.iter().zip(&run.series.tracking) {
        for (k, &(i, j)) in pairs.iter().enumerate() {
            assert!(row[k] <= tracking[i] + tracking[j] + 1e-12);
        }
    }
}

/// Sample and agent with the largest tracking `LHS / RHS`, computed from the public bound formulas.
fn tightest_tracking_sample(cfg: &ScenarioConfig, run: &pdesync::harness::run::RunOutput) -> (usize, usize) {
    let constants = &constants_for(cfg).unwrap()[0];
    let mut best = (0, 0, -1.0);
    for (k, acc) in run.series.accumulators.iter().enumerate() {
        let d = update_functionals(acc, cfg.plant.lambda, cfg.plant.robin_l, constants.sigma).d;
        let t = run.series.times[k];
        for i in 0..5 {
            let ratio = run.series.tracking[k][i] / rhs_theorem2(i, t, constants, d, &run.init_norms);
            if ratio > best.2 {
                best = (k, i, ratio);
            }
        }
    }
    assert!(best.2 > 0.15, "tightest ratio {} is too small for a 10x fault", best.2);
    (best.0, best.1)
}

#[test]
fn corrupted_sample_is_reported() {
    let mut cfg = short_benchmark(Knobs::new(1.0, 1.0, 4.0, 5.0, 5.0));
    cfg.sigmas = vec![2.5];
    let mut run = simulate(&cfg).unwrap();
    assert!(verify(&cfg, &run.series, &run.init_norms).unwrap().pass);

    let (k, i) = tightest_tracking_sample(&cfg, &run);
    run.series.tracking[k][i] *= 10.0;
    let report = verify(&cfg, &run.series, &run.init_norms).unwrap();
    assert!(!report.pass);
    let failures: Vec<_> = report.failures().collect();
    assert_eq!(failures.len(), 1, "{}", report.summary());
    let f = failures[0];
    assert_eq!(f.estimate, Estimate::Tracking);
    assert_eq!(f.agents, vec![i + 1]);
    assert_eq!(f.worst_time, run.series.times[k]);
    let line = f.to_string();
    assert!(line.contains("theorem 2"), "{line}");
    assert!(line.contains(&format!("agent {}", i + 1)), "{line}");
    assert!(line.contains(&format!("t = {}", run.series.times[k])), "{line}");
}

#[test]
fn cli_run_and_verify_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = short_benchmark(Knobs::new(1.0, 1.0, 4.0, 5.0, 5.0));
    cfg.name = "cli".into();
    cfg.sigmas = vec![2.5];
    let config_path = root.path().join("cli.toml");
    fs::write(&config_path, cfg.to_toml()).unwrap();
    let out_root = root.path().join("runs");

    let out = pdesync(&["run", path_str(&config_path), "--out", path_str(&out_root)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rundir = out_root.join("cli");
    assert!(rundir.join(REPORT_JSON).is_file());
    assert!(read_report(&rundir).unwrap().verification.pass);

    let out = pdesync(&["verify", path_str(&rundir)]);
    assert_eq!(out.status.code(), Some(0));

    // Corrupt the tightest tracking sample on disk.
    let run = simulate(&cfg).unwrap();
    let (k, i) = tightest_tracking_sample(&cfg, &run);
    let path = rundir.join(TRACKING_CSV);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[k + 1].split(',').map(str::to_string).collect();
    let value: f64 = cells[i + 1].parse().unwrap();
    cells[i + 1] = format!("{:e}", value * 10.0);
    lines[k + 1] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();

    let out = pdesync(&["verify", path_str(&rundir)]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
    assert!(stdout.contains(&format!("agent {}", i + 1)), "{stdout}");
}

#[test]
fn cli_reports_bad_input_and_solver_aborts() {
    let root = tempfile::tempdir().unwrap();

    let bad = root.path().join("bad.toml");
    fs::write(&bad, "preset = \"benchmark\"\n[numerics]\ndt = -1.0\n").unwrap();
    let out = pdesync(&["run", path_str(&bad), "--out", path_str(root.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));

    let broken = root.path().join("broken.toml");
    fs::write(&broken, "preset = \"benchmark\"\n[numerics\n").unwrap();
    assert_eq!(pdesync(&["run", path_str(&broken)]).status.code(), Some(4));

    let good = root.path().join("good.toml");
    fs::write(&good, "preset = \"benchmark\"\n").unwrap();
    let out = pdesync(&["converge", path_str(&good), "--levels", "1"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need"));

    let mut cfg = short_benchmark(Knobs::default());
    cfg.name = "blowup".into();
    let mut signals = ScenarioSignals::zero(5);
    signals.r = TimeSignal::sin(f64::INFINITY, 1.0, 0.0);
    cfg.signals = SignalSource::Explicit(signals);
    let path = root.path().join("blowup.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let out = pdesync(&["run", path_str(&path), "--out", path_str(root.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("uref"));

    assert!(matches!(
        pdesync::harness::io::load_run_dir(&root.path().join("missing")),
        Err(HarnessError::Io { .. })
    ));
}
