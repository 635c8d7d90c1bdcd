//! Run directories: CSV series, JSON reports and a gnuplot script.
//!
//! Floats are written in shortest round-trip exponent form so that a series
//! read back from disk is bitwise equal to the one in memory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::run::{RunOutput, RuntimeStats};
use super::verify::{constants_for, VerificationReport};
use super::HarnessError;
use crate::bounds::{resolvent_determinant, update_functionals, InitNorms, TheoremConstants};
use crate::mas::{Accumulators, CompatibilityReport};
use crate::metrics::{agent_pairs, ErrorSeries};

pub const CONFIG_FILE: &str = "config.toml";
pub const ESTIMATION_CSV: &str = "estimation.csv";
pub const OBSERVER_CSV: &str = "observer_error.csv";
pub const TRACKING_CSV: &str = "tracking.csv";
pub const SYNC_CSV: &str = "sync.csv";
pub const CLOSED_LOOP_CSV: &str = "closed_loop.csv";
pub const FUNCTIONALS_CSV: &str = "functionals.csv";
pub const INIT_NORMS_JSON: &str = "initial_norms.json";
pub const CONSTANTS_JSON: &str = "constants.json";
pub const REPORT_JSON: &str = "report.json";
pub const VERIFICATION_JSON: &str = "verification.json";
pub const PLOT_SCRIPT: &str = "plot.gp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsDump {
    pub resolvent_determinant: f64,
    pub per_sigma: Vec<TheoremConstants>,
}

pub fn constants_dump(config: &ScenarioConfig) -> Result<ConstantsDump, HarnessError> {
    Ok(ConstantsDump {
        resolvent_determinant: resolvent_determinant(&config.plant),
        per_sigma: constants_for(config)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub verification: VerificationReport,
    pub compatibility: CompatibilityReport,
    pub runtime: RuntimeStats,
}

/// Everything `verify` needs, as read back from a run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: ScenarioConfig,
    pub series: ErrorSeries,
    pub init_norms: InitNorms,
}

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_table(path: &Path, header: &[String], times: &[f64], rows: &[Vec<f64>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut head = vec!["t".to_string()];
    head.extend(header.iter().cloned());
    w.write_record(&head).map_err(|e| csv_err(path, e))?;
    for (t, row) in times.iter().zip(rows) {
        let rec: Vec<String> = std::iter::once(*t).chain(row.iter().copied()).map(fmt_f).collect();
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

struct Table {
    header: Vec<String>,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .skip(1)
            .map(String::from)
            .collect();
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let mut vals = rec.iter().map(|s| {
                s.trim().parse::<f64>().map_err(|e| HarnessError::Data {
                    path: path.to_path_buf(),
                    message: format!("bad number {s:?}: {e}"),
                })
            });
            times.push(vals.next().transpose()?.unwrap_or(f64::NAN));
            rows.push(vals.collect::<Result<Vec<_>, _>>()?);
        }
        Ok(Self { header, times, rows })
    }

    fn column(&self, path: &Path, name: &str) -> Result<Vec<f64>, HarnessError> {
        let idx = self.header.iter().position(|h| h == name).ok_or_else(|| HarnessError::Data {
            path: path.to_path_buf(),
            message: format!("missing column {name}"),
        })?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    fn columns(&self, path: &Path, names: &[String]) -> Result<Vec<Vec<f64>>, HarnessError> {
        let cols = names
            .iter()
            .map(|n| self.column(path, n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((0..self.times.len()).map(|k| cols.iter().map(|c| c[k]).collect()).collect())
    }
}

fn agent_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn pair_names(n: usize) -> Vec<String> {
    agent_pairs(n).iter().map(|(i, j)| format!("u_{}{}", i + 1, j + 1)).collect()
}

fn accumulator_names(n: usize) -> Vec<String> {
    let mut names = Vec::new();
    for p in ["f", "d0", "d1", "q"] {
        names.extend(agent_names(p, n));
    }
    names.extend(["r", "f_pair", "d0_pair", "d1_pair"].map(String::from));
    names
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes the series, norms and constants of `run` into `dir`.
pub fn write_run_dir(dir: &Path, run: &RunOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let cfg = &run.config;
    let n = cfg.plant.n_agents();
    let s = &run.series;
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()).map_err(|e| HarnessError::io(dir.join(CONFIG_FILE), e))?;

    write_table(&dir.join(ESTIMATION_CSV), &agent_names("est", n), &s.times, &s.estimation)?;
    write_table(&dir.join(OBSERVER_CSV), &agent_names("q_tilde", n), &s.times, &s.observer_error)?;
    write_table(&dir.join(TRACKING_CSV), &agent_names("u_tilde", n), &s.times, &s.tracking)?;
    write_table(&dir.join(SYNC_CSV), &pair_names(n), &s.times, &s.sync)?;

    let mut cl_head = agent_names("cl", n);
    cl_head.push("J".into());
    let cl_rows: Vec<Vec<f64>> = s
        .closed_loop
        .iter()
        .zip(&s.j)
        .map(|(row, j)| row.iter().copied().chain([*j]).collect())
        .collect();
    write_table(&dir.join(CLOSED_LOOP_CSV), &cl_head, &s.times, &cl_rows)?;

    let mut fun_head = accumulator_names(n);
    for &sigma in &cfg.sigmas {
        fun_head.push(format!("D@{sigma}"));
        fun_head.push(format!("D_tilde@{sigma}"));
        fun_head.push(format!("D_weighted@{sigma}"));
    }
    let fun_rows: Vec<Vec<f64>> = s
        .accumulators
        .iter()
        .map(|a| {
            let mut row: Vec<f64> = Vec::with_capacity(fun_head.len());
            row.extend(a.f.iter().chain(&a.d0).chain(&a.d1).chain(&a.q));
            row.extend([a.r, a.f_pair, a.d0_pair, a.d1_pair]);
            for &sigma in &cfg.sigmas {
                let f = update_functionals(a, cfg.plant.lambda, cfg.plant.robin_l, sigma);
                let weighted = a
                    .weighted
                    .iter()
                    .find(|w| w.sigma == sigma)
                    .map(|w| 2.0 / (cfg.plant.lambda - sigma) * w.f + w.d0 + w.d1 / cfg.plant.robin_l)
                    .unwrap_or(f64::NAN);
                row.extend([f.d, f.d_tilde, weighted]);
            }
            row
        })
        .collect();
    write_table(&dir.join(FUNCTIONALS_CSV), &fun_head, &s.times, &fun_rows)?;

    write_json(&dir.join(INIT_NORMS_JSON), &run.init_norms)?;
    write_json(&dir.join(CONSTANTS_JSON), &constants_dump(cfg)?)?;
    fs::write(dir.join(PLOT_SCRIPT), plot_script(n)).map_err(|e| HarnessError::io(dir.join(PLOT_SCRIPT), e))?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<(), HarnessError> {
    write_json(&dir.join(REPORT_JSON), report)
}

pub fn write_verification(dir: &Path, report: &VerificationReport) -> Result<(), HarnessError> {
    write_json(&dir.join(VERIFICATION_JSON), report)
}

pub fn read_report(dir: &Path) -> Result<RunReport, HarnessError> {
    read_json(&dir.join(REPORT_JSON))
}

/// Reads back what [`write_run_dir`] wrote.
pub fn load_run_dir(dir: &Path) -> Result<LoadedRun, HarnessError> {
    let config = ScenarioConfig::load(&dir.join(CONFIG_FILE))?;
    let n = config.plant.n_agents();
    let path = |f: &str| -> PathBuf { dir.join(f) };

    let read = |file: &str, names: &[String]| -> Result<(Vec<f64>, Vec<Vec<f64>>), HarnessError> {
        let p = path(file);
        let t = Table::read(&p)?;
        let rows = t.columns(&p, names)?;
        Ok((t.times, rows))
    };

    let (times, estimation) = read(ESTIMATION_CSV, &agent_names("est", n))?;
    let (_, observer_error) = read(OBSERVER_CSV, &agent_names("q_tilde", n))?;
    let (_, tracking) = read(TRACKING_CSV, &agent_names("u_tilde", n))?;
    let (_, sync) = read(SYNC_CSV, &pair_names(n))?;
    let mut cl_names = agent_names("cl", n);
    cl_names.push("J".into());
    let (_, mut closed_loop) = read(CLOSED_LOOP_CSV, &cl_names)?;
    let j: Vec<f64> = closed_loop.iter_mut().map(|row| row.pop().unwrap_or(f64::NAN)).collect();
    let (_, acc_rows) = read(FUNCTIONALS_CSV, &accumulator_names(n))?;
    let accumulators = times
        .iter()
        .zip(&acc_rows)
        .map(|(&t, row)| Accumulators {
            time: t,
            f: row[0..n].to_vec(),
            d0: row[n..2 * n].to_vec(),
            d1: row[2 * n..3 * n].to_vec(),
            q: row[3 * n..4 * n].to_vec(),
            r: row[4 * n],
            f_pair: row[4 * n + 1],
            d0_pair: row[4 * n + 2],
            d1_pair: row[4 * n + 3],
            weighted: Vec::new(),
        })
        .collect();

    let series = ErrorSeries {
        times,
        estimation,
        observer_error,
        tracking,
        sync,
        closed_loop,
        j,
        accumulators,
    };
    let lengths = [
        series.observer_error.len(),
        series.tracking.len(),
        series.sync.len(),
        series.closed_loop.len(),
        series.accumulators.len(),
    ];
    if lengths.iter().any(|&l| l != series.times.len()) {
        return Err(HarnessError::Data {
            path: dir.to_path_buf(),
            message: "series files have different lengths".into(),
        });
    }
    let init_norms = read_json(&path(INIT_NORMS_JSON))?;
    Ok(LoadedRun {
        config,
        series,
        init_norms,
    })
}

fn plot_script(n: usize) -> String {
    let series = |file: &str, first: usize, count: usize, what: &str| -> String {
        (0..count)
            .map(|k| format!("'{file}' using 1:{} with lines title '{what} {}'", first + k, k + 1))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    };
    let pairs = agent_pairs(n).len();
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 't'\n\
         set terminal pngcairo size 900,600\n\n\
         set output 'estimation.png'\n\
         plot {}\n\n\
         set output 'tracking.png'\n\
         plot {}\n\n\
         set output 'sync.png'\n\
         plot {}\n\n\
         set output 'closed_loop.png'\n\
         plot '{CLOSED_LOOP_CSV}' using 1:{} with lines title 'J'\n",
        series(ESTIMATION_CSV, 2, n, "agent"),
        series(TRACKING_CSV, 2, n, "agent"),
        series(SYNC_CSV, 2, pairs, "pair"),
        n + 2,
    )
}
