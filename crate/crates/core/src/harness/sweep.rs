//! Amplitude sweeps over the builtin scenario.

use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, SweepSpec};
use super::run::simulate;
use super::verify::{verify, Estimate, VerificationReport};
use super::HarnessError;
use crate::metrics::ErrorSeries;
use crate::signals::Knobs;

pub const SUMMARY_CSV: &str = "sweep_summary.csv";

/// Start of the window used for the tail sup of the tracking error.
pub const TAIL_START: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub knobs: Knobs,
    /// `sup_{t ∈ [2, T]} maxᵢ ‖ũ⁽ⁱ⁾‖`
    pub tail_tracking: f64,
    pub j_max: f64,
    pub verification: VerificationReport,
}

impl SweepRow {
    pub fn margin(&self, estimate: Estimate) -> f64 {
        self.verification.worst_margin(estimate).unwrap_or(f64::NAN)
    }
}

fn job(config: &ScenarioConfig, knobs: Knobs) -> Result<SweepRow, HarnessError> {
    let cfg = config.with_knobs(knobs);
    let run = simulate(&cfg)?;
    let verification = verify(&cfg, &run.series, &run.init_norms)?;
    let tracking = ErrorSeries::max_over_agents(&run.series.tracking);
    info!("sweep job {knobs:?}: {:.2} s", run.stats.wall_seconds);
    Ok(SweepRow {
        knobs,
        tail_tracking: run.series.window_sup(&tracking, TAIL_START, cfg.horizon),
        j_max: run.series.j.iter().copied().fold(0.0, f64::max),
        verification,
    })
}

/// Runs every knob combination in parallel; rows come back in expansion order.
pub fn run_sweep(config: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>, HarnessError> {
    let base = config.signals.knobs().ok_or_else(|| HarnessError::Config {
        field: "sweep".into(),
        message: "requires a builtin scenario".into(),
    })?;
    let jobs = spec.expand(base);
    jobs.par_iter().map(|&k| job(config, k)).collect()
}

pub fn write_summary(dir: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(SUMMARY_CSV);
    let to_err = |e: csv::Error| HarnessError::Data {
        path: path.clone(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(to_err)?;
    w.write_record([
        "job",
        "D0",
        "D1",
        "A",
        "A0",
        "A1",
        "tail_tracking",
        "J_max",
        "margin_estimation",
        "margin_tracking",
        "margin_sync",
        "margin_closed_loop",
        "pass",
    ])
    .map_err(to_err)?;
    for (k, row) in rows.iter().enumerate() {
        let kn = row.knobs;
        let mut rec = vec![k.to_string()];
        rec.extend(
            [
                kn.d0,
                kn.d1,
                kn.a,
                kn.a0,
                kn.a1,
                row.tail_tracking,
                row.j_max,
                row.margin(Estimate::Estimation),
                row.margin(Estimate::Tracking),
                row.margin(Estimate::Synchronization),
                row.margin(Estimate::ClosedLoop),
            ]
            .map(|v| format!("{v:e}")),
        );
        rec.push(row.verification.pass.to_string());
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}
