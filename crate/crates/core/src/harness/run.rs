//! Running one scenario in memory.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::HarnessError;
use crate::bounds::InitNorms;
use crate::mas::{ClosedLoop, CompatibilityReport, Simulation, SimulationOptions};
use crate::metrics::ErrorSeries;
use crate::pde::SpatialGrid;

/// Residuals above this are reported as compatibility warnings.
pub const COMPATIBILITY_WARN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub steps: usize,
    pub samples: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub series: ErrorSeries,
    pub init_norms: InitNorms,
    pub compatibility: CompatibilityReport,
    pub stats: RuntimeStats,
}

pub fn build_simulation(config: &ScenarioConfig) -> Result<(Simulation, InitNorms, CompatibilityReport), HarnessError> {
    let grid = SpatialGrid::new(config.intervals).map_err(|e| HarnessError::Config {
        field: "intervals".into(),
        message: e.to_string(),
    })?;
    let system = ClosedLoop::new(config.plant.clone(), config.signals.resolve()?)?;
    let init = config.initial.sample(grid)?;
    let compatibility = system.compatibility_residuals(&init);
    let init_norms = InitNorms::from_initial(&init);
    let options = SimulationOptions {
        dt: config.dt,
        coupling: config.coupling,
        startup_substeps: config.startup_substeps,
        sigmas: config.sigmas.clone(),
    };
    Ok((Simulation::new(system, init, options)?, init_norms, compatibility))
}

/// Integrates to the horizon, sampling every `cadence` steps and at the end.
pub fn simulate(config: &ScenarioConfig) -> Result<RunOutput, HarnessError> {
    let started = Instant::now();
    let (mut sim, init_norms, compatibility) = build_simulation(config)?;
    let worst = compatibility.max_residual();
    if worst > COMPATIBILITY_WARN {
        warn!(
            "{}: initial data violate the compatibility conditions (largest residual {worst:.3e})",
            config.name
        );
    }
    let mut series = ErrorSeries::default();
    series.record(sim.state(), &sim.system().signals);
    let steps = config.steps();
    for step in 1..=steps {
        sim.advance()?;
        if step % config.cadence == 0 || step == steps {
            series.record(sim.state(), &sim.system().signals);
        }
    }
    let stats = RuntimeStats {
        steps,
        samples: series.len(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        config: config.clone(),
        series,
        init_norms,
        compatibility,
        stats,
    })
}
