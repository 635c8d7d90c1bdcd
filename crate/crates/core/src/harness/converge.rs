//! Grid and time-step refinement studies.

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::run::build_simulation;
use super::HarnessError;
use crate::mas::Coupling;
use crate::metrics::fit_decay_rate;
use crate::pde::{step, BoundaryData, Diffusion, GridField, LeftKind, SpatialGrid, StepOperator, TimeScheme};
use crate::signals::{FieldSignal, Trig};

/// Observed orders from a sequence of refinements by a factor of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStudy {
    /// Grid intervals or inverse time steps, one per level.
    pub levels: Vec<f64>,
    /// Error against an exact solution, or the difference to the next level.
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl LevelStudy {
    /// Orders from errors against an exact solution.
    fn from_errors(levels: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        Self { levels, errors, orders }
    }

    /// Orders from successive differences of a quantity (three levels per order).
    fn from_differences(levels: Vec<f64>, diffs: Vec<f64>) -> Self {
        Self::from_errors(levels, diffs)
    }

    pub fn finest_order(&self) -> f64 {
        self.orders.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub observed: f64,
    pub theory: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Dirichlet/Robin eigenmode, error against the exact solution with `dt ∝ h`.
    pub eigenmode: LevelStudy,
    pub eigenmode_decay: DecayCheck,
    /// Forced problem, fixed `dt`, refining `h`.
    pub spatial: LevelStudy,
    /// Forced problem, fixed `h`, refining `dt`.
    pub temporal: LevelStudy,
    /// Closed-loop tracking-error fields at `t = 1` under time-step refinement,
    /// differences measured as `maxᵢ‖ũ⁽ⁱ⁾_dt − ũ⁽ⁱ⁾_{dt/2}‖`.
    pub closed_loop_lagged: LevelStudy,
    pub closed_loop_refined: LevelStudy,
}

impl ConvergenceReport {
    pub fn summary(&self) -> String {
        let line = |name: &str, s: &LevelStudy| {
            let orders: Vec<String> = s.orders.iter().map(|o| format!("{o:.3}")).collect();
            let errors: Vec<String> = s.errors.iter().map(|e| format!("{e:.3e}")).collect();
            format!("{name}: errors [{}], orders [{}]\n", errors.join(", "), orders.join(", "))
        };
        let mut out = String::new();
        out += &line("eigenmode (h and dt)", &self.eigenmode);
        out += &format!(
            "eigenmode decay rate: observed {:.6}, theory {:.6}, relative error {:.2e}\n",
            self.eigenmode_decay.observed, self.eigenmode_decay.theory, self.eigenmode_decay.relative_error
        );
        out += &line("forced problem, space", &self.spatial);
        out += &line("forced problem, time", &self.temporal);
        out += &line("closed loop, lagged coupling", &self.closed_loop_lagged);
        out += &line("closed loop, refined coupling", &self.closed_loop_refined);
        out
    }
}

/// Root of `f` in `[a, b]` by bisection; `f(a)` and `f(b)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) <= 0.0, "no sign change on [{a}, {b}]");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || b - a < 1e-15 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Smallest `γ > 0` with `tan γ = −γ / l` (Dirichlet left, Robin right).
pub fn dirichlet_robin_root(robin_l: f64) -> f64 {
    bisect(|g| g * g.cos() + robin_l * g.sin(), 0.5 * std::f64::consts::PI + 1e-12, std::f64::consts::PI)
}

/// Smallest `γ > 0` with `γ tan γ = l` (Neumann left, Robin right).
pub fn neumann_robin_root(robin_l: f64) -> f64 {
    bisect(|g| g * g.sin() - robin_l * g.cos(), 0.0, 0.5 * std::f64::consts::PI)
}

fn eigenmode_run(d: Diffusion, intervals: usize, dt: f64, horizon: f64) -> Result<(Vec<f64>, Vec<f64>, f64), HarnessError> {
    let grid = SpatialGrid::new(intervals).map_err(crate::mas::SimError::from)?;
    let gamma = dirichlet_robin_root(d.robin_l);
    let rate = d.lambda + d.alpha * gamma * gamma;
    let op = StepOperator::new(d, grid, LeftKind::Dirichlet, dt, TimeScheme::CrankNicolson).map_err(crate::mas::SimError::from)?;
    let bd = BoundaryData::dirichlet(0.0, 0.0);
    let mut w = GridField::from_fn(grid, 0.0, |x| (gamma * x).sin()).map_err(crate::mas::SimError::from)?;
    let steps = (horizon / dt).round() as usize;
    let mut times = vec![0.0];
    let mut norms = vec![w.max_norm()];
    for _ in 0..steps {
        w = step(&w, &op, &bd, &bd, &[], &[]).map_err(crate::mas::SimError::from)?;
        times.push(w.time());
        norms.push(w.max_norm());
    }
    let t = w.time();
    let err = w
        .values()
        .iter()
        .enumerate()
        .map(|(j, v)| (v - (-rate * t).exp() * (gamma * grid.node(j)).sin()).abs())
        .fold(0.0, f64::max);
    Ok((times, norms, err))
}

/// Observed decay rate of the first Dirichlet/Robin mode against `λ + αγ₁²`.
pub fn eigenmode_decay(d: Diffusion, intervals: usize, dt: f64, t0: f64, t1: f64) -> Result<DecayCheck, HarnessError> {
    let (times, norms, _) = eigenmode_run(d, intervals, dt, t1)?;
    let observed = fit_decay_rate(&times, &norms, t0, t1).map_err(|e| HarnessError::Study(e.to_string()))?;
    let gamma = dirichlet_robin_root(d.robin_l);
    let theory = d.lambda + d.alpha * gamma * gamma;
    Ok(DecayCheck {
        observed,
        theory,
        relative_error: (observed - theory).abs() / theory,
    })
}

/// Forced test problem: Dirichlet data `sin 10t`, Robin data `0.5 sin 3t`,
/// source `1 + cos(2x + 10t)`, zero initial state (first-order compatible).
fn forced_run(d: Diffusion, intervals: usize, dt: f64, horizon: f64) -> Result<GridField, HarnessError> {
    let wrap = |e| HarnessError::from(crate::mas::SimError::from(e));
    let grid = SpatialGrid::new(intervals).map_err(wrap)?;
    let op = StepOperator::new(d, grid, LeftKind::Dirichlet, dt, TimeScheme::CrankNicolson).map_err(wrap)?;
    let src = FieldSignal::OffsetPlusTrig {
        amplitude: 1.0,
        offset: 1.0,
        trig: Trig::Cos,
        spatial_frequency: 2.0,
        temporal_frequency: 10.0,
        phase: 0.0,
    };
    let nodes: Vec<f64> = grid.nodes().collect();
    let mut f_now = vec![0.0; nodes.len()];
    let mut f_next = vec![0.0; nodes.len()];
    src.sample_into(&nodes, 0.0, &mut f_now);
    let bd = |t: f64| BoundaryData::dirichlet((10.0 * t).sin(), 0.5 * (3.0 * t).sin());
    let mut w = GridField::zeros(grid, 0.0);
    let steps = (horizon / dt).round() as usize;
    for n in 0..steps {
        let t0 = n as f64 * dt;
        let t1 = (n + 1) as f64 * dt;
        src.sample_into(&nodes, t1, &mut f_next);
        w = step(&w, &op, &bd(t0), &bd(t1), &f_now, &f_next).map_err(wrap)?;
        std::mem::swap(&mut f_now, &mut f_next);
    }
    Ok(w)
}

/// Max difference between two fields on the nodes of the coarser one.
fn coarse_difference(coarse: &GridField, fine: &GridField) -> f64 {
    let ratio = fine.grid().intervals() / coarse.grid().intervals();
    coarse
        .values()
        .iter()
        .enumerate()
        .map(|(j, v)| (v - fine.values()[j * ratio]).abs())
        .fold(0.0, f64::max)
}

/// Tracking-error fields `ũ⁽ⁱ⁾(·, at)` of the closed loop run with step `dt`.
fn closed_loop_tracking(config: &ScenarioConfig, dt: f64, coupling: Coupling, at: f64) -> Result<Vec<GridField>, HarnessError> {
    let mut cfg = config.clone();
    cfg.dt = dt;
    cfg.coupling = coupling;
    let (mut sim, _, _) = build_simulation(&cfg)?;
    let steps = (at / dt).round() as usize;
    for _ in 0..steps {
        sim.advance()?;
    }
    let state = sim.state();
    Ok(state.u.iter().map(|u| u.linear_combination(1.0, &state.uref, -1.0)).collect())
}

/// `maxᵢ ‖a⁽ⁱ⁾ − b⁽ⁱ⁾‖` for consecutive levels.
fn field_differences(levels: &[Vec<GridField>]) -> Vec<f64> {
    levels
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| a.max_norm_of_difference(b))
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub levels: usize,
    /// Coarsest grid for the spatial studies.
    pub base_intervals: usize,
    /// Coarsest step for the temporal studies.
    pub base_dt: f64,
    /// Coarsest step for the closed-loop study.
    pub closed_loop_dt: f64,
    pub horizon: f64,
}

impl StudyOptions {
    pub fn new(levels: usize) -> Self {
        Self {
            levels,
            base_intervals: 20,
            base_dt: 0.02,
            closed_loop_dt: 1.25e-3,
            horizon: 1.0,
        }
    }
}

pub fn convergence_study(config: &ScenarioConfig, opts: &StudyOptions) -> Result<ConvergenceReport, HarnessError> {
    if opts.levels < 3 {
        return Err(HarnessError::Study(format!("need ≥ 3 levels, got {}", opts.levels)));
    }
    let d = config.plant.diffusion();
    let sizes: Vec<usize> = (0..opts.levels).map(|k| opts.base_intervals << k).collect();

    let mut eig_err = Vec::new();
    for &m in &sizes {
        let dt = 0.1 / m as f64;
        eig_err.push(eigenmode_run(d, m, dt, 0.2)?.2);
    }
    let eigenmode = LevelStudy::from_errors(sizes.iter().map(|&m| m as f64).collect(), eig_err);
    let eigenmode_decay = eigenmode_decay(d, config.intervals, config.dt, 0.1, 1.0)?;

    // The finest grid sets the time step so that every level shares it.
    let spatial_fields = sizes
        .iter()
        .map(|&m| forced_run(d, m, 1e-3, opts.horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let spatial_diffs: Vec<f64> = spatial_fields.windows(2).map(|w| coarse_difference(&w[0], &w[1])).collect();
    let spatial = LevelStudy::from_differences(sizes.iter().map(|&m| m as f64).collect(), spatial_diffs);

    let dts: Vec<f64> = (0..opts.levels).map(|k| opts.base_dt / (1u64 << k) as f64).collect();
    let temporal_fields = dts
        .iter()
        .map(|&dt| forced_run(d, 100, dt, opts.horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let temporal_diffs: Vec<f64> = temporal_fields.windows(2).map(|w| coarse_difference(&w[0], &w[1])).collect();
    let inv_dts: Vec<f64> = dts.iter().map(|dt| 1.0 / dt).collect();
    let temporal = LevelStudy::from_differences(inv_dts.clone(), temporal_diffs);

    let cl_dts: Vec<f64> = (0..opts.levels).map(|k| opts.closed_loop_dt / (1u64 << k) as f64).collect();
    let cl_inv: Vec<f64> = cl_dts.iter().map(|dt| 1.0 / dt).collect();
    let study = |coupling: Coupling| -> Result<LevelStudy, HarnessError> {
        let fields = cl_dts
            .iter()
            .map(|&dt| closed_loop_tracking(config, dt, coupling, 1.0))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LevelStudy::from_differences(cl_inv.clone(), field_differences(&fields)))
    };
    let closed_loop_lagged = study(Coupling::Lagged)?;
    let closed_loop_refined = study(Coupling::default())?;

    Ok(ConvergenceReport {
        eigenmode,
        eigenmode_decay,
        spatial,
        temporal,
        closed_loop_lagged,
        closed_loop_refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_match_reference_values() {
        assert!((dirichlet_robin_root(1.0) - 2.02875783811043).abs() < 1e-12);
        assert!((neumann_robin_root(1.0) - 0.86033358901938).abs() < 1e-12);
    }

    #[test]
    fn too_few_levels() {
        let cfg = ScenarioConfig::benchmark(Default::default());
        let err = convergence_study(&cfg, &StudyOptions::new(1)).unwrap_err();
        assert!(err.to_string().contains("need ≥ 3 levels"), "{err}");
    }
}
