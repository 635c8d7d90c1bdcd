//! Closed-loop multi-agent system: agents `u⁽ⁱ⁾`, reference `u^ref`,
//! decoupling copies `v⁽ⁱ⁾` and observers `q̂⁽ⁱ⁾`, wired on a directed cycle.
//!
//! Agents are indexed from 0 internally; agent 0 listens to agent `N − 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pde::{
    max_abs, BoundaryData, Endpoint, GridField, LeftKind, PdeError, PlantParams, SpatialGrid, StepOperator,
    TimeScheme,
};
use crate::signals::{ScenarioSignals, SignalError, Trig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("non-finite value in {field} at t = {time}")]
    NonFinite { field: String, time: f64 },
    #[error("initial data: {0}")]
    InitialData(String),
}

/// Directed cycle `N → 1 → 2 → … → N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleTopology {
    n_agents: usize,
}

impl CycleTopology {
    pub fn new(n_agents: usize) -> Self {
        assert!(n_agents >= 2, "a cycle needs at least two agents");
        Self { n_agents }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// The agent that `i` listens to.
    pub fn pred(&self, i: usize) -> usize {
        (i + self.n_agents - 1) % self.n_agents
    }
}

/// Closed-form initial profile on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `a · trig(k x + φ)`
    Trig {
        amplitude: f64,
        trig: Trig,
        wavenumber: f64,
        #[serde(default)]
        phase: f64,
    },
    Sum { parts: Vec<Profile> },
}

impl Profile {
    pub fn trig(amplitude: f64, trig: Trig, wavenumber: f64, phase: f64) -> Self {
        Profile::Trig {
            amplitude,
            trig,
            wavenumber,
            phase,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => *value,
            Profile::Trig {
                amplitude,
                trig,
                wavenumber,
                phase,
            } => amplitude * trig.apply(wavenumber * x + phase),
            Profile::Sum { parts } => parts.iter().map(|p| p.eval(x)).sum(),
        }
    }

    pub fn sample(&self, grid: SpatialGrid) -> Result<GridField, PdeError> {
        GridField::from_fn(grid, 0.0, |x| self.eval(x))
    }
}

/// How `v⁽ⁱ⁾(·, 0)` is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VInit {
    Explicit { v: Vec<Profile> },
    /// `v₀ = u₀ − q̂₀ − q̃₀` for a prescribed observer error `q̃₀`.
    ObserverError { q_tilde: Vec<Profile> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub u: Vec<Profile>,
    pub uref: Profile,
    pub qhat: Vec<Profile>,
    pub v: VInit,
}

impl InitialDataSpec {
    pub fn zero(n_agents: usize) -> Self {
        Self {
            u: vec![Profile::Zero; n_agents],
            uref: Profile::Zero,
            qhat: vec![Profile::Zero; n_agents],
            v: VInit::Explicit {
                v: vec![Profile::Zero; n_agents],
            },
        }
    }

    /// The five-agent benchmark initial data (zero observer, `v₀ = u₀ − q̃₀`).
    pub fn benchmark() -> Self {
        use std::f64::consts::PI;
        use Trig::{Cos, Sin};
        let u = vec![
            Profile::trig(-0.2, Sin, PI, -0.5 * PI),
            Profile::trig(5.0, Sin, 1.5 * PI, -0.75 * PI),
            Profile::trig(4.0, Sin, 2.0 * PI, -0.5 * PI),
            Profile::trig(3.5, Cos, PI, -PI),
            Profile::trig(4.0, Cos, 2.0 * PI, -PI),
        ];
        let q_tilde = vec![
            Profile::trig(-1.6, Sin, PI, -0.5 * PI),
            Profile::trig(2.0, Sin, 1.5 * PI, -0.75 * PI),
            Profile::trig(2.0, Sin, 2.0 * PI, -0.5 * PI),
            Profile::trig(1.6, Cos, 2.0 * PI, 1.2),
            Profile::trig(1.2, Cos, 2.0 * PI, -PI),
        ];
        Self {
            u,
            uref: Profile::trig(2.8, Sin, 0.5 * PI, -0.25 * PI),
            qhat: vec![Profile::Zero; 5],
            v: VInit::ObserverError { q_tilde },
        }
    }

    pub fn n_agents(&self) -> usize {
        self.u.len()
    }

    pub fn sample(&self, grid: SpatialGrid) -> Result<InitialData, SimError> {
        let n = self.u.len();
        let v_len = match &self.v {
            VInit::Explicit { v } => v.len(),
            VInit::ObserverError { q_tilde } => q_tilde.len(),
        };
        if self.qhat.len() != n || v_len != n {
            return Err(SimError::InitialData(format!(
                "{n} agent profiles but {} observer and {v_len} v-system profiles",
                self.qhat.len()
            )));
        }
        let u = self.u.iter().map(|p| p.sample(grid)).collect::<Result<Vec<_>, _>>()?;
        let qhat = self.qhat.iter().map(|p| p.sample(grid)).collect::<Result<Vec<_>, _>>()?;
        let v = match &self.v {
            VInit::Explicit { v } => v.iter().map(|p| p.sample(grid)).collect::<Result<Vec<_>, _>>()?,
            VInit::ObserverError { q_tilde } => q_tilde
                .iter()
                .enumerate()
                .map(|(i, p)| GridField::from_fn(grid, 0.0, |x| self.u[i].eval(x) - self.qhat[i].eval(x) - p.eval(x)))
                .collect::<Result<Vec<_>, _>>()?,
        };
        Ok(InitialData {
            u,
            uref: self.uref.sample(grid)?,
            v,
            qhat,
        })
    }
}

/// Node-sampled initial fields.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u: Vec<GridField>,
    pub uref: GridField,
    pub v: Vec<GridField>,
    pub qhat: Vec<GridField>,
}

impl InitialData {
    pub fn zero(grid: SpatialGrid, n_agents: usize) -> Self {
        let z = GridField::zeros(grid, 0.0);
        Self {
            u: vec![z.clone(); n_agents],
            uref: z.clone(),
            v: vec![z.clone(); n_agents],
            qhat: vec![z; n_agents],
        }
    }
}

/// Running sups of the exogenous signals over the samples seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    pub time: f64,
    pub f: Vec<f64>,
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub q: Vec<f64>,
    pub r: f64,
    /// `max_{i,j} sup |f⁽ⁱ⁾ − f⁽ʲ⁾|`
    pub f_pair: f64,
    pub d0_pair: f64,
    pub d1_pair: f64,
    pub weighted: Vec<WeightedSups>,
}

/// `sup_{s ≤ t} e^{σ(s−t)} g(s)` for `g = maxᵢ|f⁽ⁱ⁾|, maxᵢ|d₀⁽ⁱ⁾|, maxᵢ|d₁⁽ⁱ⁾|`,
/// i.e. the exponentially weighted sups already multiplied back by `e^{−σt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSups {
    pub sigma: f64,
    pub f: f64,
    pub d0: f64,
    pub d1: f64,
}

impl Accumulators {
    pub fn new(n_agents: usize, sigmas: &[f64]) -> Self {
        Self {
            time: 0.0,
            f: vec![0.0; n_agents],
            d0: vec![0.0; n_agents],
            d1: vec![0.0; n_agents],
            q: vec![0.0; n_agents],
            r: 0.0,
            f_pair: 0.0,
            d0_pair: 0.0,
            d1_pair: 0.0,
            weighted: sigmas
                .iter()
                .map(|&sigma| WeightedSups {
                    sigma,
                    f: 0.0,
                    d0: 0.0,
                    d1: 0.0,
                })
                .collect(),
        }
    }

    /// Folds in the sample at time `t`; `f_fields[i]` holds `f⁽ⁱ⁾(·, t)` on the grid.
    pub fn update(&mut self, t: f64, signals: &ScenarioSignals, f_fields: &[Vec<f64>]) {
        let n = self.f.len();
        let mut f_max = 0.0f64;
        let mut d0_max = 0.0f64;
        let mut d1_max = 0.0f64;
        let d0: Vec<f64> = signals.d0.iter().map(|s| s.eval(t)).collect();
        let d1: Vec<f64> = signals.d1.iter().map(|s| s.eval(t)).collect();
        for i in 0..n {
            let fi = max_abs(&f_fields[i]);
            self.f[i] = self.f[i].max(fi);
            self.d0[i] = self.d0[i].max(d0[i].abs());
            self.d1[i] = self.d1[i].max(d1[i].abs());
            self.q[i] = self.q[i].max(signals.q[i].eval(t).abs());
            f_max = f_max.max(fi);
            d0_max = d0_max.max(d0[i].abs());
            d1_max = d1_max.max(d1[i].abs());
        }
        self.r = self.r.max(signals.r.eval(t).abs());
        for i in 0..n {
            for j in (i + 1)..n {
                if f_max > 0.0 {
                    let diff = f_fields[i]
                        .iter()
                        .zip(&f_fields[j])
                        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
                    self.f_pair = self.f_pair.max(diff);
                }
                self.d0_pair = self.d0_pair.max((d0[i] - d0[j]).abs());
                self.d1_pair = self.d1_pair.max((d1[i] - d1[j]).abs());
            }
        }
        let elapsed = (t - self.time).max(0.0);
        for w in &mut self.weighted {
            let decay = (-w.sigma * elapsed).exp();
            w.f = (w.f * decay).max(f_max);
            w.d0 = (w.d0 * decay).max(d0_max);
            w.d1 = (w.d1 * decay).max(d1_max);
        }
        self.time = t;
    }

    pub fn f_max(&self) -> f64 {
        self.f.iter().copied().fold(0.0, f64::max)
    }

    pub fn d0_max(&self) -> f64 {
        self.d0.iter().copied().fold(0.0, f64::max)
    }

    pub fn d1_max(&self) -> f64 {
        self.d1.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub time: f64,
    pub u: Vec<GridField>,
    pub v: Vec<GridField>,
    pub qhat: Vec<GridField>,
    pub uref: GridField,
    pub acc: Accumulators,
}

impl ClosedLoopState {
    pub fn n_agents(&self) -> usize {
        self.u.len()
    }

    /// `q̃⁽ⁱ⁾ = u⁽ⁱ⁾ − v⁽ⁱ⁾ − q̂⁽ⁱ⁾`
    pub fn observer_error(&self, i: usize) -> GridField {
        let w = self.u[i].linear_combination(1.0, &self.v[i], -1.0);
        w.linear_combination(1.0, &self.qhat[i], -1.0)
    }
}

/// The plant, topology and exogenous signals of one closed loop.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub params: PlantParams,
    pub topology: CycleTopology,
    pub signals: ScenarioSignals,
}

impl ClosedLoop {
    pub fn new(params: PlantParams, signals: ScenarioSignals) -> Result<Self, SimError> {
        signals.validate(params.n_agents())?;
        let topology = CycleTopology::new(params.n_agents());
        Ok(Self {
            params,
            topology,
            signals,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.params.n_agents()
    }

    /// `U₀⁽ⁱ⁾(t) = r(t) − q̂⁽ⁱ⁾(0, t) + d₀⁽ⁱ⁾(t)`
    pub fn control_u0(&self, i: usize, t: f64, state: &ClosedLoopState) -> f64 {
        self.signals.r.eval(t) - state.qhat[i].trace(Endpoint::Left) + self.signals.d0[i].eval(t)
    }

    /// `U₁⁽ⁱ⁾(t) = kᵢ (u^{pred(i)}(1, t) − u^ref(1, t)) + d₁⁽ⁱ⁾(t)`
    pub fn control_u1(&self, i: usize, t: f64, state: &ClosedLoopState) -> f64 {
        let pred = self.topology.pred(i);
        self.params.gains[i] * (state.u[pred].trace(Endpoint::Right) - state.uref.trace(Endpoint::Right))
            + self.signals.d1[i].eval(t)
    }

    /// Neumann datum of the observer: `y⁽ⁱ⁾ − y_v⁽ⁱ⁾`.
    pub fn observer_left_flux(&self, i: usize, state: &ClosedLoopState) -> f64 {
        state.u[i].left_flux() - state.v[i].left_flux()
    }

    /// Residuals of the classical-solution compatibility conditions at `t = 0`.
    pub fn compatibility_residuals(&self, init: &InitialData) -> CompatibilityReport {
        let l = self.params.robin_l;
        let n = self.n_agents();
        let s = &self.signals;
        let state = ClosedLoopState {
            time: 0.0,
            u: init.u.clone(),
            v: init.v.clone(),
            qhat: init.qhat.clone(),
            uref: init.uref.clone(),
            acc: Accumulators::new(n, &[]),
        };
        let tracking: Vec<GridField> = init
            .u
            .iter()
            .map(|u| u.linear_combination(1.0, &init.uref, -1.0))
            .collect();
        let agents = (0..n)
            .map(|i| {
                let pred = self.topology.pred(i);
                let ut = &tracking[i];
                AgentResiduals {
                    tracking_left: (ut.trace(Endpoint::Left)
                        - (s.q[i].eval(0.0) + s.d0[i].eval(0.0) - init.qhat[i].trace(Endpoint::Left)))
                    .abs(),
                    tracking_right: (ut.right_flux() + l * ut.trace(Endpoint::Right)
                        - self.params.gains[i] * tracking[pred].trace(Endpoint::Right)
                        - s.d1[i].eval(0.0))
                    .abs(),
                    v_left: (init.v[i].trace(Endpoint::Left) - self.control_u0(i, 0.0, &state)).abs(),
                    v_right: (init.v[i].right_flux() + l * init.v[i].trace(Endpoint::Right)
                        - self.control_u1(i, 0.0, &state))
                    .abs(),
                }
            })
            .collect();
        CompatibilityReport {
            agents,
            reference_left: (init.uref.trace(Endpoint::Left) - s.r.eval(0.0)).abs(),
            reference_right: (init.uref.right_flux() + l * init.uref.trace(Endpoint::Right)).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResiduals {
    pub tracking_left: f64,
    pub tracking_right: f64,
    pub v_left: f64,
    pub v_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub agents: Vec<AgentResiduals>,
    pub reference_left: f64,
    pub reference_right: f64,
}

impl CompatibilityReport {
    pub fn max_residual(&self) -> f64 {
        self.agents
            .iter()
            .flat_map(|a| [a.tracking_left, a.tracking_right, a.v_left, a.v_right])
            .chain([self.reference_left, self.reference_right])
            .fold(0.0, f64::max)
    }
}

/// Treatment of boundary data that depends on other fields at the new level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Coupling {
    /// Use traces from the old level.
    Lagged,
    /// Re-step the agent, copy and observer fields up to `sweeps` more times
    /// with the traces of the previous pass, stopping early once the traces
    /// are stationary to rounding.
    Refined { sweeps: usize },
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling::Refined { sweeps: 6 }
    }
}

impl Coupling {
    fn passes(self) -> usize {
        match self {
            Coupling::Lagged => 1,
            Coupling::Refined { sweeps } => 1 + sweeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub dt: f64,
    pub coupling: Coupling,
    /// The first step is replaced by this many implicit-Euler substeps
    /// (0 keeps pure Crank–Nicolson).
    pub startup_substeps: usize,
    /// Decay rates for the weighted accumulators.
    pub sigmas: Vec<f64>,
}

impl SimulationOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            coupling: Coupling::default(),
            startup_substeps: 2,
            sigmas: Vec::new(),
        }
    }
}

/// Relative trace change below which refinement passes stop.
const STATIONARY_TRACES: f64 = 1e-15;

struct OperatorPair {
    dirichlet: StepOperator,
    neumann: StepOperator,
}

impl OperatorPair {
    fn new(params: &PlantParams, grid: SpatialGrid, dt: f64, scheme: TimeScheme) -> Result<Self, PdeError> {
        Ok(Self {
            dirichlet: StepOperator::new(params.diffusion(), grid, LeftKind::Dirichlet, dt, scheme)?,
            neumann: StepOperator::new(params.diffusion(), grid, LeftKind::Neumann, dt, scheme)?,
        })
    }
}

/// Time integrator for a [`ClosedLoop`].
pub struct Simulation {
    system: ClosedLoop,
    options: SimulationOptions,
    grid: SpatialGrid,
    nodes: Vec<f64>,
    main: OperatorPair,
    startup: Option<OperatorPair>,
    state: ClosedLoopState,
    steps_taken: usize,
    f_now: Vec<Vec<f64>>,
    f_next: Vec<Vec<f64>>,
}

impl Simulation {
    pub fn new(system: ClosedLoop, init: InitialData, options: SimulationOptions) -> Result<Self, SimError> {
        let n = system.n_agents();
        let grid = init.uref.grid();
        if init.u.len() != n || init.v.len() != n || init.qhat.len() != n {
            return Err(SimError::InitialData(format!(
                "expected {n} fields per family, got u: {}, v: {}, qhat: {}",
                init.u.len(),
                init.v.len(),
                init.qhat.len()
            )));
        }
        let all = init.u.iter().chain(&init.v).chain(&init.qhat);
        if all.clone().any(|f| f.grid() != grid) {
            return Err(SimError::InitialData("fields are sampled on different grids".into()));
        }
        let main = OperatorPair::new(&system.params, grid, options.dt, TimeScheme::CrankNicolson)?;
        let startup = if options.startup_substeps > 0 {
            let sub_dt = options.dt / options.startup_substeps as f64;
            Some(OperatorPair::new(&system.params, grid, sub_dt, TimeScheme::ImplicitEuler)?)
        } else {
            None
        };
        let nodes: Vec<f64> = grid.nodes().collect();
        let mut f_now = vec![vec![0.0; grid.node_count()]; n];
        for (i, buf) in f_now.iter_mut().enumerate() {
            system.signals.f[i].sample_into(&nodes, 0.0, buf);
        }
        let mut acc = Accumulators::new(n, &options.sigmas);
        acc.update(0.0, &system.signals, &f_now);
        let state = ClosedLoopState {
            time: 0.0,
            u: init.u,
            v: init.v,
            qhat: init.qhat,
            uref: init.uref,
            acc,
        };
        Ok(Self {
            f_next: f_now.clone(),
            system,
            options,
            grid,
            nodes,
            main,
            startup,
            state,
            steps_taken: 0,
            f_now,
        })
    }

    pub fn state(&self) -> &ClosedLoopState {
        &self.state
    }

    pub fn system(&self) -> &ClosedLoop {
        &self.system
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn options(&self) -> &SimulationOptions {
        &self.options
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// One global step of length `dt`.
    pub fn advance(&mut self) -> Result<(), SimError> {
        if self.steps_taken == 0 && self.startup.is_some() {
            for _ in 0..self.options.startup_substeps {
                self.substep(true)?;
            }
        } else {
            self.substep(false)?;
        }
        self.steps_taken += 1;
        // Pin the clock to the step count so repeated addition does not drift.
        let t = self.steps_taken as f64 * self.options.dt;
        stamp_time(&mut self.state, t);
        Ok(())
    }

    /// Advances until `state().time` reaches `horizon` (within half a step).
    pub fn run_until(&mut self, horizon: f64, mut observe: impl FnMut(&Self)) -> Result<(), SimError> {
        while self.state.time < horizon - 0.5 * self.options.dt {
            self.advance()?;
            observe(self);
        }
        Ok(())
    }

    fn substep(&mut self, startup: bool) -> Result<(), SimError> {
        let ops = if startup {
            self.startup.as_ref().expect("startup operators")
        } else {
            &self.main
        };
        let n = self.system.n_agents();
        let m = self.grid.intervals();
        let dt = ops.dirichlet.dt();
        let t0 = self.state.time;
        let t1 = t0 + dt;
        let sys = &self.system;
        let sig = &sys.signals;
        let state = &self.state;

        for (i, buf) in self.f_next.iter_mut().enumerate() {
            sig.f[i].sample_into(&self.nodes, t1, buf);
        }

        let u0_now: Vec<f64> = (0..n).map(|i| sys.control_u0(i, t0, state)).collect();
        let u1_now: Vec<f64> = (0..n).map(|i| sys.control_u1(i, t0, state)).collect();
        let y_now: Vec<f64> = (0..n).map(|i| sys.observer_left_flux(i, state)).collect();
        let r_now = sig.r.eval(t0);
        let r_next = sig.r.eval(t1);
        let q_now: Vec<f64> = sig.q.iter().map(|s| s.eval(t0)).collect();
        let q_next: Vec<f64> = sig.q.iter().map(|s| s.eval(t1)).collect();
        let d0_next: Vec<f64> = sig.d0.iter().map(|s| s.eval(t1)).collect();
        let d1_next: Vec<f64> = sig.d1.iter().map(|s| s.eval(t1)).collect();

        let mut uref_new = state.uref.clone();
        ops.dirichlet.step_into(
            state.uref.values(),
            &BoundaryData::dirichlet(r_now, 0.0),
            &BoundaryData::dirichlet(r_next, 0.0),
            &[],
            &[],
            uref_new.values_mut(),
        );

        let mut u_new = state.u.clone();
        let mut v_new = state.v.clone();
        let mut qhat_new = state.qhat.clone();

        let mut qhat_left_next: Vec<f64> = state.qhat.iter().map(|f| f.trace(Endpoint::Left)).collect();
        let mut u_right_next: Vec<f64> = state.u.iter().map(|f| f.trace(Endpoint::Right)).collect();
        let uref_right_next = uref_new.values()[m];

        for _ in 0..self.options.coupling.passes() {
            for i in 0..n {
                let pred = sys.topology.pred(i);
                let u0_next = r_next - qhat_left_next[i] + d0_next[i];
                let u1_next = sys.params.gains[i] * (u_right_next[pred] - uref_right_next) + d1_next[i];

                ops.dirichlet.step_into(
                    state.u[i].values(),
                    &BoundaryData::dirichlet(q_now[i] + u0_now[i], u1_now[i]),
                    &BoundaryData::dirichlet(q_next[i] + u0_next, u1_next),
                    &self.f_now[i],
                    &self.f_next[i],
                    u_new[i].values_mut(),
                );
                ops.dirichlet.step_into(
                    state.v[i].values(),
                    &BoundaryData::dirichlet(u0_now[i], u1_now[i]),
                    &BoundaryData::dirichlet(u0_next, u1_next),
                    &[],
                    &[],
                    v_new[i].values_mut(),
                );
                // u and v are already at the new level, so the observer datum is not lagged.
                let y_next = u_new[i].left_flux() - v_new[i].left_flux();
                ops.neumann.step_into(
                    state.qhat[i].values(),
                    &BoundaryData::neumann(y_now[i], 0.0),
                    &BoundaryData::neumann(y_next, 0.0),
                    &[],
                    &[],
                    qhat_new[i].values_mut(),
                );
            }
            let mut change = 0.0f64;
            let mut scale = 1.0f64;
            for i in 0..n {
                let (q, u) = (qhat_new[i].values()[0], u_new[i].values()[m]);
                change = change.max((q - qhat_left_next[i]).abs()).max((u - u_right_next[i]).abs());
                scale = scale.max(q.abs()).max(u.abs());
                qhat_left_next[i] = q;
                u_right_next[i] = u;
            }
            if change <= STATIONARY_TRACES * scale {
                break;
            }
        }

        check_finite("uref", &uref_new, t1)?;
        for i in 0..n {
            check_finite(&format!("u[{}]", i + 1), &u_new[i], t1)?;
            check_finite(&format!("v[{}]", i + 1), &v_new[i], t1)?;
            check_finite(&format!("qhat[{}]", i + 1), &qhat_new[i], t1)?;
        }

        self.state.uref = uref_new;
        self.state.u = u_new;
        self.state.v = v_new;
        self.state.qhat = qhat_new;
        stamp_time(&mut self.state, t1);
        std::mem::swap(&mut self.f_now, &mut self.f_next);
        self.state.acc.update(t1, &self.system.signals, &self.f_now);
        Ok(())
    }
}

fn stamp_time(state: &mut ClosedLoopState, t: f64) {
    state.time = t;
    for f in state.u.iter_mut().chain(state.v.iter_mut()).chain(state.qhat.iter_mut()) {
        f.set_time(t);
    }
    state.uref.set_time(t);
}

fn check_finite(name: &str, field: &GridField, time: f64) -> Result<(), SimError> {
    if field.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SimError::NonFinite {
            field: name.to_string(),
            time,
        })
    }
}
