//! Scenario files.
//!
//! A scenario is a TOML document. The smallest useful one is
//!
//! ```toml
//! preset = "benchmark"
//!
//! [scenario.knobs]
//! D0 = 1.0
//! D1 = 1.0
//! ```
//!
//! which selects the five-agent benchmark plant, signals and initial data.
//! Every section can be spelled out explicitly instead; see
//! [`ScenarioConfig::to_toml`] for the fully resolved form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::mas::{Coupling, InitialDataSpec};
use crate::pde::PlantParams;
use crate::signals::{builtin_scenario, Knobs, ScenarioSignals, BENCHMARK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    plant: Option<RawPlant>,
    #[serde(default)]
    numerics: RawNumerics,
    #[serde(default)]
    bounds: RawBounds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<RawScenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<InitialChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepSpec>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    alpha: f64,
    lambda: f64,
    robin_l: f64,
    gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawNumerics {
    intervals: usize,
    dt: f64,
    horizon: f64,
    coupling: CouplingName,
    coupling_sweeps: usize,
    startup_substeps: usize,
    cadence: usize,
}

impl Default for RawNumerics {
    fn default() -> Self {
        Self {
            intervals: 200,
            dt: 1e-3,
            horizon: 5.0,
            coupling: CouplingName::Refined,
            coupling_sweeps: 6,
            startup_substeps: 2,
            cadence: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CouplingName {
    Lagged,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawBounds {
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    knobs: Option<Knobs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    signals: Option<ScenarioSignals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum InitialChoice {
    Benchmark,
    Zero,
    Profiles(InitialDataSpec),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
}

/// Amplitude lists; the sweep runs their Cartesian product. Empty lists keep
/// the base scenario's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    #[serde(rename = "D0", skip_serializing_if = "Vec::is_empty")]
    pub d0: Vec<f64>,
    #[serde(rename = "D1", skip_serializing_if = "Vec::is_empty")]
    pub d1: Vec<f64>,
    #[serde(rename = "A", skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<f64>,
    #[serde(rename = "A0", skip_serializing_if = "Vec::is_empty")]
    pub a0: Vec<f64>,
    #[serde(rename = "A1", skip_serializing_if = "Vec::is_empty")]
    pub a1: Vec<f64>,
}

impl SweepSpec {
    pub fn expand(&self, base: Knobs) -> Vec<Knobs> {
        let pick = |list: &Vec<f64>, dflt: f64| if list.is_empty() { vec![dflt] } else { list.clone() };
        let mut out = Vec::new();
        for &d0 in &pick(&self.d0, base.d0) {
            for &d1 in &pick(&self.d1, base.d1) {
                for &a in &pick(&self.a, base.a) {
                    for &a0 in &pick(&self.a0, base.a0) {
                        for &a1 in &pick(&self.a1, base.a1) {
                            out.push(Knobs::new(d0, d1, a, a0, a1));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Where the signals of a scenario come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    Builtin { name: String, knobs: Knobs },
    Explicit(ScenarioSignals),
}

impl SignalSource {
    pub fn resolve(&self) -> Result<ScenarioSignals, HarnessError> {
        match self {
            SignalSource::Builtin { name, knobs } => Ok(builtin_scenario(name, *knobs)?),
            SignalSource::Explicit(s) => Ok(s.clone()),
        }
    }

    pub fn knobs(&self) -> Option<Knobs> {
        match self {
            SignalSource::Builtin { knobs, .. } => Some(*knobs),
            SignalSource::Explicit(_) => None,
        }
    }
}

/// A validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantParams,
    pub intervals: usize,
    pub dt: f64,
    pub horizon: f64,
    pub coupling: Coupling,
    pub startup_substeps: usize,
    /// Record every `cadence`-th step.
    pub cadence: usize,
    pub sigmas: Vec<f64>,
    pub tolerance: f64,
    pub signals: SignalSource,
    pub initial: InitialDataSpec,
    pub sweep: Option<SweepSpec>,
    pub output_dir: Option<PathBuf>,
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

/// `0.1λ`, `0.5λ` and `0.9λ`.
pub fn default_sigmas(lambda: f64) -> Vec<f64> {
    vec![0.1 * lambda, 0.5 * lambda, 0.9 * lambda]
}

pub fn benchmark_plant() -> PlantParams {
    PlantParams::new(1.0, 5.0, 1.0, vec![0.1, 0.2, 0.3, 0.4, 0.5]).expect("benchmark plant is valid")
}

impl ScenarioConfig {
    /// The benchmark preset with the given amplitude knobs.
    pub fn benchmark(knobs: Knobs) -> Self {
        let plant = benchmark_plant();
        Self {
            name: BENCHMARK.to_string(),
            sigmas: default_sigmas(plant.lambda),
            plant,
            intervals: 200,
            dt: 1e-3,
            horizon: 5.0,
            coupling: Coupling::default(),
            startup_substeps: 2,
            cadence: 10,
            tolerance: 0.05,
            signals: SignalSource::Builtin {
                name: BENCHMARK.to_string(),
                knobs,
            },
            initial: InitialDataSpec::benchmark(),
            sweep: None,
            output_dir: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Parse(msg) => HarnessError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn from_raw(raw: RawConfig) -> Result<Self, HarnessError> {
        let preset = match raw.preset.as_deref() {
            None => false,
            Some(BENCHMARK) => true,
            Some(other) => return Err(invalid("preset", format!("unknown preset {other:?}"))),
        };

        let plant = match (&raw.plant, preset) {
            (Some(p), _) => PlantParams::new(p.alpha, p.lambda, p.robin_l, p.gains.clone())
                .map_err(|e| invalid("plant", e.to_string()))?,
            (None, true) => benchmark_plant(),
            (None, false) => return Err(invalid("plant", "section required without a preset")),
        };
        let n = plant.n_agents();

        let num = &raw.numerics;
        if num.intervals < 4 {
            return Err(invalid("intervals", format!("need at least 4, got {}", num.intervals)));
        }
        if !(num.dt.is_finite() && num.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", num.dt)));
        }
        if !(num.horizon.is_finite() && num.horizon > 0.0) {
            return Err(invalid("horizon", format!("must be positive, got {}", num.horizon)));
        }
        if num.cadence == 0 {
            return Err(invalid("cadence", "must be at least 1"));
        }
        let coupling = match num.coupling {
            CouplingName::Lagged => Coupling::Lagged,
            CouplingName::Refined => Coupling::Refined {
                sweeps: num.coupling_sweeps,
            },
        };

        let sigmas = raw.bounds.sigma.clone().unwrap_or_else(|| default_sigmas(plant.lambda));
        if sigmas.is_empty() {
            return Err(invalid("sigma", "list is empty"));
        }
        for &s in &sigmas {
            if !(s > 0.0 && s < plant.lambda) {
                return Err(invalid("sigma", format!("{s} is outside (0, {})", plant.lambda)));
            }
        }
        let tolerance = raw.bounds.tolerance.unwrap_or(0.05);
        if !(tolerance >= 0.0) {
            return Err(invalid("tolerance", format!("must be nonnegative, got {tolerance}")));
        }

        let scenario = raw.scenario.clone().unwrap_or_default();
        let signals = match (scenario.signals, scenario.builtin) {
            (Some(_), Some(_)) => return Err(invalid("scenario", "give either builtin or signals, not both")),
            (Some(s), None) => {
                if scenario.knobs.is_some() {
                    return Err(invalid("knobs", "only apply to builtin scenarios"));
                }
                SignalSource::Explicit(s)
            }
            (None, name) => {
                let name = match (name, preset) {
                    (Some(name), _) => name,
                    (None, true) => BENCHMARK.to_string(),
                    (None, false) => return Err(invalid("scenario", "signals required without a preset")),
                };
                SignalSource::Builtin {
                    name,
                    knobs: scenario.knobs.unwrap_or_default(),
                }
            }
        };
        signals
            .resolve()?
            .validate(n)
            .map_err(|e| invalid("scenario", e.to_string()))?;

        let initial = match (raw.initial.clone(), preset) {
            (Some(InitialChoice::Benchmark), _) | (None, true) => InitialDataSpec::benchmark(),
            (Some(InitialChoice::Zero), _) => InitialDataSpec::zero(n),
            (Some(InitialChoice::Profiles(spec)), _) => spec,
            (None, false) => InitialDataSpec::zero(n),
        };
        if initial.n_agents() != n {
            return Err(invalid(
                "initial",
                format!("{} agent profiles for {n} agents", initial.n_agents()),
            ));
        }

        if raw.sweep.is_some() && !matches!(signals, SignalSource::Builtin { .. }) {
            return Err(invalid("sweep", "requires a builtin scenario"));
        }

        Ok(Self {
            name: raw.name.unwrap_or_else(|| raw.preset.clone().unwrap_or_else(|| "scenario".into())),
            plant,
            intervals: num.intervals,
            dt: num.dt,
            horizon: num.horizon,
            coupling,
            startup_substeps: num.startup_substeps,
            cadence: num.cadence,
            sigmas,
            tolerance,
            signals,
            initial,
            sweep: raw.sweep,
            output_dir: raw.output.dir,
        })
    }

    /// Fully explicit TOML that loads back to an equal config.
    pub fn to_toml(&self) -> String {
        let (coupling, coupling_sweeps) = match self.coupling {
            Coupling::Lagged => (CouplingName::Lagged, 0),
            Coupling::Refined { sweeps } => (CouplingName::Refined, sweeps),
        };
        let scenario = match &self.signals {
            SignalSource::Builtin { name, knobs } => RawScenario {
                builtin: Some(name.clone()),
                knobs: Some(*knobs),
                signals: None,
            },
            SignalSource::Explicit(s) => RawScenario {
                builtin: None,
                knobs: None,
                signals: Some(s.clone()),
            },
        };
        let raw = RawConfig {
            preset: None,
            name: Some(self.name.clone()),
            plant: Some(RawPlant {
                alpha: self.plant.alpha,
                lambda: self.plant.lambda,
                robin_l: self.plant.robin_l,
                gains: self.plant.gains.clone(),
            }),
            numerics: RawNumerics {
                intervals: self.intervals,
                dt: self.dt,
                horizon: self.horizon,
                coupling,
                coupling_sweeps,
                startup_substeps: self.startup_substeps,
                cadence: self.cadence,
            },
            bounds: RawBounds {
                sigma: Some(self.sigmas.clone()),
                tolerance: Some(self.tolerance),
            },
            scenario: Some(scenario),
            initial: Some(InitialChoice::Profiles(self.initial.clone())),
            sweep: self.sweep.clone(),
            output: RawOutput {
                dir: self.output_dir.clone(),
            },
        };
        toml::to_string(&raw).expect("config serializes")
    }

    /// Number of solver steps to reach the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn with_knobs(&self, knobs: Knobs) -> Self {
        let mut out = self.clone();
        if let SignalSource::Builtin { knobs: k, .. } = &mut out.signals {
            *k = knobs;
        }
        out
    }
}
