//! Reference and disturbance waveforms.
//!
//! Every family is `amplitude × shape`, so scaling the amplitude scales the
//! signal exactly. Descriptors deserialize from scenario files with a `kind`
//! tag, e.g. `{ kind = "sin", amplitude = 1.0, frequency = 10.0 }`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("unknown built-in scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario has {got} `{family}` signals for {expected} agents")]
    CountMismatch {
        family: &'static str,
        expected: usize,
        got: usize,
    },
}

/// A scalar signal of time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeSignal {
    #[default]
    Zero,
    /// `a · (offset + sin(ω t + φ))`
    Sin {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `a · (offset + cos(ω t + φ))`
    Cos {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `a · (slope · t + sin(ω t + φ))`
    RampPlusSin {
        amplitude: f64,
        slope: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `a · (level − e^{−rate · t})`
    ExpApproach { amplitude: f64, level: f64, rate: f64 },
    /// `factor · inner(t)`
    Scaled { factor: f64, inner: Box<TimeSignal> },
    /// Pointwise sum of the parts.
    Sum { parts: Vec<TimeSignal> },
}

impl TimeSignal {
    pub fn sin(amplitude: f64, frequency: f64, phase: f64) -> Self {
        TimeSignal::Sin {
            amplitude,
            frequency,
            phase,
            offset: 0.0,
        }
    }

    pub fn cos(amplitude: f64, frequency: f64, phase: f64) -> Self {
        TimeSignal::Cos {
            amplitude,
            frequency,
            phase,
            offset: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeSignal::Zero => 0.0,
            TimeSignal::Sin {
                amplitude,
                frequency,
                phase,
                offset,
            } => amplitude * (offset + (frequency * t + phase).sin()),
            TimeSignal::Cos {
                amplitude,
                frequency,
                phase,
                offset,
            } => amplitude * (offset + (frequency * t + phase).cos()),
            TimeSignal::RampPlusSin {
                amplitude,
                slope,
                frequency,
                phase,
            } => amplitude * (slope * t + (frequency * t + phase).sin()),
            TimeSignal::ExpApproach { amplitude, level, rate } => amplitude * (level - (-rate * t).exp()),
            TimeSignal::Scaled { factor, inner } => factor * inner.eval(t),
            TimeSignal::Sum { parts } => parts.iter().map(|p| p.eval(t)).sum(),
        }
    }

    /// Analytic time derivative.
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeSignal::Zero => 0.0,
            TimeSignal::Sin {
                amplitude,
                frequency,
                phase,
                ..
            } => amplitude * frequency * (frequency * t + phase).cos(),
            TimeSignal::Cos {
                amplitude,
                frequency,
                phase,
                ..
            } => -amplitude * frequency * (frequency * t + phase).sin(),
            TimeSignal::RampPlusSin {
                amplitude,
                slope,
                frequency,
                phase,
            } => amplitude * (slope + frequency * (frequency * t + phase).cos()),
            TimeSignal::ExpApproach { amplitude, rate, .. } => amplitude * rate * (-rate * t).exp(),
            TimeSignal::Scaled { factor, inner } => factor * inner.derivative(t),
            TimeSignal::Sum { parts } => parts.iter().map(|p| p.derivative(t)).sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeSignal::Zero => true,
            TimeSignal::Sin { amplitude, .. }
            | TimeSignal::Cos { amplitude, .. }
            | TimeSignal::RampPlusSin { amplitude, .. }
            | TimeSignal::ExpApproach { amplitude, .. } => *amplitude == 0.0,
            TimeSignal::Scaled { factor, inner } => *factor == 0.0 || inner.is_zero(),
            TimeSignal::Sum { parts } => parts.iter().all(TimeSignal::is_zero),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    pub fn apply(self, arg: f64) -> f64 {
        match self {
            Trig::Sin => arg.sin(),
            Trig::Cos => arg.cos(),
        }
    }
}

/// A scalar field on `[0, 1] × [0, ∞)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSignal {
    #[default]
    Zero,
    /// `a · (offset + trig(k x + ω t + φ))`
    OffsetPlusTrig {
        amplitude: f64,
        offset: f64,
        trig: Trig,
        spatial_frequency: f64,
        temporal_frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Sum { parts: Vec<FieldSignal> },
}

impl FieldSignal {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            FieldSignal::Zero => 0.0,
            FieldSignal::OffsetPlusTrig {
                amplitude,
                offset,
                trig,
                spatial_frequency,
                temporal_frequency,
                phase,
            } => amplitude * (offset + trig.apply(spatial_frequency * x + temporal_frequency * t + phase)),
            FieldSignal::Sum { parts } => parts.iter().map(|p| p.eval(x, t)).sum(),
        }
    }

    /// Samples the field at the given nodes into `out`.
    pub fn sample_into(&self, nodes: &[f64], t: f64, out: &mut [f64]) {
        if self.is_zero() {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        for (o, &x) in out.iter_mut().zip(nodes) {
            *o = self.eval(x, t);
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FieldSignal::Zero => true,
            FieldSignal::OffsetPlusTrig { amplitude, .. } => *amplitude == 0.0,
            FieldSignal::Sum { parts } => parts.iter().all(FieldSignal::is_zero),
        }
    }
}

/// Amplitude knobs of the built-in benchmark. `d0` scales the reference,
/// `d1` the measured disturbances, `a` the in-domain disturbances and
/// `a0`, `a1` the actuation disturbances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Knobs {
    #[serde(rename = "D0", default)]
    pub d0: f64,
    #[serde(rename = "D1", default)]
    pub d1: f64,
    #[serde(rename = "A", default)]
    pub a: f64,
    #[serde(rename = "A0", default)]
    pub a0: f64,
    #[serde(rename = "A1", default)]
    pub a1: f64,
}

impl Knobs {
    pub fn new(d0: f64, d1: f64, a: f64, a0: f64, a1: f64) -> Self {
        Self { d0, d1, a, a0, a1 }
    }
}

/// Reference plus per-agent disturbance signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSignals {
    pub r: TimeSignal,
    pub q: Vec<TimeSignal>,
    pub d0: Vec<TimeSignal>,
    pub d1: Vec<TimeSignal>,
    pub f: Vec<FieldSignal>,
}

impl ScenarioSignals {
    pub fn zero(n_agents: usize) -> Self {
        Self {
            r: TimeSignal::Zero,
            q: vec![TimeSignal::Zero; n_agents],
            d0: vec![TimeSignal::Zero; n_agents],
            d1: vec![TimeSignal::Zero; n_agents],
            f: vec![FieldSignal::Zero; n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self, n_agents: usize) -> Result<(), SignalError> {
        let counts = [
            ("q", self.q.len()),
            ("d0", self.d0.len()),
            ("d1", self.d1.len()),
            ("f", self.f.len()),
        ];
        for (family, got) in counts {
            if got != n_agents {
                return Err(SignalError::CountMismatch {
                    family,
                    expected: n_agents,
                    got,
                });
            }
        }
        Ok(())
    }

    /// True when `f`, `d0` and `d1` vanish for every agent.
    pub fn unobservable_is_zero(&self) -> bool {
        self.f.iter().all(FieldSignal::is_zero)
            && self.d0.iter().all(TimeSignal::is_zero)
            && self.d1.iter().all(TimeSignal::is_zero)
    }
}

pub const BENCHMARK: &str = "benchmark";
pub const BUILTIN_SCENARIOS: &[&str] = &[BENCHMARK];

/// Returns a named built-in signal set scaled by `knobs`.
pub fn builtin_scenario(name: &str, knobs: Knobs) -> Result<ScenarioSignals, SignalError> {
    match name {
        BENCHMARK => Ok(benchmark_signals(knobs)),
        other => Err(SignalError::UnknownScenario(other.to_string())),
    }
}

fn benchmark_signals(k: Knobs) -> ScenarioSignals {
    let r = TimeSignal::sin(k.d0, 10.0, 0.0);
    let q = vec![
        TimeSignal::sin(k.d1, 2.0, 0.0),
        TimeSignal::cos(0.5 * k.d1, 5.0, 0.0),
        TimeSignal::RampPlusSin {
            amplitude: k.d1,
            slope: 0.1,
            frequency: 1.0,
            phase: 0.0,
        },
        TimeSignal::ExpApproach {
            amplitude: k.d1,
            level: 2.0,
            rate: 1.0,
        },
        TimeSignal::sin(0.5 * k.d1, 2.0, 1.0),
    ];
    let field = |offset: f64, trig: Trig, spatial_frequency: f64| FieldSignal::OffsetPlusTrig {
        amplitude: k.a,
        offset,
        trig,
        spatial_frequency,
        temporal_frequency: 10.0,
        phase: 0.0,
    };
    let f = vec![
        field(-1.0, Trig::Sin, 1.0),
        field(1.2, Trig::Cos, 1.0),
        field(0.8, Trig::Sin, 1.0),
        field(-1.0, Trig::Sin, 2.0),
        field(1.0, Trig::Cos, 2.0),
    ];
    let d0 = vec![
        TimeSignal::sin(k.a0, 10.0, 5.0),
        TimeSignal::cos(k.a0, 10.0, 2.0),
        TimeSignal::sin(k.a0, 10.0, 1.0),
        TimeSignal::cos(k.a0, 10.0, 2.0),
        TimeSignal::sin(k.a0, 10.0, 4.0),
    ];
    let d1 = vec![
        TimeSignal::sin(k.a1, 10.0, 1.0),
        TimeSignal::sin(k.a1, 10.0, 2.0),
        TimeSignal::cos(k.a1, 10.0, 0.0),
        TimeSignal::sin(k.a1, 10.0, 0.0),
        TimeSignal::sin(k.a1, 10.0, 1.0),
    ];
    ScenarioSignals { r, q, d0, d1, f }
}
