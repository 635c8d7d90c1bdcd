//! Left-hand sides of the estimates, sampled series and decay-rate fits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mas::{Accumulators, ClosedLoopState};
use crate::pde::Endpoint;
use crate::signals::ScenarioSignals;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least two samples in [{t0}, {t1}], got {got}")]
    TooFewSamples { t0: f64, t1: f64, got: usize },
    #[error("nonpositive value {value} at t = {time}; shrink the window")]
    NonPositive { time: f64, value: f64 },
}

/// `|q⁽ⁱ⁾(t) − q̂⁽ⁱ⁾(0, t)|`
pub fn estimation_error(i: usize, state: &ClosedLoopState, signals: &ScenarioSignals) -> f64 {
    (signals.q[i].eval(state.time) - state.qhat[i].trace(Endpoint::Left)).abs()
}

/// `‖u⁽ⁱ⁾ − v⁽ⁱ⁾ − q̂⁽ⁱ⁾‖`
pub fn observer_error_norm(i: usize, state: &ClosedLoopState) -> f64 {
    let (u, v, q) = (state.u[i].values(), state.v[i].values(), state.qhat[i].values());
    u.iter()
        .zip(v)
        .zip(q)
        .fold(0.0f64, |acc, ((a, b), c)| acc.max((a - b - c).abs()))
}

pub fn tracking_error_norm(i: usize, state: &ClosedLoopState) -> f64 {
    state.u[i].max_norm_of_difference(&state.uref)
}

pub fn sync_error_norm(i: usize, j: usize, state: &ClosedLoopState) -> f64 {
    state.u[i].max_norm_of_difference(&state.u[j])
}

/// `‖u⁽ⁱ⁾‖ + ‖u^ref‖ + ‖v⁽ⁱ⁾‖ + ‖q̂⁽ⁱ⁾‖`
pub fn closed_loop_norm(i: usize, state: &ClosedLoopState) -> f64 {
    state.u[i].max_norm() + state.uref.max_norm() + state.v[i].max_norm() + state.qhat[i].max_norm()
}

/// `J(t) = maxᵢ` of [`closed_loop_norm`].
pub fn j_functional(state: &ClosedLoopState) -> f64 {
    (0..state.n_agents())
        .map(|i| closed_loop_norm(i, state))
        .fold(0.0, f64::max)
}

/// Unordered pairs `(i, j)`, `i < j`, in row-major order.
pub fn agent_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

/// Left-hand-side samples of a run plus the accumulators seen at each sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    /// `estimation[k][i]`
    pub estimation: Vec<Vec<f64>>,
    pub observer_error: Vec<Vec<f64>>,
    pub tracking: Vec<Vec<f64>>,
    /// `sync[k][p]` over [`agent_pairs`].
    pub sync: Vec<Vec<f64>>,
    pub closed_loop: Vec<Vec<f64>>,
    pub j: Vec<f64>,
    pub accumulators: Vec<Accumulators>,
}

impl ErrorSeries {
    pub fn record(&mut self, state: &ClosedLoopState, signals: &ScenarioSignals) {
        let n = state.n_agents();
        self.times.push(state.time);
        self.estimation
            .push((0..n).map(|i| estimation_error(i, state, signals)).collect());
        self.observer_error
            .push((0..n).map(|i| observer_error_norm(i, state)).collect());
        self.tracking.push((0..n).map(|i| tracking_error_norm(i, state)).collect());
        self.sync.push(
            agent_pairs(n)
                .into_iter()
                .map(|(i, j)| sync_error_norm(i, j, state))
                .collect(),
        );
        let cl: Vec<f64> = (0..n).map(|i| closed_loop_norm(i, state)).collect();
        self.j.push(cl.iter().copied().fold(0.0, f64::max));
        self.closed_loop.push(cl);
        self.accumulators.push(state.acc.clone());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `maxᵢ` of a per-agent family at every sample.
    pub fn max_over_agents(family: &[Vec<f64>]) -> Vec<f64> {
        family.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).collect()
    }

    /// Largest value of `values` at samples with `t ∈ [t0, t1]`.
    pub fn window_sup(&self, values: &[f64], t0: f64, t1: f64) -> f64 {
        self.times
            .iter()
            .zip(values)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .fold(0.0f64, |acc, (_, v)| acc.max(*v))
    }
}

/// Least-squares slope of `−log(value)` against `t` over samples in `[t0, t1]`.
pub fn fit_decay_rate(times: &[f64], values: &[f64], t0: f64, t1: f64) -> Result<f64, FitError> {
    let mut pts = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < t0 || t > t1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(FitError::NonPositive { time: t, value: v });
        }
        pts.push((t, -v.ln()));
    }
    if pts.len() < 2 {
        return Err(FitError::TooFewSamples { t0, t1, got: pts.len() });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exponent() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.02).collect();
        let v: Vec<f64> = t.iter().map(|t| 1.7 * (-3.0 * t).exp()).collect();
        assert!((fit_decay_rate(&t, &v, 0.0, 1.0).unwrap() - 3.0).abs() < 1e-10);
        let flat = vec![0.4; t.len()];
        assert!(fit_decay_rate(&t, &flat, 0.0, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let t = [0.0, 0.1, 0.2];
        assert!(matches!(
            fit_decay_rate(&t, &[1.0, 0.0, 1.0], 0.0, 1.0),
            Err(FitError::NonPositive { .. })
        ));
        assert!(matches!(
            fit_decay_rate(&t, &[1.0, 1.0, 1.0], 0.15, 1.0),
            Err(FitError::TooFewSamples { got: 1, .. })
        ));
    }

    #[test]
    fn pair_order() {
        assert_eq!(agent_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(agent_pairs(5).len(), 10);
    }
}
