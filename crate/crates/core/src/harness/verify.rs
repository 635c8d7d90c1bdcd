//! Checking sampled left-hand sides against the analytic bounds.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::HarnessError;
use crate::bounds::{
    compute_constants, rhs_theorem1, rhs_theorem2, rhs_theorem3_pair, rhs_theorem4, update_functionals, InitNorms,
    SignalSups, TheoremConstants,
};
use crate::metrics::{agent_pairs, ErrorSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    /// `|q − q̂(0)|`
    Estimation,
    /// `‖q − q̂‖`, the middle term of the same chain.
    ObserverField,
    Tracking,
    Synchronization,
    ClosedLoop,
}

impl Estimate {
    pub fn theorem(self) -> u8 {
        match self {
            Estimate::Estimation | Estimate::ObserverField => 1,
            Estimate::Tracking => 2,
            Estimate::Synchronization => 3,
            Estimate::ClosedLoop => 4,
        }
    }

    pub const ALL: [Estimate; 5] = [
        Estimate::Estimation,
        Estimate::ObserverField,
        Estimate::Tracking,
        Estimate::Synchronization,
        Estimate::ClosedLoop,
    ];
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Estimate::Estimation => "estimation",
            Estimate::ObserverField => "observer field",
            Estimate::Tracking => "tracking",
            Estimate::Synchronization => "synchronization",
            Estimate::ClosedLoop => "closed loop",
        };
        write!(f, "theorem {} ({name})", self.theorem())
    }
}

/// Worst sample of one estimate for one agent (or unordered pair) and one `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub estimate: Estimate,
    /// 1-based agent indices: one entry, or two for a pair (ascending).
    pub agents: Vec<usize>,
    pub sigma: f64,
    /// `min_t (RHS·(1 + tol) − LHS)`
    pub worst_margin: f64,
    pub worst_time: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Largest `LHS / RHS` seen, or 0 when the RHS vanishes with the LHS.
    pub max_ratio: f64,
    pub pass: bool,
}

impl Check {
    fn label(&self) -> String {
        match self.agents.as_slice() {
            [i] => format!("agent {i}"),
            [i, j] => format!("pair ({i},{j})"),
            _ => String::new(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, sigma = {}: {} at t = {} (lhs {:.6e}, rhs {:.6e}, margin {:.3e})",
            self.estimate,
            self.label(),
            self.sigma,
            if self.pass { "pass" } else { "FAIL" },
            self.worst_time,
            self.lhs,
            self.rhs,
            self.worst_margin
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tolerance: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Check for `estimate` on agent `i` (or the pair `i`, `j` in either order), 1-based.
    pub fn find(&self, estimate: Estimate, agents: &[usize], sigma: f64) -> Option<&Check> {
        let mut key = agents.to_vec();
        key.sort_unstable();
        self.checks
            .iter()
            .find(|c| c.estimate == estimate && c.agents == key && c.sigma == sigma)
    }

    /// Smallest margin over every check of `estimate`.
    pub fn worst_margin(&self, estimate: Estimate) -> Option<f64> {
        self.checks
            .iter()
            .filter(|c| c.estimate == estimate)
            .map(|c| c.worst_margin)
            .reduce(f64::min)
    }

    pub fn all_pass(&self, estimate: Estimate) -> bool {
        self.checks.iter().filter(|c| c.estimate == estimate).all(|c| c.pass)
    }

    /// One line per estimate and `σ`, with the tightest index.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let mut sigmas: Vec<f64> = Vec::new();
        for c in &self.checks {
            if !sigmas.contains(&c.sigma) {
                sigmas.push(c.sigma);
            }
        }
        for est in Estimate::ALL {
            for &sigma in &sigmas {
                let tightest = self
                    .checks
                    .iter()
                    .filter(|c| c.estimate == est && c.sigma == sigma)
                    .min_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin));
                if let Some(c) = tightest {
                    out.push_str(&c.to_string());
                    out.push('\n');
                }
            }
        }
        out
    }
}

struct Tracker {
    worst_margin: f64,
    worst_time: f64,
    lhs: f64,
    rhs: f64,
    max_ratio: f64,
}

impl Tracker {
    fn new() -> Self {
        Self {
            worst_margin: f64::INFINITY,
            worst_time: 0.0,
            lhs: 0.0,
            rhs: 0.0,
            max_ratio: 0.0,
        }
    }

    fn push(&mut self, t: f64, lhs: f64, rhs: f64, tol: f64) {
        let margin = rhs * (1.0 + tol) - lhs;
        // NaN margins must register as failures.
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
            self.worst_time = t;
            self.lhs = lhs;
            self.rhs = rhs;
        }
        if rhs > 0.0 {
            self.max_ratio = self.max_ratio.max(lhs / rhs);
        } else if lhs > 0.0 {
            self.max_ratio = f64::INFINITY;
        }
    }

    fn finish(self, estimate: Estimate, agents: Vec<usize>, sigma: f64) -> Check {
        Check {
            estimate,
            agents,
            sigma,
            pass: self.worst_margin >= 0.0,
            worst_margin: self.worst_margin,
            worst_time: self.worst_time,
            lhs: self.lhs,
            rhs: self.rhs,
            max_ratio: self.max_ratio,
        }
    }
}

/// Constants for every configured `σ`.
pub fn constants_for(config: &ScenarioConfig) -> Result<Vec<TheoremConstants>, HarnessError> {
    config
        .sigmas
        .iter()
        .map(|&s| compute_constants(&config.plant, s).map_err(HarnessError::from))
        .collect()
}

pub fn verify(config: &ScenarioConfig, series: &ErrorSeries, init: &InitNorms) -> Result<VerificationReport, HarnessError> {
    let n = config.plant.n_agents();
    let lambda = config.plant.lambda;
    let tol = config.tolerance;
    let pairs = agent_pairs(n);
    let mut checks = Vec::new();

    for constants in constants_for(config)? {
        let sigma = constants.sigma;
        let mut est: Vec<Tracker> = (0..n).map(|_| Tracker::new()).collect();
        let mut obs: Vec<Tracker> = (0..n).map(|_| Tracker::new()).collect();
        let mut trk: Vec<Tracker> = (0..n).map(|_| Tracker::new()).collect();
        let mut syn: Vec<Tracker> = pairs.iter().map(|_| Tracker::new()).collect();
        let mut cl: Vec<Tracker> = (0..n).map(|_| Tracker::new()).collect();

        for (k, &t) in series.times.iter().enumerate() {
            let acc = &series.accumulators[k];
            let fun = update_functionals(acc, lambda, config.plant.robin_l, sigma);
            for i in 0..n {
                let r1 = rhs_theorem1(t, sigma, lambda, init.q_tilde[i], acc.f[i]);
                est[i].push(t, series.estimation[k][i], r1, tol);
                obs[i].push(t, series.observer_error[k][i], r1, tol);
                let r2 = rhs_theorem2(i, t, &constants, fun.d, init);
                trk[i].push(t, series.tracking[k][i], r2, tol);
                let sups = SignalSups {
                    r: acc.r,
                    q: acc.q[i],
                };
                let r4 = rhs_theorem4(i, t, &constants, fun.d, sups, init);
                cl[i].push(t, series.closed_loop[k][i], r4, tol);
            }
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let r3 = rhs_theorem3_pair(i, j, t, &constants, &fun, init);
                syn[p].push(t, series.sync[k][p], r3, tol);
            }
        }

        let singles = [
            (Estimate::Estimation, est),
            (Estimate::ObserverField, obs),
            (Estimate::Tracking, trk),
            (Estimate::ClosedLoop, cl),
        ];
        for (estimate, trackers) in singles {
            for (i, tr) in trackers.into_iter().enumerate() {
                checks.push(tr.finish(estimate, vec![i + 1], sigma));
            }
        }
        for (tr, &(i, j)) in syn.into_iter().zip(&pairs) {
            checks.push(tr.finish(Estimate::Synchronization, vec![i + 1, j + 1], sigma));
        }
    }

    checks.sort_by_key(|c| {
        let order = Estimate::ALL.iter().position(|e| *e == c.estimate).unwrap_or(0);
        (order, c.agents.clone())
    });
    Ok(VerificationReport {
        tolerance: tol,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}
