//! Closed-form robustness constants and the right-hand sides of the
//! estimation, tracking, synchronization and ISS estimates.
//!
//! Formulas are written with 1-based agent indices and the cyclic rule
//! `k₀ = k_N`, `k₋₁ = k_{N−1}`, …; public accessors take 0-based indices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mas::{Accumulators, InitialData};
use crate::pde::PlantParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("sigma = {sigma} must lie in (0, lambda = {lambda})")]
    SigmaOutOfRange { sigma: f64, lambda: f64 },
    #[error("gain k_{index} = {gain} must lie in (0, l = {robin_l})")]
    GainOutOfRange { index: usize, gain: f64, robin_l: f64 },
    #[error("need at least two agents, got {0}")]
    TooFewAgents(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub gains: Vec<f64>,
    pub lambda: f64,
    pub robin_l: f64,
    pub sigma: f64,
    /// `∏ kᵢ / l^N`
    pub script_n: f64,
    pub m: Vec<f64>,
    pub c: Vec<f64>,
    pub c_tilde: Vec<f64>,
    /// `h[i][j]` for 0-based `i`, `j`.
    pub h: Vec<Vec<f64>>,
    /// `k_jm[j][m − 1]` for 0-based `j` and `m = 1..N−1`.
    pub k_jm: Vec<Vec<f64>>,
    pub h_tilde: Vec<Vec<f64>>,
}

/// Validates `σ ∈ (0, λ)` and `kᵢ ∈ (0, l)` and evaluates every constant.
pub fn compute_constants(params: &PlantParams, sigma: f64) -> Result<TheoremConstants, BoundsError> {
    for (i, &k) in params.gains.iter().enumerate() {
        if !(k > 0.0 && k < params.robin_l) {
            return Err(BoundsError::GainOutOfRange {
                index: i + 1,
                gain: k,
                robin_l: params.robin_l,
            });
        }
    }
    TheoremConstants::from_gains(&params.gains, params.robin_l, params.lambda, sigma)
}

impl TheoremConstants {
    /// Evaluates the formulas for arbitrary nonnegative gains; only `σ` and the
    /// agent count are checked. Used directly for degenerate cases such as `k ≡ 0`.
    pub fn from_gains(gains: &[f64], robin_l: f64, lambda: f64, sigma: f64) -> Result<Self, BoundsError> {
        let n = gains.len();
        if n < 2 {
            return Err(BoundsError::TooFewAgents(n));
        }
        if !(sigma > 0.0 && sigma < lambda) {
            return Err(BoundsError::SigmaOutOfRange { sigma, lambda });
        }
        let l = robin_l;
        // 1-based cyclic gain lookup.
        let k = |idx: i64| gains[(idx - 1).rem_euclid(n as i64) as usize];
        let ni = n as i64;

        let script_n = gains.iter().product::<f64>() / l.powi(n as i32);

        let m: Vec<f64> = (1..=ni)
            .map(|i| {
                let mut total = 1.0;
                for mm in 1..=i {
                    let prod: f64 = (0..mm).map(|r| k(i - r)).product();
                    total += prod / l.powi(mm as i32);
                }
                let head: f64 = (0..i).map(|r| k(i - r)).product();
                for mm in (i + 1)..ni {
                    let tail: f64 = (0..(mm - i)).map(|s| k(ni - s)).product();
                    total += head * tail / l.powi(mm as i32);
                }
                total
            })
            .collect();

        let c: Vec<f64> = m.iter().map(|mi| mi / (1.0 - script_n)).collect();
        let c_tilde: Vec<f64> = (1..=ni).map(|i| 1.0 + k(i) / l * c[(i - 2).rem_euclid(ni) as usize]).collect();

        let k_jm: Vec<Vec<f64>> = (1..=ni)
            .map(|j| {
                let head: f64 = (0..j).map(|r| k(j - r)).product();
                (1..ni)
                    .map(|mm| {
                        if mm <= j {
                            // Outside the range the bound needs; kept as the
                            // empty tail product.
                            head
                        } else {
                            let tail: f64 = (1..=(mm - j)).map(|s| k(ni + 1 - s)).product();
                            head * tail
                        }
                    })
                    .collect()
            })
            .collect();

        let h: Vec<Vec<f64>> = (1..=ni)
            .map(|i| {
                (1..=ni)
                    .map(|j| {
                        let mut total = (k(i) - k(j)).abs() / l;
                        for mm in 1..=j {
                            let prod: f64 = (0..mm).map(|r| k(j - r)).product();
                            total += prod * (k(i - mm) - k(j - mm)).abs() / l.powi(mm as i32 + 1);
                        }
                        for mm in (j + 1)..ni {
                            let kjm = k_jm[(j - 1) as usize][(mm - 1) as usize];
                            total += kjm * (k(i - mm + ni) - k(j - mm + ni)).abs() / l.powi(mm as i32 + 1);
                        }
                        total
                    })
                    .collect()
            })
            .collect();

        let h_tilde: Vec<Vec<f64>> = (1..=ni)
            .map(|i| {
                (1..=ni)
                    .map(|j| {
                        let hp = h[(i - 2).rem_euclid(ni) as usize][(j - 2).rem_euclid(ni) as usize];
                        k(j) * hp / (l * (1.0 - script_n)) + (k(i) - k(j)).abs() / l
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            gains: gains.to_vec(),
            lambda,
            robin_l,
            sigma,
            script_n,
            m,
            c,
            c_tilde,
            h,
            k_jm,
            h_tilde,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.gains.len()
    }
}

/// `𝒟(t)` and `𝒟̃(t)` built from running sups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceFunctionals {
    pub sigma: f64,
    pub d: f64,
    pub d_tilde: f64,
}

pub fn update_functionals(acc: &Accumulators, lambda: f64, robin_l: f64, sigma: f64) -> DisturbanceFunctionals {
    DisturbanceFunctionals {
        sigma,
        d: 2.0 / (lambda - sigma) * acc.f_max() + acc.d0_max() + acc.d1_max() / robin_l,
        d_tilde: 2.0 / (lambda - sigma) * acc.f_pair + acc.d0_pair + acc.d1_pair / robin_l,
    }
}

/// Max-norms of the initial data that enter the estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitNorms {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub qhat: Vec<f64>,
    /// `‖u₀⁽ⁱ⁾ − u₀^ref‖`
    pub u_tilde: Vec<f64>,
    /// `‖u₀⁽ⁱ⁾ − v₀⁽ⁱ⁾ − q̂₀⁽ⁱ⁾‖`
    pub q_tilde: Vec<f64>,
    pub uref: f64,
    /// `max_{i,j} ‖u₀⁽ⁱ⁾ − u₀⁽ʲ⁾‖`
    pub u_tilde_pair: f64,
    /// `max_{i,j} ‖q̃₀⁽ⁱ⁾ − q̃₀⁽ʲ⁾‖`
    pub q_tilde_pair: f64,
}

fn vmax(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl InitNorms {
    pub fn from_initial(init: &InitialData) -> Self {
        let n = init.u.len();
        let q_tilde_fields: Vec<_> = (0..n)
            .map(|i| {
                init.u[i]
                    .linear_combination(1.0, &init.v[i], -1.0)
                    .linear_combination(1.0, &init.qhat[i], -1.0)
            })
            .collect();
        let mut u_tilde_pair = 0.0f64;
        let mut q_tilde_pair = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                u_tilde_pair = u_tilde_pair.max(init.u[i].max_norm_of_difference(&init.u[j]));
                q_tilde_pair = q_tilde_pair.max(q_tilde_fields[i].max_norm_of_difference(&q_tilde_fields[j]));
            }
        }
        Self {
            u: init.u.iter().map(|f| f.max_norm()).collect(),
            v: init.v.iter().map(|f| f.max_norm()).collect(),
            qhat: init.qhat.iter().map(|f| f.max_norm()).collect(),
            u_tilde: init.u.iter().map(|f| f.max_norm_of_difference(&init.uref)).collect(),
            q_tilde: q_tilde_fields.iter().map(|f| f.max_norm()).collect(),
            uref: init.uref.max_norm(),
            u_tilde_pair,
            q_tilde_pair,
        }
    }

    pub fn max_u(&self) -> f64 {
        vmax(&self.u)
    }

    pub fn max_v(&self) -> f64 {
        vmax(&self.v)
    }

    pub fn max_qhat(&self) -> f64 {
        vmax(&self.qhat)
    }

    pub fn max_u_tilde(&self) -> f64 {
        vmax(&self.u_tilde)
    }

    pub fn max_q_tilde(&self) -> f64 {
        vmax(&self.q_tilde)
    }
}

/// Estimation error bound for one agent: `e^{−σt} ‖q̃₀⁽ⁱ⁾‖ + ‖f⁽ⁱ⁾‖_{C(Q̄_t)} / (λ − σ)`.
pub fn rhs_theorem1(t: f64, sigma: f64, lambda: f64, q_tilde0: f64, f_sup: f64) -> f64 {
    (-sigma * t).exp() * q_tilde0 + f_sup / (lambda - sigma)
}

/// Tracking error bound for agent `i`.
pub fn rhs_theorem2(i: usize, t: f64, constants: &TheoremConstants, d: f64, init: &InitNorms) -> f64 {
    let ct = constants.c_tilde[i];
    ct * d + ct * (-constants.sigma * t).exp() * (init.max_u_tilde() + init.max_q_tilde())
}

/// Synchronization error bound for the ordered pair `(i, j)`.
pub fn rhs_theorem3(
    i: usize,
    j: usize,
    t: f64,
    constants: &TheoremConstants,
    f: &DisturbanceFunctionals,
    init: &InitNorms,
) -> f64 {
    let decay = (-constants.sigma * t).exp();
    let ctj = constants.c_tilde[j];
    let cti = constants.c_tilde[i];
    ctj * f.d_tilde
        + ctj * decay * (init.u_tilde_pair + init.q_tilde_pair)
        + constants.h_tilde[i][j] * cti * (f.d + decay * (init.max_u_tilde() + init.max_q_tilde()))
}

/// The smaller of the two ordered bounds; `‖ũ⁽ⁱ'ʲ⁾‖ = ‖ũ⁽ʲ'ⁱ⁾‖`, so both apply.
pub fn rhs_theorem3_pair(
    i: usize,
    j: usize,
    t: f64,
    constants: &TheoremConstants,
    f: &DisturbanceFunctionals,
    init: &InitNorms,
) -> f64 {
    rhs_theorem3(i, j, t, constants, f, init).min(rhs_theorem3(j, i, t, constants, f, init))
}

/// Running sups of the observable inputs used by the ISS bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSups {
    pub r: f64,
    pub q: f64,
}

/// Closed-loop ISS bound for agent `i`.
pub fn rhs_theorem4(
    i: usize,
    t: f64,
    constants: &TheoremConstants,
    d: f64,
    sups: SignalSups,
    init: &InitNorms,
) -> f64 {
    let decay = (-constants.sigma * t).exp();
    let ct = constants.c_tilde[i];
    (1.0 + 2.0 * ct) * decay * (2.0 * init.max_u() + init.uref)
        + (4.0 + 2.0 * ct) * decay * (init.max_v() + init.max_qhat())
        + 3.0 * sups.r
        + 2.0 * sups.q
        + (1.0 + 2.0 * ct) * d
}

/// `sinh^N(γ) · ((γ coth γ + l)^N − ∏ kᵢ)` with `γ = √(1/α)`.
pub fn resolvent_determinant(params: &PlantParams) -> f64 {
    let n = params.n_agents() as i32;
    let gamma = (1.0 / params.alpha).sqrt();
    let coth = 1.0 / gamma.tanh();
    let prod: f64 = params.gains.iter().product();
    gamma.sinh().powi(n) * ((gamma * coth + params.robin_l).powi(n) - prod)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAINS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

    fn bench() -> TheoremConstants {
        let params = PlantParams::new(1.0, 5.0, 1.0, GAINS.to_vec()).unwrap();
        compute_constants(&params, 2.5).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn benchmark_constants_match_hand_values() {
        let c = bench();
        close(c.script_n, 0.0012, 1e-15);
        let m = [1.176, 1.234, 1.369, 1.5464, 1.7732];
        for (a, b) in c.m.iter().zip(m) {
            close(*a, b, 1e-12);
        }
        close(c.c[0], 1.1774128954745695, 1e-12);
        close(c.c[4], 1.775330396475771, 1e-12);
        close(c.c_tilde[0], 1.1775330396475772, 1e-12);
        close(c.c_tilde[4], 1.7741289547456947, 1e-12);
        close(c.h[1][0], 0.1476, 1e-12);
        close(c.h_tilde[1][0], 0.1478253904685623, 1e-12);
        close(c.h_tilde[0][1], 0.18362034441329597, 1e-12);
    }

    #[test]
    fn diagonal_and_sign_invariants() {
        let c = bench();
        for i in 0..5 {
            assert_eq!(c.h[i][i], 0.0);
            assert_eq!(c.h_tilde[i][i], 0.0);
            assert!(c.m[i] >= 1.0 && c.c[i] >= 1.0 && c.c_tilde[i] >= 1.0);
            for j in 0..5 {
                assert!(c.h[i][j] >= 0.0);
            }
        }
    }

    #[test]
    fn zero_and_uniform_gains() {
        let z = TheoremConstants::from_gains(&[0.0; 4], 1.0, 5.0, 2.5).unwrap();
        assert_eq!(z.script_n, 0.0);
        assert!(z.m.iter().chain(&z.c).chain(&z.c_tilde).all(|&v| v == 1.0));
        assert!(z.h.iter().flatten().all(|&v| v == 0.0));

        let u = TheoremConstants::from_gains(&[0.3; 6], 1.0, 5.0, 2.5).unwrap();
        assert!(u.h.iter().flatten().chain(u.h_tilde.iter().flatten()).all(|&v| v == 0.0));
    }

    #[test]
    fn argument_validation() {
        let params = PlantParams::new(1.0, 5.0, 1.0, GAINS.to_vec()).unwrap();
        assert!(matches!(compute_constants(&params, 5.0), Err(BoundsError::SigmaOutOfRange { .. })));
        assert!(matches!(compute_constants(&params, 0.0), Err(BoundsError::SigmaOutOfRange { .. })));
        assert!(TheoremConstants::from_gains(&[0.1], 1.0, 5.0, 1.0).is_err());
    }

    #[test]
    fn rhs_arithmetic() {
        close(rhs_theorem1(0.0, 2.5, 5.0, 2.0, 0.0), 2.0, 0.0);
        close(rhs_theorem1(1.0, 2.5, 5.0, 2.0, 4.4), 1.924169997247798, 1e-12);
        let c = bench();
        let zero = InitNorms {
            u: vec![0.0; 5],
            v: vec![0.0; 5],
            qhat: vec![0.0; 5],
            u_tilde: vec![0.0; 5],
            q_tilde: vec![0.0; 5],
            uref: 0.0,
            u_tilde_pair: 0.0,
            q_tilde_pair: 0.0,
        };
        close(rhs_theorem2(0, 1.0, &c, 3.52, &zero), 4.144916299559472, 1e-12);
        let none = DisturbanceFunctionals {
            sigma: 2.5,
            d: 0.0,
            d_tilde: 0.0,
        };
        for i in 0..5 {
            assert_eq!(rhs_theorem3(i, i, 0.0, &c, &none, &zero), 0.0);
        }
        let sups = SignalSups { r: 1.0, q: 0.0 };
        close(rhs_theorem4(2, 3.0, &c, 0.0, sups, &zero), 3.0, 1e-15);
    }

    #[test]
    fn determinant_values() {
        let params = PlantParams::new(1.0, 5.0, 1.0, GAINS.to_vec()).unwrap();
        close(resolvent_determinant(&params), 148.4104691639858, 1e-9);
        let bumped = PlantParams::new(1.0, 5.0, 1.0, vec![0.1, 0.2, 0.35, 0.4, 0.5]).unwrap();
        assert!(resolvent_determinant(&bumped) < resolvent_determinant(&params));
    }
}
