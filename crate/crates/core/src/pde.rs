//! Uniform-grid θ-scheme for `w_t = α w_xx − λ w + f` on `(0, 1)`.
//!
//! The right end is always Robin, `w_x(1) = −l w(1) + g`, discretised with a
//! ghost node. The left end is either a strongly imposed Dirichlet value or a
//! Neumann datum enforced at the new time level through the second-order
//! one-sided stencil used by [`GridField::left_flux`]. Using the same stencil
//! for measuring and imposing fluxes keeps the observer error identity exact
//! at the discrete level.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("grid needs at least {min} intervals, got {got}")]
    GridTooCoarse { min: usize, got: usize },
    #[error("parameter `{name}` must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("time step `dt` must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in {what} at t = {time}")]
    NonFinite { what: String, time: f64 },
    #[error("boundary data is {given:?} on the left but the operator was assembled for {expected:?}")]
    BoundaryKindMismatch { expected: LeftKind, given: LeftKind },
    #[error("field lives on a different grid than the step operator")]
    GridMismatch,
    #[error("tridiagonal elimination hit a zero pivot at row {0}")]
    SingularPivot(usize),
}

/// Uniform grid `x_j = j/M`, `j = 0..=M`, on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialGrid {
    intervals: usize,
}

impl SpatialGrid {
    pub const MIN_INTERVALS: usize = 4;

    pub fn new(intervals: usize) -> Result<Self, PdeError> {
        if intervals < Self::MIN_INTERVALS {
            return Err(PdeError::GridTooCoarse {
                min: Self::MIN_INTERVALS,
                got: intervals,
            });
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn node_count(&self) -> usize {
        self.intervals + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    /// `j / M`; exact at both ends.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.intervals as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.intervals).map(move |j| self.node(j))
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Left,
    Right,
}

/// Nodal values of a scalar field at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: SpatialGrid,
    values: Vec<f64>,
    time: f64,
}

impl GridField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>, time: f64) -> Result<Self, PdeError> {
        if values.len() != grid.node_count() {
            return Err(PdeError::LengthMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if !time.is_finite() || time < 0.0 {
            return Err(PdeError::InvalidParameter {
                name: "time",
                requirement: "finite and nonnegative",
                value: time,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PdeError::NonFinite {
                what: "field values".into(),
                time,
            });
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: SpatialGrid, time: f64) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.node_count()],
            time,
        }
    }

    pub fn from_fn(grid: SpatialGrid, time: f64, f: impl Fn(f64) -> f64) -> Result<Self, PdeError> {
        Self::new(grid, grid.sample(f), time)
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn trace(&self, endpoint: Endpoint) -> f64 {
        match endpoint {
            Endpoint::Left => self.values[0],
            Endpoint::Right => self.values[self.grid.intervals],
        }
    }

    /// `(−3w₀ + 4w₁ − w₂) / 2h`, exact on quadratics.
    pub fn left_flux(&self) -> f64 {
        let w = &self.values;
        (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * self.grid.spacing())
    }

    /// `(3w_M − 4w_{M−1} + w_{M−2}) / 2h`.
    pub fn right_flux(&self) -> f64 {
        let w = &self.values;
        let m = self.grid.intervals;
        (3.0 * w[m] - 4.0 * w[m - 1] + w[m - 2]) / (2.0 * self.grid.spacing())
    }

    pub fn max_norm(&self) -> f64 {
        max_abs(&self.values)
    }

    /// `‖self − other‖` over the nodes, without allocating the difference.
    pub fn max_norm_of_difference(&self, other: &GridField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| f64::max(acc, (a - b).abs()))
    }

    pub fn linear_combination(&self, a: f64, other: &GridField, b: f64) -> GridField {
        GridField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            time: self.time,
        }
    }
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| f64::max(acc, v.abs()))
}

/// Coefficients of the scalar operator `α ∂xx − λ` with Robin coefficient `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusion {
    pub alpha: f64,
    pub lambda: f64,
    pub robin_l: f64,
}

impl Diffusion {
    pub fn new(alpha: f64, lambda: f64, robin_l: f64) -> Result<Self, PdeError> {
        positive("alpha", alpha)?;
        positive("lambda", lambda)?;
        positive("robin_l", robin_l)?;
        Ok(Self {
            alpha,
            lambda,
            robin_l,
        })
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), PdeError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(PdeError::InvalidParameter {
            name,
            requirement: "finite and > 0",
            value,
        })
    }
}

/// Plant coefficients shared by every agent plus the per-agent coupling gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    pub alpha: f64,
    pub lambda: f64,
    pub robin_l: f64,
    pub gains: Vec<f64>,
}

impl PlantParams {
    /// Validates `α, λ, l > 0`, `N ≥ 2` and `0 < kᵢ < l`.
    pub fn new(alpha: f64, lambda: f64, robin_l: f64, gains: Vec<f64>) -> Result<Self, PdeError> {
        Diffusion::new(alpha, lambda, robin_l)?;
        if gains.len() < 2 {
            return Err(PdeError::InvalidParameter {
                name: "gains",
                requirement: "at least two agents",
                value: gains.len() as f64,
            });
        }
        for &k in &gains {
            if !(k.is_finite() && k > 0.0 && k < robin_l) {
                return Err(PdeError::InvalidParameter {
                    name: "gains",
                    requirement: "inside (0, robin_l)",
                    value: k,
                });
            }
        }
        Ok(Self {
            alpha,
            lambda,
            robin_l,
            gains,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.gains.len()
    }

    pub fn diffusion(&self) -> Diffusion {
        Diffusion {
            alpha: self.alpha,
            lambda: self.lambda,
            robin_l: self.robin_l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftKind {
    Dirichlet,
    Neumann,
}

/// Boundary data at one time level. `left_value` is `w(0)` for Dirichlet and
/// `w_x(0)` for Neumann; the right end obeys `w_x(1) = −l w(1) + right_flux_extra`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    pub left_kind: LeftKind,
    pub left_value: f64,
    pub right_flux_extra: f64,
}

impl BoundaryData {
    pub fn dirichlet(value: f64, right_flux_extra: f64) -> Self {
        Self {
            left_kind: LeftKind::Dirichlet,
            left_value: value,
            right_flux_extra,
        }
    }

    pub fn neumann(flux: f64, right_flux_extra: f64) -> Self {
        Self {
            left_kind: LeftKind::Neumann,
            left_value: flux,
            right_flux_extra,
        }
    }

    fn is_finite(&self) -> bool {
        self.left_value.is_finite() && self.right_flux_extra.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    CrankNicolson,
    ImplicitEuler,
}

impl TimeScheme {
    pub fn theta(self) -> f64 {
        match self {
            TimeScheme::CrankNicolson => 0.5,
            TimeScheme::ImplicitEuler => 1.0,
        }
    }
}

/// Pre-factorised implicit operator for one `(coefficients, grid, dt, scheme, left kind)`.
#[derive(Debug, Clone)]
pub struct StepOperator {
    grid: SpatialGrid,
    dt: f64,
    theta: f64,
    left_kind: LeftKind,
    diffusion: Diffusion,
    /// `α dt / h²`
    ratio: f64,
    lower: Vec<f64>,
    upper_scaled: Vec<f64>,
    inv_pivot: Vec<f64>,
}

/// Crank–Nicolson operator.
pub fn assemble_step_operator(
    params: &PlantParams,
    grid: SpatialGrid,
    left_kind: LeftKind,
    dt: f64,
) -> Result<StepOperator, PdeError> {
    StepOperator::new(params.diffusion(), grid, left_kind, dt, TimeScheme::CrankNicolson)
}

impl StepOperator {
    pub fn new(
        diffusion: Diffusion,
        grid: SpatialGrid,
        left_kind: LeftKind,
        dt: f64,
        scheme: TimeScheme,
    ) -> Result<Self, PdeError> {
        let diffusion = Diffusion::new(diffusion.alpha, diffusion.lambda, diffusion.robin_l)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(PdeError::InvalidTimeStep(dt));
        }
        let theta = scheme.theta();
        let m = grid.intervals();
        let h = grid.spacing();
        let ratio = diffusion.alpha * dt / (h * h);
        let decay = diffusion.lambda * dt;

        let n = grid.node_count();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];

        let (a_int, b_int, c_int) = interior_row(theta, ratio, decay);
        for j in 1..m {
            lower[j] = a_int;
            diag[j] = b_int;
            upper[j] = c_int;
        }
        lower[m] = -2.0 * theta * ratio;
        diag[m] = 1.0 + theta * (2.0 * ratio * (1.0 + h * diffusion.robin_l) + decay);

        match left_kind {
            LeftKind::Dirichlet => {
                diag[0] = 1.0;
                upper[0] = 0.0;
            }
            LeftKind::Neumann => {
                // One-sided flux row with w₂ eliminated through row 1, then negated.
                diag[0] = 3.0 - a_int / c_int;
                upper[0] = -4.0 - b_int / c_int;
            }
        }

        let mut upper_scaled = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for j in 0..n {
            let pivot = diag[j] - lower[j] * prev;
            if pivot.abs() < f64::MIN_POSITIVE || !pivot.is_finite() {
                return Err(PdeError::SingularPivot(j));
            }
            inv_pivot[j] = 1.0 / pivot;
            upper_scaled[j] = upper[j] * inv_pivot[j];
            prev = upper_scaled[j];
        }

        Ok(Self {
            grid,
            dt,
            theta,
            left_kind,
            diffusion,
            ratio,
            lower,
            upper_scaled,
            inv_pivot,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn left_kind(&self) -> LeftKind {
        self.left_kind
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Advances nodal values by one step into `out`. Empty source slices mean
    /// a zero source. No finiteness checks; see [`step`].
    pub fn step_into(
        &self,
        current: &[f64],
        bd_now: &BoundaryData,
        bd_next: &BoundaryData,
        source_now: &[f64],
        source_next: &[f64],
        out: &mut [f64],
    ) {
        let m = self.grid.intervals();
        let h = self.grid.spacing();
        let theta = self.theta;
        let explicit = 1.0 - theta;
        let r = self.ratio;
        let dt = self.dt;
        let decay = self.diffusion.lambda * dt;
        let hl = h * self.diffusion.robin_l;
        let w = current;
        let src = |j: usize| -> f64 {
            let f0 = source_now.get(j).copied().unwrap_or(0.0);
            let f1 = source_next.get(j).copied().unwrap_or(0.0);
            dt * (theta * f1 + explicit * f0)
        };

        for j in 1..m {
            let lap = w[j - 1] - 2.0 * w[j] + w[j + 1];
            out[j] = w[j] + explicit * (r * lap - decay * w[j]) + src(j);
        }
        let robin_lap = 2.0 * w[m - 1] - 2.0 * (1.0 + hl) * w[m];
        out[m] = w[m]
            + explicit * (r * robin_lap + 2.0 * r * h * bd_now.right_flux_extra - decay * w[m])
            + theta * 2.0 * r * h * bd_next.right_flux_extra
            + src(m);
        out[0] = match self.left_kind {
            LeftKind::Dirichlet => bd_next.left_value,
            LeftKind::Neumann => {
                let c1 = -theta * r;
                -2.0 * h * bd_next.left_value - out[1] / c1
            }
        };

        // Forward sweep then back substitution.
        let mut prev = 0.0;
        for j in 0..=m {
            let d = (out[j] - self.lower[j] * prev) * self.inv_pivot[j];
            out[j] = d;
            prev = d;
        }
        for j in (0..m).rev() {
            out[j] -= self.upper_scaled[j] * out[j + 1];
        }
    }
}

fn interior_row(theta: f64, ratio: f64, decay: f64) -> (f64, f64, f64) {
    let off = -theta * ratio;
    (off, 1.0 + theta * (2.0 * ratio + decay), off)
}

/// One θ-step of `field` with trapezoidal sources and boundary data.
pub fn step(
    field: &GridField,
    op: &StepOperator,
    bd_now: &BoundaryData,
    bd_next: &BoundaryData,
    source_now: &[f64],
    source_next: &[f64],
) -> Result<GridField, PdeError> {
    if field.grid != op.grid {
        return Err(PdeError::GridMismatch);
    }
    for bd in [bd_now, bd_next] {
        if bd.left_kind != op.left_kind {
            return Err(PdeError::BoundaryKindMismatch {
                expected: op.left_kind,
                given: bd.left_kind,
            });
        }
    }
    let n = field.grid.node_count();
    for s in [source_now, source_next] {
        if !s.is_empty() && s.len() != n {
            return Err(PdeError::LengthMismatch {
                expected: n,
                got: s.len(),
            });
        }
    }
    let next_time = field.time + op.dt;
    if !bd_now.is_finite() || !bd_next.is_finite() {
        return Err(PdeError::NonFinite {
            what: "boundary data".into(),
            time: field.time,
        });
    }
    let mut out = vec![0.0; n];
    op.step_into(&field.values, bd_now, bd_next, source_now, source_next, &mut out);
    GridField::new(field.grid, out, next_time)
}
