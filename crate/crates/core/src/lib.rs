//! Simulation and bound auditing for a network of boundary-controlled
//! reaction-diffusion agents.
//!
//! Each agent obeys `u_t = α u_xx − λ u + f` on `(0, 1)` with a Dirichlet
//! actuator on the left and a Robin actuator on the right. A duplicate
//! v-system and a Neumann-driven observer estimate the measured Dirichlet
//! disturbance, and a distributed controller on a directed cycle drives every
//! agent towards a reference PDE. The crate integrates the closed loop,
//! evaluates the analytic robustness constants, and checks the resulting
//! max-norm estimates against simulated trajectories.
//!
//! Module map:
//!
//! * [`pde`] – grids, fields and the θ-scheme stepper for a single equation.
//! * [`signals`] – reference and disturbance waveforms.
//! * [`mas`] – closed-loop state, topology, controls and the global step.
//! * [`bounds`] – closed-form constants and right-hand sides of the estimates.
//! * [`metrics`] – left-hand-side quantities and decay-rate fits.
//! * [`harness`] – scenario files, runs, CSV output, verification, sweeps
//!   and convergence studies.

pub mod bounds;
pub mod harness;
pub mod mas;
pub mod metrics;
pub mod pde;
pub mod signals;
