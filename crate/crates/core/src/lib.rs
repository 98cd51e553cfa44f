//! Exact-diagonalization simulation of non-adiabatic cutting and stitching of
//! Heisenberg spin chains through a single time-dependent bond coupling
//! `g(t)`, and quasi-Newton optimization of the control shape.
//!
//! The pieces, bottom-up:
//!
//! - [`spin`]: Pauli operators, the split Hamiltonian `H0 + V`, dense spectra
//!   and ground-state selection with degeneracy handling.
//! - [`control`]: parametrized control schedules and apparatus noise.
//! - [`dynamics`]: piecewise-constant propagation, reduced density matrices,
//!   fidelities, purity and entropy.
//! - [`process`]: a cutting or stitching run bundling all of the above.
//! - [`optim`]: finite-difference BFGS and fidelity landscapes.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod optim;
pub mod process;
pub mod spin;

pub use control::{apply_noise, linear_baseline, Control, ControlSchedule, Direction, NoiseSpec, NoisySchedule, ScheduleKind};
pub use dynamics::{
    cut_fidelity, entropy, ground_fidelity, propagate, purity, reduce_density, step_unitary, DensityOperator,
    Observables, Propagator, Sampling, StateVector, TrajectoryRecord,
};
pub use error::{Error, Result};
pub use optim::{
    bfgs_maximize, finite_difference_gradient, scan_landscape, BfgsOptions, BfgsStatus, LandscapeAxis,
    LandscapeGrid, Objective, ObjectiveSpec, OptimizationReport, Target,
};
pub use process::{Outcome, Process};
pub use spin::{
    assemble_hamiltonian, commutator_frobenius_norm, ground_state, pauli_site_operator, Axis, Bond, ChainSpec,
    GroundStateSelection, OperatorMatrix, SpectralDecomposition, Topology, C64,
};
