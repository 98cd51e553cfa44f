//! A cutting or stitching run: the split Hamiltonian, the degeneracy-resolved
//! initial and final ground states, and the detached subsystem's target state.

use crate::control::{Control, Direction};
use crate::dynamics::{cut_fidelity, reduce_density, Observables, Propagator, Sampling, StateVector, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::spin::{assemble_hamiltonian, ground_state, ground_state_at_coupling, ChainSpec, GroundStateSelection, OperatorMatrix, DEFAULT_DELTA_G};

/// Final-time fidelities of one run.
#[derive(Clone, Debug)]
pub struct Outcome {
    /// `f_C = √⟨φ₀A|ρ_A(T)|φ₀A⟩`.
    pub f_c: f64,
    /// `f_G = |⟨ψ₀(T)|ψ(T)⟩|`.
    pub f_g: f64,
    pub state: StateVector,
}

#[derive(Clone, Debug)]
pub struct Process {
    direction: Direction,
    propagator: Propagator,
    subsystem: Vec<usize>,
    target_a: StateVector,
    initial: GroundStateSelection,
    target: GroundStateSelection,
    delta_g: f64,
}

impl Process {
    pub fn new(chain: &ChainSpec, direction: Direction) -> Result<Self> {
        Self::with_delta_g(chain, direction, DEFAULT_DELTA_G)
    }

    /// `delta_g` is the magnitude of the coupling offset used to lift
    /// degenerate ground states; its sign follows the process direction.
    pub fn with_delta_g(chain: &ChainSpec, direction: Direction, delta_g: f64) -> Result<Self> {
        let (h0, v) = assemble_hamiltonian(chain)?;
        let subsystem = chain.subsystem_a()?;
        let block = chain.block_hamiltonian(&subsystem)?;
        let target_a = StateVector::new(ground_state(&block, None)?.state)?;
        Self::from_parts(h0, v, subsystem, target_a, direction, delta_g)
    }

    /// A process over an arbitrary split `h0 + g·v`.
    pub fn from_parts(
        h0: OperatorMatrix,
        v: OperatorMatrix,
        subsystem: Vec<usize>,
        target_a: StateVector,
        direction: Direction,
        delta_g: f64,
    ) -> Result<Self> {
        if !(delta_g > 0.0) {
            return Err(Error::argument("delta_g", "selection offset must be positive"));
        }
        if target_a.dim() != 1 << subsystem.len() {
            return Err(Error::DimensionMismatch { expected: 1 << subsystem.len(), found: target_a.dim() });
        }
        let start = direction.initial_coupling();
        let end = direction.final_coupling();
        // Degenerate levels are resolved by approaching each endpoint from
        // inside the process interval.
        let initial = ground_state_at_coupling(&h0, &v, start, direction.sign() * delta_g)?;
        let target = ground_state_at_coupling(&h0, &v, end, -direction.sign() * delta_g)?;
        let propagator = Propagator::new(h0, v)?;
        Ok(Process { direction, propagator, subsystem, target_a, initial, target, delta_g })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn subsystem(&self) -> &[usize] {
        &self.subsystem
    }

    pub fn target_a(&self) -> &StateVector {
        &self.target_a
    }

    pub fn initial_ground(&self) -> &GroundStateSelection {
        &self.initial
    }

    pub fn final_ground(&self) -> &GroundStateSelection {
        &self.target
    }

    pub fn initial_state(&self) -> StateVector {
        StateVector::new(self.initial.state.clone()).expect("eigenvectors are normalized")
    }

    pub fn observables(&self) -> Observables {
        Observables {
            subsystem: self.subsystem.clone(),
            target_a: self.target_a.clone(),
            direction: self.direction,
            delta_g: self.delta_g,
        }
    }

    fn check_direction(&self, control: &(impl Control + ?Sized)) -> Result<()> {
        if control.direction() != self.direction {
            return Err(Error::argument(
                "direction",
                format!("schedule drives a {:?} but the process is a {:?}", control.direction(), self.direction),
            ));
        }
        Ok(())
    }

    fn outcome(&self, state: StateVector) -> Result<Outcome> {
        let rho_a = reduce_density(&state, &self.subsystem)?;
        let f_c = cut_fidelity(&rho_a, &self.target_a)?;
        let f_g = self.target.state.dotc(state.amplitudes()).norm();
        Ok(Outcome { f_c, f_g, state })
    }

    pub fn run(&self, control: &(impl Control + ?Sized), n_steps: usize) -> Result<Outcome> {
        self.check_direction(control)?;
        let state = self.propagator.evolve(control, &self.initial_state(), n_steps)?;
        self.outcome(state)
    }

    pub fn trajectory(
        &self,
        control: &(impl Control + ?Sized),
        n_steps: usize,
        sampling: Sampling,
    ) -> Result<(Outcome, TrajectoryRecord)> {
        self.check_direction(control)?;
        let (state, record) =
            self.propagator.propagate(control, &self.initial_state(), n_steps, sampling, &self.observables())?;
        Ok((self.outcome(state)?, record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{linear_baseline, ControlSchedule};
    use crate::spin::{Bond, Topology};

    #[test]
    fn direction_mismatch_rejected() {
        let chain = ChainSpec::single_spin_cut(3, Topology::Open, 1.0, 1.0);
        let p = Process::new(&chain, Direction::Cut).unwrap();
        let stitch = linear_baseline(1.0, Direction::Stitch).unwrap();
        assert!(matches!(p.run(&stitch, 10), Err(Error::Argument { field: "direction", .. })));
    }

    #[test]
    fn single_spin_target_is_spin_down() {
        let chain = ChainSpec::single_spin_cut(4, Topology::Ring, 1.0, 2.0);
        let p = Process::new(&chain, Direction::Cut).unwrap();
        assert_eq!(p.subsystem(), &[1]);
        assert!((p.target_a().amplitudes()[1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ferromagnet_sudden_cut_is_perfect() {
        let chain = ChainSpec::single_spin_cut(5, Topology::Open, -1.0, 2.0);
        let p = Process::new(&chain, Direction::Cut).unwrap();
        let sudden = ControlSchedule::pulse(1e-3, &[0.0], Direction::Cut).unwrap();
        let out = p.run(&sudden, 1).unwrap();
        assert!((out.f_c - 1.0).abs() < 1e-8);
    }

    #[test]
    fn two_spin_block_process() {
        let chain = ChainSpec::single_spin_cut(5, Topology::Open, 1.0, 2.1).with_cut_bonds([Bond::new(2, 3)]);
        let p = Process::new(&chain, Direction::Cut).unwrap();
        assert_eq!(p.subsystem(), &[1, 2]);
        let out = p.run(&linear_baseline(0.6, Direction::Cut).unwrap(), 300).unwrap();
        assert!(out.f_c > 0.0 && out.f_c < 1.0);
    }
}
