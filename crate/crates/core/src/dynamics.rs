//! Time evolution under `H(t) = H0 + g(t)·V` and the quantities tracked
//! along it.
//!
//! The time-ordered exponential is factorized into piecewise-constant steps.
//! Smooth schedules use `n_steps` equal steps with `g` sampled at each step
//! midpoint; discontinuities of the control (pulse edges, noise windows) are
//! always step boundaries. Piecewise-constant controls are propagated with
//! exactly one factor per constant piece. Every factor is an exact spectral
//! exponential of the Hermitian generator.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::control::{Control, Direction};
use crate::error::{Error, Result};
use crate::spin::{self, OperatorMatrix, SpectralDecomposition, C64};

/// Default number of steps for smooth schedules.
pub const DEFAULT_STEPS: usize = 300;

const NORM_TOL: f64 = 1e-10;
const ENTROPY_EPS: f64 = 1e-14;
/// Upper bound on memoized decompositions, in bytes of eigenvector storage.
const MEMO_BYTES: usize = 64 << 20;

/// Normalized amplitude vector in the σᶻ product basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(DVector<C64>);

impl StateVector {
    /// Wraps `amplitudes`, which must already be normalized and have a
    /// power-of-two length.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        check_dim(amplitudes.len())?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::argument("psi", format!("state not normalized (norm {norm})")));
        }
        Ok(StateVector(amplitudes))
    }

    /// Normalizes `amplitudes`.
    pub fn normalized(amplitudes: DVector<C64>) -> Result<Self> {
        check_dim(amplitudes.len())?;
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::argument("psi", "cannot normalize a zero or non-finite vector"));
        }
        Ok(StateVector(amplitudes.unscale(norm)))
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        check_dim(dim)?;
        if index >= dim {
            return Err(Error::argument("index", format!("basis index {index} outside dimension {dim}")));
        }
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(StateVector(v))
    }

    /// Product state with the listed sites (1-based) spin-down and the rest up.
    pub fn product(n_spins: usize, down_sites: &[usize]) -> Result<Self> {
        let mut index = 0usize;
        for &s in down_sites {
            if s == 0 || s > n_spins {
                return Err(Error::argument("down_sites", format!("site {s} outside 1..={n_spins}")));
            }
            index |= 1 << (n_spins - s);
        }
        Self::basis(1 << n_spins, index)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn n_spins(&self) -> usize {
        self.0.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::argument("psi", format!("dimension {dim} is not a power of two ≥ 2")));
    }
    Ok(())
}

/// Reduced density matrix of a subsystem.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator(DMatrix<C64>);

impl DensityOperator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::argument("rho", "density matrix must be square"));
        }
        Ok(DensityOperator(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let op = OperatorMatrix::from_matrix(self.0.clone())?;
        Ok(SpectralDecomposition::of(&op)?.eigenvalues().to_vec())
    }

    /// Checks Hermiticity (1e-12), unit trace (1e-10) and positivity (−1e-10).
    pub fn validate(&self) -> Result<()> {
        let op = OperatorMatrix::from_matrix(self.0.clone())?;
        let defect = op.hermiticity_defect();
        if defect > 1e-12 {
            return Err(Error::argument("rho", format!("not Hermitian (defect {defect:e})")));
        }
        let tr = self.0.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::argument("rho", format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues()?[0];
        if min < -1e-10 {
            return Err(Error::argument("rho", format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

/// `Tr_B |ψ⟩⟨ψ|`, keeping `subsystem_sites` (1-based) in ascending site order.
pub fn reduce_density(psi: &StateVector, subsystem_sites: &[usize]) -> Result<DensityOperator> {
    let n = psi.n_spins();
    let mut kept = subsystem_sites.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.is_empty() || kept.len() >= n {
        return Err(Error::argument("subsystem_sites", "must be a nonempty proper subset of the sites"));
    }
    if let Some(&bad) = kept.iter().find(|&&s| s == 0 || s > n) {
        return Err(Error::argument("subsystem_sites", format!("site {bad} outside 1..={n}")));
    }
    let traced: Vec<usize> = (1..=n).filter(|s| !kept.contains(s)).collect();
    let (dk, dt) = (1usize << kept.len(), 1usize << traced.len());
    let gather = |sites: &[usize], i: usize| {
        sites.iter().fold(0usize, |acc, &s| (acc << 1) | ((i >> (n - s)) & 1))
    };
    let mut m = DMatrix::<C64>::zeros(dk, dt);
    for (i, amp) in psi.amplitudes().iter().enumerate() {
        m[(gather(&kept, i), gather(&traced, i))] = *amp;
    }
    Ok(DensityOperator(&m * m.adjoint()))
}

/// `√⟨φ|ρ|φ⟩`.
pub fn cut_fidelity(rho_a: &DensityOperator, phi_0a: &StateVector) -> Result<f64> {
    if rho_a.dim() != phi_0a.dim() {
        return Err(Error::DimensionMismatch { expected: rho_a.dim(), found: phi_0a.dim() });
    }
    let phi = phi_0a.amplitudes();
    let value = phi.dotc(&(rho_a.matrix() * phi)).re;
    Ok(value.max(0.0).sqrt())
}

/// `|⟨ψ₀(t)|ψ(t)⟩|` against the (degeneracy-resolved) ground state of
/// `h_instant`.
pub fn ground_fidelity(
    psi: &StateVector,
    h_instant: &OperatorMatrix,
    continuity_reference: Option<&OperatorMatrix>,
) -> Result<f64> {
    if h_instant.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: h_instant.dim(), found: psi.dim() });
    }
    let gs = spin::ground_state(h_instant, continuity_reference)?;
    Ok(gs.state.dotc(psi.amplitudes()).norm())
}

/// `Tr ρ²`.
pub fn purity(rho: &DensityOperator) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// Von Neumann entropy `−Σ λ ln λ` (natural log) over eigenvalues above 1e-14.
pub fn entropy(rho: &DensityOperator) -> Result<f64> {
    Ok(rho
        .eigenvalues()?
        .into_iter()
        .filter(|&l| l > ENTROPY_EPS)
        .map(|l| -l * l.ln())
        .sum::<f64>()
        .max(0.0))
}

/// `exp(−i(h0 + g·v)·dt)`.
pub fn step_unitary(h0: &OperatorMatrix, v: &OperatorMatrix, g_value: f64, dt: f64) -> Result<OperatorMatrix> {
    if !(dt > 0.0) {
        return Err(Error::argument("dt", format!("step must be positive, got {dt}")));
    }
    if h0.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: h0.dim(), found: v.dim() });
    }
    let mut h = h0.clone();
    h.add_scaled(v, g_value);
    Ok(SpectralDecomposition::of(&h)?.exponential(dt))
}

/// Which segment boundaries are recorded in a [`TrajectoryRecord`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Start and end only.
    Endpoints,
    /// Every `k`-th boundary, plus the end.
    Every(usize),
}

/// What the trajectory recorder measures: subsystem A, the detached ground
/// state of A, and the offset used to resolve degenerate instantaneous
/// ground states at the start and end of the process.
#[derive(Clone, Debug)]
pub struct Observables {
    pub subsystem: Vec<usize>,
    pub target_a: StateVector,
    pub direction: Direction,
    pub delta_g: f64,
}

/// Time series sampled along one propagation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub g_values: Vec<f64>,
    pub f_c: Vec<f64>,
    pub f_g: Vec<f64>,
    pub purity_a: Vec<f64>,
    pub purity_b: Vec<f64>,
    pub entropy_a: Vec<f64>,
    pub entropy_b: Vec<f64>,
    /// `E1(t) − E0(t)` of the instantaneous Hamiltonian.
    pub gap: Vec<f64>,
    /// Samples where the instantaneous ground level was degenerate.
    pub degenerate: Vec<bool>,
    /// Largest `|‖ψ‖ − 1|` seen over all steps, before final renormalization.
    pub norm_drift: f64,
}

impl TrajectoryRecord {
    pub const CSV_HEADER: &'static str = "t,g,f_c,f_g,purity_A,entropy_A,entropy_B,gap";

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                self.times[i],
                self.g_values[i],
                self.f_c[i],
                self.f_g[i],
                self.purity_a[i],
                self.entropy_a[i],
                self.entropy_b[i],
                self.gap[i]
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Step boundaries for `control`: the uniform `n_steps` grid for smooth
/// controls refined by any breakpoints, or just the breakpoints for
/// piecewise-constant ones.
pub(crate) fn step_grid(control: &(impl Control + ?Sized), n_steps: usize) -> Vec<f64> {
    let total = control.duration();
    let tol = 1e-12 * total;
    let mut grid: Vec<f64> = if control.is_piecewise_constant() {
        vec![0.0, total]
    } else {
        (0..=n_steps).map(|k| total * k as f64 / n_steps as f64).collect()
    };
    let uniform = grid.clone();
    for b in control.breakpoints() {
        if b <= tol || b >= total - tol {
            continue;
        }
        if !uniform.iter().any(|&u| (u - b).abs() <= tol) {
            grid.push(b);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= tol);
    grid
}

/// Propagates with the factors `exp(−iH(t*)Δt)` and caches the spectral
/// decomposition of `H0 + gV` per distinct `g`.
pub struct Propagator {
    h0: OperatorMatrix,
    v: OperatorMatrix,
    memo: Option<Mutex<HashMap<u64, Arc<SpectralDecomposition>>>>,
    memo_capacity: usize,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("dim", &self.h0.dim())
            .field("memoized", &self.memo.is_some())
            .finish()
    }
}

impl Clone for Propagator {
    fn clone(&self) -> Self {
        Propagator {
            h0: self.h0.clone(),
            v: self.v.clone(),
            memo: self.memo.as_ref().map(|_| Mutex::new(HashMap::new())),
            memo_capacity: self.memo_capacity,
        }
    }
}

impl Propagator {
    pub fn new(h0: OperatorMatrix, v: OperatorMatrix) -> Result<Self> {
        if h0.dim() != v.dim() {
            return Err(Error::DimensionMismatch { expected: h0.dim(), found: v.dim() });
        }
        if !h0.is_hermitian() || !v.is_hermitian() {
            return Err(Error::argument("h0/v", "generator terms must be Hermitian"));
        }
        let entry = h0.dim() * h0.dim() * std::mem::size_of::<C64>();
        let memo_capacity = (MEMO_BYTES / entry.max(1)).max(16);
        Ok(Propagator { h0, v, memo: Some(Mutex::new(HashMap::new())), memo_capacity })
    }

    /// Same propagator without the decomposition cache.
    pub fn without_memo(mut self) -> Self {
        self.memo = None;
        self
    }

    pub fn h0(&self) -> &OperatorMatrix {
        &self.h0
    }

    pub fn v(&self) -> &OperatorMatrix {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    /// `H0 + g·V`.
    pub fn hamiltonian(&self, g: f64) -> OperatorMatrix {
        let mut h = self.h0.clone();
        h.add_scaled(&self.v, g);
        h
    }

    pub fn decomposition(&self, g: f64) -> Result<Arc<SpectralDecomposition>> {
        let Some(memo) = &self.memo else {
            return Ok(Arc::new(SpectralDecomposition::decompose(&self.hamiltonian(g))));
        };
        let key = g.to_bits();
        if let Some(hit) = memo.lock().expect("memo poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let fresh = Arc::new(SpectralDecomposition::decompose(&self.hamiltonian(g)));
        let mut map = memo.lock().expect("memo poisoned");
        if map.len() >= self.memo_capacity {
            map.clear();
        }
        map.insert(key, Arc::clone(&fresh));
        Ok(fresh)
    }

    pub fn step_unitary(&self, g: f64, dt: f64) -> Result<OperatorMatrix> {
        if !(dt > 0.0) {
            return Err(Error::argument("dt", format!("step must be positive, got {dt}")));
        }
        Ok(self.decomposition(g)?.exponential(dt))
    }

    fn check_inputs(&self, control: &(impl Control + ?Sized), psi0: &StateVector, n_steps: usize) -> Result<()> {
        if !(control.duration() > 0.0) {
            return Err(Error::argument("T", "schedule duration must be positive"));
        }
        if n_steps == 0 {
            return Err(Error::argument("n_steps", "need at least one step"));
        }
        if psi0.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: psi0.dim() });
        }
        Ok(())
    }

    /// Final state only.
    pub fn evolve(&self, control: &(impl Control + ?Sized), psi0: &StateVector, n_steps: usize) -> Result<StateVector> {
        self.check_inputs(control, psi0, n_steps)?;
        let grid = step_grid(control, n_steps);
        let mut psi = psi0.amplitudes().clone();
        for w in grid.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let g = control.value(0.5 * (t0 + t1));
            psi = self.decomposition(g)?.evolve(&psi, t1 - t0);
        }
        StateVector::normalized(psi)
    }

    /// Propagates and samples the observables at step boundaries.
    pub fn propagate(
        &self,
        control: &(impl Control + ?Sized),
        psi0: &StateVector,
        n_steps: usize,
        sampling: Sampling,
        observables: &Observables,
    ) -> Result<(StateVector, TrajectoryRecord)> {
        self.check_inputs(control, psi0, n_steps)?;
        let n = psi0.n_spins();
        let complement: Vec<usize> = (1..=n).filter(|s| !observables.subsystem.contains(s)).collect();
        let grid = step_grid(control, n_steps);
        let last = grid.len() - 1;
        let every = match sampling {
            Sampling::Endpoints => last,
            Sampling::Every(k) => k.max(1),
        };

        let mut record = TrajectoryRecord::default();
        let mut previous_ground: Option<DVector<C64>> = None;
        let mut psi = psi0.amplitudes().clone();
        for (k, &t) in grid.iter().enumerate() {
            if k > 0 {
                let t0 = grid[k - 1];
                let g = control.value(0.5 * (t0 + t));
                psi = self.decomposition(g)?.evolve(&psi, t - t0);
                record.norm_drift = record.norm_drift.max((psi.norm() - 1.0).abs());
            }
            if k % every != 0 && k != last {
                continue;
            }
            let state = StateVector(psi.clone());
            let g = control.value(t);
            let spectrum = self.decomposition(g)?;
            let degenerate = spectrum.ground_multiplicity() > 1;
            let ground = if !degenerate {
                spectrum.eigenvector(0)
            } else {
                // Endpoints follow the process rule (approach from inside the
                // process); interior samples follow the previous ground state.
                let reference = match (&previous_ground, k == last) {
                    (Some(prev), false) => prev.clone(),
                    _ => {
                        let sign = control.direction().sign();
                        let offset = if k == 0 { sign } else { -sign } * observables.delta_g;
                        spin::ground_state(&self.hamiltonian(g + offset), None)?.state
                    }
                };
                spin::resolve_in_ground_subspace(&spectrum, &reference).ok_or(Error::UnresolvableDegeneracy {
                    multiplicity: spectrum.ground_multiplicity(),
                    reference_gap: 0.0,
                })?
            };
            let rho_a = reduce_density(&state, &observables.subsystem)?;
            let rho_b = reduce_density(&state, &complement)?;
            record.times.push(t);
            record.g_values.push(g);
            record.f_c.push(cut_fidelity(&rho_a, &observables.target_a)?);
            record.f_g.push(ground.dotc(&psi).norm());
            record.purity_a.push(purity(&rho_a));
            record.purity_b.push(purity(&rho_b));
            record.entropy_a.push(entropy(&rho_a)?);
            record.entropy_b.push(entropy(&rho_b)?);
            record.gap.push(spectrum.gap());
            record.degenerate.push(degenerate);
            previous_ground = Some(ground);
        }
        Ok((StateVector::normalized(psi)?, record))
    }
}

/// One-shot propagation with a fresh [`Propagator`].
pub fn propagate(
    h0: &OperatorMatrix,
    v: &OperatorMatrix,
    control: &(impl Control + ?Sized),
    psi0: &StateVector,
    n_steps: usize,
    sampling: Sampling,
    observables: &Observables,
) -> Result<(StateVector, TrajectoryRecord)> {
    Propagator::new(h0.clone(), v.clone())?.propagate(control, psi0, n_steps, sampling, observables)
}
