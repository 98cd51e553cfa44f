//! Spin-1/2 operators, the split Heisenberg Hamiltonian `H = H0 + V`, and
//! dense spectral data.
//!
//! Basis convention: the computational σᶻ product basis with site 1 stored in
//! the most significant bit of the basis index and `|↑⟩ ↦ 0`. For two spins
//! the order is `|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩`.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const DEFAULT_SPIN_CAP: usize = 12;

/// Relative gap (in units of the spectral range) below which the two lowest
/// levels count as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-9;

/// Offset used to lift a degenerate ground subspace by perturbing the
/// coupling strength.
pub const DEFAULT_DELTA_G: f64 = 1e-6;

const HERMITIAN_TOL: f64 = 1e-12;
const REAL_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Open,
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// An exchange bond between two sites (1-based). Stored with the smaller
/// site first so `(1, N)` and `(N, 1)` compare equal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Bond {
    lo: usize,
    hi: usize,
}

impl Bond {
    pub fn new(a: usize, b: usize) -> Self {
        Bond { lo: a.min(b), hi: a.max(b) }
    }

    pub fn sites(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }
}

impl From<[usize; 2]> for Bond {
    fn from(v: [usize; 2]) -> Self {
        Bond::new(v[0], v[1])
    }
}

impl From<Bond> for [usize; 2] {
    fn from(b: Bond) -> Self {
        [b.lo, b.hi]
    }
}

impl fmt::Display for Bond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.lo, self.hi)
    }
}

fn default_exchange() -> f64 {
    1.0
}

fn default_spin_cap() -> usize {
    DEFAULT_SPIN_CAP
}

/// Geometry and couplings of a Heisenberg chain in a uniform field, together
/// with the set of bonds whose exchange terms form the switched interaction V.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_spins: usize,
    pub topology: Topology,
    #[serde(default = "default_exchange")]
    pub exchange: f64,
    #[serde(default)]
    pub field: f64,
    pub cut_bonds: Vec<Bond>,
    #[serde(default = "default_spin_cap")]
    pub spin_cap: usize,
}

impl ChainSpec {
    /// Chain whose first spin is detached: bond (1,2) for an open chain,
    /// bonds (1,2) and (1,N) for a ring.
    pub fn single_spin_cut(n_spins: usize, topology: Topology, exchange: f64, field: f64) -> Self {
        let mut cut_bonds = vec![Bond::new(1, 2)];
        if topology == Topology::Ring {
            cut_bonds.push(Bond::new(1, n_spins));
        }
        ChainSpec { n_spins, topology, exchange, field, cut_bonds, spin_cap: DEFAULT_SPIN_CAP }
    }

    pub fn with_cut_bonds(mut self, bonds: impl IntoIterator<Item = Bond>) -> Self {
        self.cut_bonds = bonds.into_iter().collect();
        self
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    /// All exchange bonds of the declared topology.
    pub fn bonds(&self) -> Vec<Bond> {
        let n = self.n_spins;
        let mut bonds: Vec<Bond> = (1..n).map(|i| Bond::new(i, i + 1)).collect();
        if self.topology == Topology::Ring && n > 2 {
            bonds.push(Bond::new(n, 1));
        }
        bonds
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 2 {
            return Err(Error::argument("n_spins", format!("need at least 2 spins, got {}", self.n_spins)));
        }
        if self.n_spins > self.spin_cap {
            return Err(Error::argument(
                "n_spins",
                format!("{} spins exceeds the cap of {}", self.n_spins, self.spin_cap),
            ));
        }
        if self.topology == Topology::Ring && self.n_spins < 3 {
            return Err(Error::argument("topology", "a ring needs at least 3 spins"));
        }
        if !self.exchange.is_finite() {
            return Err(Error::argument("exchange", "must be finite"));
        }
        if !self.field.is_finite() {
            return Err(Error::argument("field", "must be finite"));
        }
        if self.cut_bonds.is_empty() {
            return Err(Error::argument("cut_bonds", "at least one bond must be cut"));
        }
        let bonds: BTreeSet<Bond> = self.bonds().into_iter().collect();
        let mut seen = BTreeSet::new();
        for b in &self.cut_bonds {
            if !bonds.contains(b) {
                return Err(Error::argument(
                    "cut_bonds",
                    format!("bond {b} does not join adjacent sites of a {:?} chain of {}", self.topology, self.n_spins),
                ));
            }
            if !seen.insert(*b) {
                return Err(Error::argument("cut_bonds", format!("bond {b} listed twice")));
            }
        }
        Ok(())
    }

    fn is_cut(&self, bond: &Bond) -> bool {
        self.cut_bonds.contains(bond)
    }

    /// Sites connected to site 1 once the cut bonds are removed (subsystem A),
    /// in ascending order.
    pub fn subsystem_a(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let kept: Vec<Bond> = self.bonds().into_iter().filter(|b| !self.is_cut(b)).collect();
        let mut component = BTreeSet::from([1usize]);
        loop {
            let before = component.len();
            for b in &kept {
                let (x, y) = b.sites();
                if component.contains(&x) || component.contains(&y) {
                    component.insert(x);
                    component.insert(y);
                }
            }
            if component.len() == before {
                break;
            }
        }
        if component.len() == self.n_spins {
            return Err(Error::argument("cut_bonds", "cut bonds do not detach any subsystem from site 1"));
        }
        Ok(component.into_iter().collect())
    }

    /// Hamiltonian of the detached block on `sites`: the uncut exchange bonds
    /// internal to the block plus the Zeeman term on its sites. Sites are
    /// relabelled in ascending order.
    pub fn block_hamiltonian(&self, sites: &[usize]) -> Result<OperatorMatrix> {
        let mut sorted = sites.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() || sorted.iter().any(|&s| s == 0 || s > self.n_spins) {
            return Err(Error::argument("sites", "block sites must be a nonempty subset of the chain"));
        }
        let local = |s: usize| sorted.iter().position(|&x| x == s).map(|p| p + 1);
        let n = sorted.len();
        let mut h = OperatorMatrix::zeros(1 << n);
        for b in self.bonds() {
            if self.is_cut(&b) {
                continue;
            }
            let (x, y) = b.sites();
            if let (Some(lx), Some(ly)) = (local(x), local(y)) {
                h.add_scaled(&exchange_operator(lx, ly, n), self.exchange);
            }
        }
        h.add_scaled(&magnetization(n), self.field);
        Ok(h)
    }
}

/// Dense complex matrix over the spin Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(DMatrix<C64>);

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        OperatorMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::argument("matrix", format!("not square: {}x{}", m.nrows(), m.ncols())));
        }
        Ok(OperatorMatrix(m))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        OperatorMatrix(DMatrix::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { C64::new(0.0, 0.0) }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry of `|A − A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= HERMITIAN_TOL * self.max_abs().max(1.0)
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &OperatorMatrix, scale: f64) {
        self.0.zip_apply(&other.0, |a, b| *a += b * scale);
    }

    pub fn scaled(&self, scale: f64) -> Self {
        OperatorMatrix(self.0.map(|z| z * scale))
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.0 * v
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 * &rhs.0)
    }
}

#[inline]
fn site_bit(index: usize, site: usize, n_spins: usize) -> usize {
    (index >> (n_spins - site)) & 1
}

/// `I ⊗ … ⊗ σ_axis ⊗ … ⊗ I` with the Pauli matrix at `site` (1-based).
pub fn pauli_site_operator(site: usize, axis: Axis, n_spins: usize) -> Result<OperatorMatrix> {
    if n_spins == 0 || n_spins > 30 {
        return Err(Error::argument("n_spins", format!("unsupported spin count {n_spins}")));
    }
    if site == 0 || site > n_spins {
        return Err(Error::argument("site", format!("site {site} outside 1..={n_spins}")));
    }
    let dim = 1usize << n_spins;
    let mask = 1usize << (n_spins - site);
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let bit = site_bit(col, site, n_spins);
        match axis {
            Axis::Z => m[(col, col)] = C64::new(if bit == 0 { 1.0 } else { -1.0 }, 0.0),
            Axis::X => m[(col ^ mask, col)] = C64::new(1.0, 0.0),
            // σʸ|↑⟩ = i|↓⟩, σʸ|↓⟩ = −i|↑⟩
            Axis::Y => m[(col ^ mask, col)] = C64::new(0.0, if bit == 0 { 1.0 } else { -1.0 }),
        }
    }
    Ok(OperatorMatrix(m))
}

/// `σ_a · σ_b` built directly: diagonal ±1 from σᶻσᶻ and a flip-flop
/// amplitude of 2 between anti-aligned configurations.
fn exchange_operator(a: usize, b: usize, n_spins: usize) -> OperatorMatrix {
    let dim = 1usize << n_spins;
    let flip = (1usize << (n_spins - a)) | (1usize << (n_spins - b));
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        if site_bit(col, a, n_spins) == site_bit(col, b, n_spins) {
            m[(col, col)] = C64::new(1.0, 0.0);
        } else {
            m[(col, col)] = C64::new(-1.0, 0.0);
            m[(col ^ flip, col)] = C64::new(2.0, 0.0);
        }
    }
    OperatorMatrix(m)
}

/// Total magnetization `Σ σᶻ_n`.
pub fn magnetization(n_spins: usize) -> OperatorMatrix {
    let diag: Vec<f64> = (0..1usize << n_spins)
        .map(|i| n_spins as f64 - 2.0 * i.count_ones() as f64)
        .collect();
    OperatorMatrix::from_real_diagonal(&diag)
}

/// Splits the chain Hamiltonian into `H0` (uncut exchange bonds plus the full
/// Zeeman term) and `V` (exchange over the cut bonds).
pub fn assemble_hamiltonian(spec: &ChainSpec) -> Result<(OperatorMatrix, OperatorMatrix)> {
    spec.validate()?;
    let n = spec.n_spins;
    let mut h0 = magnetization(n).scaled(spec.field);
    let mut v = OperatorMatrix::zeros(spec.dim());
    for bond in spec.bonds() {
        let (a, b) = bond.sites();
        let term = exchange_operator(a, b, n);
        if spec.is_cut(&bond) {
            v.add_scaled(&term, spec.exchange);
        } else {
            h0.add_scaled(&term, spec.exchange);
        }
    }
    Ok((h0, v))
}

/// `‖ab − ba‖_F`.
pub fn commutator_frobenius_norm(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok((&(a * b) - &(b * a)).frobenius_norm())
}

/// Eigenvalues in ascending order with orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<C64>,
}

impl SpectralDecomposition {
    /// Dense Hermitian eigendecomposition. Real symmetric input (the usual
    /// case for Heisenberg + Zeeman terms) goes through the cheaper real solver.
    pub fn of(h: &OperatorMatrix) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::argument("h", format!("not Hermitian (defect {:e})", h.hermiticity_defect())));
        }
        Ok(Self::decompose(h))
    }

    /// [`SpectralDecomposition::of`] without the Hermiticity check, for
    /// generators that are Hermitian by construction.
    pub(crate) fn decompose(h: &OperatorMatrix) -> Self {
        let n = h.dim();
        let (values, vectors): (Vec<f64>, DMatrix<C64>) = if h.max_imag() <= REAL_TOL {
            let re = DMatrix::from_fn(n, n, |i, j| 0.5 * (h.0[(i, j)].re + h.0[(j, i)].re));
            let eig = SymmetricEigen::new(re);
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(|x| C64::new(x, 0.0)))
        } else {
            let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (h.0[(i, j)] + h.0[(j, i)].conj()));
            let eig = SymmetricEigen::new(sym);
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let eigenvalues = order.iter().map(|&k| values[k]).collect();
        let eigenvectors = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
        SpectralDecomposition { eigenvalues, eigenvectors }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, k: usize) -> DVector<C64> {
        self.eigenvectors.column(k).into_owned()
    }

    pub fn spectral_range(&self) -> f64 {
        self.eigenvalues[self.dim() - 1] - self.eigenvalues[0]
    }

    /// `E1 − E0`; zero for a one-dimensional space.
    pub fn gap(&self) -> f64 {
        if self.dim() < 2 {
            0.0
        } else {
            self.eigenvalues[1] - self.eigenvalues[0]
        }
    }

    /// Number of levels within the degeneracy tolerance of the lowest one.
    pub fn ground_multiplicity(&self) -> usize {
        let tol = DEGENERACY_RTOL * self.spectral_range();
        let e0 = self.eigenvalues[0];
        self.eigenvalues.iter().take_while(|&&e| e - e0 <= tol).count()
    }

    /// `Q Λ Q†`.
    pub fn reconstruct(&self) -> OperatorMatrix {
        let q = &self.eigenvectors;
        let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * self.eigenvalues[j]);
        OperatorMatrix(scaled * q.adjoint())
    }

    /// `Q f(Λ) Q†` for the phase function `exp(−iλ dt)`.
    pub fn exponential(&self, dt: f64) -> OperatorMatrix {
        let q = &self.eigenvectors;
        let phased = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * C64::from_polar(1.0, -self.eigenvalues[j] * dt));
        OperatorMatrix(phased * q.adjoint())
    }

    /// `exp(−iH dt) ψ` without forming the full unitary.
    pub fn evolve(&self, psi: &DVector<C64>, dt: f64) -> DVector<C64> {
        let mut coeffs = self.eigenvectors.ad_mul(psi);
        for (c, &e) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= C64::from_polar(1.0, -e * dt);
        }
        &self.eigenvectors * coeffs
    }

    /// Orthogonal projection of `reference` onto the ground subspace.
    pub fn project_ground(&self, reference: &DVector<C64>) -> DVector<C64> {
        let m = self.ground_multiplicity();
        let q = self.eigenvectors.columns(0, m);
        &q * q.ad_mul(reference)
    }
}

/// Lowest eigenpair of a Hamiltonian, with the degeneracy resolution applied.
#[derive(Clone, Debug)]
pub struct GroundStateSelection {
    pub energy: f64,
    pub state: DVector<C64>,
    pub degenerate: bool,
    pub multiplicity: usize,
    /// Coupling offset of the reference Hamiltonian used to break a
    /// degeneracy; zero when no reference was consulted.
    pub selection_offset: f64,
}

/// Ground state of `h`. When the lowest level is degenerate and a
/// `continuity_reference` Hamiltonian is supplied, the returned vector is the
/// projection of the reference's (unique) ground state onto the degenerate
/// subspace. Without a reference a degenerate ground state is returned as the
/// first basis vector of the subspace and flagged.
pub fn ground_state(h: &OperatorMatrix, continuity_reference: Option<&OperatorMatrix>) -> Result<GroundStateSelection> {
    let spectrum = SpectralDecomposition::of(h)?;
    select_ground(&spectrum, continuity_reference)
}

pub(crate) fn select_ground(
    spectrum: &SpectralDecomposition,
    continuity_reference: Option<&OperatorMatrix>,
) -> Result<GroundStateSelection> {
    let multiplicity = spectrum.ground_multiplicity();
    let energy = spectrum.eigenvalues()[0];
    if multiplicity == 1 {
        return Ok(GroundStateSelection {
            energy,
            state: spectrum.eigenvector(0),
            degenerate: false,
            multiplicity,
            selection_offset: 0.0,
        });
    }
    let Some(reference) = continuity_reference else {
        return Ok(GroundStateSelection {
            energy,
            state: spectrum.eigenvector(0),
            degenerate: true,
            multiplicity,
            selection_offset: 0.0,
        });
    };
    if reference.dim() != spectrum.dim() {
        return Err(Error::DimensionMismatch { expected: spectrum.dim(), found: reference.dim() });
    }
    let ref_spectrum = SpectralDecomposition::of(reference)?;
    if ref_spectrum.ground_multiplicity() > 1 {
        return Err(Error::UnresolvableDegeneracy { multiplicity, reference_gap: ref_spectrum.gap() });
    }
    let state = resolve_in_ground_subspace(spectrum, &ref_spectrum.eigenvector(0))
        .ok_or(Error::UnresolvableDegeneracy { multiplicity, reference_gap: ref_spectrum.gap() })?;
    Ok(GroundStateSelection { energy, state, degenerate: true, multiplicity, selection_offset: 0.0 })
}

/// Normalized projection of `reference` onto the ground subspace, or `None`
/// if the reference is (numerically) orthogonal to it.
pub(crate) fn resolve_in_ground_subspace(spectrum: &SpectralDecomposition, reference: &DVector<C64>) -> Option<DVector<C64>> {
    let projected = spectrum.project_ground(reference);
    let norm = projected.norm();
    (norm > 1e-8).then(|| projected.unscale(norm))
}

/// Ground state of `h0 + g·v`, resolving degeneracy against
/// `h0 + (g + delta_g)·v`.
pub fn ground_state_at_coupling(h0: &OperatorMatrix, v: &OperatorMatrix, g: f64, delta_g: f64) -> Result<GroundStateSelection> {
    if h0.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: h0.dim(), found: v.dim() });
    }
    let mut h = h0.clone();
    h.add_scaled(v, g);
    let mut reference = h0.clone();
    reference.add_scaled(v, g + delta_g);
    let mut selection = ground_state(&h, Some(&reference))?;
    if selection.degenerate {
        selection.selection_offset = delta_g;
    }
    Ok(selection)
}
