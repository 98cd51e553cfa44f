//! Cross-module physical invariants, checked against oracles built from
//! scratch here rather than through the library's own operator code.

use nalgebra::DMatrix;
use spincut_core::spin::magnetization;
use spincut_core::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// σ^axis on `site` as an explicit Kronecker product, site 1 leftmost.
fn pauli_kron(site: usize, axis: usize, n: usize) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let sigma = match axis {
        0 => DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        1 => DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        _ => DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    };
    let mut m = DMatrix::<C64>::identity(1, 1);
    for s in 1..=n {
        m = kron(&m, if s == site { &sigma } else { &id });
    }
    m
}

fn heisenberg_kron(n: usize, ring: bool, j: f64, b: f64) -> DMatrix<C64> {
    let dim = 1 << n;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let mut bonds: Vec<(usize, usize)> = (1..n).map(|i| (i, i + 1)).collect();
    if ring {
        bonds.push((n, 1));
    }
    for (x, y) in bonds {
        for axis in 0..3 {
            h += pauli_kron(x, axis, n) * pauli_kron(y, axis, n) * c(j, 0.);
        }
    }
    for s in 1..=n {
        h += pauli_kron(s, 2, n) * c(b, 0.);
    }
    h
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
}

#[test]
fn split_hamiltonian_matches_kronecker_construction() {
    for n in 2..=4 {
        for topology in [Topology::Open, Topology::Ring] {
            if topology == Topology::Ring && n < 3 {
                continue;
            }
            for (j, b) in [(1.0, 2.0), (-0.7, 0.3), (1.3, -1.1)] {
                let chain = ChainSpec::single_spin_cut(n, topology, j, b);
                let (h0, v) = assemble_hamiltonian(&chain).unwrap();
                let full = h0.matrix() + v.matrix();
                let oracle = heisenberg_kron(n, topology == Topology::Ring, j, b);
                assert!(max_diff(&full, &oracle) < 1e-14, "N={n} {topology:?}");
                assert!(full.iter().all(|z| z.im.abs() < 1e-15), "H should be real");
                assert!(max_diff(&full, &full.transpose()) < 1e-14);
            }
        }
    }
}

#[test]
fn magnetization_is_conserved_by_every_part() {
    for topology in [Topology::Open, Topology::Ring] {
        let chain = ChainSpec::single_spin_cut(5, topology, 1.0, 2.0);
        let (h0, v) = assemble_hamiltonian(&chain).unwrap();
        let m = magnetization(5);
        let h = &h0 + &v;
        for op in [&h0, &v, &h] {
            assert!(commutator_frobenius_norm(op, &m).unwrap() < 1e-12);
        }
    }
}

#[test]
fn ferromagnet_ground_state_is_all_down() {
    let chain = ChainSpec::single_spin_cut(5, Topology::Ring, -1.0, 2.0);
    let (h0, v) = assemble_hamiltonian(&chain).unwrap();
    let gs = ground_state(&(&h0 + &v), None).unwrap();
    assert!(!gs.degenerate);
    assert!((gs.state[31].norm() - 1.0).abs() < 1e-12);
    // −5 from the exchange, −2·5 from the field
    assert!((gs.energy + 15.0).abs() < 1e-12);
}

#[test]
fn cut_fidelity_bounds_ground_fidelity() {
    let cases = [
        (ChainSpec::single_spin_cut(6, Topology::Ring, 1.0, 2.0), vec![0.3, 0.6, 2.0]),
        (ChainSpec::single_spin_cut(5, Topology::Open, 1.0, 1.0), vec![0.2, 1.0]),
        (ChainSpec::single_spin_cut(5, Topology::Open, 1.0, 2.1).with_cut_bonds([Bond::new(2, 3)]), vec![0.6]),
    ];
    for (chain, durations) in cases {
        let process = Process::new(&chain, Direction::Cut).unwrap();
        for t in durations {
            for params in [vec![], vec![10.0, -7.0]] {
                let s = ControlSchedule::polynomial_cut(t, &params).unwrap();
                let out = process.run(&s, 300).unwrap();
                assert!(out.f_c >= out.f_g - 1e-8, "T={t}: f_C={} f_G={}", out.f_c, out.f_g);
            }
        }
    }
}

/// With `[h0, v] = 0` the final fidelities cannot depend on the shape of g(t):
/// `h0 = B Σσᶻ`, `v = J σ₁ᶻσ₂ᶻ`.
#[test]
fn commuting_split_is_schedule_independent() {
    let n = 3;
    let mut h0 = OperatorMatrix::zeros(8);
    for s in 1..=n {
        h0.add_scaled(&pauli_site_operator(s, Axis::Z, n).unwrap(), 2.0);
    }
    let v = &pauli_site_operator(1, Axis::Z, n).unwrap() * &pauli_site_operator(2, Axis::Z, n).unwrap();
    assert!(commutator_frobenius_norm(&h0, &v).unwrap() < 1e-14);
    let target = StateVector::product(1, &[1]).unwrap();
    let process = Process::from_parts(h0, v, vec![1], target, Direction::Cut, 1e-6).unwrap();
    let schedules = [
        linear_baseline(0.7, Direction::Cut).unwrap(),
        ControlSchedule::polynomial_cut(0.7, &[40.0, -25.0]).unwrap(),
        ControlSchedule::sine_cut(0.7, &[0.9, -0.4]).unwrap(),
        ControlSchedule::pulse(0.7, &[3.0, -2.0, 0.5], Direction::Cut).unwrap(),
    ];
    let reference = process.run(&schedules[0], 300).unwrap();
    for s in &schedules[1..] {
        let out = process.run(s, 300).unwrap();
        assert!((out.f_c - reference.f_c).abs() < 1e-8);
        assert!((out.f_g - reference.f_g).abs() < 1e-8);
    }
}

#[test]
fn step_unitaries_are_unitary() {
    let chain = ChainSpec::single_spin_cut(5, Topology::Ring, 1.0, 2.0);
    let (h0, v) = assemble_hamiltonian(&chain).unwrap();
    for (g, dt) in [(1.0, 0.002), (0.37, 0.05), (-40.0, 0.01), (122.0, 0.3)] {
        let u = step_unitary(&h0, &v, g, dt).unwrap();
        let defect = u.adjoint().matrix() * u.matrix() - DMatrix::<C64>::identity(32, 32);
        assert!(defect.iter().all(|z| z.norm() < 1e-10), "g={g} dt={dt}");
    }
}

#[test]
fn complementary_subsystems_mirror_along_trajectories() {
    for chain in [
        ChainSpec::single_spin_cut(6, Topology::Ring, 1.0, 2.0),
        ChainSpec::single_spin_cut(5, Topology::Open, 1.0, 2.1).with_cut_bonds([Bond::new(2, 3)]),
    ] {
        let process = Process::new(&chain, Direction::Cut).unwrap();
        let s = ControlSchedule::polynomial_cut(0.6, &[54.3, -36.3]).unwrap();
        let (_, rec) = process.trajectory(&s, 300, Sampling::Every(10)).unwrap();
        assert!(rec.len() > 20);
        for k in 0..rec.len() {
            assert!((rec.purity_a[k] - rec.purity_b[k]).abs() < 1e-8);
            assert!((rec.entropy_a[k] - rec.entropy_b[k]).abs() < 1e-8);
        }
        assert!(rec.norm_drift < 1e-10);
    }
}

/// In the sudden limit no schedule can do better than the linear one.
#[test]
fn very_short_processes_merge() {
    let chain = ChainSpec::single_spin_cut(6, Topology::Ring, 1.0, 2.0);
    let objective = Objective::new(ObjectiveSpec::polynomial_cut(chain, 0.01, 2)).unwrap();
    let f = |x: &[f64]| objective.evaluate(x);
    let report = bfgs_maximize(&f, &[0.0, 0.0], &BfgsOptions::default()).unwrap();
    assert!(report.final_value >= report.initial_value - 1e-12);
    assert!(report.final_value - report.initial_value < 0.01);
}

#[test]
fn slow_cut_is_adiabatic() {
    let chain = ChainSpec::single_spin_cut(6, Topology::Ring, 1.0, 2.0);
    let process = Process::new(&chain, Direction::Cut).unwrap();
    let out = process.run(&linear_baseline(20.0, Direction::Cut).unwrap(), 300).unwrap();
    assert!(out.f_c >= 0.99, "f_C0(T=20) = {}", out.f_c);
}

/// The optimized cut leaves the instantaneous ground state mid-way and still
/// ends closer to the detached ground state.
#[test]
fn optimized_cut_is_less_adiabatic_but_better() {
    let chain = ChainSpec::single_spin_cut(6, Topology::Ring, 1.0, 2.0);
    let process = Process::new(&chain, Direction::Cut).unwrap();
    let linear = linear_baseline(0.6, Direction::Cut).unwrap();
    let tuned = ControlSchedule::polynomial_cut(0.6, &[54.3, -36.3]).unwrap();
    let (out_lin, rec_lin) = process.trajectory(&linear, 300, Sampling::Every(15)).unwrap();
    let (out_opt, rec_opt) = process.trajectory(&tuned, 300, Sampling::Every(15)).unwrap();
    assert!(out_opt.f_c > out_lin.f_c + 0.1);
    let mid = rec_opt.len() / 2;
    let min_opt = rec_opt.f_g[1..rec_opt.len() - 1].iter().cloned().fold(1.0, f64::min);
    let min_lin = rec_lin.f_g[1..rec_lin.len() - 1].iter().cloned().fold(1.0, f64::min);
    assert!(min_opt < min_lin, "optimized min f_g {min_opt} vs linear {min_lin}");
    assert!(rec_opt.f_g[mid] < rec_lin.f_g[mid]);
}

#[test]
fn step_count_converges() {
    let chain = ChainSpec::single_spin_cut(6, Topology::Ring, 1.0, 2.0);
    let process = Process::new(&chain, Direction::Cut).unwrap();
    let s = ControlSchedule::polynomial_cut(0.3, &[122.8, -82.0]).unwrap();
    let a = process.run(&s, 300).unwrap().f_c;
    let b = process.run(&s, 600).unwrap().f_c;
    assert!((a - b).abs() < 1e-3);
}

/// Pulse trains integrate exactly with one factor per pulse, whatever the
/// nominal step count.
#[test]
fn pulse_trains_ignore_step_count() {
    let chain = ChainSpec::single_spin_cut(5, Topology::Open, 1.0, 2.1).with_cut_bonds([Bond::new(2, 3)]);
    let process = Process::new(&chain, Direction::Cut).unwrap();
    let s = ControlSchedule::pulse(0.6, &[-5.4, 4.1], Direction::Cut).unwrap();
    let a = process.run(&s, 1).unwrap();
    let b = process.run(&s, 997).unwrap();
    assert!((a.f_c - b.f_c).abs() < 1e-12);
}
