use std::f64::consts::PI;

use spincut_core::*;

/// High-fidelity sine-form controls keep `g` decreasing at both ends, which
/// puts them below both lines `b2 = 1/2π ∓ b1/2`.
#[test]
fn sine_island_lies_below_both_lines() {
    let chain = ChainSpec::single_spin_cut(6, Topology::Ring, 1.0, 2.0);
    let objective = Objective::new(ObjectiveSpec::sine_cut(chain, 0.6, 2).with_steps(100)).unwrap();
    let f = |x: &[f64]| objective.evaluate(x);
    let grid = scan_landscape(&f, &[0.0, 0.0], LandscapeAxis::new(0, -3.0, 3.0, 13), LandscapeAxis::new(1, -3.0, 3.0, 13))
        .unwrap();
    let mut island = 0;
    for i in 0..13 {
        for j in 0..13 {
            let (b1, b2) = (grid.first.coordinate(i), grid.second.coordinate(j));
            if grid.value(i, j) > 0.95 {
                island += 1;
                assert!(b2 < 1.0 / (2.0 * PI) - b1 / 2.0 && b2 < 1.0 / (2.0 * PI) + b1 / 2.0, "({b1}, {b2})");
            }
        }
    }
    assert!(island >= 3, "expected a high-fidelity island, found {island} cells");
    // the linear ramp sits on the island
    let (i0, j0) = grid.nearest_cell(0.0, 0.0);
    assert!(grid.value(i0, j0) > 0.8);
}
