//! Fidelity maximization over schedule parameters: central-difference
//! gradients, BFGS with an Armijo backtracking line search, and 2-D landscape
//! scans.

use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlSchedule, Direction, ScheduleKind};
use crate::dynamics::DEFAULT_STEPS;
use crate::error::{Error, Result};
use crate::process::Process;
use crate::spin::ChainSpec;

/// Finite-difference step in parameter space.
pub const DEFAULT_GRAD_STEP: f64 = 0.1;

/// Which final-time fidelity is maximized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    CutFidelity,
    GroundFidelity,
}

impl Target {
    /// `f_C` for cutting, `f_G` for stitching.
    pub fn default_for(direction: Direction) -> Self {
        match direction {
            Direction::Cut => Target::CutFidelity,
            Direction::Stitch => Target::GroundFidelity,
        }
    }
}

/// Physical setting plus schedule template; maps free parameters to a
/// fidelity in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub chain: ChainSpec,
    pub kind: ScheduleKind,
    #[serde(rename = "T")]
    pub duration: f64,
    pub n_free: usize,
    pub direction: Direction,
    pub target: Target,
    pub n_steps: usize,
}

impl ObjectiveSpec {
    /// Polynomial cut of `f_C` with free coefficients `a_2 … a_{n_free+1}`.
    pub fn polynomial_cut(chain: ChainSpec, duration: f64, n_free: usize) -> Self {
        ObjectiveSpec {
            chain,
            kind: ScheduleKind::PolynomialCut,
            duration,
            n_free,
            direction: Direction::Cut,
            target: Target::CutFidelity,
            n_steps: DEFAULT_STEPS,
        }
    }

    pub fn sine_cut(chain: ChainSpec, duration: f64, n_free: usize) -> Self {
        ObjectiveSpec { kind: ScheduleKind::SineCut, ..Self::polynomial_cut(chain, duration, n_free) }
    }

    pub fn pulse_cut(chain: ChainSpec, duration: f64, n_pulses: usize) -> Self {
        ObjectiveSpec { kind: ScheduleKind::Pulse, ..Self::polynomial_cut(chain, duration, n_pulses) }
    }

    /// Polynomial stitch of `f_G`.
    pub fn polynomial_stitch(chain: ChainSpec, duration: f64, n_free: usize) -> Self {
        ObjectiveSpec {
            kind: ScheduleKind::PolynomialStitch,
            direction: Direction::Stitch,
            target: Target::GroundFidelity,
            ..Self::polynomial_cut(chain, duration, n_free)
        }
    }

    pub fn with_steps(mut self, n_steps: usize) -> Self {
        self.n_steps = n_steps;
        self
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }

    /// The schedule at the given parameters.
    pub fn schedule(&self, params: &[f64]) -> Result<ControlSchedule> {
        if params.len() != self.n_free {
            return Err(Error::argument("params", format!("expected {} parameters, got {}", self.n_free, params.len())));
        }
        ControlSchedule::new(self.kind, self.duration, params.to_vec(), self.direction)
    }
}

/// A ready-to-evaluate objective. Evaluation is deterministic and may be
/// called concurrently.
#[derive(Debug)]
pub struct Objective {
    spec: ObjectiveSpec,
    process: Process,
}

impl Objective {
    pub fn new(spec: ObjectiveSpec) -> Result<Self> {
        if spec.n_steps == 0 {
            return Err(Error::argument("n_steps", "need at least one step"));
        }
        // validates kind/direction/duration up front
        spec.schedule(&vec![0.0; spec.n_free])?;
        let process = Process::new(&spec.chain, spec.direction)?;
        Ok(Objective { spec, process })
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn process(&self) -> &Process {
        &self.process
    }

    pub fn evaluate(&self, params: &[f64]) -> Result<f64> {
        let schedule = self.spec.schedule(params)?;
        let out = self.process.run(&schedule, self.spec.n_steps)?;
        Ok(match self.spec.target {
            Target::CutFidelity => out.f_c,
            Target::GroundFidelity => out.f_g,
        })
    }
}

/// Central differences `[f(x + h eᵢ) − f(x − h eᵢ)] / 2h`. The `2·dim`
/// evaluations run in parallel and are reduced in index order.
pub fn finite_difference_gradient<F>(objective: &F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(h > 0.0) {
        return Err(Error::argument("h", format!("step must be positive, got {h}")));
    }
    let values: Vec<Result<f64>> = (0..2 * x.len())
        .into_par_iter()
        .map(|k| {
            let mut probe = x.to_vec();
            probe[k / 2] += if k % 2 == 0 { h } else { -h };
            objective(&probe)
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(values.chunks(2).map(|pair| (pair[0] - pair[1]) / (2.0 * h)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub grad_step: f64,
    /// Stop once the gradient's infinity norm drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub armijo_c1: f64,
    pub max_halvings: usize,
    /// Skip the inverse-Hessian update when `sᵀy` is at or below this.
    pub curvature_eps: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            grad_step: DEFAULT_GRAD_STEP,
            tolerance: 1e-4,
            max_iterations: 200,
            armijo_c1: 1e-4,
            max_halvings: 30,
            curvature_eps: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BfgsStatus {
    Converged,
    MaxIterations,
    /// The line search exhausted its halvings; the report holds the best
    /// point found.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub params: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub initial_params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub initial_value: f64,
    pub final_value: f64,
    pub iterations: usize,
    pub gradient_inf_norm: f64,
    pub line_search_failures: usize,
    pub status: BfgsStatus,
    pub evaluations: usize,
    /// Accepted iterates, starting with the initial point.
    pub trace: Vec<TracePoint>,
    /// Final inverse-Hessian estimate of the minimized `−f`, row-major rows.
    pub inverse_hessian: Vec<Vec<f64>>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes `objective` by running BFGS on its negation.
pub fn bfgs_maximize<F>(objective: &F, x0: &[f64], options: &BfgsOptions) -> Result<OptimizationReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if x0.is_empty() {
        return Err(Error::argument("x0", "need at least one parameter"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("x0", "starting point must be finite"));
    }
    let evaluations = AtomicUsize::new(0);
    let f = |x: &[f64]| {
        evaluations.fetch_add(1, Ordering::Relaxed);
        objective(x)
    };
    // minimize φ = −f
    let phi = |x: &DVector<f64>| f(x.as_slice()).map(|v| -v);
    let grad = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let g = finite_difference_gradient(&f, x.as_slice(), options.grad_step)?;
        Ok(DVector::from_iterator(g.len(), g.into_iter().map(|v| -v)))
    };

    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut value = phi(&x)?;
    let mut g = grad(&x)?;
    let scaled_identity = |g: &DVector<f64>| {
        let norm = inf_norm(g);
        let scale = if norm > 0.0 { (1.0 / norm).clamp(1e-3, 1e3) } else { 1.0 };
        DMatrix::<f64>::identity(n, n) * scale
    };
    let mut h_inv = scaled_identity(&g);
    let mut trace = vec![TracePoint { params: x0.to_vec(), value: -value }];
    let mut status = BfgsStatus::MaxIterations;
    let mut failures = 0;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        if inf_norm(&g) < options.tolerance {
            status = BfgsStatus::Converged;
            break;
        }
        let mut direction = -(&h_inv * &g);
        let mut slope = g.dot(&direction);
        if !(slope < 0.0) {
            h_inv = scaled_identity(&g);
            direction = -(&h_inv * &g);
            slope = g.dot(&direction);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let candidate = &x + &direction * step;
            let candidate_value = phi(&candidate)?;
            if candidate_value <= value + options.armijo_c1 * step * slope {
                accepted = Some((candidate, candidate_value));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, value_new)) = accepted else {
            failures += 1;
            status = BfgsStatus::Stalled;
            break;
        };
        iterations += 1;

        let g_new = grad(&x_new)?;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > options.curvature_eps {
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h_inv = (&h_inv + h_inv.transpose()) * 0.5;
        }
        x = x_new;
        value = value_new;
        g = g_new;
        trace.push(TracePoint { params: x.as_slice().to_vec(), value: -value });
    }
    if status == BfgsStatus::MaxIterations && inf_norm(&g) < options.tolerance {
        status = BfgsStatus::Converged;
    }

    Ok(OptimizationReport {
        initial_params: x0.to_vec(),
        final_params: x.as_slice().to_vec(),
        initial_value: trace[0].value,
        final_value: -value,
        iterations,
        gradient_inf_norm: inf_norm(&g),
        line_search_failures: failures,
        status,
        evaluations: evaluations.load(Ordering::Relaxed),
        trace,
        inverse_hessian: h_inv.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

/// Runs [`bfgs_maximize`] from every start and keeps the best final value
/// (earliest start on ties).
pub fn bfgs_maximize_multistart<F>(objective: &F, starts: &[Vec<f64>], options: &BfgsOptions) -> Result<OptimizationReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut best: Option<OptimizationReport> = None;
    for x0 in starts {
        let report = bfgs_maximize(objective, x0, options)?;
        if best.as_ref().is_none_or(|b| report.final_value > b.final_value) {
            best = Some(report);
        }
    }
    best.ok_or_else(|| Error::argument("starts", "need at least one starting point"))
}

/// Uniform grid of `per_axis^dim` starting points on `[lo, hi]^dim`.
pub fn grid_starts(dim: usize, lo: f64, hi: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let coords: Vec<f64> = if per_axis <= 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..per_axis).map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64).collect()
    };
    let mut starts = vec![Vec::new()];
    for _ in 0..dim {
        starts = starts
            .into_iter()
            .flat_map(|prefix| {
                coords.iter().map(move |&c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    starts
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeAxis {
    /// Index into the free-parameter vector.
    pub index: usize,
    pub min: f64,
    pub max: f64,
    pub resolution: usize,
}

impl LandscapeAxis {
    pub fn new(index: usize, min: f64, max: f64, resolution: usize) -> Self {
        LandscapeAxis { index, min, max, resolution }
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * i as f64 / (self.resolution - 1) as f64
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.resolution - 1) as f64
    }

    /// Grid index closest to `x`, clamped to the axis.
    pub fn nearest_index(&self, x: f64) -> usize {
        let k = ((x - self.min) / self.spacing()).round();
        k.clamp(0.0, (self.resolution - 1) as f64) as usize
    }

    fn validate(&self, n_params: usize) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::argument("landscape.resolution", "need at least 2 points per axis"));
        }
        if self.index >= n_params {
            return Err(Error::argument(
                "landscape.index",
                format!("parameter {} does not exist ({} free parameters)", self.index, n_params),
            ));
        }
        if !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::argument("landscape.range", format!("invalid range [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }
}

/// Objective values on a 2-D grid; row-major over the first axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub first: LandscapeAxis,
    pub second: LandscapeAxis,
    /// Values of all parameters not on an axis.
    pub base: Vec<f64>,
    pub values: Vec<f64>,
}

impl LandscapeGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.second.resolution + j]
    }

    /// `(i, j, value)` of the largest cell (first in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize, f64) {
        let (k, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
        (k / self.second.resolution, k % self.second.resolution, v)
    }

    pub fn nearest_cell(&self, p1: f64, p2: f64) -> (usize, usize) {
        (self.first.nearest_index(p1), self.second.nearest_index(p2))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (name, axis) in [("p1", &self.first), ("p2", &self.second)] {
            writeln!(
                out,
                "# {name}: index={} min={:.15e} max={:.15e} resolution={}",
                axis.index, axis.min, axis.max, axis.resolution
            )?;
        }
        let base: Vec<String> = self.base.iter().map(|b| format!("{b:.15e}")).collect();
        writeln!(out, "# base: [{}]", base.join(","))?;
        writeln!(out, "p1,p2,fidelity")?;
        for i in 0..self.first.resolution {
            for j in 0..self.second.resolution {
                writeln!(
                    out,
                    "{:.15e},{:.15e},{:.15e}",
                    self.first.coordinate(i),
                    self.second.coordinate(j),
                    self.value(i, j)
                )?;
            }
        }
        Ok(())
    }
}

/// Evaluates `objective` on the grid spanned by two parameter axes, holding
/// the other parameters at `base`. Cells are computed in parallel.
pub fn scan_landscape<F>(objective: &F, base: &[f64], first: LandscapeAxis, second: LandscapeAxis) -> Result<LandscapeGrid>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    first.validate(base.len())?;
    second.validate(base.len())?;
    if first.index == second.index {
        return Err(Error::argument("landscape.index", "the two axes must vary different parameters"));
    }
    let cols = second.resolution;
    let values = (0..first.resolution * cols)
        .into_par_iter()
        .map(|k| {
            let mut p = base.to_vec();
            p[first.index] = first.coordinate(k / cols);
            p[second.index] = second.coordinate(k % cols);
            objective(&p)
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(LandscapeGrid { first, second, base: base.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn bowl(x: &[f64]) -> Result<f64> {
        Ok(-((x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2)))
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = finite_difference_gradient(&|_: &[f64]| Ok(0.7), &[1.0, -3.0, 2.0], 0.1).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn central_difference_exact_on_quadratic() {
        let f = |x: &[f64]| Ok((x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2));
        let g = finite_difference_gradient(&f, &[0.0, 0.0], 0.1).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-12);
        assert!((g[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_step_must_be_positive() {
        assert!(finite_difference_gradient(&bowl, &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn richardson_ratio_is_four() {
        // error of central differences scales as h²
        let f = |x: &[f64]| Ok(x[0].sin() * x[1].exp());
        let exact = 0.3f64.cos() * 0.2f64.exp();
        let e1 = finite_difference_gradient(&f, &[0.3, 0.2], 0.1).unwrap()[0] - exact;
        let e2 = finite_difference_gradient(&f, &[0.3, 0.2], 0.05).unwrap()[0] - exact;
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn bfgs_recovers_quadratic_minimum() {
        let report = bfgs_maximize(&bowl, &[0.0, 0.0], &BfgsOptions::default()).unwrap();
        assert!((report.final_params[0] - 1.0).abs() < 1e-6);
        assert!((report.final_params[1] + 2.0).abs() < 1e-6);
        assert!(report.iterations <= 10, "{} iterations", report.iterations);
        assert_eq!(report.status, BfgsStatus::Converged);
    }

    #[test]
    fn bfgs_inverse_hessian_stays_spd() {
        let f = |x: &[f64]| Ok(-(3.0 * x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1] - x[0] + 4.0 * x[1]));
        let report = bfgs_maximize(&f, &[5.0, -7.0], &BfgsOptions::default()).unwrap();
        let h = DMatrix::from_fn(2, 2, |i, j| report.inverse_hessian[i][j]);
        assert!((h[(0, 1)] - h[(1, 0)]).abs() < 1e-10);
        let eig = SymmetricEigen::new(h);
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn bfgs_trace_is_monotone_and_deterministic() {
        let f = |x: &[f64]| Ok(-(1.0 - x[0]).powi(2) - 10.0 * (x[1] - x[0] * x[0]).powi(2));
        let a = bfgs_maximize(&f, &[-1.2, 1.0], &BfgsOptions::default()).unwrap();
        let b = bfgs_maximize(&f, &[-1.2, 1.0], &BfgsOptions::default()).unwrap();
        assert_eq!(a, b);
        for w in a.trace.windows(2) {
            assert!(w[1].value >= w[0].value);
        }
        assert!(a.final_value >= a.initial_value - 1e-12);
    }

    #[test]
    fn bfgs_stalls_gracefully() {
        // a plateau with a cliff: the difference stencil sees a slope but no
        // step along it improves the value
        let f = |x: &[f64]| Ok(if x[0] < 0.05 { 1.0 } else { 0.0 });
        let report = bfgs_maximize(&f, &[0.0], &BfgsOptions::default()).unwrap();
        assert_eq!(report.status, BfgsStatus::Stalled);
        assert_eq!(report.line_search_failures, 1);
        assert_eq!(report.final_params, vec![0.0]);
        assert_eq!(report.final_value, 1.0);
    }

    #[test]
    fn bfgs_rejects_bad_start() {
        assert!(bfgs_maximize(&bowl, &[], &BfgsOptions::default()).is_err());
        assert!(bfgs_maximize(&bowl, &[f64::NAN, 0.0], &BfgsOptions::default()).is_err());
    }

    #[test]
    fn multistart_picks_best() {
        let two_peaks = |x: &[f64]| Ok((-(x[0] - 3.0).powi(2)).exp() + 0.5 * (-(x[0] + 3.0).powi(2)).exp());
        let starts = grid_starts(1, -4.0, 4.0, 3);
        assert_eq!(starts, vec![vec![-4.0], vec![0.0], vec![4.0]]);
        let best = bfgs_maximize_multistart(&two_peaks, &starts, &BfgsOptions::default()).unwrap();
        assert!((best.final_params[0] - 3.0).abs() < 1e-3);
        assert_eq!(grid_starts(2, 0.0, 1.0, 2).len(), 4);
    }

    #[test]
    fn constant_landscape() {
        let grid = scan_landscape(
            &|_: &[f64]| Ok(0.25),
            &[0.0, 0.0, 1.0],
            LandscapeAxis::new(0, -1.0, 1.0, 4),
            LandscapeAxis::new(2, 0.0, 2.0, 3),
        )
        .unwrap();
        assert_eq!(grid.values.len(), 12);
        assert!(grid.values.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn landscape_layout_and_argmax() {
        let grid = scan_landscape(
            &bowl,
            &[0.0, 0.0],
            LandscapeAxis::new(0, -2.0, 2.0, 5),
            LandscapeAxis::new(1, -4.0, 0.0, 5),
        )
        .unwrap();
        let (i, j, v) = grid.argmax();
        assert_eq!((i, j), (3, 2));
        assert_eq!(v, 0.0);
        assert_eq!(grid.nearest_cell(1.1, -1.9), (3, 2));
        assert_eq!(grid.value(0, 0), bowl(&[-2.0, -4.0]).unwrap());
        let mut csv = Vec::new();
        grid.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.lines().nth(3).unwrap() == "p1,p2,fidelity");
        assert_eq!(text.lines().count(), 4 + 25);
    }

    #[test]
    fn landscape_validation() {
        let ok = LandscapeAxis::new(0, 0.0, 1.0, 3);
        assert!(scan_landscape(&bowl, &[0.0, 0.0], ok, LandscapeAxis::new(1, 0.0, 1.0, 1)).is_err());
        assert!(scan_landscape(&bowl, &[0.0, 0.0], ok, LandscapeAxis::new(2, 0.0, 1.0, 3)).is_err());
        assert!(scan_landscape(&bowl, &[0.0, 0.0], ok, ok).is_err());
        assert!(scan_landscape(&bowl, &[0.0, 0.0], ok, LandscapeAxis::new(1, 1.0, 1.0, 3)).is_err());
    }
}
