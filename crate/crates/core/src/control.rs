//! Control schedules `g(t)` for the switched coupling, and apparatus noise.
//!
//! Four parametrizations are supported, all on the interval `[0, T]`:
//!
//! - polynomial cut: `1 + Σ_{n=1..K} a_n (t/T)^n` with `a_1 = −(1 + a_2 + … + a_K)`,
//! - sine cut: `1 − t/T + Σ_{n=1..K} b_n sin(nπt/T)`,
//! - pulse train: `K` rectangular pulses of amplitude `c_n` on `[(n−1)T/K, nT/K)`,
//! - polynomial stitch: `1 + Σ d_n ((T−t)/T)^n` with `d_1 = −(1 + d_2 + … + d_K)`.
//!
//! Outside `[0, T]` the schedule holds the boundary value of its process:
//! 1 before and 0 after a cut, 0 before and 1 after a stitch.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the switched coupling is turned off (cut, `g: 1 → 0`) or on
/// (stitch, `g: 0 → 1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Cut,
    Stitch,
}

impl Direction {
    pub fn initial_coupling(self) -> f64 {
        match self {
            Direction::Cut => 1.0,
            Direction::Stitch => 0.0,
        }
    }

    pub fn final_coupling(self) -> f64 {
        match self {
            Direction::Cut => 0.0,
            Direction::Stitch => 1.0,
        }
    }

    /// Sign of the coupling change over the process.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Cut => -1.0,
            Direction::Stitch => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    PolynomialCut,
    SineCut,
    Pulse,
    PolynomialStitch,
}

/// Anything the propagator can integrate: a real coupling on `[0, T]` with a
/// known set of discontinuities.
pub trait Control {
    fn duration(&self) -> f64;

    fn value(&self, t: f64) -> f64;

    /// Interior times in `(0, T)` where `g` jumps, ascending.
    fn breakpoints(&self) -> Vec<f64>;

    /// Constant between consecutive breakpoints, so each piece can be
    /// propagated exactly in one factor.
    fn is_piecewise_constant(&self) -> bool;

    fn direction(&self) -> Direction;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub struct ControlSchedule {
    kind: ScheduleKind,
    duration: f64,
    params: Vec<f64>,
    direction: Direction,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ScheduleRepr {
    kind: ScheduleKind,
    #[serde(rename = "T")]
    duration: f64,
    #[serde(default)]
    params: Vec<f64>,
    #[serde(default)]
    direction: Option<Direction>,
}

impl TryFrom<ScheduleRepr> for ControlSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        let direction = r.direction.unwrap_or(match r.kind {
            ScheduleKind::PolynomialStitch => Direction::Stitch,
            _ => Direction::Cut,
        });
        ControlSchedule::new(r.kind, r.duration, r.params, direction)
    }
}

impl From<ControlSchedule> for ScheduleRepr {
    fn from(s: ControlSchedule) -> Self {
        ScheduleRepr { kind: s.kind, duration: s.duration, params: s.params, direction: Some(s.direction) }
    }
}

impl ControlSchedule {
    /// Validates that the kind, direction and parameters agree. Pulse trains
    /// need at least one amplitude; the smooth kinds accept any number of
    /// free parameters (zero gives the linear ramp).
    pub fn new(kind: ScheduleKind, duration: f64, params: Vec<f64>, direction: Direction) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::argument("T", format!("duration must be positive and finite, got {duration}")));
        }
        if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::argument("params", format!("non-finite parameter {bad}")));
        }
        match (kind, direction) {
            (ScheduleKind::PolynomialCut | ScheduleKind::SineCut, Direction::Stitch) => {
                return Err(Error::argument("direction", format!("{kind:?} is a cutting schedule")));
            }
            (ScheduleKind::PolynomialStitch, Direction::Cut) => {
                return Err(Error::argument("direction", "polynomial_stitch is a stitching schedule"));
            }
            (ScheduleKind::Pulse, _) if params.is_empty() => {
                return Err(Error::argument("params", "a pulse train needs at least one amplitude"));
            }
            _ => {}
        }
        Ok(ControlSchedule { kind, duration, params, direction })
    }

    /// Polynomial cut with free coefficients `a_2 … a_K`.
    pub fn polynomial_cut(duration: f64, free: &[f64]) -> Result<Self> {
        Self::new(ScheduleKind::PolynomialCut, duration, free.to_vec(), Direction::Cut)
    }

    /// Sine-series cut with coefficients `b_1 … b_K`.
    pub fn sine_cut(duration: f64, free: &[f64]) -> Result<Self> {
        Self::new(ScheduleKind::SineCut, duration, free.to_vec(), Direction::Cut)
    }

    pub fn pulse(duration: f64, amplitudes: &[f64], direction: Direction) -> Result<Self> {
        Self::new(ScheduleKind::Pulse, duration, amplitudes.to_vec(), direction)
    }

    /// Polynomial stitch with free coefficients `d_2 … d_K`.
    pub fn polynomial_stitch(duration: f64, free: &[f64]) -> Result<Self> {
        Self::new(ScheduleKind::PolynomialStitch, duration, free.to_vec(), Direction::Stitch)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Same shape and duration with different free parameters.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Self::new(self.kind, self.duration, params.to_vec(), self.direction)
    }

    /// Full polynomial coefficient list `[a_1, a_2, …, a_K]` with the derived
    /// linear coefficient. Empty for non-polynomial kinds.
    pub fn polynomial_coefficients(&self) -> Vec<f64> {
        match self.kind {
            ScheduleKind::PolynomialCut | ScheduleKind::PolynomialStitch => {
                let mut coeffs = Vec::with_capacity(self.params.len() + 1);
                coeffs.push(-(1.0 + self.params.iter().sum::<f64>()));
                coeffs.extend_from_slice(&self.params);
                coeffs
            }
            _ => Vec::new(),
        }
    }

    fn pulse_width(&self) -> f64 {
        self.duration / self.params.len() as f64
    }

    fn pulse_index(&self, t: f64) -> usize {
        let k = self.params.len();
        ((t / self.pulse_width()).floor() as usize).min(k - 1)
    }

    /// `1 + Σ c_n x^n` (Horner).
    fn polynomial(coeffs: &[f64], x: f64) -> f64 {
        1.0 + x * coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    fn polynomial_slope(coeffs: &[f64], x: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (n, &c)| acc * x + (n + 1) as f64 * c)
    }

    /// `g(t)`.
    pub fn evaluate(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.direction.initial_coupling();
        }
        if t >= self.duration {
            return self.direction.final_coupling();
        }
        let s = t / self.duration;
        match self.kind {
            ScheduleKind::PolynomialCut => Self::polynomial(&self.polynomial_coefficients(), s),
            ScheduleKind::PolynomialStitch => Self::polynomial(&self.polynomial_coefficients(), 1.0 - s),
            ScheduleKind::SineCut => {
                1.0 - s
                    + self
                        .params
                        .iter()
                        .enumerate()
                        .map(|(n, b)| b * ((n + 1) as f64 * PI * s).sin())
                        .sum::<f64>()
            }
            ScheduleKind::Pulse => self.params[self.pulse_index(t)],
        }
    }

    /// Analytic `dg/dt` inside `[0, T]`; one-sided at the endpoints
    /// (`t = 0` gives `dg(+0)/dt`, `t = T` gives `dg(T−0)/dt`). Pulse trains
    /// are flat between jumps.
    pub fn derivative(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        let s = t / self.duration;
        let inv_t = 1.0 / self.duration;
        match self.kind {
            ScheduleKind::PolynomialCut => inv_t * Self::polynomial_slope(&self.polynomial_coefficients(), s),
            ScheduleKind::PolynomialStitch => -inv_t * Self::polynomial_slope(&self.polynomial_coefficients(), 1.0 - s),
            ScheduleKind::SineCut => {
                inv_t
                    * (-1.0
                        + self
                            .params
                            .iter()
                            .enumerate()
                            .map(|(n, b)| {
                                let k = (n + 1) as f64 * PI;
                                b * k * (k * s).cos()
                            })
                            .sum::<f64>())
            }
            ScheduleKind::Pulse => 0.0,
        }
    }
}

impl Control for ControlSchedule {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn value(&self, t: f64) -> f64 {
        self.evaluate(t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            ScheduleKind::Pulse => {
                let w = self.pulse_width();
                (1..self.params.len()).map(|n| n as f64 * w).collect()
            }
            _ => Vec::new(),
        }
    }

    fn is_piecewise_constant(&self) -> bool {
        self.kind == ScheduleKind::Pulse
    }

    fn direction(&self) -> Direction {
        self.direction
    }
}

/// Linear ramp between the process's boundary couplings.
pub fn linear_baseline(duration: f64, direction: Direction) -> Result<ControlSchedule> {
    match direction {
        Direction::Cut => ControlSchedule::polynomial_cut(duration, &[]),
        Direction::Stitch => ControlSchedule::polynomial_stitch(duration, &[]),
    }
}

/// Rectangular noise pulses of fixed width and random strength
/// `Δg (1/2 − r)`, `r ∈ [0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Pulse width Δt.
    pub dt: f64,
    /// Characteristic strength Δg.
    pub dg: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::argument("noise.dt", format!("pulse width must be positive, got {}", self.dt)));
        }
        if !(self.dg >= 0.0) || !self.dg.is_finite() {
            return Err(Error::argument("noise.dg", format!("strength must be non-negative, got {}", self.dg)));
        }
        Ok(())
    }
}

/// A schedule with a seeded noise realization added on windows
/// `[kΔt, (k+1)Δt) ∩ [0, T]`, aligned to `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisySchedule {
    base: ControlSchedule,
    window: f64,
    offsets: Vec<f64>,
}

impl NoisySchedule {
    pub fn base(&self) -> &ControlSchedule {
        &self.base
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    fn window_index(&self, t: f64) -> usize {
        ((t / self.window).floor() as usize).min(self.offsets.len() - 1)
    }
}

/// Draws one noise realization for `schedule`. Identical seeds give identical
/// realizations.
pub fn apply_noise(schedule: &ControlSchedule, noise: &NoiseSpec) -> Result<NoisySchedule> {
    noise.validate()?;
    let windows = window_count(schedule.duration, noise.dt);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let offsets = (0..windows)
        .map(|_| {
            let r: f64 = rng.random();
            noise.dg * (0.5 - r)
        })
        .collect();
    Ok(NoisySchedule { base: schedule.clone(), window: noise.dt, offsets })
}

/// Number of noise windows covering `[0, T)`; a trailing sliver shorter than
/// a part in 10⁹ of the window is ignored.
fn window_count(duration: f64, window: f64) -> usize {
    let ratio = duration / window;
    let n = ratio.round();
    if (ratio - n).abs() <= 1e-9 * ratio.max(1.0) {
        (n as usize).max(1)
    } else {
        ratio.ceil() as usize
    }
}

impl Control for NoisySchedule {
    fn duration(&self) -> f64 {
        self.base.duration
    }

    fn value(&self, t: f64) -> f64 {
        let g = self.base.evaluate(t);
        if t < 0.0 || t >= self.base.duration {
            g
        } else {
            g + self.offsets[self.window_index(t)]
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut points = self.base.breakpoints();
        // only windows where the offset actually changes are jumps
        points.extend(
            (1..self.offsets.len()).filter(|&k| self.offsets[k] != self.offsets[k - 1]).map(|k| k as f64 * self.window),
        );
        points.sort_by(f64::total_cmp);
        points
    }

    fn is_piecewise_constant(&self) -> bool {
        self.base.is_piecewise_constant()
    }

    fn direction(&self) -> Direction {
        self.base.direction
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_parameters_give_linear_ramp() {
        for t_total in [0.3, 1.0, 7.5] {
            let s = ControlSchedule::polynomial_cut(t_total, &[0.0, 0.0]).unwrap();
            for k in 0..=10 {
                let t = t_total * k as f64 / 10.0;
                assert!((s.evaluate(t) - (1.0 - t / t_total)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn polynomial_cut_at_table_parameters() {
        let s = ControlSchedule::polynomial_cut(2.0, &[0.87, -0.72]).unwrap();
        let coeffs = s.polynomial_coefficients();
        assert!((coeffs[0] + 1.15).abs() < 1e-14);
        // 1 − 1.15/2 + 0.87/4 − 0.72/8
        assert!((s.evaluate(1.0) - 0.5525).abs() < 1e-14);
    }

    #[test]
    fn sine_cut_endpoints() {
        let s = ControlSchedule::sine_cut(0.6, &[0.3, -0.1]).unwrap();
        assert_eq!(s.evaluate(0.0), 1.0);
        assert_eq!(s.evaluate(0.6), 0.0);
    }

    #[test]
    fn pulse_windows_are_half_open() {
        let s = ControlSchedule::pulse(0.6, &[-5.4, 4.1], Direction::Cut).unwrap();
        assert_eq!(s.evaluate(0.1), -5.4);
        assert_eq!(s.evaluate(0.45), 4.1);
        assert_eq!(s.evaluate(0.0), -5.4);
        assert_eq!(s.evaluate(0.3), 4.1);
        assert_eq!(s.evaluate(0.6), 0.0);
        assert_eq!(s.evaluate(-0.1), 1.0);
        assert_eq!(s.breakpoints(), vec![0.3]);
    }

    #[test]
    fn linear_baselines() {
        let cut = linear_baseline(1.0, Direction::Cut).unwrap();
        assert_eq!(cut.evaluate(0.25), 0.75);
        let stitch = linear_baseline(1.0, Direction::Stitch).unwrap();
        assert_eq!(stitch.evaluate(0.25), 0.25);
        assert_eq!(stitch.evaluate(-1.0), 0.0);
        assert_eq!(stitch.evaluate(2.0), 1.0);
    }

    #[test]
    fn construction_errors() {
        assert!(ControlSchedule::polynomial_cut(0.0, &[]).is_err());
        assert!(ControlSchedule::polynomial_cut(-1.0, &[]).is_err());
        assert!(ControlSchedule::pulse(1.0, &[], Direction::Cut).is_err());
        assert!(ControlSchedule::new(ScheduleKind::SineCut, 1.0, vec![], Direction::Stitch).is_err());
        assert!(ControlSchedule::new(ScheduleKind::PolynomialStitch, 1.0, vec![], Direction::Cut).is_err());
        assert!(ControlSchedule::polynomial_cut(1.0, &[f64::NAN]).is_err());
    }

    #[test]
    fn schedule_serde_shape() {
        let s = ControlSchedule::polynomial_cut(0.6, &[54.3, -36.3]).unwrap();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["kind"], "polynomial_cut");
        assert_eq!(json["T"], 0.6);
        assert_eq!(json["direction"], "cut");
        let back: ControlSchedule = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
        let stitch: ControlSchedule = serde_json::from_str(r#"{"kind":"polynomial_stitch","T":1.0}"#).unwrap();
        assert_eq!(Control::direction(&stitch), Direction::Stitch);
        assert!(serde_json::from_str::<ControlSchedule>(r#"{"kind":"pulse","T":1.0,"params":[]}"#).is_err());
    }

    #[test]
    fn zero_strength_noise_is_identity() {
        let s = ControlSchedule::polynomial_cut(0.6, &[54.3, -36.3]).unwrap();
        let noisy = apply_noise(&s, &NoiseSpec { dt: 0.01, dg: 0.0, seed: 7 }).unwrap();
        for k in 0..=60 {
            let t = 0.6 * k as f64 / 60.0;
            assert_eq!(noisy.value(t), s.evaluate(t));
        }
        assert!(noisy.breakpoints().is_empty());
    }

    #[test]
    fn noise_is_seeded() {
        let s = linear_baseline(1.0, Direction::Cut).unwrap();
        let a = apply_noise(&s, &NoiseSpec { dt: 0.1, dg: 0.5, seed: 42 }).unwrap();
        let b = apply_noise(&s, &NoiseSpec { dt: 0.1, dg: 0.5, seed: 42 }).unwrap();
        let c = apply_noise(&s, &NoiseSpec { dt: 0.1, dg: 0.5, seed: 43 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.offsets().len(), 10);
        assert!(a.offsets().iter().all(|o| o.abs() <= 0.25));
        assert_eq!(a.breakpoints().len(), 9);
        // outside [0, T] the noise is absent
        assert_eq!(a.value(-0.1), 1.0);
        assert_eq!(a.value(1.0), 0.0);
    }

    #[test]
    fn noise_window_count_tolerates_rounding() {
        assert_eq!(window_count(0.6, 0.6 / 60.0), 60);
        assert_eq!(window_count(0.6, 0.1), 6);
        assert_eq!(window_count(1.0, 0.3), 4);
        assert_eq!(window_count(0.1, 1.0), 1);
    }

    #[test]
    fn noise_mean_converges_to_schedule() {
        let s = ControlSchedule::polynomial_cut(0.6, &[54.3, -36.3]).unwrap();
        let t = 0.37;
        let m = 4000;
        let dg = 1.0;
        let mean: f64 = (0..m)
            .map(|seed| apply_noise(&s, &NoiseSpec { dt: 0.01, dg, seed }).unwrap().value(t))
            .sum::<f64>()
            / m as f64;
        // uniform offsets have standard deviation dg/√12
        let stderr = dg / 12f64.sqrt() / (m as f64).sqrt();
        assert!((mean - s.evaluate(t)).abs() < 4.0 * stderr, "mean {mean} vs {}", s.evaluate(t));
    }

    #[test]
    fn noise_spec_validation() {
        let s = linear_baseline(1.0, Direction::Cut).unwrap();
        assert!(apply_noise(&s, &NoiseSpec { dt: 0.0, dg: 0.1, seed: 0 }).is_err());
        assert!(apply_noise(&s, &NoiseSpec { dt: 0.1, dg: -0.1, seed: 0 }).is_err());
    }

    proptest! {
        #[test]
        fn smooth_cut_endpoints_exact(t_total in 0.01f64..50.0, a2 in -200.0f64..200.0, a3 in -200.0f64..200.0) {
            let p = ControlSchedule::polynomial_cut(t_total, &[a2, a3]).unwrap();
            prop_assert!((p.evaluate(0.0) - 1.0).abs() < 1e-12);
            prop_assert!(p.evaluate(t_total).abs() < 1e-12);
            let s = ControlSchedule::sine_cut(t_total, &[a2, a3]).unwrap();
            prop_assert!((s.evaluate(0.0) - 1.0).abs() < 1e-12);
            prop_assert!(s.evaluate(t_total).abs() < 1e-12);
            let st = ControlSchedule::polynomial_stitch(t_total, &[a2, a3]).unwrap();
            prop_assert!(st.evaluate(0.0).abs() < 1e-12);
            prop_assert!((st.evaluate(t_total) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn stitch_mirrors_cut(t_total in 0.05f64..10.0, d2 in -50.0f64..50.0, d3 in -50.0f64..50.0, frac in 0.0f64..1.0) {
            let stitch = ControlSchedule::polynomial_stitch(t_total, &[d2, d3]).unwrap();
            let cut = ControlSchedule::polynomial_cut(t_total, &[d2, d3]).unwrap();
            let t = frac * t_total;
            prop_assert!((stitch.evaluate(t) - cut.evaluate(t_total - t)).abs() < 1e-12 * (1.0 + d2.abs() + d3.abs()));
        }

        #[test]
        fn sine_slope_conditions_match_inequalities(b1 in -2.0f64..2.0, b2 in -2.0f64..2.0, t_total in 0.1f64..5.0) {
            let s = ControlSchedule::sine_cut(t_total, &[b1, b2]).unwrap();
            let start_falls = s.derivative(0.0) < 0.0;
            let end_falls = s.derivative(t_total) < 0.0;
            let line = 1.0 / (2.0 * PI);
            // skip samples within rounding distance of the boundary lines
            prop_assume!((b2 - (line - b1 / 2.0)).abs() > 1e-9 && (b2 - (line + b1 / 2.0)).abs() > 1e-9);
            prop_assert_eq!(start_falls, b2 < line - b1 / 2.0);
            prop_assert_eq!(end_falls, b2 < line + b1 / 2.0);
        }

        #[test]
        fn derivative_matches_finite_difference(a2 in -60.0f64..60.0, a3 in -60.0f64..60.0, frac in 0.05f64..0.95) {
            let t_total = 0.6;
            let h = 1e-6;
            for s in [
                ControlSchedule::polynomial_cut(t_total, &[a2, a3]).unwrap(),
                ControlSchedule::sine_cut(t_total, &[a2 / 30.0, a3 / 30.0]).unwrap(),
                ControlSchedule::polynomial_stitch(t_total, &[a2, a3]).unwrap(),
            ] {
                let t = frac * t_total;
                let fd = (s.evaluate(t + h) - s.evaluate(t - h)) / (2.0 * h);
                prop_assert!((fd - s.derivative(t)).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }
}
