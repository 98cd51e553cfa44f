//! Experiment configuration: one TOML file describes one experiment.
//!
//! ```toml
//! mode = "sweep"
//! n_steps = 300
//! output = "out/ring6"
//!
//! [chain]
//! n_spins = 6
//! topology = "ring"
//! field = 2.0
//!
//! [schedule]
//! kind = "polynomial_cut"
//! T = 0.6
//! params = [0.0, 0.0]
//!
//! [sweep]
//! T = [0.3, 0.6, 0.9, 2.0]
//! ```
//!
//! Everything referenced by the chosen mode is validated by
//! [`RunConfig::validate`] before any computation starts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spincut_core::optim::{bfgs_maximize_multistart, grid_starts};
use spincut_core::{
    bfgs_maximize, Bond, BfgsOptions, ChainSpec, ControlSchedule, Direction, LandscapeAxis, Objective, ObjectiveSpec,
    OptimizationReport, ScheduleKind, Topology,
};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Evolve,
    Optimize,
    Sweep,
    Landscape,
    Noise,
    TwoSpin,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Evolve => "evolve",
            Mode::Optimize => "optimize",
            Mode::Sweep => "sweep",
            Mode::Landscape => "landscape",
            Mode::Noise => "noise",
            Mode::TwoSpin => "two-spin",
        };
        f.write_str(s)
    }
}

fn default_exchange() -> f64 {
    1.0
}

fn default_spin_cap() -> usize {
    spincut_core::spin::DEFAULT_SPIN_CAP
}

/// Chain geometry; `cut_bonds` defaults to detaching site 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_spins: usize,
    pub topology: Topology,
    #[serde(default = "default_exchange")]
    pub exchange: f64,
    #[serde(default)]
    pub field: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_bonds: Option<Vec<[usize; 2]>>,
    #[serde(default = "default_spin_cap")]
    pub spin_cap: usize,
}

impl ChainConfig {
    pub fn new(n_spins: usize, topology: Topology, field: f64) -> Self {
        ChainConfig { n_spins, topology, exchange: 1.0, field, cut_bonds: None, spin_cap: default_spin_cap() }
    }

    pub fn spec(&self) -> ChainSpec {
        let base = ChainSpec::single_spin_cut(self.n_spins, self.topology, self.exchange, self.field);
        let spec = match &self.cut_bonds {
            Some(bonds) => base.with_cut_bonds(bonds.iter().map(|&b| Bond::from(b))),
            None => base,
        };
        ChainSpec { spin_cap: self.spin_cap, ..spec }
    }
}

/// Schedule template. `params` are the concrete parameters for `evolve` and
/// the starting point for the optimizing modes; their count fixes the number
/// of free parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    #[serde(rename = "T")]
    pub duration: f64,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "T")]
    pub durations: Vec<f64>,
    /// Also run the optimizer at every T (otherwise baseline only).
    #[serde(default = "yes")]
    pub optimize: bool,
}

fn yes() -> bool {
    true
}

/// Uniform grid of optimizer starts on `[lo, hi]^n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultistartConfig {
    pub lo: f64,
    pub hi: f64,
    pub per_axis: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub grad_step: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multistart: Option<MultistartConfig>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = BfgsOptions::default();
        OptimizerConfig { grad_step: d.grad_step, tolerance: d.tolerance, max_iterations: d.max_iterations, multistart: None }
    }
}

impl OptimizerConfig {
    pub fn options(&self) -> BfgsOptions {
        BfgsOptions {
            grad_step: self.grad_step,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ..BfgsOptions::default()
        }
    }

    /// Single start at `x0`, or the configured start grid.
    pub fn maximize(&self, objective: &Objective, x0: &[f64]) -> Result<OptimizationReport> {
        let f = |x: &[f64]| objective.evaluate(x);
        let report = match self.multistart {
            None => bfgs_maximize(&f, x0, &self.options())?,
            Some(m) => {
                let mut starts = vec![x0.to_vec()];
                starts.extend(grid_starts(x0.len(), m.lo, m.hi, m.per_axis));
                bfgs_maximize_multistart(&f, &starts, &self.options())?
            }
        };
        Ok(report)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub p1: LandscapeAxis,
    pub p2: LandscapeAxis,
    /// Run BFGS from the schedule parameters and record the optimum marker.
    #[serde(default = "yes")]
    pub mark_optimum: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub dg: Vec<f64>,
    /// Noise pulse widths; defaults to `T/60` and `T/6`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<Vec<f64>>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Optimize the schedule from its parameters before adding noise.
    #[serde(default)]
    pub optimize: bool,
}

fn default_realizations() -> usize {
    50
}

impl NoiseConfig {
    pub fn widths(&self, duration: f64) -> Vec<f64> {
        self.dt.clone().unwrap_or_else(|| vec![duration / 60.0, duration / 6.0])
    }
}

fn default_steps() -> usize {
    spincut_core::dynamics::DEFAULT_STEPS
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_process() -> Direction {
    Direction::Cut
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// May be omitted when the subcommand names the mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub chain: ChainConfig,
    #[serde(default = "default_process")]
    pub process: Direction,
    pub schedule: ScheduleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape: Option<LandscapeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    /// Master seed for the noise study.
    #[serde(default)]
    pub seed: u64,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub output: Option<PathBuf>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(mode: Mode, chain: ChainConfig, process: Direction, schedule: ScheduleConfig) -> Self {
        RunConfig {
            mode: Some(mode),
            chain,
            process,
            schedule,
            sweep: None,
            optimizer: OptimizerConfig::default(),
            landscape: None,
            noise: None,
            output: default_output(),
            n_steps: default_steps(),
            seed: 0,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(parse_error_field(e.message()), e.to_string()))
    }

    /// Reads a TOML config, or the config echoed in a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::config("manifest", e.to_string()))?;
            let config = value.get("config").cloned().ok_or_else(|| CliError::config("manifest", "no `config` entry"))?;
            return serde_json::from_value(config).map_err(|e| CliError::config("manifest.config", e.to_string()));
        }
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(mode) = o.mode {
            if self.mode.is_some_and(|m| m != mode) {
                return Err(CliError::config(
                    "mode",
                    format!("config is for `{}` but `{mode}` was requested", self.mode.unwrap()),
                ));
            }
            self.mode = Some(mode);
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
        if let Some(n) = o.n_steps {
            self.n_steps = n;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        Ok(())
    }

    pub fn mode(&self) -> Result<Mode> {
        self.mode.ok_or_else(|| CliError::config("mode", "no experiment mode given"))
    }

    pub fn chain_spec(&self) -> ChainSpec {
        self.chain.spec()
    }

    pub fn n_free(&self) -> usize {
        self.schedule.params.len()
    }

    /// The configured schedule with its own parameters.
    pub fn schedule(&self) -> Result<ControlSchedule> {
        self.schedule_at(self.schedule.duration, &self.schedule.params)
    }

    pub fn schedule_at(&self, duration: f64, params: &[f64]) -> Result<ControlSchedule> {
        Ok(ControlSchedule::new(self.schedule.kind, duration, params.to_vec(), self.process)?)
    }

    pub fn objective_spec(&self, duration: f64) -> ObjectiveSpec {
        let chain = self.chain_spec();
        let n = self.n_free();
        let spec = match self.schedule.kind {
            ScheduleKind::PolynomialCut => ObjectiveSpec::polynomial_cut(chain, duration, n),
            ScheduleKind::SineCut => ObjectiveSpec::sine_cut(chain, duration, n),
            ScheduleKind::PolynomialStitch => ObjectiveSpec::polynomial_stitch(chain, duration, n),
            ScheduleKind::Pulse => {
                let mut s = ObjectiveSpec::pulse_cut(chain, duration, n);
                s.direction = self.process;
                s.target = spincut_core::Target::default_for(self.process);
                s
            }
        };
        spec.with_steps(self.n_steps)
    }

    pub fn objective(&self, duration: f64) -> Result<Objective> {
        Ok(Objective::new(self.objective_spec(duration))?)
    }

    /// Checks every value the chosen mode will use.
    pub fn validate(&self) -> Result<()> {
        let mode = self.mode()?;
        let c = &self.chain;
        if c.n_spins < 2 {
            return Err(CliError::config("chain.n_spins", format!("need at least 2 spins, got {}", c.n_spins)));
        }
        if c.cut_bonds.as_ref().is_some_and(|b| b.is_empty()) {
            return Err(CliError::config("chain.cut_bonds", "the cut set is empty"));
        }
        let spec = self.chain_spec();
        spec.validate().map_err(|e| prefixed("chain", e))?;
        spec.subsystem_a().map_err(|e| prefixed("chain", e))?;
        if self.n_steps < 1 {
            return Err(CliError::config("n_steps", "need at least one time step"));
        }
        check_duration("schedule.T", self.schedule.duration)?;
        if let Some(bad) = self.schedule.params.iter().find(|p| !p.is_finite()) {
            return Err(CliError::config("schedule.params", format!("non-finite parameter {bad}")));
        }
        ControlSchedule::new(self.schedule.kind, self.schedule.duration, self.schedule.params.clone(), self.process)
            .map_err(|e| prefixed("schedule", e))?;
        let needs_free = matches!(mode, Mode::Optimize | Mode::Landscape)
            || (mode == Mode::Sweep && self.sweep.as_ref().is_some_and(|s| s.optimize))
            || (mode == Mode::Noise && self.noise.as_ref().is_some_and(|n| n.optimize));
        if needs_free && self.n_free() == 0 {
            return Err(CliError::config("schedule.params", "optimization needs at least one free parameter (the starting point)"));
        }
        if let Some(m) = self.optimizer.multistart {
            if m.per_axis == 0 || !(m.hi >= m.lo) {
                return Err(CliError::config("optimizer.multistart", "need per_axis ≥ 1 and lo ≤ hi"));
            }
        }
        if !(self.optimizer.grad_step > 0.0) {
            return Err(CliError::config("optimizer.grad_step", "must be positive"));
        }
        if !(self.optimizer.tolerance > 0.0) {
            return Err(CliError::config("optimizer.tolerance", "must be positive"));
        }
        match mode {
            Mode::Evolve | Mode::Optimize => {}
            Mode::Sweep => {
                let sweep = self.sweep.as_ref().ok_or_else(|| CliError::config("sweep", "sweep mode needs a [sweep] table"))?;
                if sweep.durations.is_empty() {
                    return Err(CliError::config("sweep.T", "the sweep list is empty"));
                }
                for &t in &sweep.durations {
                    check_duration("sweep.T", t)?;
                }
            }
            Mode::Landscape => {
                let l = self
                    .landscape
                    .as_ref()
                    .ok_or_else(|| CliError::config("landscape", "landscape mode needs a [landscape] table"))?;
                for (name, axis) in [("landscape.p1", &l.p1), ("landscape.p2", &l.p2)] {
                    if axis.index >= self.n_free() {
                        return Err(CliError::config(
                            format!("{name}.index"),
                            format!("parameter {} does not exist; the schedule has {} free parameters", axis.index, self.n_free()),
                        ));
                    }
                    if axis.resolution < 2 {
                        return Err(CliError::config(format!("{name}.resolution"), "need at least 2 points per axis"));
                    }
                    if !(axis.max > axis.min) || !axis.min.is_finite() || !axis.max.is_finite() {
                        return Err(CliError::config(format!("{name}.min"), format!("invalid range [{}, {}]", axis.min, axis.max)));
                    }
                }
                if l.p1.index == l.p2.index {
                    return Err(CliError::config("landscape.p2.index", "both axes vary the same parameter"));
                }
            }
            Mode::Noise => {
                let n = self.noise.as_ref().ok_or_else(|| CliError::config("noise", "noise mode needs a [noise] table"))?;
                if n.realizations < 2 {
                    return Err(CliError::config("noise.realizations", format!("need M ≥ 2, got {}", n.realizations)));
                }
                if n.dg.is_empty() {
                    return Err(CliError::config("noise.dg", "the strength list is empty"));
                }
                if let Some(bad) = n.dg.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
                    return Err(CliError::config("noise.dg", format!("strength {bad} must be finite and non-negative")));
                }
                let widths = n.widths(self.schedule.duration);
                if widths.is_empty() {
                    return Err(CliError::config("noise.dt", "the width list is empty"));
                }
                for w in widths {
                    check_duration("noise.dt", w)?;
                }
            }
            Mode::TwoSpin => {
                if self.process != Direction::Cut {
                    return Err(CliError::config("process", "the two-spin experiment is a cut"));
                }
                if self.schedule.kind != ScheduleKind::Pulse {
                    return Err(CliError::config("schedule.kind", "the two-spin experiment uses a pulse schedule"));
                }
                let a = spec.subsystem_a().map_err(|e| prefixed("chain", e))?;
                if a != [1, 2] {
                    return Err(CliError::config(
                        "chain.cut_bonds",
                        format!("cut bonds must detach sites {{1, 2}}, they detach {a:?}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_duration(field: &str, t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(CliError::config(field, format!("duration must be positive and finite, got {t}")));
    }
    Ok(())
}

fn prefixed(section: &str, e: spincut_core::Error) -> CliError {
    match e {
        spincut_core::Error::Argument { field, reason } => CliError::config(format!("{section}.{field}"), reason),
        other => CliError::from(other),
    }
}

/// Best-effort extraction of the offending key from a TOML parse error.
fn parse_error_field(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"
mode = "sweep"
[chain]
n_spins = 6
topology = "ring"
field = 2.0
[schedule]
kind = "polynomial_cut"
T = 0.6
params = [0.0, 0.0]
[sweep]
T = [0.3, 0.6]
"#;

    fn field_of(e: CliError) -> String {
        match e {
            CliError::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    fn with(edit: impl Fn(&mut RunConfig)) -> RunConfig {
        let mut c = RunConfig::from_toml_str(SWEEP).unwrap();
        edit(&mut c);
        c
    }

    #[test]
    fn parses_and_defaults() {
        let c = RunConfig::from_toml_str(SWEEP).unwrap();
        c.validate().unwrap();
        assert_eq!(c.n_steps, 300);
        assert_eq!(c.chain.exchange, 1.0);
        assert_eq!(c.chain_spec().cut_bonds, vec![Bond::new(1, 2), Bond::new(1, 6)]);
        assert_eq!(c.process, Direction::Cut);
    }

    #[test]
    fn rejections_name_the_field() {
        let cases: Vec<(RunConfig, &str)> = vec![
            (with(|c| c.chain.n_spins = 1), "chain.n_spins"),
            (with(|c| c.schedule.duration = 0.0), "schedule.T"),
            (with(|c| c.n_steps = 0), "n_steps"),
            (with(|c| c.chain.cut_bonds = Some(vec![])), "chain.cut_bonds"),
            (with(|c| c.chain.cut_bonds = Some(vec![[1, 3]])), "chain.cut_bonds"),
            (with(|c| c.sweep.as_mut().unwrap().durations = vec![]), "sweep.T"),
            (with(|c| c.sweep.as_mut().unwrap().durations = vec![0.3, -1.0]), "sweep.T"),
            (
                with(|c| {
                    c.mode = Some(Mode::Landscape);
                    c.landscape = Some(LandscapeConfig {
                        p1: LandscapeAxis::new(0, -1.0, 1.0, 5),
                        p2: LandscapeAxis::new(2, -1.0, 1.0, 5),
                        mark_optimum: false,
                    });
                }),
                "landscape.p2.index",
            ),
            (
                with(|c| {
                    c.mode = Some(Mode::Noise);
                    c.noise = Some(NoiseConfig { dg: vec![1.0], dt: None, realizations: 1, optimize: false });
                }),
                "noise.realizations",
            ),
        ];
        for (config, field) in cases {
            assert_eq!(field_of(config.validate().unwrap_err()), field);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SWEEP.replace("field = 2.0", "field = 2.0\nfeild = 1.0");
        assert!(matches!(RunConfig::from_toml_str(&text), Err(CliError::Config { .. })));
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::from_toml_str(SWEEP).unwrap();
        c.apply(&Overrides { n_steps: Some(50), seed: Some(9), output: Some("elsewhere".into()), mode: None }).unwrap();
        assert_eq!((c.n_steps, c.seed), (50, 9));
        assert_eq!(c.output, PathBuf::from("elsewhere"));
        let clash = Overrides { mode: Some(Mode::Evolve), ..Overrides::default() };
        assert_eq!(field_of(c.apply(&clash).unwrap_err()), "mode");
    }

    #[test]
    fn two_spin_requires_two_site_block() {
        let text = r#"
mode = "two-spin"
[chain]
n_spins = 5
topology = "open"
field = 2.1
cut_bonds = [[2, 3]]
[schedule]
kind = "pulse"
T = 0.6
params = [-5.4, 4.1]
"#;
        let c = RunConfig::from_toml_str(text).unwrap();
        c.validate().unwrap();
        let mut bad = c.clone();
        bad.chain.cut_bonds = Some(vec![[3, 4]]);
        assert_eq!(field_of(bad.validate().unwrap_err()), "chain.cut_bonds");
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::from_toml_str(SWEEP).unwrap();
        let json = serde_json::to_value(&c).unwrap();
        let back: RunConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
    }
}
