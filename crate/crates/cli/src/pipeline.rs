//! Experiment pipelines. Each mode has a pure computation (`evolve`,
//! `sweep`, …) returning typed results and a `run_*` wrapper that validates
//! the config, prepares the output directory, and writes CSV, gnuplot
//! script and manifest.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use spincut_core::{
    apply_noise, linear_baseline, scan_landscape, BfgsStatus, ControlSchedule, LandscapeGrid, NoiseSpec, Objective,
    OptimizationReport, Outcome, Sampling, Target, TrajectoryRecord,
};

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::{OutputDir, RunManifest};
use crate::plot;

/// What a finished run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// Human-readable result lines for standard output.
    pub summary: Vec<String>,
    pub manifest: RunManifest,
}

pub fn fidelity(target: Target, out: &Outcome) -> f64 {
    match target {
        Target::CutFidelity => out.f_c,
        Target::GroundFidelity => out.f_g,
    }
}

/// `t,g` at `samples + 1` uniform times.
pub fn shape_csv(schedule: &ControlSchedule, samples: usize) -> String {
    use spincut_core::Control;
    let total = schedule.duration();
    let mut s = String::from("t,g\n");
    for k in 0..=samples {
        let t = total * k as f64 / samples as f64;
        // sample the closed end from the left so pulse shapes keep their last level
        let g = if k == samples { schedule.value(total * (1.0 - 1e-12)) } else { schedule.value(t) };
        writeln!(s, "{t},{g}").unwrap();
    }
    s
}

fn prepare(config: &RunConfig, mode: Mode) -> Result<OutputDir> {
    if config.mode()? != mode {
        return Err(CliError::config("mode", format!("expected a `{mode}` config, got `{}`", config.mode()?)));
    }
    config.validate()?;
    OutputDir::prepare(&config.output, mode.to_string(), config)
}

fn finish(out: OutputDir, summary: Vec<String>) -> Result<RunOutput> {
    let dir = out.root().to_path_buf();
    let manifest = out.finish()?;
    Ok(RunOutput { dir, summary, manifest })
}

// ---------------------------------------------------------------- evolve

#[derive(Debug)]
pub struct EvolveResult {
    pub f_c: f64,
    pub f_g: f64,
    pub record: TrajectoryRecord,
}

pub fn evolve(config: &RunConfig) -> Result<EvolveResult> {
    let objective = config.objective(config.schedule.duration)?;
    let schedule = config.schedule()?;
    let (out, record) = objective.process().trajectory(&schedule, config.n_steps, Sampling::Every(1))?;
    Ok(EvolveResult { f_c: out.f_c, f_g: out.f_g, record })
}

pub fn run_evolve(config: &RunConfig) -> Result<RunOutput> {
    let mut out = prepare(config, Mode::Evolve)?;
    let result = evolve(config)?;
    out.write("trajectory.csv", result.record.to_csv_string())?;
    out.write("schedule.csv", shape_csv(&config.schedule()?, 600))?;
    out.write("trajectory.gp", plot::trajectory(&["trajectory.csv"], "trajectory.png", "fidelities along the process"))?;
    let summary = vec![format!("f_C = {:.6}", result.f_c), format!("f_G = {:.6}", result.f_g)];
    finish(out, summary)
}

// -------------------------------------------------------------- optimize

pub fn optimize(config: &RunConfig) -> Result<OptimizationReport> {
    let objective = config.objective(config.schedule.duration)?;
    config.optimizer.maximize(&objective, &config.schedule.params)
}

pub fn run_optimize(config: &RunConfig) -> Result<RunOutput> {
    let mut out = prepare(config, Mode::Optimize)?;
    let report = optimize(config)?;
    out.write_json("optimization.json", &report)?;
    let best = config.schedule_at(config.schedule.duration, &report.final_params)?;
    out.write("schedule.csv", shape_csv(&best, 600))?;
    out.write("schedule.gp", plot::shapes(&["schedule.csv"], "schedule.png", "optimized control"))?;
    let summary = vec![
        format!("initial = {:.6}", report.initial_value),
        format!("final = {:.6}", report.final_value),
        format!("params = {:?}", report.final_params),
        format!("status = {:?} after {} iterations", report.status, report.iterations),
    ];
    finish(out, summary)
}

// ----------------------------------------------------------------- sweep

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub duration: f64,
    pub baseline: f64,
    pub optimized: Option<f64>,
    pub status: Option<BfgsStatus>,
    pub params: Vec<f64>,
}

pub fn baseline(objective: &Objective) -> Result<f64> {
    let spec = objective.spec();
    let linear = linear_baseline(spec.duration, spec.direction)?;
    Ok(fidelity(spec.target, &objective.process().run(&linear, spec.n_steps)?))
}

pub fn sweep(config: &RunConfig) -> Result<Vec<SweepRow>> {
    let sweep = config.sweep.as_ref().ok_or_else(|| CliError::config("sweep", "missing [sweep] table"))?;
    let mut rows = Vec::with_capacity(sweep.durations.len());
    for &t in &sweep.durations {
        let objective = config.objective(t)?;
        let base = baseline(&objective)?;
        let row = if sweep.optimize {
            let report = config.optimizer.maximize(&objective, &config.schedule.params)?;
            SweepRow {
                duration: t,
                baseline: base,
                optimized: Some(report.final_value),
                status: Some(report.status),
                params: report.final_params,
            }
        } else {
            SweepRow { duration: t, baseline: base, optimized: None, status: None, params: Vec::new() }
        };
        rows.push(row);
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow], n_free: usize) -> String {
    let mut s = String::from("T,f_baseline,f_opt,status");
    for k in 1..=n_free {
        write!(s, ",p{k}").unwrap();
    }
    s.push('\n');
    for r in rows {
        let opt = r.optimized.map(|v| v.to_string()).unwrap_or_default();
        let status = r.status.map(|st| format!("{st:?}").to_lowercase()).unwrap_or_default();
        write!(s, "{},{},{opt},{status}", r.duration, r.baseline).unwrap();
        for k in 0..n_free {
            s.push(',');
            if let Some(p) = r.params.get(k) {
                write!(s, "{p}").unwrap();
            }
        }
        s.push('\n');
    }
    s
}

pub fn run_sweep(config: &RunConfig) -> Result<RunOutput> {
    let mut out = prepare(config, Mode::Sweep)?;
    let rows = sweep(config)?;
    out.write("sweep.csv", sweep_csv(&rows, config.n_free()))?;
    let ylabel = if config.process == spincut_core::Direction::Cut { "f_C" } else { "f_G" };
    out.write("sweep.gp", plot::sweep("sweep.csv", "sweep.png", "fidelity against process time", ylabel))?;
    let summary = rows
        .iter()
        .map(|r| match r.optimized {
            Some(v) => format!("T = {}: baseline {:.4}, optimized {:.4} {:?}", r.duration, r.baseline, v, r.params),
            None => format!("T = {}: baseline {:.4}", r.duration, r.baseline),
        })
        .collect();
    finish(out, summary)
}

// ------------------------------------------------------------- landscape

#[derive(Debug)]
pub struct LandscapeResult {
    pub grid: LandscapeGrid,
    pub optimum: Option<OptimizationReport>,
}

pub fn landscape(config: &RunConfig) -> Result<LandscapeResult> {
    let l = config.landscape.ok_or_else(|| CliError::config("landscape", "missing [landscape] table"))?;
    let objective = config.objective(config.schedule.duration)?;
    let optimum =
        if l.mark_optimum { Some(config.optimizer.maximize(&objective, &config.schedule.params)?) } else { None };
    let f = |x: &[f64]| objective.evaluate(x);
    let grid = scan_landscape(&f, &config.schedule.params, l.p1, l.p2)?;
    Ok(LandscapeResult { grid, optimum })
}

pub fn run_landscape(config: &RunConfig) -> Result<RunOutput> {
    let mut out = prepare(config, Mode::Landscape)?;
    let result = landscape(config)?;
    let mut csv = Vec::new();
    result.grid.write_csv(&mut csv).map_err(|e| CliError::io(out.root().join("landscape.csv"), e))?;
    out.write("landscape.csv", csv)?;
    let (i, j, v) = result.grid.argmax();
    let mut summary = vec![format!(
        "grid maximum {:.6} at ({}, {})",
        v,
        result.grid.first.coordinate(i),
        result.grid.second.coordinate(j)
    )];
    if let Some(report) = &result.optimum {
        let (a, b) = (report.final_params[result.grid.first.index], report.final_params[result.grid.second.index]);
        out.write("optimum.csv", format!("p1,p2,fidelity\n{a},{b},{}\n", report.final_value))?;
        out.write_json("optimization.json", report)?;
        summary.push(format!("optimizer {:.6} at ({a}, {b})", report.final_value));
    }
    let marker = result.optimum.as_ref().map(|_| "optimum.csv");
    out.write("landscape.gp", plot::landscape("landscape.csv", marker, "landscape.png", "fidelity landscape"))?;
    finish(out, summary)
}

// ----------------------------------------------------------------- noise

#[derive(Clone, Debug, Serialize)]
pub struct NoiseRow {
    pub dg: f64,
    pub dt: f64,
    pub mean: f64,
    pub std: f64,
    pub realizations: usize,
}

impl NoiseRow {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.realizations as f64).sqrt()
    }
}

#[derive(Debug)]
pub struct NoiseResult {
    /// Schedule parameters the noise was added to.
    pub params: Vec<f64>,
    pub noiseless: f64,
    pub seeds: Vec<u64>,
    pub rows: Vec<NoiseRow>,
}

/// Realization seeds derived from the master seed. The same seeds are used
/// for every strength and width, so the ensembles differ only in scale and
/// window size.
pub fn noise_seeds(master: u64, realizations: usize) -> Vec<u64> {
    (0..realizations as u64).map(|m| master.wrapping_add(m)).collect()
}

pub fn noise(config: &RunConfig) -> Result<NoiseResult> {
    let n = config.noise.as_ref().ok_or_else(|| CliError::config("noise", "missing [noise] table"))?;
    let duration = config.schedule.duration;
    let objective = config.objective(duration)?;
    let params = if n.optimize {
        config.optimizer.maximize(&objective, &config.schedule.params)?.final_params
    } else {
        config.schedule.params.clone()
    };
    let base = config.schedule_at(duration, &params)?;
    let target = objective.spec().target;
    let process = objective.process();
    let noiseless = fidelity(target, &process.run(&base, config.n_steps)?);
    let seeds = noise_seeds(config.seed, n.realizations);
    let mut rows = Vec::new();
    for dt in n.widths(duration) {
        for &dg in &n.dg {
            let values = seeds
                .par_iter()
                .map(|&seed| {
                    let noisy = apply_noise(&base, &NoiseSpec { dt, dg, seed })?;
                    Ok(fidelity(target, &process.run(&noisy, config.n_steps)?))
                })
                .collect::<Result<Vec<f64>>>()?;
            let m = values.len() as f64;
            // shifted by the first value: exact when all realizations agree
            let shift = values[0];
            let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / m;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            rows.push(NoiseRow { dg, dt, mean, std: var.sqrt(), realizations: values.len() });
        }
    }
    Ok(NoiseResult { params, noiseless, seeds, rows })
}

pub fn noise_csv(rows: &[NoiseRow]) -> String {
    let mut s = String::from("dg,dt,mean_fc,std_fc,M\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.dg, r.dt, r.mean, r.std, r.realizations).unwrap();
    }
    s
}

pub fn run_noise(config: &RunConfig) -> Result<RunOutput> {
    let mut out = prepare(config, Mode::Noise)?;
    let result = noise(config)?;
    out.record_seeds(result.seeds.iter().copied());
    out.write("noise.csv", noise_csv(&result.rows))?;
    out.write("noise.gp", plot::noise("noise.csv", "noise.png", "fidelity under control noise"))?;
    let mut summary = vec![format!("noiseless = {:.6} at params {:?}", result.noiseless, result.params)];
    summary.extend(
        result
            .rows
            .iter()
            .map(|r| format!("dg = {}, dt = {:.4}: {:.4} ± {:.4}", r.dg, r.dt, r.mean, r.std)),
    );
    finish(out, summary)
}

// -------------------------------------------------------------- two-spin

#[derive(Clone, Debug, Serialize)]
pub struct TwoSpinResult {
    pub baseline_fc: f64,
    pub baseline_fg: f64,
    pub pulse_fc: f64,
    pub pulse_fg: f64,
}

pub fn two_spin(config: &RunConfig) -> Result<TwoSpinResult> {
    let objective = config.objective(config.schedule.duration)?;
    let process = objective.process();
    let linear = process.run(&linear_baseline(config.schedule.duration, config.process)?, config.n_steps)?;
    let pulse = process.run(&config.schedule()?, config.n_steps)?;
    Ok(TwoSpinResult { baseline_fc: linear.f_c, baseline_fg: linear.f_g, pulse_fc: pulse.f_c, pulse_fg: pulse.f_g })
}

pub fn run_two_spin(config: &RunConfig) -> Result<RunOutput> {
    let mut out = prepare(config, Mode::TwoSpin)?;
    let r = two_spin(config)?;
    out.write(
        "two_spin.csv",
        format!("schedule,f_c,f_g\nlinear,{},{}\npulse,{},{}\n", r.baseline_fc, r.baseline_fg, r.pulse_fc, r.pulse_fg),
    )?;
    let summary = vec![
        format!("linear: f_C = {:.4}, f_G = {:.4}", r.baseline_fc, r.baseline_fg),
        format!("pulse {:?}: f_C = {:.4}, f_G = {:.4}", config.schedule.params, r.pulse_fc, r.pulse_fg),
    ];
    finish(out, summary)
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    match config.mode()? {
        Mode::Evolve => run_evolve(config),
        Mode::Optimize => run_optimize(config),
        Mode::Sweep => run_sweep(config),
        Mode::Landscape => run_landscape(config),
        Mode::Noise => run_noise(config),
        Mode::TwoSpin => run_two_spin(config),
    }
}
