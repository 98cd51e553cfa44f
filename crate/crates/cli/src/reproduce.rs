//! Built-in scenarios that regenerate each table and figure of the study.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use spincut_core::{Direction, LandscapeAxis, ScheduleKind, Topology};

use crate::config::{ChainConfig, LandscapeConfig, Mode, NoiseConfig, RunConfig, ScheduleConfig, SweepConfig};
use crate::error::{CliError, Result};
use crate::manifest::OutputDir;
use crate::pipeline::{self, baseline, shape_csv, sweep_csv, RunOutput};
use crate::plot;

pub const TARGETS: [&str; 7] = ["table1", "fig3", "fig6", "fig7", "fig8", "fig9", "stitch"];

/// Durations and published optimal `(a2, a3)` of the ring cut table.
pub const TABLE1: [(f64, [f64; 2]); 4] =
    [(0.3, [122.8, -82.0]), (0.6, [54.3, -36.3]), (0.9, [20.0, -13.5]), (2.0, [0.87, -0.72])];

#[derive(Clone, Debug, Serialize)]
struct ReproduceConfig<'a> {
    target: &'a str,
    n_steps: usize,
    seed: u64,
}

pub fn chain(n_spins: usize, topology: Topology, field: f64) -> ChainConfig {
    ChainConfig::new(n_spins, topology, field)
}

/// Polynomial cut with two free coefficients started at the linear ramp.
pub fn polynomial_cut(mode: Mode, chain: ChainConfig, duration: f64) -> RunConfig {
    let schedule = ScheduleConfig { kind: ScheduleKind::PolynomialCut, duration, params: vec![0.0, 0.0] };
    RunConfig::new(mode, chain, Direction::Cut, schedule)
}

pub fn polynomial_stitch(mode: Mode, chain: ChainConfig, duration: f64) -> RunConfig {
    let schedule = ScheduleConfig { kind: ScheduleKind::PolynomialStitch, duration, params: vec![0.0, 0.0] };
    RunConfig::new(mode, chain, Direction::Stitch, schedule)
}

/// Pulse amplitudes equal to the linear ramp at each pulse midpoint.
pub fn linear_pulse_start(k: usize) -> Vec<f64> {
    (1..=k).map(|n| 1.0 - (n as f64 - 0.5) / k as f64).collect()
}

pub fn reproduce(target: &str, root: &Path, n_steps: usize, seed: u64) -> Result<RunOutput> {
    if !TARGETS.contains(&target) {
        return Err(CliError::config("target", format!("unknown target `{target}`; expected one of {TARGETS:?}")));
    }
    if n_steps < 1 {
        return Err(CliError::config("n_steps", "need at least one time step"));
    }
    let dir = root.join(target);
    let mut out = OutputDir::prepare(&dir, format!("reproduce {target}"), &ReproduceConfig { target, n_steps, seed })?;
    let summary = match target {
        "table1" => table1(&mut out, n_steps)?,
        "fig3" => fig3(&mut out, n_steps)?,
        "fig6" => fig6(&mut out, n_steps)?,
        "fig7" => fig7(&mut out, n_steps, seed)?,
        "fig8" => fig8(&mut out, n_steps)?,
        "fig9" => fig9(&mut out, n_steps)?,
        "stitch" => stitch(&mut out, n_steps)?,
        _ => unreachable!(),
    };
    let manifest = out.finish()?;
    Ok(RunOutput { dir, summary, manifest })
}

fn table1(out: &mut OutputDir, n_steps: usize) -> Result<Vec<String>> {
    let mut csv = String::from("T,f_c0,f_c_published,a2_published,a3_published,f_c_opt,a2_opt,a3_opt,status\n");
    let mut summary = Vec::new();
    let mut shapes = Vec::new();
    for (t, published) in TABLE1 {
        let mut config = polynomial_cut(Mode::Optimize, chain(6, Topology::Ring, 2.0), t);
        config.n_steps = n_steps;
        let objective = config.objective(t)?;
        let f0 = baseline(&objective)?;
        let f_pub = objective.evaluate(&published)?;
        let report = config.optimizer.maximize(&objective, &[0.0, 0.0])?;
        let p = &report.final_params;
        writeln!(
            csv,
            "{t},{f0},{f_pub},{},{},{},{},{},{}",
            published[0],
            published[1],
            report.final_value,
            p[0],
            p[1],
            format!("{:?}", report.status).to_lowercase()
        )
        .unwrap();
        summary.push(format!(
            "T = {t}: f_C0 = {f0:.3}, f_C(published) = {f_pub:.3}, f_C(optimized) = {:.3} at ({:.2}, {:.2})",
            report.final_value, p[0], p[1]
        ));
        let name = format!("shape_T{t}.csv");
        out.write(&name, shape_csv(&config.schedule_at(t, p)?, 600))?;
        shapes.push(name);
    }
    out.write("table1.csv", csv)?;
    let refs: Vec<&str> = shapes.iter().map(String::as_str).collect();
    out.write("shapes.gp", plot::shapes(&refs, "shapes.png", "optimized polynomial cuts, N=6 ring"))?;
    Ok(summary)
}

const FIG3_T: [f64; 7] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.5, 2.0];

fn fig3(out: &mut OutputDir, n_steps: usize) -> Result<Vec<String>> {
    let mut summary = Vec::new();
    for (label, n, topology) in
        [("ring6", 6, Topology::Ring), ("ring7", 7, Topology::Ring), ("open6", 6, Topology::Open), ("open7", 7, Topology::Open)]
    {
        for (suffix, kind) in [("", ScheduleKind::PolynomialCut), ("_sine", ScheduleKind::SineCut)] {
            if kind == ScheduleKind::SineCut && topology == Topology::Open {
                continue;
            }
            let mut config = polynomial_cut(Mode::Sweep, chain(n, topology, 2.0), 1.0);
            config.schedule.kind = kind;
            config.n_steps = n_steps;
            config.sweep = Some(SweepConfig { durations: FIG3_T.to_vec(), optimize: true });
            let rows = pipeline::sweep(&config)?;
            let name = format!("{label}{suffix}");
            out.write(&format!("{name}.csv"), sweep_csv(&rows, 2))?;
            out.write(&format!("{name}.gp"), plot::sweep(&format!("{name}.csv"), &format!("{name}.png"), &name, "f_C"))?;
            for r in rows {
                summary.push(format!("{name} T = {}: f_C0 = {:.4}, f_C = {:.4}", r.duration, r.baseline, r.optimized.unwrap()));
            }
        }
    }
    Ok(summary)
}

fn fig6(out: &mut OutputDir, n_steps: usize) -> Result<Vec<String>> {
    let mut config = polynomial_cut(Mode::Evolve, chain(6, Topology::Ring, 2.0), 0.6);
    config.n_steps = n_steps;
    let report = config.optimizer.maximize(&config.objective(0.6)?, &[0.0, 0.0])?;
    let linear = pipeline::evolve(&config)?;
    config.schedule.params = report.final_params.clone();
    let tuned = pipeline::evolve(&config)?;
    out.write("linear.csv", linear.record.to_csv_string())?;
    out.write("optimized.csv", tuned.record.to_csv_string())?;
    out.write(
        "trajectories.gp",
        plot::trajectory(&["linear.csv", "optimized.csv"], "trajectories.png", "linear and optimized cut, N=6 ring, T=0.6"),
    )?;
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(vec![
        format!("linear: final f_C = {:.4}, min f_g = {:.4}", linear.f_c, min(&linear.record.f_g)),
        format!(
            "optimized {:?}: final f_C = {:.4}, min f_g = {:.4}",
            report.final_params,
            tuned.f_c,
            min(&tuned.record.f_g)
        ),
    ])
}

pub const FIG7_DG: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0];

fn fig7(out: &mut OutputDir, n_steps: usize, seed: u64) -> Result<Vec<String>> {
    let mut config = polynomial_cut(Mode::Noise, chain(6, Topology::Open, 2.0), 0.6);
    config.n_steps = n_steps;
    config.seed = seed;
    config.noise = Some(NoiseConfig { dg: FIG7_DG.to_vec(), dt: None, realizations: 50, optimize: true });
    let result = pipeline::noise(&config)?;
    out.record_seeds(result.seeds.iter().copied());
    out.write("noise.csv", pipeline::noise_csv(&result.rows))?;
    out.write("noise.gp", plot::noise("noise.csv", "noise.png", "noise robustness, N=6 open chain, T=0.6"))?;
    let mut summary = vec![format!("noiseless f_C = {:.4} at {:?}", result.noiseless, result.params)];
    summary.extend(result.rows.iter().map(|r| format!("dg = {}, dt = {:.3}: {:.4} ± {:.4}", r.dg, r.dt, r.mean, r.std)));
    Ok(summary)
}

fn fig8(out: &mut OutputDir, n_steps: usize) -> Result<Vec<String>> {
    let mut summary = Vec::new();
    let panels = [
        ("polynomial", ScheduleKind::PolynomialCut, LandscapeAxis::new(0, -40.0, 120.0, 41), LandscapeAxis::new(1, -100.0, 20.0, 41)),
        ("sine", ScheduleKind::SineCut, LandscapeAxis::new(0, -3.0, 3.0, 41), LandscapeAxis::new(1, -3.0, 3.0, 41)),
    ];
    for (name, kind, p1, p2) in panels {
        let mut config = polynomial_cut(Mode::Landscape, chain(6, Topology::Ring, 2.0), 0.6);
        config.schedule.kind = kind;
        config.n_steps = n_steps;
        config.landscape = Some(LandscapeConfig { p1, p2, mark_optimum: true });
        let result = pipeline::landscape(&config)?;
        let mut csv = Vec::new();
        result.grid.write_csv(&mut csv).map_err(|e| CliError::io(out.root().join(name), e))?;
        out.write(&format!("{name}.csv"), csv)?;
        let report = result.optimum.expect("optimum requested");
        let p = &report.final_params;
        out.write(&format!("{name}_optimum.csv"), format!("p1,p2,fidelity\n{},{},{}\n", p[0], p[1], report.final_value))?;
        out.write(
            &format!("{name}.gp"),
            plot::landscape(&format!("{name}.csv"), Some(&format!("{name}_optimum.csv")), &format!("{name}.png"), name),
        )?;
        let (i, j, v) = result.grid.argmax();
        summary.push(format!(
            "{name}: grid max {v:.4} at ({}, {}); optimizer {:.4} at ({:.3}, {:.3})",
            result.grid.first.coordinate(i),
            result.grid.second.coordinate(j),
            report.final_value,
            p[0],
            p[1]
        ));
    }
    Ok(summary)
}

fn fig9(out: &mut OutputDir, n_steps: usize) -> Result<Vec<String>> {
    let mut csv = String::from("K,T,f_c0,f_c,status,params\n");
    let mut summary = Vec::new();
    let mut shapes = Vec::new();
    for k in [2usize, 9] {
        for t in [0.3, 0.6, 0.9] {
            let schedule = ScheduleConfig { kind: ScheduleKind::Pulse, duration: t, params: linear_pulse_start(k) };
            let mut config = RunConfig::new(Mode::Optimize, chain(6, Topology::Ring, 2.0), Direction::Cut, schedule);
            config.n_steps = n_steps;
            let objective = config.objective(t)?;
            let f0 = baseline(&objective)?;
            let report = config.optimizer.maximize(&objective, &config.schedule.params)?;
            let params: Vec<String> = report.final_params.iter().map(|p| p.to_string()).collect();
            writeln!(
                csv,
                "{k},{t},{f0},{},{},{}",
                report.final_value,
                format!("{:?}", report.status).to_lowercase(),
                params.join(";")
            )
            .unwrap();
            let name = format!("pulses_K{k}_T{t}.csv");
            out.write(&name, shape_csv(&config.schedule_at(t, &report.final_params)?, 600))?;
            shapes.push(name);
            summary.push(format!("K = {k}, T = {t}: f_C0 = {f0:.4}, f_C = {:.4}", report.final_value));
        }
    }
    out.write("pulses.csv", csv)?;
    let refs: Vec<&str> = shapes.iter().map(String::as_str).collect();
    out.write("pulses.gp", plot::shapes(&refs, "pulses.png", "optimized pulse trains, N=6 ring"))?;
    Ok(summary)
}

pub const STITCH_T: [f64; 4] = [0.3, 0.6, 1.0, 2.0];

fn stitch(out: &mut OutputDir, n_steps: usize) -> Result<Vec<String>> {
    let mut summary = Vec::new();
    for (name, n, field) in [("ring6_B2", 6, 2.0), ("ring7_B2.2", 7, 2.2)] {
        let mut config = polynomial_stitch(Mode::Sweep, chain(n, Topology::Ring, field), 1.0);
        config.n_steps = n_steps;
        config.sweep = Some(SweepConfig { durations: STITCH_T.to_vec(), optimize: true });
        let rows = pipeline::sweep(&config)?;
        out.write(&format!("{name}.csv"), sweep_csv(&rows, 2))?;
        out.write(&format!("{name}.gp"), plot::sweep(&format!("{name}.csv"), &format!("{name}.png"), name, "f_G"))?;
        for r in rows {
            summary.push(format!("{name} T = {}: f_G0 = {:.4}, f_G = {:.4}", r.duration, r.baseline, r.optimized.unwrap()));
        }
    }
    Ok(summary)
}
