use serde::Serialize;
use snls_core::diagnostics::{
    aldous_statistic, dual_distance, ensemble_moments, AldousRow, EnsembleSummary, StoppingRule,
};
use snls_core::ensemble::{map_trajectories_with_threads, trajectory_seed};
use snls_core::noise::sample_prm;
use snls_core::solver::{Closure, GalerkinProblem, IntegratorMode, Stepper, TrajectoryRecord};
use snls_core::SnlsError;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{fmt_f64, OutputDir};

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub index: usize,
    pub seed: u64,
    pub events: usize,
    pub max_relative_mass_drift: f64,
    pub final_mass: f64,
    pub final_energy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: u32,
    pub dimension: usize,
    pub mode: IntegratorMode,
    pub closure: Closure,
    pub variance_budget: f64,
    pub jump_intensity: f64,
    pub b_h: f64,
    pub b_ea: f64,
    pub b_lp: f64,
    pub trajectories: Vec<TrajectorySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub master_seed: u64,
    pub levels: Vec<LevelSummary>,
}

fn prepare(config: &RunConfig) -> Result<OutputDir, CliError> {
    config.validate()?;
    OutputDir::create(&config.run.out, &config.hash()?)
}

fn level_header(problem: &GalerkinProblem, config: &RunConfig) -> LevelSummary {
    let noise = problem.noise();
    LevelSummary {
        level: problem.level().n,
        dimension: problem.level().dim,
        mode: config.solver.mode,
        closure: config.solver.closure,
        variance_budget: problem.moments().variance_budget,
        jump_intensity: problem.moments().jump_intensity,
        b_h: noise.b_h(),
        b_ea: noise.b_ea(),
        b_lp: noise.b_lp(),
        trajectories: Vec::new(),
        ensemble: None,
    }
}

fn run_level(config: &RunConfig, problem: &GalerkinProblem) -> Result<Vec<TrajectoryRecord>, CliError> {
    let stepper = Stepper::new(problem, config.solver)?;
    let run = &config.run;
    Ok(map_trajectories_with_threads(run.trajectories, run.seed, run.execution, run.threads, |_, rng| {
        stepper.simulate(rng)
    })?)
}

fn write_trajectory(
    out: &OutputDir,
    config: &RunConfig,
    index: usize,
    record: &TrajectoryRecord,
) -> Result<(), CliError> {
    let stem = format!("L{}_{index:05}", record.level);
    let rows = (0..record.len()).map(|k| {
        vec![
            fmt_f64(record.times[k]),
            fmt_f64(record.mass[k]),
            fmt_f64(record.kinetic[k]),
            fmt_f64(record.potential[k]),
            fmt_f64(record.energy[k]),
            fmt_f64(record.energy_norm[k]),
        ]
    });
    out.write_csv(
        &format!("trajectory_{stem}.csv"),
        &["t", "mass", "kinetic", "potential", "energy", "energy_norm"],
        rows,
    )?;
    let events = record.events.iter().map(|e| {
        let mut row = vec![fmt_f64(e.time)];
        row.extend(e.mark.iter().map(|&m| fmt_f64(m)));
        row
    });
    let dim = config.noise.measure.dimension();
    let mut columns = vec!["t".to_string()];
    columns.extend((0..dim).map(|m| format!("l{m}")));
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    out.write_csv(&format!("events_{stem}.csv"), &refs, events)?;
    if config.run.write_states {
        let n = record.states.first().map_or(0, |s| s.len());
        let mut columns = vec!["t".to_string()];
        for j in 0..n {
            columns.push(format!("re{j}"));
            columns.push(format!("im{j}"));
        }
        let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        let rows = record.times.iter().zip(&record.states).map(|(t, s)| {
            let mut row = vec![fmt_f64(*t)];
            for z in s.iter() {
                row.push(fmt_f64(z.re));
                row.push(fmt_f64(z.im));
            }
            row
        });
        out.write_csv(&format!("states_{stem}.csv"), &refs, rows)?;
    }
    Ok(())
}

/// One ensemble per configured level; per-trajectory CSV files and a JSON summary.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulateReport, CliError> {
    let out = prepare(config)?;
    let model = config.spectral_model()?;
    let mut levels = Vec::new();
    for &level in &config.model.levels {
        let problem = config.problem_on(model.clone(), level)?;
        let records = run_level(config, &problem)?;
        for (i, r) in records.iter().enumerate() {
            write_trajectory(&out, config, i, r)?;
        }
        let mut summary = level_header(&problem, config);
        summary.trajectories = records
            .iter()
            .enumerate()
            .map(|(i, r)| TrajectorySummary {
                index: i,
                seed: trajectory_seed(config.run.seed, i as u64),
                events: r.events.len(),
                max_relative_mass_drift: r.max_relative_mass_drift(),
                final_mass: *r.mass.last().unwrap_or(&0.0),
                final_energy: *r.energy.last().unwrap_or(&0.0),
            })
            .collect();
        if records.len() >= 2 {
            summary.ensemble = Some(ensemble_moments(&records, &config.run.moment_orders, config.run.seed)?);
        }
        levels.push(summary);
    }
    let report = SimulateReport { master_seed: config.run.seed, levels };
    out.write_json("summary.json", "simulate", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub reference: u32,
    pub mean_sup_distance: f64,
    pub max_sup_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeReport {
    pub master_seed: u64,
    pub reference: u32,
    pub rows: Vec<ConvergenceRow>,
    /// Mean distances strictly decrease with the level; `None` below two
    /// distinct levels.
    pub strictly_decreasing: Option<bool>,
}

/// Coupled runs of every level against the finest one along shared noise paths.
pub fn cmd_converge(config: &RunConfig) -> Result<ConvergeReport, CliError> {
    let out = prepare(config)?;
    let model = config.spectral_model()?;
    let reference = config.finest_level();
    let mut coarse_levels = config.model.levels.clone();
    coarse_levels.sort_unstable();
    coarse_levels.pop();
    let fine = config.problem_on(model.clone(), reference)?;
    let coarse: Vec<GalerkinProblem> =
        coarse_levels.iter().map(|&n| config.problem_on(model.clone(), n)).collect::<Result<_, _>>()?;
    let fine_stepper = Stepper::new(&fine, config.solver)?;
    let coarse_steppers: Vec<Stepper> =
        coarse.iter().map(|p| Stepper::new(p, config.solver)).collect::<Result<_, _>>()?;
    let run = &config.run;
    let distances: Vec<Vec<f64>> =
        map_trajectories_with_threads(run.trajectories, run.seed, run.execution, run.threads, |_, rng| {
            let events = sample_prm(fine.measure(), fine.horizon(), rng)?;
            let reference_path = fine_stepper.run(&events)?;
            coarse_steppers
                .iter()
                .map(|s| {
                    let path = s.run(&events)?;
                    Ok(path
                        .states
                        .iter()
                        .zip(&reference_path.states)
                        .map(|(a, b)| dual_distance(&model, a, b))
                        .fold(0.0, f64::max))
                })
                .collect()
        })?;
    let per_trajectory =
        (0..distances.len()).flat_map(|i| coarse_levels.iter().enumerate().map(move |(j, &level)| (i, j, level)));
    out.write_csv(
        "converge.csv",
        &["level", "reference", "trajectory", "sup_distance"],
        per_trajectory.map(|(i, j, level)| {
            vec![level.to_string(), reference.to_string(), i.to_string(), fmt_f64(distances[i][j])]
        }),
    )?;
    let rows: Vec<ConvergenceRow> = coarse_levels
        .iter()
        .enumerate()
        .map(|(j, &level)| {
            let column: Vec<f64> = distances.iter().map(|d| d[j]).collect();
            ConvergenceRow {
                level,
                reference,
                mean_sup_distance: column.iter().sum::<f64>() / column.len() as f64,
                max_sup_distance: column.iter().cloned().fold(0.0, f64::max),
            }
        })
        .collect();
    let strictly_decreasing = strictly_decreasing(&rows);
    let report = ConvergeReport { master_seed: run.seed, reference, rows, strictly_decreasing };
    out.write_json("converge_summary.json", "converge", &report)?;
    Ok(report)
}

/// Rows with equal levels are merged first; needs two distinct levels.
fn strictly_decreasing(rows: &[ConvergenceRow]) -> Option<bool> {
    let mut distinct: Vec<&ConvergenceRow> = Vec::new();
    for row in rows {
        if distinct.last().is_none_or(|r| r.level != row.level) {
            distinct.push(row);
        }
    }
    if distinct.len() < 2 {
        return None;
    }
    Some(distinct.windows(2).all(|w| w[1].mean_sup_distance < w[0].mean_sup_distance))
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentLevel {
    pub level: u32,
    pub summary: EnsembleSummary,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub aldous: Vec<AldousRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentsReport {
    pub master_seed: u64,
    pub levels: Vec<MomentLevel>,
    /// `max / min` over levels of the median of `sup_t [½‖u‖² + E(u)]`.
    pub sup_energy_median_ratio: f64,
}

/// Ensemble moment estimates per level, with optional Aldous tables.
pub fn cmd_moments(config: &RunConfig) -> Result<MomentsReport, CliError> {
    if config.run.trajectories < 2 {
        return Err(SnlsError::Usage("moments needs at least 2 trajectories".into()).into());
    }
    let out = prepare(config)?;
    let model = config.spectral_model()?;
    let mut levels = Vec::new();
    for &level in &config.model.levels {
        let problem = config.problem_on(model.clone(), level)?;
        let records = run_level(config, &problem)?;
        let summary = ensemble_moments(&records, &config.run.moment_orders, config.run.seed)?;
        let aldous = match &config.run.aldous {
            Some(a) => {
                let rule = if a.first_jump_after {
                    StoppingRule::FirstJumpAfter(a.time)
                } else {
                    StoppingRule::Deterministic(a.time)
                };
                aldous_statistic(&model, &records, &a.thetas, rule, a.eta)?
            }
            None => Vec::new(),
        };
        levels.push(MomentLevel { level, summary, aldous });
    }
    out.write_csv(
        "moments.csv",
        &["level", "order", "mean", "lower", "upper", "normalized"],
        levels.iter().flat_map(|l| {
            l.summary.moments.iter().map(move |m| {
                vec![
                    l.level.to_string(),
                    fmt_f64(m.order),
                    fmt_f64(m.mean),
                    fmt_f64(m.lower),
                    fmt_f64(m.upper),
                    fmt_f64(m.normalized),
                ]
            })
        }),
    )?;
    out.write_csv(
        "levels.csv",
        &["level", "sup_energy_median", "sup_energy_mean", "sup_energy_norm_median", "variance_budget"],
        levels.iter().map(|l| {
            vec![
                l.level.to_string(),
                fmt_f64(l.summary.sup_energy_median),
                fmt_f64(l.summary.sup_energy_mean),
                fmt_f64(l.summary.sup_energy_norm_median),
                fmt_f64(l.summary.variance_budget),
            ]
        }),
    )?;
    if config.run.aldous.is_some() {
        out.write_csv(
            "aldous.csv",
            &["level", "theta", "probability"],
            levels.iter().flat_map(|l| {
                l.aldous.iter().map(move |r| vec![l.level.to_string(), fmt_f64(r.theta), fmt_f64(r.probability)])
            }),
        )?;
    }
    let medians: Vec<f64> = levels.iter().map(|l| l.summary.sup_energy_median).collect();
    let max = medians.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = medians.iter().cloned().fold(f64::INFINITY, f64::min);
    let report = MomentsReport { master_seed: config.run.seed, levels, sup_energy_median_ratio: max / min };
    out.write_json("moments_summary.json", "moments", &report)?;
    Ok(report)
}
