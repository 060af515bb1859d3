//! The `run` command: plan, simulate, write results.

use std::path::Path;
use std::time::Instant;

use moment_steer::engine::{empirical_moments, moment_standard_errors, plan, simulate};
use moment_steer::realization::DensityKind;
use moment_steer::{SimulationTrace, SteeringPlan, SteeringProblem};
use serde::Serialize;

use crate::config::{FitReport, Reference, RunConfig};
use crate::failure::Failure;
use crate::output::{num, write_csv, write_histogram};

#[derive(Debug, Serialize)]
struct StepSummary {
    step: usize,
    c: f64,
    feasible_lo: f64,
    cost: f64,
    min_eig: f64,
    boundary_atomic: bool,
    control: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
    prior: String,
    iterations: usize,
    grad_norm: f64,
    control_order: usize,
    round_trip_error: f64,
}

#[derive(Debug, Serialize)]
struct TerminalSummary {
    order: usize,
    target: Vec<f64>,
    empirical: Vec<f64>,
    abs_error: Vec<f64>,
    standard_error: Vec<f64>,
    /// `(empirical − target) / standard_error`
    z: Vec<f64>,
    within_3se: bool,
}

#[derive(Debug, Serialize)]
struct Runtimes {
    plan: f64,
    simulate: f64,
    write: f64,
    total: f64,
}

#[derive(Debug, Serialize)]
struct GainMatch {
    step: usize,
    expected: f64,
    actual: f64,
    within: bool,
}

#[derive(Debug, Serialize)]
struct AtomicMatch {
    step: usize,
    expected_points: Vec<f64>,
    expected_probs: Vec<f64>,
    actual_points: Vec<f64>,
    actual_probs: Vec<f64>,
    tolerance: f64,
    within: bool,
}

#[derive(Debug, Serialize)]
struct LiteralMatch {
    gain_tolerance: f64,
    gains: Vec<GainMatch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    atomic_control: Option<AtomicMatch>,
    all_within: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    status: &'static str,
    agents: usize,
    seed: u64,
    schedule: Vec<usize>,
    gains: Vec<f64>,
    steps: Vec<StepSummary>,
    terminal: TerminalSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    literal_match: Option<LiteralMatch>,
    runtime_seconds: Runtimes,
}

#[derive(Debug, Serialize)]
struct FailedSummary<'a> {
    status: &'static str,
    #[serde(flatten)]
    failure: &'a Failure,
}

/// Runs the configured problem and writes every output file. On planning or
/// simulation failure a summary carrying the error record is still written.
pub fn run(config: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let resolved = config.resolve()?;
    let problem = &resolved.problem;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    std::fs::write(dir.join("config.json"), config.normalized())
        .map_err(|e| Failure::io(format!("config.json: {e}")))?;

    let outcome = plan(problem).and_then(|p| {
        let planned = start.elapsed().as_secs_f64();
        simulate(problem, &p).map(|t| (p, t, planned))
    });
    let (plan, trace, planned) = match outcome {
        Ok(v) => v,
        Err(e) => {
            let failure = Failure::plan(e);
            write_json(
                &dir.join("summary.json"),
                &FailedSummary {
                    status: "failed",
                    failure: &failure,
                },
            )?;
            return Err(failure);
        }
    };
    let simulated = start.elapsed().as_secs_f64();

    write_files(config, &plan, &trace)?;
    let written = start.elapsed().as_secs_f64();

    let summary = Summary {
        status: "ok",
        agents: problem.agents,
        seed: problem.seed,
        schedule: plan.schedule.clone(),
        gains: plan.gains(),
        steps: step_summaries(&plan),
        terminal: terminal_summary(problem, &trace)?,
        fit: resolved.fit,
        literal_match: config.reference.as_ref().map(|r| literal_match(r, &plan)),
        runtime_seconds: Runtimes {
            plan: planned,
            simulate: simulated - planned,
            write: written - simulated,
            total: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&dir.join("summary.json"), &summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn step_summaries(plan: &SteeringPlan) -> Vec<StepSummary> {
    plan.steps
        .iter()
        .map(|s| {
            let (control, points, probs) = match &s.density.kind {
                DensityKind::Atomic { points, probs } => {
                    ("atomic", Some(points.clone()), Some(probs.clone()))
                }
                DensityKind::Continuous => ("continuous", None, None),
            };
            StepSummary {
                step: s.step,
                c: s.c,
                feasible_lo: s.gain.feasible_lo,
                cost: s.gain.cost,
                min_eig: s.gain.min_eig,
                boundary_atomic: s.gain.boundary_atomic,
                control,
                points,
                probs,
                prior: s.density.prior.to_string(),
                iterations: s.density.iterations,
                grad_norm: s.density.grad_norm,
                control_order: s.u_tilde.order(),
                round_trip_error: s.round_trip_error,
            }
        })
        .collect()
}

fn terminal_summary(problem: &SteeringProblem, trace: &SimulationTrace) -> Result<TerminalSummary, Failure> {
    let order = 2 * problem.half_order;
    let target = problem.target.moments(order).map_err(Failure::config_from)?;
    let states = &trace.terminal().states;
    let empirical = empirical_moments(states, order);
    let standard_error = moment_standard_errors(states, order);
    let abs_error: Vec<f64> = (1..=order)
        .map(|l| (empirical.get(l) - target.get(l)).abs())
        .collect();
    let z: Vec<f64> = (1..=order)
        .map(|l| (empirical.get(l) - target.get(l)) / standard_error[l - 1])
        .collect();
    Ok(TerminalSummary {
        order,
        within_3se: z.iter().all(|v| v.abs() <= 3.0),
        target: target.into_values(),
        empirical: empirical.into_values(),
        abs_error,
        standard_error,
        z,
    })
}

fn literal_match(reference: &Reference, plan: &SteeringPlan) -> LiteralMatch {
    let tol = reference.gain_tolerance;
    let gains: Vec<GainMatch> = reference
        .gains
        .iter()
        .flatten()
        .zip(&plan.steps)
        .map(|(&expected, s)| GainMatch {
            step: s.step,
            expected,
            actual: s.c,
            within: (s.c - expected).abs() <= tol,
        })
        .collect();
    let atomic_control = reference.atomic_control.as_ref().map(|a| {
        let (points, probs) = match plan.steps.get(a.step).map(|s| &s.density.kind) {
            Some(DensityKind::Atomic { points, probs }) => (points.clone(), probs.clone()),
            _ => (Vec::new(), Vec::new()),
        };
        let close = |x: &[f64], y: &[f64]| {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= a.tolerance)
        };
        AtomicMatch {
            step: a.step,
            within: close(&points, &a.points) && close(&probs, &a.probs),
            expected_points: a.points.clone(),
            expected_probs: a.probs.clone(),
            actual_points: points,
            actual_probs: probs,
            tolerance: a.tolerance,
        }
    });
    let all_within = gains.iter().all(|g| g.within)
        && atomic_control.as_ref().is_none_or(|a| a.within);
    LiteralMatch {
        gain_tolerance: tol,
        gains,
        atomic_control,
        all_within,
    }
}

fn write_files(
    config: &RunConfig,
    plan: &SteeringPlan,
    trace: &SimulationTrace,
) -> Result<(), Failure> {
    let dir = &config.output_dir;
    let emit = &config.emit;

    write_csv(
        &dir.join("gains.csv"),
        "step,c,cost,min_eig,feasible_lo,boundary_atomic",
        plan.steps.iter().map(|s| {
            vec![
                s.step.to_string(),
                num(s.c),
                num(s.gain.cost),
                num(s.gain.min_eig),
                num(s.gain.feasible_lo),
                s.gain.boundary_atomic.to_string(),
            ]
        }),
    )?;

    if emit.trajectory {
        let width = plan.schedule.iter().copied().max().unwrap_or(0);
        let header: Vec<String> = ["step".to_string(), "order".to_string()]
            .into_iter()
            .chain((1..=width).map(|l| format!("m{l}")))
            .collect();
        write_csv(
            &dir.join("trajectory.csv"),
            &header.join(","),
            plan.trajectory.iter().enumerate().map(|(k, m)| {
                let mut row = vec![k.to_string(), m.order().to_string()];
                row.extend(m.values().iter().map(|v| num(*v)));
                row.resize(width + 2, String::new());
                row
            }),
        )?;
    }

    for s in &plan.steps {
        if emit.densities {
            let header = if s.density.is_atomic() { "u,prob,weight" } else { "u,pdf,weight" };
            write_csv(
                &dir.join(format!("control_density_step_{}.csv", s.step)),
                header,
                s.density
                    .table()
                    .into_iter()
                    .map(|(u, v, w)| vec![num(u), num(v), num(w)]),
            )?;
        }
        if emit.diagnostics {
            let realized = s
                .density
                .moments_by_quadrature(s.u_tilde.order())
                .map(|m| m.into_values())
                .unwrap_or_else(|_| vec![f64::NAN; s.u_tilde.order()]);
            write_csv(
                &dir.join(format!("control_moments_step_{}.csv", s.step)),
                "order,prescribed,realized",
                s.u_tilde
                    .values()
                    .iter()
                    .zip(&realized)
                    .enumerate()
                    .map(|(i, (p, r))| vec![(i + 1).to_string(), num(*p), num(*r)]),
            )?;
        }
    }

    if emit.histograms {
        for snap in &trace.snapshots {
            write_histogram(
                &dir.join(format!("histogram_step_{}.csv", snap.step)),
                &snap.states,
                config.histogram_bins,
            )?;
        }
        for (k, u) in trace.controls.iter().enumerate() {
            write_histogram(
                &dir.join(format!("control_histogram_step_{k}.csv")),
                u,
                config.histogram_bins,
            )?;
        }
    }
    Ok(())
}
