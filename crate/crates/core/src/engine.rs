//! End-to-end steering: plan the moment trajectory and per-step control laws,
//! then drive a finite swarm with sampled controls.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{ScalarDistribution, DEFAULT_ORDER_CAP};
use crate::dynamics::{kahan_sum, propagate, DynamicsKind};
use crate::error::{Error, Result};
use crate::gain::{optimize_gain, GainResult};
use crate::moments::{extended_schedule_with_cap, smooth_trajectory, MomentVector};
use crate::realization::{compose_affine, realize_moments, RealizedDensity};

/// Relative round-trip tolerance every planned step must meet.
pub const ROUND_TRIP_TOL: f64 = 1e-10;

fn default_cap() -> usize {
    DEFAULT_ORDER_CAP
}

/// A steering task: move an ensemble from `initial` to `target` in `horizon`
/// steps, matching moments up to order `2·half_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringProblem {
    pub horizon: usize,
    pub half_order: usize,
    pub dynamics: DynamicsKind,
    /// Law of the random parameter `a(k)`: one entry shared by all steps, or
    /// one per step.
    pub parameter: Vec<ScalarDistribution>,
    pub initial: ScalarDistribution,
    pub target: ScalarDistribution,
    pub agents: usize,
    pub seed: u64,
    #[serde(default)]
    pub heavy_tail_prior: bool,
    #[serde(default = "default_cap")]
    pub moment_cap: usize,
}

impl SteeringProblem {
    /// Parameter law at step `k`.
    pub fn parameter_at(&self, k: usize) -> &ScalarDistribution {
        if self.parameter.len() == 1 {
            &self.parameter[0]
        } else {
            &self.parameter[k]
        }
    }

    /// Moment-vector length required at each step.
    pub fn schedule(&self) -> Result<Vec<usize>> {
        extended_schedule_with_cap(
            self.half_order,
            self.horizon,
            self.dynamics.degree(),
            self.moment_cap,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidProblem("horizon must be at least 1".into()));
        }
        if self.half_order == 0 {
            return Err(Error::InvalidProblem("half_order must be at least 1".into()));
        }
        if self.agents == 0 {
            return Err(Error::InvalidProblem("agents must be at least 1".into()));
        }
        if self.parameter.len() != 1 && self.parameter.len() != self.horizon {
            return Err(Error::InvalidProblem(format!(
                "parameter needs 1 or {} entries, got {}",
                self.horizon,
                self.parameter.len()
            )));
        }
        self.dynamics.validate()?;
        let schedule = self.schedule()?;
        let check = |m: MomentVector, what: &str| -> Result<()> {
            if m.values().iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::MomentUndefined(format!("{what} moments are not finite")))
            }
        };
        check(self.initial.moments_with_cap(schedule[0], self.moment_cap)?, "initial")?;
        check(self.target.moments_with_cap(schedule[0], self.moment_cap)?, "target")?;
        for k in 0..self.horizon {
            check(
                self.parameter_at(k).moments_with_cap(schedule[k + 1], self.moment_cap)?,
                "parameter",
            )?;
        }
        Ok(())
    }

    /// Smooth moment trajectory, each entry truncated to its scheduled order.
    pub fn trajectory(&self) -> Result<Vec<MomentVector>> {
        let schedule = self.schedule()?;
        let x0 = self.initial.moments_with_cap(schedule[0], self.moment_cap)?;
        let xk = self.target.moments_with_cap(schedule[0], self.moment_cap)?;
        let extended = smooth_trajectory(&x0, &xk, self.horizon)?;
        extended
            .iter()
            .zip(&schedule)
            .map(|(m, &len)| m.truncate(len))
            .collect()
    }
}

/// Planned control for one step.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub step: usize,
    pub c: f64,
    pub u_tilde: MomentVector,
    pub density: RealizedDensity,
    pub gain: GainResult,
    /// Moments of the step's parameter law, up to the order of `u_tilde`.
    pub parameter_moments: MomentVector,
    /// Largest relative deviation of the propagated moments from the
    /// trajectory.
    pub round_trip_error: f64,
}

/// Output of the planning stage.
#[derive(Debug, Clone)]
pub struct SteeringPlan {
    pub schedule: Vec<usize>,
    pub trajectory: Vec<MomentVector>,
    pub steps: Vec<StepPlan>,
}

impl SteeringPlan {
    pub fn gains(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.c).collect()
    }
}

fn relative_error(got: &MomentVector, want: &MomentVector) -> f64 {
    got.values()
        .iter()
        .zip(want.values())
        .map(|(g, w)| (g - w).abs() / w.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn plan_step(
    problem: &SteeringProblem,
    trajectory: &[MomentVector],
    k: usize,
) -> Result<StepPlan> {
    let x_now = &trajectory[k];
    let x_next = &trajectory[k + 1];
    let a = problem
        .parameter_at(k)
        .moments_with_cap(x_next.order(), problem.moment_cap)?;
    let gain = optimize_gain(x_now, x_next, &a, &problem.dynamics)?;
    let back = propagate(x_now, &gain.u_tilde, &a, gain.c_star, &problem.dynamics)?;
    let round_trip_error = relative_error(&back, x_next);
    if !(round_trip_error <= ROUND_TRIP_TOL) {
        return Err(Error::InvalidProblem(format!(
            "moment round trip failed with relative error {round_trip_error:e}"
        )));
    }
    let density = realize_moments(&gain.u_tilde, problem.heavy_tail_prior)?;
    Ok(StepPlan {
        step: k,
        c: gain.c_star,
        u_tilde: gain.u_tilde.clone(),
        density,
        gain,
        parameter_moments: a,
        round_trip_error,
    })
}

/// Builds the moment trajectory, then solves each step's gain and realizes
/// its control law. Steps depend only on the trajectory, so they run in
/// parallel.
pub fn plan(problem: &SteeringProblem) -> Result<SteeringPlan> {
    problem.validate()?;
    let schedule = problem.schedule()?;
    let trajectory = problem.trajectory()?;
    let steps = (0..problem.horizon)
        .into_par_iter()
        .map(|k| plan_step(problem, &trajectory, k).map_err(|e| e.at_step(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteeringPlan {
        schedule,
        trajectory,
        steps,
    })
}

/// States of all agents at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleState {
    pub step: usize,
    pub states: Vec<f64>,
    /// Seed every agent stream derives from; agent `i` uses stream `i`.
    pub seed: u64,
}

/// Snapshots at steps `0..=K` and applied controls at steps `0..K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub snapshots: Vec<EnsembleState>,
    pub controls: Vec<Vec<f64>>,
}

impl SimulationTrace {
    pub fn terminal(&self) -> &EnsembleState {
        self.snapshots.last().expect("trace holds the initial snapshot")
    }
}

/// One independent random stream per agent, so results do not depend on
/// scheduling.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng
}

/// Drives `problem.agents` agents with the planned control laws.
pub fn simulate(problem: &SteeringProblem, plan: &SteeringPlan) -> Result<SimulationTrace> {
    simulate_with(problem, plan, problem.agents, problem.seed)
}

/// [`simulate`] with explicit population size and seed.
pub fn simulate_with(
    problem: &SteeringProblem,
    plan: &SteeringPlan,
    agents: usize,
    seed: u64,
) -> Result<SimulationTrace> {
    let horizon = plan.steps.len();
    if horizon != problem.horizon {
        return Err(Error::InvalidProblem(
            "plan does not match the problem horizon".into(),
        ));
    }
    let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..agents)
        .into_par_iter()
        .map(|i| {
            let mut rng = agent_rng(seed, i);
            let mut x = problem.initial.sample_one(&mut rng);
            let mut states = Vec::with_capacity(horizon + 1);
            let mut controls = Vec::with_capacity(horizon);
            states.push(x);
            for (k, step) in plan.steps.iter().enumerate() {
                let a = problem.parameter_at(k).sample_one(&mut rng);
                let u_tilde = step.density.sample_one(&mut rng);
                let fx = problem.dynamics.eval(x);
                let u = -step.c * a * fx + u_tilde;
                x = a * fx + u;
                states.push(x);
                controls.push(u);
            }
            (states, controls)
        })
        .collect();

    let mut snapshots: Vec<EnsembleState> = (0..=horizon)
        .map(|k| EnsembleState {
            step: k,
            states: Vec::with_capacity(agents),
            seed,
        })
        .collect();
    let mut controls = vec![Vec::with_capacity(agents); horizon];
    for (states, us) in paths {
        for (k, x) in states.into_iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFiniteIntermediate(k).at_step(k));
            }
            snapshots[k].states.push(x);
        }
        for (k, u) in us.into_iter().enumerate() {
            controls[k].push(u);
        }
    }
    Ok(SimulationTrace {
        snapshots,
        controls,
    })
}

/// Empirical power moments `(1/N)·Σ x_i^ℓ`, `ℓ = 1..=order`.
pub fn empirical_moments(states: &[f64], order: usize) -> MomentVector {
    let n = states.len().max(1) as f64;
    let values = (1..=order)
        .map(|l| kahan_sum(states.iter().map(|x| x.powi(l as i32))) / n)
        .collect();
    MomentVector::new(values)
}

/// Standard errors of the empirical moments: `sd(x^ℓ)/√N`.
pub fn moment_standard_errors(states: &[f64], order: usize) -> Vec<f64> {
    let n = states.len() as f64;
    let m = empirical_moments(states, 2 * order);
    (1..=order)
        .map(|l| ((m.get(2 * l) - m.get(l) * m.get(l)).max(0.0) / n).sqrt())
        .collect()
}

/// A least-squares polynomial surrogate of a scalar map.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFit {
    pub dynamics: DynamicsKind,
    /// Largest absolute deviation on a dense grid over the fit range.
    pub max_residual: f64,
}

const FIT_CHECK_POINTS: usize = 2001;

/// Fits a degree-`degree` polynomial to `f` by least squares at `4·degree + 1`
/// Chebyshev nodes of `range`.
pub fn fit_polynomial<F: Fn(f64) -> f64>(
    f: F,
    degree: usize,
    range: (f64, f64),
    residual_bound: f64,
) -> Result<PolynomialFit> {
    let (lo, hi) = range;
    if degree == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidProblem(
            "polynomial fit needs degree ≥ 1 and a finite range lo < hi".into(),
        ));
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let count = 4 * degree + 1;
    let ts: Vec<f64> = (0..count)
        .map(|j| (std::f64::consts::PI * (2 * j + 1) as f64 / (2 * count) as f64).cos())
        .collect();
    let design = nalgebra::DMatrix::from_fn(count, degree + 1, |i, j| ts[i].powi(j as i32));
    let rhs = nalgebra::DVector::from_iterator(count, ts.iter().map(|t| f(mid + half * t)));
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("function is not finite on the fit range".into()));
    }
    let t_coeffs = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidProblem(e.to_string()))?;
    let mut coeffs = compose_affine(t_coeffs.as_slice(), mid, half);
    let big = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    for c in coeffs.iter_mut() {
        if c.abs() <= 1e-14 * big.max(1.0) {
            *c = 0.0;
        }
    }
    while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
        coeffs.pop();
    }
    let dynamics = DynamicsKind::polynomial(coeffs)?;
    let max_residual = (0..FIT_CHECK_POINTS)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (FIT_CHECK_POINTS - 1) as f64;
            (f(x) - dynamics.eval(x)).abs()
        })
        .fold(0.0, f64::max);
    if !(max_residual <= residual_bound) {
        return Err(Error::IllConditionedFit {
            residual: max_residual,
            bound: residual_bound,
        });
    }
    Ok(PolynomialFit {
        dynamics,
        max_residual,
    })
}

/// Default fit range for a surrogate: the 0.1%–99.9% quantile span of the
/// initial law, widened to ±3 standard deviations of the widest trajectory
/// entry.
pub fn default_fit_range(initial: &ScalarDistribution, target: &ScalarDistribution) -> Result<(f64, f64)> {
    let lo = initial.quantile(0.001);
    let hi = initial.quantile(0.999);
    let m2 = initial.moments(2)?.get(2).max(target.moments(2)?.get(2));
    let reach = 3.0 * m2.sqrt();
    Ok((lo.min(-reach), hi.max(reach)))
}
