//! One test per acceptance criterion. Each prints a `[PASS]`/`[FAIL]` line
//! to stderr (visible without `--nocapture`) before asserting.

mod common;

use std::io::Write;
use std::time::Instant;

use common::*;
use moment_steer::dynamics::{propagate, solve_control_moments};
use moment_steer::engine::{plan, simulate_with, ROUND_TRIP_TOL};
use moment_steer::gain::{control_min_eig, cost_at, optimize_gain};
use moment_steer::moments::{scaled_min_eig, smooth_trajectory};
use moment_steer::realization::{
    atomic_from_singular, dual_objective, realize_moments, DensityKind, RealizationProblem,
};
use moment_steer::{DynamicsKind, MomentVector, ScalarDistribution, SteeringPlan, SteeringProblem, TAU_PSD};
use rand::Rng;

fn report(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {criterion}: {detail}");
}

const SEEDS: std::ops::Range<u64> = 0..10;
const AGENTS: usize = 2000;

/// Seeds whose terminal empirical moments lie within three standard errors of
/// the target for every order up to four.
fn seeds_within_3se(problem: &SteeringProblem, p: &SteeringPlan, target: &MomentVector) -> usize {
    SEEDS
        .filter(|&seed| {
            let trace = simulate_with(problem, p, AGENTS, seed).unwrap();
            within_standard_errors(&trace.terminal().states, target, 4, 3.0)
        })
        .count()
}

#[test]
fn criterion_1_first_example_pipeline() {
    let start = Instant::now();
    let problem = example_1();
    let p = plan(&problem).unwrap();

    let max_c = p.gains().iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let gains_ok = max_c <= 1e-6;

    let traj_ok = p.trajectory[4].values() == [0.0, 8.0, 0.0, 160.0]
        && p.trajectory[2].values() == [0.0, 4.5, 0.0, 81.5];

    let mut moment_err = 0.0f64;
    let mut continuous = true;
    for step in &p.steps {
        continuous &= !step.density.is_atomic();
        let got = step.density.moments_by_quadrature(step.u_tilde.order()).unwrap();
        moment_err = moment_err.max(max_rel_error(&got, &step.u_tilde));
    }
    let realize_ok = moment_err <= 1e-6 && continuous;

    let target = problem.target.moments(4).unwrap();
    let passing = seeds_within_3se(&problem, &p, &target);
    let mc_ok = passing >= 8;
    let elapsed = start.elapsed().as_secs_f64();

    let time_ok = elapsed < 10.0;

    let pass = gains_ok && traj_ok && realize_ok && mc_ok && time_ok;
    report(
        "criterion 1 (first example pipeline)",
        pass,
        &format!(
            "max|c|={max_c:.1e}, trajectory exact={traj_ok}, realized moment error={moment_err:.1e}, \
             seeds within 3 SE={passing}/10, runtime={elapsed:.2}s"
        ),
    );
    assert!(gains_ok, "gains {:?}", p.gains());
    assert!(traj_ok, "trajectory {:?}", p.trajectory);
    assert!(realize_ok, "moment error {moment_err:e}, continuous {continuous}");
    assert!(mc_ok, "{passing} of 10 seeds");
    assert!(time_ok, "{elapsed} s");
}

#[test]
fn criterion_2_second_example_structure() {
    let problem = example_2();
    let p = plan(&problem).unwrap();
    let gains = p.gains();

    let early_ok = gains[..3].iter().all(|c| c.abs() <= 1e-6);
    let last = &p.steps[3];
    let (points, probs) = match &last.density.kind {
        DensityKind::Atomic { points, probs } => (points.clone(), probs.clone()),
        DensityKind::Continuous => (vec![], vec![]),
    };
    let structure_ok =
        last.c > 0.0 && last.gain.boundary_atomic && points.len() == 2;

    let mut recon_err = f64::INFINITY;
    if structure_ok {
        let own = atomic_moments(&points, &probs, 4);
        let (rp, rw) = atomic_from_singular(&own).unwrap();
        recon_err = rp
            .iter()
            .zip(&points)
            .chain(rw.iter().zip(&probs))
            .map(|(a, b)| (a - b).abs())
            .fold(if rp.len() == 2 { 0.0 } else { f64::INFINITY }, f64::max);
    }
    let recon_ok = recon_err <= 1e-8;

    // literal values reported for this example: c(3) = 0.16, support
    // {−2.38, 2.69}, probabilities {0.472, 0.528}
    let literal_c = (last.c - 0.16).abs() <= 0.05;
    let literal_support = points.len() == 2
        && (points[0] + 2.38).abs() <= 0.01
        && (points[1] - 2.69).abs() <= 0.01
        && (probs[0] - 0.472).abs() <= 0.01
        && (probs[1] - 0.528).abs() <= 0.01;
    report(
        "criterion 2 literal match (stretch goal, not asserted)",
        literal_c && literal_support,
        &format!(
            "c(3)={:.4} (|Δ|≤0.05: {literal_c}), points={points:.4?}, probs={probs:.4?} (±0.01: {literal_support})",
            last.c
        ),
    );

    let pass = early_ok && structure_ok && recon_ok;
    report(
        "criterion 2 (second example structure)",
        pass,
        &format!(
            "c={gains:.4?}, two-point control={structure_ok}, reconstruction error={recon_err:.1e}"
        ),
    );
    assert!(early_ok, "gains {gains:?}");
    assert!(structure_ok, "step 3: c={}, kind {:?}", last.c, last.density.kind);
    assert!(recon_ok, "reconstruction error {recon_err:e}");
}

#[test]
fn criterion_3_quadratic_example() {
    let problem = example_4();
    let p = plan(&problem).unwrap();
    let schedule_ok = p.schedule == [16, 8, 4];
    let round_trip = p.steps.iter().map(|s| s.round_trip_error).fold(0.0, f64::max);
    let round_trip_ok = round_trip <= ROUND_TRIP_TOL && p.steps.len() == 2;

    let target = example_1().target.moments(4).unwrap();
    let passing = seeds_within_3se(&problem, &p, &target);
    let mc_ok = passing >= 8;

    let pass = schedule_ok && round_trip_ok && mc_ok;
    report(
        "criterion 3 (quadratic example)",
        pass,
        &format!(
            "schedule={:?}, c={:.4?}, round trip={round_trip:.1e}, seeds within 3 SE={passing}/10",
            p.schedule,
            p.gains()
        ),
    );
    assert!(schedule_ok, "schedule {:?}", p.schedule);
    assert!(round_trip_ok, "round trip {round_trip:e}");
    assert!(mc_ok, "{passing} of 10 seeds");
}

fn central_difference(lambda: &[f64], problem: &RealizationProblem) -> Vec<f64> {
    (0..lambda.len())
        .map(|i| {
            let h = 1e-6 * lambda[i].abs().max(1.0);
            let mut up = lambda.to_vec();
            let mut dn = lambda.to_vec();
            up[i] += h;
            dn[i] -= h;
            let fu = dual_objective(&up, problem).unwrap().0;
            let fd = dual_objective(&dn, problem).unwrap().0;
            (fu - fd) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_4_realization_suite() {
    let mut r = rng(4);
    let mut worst_moment = 0.0f64;
    let mut worst_grad = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..50 {
        let sigma = random_mixture(&mut r).moments(4).unwrap();
        match realize_moments(&sigma, false) {
            Ok(d) => {
                let got = d.moments_by_quadrature(4).unwrap();
                worst_moment = worst_moment.max(max_rel_error(&got, &sigma));
                let problem = RealizationProblem::new(sigma.clone(), d.prior.clone()).unwrap();
                let (_, grad) = dual_objective(&d.lambda, &problem).unwrap();
                let fd = central_difference(&d.lambda, &problem);
                let err = grad
                    .iter()
                    .zip(&fd)
                    .map(|(g, f)| (g - f).abs())
                    .fold(0.0, f64::max);
                worst_grad = worst_grad.max(err);
            }
            Err(e) => failures.push(format!("instance {i}: {e}")),
        }
    }

    let mut worst_inversion = 0.0f64;
    for _ in 0..50 {
        let lo = r.random_range(-3.0..1.0);
        let points = vec![lo, lo + r.random_range(0.2..3.0)];
        let p0 = r.random_range(0.05..0.95);
        let probs = vec![p0, 1.0 - p0];
        let m = atomic_moments(&points, &probs, 4);
        let err = match atomic_from_singular(&m) {
            Ok((rp, rw)) if rp.len() == 2 => rp
                .iter()
                .zip(&points)
                .chain(rw.iter().zip(&probs))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            _ => f64::INFINITY,
        };
        worst_inversion = worst_inversion.max(err);
    }

    let pass = failures.is_empty() && worst_moment <= 1e-6 && worst_grad <= 1e-5 && worst_inversion <= 1e-8;
    report(
        "criterion 4 (realization suite)",
        pass,
        &format!(
            "failures={}, moment error={worst_moment:.1e}, gradient vs FD={worst_grad:.1e}, \
             two-atom inversion={worst_inversion:.1e}",
            failures.len()
        ),
    );
    assert!(failures.is_empty(), "{failures:?}");
    assert!(worst_moment <= 1e-6, "{worst_moment:e}");
    assert!(worst_grad <= 1e-5, "{worst_grad:e}");
    assert!(worst_inversion <= 1e-8, "{worst_inversion:e}");
}

#[test]
fn criterion_5_enumeration_oracle() {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let f = if i % 2 == 0 {
            DynamicsKind::Linear
        } else {
            DynamicsKind::Monomial { degree: 2 }
        };
        let c = [0.0, 0.3, 1.0][i % 3];
        let x = random_atomic(&mut r, 4, -2.0, 2.0);
        let a = random_atomic(&mut r, 4, 0.2, 1.0);
        let u = random_atomic(&mut r, 4, -2.0, 2.0);
        let order = 4;
        let got = propagate(
            &atomic_moments(&x.0, &x.1, order * f.degree()),
            &atomic_moments(&u.0, &u.1, order),
            &atomic_moments(&a.0, &a.1, order),
            c,
            &f,
        )
        .unwrap();
        let (pts, pr) = enumerate_next((&x.0, &x.1), (&a.0, &a.1), (&u.0, &u.1), c, &f);
        worst = worst.max(max_rel_error(&got, &atomic_moments(&pts, &pr, order)));
    }
    let pass = worst <= 1e-12;
    report(
        "criterion 5 (enumeration oracle)",
        pass,
        &format!("200 instances, max relative error={worst:.1e}"),
    );
    assert!(pass, "{worst:e}");
}

#[test]
fn criterion_6_interpolation_and_full_gain() {
    let mut r = rng(6);
    let mut min_eig = f64::INFINITY;
    let mut full_gain_ok = true;
    for _ in 0..100 {
        let n = r.random_range(1..=3usize);
        let x0 = random_mixture(&mut r).moments(2 * n).unwrap();
        let xf = random_mixture(&mut r).moments(2 * n).unwrap();
        let steps = r.random_range(2..=8usize);
        let traj = smooth_trajectory(&x0, &xf, steps).unwrap();
        let a = random_parameter(&mut r).moments(2 * n).unwrap();
        for k in 0..steps {
            min_eig = min_eig.min(scaled_min_eig(&traj[k + 1]).unwrap());
            let u = solve_control_moments(&traj[k], &traj[k + 1], &a, 1.0, &DynamicsKind::Linear)
                .unwrap();
            full_gain_ok &= u == traj[k + 1] && scaled_min_eig(&u).unwrap() >= -TAU_PSD;
        }
    }
    let pass = min_eig > 0.0 && full_gain_ok;
    report(
        "criterion 6 (interpolation and full-gain feasibility)",
        pass,
        &format!("smallest scaled Hankel eigenvalue={min_eig:.2e}, c=1 exact and feasible={full_gain_ok}"),
    );
    assert!(min_eig > 0.0, "{min_eig:e}");
    assert!(full_gain_ok);
}

/// Next-state law: a random mixture, or a near-atomic pair of bumps so that
/// the feasible floor is interior.
fn random_next<R: Rng>(r: &mut R) -> ScalarDistribution {
    if r.random_bool(0.5) {
        random_mixture(r)
    } else {
        let sep = r.random_range(0.5..3.0);
        two_gaussians(-sep, r.random_range(0.005..0.3), sep, r.random_range(0.005..0.3))
    }
}

#[test]
fn criterion_7_feasible_interval_and_convexity() {
    const GRID: usize = 1001;
    let mut r = rng(7);
    let (mut contiguous, mut convex, mut certified) = (0, 0, 0);
    let mut worst_convexity = f64::NEG_INFINITY;
    let mut worst_certificate = f64::NEG_INFINITY;
    let mut interior = 0;
    for _ in 0..100 {
        let x0 = random_mixture(&mut r).moments(4).unwrap();
        let x1 = random_next(&mut r).moments(4).unwrap();
        let a = random_parameter(&mut r).moments(4).unwrap();
        let f = DynamicsKind::Linear;
        let grid: Vec<f64> = (0..GRID).map(|i| i as f64 / (GRID - 1) as f64).collect();
        let feasible: Vec<bool> = grid
            .iter()
            .map(|&c| control_min_eig(&x0, &x1, &a, c, &f).unwrap() >= -TAU_PSD)
            .collect();
        let first = feasible.iter().position(|&b| b).unwrap();
        let last = feasible.iter().rposition(|&b| b).unwrap();
        if last == GRID - 1 && feasible[first..=last].iter().all(|&b| b) {
            contiguous += 1;
        }
        if first > 0 {
            interior += 1;
        }

        let cost = |c: f64| cost_at(&x0, &x1, &a, c, &f).unwrap();
        let mut gap = f64::NEG_INFINITY;
        for _ in 0..20 {
            let c1 = grid[r.random_range(first..=last)];
            let c2 = grid[r.random_range(first..=last)];
            gap = gap.max(cost(0.5 * (c1 + c2)) - 0.5 * (cost(c1) + cost(c2)));
        }
        worst_convexity = worst_convexity.max(gap);
        if gap <= 1e-12 {
            convex += 1;
        }

        let g = optimize_gain(&x0, &x1, &a, &f).unwrap();
        let grid_min = grid[first..=last].iter().map(|&c| cost(c)).fold(f64::INFINITY, f64::min);
        let excess = g.cost - grid_min;
        worst_certificate = worst_certificate.max(excess);
        if excess <= 1e-9 {
            certified += 1;
        }
    }
    let pass = contiguous == 100 && convex == 100 && certified == 100;
    report(
        "criterion 7 (feasible interval and convexity)",
        pass,
        &format!(
            "contiguous={contiguous}/100 ({interior} with interior floor), midpoint-convex={convex}/100 \
             (worst gap {worst_convexity:.1e}), optimality certificate={certified}/100 (worst excess {worst_certificate:.1e})"
        ),
    );
    assert_eq!(contiguous, 100);
    assert_eq!(convex, 100, "worst gap {worst_convexity:e}");
    assert_eq!(certified, 100, "worst excess {worst_certificate:e}");
}
