#![allow(dead_code)]

use moment_steer::distributions::DEFAULT_ORDER_CAP;
use moment_steer::engine::SteeringProblem;
use moment_steer::{DynamicsKind, MomentVector, ScalarDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gaussian(mean: f64, var: f64) -> ScalarDistribution {
    ScalarDistribution::gaussian(mean, var).unwrap()
}

pub fn mixture(weights: &[f64], components: Vec<ScalarDistribution>) -> ScalarDistribution {
    ScalarDistribution::mixture(weights.to_vec(), components).unwrap()
}

pub fn two_gaussians(m1: f64, v1: f64, m2: f64, v2: f64) -> ScalarDistribution {
    mixture(&[0.5, 0.5], vec![gaussian(m1, v1), gaussian(m2, v2)])
}

fn problem(
    horizon: usize,
    dynamics: DynamicsKind,
    parameter: ScalarDistribution,
    target: ScalarDistribution,
) -> SteeringProblem {
    SteeringProblem {
        horizon,
        half_order: 2,
        dynamics,
        parameter: vec![parameter],
        initial: gaussian(0.0, 1.0),
        target,
        agents: 2000,
        seed: 0,
        heavy_tail_prior: false,
        moment_cap: DEFAULT_ORDER_CAP,
    }
}

/// Uniform parameter, bimodal target with close modes.
pub fn example_1() -> SteeringProblem {
    problem(
        4,
        DynamicsKind::Linear,
        ScalarDistribution::uniform(0.5, 0.6).unwrap(),
        two_gaussians(-2.0, 4.0, 2.0, 4.0),
    )
}

/// Laplace parameter, bimodal target with well separated modes.
pub fn example_2() -> SteeringProblem {
    problem(
        4,
        DynamicsKind::Linear,
        ScalarDistribution::laplace(0.5, 0.1).unwrap(),
        two_gaussians(-2.0, 1.0, 3.0, 1.0),
    )
}

/// Bimodal parameter, generalized logistic mixture target.
pub fn example_3() -> SteeringProblem {
    problem(
        4,
        DynamicsKind::Linear,
        two_gaussians(0.3, 0.04, 0.7, 0.04),
        mixture(
            &[0.5, 0.5],
            vec![
                ScalarDistribution::generalized_logistic(1.0, 1.0).unwrap(),
                ScalarDistribution::generalized_logistic(-1.0, 2.0).unwrap(),
            ],
        ),
    )
}

/// Quadratic dynamics in two steps.
pub fn example_4() -> SteeringProblem {
    problem(
        2,
        DynamicsKind::Monomial { degree: 2 },
        ScalarDistribution::uniform(0.5, 0.6).unwrap(),
        two_gaussians(-2.0, 4.0, 2.0, 4.0),
    )
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian mixture with one to three components.
pub fn random_mixture<R: Rng>(rng: &mut R) -> ScalarDistribution {
    let count = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..count - 1].iter().sum();
    weights[count - 1] = 1.0 - head;
    let components = (0..count)
        .map(|_| gaussian(rng.random_range(-2.0..2.0), rng.random_range(0.1..1.5)))
        .collect();
    mixture(&weights, components)
}

/// Parameter law with positive mean: uniform, Laplace or Gaussian.
pub fn random_parameter<R: Rng>(rng: &mut R) -> ScalarDistribution {
    let center = rng.random_range(0.1..0.9);
    let spread = rng.random_range(0.01..0.2);
    match rng.random_range(0..3) {
        0 => ScalarDistribution::uniform(center - spread, center + spread).unwrap(),
        1 => ScalarDistribution::laplace(center, spread).unwrap(),
        _ => gaussian(center, spread * spread),
    }
}

/// Atomic law with one to `max_atoms` atoms in `[lo, hi]`.
pub fn random_atomic<R: Rng>(rng: &mut R, max_atoms: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let count = rng.random_range(1..=max_atoms);
    let mut points: Vec<f64> = (0..count).map(|_| rng.random_range(lo..hi)).collect();
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let raw: Vec<f64> = points.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let probs = raw.iter().map(|p| p / total).collect();
    (points, probs)
}

/// Exact moments `Σ p·x^ℓ` of an atomic law, `ℓ = 1..=order`.
pub fn atomic_moments(points: &[f64], probs: &[f64], order: usize) -> MomentVector {
    MomentVector::new(
        (1..=order)
            .map(|l| points.iter().zip(probs).map(|(x, p)| p * x.powi(l as i32)).sum())
            .collect(),
    )
}

/// Law of `(1 − c)·a·f(x) + ũ` by enumerating every atom triple.
pub fn enumerate_next(
    x: (&[f64], &[f64]),
    a: (&[f64], &[f64]),
    u: (&[f64], &[f64]),
    c: f64,
    f: &DynamicsKind,
) -> (Vec<f64>, Vec<f64>) {
    let mut points = Vec::new();
    let mut probs = Vec::new();
    for (xi, px) in x.0.iter().zip(x.1) {
        for (ai, pa) in a.0.iter().zip(a.1) {
            for (ui, pu) in u.0.iter().zip(u.1) {
                points.push((1.0 - c) * ai * f.eval(*xi) + ui);
                probs.push(px * pa * pu);
            }
        }
    }
    (points, probs)
}

/// Largest `|got − want| / max(1, |want|)`.
pub fn max_rel_error(got: &MomentVector, want: &MomentVector) -> f64 {
    got.values()
        .iter()
        .zip(want.values())
        .map(|(g, w)| (g - w).abs() / w.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Whether every empirical moment up to `order` lies within `k` standard
/// errors of `target`.
pub fn within_standard_errors(states: &[f64], target: &MomentVector, order: usize, k: f64) -> bool {
    let m = moment_steer::engine::empirical_moments(states, order);
    let se = moment_steer::engine::moment_standard_errors(states, order);
    (1..=order).all(|l| (m.get(l) - target.get(l)).abs() <= k * se[l - 1])
}
