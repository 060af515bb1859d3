//! Density realization from power moments.
//!
//! Among densities on ℝ with prescribed moments `σ_0..σ_2n`, the one closest
//! to a prior `r` in Kullback-Leibler divergence has the form `r / q`, where
//! `q(u) = Σ_m count(m)·λ_m·u^m` is positive and `λ` are the Hankel
//! parameters of a symmetric matrix `Λ` (`count(m)` is the number of index
//! pairs `i + j = m`). `λ` minimizes the convex dual
//!
//! ```text
//! J(λ) = Σ_m count(m)·λ_m·σ_m − ∫ r(u)·log q(u) du.
//! ```
//!
//! Internally the problem is solved in standardized coordinates
//! `z = (u − σ₁)/sd`, which keeps the Newton system well scaled; public values
//! are reported in the original coordinates. When the Hankel matrix of `σ` is
//! singular the moments belong to an atomic measure, which is recovered
//! directly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::ScalarDistribution;
use crate::dynamics::kahan_sum;
use crate::error::{Error, Result};
use crate::moments::{binomial_table, scaled_min_eig, MomentVector, TAU_PSD};
use crate::quadrature::{composite_rule, integrate_vec, Domain, DEFAULT_RTOL};

/// Gradient ∞-norm at which Newton's method stops.
pub const GRAD_TOL: f64 = 1e-9;
/// Iteration budget for Newton's method.
pub const MAX_ITER: usize = 200;
/// Variance inflation of the default Gaussian prior.
pub const PRIOR_INFLATION: f64 = 1.5;
/// Probable-error factor turning a standard deviation into a Cauchy scale.
pub const CAUCHY_SCALE_FACTOR: f64 = 0.6745;

const WIDER_PRIOR_FACTORS: [f64; 2] = [4.0, 16.0];
const MIN_PANELS: usize = 128;
const MAX_RULE_PANELS: usize = 4096;
const RULE_RTOL: f64 = 1e-13;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
const BLOCK_SINGULAR_TOL: f64 = 1e-8;
const IMAG_TOL: f64 = 1e-6;
const NEGATIVE_WEIGHT_TOL: f64 = 1e-10;
/// Rejection sampling from the prior is used while its acceptance rate
/// `min q` stays above this.
const MIN_ACCEPTANCE: f64 = 1e-3;

/// Number of index pairs `(i, j)`, `0 ≤ i, j ≤ n`, with `i + j = m`.
pub fn pair_count(m: usize, n: usize) -> f64 {
    (m.min(2 * n - m) + 1) as f64
}

/// Prior selection: a Gaussian matched to the first two moments with
/// inflated variance, or a Cauchy law with the same center when the target
/// is heavy-tailed.
pub fn choose_prior(sigma: &MomentVector, heavy_tail: bool) -> Result<ScalarDistribution> {
    if sigma.order() < 2 {
        return Err(Error::InsufficientOrder {
            what: "control moments",
            needed: 2,
            available: sigma.order(),
        });
    }
    let mean = sigma.get(1);
    let var = sigma.get(2) - mean * mean;
    if !(var > TAU_PSD) {
        return Err(Error::DegenerateVariance(var));
    }
    if heavy_tail {
        ScalarDistribution::cauchy(mean, CAUCHY_SCALE_FACTOR * var.sqrt())
    } else {
        ScalarDistribution::gaussian(mean, PRIOR_INFLATION * var)
    }
}

/// Prescribed moments together with the prior and a fixed quadrature rule
/// against it.
#[derive(Debug, Clone)]
pub struct RealizationProblem {
    sigma: MomentVector,
    prior: ScalarDistribution,
    n: usize,
    shift: f64,
    scale: f64,
    /// Standardized nodes `z_i`, with weights `w_i ≈ r(u_i)·du` so that
    /// `Σ w_i g(u_i) ≈ ∫ r g du` at `u_i = shift + scale·z_i`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RealizationProblem {
    pub fn new(sigma: MomentVector, prior: ScalarDistribution) -> Result<Self> {
        let n = sigma.half_order()?;
        if n == 0 {
            return Err(Error::InsufficientOrder {
                what: "control moments",
                needed: 2,
                available: 0,
            });
        }
        if prior.is_atomic() {
            return Err(Error::NoDensity);
        }
        let shift = sigma.get(1);
        let var = sigma.get(2) - shift * shift;
        let scale = if var > 0.0 && var.is_finite() { var.sqrt() } else { 1.0 };
        let (nodes, weights) = prior_rule(&prior, shift, scale, n)?;
        Ok(Self {
            sigma,
            prior,
            n,
            shift,
            scale,
            nodes,
            weights,
        })
    }

    pub fn sigma(&self) -> &MomentVector {
        &self.sigma
    }

    pub fn prior(&self) -> &ScalarDistribution {
        &self.prior
    }

    pub fn half_order(&self) -> usize {
        self.n
    }

    /// Quadrature nodes on the original axis and their prior weights.
    pub fn rule(&self) -> (Vec<f64>, Vec<f64>) {
        let u = self.nodes.iter().map(|z| self.shift + self.scale * z).collect();
        (u, self.weights.clone())
    }

    fn standardized_sigma(&self) -> Vec<f64> {
        standardize_moments(&self.sigma.with_zeroth(), self.shift, self.scale)
    }

    fn raw_dual(&self) -> Dual<'_> {
        let (u, _) = self.rule();
        Dual {
            n: self.n,
            sigma: self.sigma.with_zeroth(),
            nodes: std::borrow::Cow::Owned(u),
            weights: &self.weights,
        }
    }

    fn standardized_dual(&self) -> Dual<'_> {
        Dual {
            n: self.n,
            sigma: self.standardized_sigma(),
            nodes: std::borrow::Cow::Borrowed(&self.nodes),
            weights: &self.weights,
        }
    }
}

/// Composite rule against the prior in standardized coordinates. Panels are
/// doubled until integrals of bounded test functions shaped like the dual
/// integrands stop changing, then padded for resolution of `1/q`.
fn prior_rule(
    prior: &ScalarDistribution,
    shift: f64,
    scale: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c, s) = prior.center_scale();
    let domain = Domain::RealLine {
        center: (c - shift) / scale,
        scale: (s / scale).max(1e-3),
    };
    let density = |z: f64| prior.pdf(shift + scale * z).map(|p| p * scale);
    let tests = |xs: &[f64], ws: &[f64]| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; 2 * n + 1];
        for (z, w) in xs.iter().zip(ws) {
            let r = density(*z)? * w;
            let damp = (1.0 + z * z).powi(n as i32);
            let mut p = 1.0;
            for a in acc.iter_mut() {
                *a += r * p / damp;
                p *= z;
            }
        }
        Ok(acc)
    };

    let mut panels = 8;
    let (xs, ws) = composite_rule(domain, panels);
    let mut prev = tests(&xs, &ws)?;
    loop {
        panels *= 2;
        let (xs, ws) = composite_rule(domain, panels);
        let cur = tests(&xs, &ws)?;
        let done = cur
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= RULE_RTOL * cur[0].abs().max(1e-300));
        prev = cur;
        if done || panels >= MAX_RULE_PANELS {
            break;
        }
    }
    let panels = (2 * panels).clamp(MIN_PANELS, MAX_RULE_PANELS);
    let (xs, ws) = composite_rule(domain, panels);
    let mut nodes = Vec::with_capacity(xs.len());
    let mut weights = Vec::with_capacity(xs.len());
    for (z, w) in xs.into_iter().zip(ws) {
        let wr = w * density(z)?;
        if wr > 0.0 && wr.is_finite() && z.is_finite() {
            nodes.push(z);
            weights.push(wr);
        }
    }
    if nodes.is_empty() {
        return Err(Error::InvalidDistribution("prior has no mass on the working grid".into()));
    }
    Ok((nodes, weights))
}

/// Moments of `(u − shift)/scale` from moments of `u` (index 0 included).
fn standardize_moments(raw: &[f64], shift: f64, scale: f64) -> Vec<f64> {
    let binom = binomial_table(raw.len() - 1);
    (0..raw.len())
        .map(|m| {
            let s = kahan_sum(
                (0..=m).map(|j| binom[m][j] * raw[j] * (-shift).powi((m - j) as i32)),
            );
            s / scale.powi(m as i32)
        })
        .collect()
}

/// Polynomial coefficients of `q(u) = p((u − shift)/scale)` given those of `p`.
pub(crate) fn compose_affine(coeffs: &[f64], shift: f64, scale: f64) -> Vec<f64> {
    let binom = binomial_table(coeffs.len() - 1);
    let mut out = vec![0.0; coeffs.len()];
    for (m, c) in coeffs.iter().enumerate() {
        let cm = c / scale.powi(m as i32);
        for (j, o) in out.iter_mut().enumerate().take(m + 1) {
            *o += cm * binom[m][j] * (-shift).powi((m - j) as i32);
        }
    }
    out
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// The dual objective against a fixed weighted rule.
struct Dual<'a> {
    n: usize,
    sigma: Vec<f64>,
    nodes: std::borrow::Cow<'a, [f64]>,
    weights: &'a [f64],
}

struct DualEval {
    value: f64,
    grad: Vec<f64>,
    q: Vec<f64>,
}

impl Dual<'_> {
    fn dim(&self) -> usize {
        2 * self.n + 1
    }

    fn coeffs(&self, lambda: &[f64]) -> Vec<f64> {
        lambda
            .iter()
            .enumerate()
            .map(|(m, l)| pair_count(m, self.n) * l)
            .collect()
    }

    fn q_values(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        if lambda[2 * self.n] < 0.0 {
            return Err(Error::NonPositiveQ);
        }
        let c = self.coeffs(lambda);
        let q: Vec<f64> = self.nodes.iter().map(|&x| horner(&c, x)).collect();
        if q.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveQ);
        }
        Ok(q)
    }

    fn evaluate(&self, lambda: &[f64]) -> Result<DualEval> {
        let q = self.q_values(lambda)?;
        let dim = self.dim();
        let mut integrals = vec![0.0; dim];
        let mut log_term = 0.0;
        let mut log_comp = 0.0;
        for ((x, w), qi) in self.nodes.iter().zip(self.weights).zip(&q) {
            let base = w / qi;
            let mut p = 1.0;
            for v in integrals.iter_mut() {
                *v += base * p;
                p *= x;
            }
            // compensated, since this sum sets the objective's precision
            let y = w * qi.ln() - log_comp;
            let t = log_term + y;
            log_comp = (t - log_term) - y;
            log_term = t;
        }
        let linear = kahan_sum((0..dim).map(|m| pair_count(m, self.n) * lambda[m] * self.sigma[m]));
        let grad = (0..dim)
            .map(|m| pair_count(m, self.n) * (self.sigma[m] - integrals[m]))
            .collect();
        Ok(DualEval {
            value: linear - log_term,
            grad,
            q,
        })
    }

    fn hessian_from_q(&self, q: &[f64]) -> DMatrix<f64> {
        let dim = self.dim();
        let mut s = vec![0.0; 2 * dim - 1];
        for ((x, w), qi) in self.nodes.iter().zip(self.weights).zip(q) {
            let base = w / (qi * qi);
            let mut p = 1.0;
            for v in s.iter_mut() {
                *v += base * p;
                p *= x;
            }
        }
        DMatrix::from_fn(dim, dim, |i, j| {
            pair_count(i, self.n) * pair_count(j, self.n) * s[i + j]
        })
    }
}

/// Dual objective and gradient at raw-coordinate Hankel parameters `lambda`.
pub fn dual_objective(lambda: &[f64], problem: &RealizationProblem) -> Result<(f64, Vec<f64>)> {
    check_dim(lambda, problem)?;
    let e = problem.raw_dual().evaluate(lambda)?;
    Ok((e.value, e.grad))
}

/// Dual Hessian `count(m)·count(m')·∫ r·u^{m+m'}/q² du`.
pub fn dual_hessian(lambda: &[f64], problem: &RealizationProblem) -> Result<DMatrix<f64>> {
    check_dim(lambda, problem)?;
    let dual = problem.raw_dual();
    let q = dual.q_values(lambda)?;
    Ok(dual.hessian_from_q(&q))
}

fn check_dim(lambda: &[f64], problem: &RealizationProblem) -> Result<()> {
    if lambda.len() != 2 * problem.n + 1 {
        return Err(Error::InvalidProblem(format!(
            "expected {} Hankel parameters, got {}",
            2 * problem.n + 1,
            lambda.len()
        )));
    }
    Ok(())
}

/// Shape of a realized control law.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    Continuous,
    Atomic { points: Vec<f64>, probs: Vec<f64> },
}

/// A control law realized from moments. Continuous laws carry the dual
/// solution and a tabulated density used for sampling and export.
#[derive(Debug, Clone)]
pub struct RealizedDensity {
    /// Hankel parameters of `Λ` in the original coordinates; empty for atomic
    /// laws.
    pub lambda: Vec<f64>,
    pub prior: ScalarDistribution,
    pub kind: DensityKind,
    pub iterations: usize,
    pub grad_norm: f64,
    shift: f64,
    scale: f64,
    /// Coefficients of `q` as a polynomial in the standardized variable.
    std_coeffs: Vec<f64>,
    /// Lower bound on `q`, set when sampling by rejection from the prior.
    accept_floor: Option<f64>,
    law: ScalarDistribution,
}

impl RealizedDensity {
    fn atomic(points: Vec<f64>, probs: Vec<f64>, prior: ScalarDistribution) -> Result<Self> {
        let law = ScalarDistribution::atomic(points.clone(), probs.clone())?;
        Ok(Self {
            lambda: Vec::new(),
            prior,
            kind: DensityKind::Atomic { points, probs },
            iterations: 0,
            grad_norm: 0.0,
            shift: 0.0,
            scale: 1.0,
            std_coeffs: Vec::new(),
            accept_floor: None,
            law,
        })
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.kind, DensityKind::Atomic { .. })
    }

    /// Polynomial `q` at `u`.
    pub fn q(&self, u: f64) -> f64 {
        horner(&self.std_coeffs, (u - self.shift) / self.scale)
    }

    /// `r(u) / q(u)`.
    pub fn pdf(&self, u: f64) -> Result<f64> {
        match self.kind {
            DensityKind::Atomic { .. } => Err(Error::NoDensity),
            DensityKind::Continuous => Ok(self.prior.pdf(u)? / self.q(u)),
        }
    }

    /// Tabulated (continuous) or atomic law used for sampling and export.
    pub fn law(&self) -> &ScalarDistribution {
        &self.law
    }

    /// Moments computed independently of the dual solver's fixed rule:
    /// adaptive quadrature of `u^ℓ r/q` for continuous laws, exact sums for
    /// atomic ones.
    pub fn moments_by_quadrature(&self, order: usize) -> Result<MomentVector> {
        match &self.kind {
            DensityKind::Atomic { .. } => self.law.moments(order),
            DensityKind::Continuous => {
                let domain = Domain::RealLine {
                    center: self.shift,
                    scale: self.scale,
                };
                let vals = integrate_vec(
                    |u, out| {
                        let p = self.prior.pdf(u).unwrap_or(0.0) / self.q(u);
                        let mut x = p;
                        for o in out.iter_mut() {
                            *o = x;
                            x *= u;
                        }
                    },
                    order + 1,
                    domain,
                    DEFAULT_RTOL,
                )
                .map_err(|_| Error::MomentUndefined("realized density moments diverge".into()))?;
                Ok(MomentVector::new(vals[1..].to_vec()))
            }
        }
    }

    /// Total mass `∫ r/q` (1 for atomic laws).
    pub fn mass(&self) -> Result<f64> {
        match self.kind {
            DensityKind::Atomic { .. } => Ok(1.0),
            DensityKind::Continuous => {
                let domain = Domain::RealLine {
                    center: self.shift,
                    scale: self.scale,
                };
                integrate_vec(
                    |u, out| out[0] = self.prior.pdf(u).unwrap_or(0.0) / self.q(u),
                    1,
                    domain,
                    DEFAULT_RTOL,
                )
                .map(|v| v[0])
                .map_err(|_| Error::MomentUndefined("realized density mass diverges".into()))
            }
        }
    }

    /// One draw. Continuous laws are sampled exactly by drawing `u` from the
    /// prior and accepting with probability `min q / q(u)`; the tabulated
    /// law is the fallback when that acceptance rate is too small.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.accept_floor {
            Some(floor) => loop {
                let u = self.prior.sample_one(rng);
                if rng.random::<f64>() * self.q(u) <= floor {
                    return u;
                }
            },
            None => self.law.sample_one(rng),
        }
    }

    /// Export rows `(u, value, weight)` with `Σ weight·value·g(u) ≈ ∫ g dν`.
    /// Continuous laws list `r/q` at the table nodes with the weights of the
    /// trapezoid rule in the mapped variable `t`, `u = shift + scale·t/(1 − t²)`;
    /// atomic laws list each point with its probability and weight 1.
    pub fn table(&self) -> Vec<(f64, f64, f64)> {
        match (&self.kind, &self.law) {
            (DensityKind::Atomic { points, probs }, _) => points
                .iter()
                .zip(probs)
                .map(|(&u, &p)| (u, p, 1.0))
                .collect(),
            (DensityKind::Continuous, ScalarDistribution::Grid(g)) => {
                let h = 2.0 / (g.grid().len() + 1) as f64;
                g.grid()
                    .iter()
                    .map(|&u| {
                        let z = (u - self.shift) / self.scale;
                        // invert z = t/(1 − t²) on (−1, 1)
                        let t = if z == 0.0 { 0.0 } else { (2.0 * z) / (1.0 + (1.0 + 4.0 * z * z).sqrt()) };
                        let d = 1.0 - t * t;
                        let weight = h * self.scale * (1.0 + t * t) / (d * d);
                        (u, self.pdf(u).unwrap_or(0.0), weight)
                    })
                    .collect()
            }
            _ => Vec::new(),
        }
    }
}

/// Realizes the prescribed moments as a density: the KL-closest one to the
/// prior when the Hankel matrix is positive definite, the atomic measure it
/// determines when singular.
pub fn realize(problem: &RealizationProblem) -> Result<RealizedDensity> {
    let eig = scaled_min_eig(&problem.sigma)?;
    if eig < -TAU_PSD || eig.is_nan() {
        return Err(Error::HankelIndefinite(eig));
    }
    if eig <= TAU_PSD {
        let (points, probs) = atomic_from_singular(&problem.sigma)?;
        return RealizedDensity::atomic(points, probs, problem.prior.clone());
    }
    solve_dual(problem)
}

/// Moments, prior selection and realization in one call.
pub fn realize_moments(sigma: &MomentVector, heavy_tail: bool) -> Result<RealizedDensity> {
    let eig = scaled_min_eig(sigma)?;
    if eig < -TAU_PSD || eig.is_nan() {
        return Err(Error::HankelIndefinite(eig));
    }
    if eig <= TAU_PSD {
        let (points, probs) = atomic_from_singular(sigma)?;
        let prior = ScalarDistribution::atomic(points.clone(), probs.clone())?;
        return RealizedDensity::atomic(points, probs, prior);
    }
    let prior = choose_prior(sigma, heavy_tail)?;
    let first = realize(&RealizationProblem::new(sigma.clone(), prior)?);
    if heavy_tail || !matches!(first, Err(Error::NotConverged { .. })) {
        return first;
    }
    // A prior with lighter tails than the target leaves the dual minimum on
    // the boundary `λ_2n = 0`; widen it, then fall back to a Cauchy prior.
    let mean = sigma.get(1);
    let var = sigma.get(2) - mean * mean;
    for factor in WIDER_PRIOR_FACTORS {
        let prior = ScalarDistribution::gaussian(mean, factor * var)?;
        if let Ok(d) = realize(&RealizationProblem::new(sigma.clone(), prior)?) {
            return Ok(d);
        }
    }
    let cauchy = choose_prior(sigma, true)?;
    realize(&RealizationProblem::new(sigma.clone(), cauchy)?).or(first)
}

fn solve_dual(problem: &RealizationProblem) -> Result<RealizedDensity> {
    let dual = problem.standardized_dual();
    let dim = dual.dim();
    let mut lambda = initial_lambda(problem, &dual);
    let mut eval = dual.evaluate(&lambda)?;
    let mut iterations = 0;
    let mut grad_norm = inf_norm(&eval.grad);

    while grad_norm > GRAD_TOL && iterations < MAX_ITER {
        iterations += 1;
        let g = DVector::from_column_slice(&eval.grad);
        let hess = dual.hessian_from_q(&eval.q);
        let mut direction = newton_direction(&hess, &g);
        if lambda[dim - 1] <= 0.0 && direction[dim - 1] < 0.0 {
            // The leading coefficient sits on its bound: step in the others.
            let reduced = newton_direction(
                &hess.view((0, 0), (dim - 1, dim - 1)).into_owned(),
                &g.rows(0, dim - 1).into_owned(),
            );
            direction = DVector::from_fn(dim, |i, _| if i + 1 < dim { reduced[i] } else { 0.0 });
        }
        let slope = direction.dot(&g);
        let slack = 1e-14 * eval.value.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        while t >= MIN_STEP {
            let trial: Vec<f64> = lambda
                .iter()
                .zip(direction.iter())
                .map(|(l, d)| l + t * d)
                .collect();
            if let Ok(e) = dual.evaluate(&trial) {
                if e.value <= eval.value + ARMIJO * t * slope + slack {
                    accepted = Some((trial, e));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                let new_norm = inf_norm(&e.grad);
                let stalled = e.value >= eval.value && new_norm >= grad_norm;
                lambda = trial;
                eval = e;
                grad_norm = new_norm;
                if stalled && t < 1.0 {
                    break;
                }
            }
            None => break,
        }
    }

    let density = assemble(problem, &lambda, iterations, grad_norm)?;
    if grad_norm > GRAD_TOL {
        return Err(Error::NotConverged {
            iterations,
            grad_norm,
            best: Box::new(density),
        });
    }
    Ok(density)
}

/// Starting point of the Newton iteration: `q = 1`, except for a Cauchy prior
/// whose power moments diverge. There `q ∝ (1 + ((z − c)/s)²)^n` makes `r/q`
/// a normalized law with finite moments up to order `2n`.
fn initial_lambda(problem: &RealizationProblem, dual: &Dual<'_>) -> Vec<f64> {
    let dim = dual.dim();
    let mut unit = vec![0.0; dim];
    unit[0] = 1.0;
    let ScalarDistribution::Cauchy { location, scale } = problem.prior else {
        return unit;
    };
    let c = (location - problem.shift) / problem.scale;
    let s2 = (scale / problem.scale).powi(2);
    let base = [1.0 + c * c / s2, -2.0 * c / s2, 1.0 / s2];
    let mut coeffs = vec![1.0];
    for _ in 0..problem.n {
        let mut next = vec![0.0; coeffs.len() + 2];
        for (i, a) in coeffs.iter().enumerate() {
            for (j, b) in base.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        coeffs = next;
    }
    let mass: f64 = dual
        .nodes
        .iter()
        .zip(dual.weights)
        .map(|(z, w)| w / horner(&coeffs, *z))
        .sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return unit;
    }
    coeffs
        .iter()
        .enumerate()
        .map(|(m, a)| mass * a / pair_count(m, problem.n))
        .collect()
}

/// Newton direction, or steepest descent when the Hessian is not usable.
fn newton_direction(hess: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    match hess.clone().cholesky().map(|ch| -ch.solve(g)) {
        Some(d) if d.iter().all(|v| v.is_finite()) && d.dot(g) < 0.0 => d,
        _ => -g.clone(),
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn assemble(
    problem: &RealizationProblem,
    std_lambda: &[f64],
    iterations: usize,
    grad_norm: f64,
) -> Result<RealizedDensity> {
    let n = problem.n;
    let std_coeffs: Vec<f64> = std_lambda
        .iter()
        .enumerate()
        .map(|(m, l)| pair_count(m, n) * l)
        .collect();
    let raw_coeffs = compose_affine(&std_coeffs, problem.shift, problem.scale);
    let lambda = raw_coeffs
        .iter()
        .enumerate()
        .map(|(m, c)| c / pair_count(m, n))
        .collect();
    let (shift, scale) = (problem.shift, problem.scale);
    let prior = problem.prior.clone();
    let pdf = |u: f64| prior.pdf(u).unwrap_or(0.0) / horner(&std_coeffs, (u - shift) / scale);
    let grid = crate::distributions::GridDensity::tabulate_on_line(pdf, shift, scale)?;
    let accept_floor = minimum_of_q(&std_coeffs, &grid, shift, scale)
        .map(|m| (1.0 - 1e-9) * m)
        .filter(|m| *m >= MIN_ACCEPTANCE);
    let law = ScalarDistribution::Grid(grid);
    Ok(RealizedDensity {
        lambda,
        prior: problem.prior.clone(),
        kind: DensityKind::Continuous,
        iterations,
        grad_norm,
        shift,
        scale,
        std_coeffs,
        accept_floor,
        law,
    })
}

/// Global minimum of the standardized polynomial `q`, from its real critical
/// points and the table nodes. `None` unless `q` has even degree with a
/// positive leading coefficient.
fn minimum_of_q(
    coeffs: &[f64],
    grid: &crate::distributions::GridDensity,
    shift: f64,
    scale: f64,
) -> Option<f64> {
    let big = inf_norm(coeffs);
    let deg = coeffs.iter().rposition(|c| c.abs() > 1e-13 * big)?;
    if deg % 2 == 1 || coeffs[deg] <= 0.0 {
        return None;
    }
    let mut lowest = grid
        .grid()
        .iter()
        .map(|u| horner(coeffs, (u - shift) / scale))
        .fold(coeffs[0], f64::min);
    if deg >= 2 {
        let d: Vec<f64> = (1..=deg).map(|m| m as f64 * coeffs[m]).collect();
        let lead = d[deg - 1];
        let companion = DMatrix::from_fn(deg - 1, deg - 1, |i, j| {
            if i == 0 {
                -d[deg - 2 - j] / lead
            } else if j + 1 == i {
                1.0
            } else {
                0.0
            }
        });
        for e in companion.complex_eigenvalues().iter() {
            if e.im.abs() <= IMAG_TOL * e.re.abs().max(1.0) {
                lowest = lowest.min(horner(coeffs, e.re));
            }
        }
    }
    (lowest > 0.0 && lowest.is_finite()).then_some(lowest)
}

/// Support and weights of the atomic measure determined by moments whose
/// Hankel matrix is singular: the kernel polynomial of the smallest singular
/// leading block vanishes on the support, and the weights solve the
/// Vandermonde moment equations in the least-squares sense.
pub fn atomic_from_singular(sigma: &MomentVector) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = sigma.half_order()?;
    let eig = scaled_min_eig(sigma)?;
    if eig < -TAU_PSD || eig.is_nan() {
        return Err(Error::HankelIndefinite(eig));
    }
    let mean = sigma.get(1);
    let var = sigma.get(2) - mean * mean;
    if var <= TAU_PSD * sigma.get(2).abs().max(1.0) {
        return Ok((vec![mean], vec![1.0]));
    }
    let scale = var.sqrt();
    let z = standardize_moments(&sigma.with_zeroth(), mean, scale);

    // smallest leading block that is singular; the full matrix is the
    // fallback when only the overall tolerance flagged it
    let mut rank = n;
    let mut null = None;
    for r in 2..=n {
        let block = DMatrix::from_fn(r + 1, r + 1, |i, j| z[i + j]);
        let se = block.symmetric_eigen();
        let (k, &lo) = se
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        if lo <= BLOCK_SINGULAR_TOL || r == n {
            rank = r;
            null = Some(se.eigenvectors.column(k).into_owned());
            break;
        }
    }
    let roots = match null {
        None => {
            // n = 1 with positive variance: two points from mean and variance
            vec![-1.0, 1.0]
        }
        Some(v) => real_roots(v.as_slice())?,
    };
    debug_assert!(roots.len() <= rank);

    let m = z.len();
    let vander = DMatrix::from_fn(m, roots.len(), |l, j| roots[j].powi(l as i32));
    let rhs = DVector::from_column_slice(&z);
    let svd = vander.svd(true, true);
    let probs = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidProblem(e.to_string()))?;
    let mut pairs: Vec<(f64, f64)> = roots
        .iter()
        .map(|r| mean + scale * r)
        .zip(probs.iter().copied())
        .collect();
    if let Some(&(_, p)) = pairs.iter().find(|(_, p)| *p < -NEGATIVE_WEIGHT_TOL) {
        return Err(Error::NegativeWeight(p));
    }
    pairs.retain(|(_, p)| *p > 0.0);
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|(_, p)| p).sum();
    let points = pairs.iter().map(|(x, _)| *x).collect();
    let probs = pairs.iter().map(|(_, p)| p / total).collect();
    Ok((points, probs))
}

/// Real roots of `Σ v_i z^i`, via the companion matrix.
fn real_roots(v: &[f64]) -> Result<Vec<f64>> {
    let scale = inf_norm(v);
    let mut deg = v.len() - 1;
    while deg > 0 && v[deg].abs() <= 1e-13 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Err(Error::ComplexRoots);
    }
    let lead = v[deg];
    let companion = DMatrix::from_fn(deg, deg, |i, j| {
        if i == 0 {
            -v[deg - 1 - j] / lead
        } else if j + 1 == i {
            1.0
        } else {
            0.0
        }
    });
    let eigs = companion.complex_eigenvalues();
    let mut roots = Vec::with_capacity(deg);
    for e in eigs.iter() {
        if e.im.abs() > IMAG_TOL * e.re.abs().max(1.0) {
            return Err(Error::ComplexRoots);
        }
        roots.push(e.re);
    }
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(mean: f64, var: f64) -> ScalarDistribution {
        ScalarDistribution::gaussian(mean, var).unwrap()
    }

    fn assert_moments_match(d: &RealizedDensity, sigma: &MomentVector, tol: f64) {
        let m = d.moments_by_quadrature(sigma.order()).unwrap();
        for l in 1..=sigma.order() {
            let err = (m.get(l) - sigma.get(l)).abs() / sigma.get(l).abs().max(1.0);
            assert!(err <= tol, "order {l}: {} vs {}", m.get(l), sigma.get(l));
        }
        assert!((d.mass().unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn counts_follow_antidiagonals() {
        let c: Vec<f64> = (0..=4).map(|m| pair_count(m, 2)).collect();
        assert_eq!(c, vec![1.0, 2.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn unit_polynomial_objective() {
        let prior = gaussian(0.3, 2.0);
        let sigma = MomentVector::new(vec![0.1, 2.5, 0.4, 18.0]);
        let problem = RealizationProblem::new(sigma.clone(), prior.clone()).unwrap();
        let (value, grad) = dual_objective(&[1.0, 0.0, 0.0, 0.0, 0.0], &problem).unwrap();
        assert!((value - 1.0).abs() < 1e-12);
        let prior_m = prior.moments(4).unwrap();
        for m in 1..=4 {
            let expected = pair_count(m, 2) * (sigma.get(m) - prior_m.get(m));
            assert!((grad[m] - expected).abs() < 1e-10 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn prior_moments_give_prior_back() {
        let prior = gaussian(0.5, 1.7);
        let sigma = prior.moments(4).unwrap();
        let d = realize(&RealizationProblem::new(sigma, prior.clone()).unwrap()).unwrap();
        assert_eq!(d.iterations, 0);
        for x in [-2.0, 0.0, 0.5, 3.0] {
            assert!((d.pdf(x).unwrap() - prior.pdf(x).unwrap()).abs() < 1e-9);
        }
        assert!((d.lambda[0] - 1.0).abs() < 1e-9);
        assert!(d.lambda[1..].iter().all(|l| l.abs() < 1e-9));
    }

    #[test]
    fn first_example_control_realizes() {
        let a = ScalarDistribution::uniform(0.5, 0.6).unwrap().moments(4).unwrap();
        let x0 = MomentVector::new(vec![0.0, 1.0, 0.0, 3.0]);
        let x1 = MomentVector::new(vec![0.0, 2.75, 0.0, 42.25]);
        let sigma = crate::dynamics::solve_control_moments(
            &x0,
            &x1,
            &a,
            0.0,
            &crate::dynamics::DynamicsKind::Linear,
        )
        .unwrap();
        // a prior matched to the variance has lighter tails than this target,
        // which pins the dual minimum to the boundary
        let matched = gaussian(0.0, sigma.get(2));
        let err = realize(&RealizationProblem::new(sigma.clone(), matched).unwrap());
        assert!(matches!(err, Err(Error::NotConverged { .. })));
        let d = realize_moments(&sigma, false).unwrap();
        assert!(!d.is_atomic());
        assert!(d.grad_norm <= GRAD_TOL);
        assert_moments_match(&d, &sigma, 1e-6);
        let default = choose_prior(&sigma, false).unwrap();
        match default {
            ScalarDistribution::Gaussian { mean, var } => {
                assert_eq!(mean, 0.0);
                assert!((var - 1.5 * 2.446_666_666_666_667).abs() < 1e-12);
            }
            other => panic!("unexpected prior {other}"),
        }
    }

    fn widened_prior_density() -> (MomentVector, RealizedDensity) {
        let sigma = MomentVector::new(vec![0.0, 2.446_666_666_666_667, 0.0, 37.53]);
        let d = realize_moments(&sigma, false).unwrap();
        (sigma, d)
    }

    #[test]
    fn exported_table_carries_quadrature_weights() {
        let (sigma, d) = widened_prior_density();
        let rows = d.table();
        for l in 0..=4 {
            let m: f64 = rows.iter().map(|(u, v, w)| w * v * u.powi(l)).sum();
            let want = if l == 0 { 1.0 } else { sigma.get(l as usize) };
            assert!((m - want).abs() <= 1e-8 * want.abs().max(1.0), "order {l}: {m}");
        }
    }

    #[test]
    fn rejection_sampler_reproduces_moments() {
        use rand::SeedableRng;
        let (sigma, d) = widened_prior_density();
        assert!(d.accept_floor.is_some());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        const N: usize = 200_000;
        let xs: Vec<f64> = (0..N).map(|_| d.sample_one(&mut rng)).collect();
        for l in [2usize, 4] {
            let m = xs.iter().map(|x| x.powi(l as i32)).sum::<f64>() / N as f64;
            let m2 = xs.iter().map(|x| x.powi(2 * l as i32)).sum::<f64>() / N as f64;
            let se = ((m2 - m * m) / N as f64).sqrt();
            assert!((m - sigma.get(l)).abs() <= 4.0 * se, "order {l}: {m} ± {se}");
        }
    }

    #[test]
    fn bimodal_target_with_cauchy_prior() {
        let target = ScalarDistribution::mixture(
            vec![0.3, 0.7],
            vec![gaussian(-2.0, 0.5), gaussian(1.5, 0.8)],
        )
        .unwrap();
        let sigma = target.moments(4).unwrap();
        let prior = choose_prior(&sigma, true).unwrap();
        assert!(matches!(prior, ScalarDistribution::Cauchy { .. }));
        let d = realize(&RealizationProblem::new(sigma.clone(), prior).unwrap()).unwrap();
        assert_moments_match(&d, &sigma, 1e-6);
    }

    #[test]
    fn symmetric_two_point_law_is_recovered() {
        let sigma = MomentVector::new(vec![0.0, 1.0, 0.0, 1.0]);
        let d = realize_moments(&sigma, false).unwrap();
        match &d.kind {
            DensityKind::Atomic { points, probs } => {
                assert!((points[0] + 1.0).abs() < 1e-12 && (points[1] - 1.0).abs() < 1e-12);
                assert!((probs[0] - 0.5).abs() < 1e-12 && (probs[1] - 0.5).abs() < 1e-12);
            }
            DensityKind::Continuous => panic!("expected atomic law"),
        }
        assert!(matches!(d.pdf(0.0), Err(Error::NoDensity)));
    }

    #[test]
    fn point_mass_and_published_two_point_law() {
        let pm = MomentVector::new(vec![2.0, 4.0]);
        assert_eq!(atomic_from_singular(&pm).unwrap(), (vec![2.0], vec![1.0]));
        let law = ScalarDistribution::atomic(vec![-2.38, 2.69], vec![0.472, 0.528]).unwrap();
        let sigma = law.moments(4).unwrap();
        let (points, probs) = atomic_from_singular(&sigma).unwrap();
        assert!((points[0] + 2.38).abs() < 1e-8 && (points[1] - 2.69).abs() < 1e-8);
        assert!((probs[0] - 0.472).abs() < 1e-8 && (probs[1] - 0.528).abs() < 1e-8);
    }

    #[test]
    fn fewer_atoms_than_half_order() {
        let law = ScalarDistribution::atomic(vec![-0.5, 3.0], vec![0.25, 0.75]).unwrap();
        let sigma = law.moments(6).unwrap();
        let (points, probs) = atomic_from_singular(&sigma).unwrap();
        assert_eq!(points.len(), 2);
        assert!((points[0] + 0.5).abs() < 1e-8 && (points[1] - 3.0).abs() < 1e-8);
        assert!((probs[0] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn indefinite_moments_are_rejected() {
        let sigma = MomentVector::new(vec![0.0, 1.0, 0.0, 0.5]);
        let prior = gaussian(0.0, 1.5);
        let problem = RealizationProblem::new(sigma, prior).unwrap();
        assert!(matches!(realize(&problem), Err(Error::HankelIndefinite(_))));
        let degenerate = MomentVector::new(vec![1.0, 1.0]);
        assert!(matches!(
            choose_prior(&degenerate, false),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn hessian_is_positive_definite_at_solution() {
        let sigma = ScalarDistribution::mixture(
            vec![0.4, 0.6],
            vec![gaussian(-1.0, 0.5), gaussian(1.2, 0.5)],
        )
        .unwrap()
        .moments(4)
        .unwrap();
        let prior = choose_prior(&sigma, false).unwrap();
        let problem = RealizationProblem::new(sigma.clone(), prior).unwrap();
        let d = realize(&problem).unwrap();
        let h = dual_hessian(&d.lambda, &problem).unwrap();
        let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(crate::moments::min_eig(&h) >= -1e-8 * scale);
        let (_, grad) = dual_objective(&d.lambda, &problem).unwrap();
        assert!(inf_norm(&grad) < 1e-6);
    }

    fn mixture_moments() -> impl Strategy<Value = MomentVector> {
        (-2.0..2.0f64, 0.1..1.5f64, -2.0..2.0f64, 0.1..1.5f64, 0.1..0.9f64).prop_map(
            |(m1, v1, m2, v2, w)| {
                ScalarDistribution::mixture(vec![w, 1.0 - w], vec![gaussian(m1, v1), gaussian(m2, v2)])
                    .unwrap()
                    .moments(4)
                    .unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradient_matches_central_differences(
            sigma in mixture_moments(),
            dl in proptest::collection::vec(-0.02..0.02f64, 5),
        ) {
            let prior = choose_prior(&sigma, false).unwrap();
            let problem = RealizationProblem::new(sigma, prior).unwrap();
            let mut lambda = vec![1.0, 0.0, 0.0, 0.0, 0.0];
            let s = problem.scale;
            for (m, d) in dl.iter().enumerate() {
                // perturbations sized for the standardized axis
                lambda[m] += d / s.powi(m as i32);
            }
            lambda[4] = lambda[4].abs();
            // keep well inside the domain, away from near-zeros of q
            let coeffs: Vec<f64> = lambda.iter().enumerate().map(|(m, l)| pair_count(m, 2) * l).collect();
            let (nodes, _) = problem.rule();
            prop_assume!(nodes.iter().all(|&u| horner(&coeffs, u) >= 0.25));
            let (_, grad) = dual_objective(&lambda, &problem).unwrap();
            let h = 1e-6;
            for m in 0..5 {
                let mut up = lambda.clone();
                let mut dn = lambda.clone();
                up[m] += h;
                dn[m] -= h;
                let (Ok((fu, _)), Ok((fd, _))) =
                    (dual_objective(&up, &problem), dual_objective(&dn, &problem)) else {
                    continue;
                };
                let fd_grad = (fu - fd) / (2.0 * h);
                prop_assert!((fd_grad - grad[m]).abs() <= 1e-5 * grad[m].abs().max(1.0));
            }
        }

        #[test]
        fn dual_is_midpoint_convex(
            sigma in mixture_moments(),
            a in proptest::collection::vec(-0.05..0.05f64, 5),
            b in proptest::collection::vec(-0.05..0.05f64, 5),
        ) {
            let prior = choose_prior(&sigma, false).unwrap();
            let problem = RealizationProblem::new(sigma, prior).unwrap();
            let s = problem.scale;
            let point = |d: &[f64]| -> Vec<f64> {
                let mut l: Vec<f64> = d.iter().enumerate().map(|(m, v)| v / s.powi(m as i32)).collect();
                l[0] += 1.0;
                l[4] = l[4].abs();
                l
            };
            let (la, lb) = (point(&a), point(&b));
            let mid: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| 0.5 * (x + y)).collect();
            if let (Ok((fa, _)), Ok((fb, _)), Ok((fm, _))) = (
                dual_objective(&la, &problem),
                dual_objective(&lb, &problem),
                dual_objective(&mid, &problem),
            ) {
                prop_assert!(fm <= 0.5 * (fa + fb) + 1e-10);
            }
        }

        #[test]
        fn realized_moments_match(sigma in mixture_moments()) {
            let d = realize_moments(&sigma, false).unwrap();
            let m = d.moments_by_quadrature(4).unwrap();
            for l in 1..=4 {
                prop_assert!((m.get(l) - sigma.get(l)).abs() <= 1e-6 * sigma.get(l).abs().max(1.0));
            }
        }

        #[test]
        fn two_atom_inversion(x1 in -3.0..3.0f64, gap in 0.2..4.0f64, p in 0.05..0.95f64) {
            let law = ScalarDistribution::atomic(vec![x1, x1 + gap], vec![p, 1.0 - p]).unwrap();
            let (points, probs) = atomic_from_singular(&law.moments(4).unwrap()).unwrap();
            prop_assert!((points[0] - x1).abs() < 1e-8 && (points[1] - x1 - gap).abs() < 1e-8);
            prop_assert!((probs[0] - p).abs() < 1e-8);
        }
    }
}
