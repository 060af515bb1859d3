//! Scalar probability laws used for initial/target states, system
//! parameters, realization priors and sampled controls.
//!
//! Moments are closed-form where a formula exists and fall back to
//! adaptive quadrature otherwise. [`ScalarDistribution::moments_by_quadrature`]
//! always takes the quadrature path and serves as the cross-check oracle.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentVector;
use crate::quadrature::{self, Domain, GaussLegendre, DEFAULT_RTOL};

/// Default cap on requested moment orders.
pub const DEFAULT_ORDER_CAP: usize = 64;

/// Number of nodes in tabulated densities and inverse-CDF tables.
pub const TABLE_POINTS: usize = 4096;

/// Half-width of tabulation ranges in units of standard deviation.
pub const TABLE_HALF_WIDTH_SD: f64 = 10.0;

const SUM_TOL: f64 = 1e-12;

/// A scalar probability law on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub enum ScalarDistribution {
    Gaussian { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Density `exp(−|x−location|/scale) / (2·scale)`.
    Laplace { location: f64, scale: f64 },
    /// Type-I generalized logistic: `s·e^{−y} / (1+e^{−y})^{s+1}`, `y = x − location`.
    GeneralizedLogistic { location: f64, shape: f64 },
    /// Heavy-tailed; usable only as a realization prior.
    Cauchy { location: f64, scale: f64 },
    Mixture(Mixture),
    Atomic(Atomic),
    Grid(GridDensity),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<ScalarDistribution>,
}

impl Mixture {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[ScalarDistribution] {
        &self.components
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atomic {
    points: Vec<f64>,
    probs: Vec<f64>,
}

impl Atomic {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Piecewise-linear density on a strictly increasing grid, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
    // as supplied, before normalization; kept so configs round-trip
    raw_values: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(invalid("grid density needs ≥ 2 nodes and one value per node"));
        }
        if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid must be finite and strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("grid density values must be finite and nonnegative"));
        }
        let mut cdf = Vec::with_capacity(grid.len());
        cdf.push(0.0);
        for i in 1..grid.len() {
            let seg = 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
            cdf.push(cdf[i - 1] + seg);
        }
        let total = *cdf.last().unwrap();
        if !(total > 0.0) || !total.is_finite() {
            return Err(invalid("grid density has zero mass"));
        }
        let normalized = values.iter().map(|v| v / total).collect();
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self {
            grid,
            values: normalized,
            raw_values: values,
            cdf,
        })
    }

    /// Tabulates `pdf` at [`TABLE_POINTS`] nodes over `mean ± 10·sd`.
    pub fn tabulate<F: Fn(f64) -> f64>(pdf: F, mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
            return Err(invalid("tabulation needs finite mean and positive variance"));
        }
        let half = TABLE_HALF_WIDTH_SD * var.sqrt();
        let (lo, hi) = (mean - half, mean + half);
        let step = (hi - lo) / (TABLE_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..TABLE_POINTS).map(|i| lo + step * i as f64).collect();
        let values = grid.iter().map(|&x| pdf(x).max(0.0)).collect();
        Self::new(grid, values)
    }

    /// Tabulates `pdf` at [`TABLE_POINTS`] nodes `center + scale·t/(1 − t²)`
    /// for `t` evenly spaced in `(−1, 1)`: dense near `center`, reaching
    /// about `±TABLE_POINTS/4` scales into the tails.
    pub fn tabulate_on_line<F: Fn(f64) -> f64>(pdf: F, center: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() || !center.is_finite() {
            return Err(invalid("tabulation needs a finite center and positive scale"));
        }
        let step = 2.0 / (TABLE_POINTS + 1) as f64;
        let grid: Vec<f64> = (1..=TABLE_POINTS)
            .map(|i| {
                let t = -1.0 + step * i as f64;
                center + scale * t / (1.0 - t * t)
            })
            .collect();
        let values = grid.iter().map(|&x| pdf(x).max(0.0)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Normalized density values at the grid nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn pdf(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let j = g.partition_point(|&v| v <= x).clamp(1, g.len() - 1);
        let (x0, x1) = (g[j - 1], g[j]);
        let t = (x - x0) / (x1 - x0);
        self.values[j - 1] * (1.0 - t) + self.values[j] * t
    }

    fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let n = self.grid.len();
        let j = self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1) - 1;
        let (f0, f1) = (self.values[j], self.values[j + 1]);
        let h = self.grid[j + 1] - self.grid[j];
        let r = (u - self.cdf[j]).max(0.0);
        // f0·t + (f1−f0)·t²/(2h) = r, solved in the cancellation-free form
        let a = (f1 - f0) / (2.0 * h);
        let disc = (f0 * f0 + 4.0 * a * r).max(0.0);
        let denom = f0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.grid[j] + t.clamp(0.0, h)
    }
}

fn invalid(msg: &str) -> Error {
    Error::InvalidDistribution(msg.to_string())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!(
            "{name} must be finite and strictly positive, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{name} must be finite, got {v}")))
    }
}

impl ScalarDistribution {
    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        finite("mean", mean)?;
        positive("variance", var)?;
        Ok(Self::Gaussian { mean, var })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if lo >= hi {
            return Err(invalid("uniform requires lo < hi"));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn laplace(location: f64, scale: f64) -> Result<Self> {
        finite("location", location)?;
        positive("scale", scale)?;
        Ok(Self::Laplace { location, scale })
    }

    pub fn generalized_logistic(location: f64, shape: f64) -> Result<Self> {
        finite("location", location)?;
        positive("shape", shape)?;
        Ok(Self::GeneralizedLogistic { location, shape })
    }

    pub fn cauchy(location: f64, scale: f64) -> Result<Self> {
        finite("location", location)?;
        positive("scale", scale)?;
        Ok(Self::Cauchy { location, scale })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<ScalarDistribution>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(invalid("mixture needs one weight per component"));
        }
        check_probability_vector(&weights, "mixture weights")?;
        Ok(Self::Mixture(Mixture {
            weights,
            components,
        }))
    }

    pub fn atomic(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != probs.len() {
            return Err(invalid("atomic measure needs one probability per point"));
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("atomic points must be finite and strictly increasing"));
        }
        check_probability_vector(&probs, "atomic probabilities")?;
        Ok(Self::Atomic(Atomic { points, probs }))
    }

    pub fn grid(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        GridDensity::new(grid, values).map(Self::Grid)
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Self::Atomic(_))
    }

    /// Power moments `E[x^1..x^order]` under the default order cap.
    pub fn moments(&self, order: usize) -> Result<MomentVector> {
        self.moments_with_cap(order, DEFAULT_ORDER_CAP)
    }

    pub fn moments_with_cap(&self, order: usize, cap: usize) -> Result<MomentVector> {
        if order > cap {
            return Err(Error::OrderOverflow {
                requested: order,
                cap,
            });
        }
        if order == 0 {
            return Ok(MomentVector::new(Vec::new()));
        }
        let with_zeroth = self.raw_moments(order)?;
        if with_zeroth.iter().any(|m| !m.is_finite()) {
            return Err(Error::MomentUndefined("non-finite moment".into()));
        }
        Ok(MomentVector::new(with_zeroth[1..].to_vec()))
    }

    /// Moments computed only by quadrature (atomic laws by direct sums).
    pub fn moments_by_quadrature(&self, order: usize) -> Result<MomentVector> {
        if let Self::Cauchy { .. } = self {
            if order > 0 {
                return Err(Error::MomentUndefined("Cauchy law has no moments".into()));
            }
        }
        let v = self
            .expect_vec(order + 1, |x, out| fill_powers(x, out), order)
            .map_err(|_| Error::MomentUndefined("quadrature diverged".into()))?;
        Ok(MomentVector::new(v[1..].to_vec()))
    }

    /// `[1, m_1, …, m_order]`.
    fn raw_moments(&self, order: usize) -> Result<Vec<f64>> {
        let mut m = vec![0.0; order + 1];
        m[0] = 1.0;
        match self {
            Self::Gaussian { mean, var } => {
                if order >= 1 {
                    m[1] = *mean;
                }
                for k in 2..=order {
                    m[k] = mean * m[k - 1] + (k - 1) as f64 * var * m[k - 2];
                }
            }
            Self::Uniform { lo, hi } => {
                for (k, mk) in m.iter_mut().enumerate().skip(1) {
                    // (hi^{k+1} − lo^{k+1}) / ((k+1)(hi − lo)) without the subtraction
                    let mut s = 0.0;
                    for j in 0..=k {
                        s += hi.powi(j as i32) * lo.powi((k - j) as i32);
                    }
                    *mk = s / (k + 1) as f64;
                }
            }
            Self::Laplace { location, scale } => {
                // standard Laplace: E[Y^{2j}] = (2j)!, odd moments vanish
                let mut std_moment = vec![0.0; order + 1];
                let mut fact = 1.0;
                for (j, sm) in std_moment.iter_mut().enumerate() {
                    if j > 0 {
                        fact *= j as f64;
                    }
                    *sm = if j % 2 == 0 { fact } else { 0.0 };
                }
                let binom = crate::moments::binomial_table(order);
                for k in 1..=order {
                    let mut s = 0.0;
                    for j in 0..=k {
                        s += binom[k][j]
                            * location.powi((k - j) as i32)
                            * scale.powi(j as i32)
                            * std_moment[j];
                    }
                    m[k] = s;
                }
            }
            Self::Cauchy { .. } => {
                return Err(Error::MomentUndefined(
                    "Cauchy law has no moments; it is usable only as a prior".into(),
                ))
            }
            Self::Mixture(mix) => {
                for (w, c) in mix.weights.iter().zip(&mix.components) {
                    let cm = c.raw_moments(order)?;
                    for k in 1..=order {
                        m[k] += w * cm[k];
                    }
                }
            }
            Self::Atomic(at) => {
                for (x, p) in at.points.iter().zip(&at.probs) {
                    let mut pw = 1.0;
                    for mk in m.iter_mut().skip(1) {
                        pw *= x;
                        *mk += p * pw;
                    }
                }
            }
            Self::GeneralizedLogistic { .. } | Self::Grid(_) => {
                let v = self
                    .expect_vec(order + 1, |x, out| fill_powers(x, out), order)
                    .map_err(|_| Error::MomentUndefined("quadrature diverged".into()))?;
                m.copy_from_slice(&v);
                m[0] = 1.0;
            }
        }
        Ok(m)
    }

    /// `∫ g(x) dP(x)` for vector-valued `g`, integrating each piece over
    /// its natural domain. `poly_degree` sizes the exact per-segment rule
    /// used on grid densities.
    pub(crate) fn expect_vec<F>(
        &self,
        dim: usize,
        g: F,
        poly_degree: usize,
    ) -> std::result::Result<Vec<f64>, quadrature::Divergent>
    where
        F: Fn(f64, &mut [f64]) + Copy,
    {
        let weighted = |pdf: &dyn Fn(f64) -> f64, domain: Domain| {
            quadrature::integrate_vec(
                |x, out: &mut [f64]| {
                    g(x, out);
                    let p = pdf(x);
                    out.iter_mut().for_each(|o| *o *= p);
                },
                dim,
                domain,
                DEFAULT_RTOL,
            )
        };
        match self {
            Self::Gaussian { mean, var } => weighted(
                &|x| self.pdf_unchecked(x),
                Domain::RealLine {
                    center: *mean,
                    scale: var.sqrt(),
                },
            ),
            Self::Cauchy { location, scale } => weighted(
                &|x| self.pdf_unchecked(x),
                Domain::RealLine {
                    center: *location,
                    scale: *scale,
                },
            ),
            Self::GeneralizedLogistic { location, shape } => weighted(
                &|x| self.pdf_unchecked(x),
                Domain::RealLine {
                    center: location + shape.ln(),
                    scale: 1.0,
                },
            ),
            Self::Uniform { lo, hi } => weighted(
                &|x| self.pdf_unchecked(x),
                Domain::Interval { lo: *lo, hi: *hi },
            ),
            Self::Laplace { location, scale } => {
                let pdf = |x: f64| self.pdf_unchecked(x);
                let up = weighted(
                    &pdf,
                    Domain::UpperHalf {
                        start: *location,
                        scale: *scale,
                    },
                )?;
                let down = weighted(
                    &pdf,
                    Domain::LowerHalf {
                        end: *location,
                        scale: *scale,
                    },
                )?;
                Ok(up.iter().zip(&down).map(|(a, b)| a + b).collect())
            }
            Self::Mixture(mix) => {
                let mut acc = vec![0.0; dim];
                for (w, c) in mix.weights.iter().zip(&mix.components) {
                    let v = c.expect_vec(dim, g, poly_degree)?;
                    acc.iter_mut().zip(&v).for_each(|(a, b)| *a += w * b);
                }
                Ok(acc)
            }
            Self::Atomic(at) => {
                let mut acc = vec![0.0; dim];
                let mut buf = vec![0.0; dim];
                for (x, p) in at.points.iter().zip(&at.probs) {
                    g(*x, &mut buf);
                    acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += p * b);
                }
                Ok(acc)
            }
            Self::Grid(gd) => {
                // polynomial × linear is integrated exactly per segment
                let rule = GaussLegendre::new((poly_degree + 3) / 2 + 1);
                let mut acc = vec![0.0; dim];
                let mut buf = vec![0.0; dim];
                for j in 1..gd.grid.len() {
                    let (a, b) = (gd.grid[j - 1], gd.grid[j]);
                    let (fa, fb) = (gd.values[j - 1], gd.values[j]);
                    let half = 0.5 * (b - a);
                    let mid = a + half;
                    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                        let x = mid + half * t;
                        let s = 0.5 * (1.0 + t);
                        let p = fa * (1.0 - s) + fb * s;
                        g(x, &mut buf);
                        acc.iter_mut()
                            .zip(&buf)
                            .for_each(|(acc, v)| *acc += w * half * p * v);
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Density at `x`. Atomic laws have none.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if self.has_atoms() {
            return Err(Error::NoDensity);
        }
        Ok(self.pdf_unchecked(x))
    }

    fn has_atoms(&self) -> bool {
        match self {
            Self::Atomic(_) => true,
            Self::Mixture(mix) => mix.components.iter().any(|c| c.has_atoms()),
            _ => false,
        }
    }

    fn pdf_unchecked(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { mean, var } => {
                let d = x - mean;
                (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
            }
            Self::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::Laplace { location, scale } => {
                (-(x - location).abs() / scale).exp() / (2.0 * scale)
            }
            Self::GeneralizedLogistic { location, shape } => {
                let y = x - location;
                if y >= 0.0 {
                    let e = (-y).exp();
                    shape * e / (1.0 + e).powf(shape + 1.0)
                } else {
                    let e = y.exp();
                    shape * (shape * y).exp() / (1.0 + e).powf(shape + 1.0)
                }
            }
            Self::Cauchy { location, scale } => {
                let z = (x - location) / scale;
                1.0 / (PI * scale * (1.0 + z * z))
            }
            Self::Mixture(mix) => mix
                .weights
                .iter()
                .zip(&mix.components)
                .map(|(w, c)| w * c.pdf_unchecked(x))
                .sum(),
            Self::Atomic(_) => 0.0,
            Self::Grid(g) => g.pdf(x),
        }
    }

    /// One draw.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { mean, var } => Normal::new(*mean, var.sqrt())
                .expect("validated variance")
                .sample(rng),
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Laplace { location, scale } => {
                let u = open01(rng) - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Self::GeneralizedLogistic { location, shape } => {
                // CDF (1 + e^{−y})^{−s}
                let u = open01(rng);
                location - (u.powf(-1.0 / shape) - 1.0).ln()
            }
            Self::Cauchy { location, scale } => {
                location + scale * (PI * (open01(rng) - 0.5)).tan()
            }
            Self::Mixture(mix) => {
                let i = categorical(&mix.weights, rng);
                mix.components[i].sample_one(rng)
            }
            Self::Atomic(at) => at.points[categorical(&at.probs, rng)],
            Self::Grid(g) => g.quantile(rng.random::<f64>()),
        }
    }

    /// `count` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    /// Quantile function, closed-form where available, otherwise from a
    /// fine tabulated CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            Self::Uniform { lo, hi } => lo + p * (hi - lo),
            Self::Laplace { location, scale } => {
                let u = p - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Self::GeneralizedLogistic { location, shape } => {
                location - (p.powf(-1.0 / shape) - 1.0).ln()
            }
            Self::Cauchy { location, scale } => location + scale * (PI * (p - 0.5)).tan(),
            Self::Atomic(at) => {
                let mut acc = 0.0;
                for (x, q) in at.points.iter().zip(&at.probs) {
                    acc += q;
                    if acc >= p {
                        return *x;
                    }
                }
                *at.points.last().unwrap()
            }
            Self::Grid(g) => g.quantile(p),
            Self::Gaussian { .. } | Self::Mixture(_) => {
                let (lo, hi) = self.support_hint();
                let n = 8 * TABLE_POINTS;
                let step = (hi - lo) / (n - 1) as f64;
                let grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
                let values = grid.iter().map(|&x| self.pdf_unchecked(x)).collect();
                match GridDensity::new(grid, values) {
                    Ok(g) => g.quantile(p),
                    Err(_) => f64::NAN,
                }
            }
        }
    }

    /// An interval holding all but a negligible fraction of the mass.
    pub(crate) fn support_hint(&self) -> (f64, f64) {
        match self {
            Self::Gaussian { mean, var } => {
                let s = 12.0 * var.sqrt();
                (mean - s, mean + s)
            }
            Self::Uniform { lo, hi } => (*lo, *hi),
            Self::Laplace { location, scale } => (location - 40.0 * scale, location + 40.0 * scale),
            Self::GeneralizedLogistic { location, shape } => {
                (location - 40.0 / shape.min(1.0), location + 40.0)
            }
            Self::Cauchy { location, scale } => (location - 1e4 * scale, location + 1e4 * scale),
            Self::Mixture(mix) => mix
                .components
                .iter()
                .map(|c| c.support_hint())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| {
                    (a.min(c), b.max(d))
                }),
            Self::Atomic(at) => (at.points[0], *at.points.last().unwrap()),
            Self::Grid(g) => (g.grid[0], *g.grid.last().unwrap()),
        }
    }

    /// Location and spread used to center quadrature on this law.
    pub(crate) fn center_scale(&self) -> (f64, f64) {
        match self {
            Self::Gaussian { mean, var } => (*mean, var.sqrt()),
            Self::Laplace { location, scale } | Self::Cauchy { location, scale } => {
                (*location, *scale)
            }
            Self::GeneralizedLogistic { location, shape } => (location + shape.ln(), 1.0),
            _ => {
                let (lo, hi) = self.support_hint();
                (0.5 * (lo + hi), (0.25 * (hi - lo)).max(f64::MIN_POSITIVE))
            }
        }
    }

    /// The law of `shift + scale·X`.
    pub fn affine(&self, shift: f64, scale: f64) -> Result<Self> {
        positive("scale", scale)?;
        match self {
            Self::Gaussian { mean, var } => Self::gaussian(shift + scale * mean, scale * scale * var),
            Self::Uniform { lo, hi } => Self::uniform(shift + scale * lo, shift + scale * hi),
            Self::Laplace { location, scale: b } => Self::laplace(shift + scale * location, scale * b),
            Self::Cauchy { location, scale: b } => Self::cauchy(shift + scale * location, scale * b),
            Self::GeneralizedLogistic { .. } => Err(invalid(
                "generalized logistic family is not closed under scaling",
            )),
            Self::Mixture(mix) => Self::mixture(
                mix.weights.clone(),
                mix.components
                    .iter()
                    .map(|c| c.affine(shift, scale))
                    .collect::<Result<_>>()?,
            ),
            Self::Atomic(at) => Self::atomic(
                at.points.iter().map(|x| shift + scale * x).collect(),
                at.probs.clone(),
            ),
            Self::Grid(g) => Self::grid(
                g.grid.iter().map(|x| shift + scale * x).collect(),
                g.values.clone(),
            ),
        }
    }
}

fn fill_powers(x: f64, out: &mut [f64]) {
    let mut p = 1.0;
    for o in out.iter_mut() {
        *o = p;
        p *= x;
    }
}

fn check_probability_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidDistribution(format!("{what} must be nonnegative")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} must sum to 1 (got {total})"
        )));
    }
    Ok(())
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // round-off: fall back to the last atom with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Serialized form of [`ScalarDistribution`] in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Gaussian {
        mean: f64,
        var: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Laplace {
        location: f64,
        scale: f64,
    },
    GeneralizedLogistic {
        location: f64,
        shape: f64,
    },
    Cauchy {
        location: f64,
        scale: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<DistributionSpec>,
    },
    Atomic {
        points: Vec<f64>,
        probs: Vec<f64>,
    },
    Grid {
        grid: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TryFrom<DistributionSpec> for ScalarDistribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match spec {
            DistributionSpec::Gaussian { mean, var } => Self::gaussian(mean, var),
            DistributionSpec::Uniform { lo, hi } => Self::uniform(lo, hi),
            DistributionSpec::Laplace { location, scale } => Self::laplace(location, scale),
            DistributionSpec::GeneralizedLogistic { location, shape } => {
                Self::generalized_logistic(location, shape)
            }
            DistributionSpec::Cauchy { location, scale } => Self::cauchy(location, scale),
            DistributionSpec::Mixture {
                weights,
                components,
            } => Self::mixture(
                weights,
                components
                    .into_iter()
                    .map(Self::try_from)
                    .collect::<Result<_>>()?,
            ),
            DistributionSpec::Atomic { points, probs } => Self::atomic(points, probs),
            DistributionSpec::Grid { grid, values } => Self::grid(grid, values),
        }
    }
}

impl From<ScalarDistribution> for DistributionSpec {
    fn from(d: ScalarDistribution) -> Self {
        match d {
            ScalarDistribution::Gaussian { mean, var } => Self::Gaussian { mean, var },
            ScalarDistribution::Uniform { lo, hi } => Self::Uniform { lo, hi },
            ScalarDistribution::Laplace { location, scale } => Self::Laplace { location, scale },
            ScalarDistribution::GeneralizedLogistic { location, shape } => {
                Self::GeneralizedLogistic { location, shape }
            }
            ScalarDistribution::Cauchy { location, scale } => Self::Cauchy { location, scale },
            ScalarDistribution::Mixture(m) => Self::Mixture {
                weights: m.weights,
                components: m.components.into_iter().map(Self::from).collect(),
            },
            ScalarDistribution::Atomic(a) => Self::Atomic {
                points: a.points,
                probs: a.probs,
            },
            ScalarDistribution::Grid(g) => Self::Grid {
                grid: g.grid,
                values: g.raw_values,
            },
        }
    }
}

impl std::fmt::Display for ScalarDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Gaussian { mean, var } => write!(f, "N({mean}, {var})"),
            Self::Uniform { lo, hi } => write!(f, "U[{lo}, {hi}]"),
            Self::Laplace { location, scale } => write!(f, "Laplace({location}, {scale})"),
            Self::GeneralizedLogistic { location, shape } => {
                write!(f, "GenLogisticI({location}, {shape})")
            }
            Self::Cauchy { location, scale } => write!(f, "Cauchy({location}, {scale})"),
            Self::Mixture(m) => {
                let parts: Vec<String> = m
                    .weights
                    .iter()
                    .zip(&m.components)
                    .map(|(w, c)| format!("{w}·{c}"))
                    .collect();
                write!(f, "{}", parts.join(" + "))
            }
            Self::Atomic(a) => write!(f, "Atomic({} points)", a.points.len()),
            Self::Grid(g) => write!(f, "Grid({} nodes)", g.grid.len()),
        }
    }
}
