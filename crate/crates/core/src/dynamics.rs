//! Moment-system dynamics of `x(k+1) = ã(k)·f(x(k)) + ũ(k)` with
//! `ã = (1 − c)·a`, where `a`, `x` and `ũ` are mutually independent.
//!
//! The order-ℓ moment equation
//!
//! ```text
//! E[x(k+1)^ℓ] = Σ_{j=0..ℓ} C(ℓ,j) · E[ã^j] · E[f(x)^j] · E[ũ^{ℓ−j}]
//! ```
//!
//! is lower triangular in the control moments, so the control moments are
//! solved order by order and the system matrix is never formed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{binomial_table, MomentVector};

/// The state map `f` in `x(k+1) = a(k)·f(x(k)) + u(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsKind {
    /// `f(x) = x`
    Linear,
    /// `f(x) = x^degree`
    Monomial { degree: usize },
    /// `f(x) = Σ coeffs[i]·x^i`
    Polynomial { coeffs: Vec<f64> },
}

impl DynamicsKind {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidProblem(
                "polynomial coefficients must be finite and non-empty".into(),
            ));
        }
        if *coeffs.last().unwrap() == 0.0 {
            return Err(Error::InvalidProblem(
                "leading polynomial coefficient must be nonzero".into(),
            ));
        }
        Ok(Self::Polynomial { coeffs })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Linear => Ok(()),
            Self::Monomial { degree } if *degree >= 1 => Ok(()),
            Self::Monomial { .. } => Err(Error::InvalidProblem(
                "monomial degree must be at least 1".into(),
            )),
            Self::Polynomial { coeffs } => Self::polynomial(coeffs.clone()).map(|_| ()),
        }
    }

    /// Polynomial degree of `f`.
    pub fn degree(&self) -> usize {
        match self {
            Self::Linear => 1,
            Self::Monomial { degree } => *degree,
            Self::Polynomial { coeffs } => coeffs.len() - 1,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::Monomial { degree } => x.powi(*degree as i32),
            Self::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }

    /// `E[f(x)^j]` for `j = 0..=max_power`, from the moments of `x`.
    pub fn power_moments(&self, x: &MomentVector, max_power: usize) -> Result<Vec<f64>> {
        let needed = self.degree().max(1) * max_power;
        if x.order() < needed {
            return Err(Error::InsufficientOrder {
                what: "state moments",
                needed,
                available: x.order(),
            });
        }
        let out = match self {
            Self::Linear => (0..=max_power).map(|j| x.get(j)).collect(),
            Self::Monomial { degree } => (0..=max_power).map(|j| x.get(degree * j)).collect(),
            Self::Polynomial { coeffs } => {
                let mut out = Vec::with_capacity(max_power + 1);
                let mut power = vec![1.0];
                for j in 0..=max_power {
                    if j > 0 {
                        power = convolve(&power, coeffs);
                    }
                    out.push(kahan_sum(power.iter().enumerate().map(|(i, p)| p * x.get(i))));
                }
                out
            }
        };
        Ok(out)
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (k, o) in out.iter_mut().enumerate() {
        let lo = k.saturating_sub(b.len() - 1);
        let hi = k.min(a.len() - 1);
        *o = kahan_sum((lo..=hi).map(|i| a[i] * b[k - i]));
    }
    out
}

pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in iter {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `E[ã^j] = (1−c)^j · E[a^j]` for `j = 0..=order`.
pub fn scaled_parameter_moments(a: &MomentVector, c: f64, order: usize) -> Result<Vec<f64>> {
    if a.order() < order {
        return Err(Error::InsufficientOrder {
            what: "parameter moments",
            needed: order,
            available: a.order(),
        });
    }
    let d = 1.0 - c;
    Ok((0..=order).map(|j| d.powi(j as i32) * a.get(j)).collect())
}

fn check_gain(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::InvalidProblem(format!("gain {c} outside [0, 1]")))
    }
}

/// Control moments `Ũ` that carry `x_now` to `x_next` under gain `c`.
/// The result has the same order as `x_next`.
pub fn solve_control_moments(
    x_now: &MomentVector,
    x_next: &MomentVector,
    a: &MomentVector,
    c: f64,
    dynamics: &DynamicsKind,
) -> Result<MomentVector> {
    check_gain(c)?;
    let order = x_next.order();
    let at = scaled_parameter_moments(a, c, order)?;
    let fx = dynamics.power_moments(x_now, order)?;
    let binom = binomial_table(order);
    let mut u = vec![1.0; order + 1];
    for ell in 1..=order {
        let coupled = (1..=ell).map(|j| binom[ell][j] * at[j] * fx[j] * u[ell - j]);
        u[ell] = x_next.get(ell) - kahan_sum(coupled);
        if !u[ell].is_finite() {
            return Err(Error::NonFiniteIntermediate(ell));
        }
    }
    u.remove(0);
    Ok(MomentVector::new(u))
}

/// Next-state moments up to the order of `u_tilde`.
pub fn propagate(
    x_now: &MomentVector,
    u_tilde: &MomentVector,
    a: &MomentVector,
    c: f64,
    dynamics: &DynamicsKind,
) -> Result<MomentVector> {
    check_gain(c)?;
    let order = u_tilde.order();
    let at = scaled_parameter_moments(a, c, order)?;
    let fx = dynamics.power_moments(x_now, order)?;
    let binom = binomial_table(order);
    let next = (1..=order)
        .map(|ell| kahan_sum((0..=ell).map(|j| binom[ell][j] * at[j] * fx[j] * u_tilde.get(ell - j))))
        .collect();
    Ok(MomentVector::new(next))
}

/// Control effort `E[u²] = c²E[a²]E[f(x)²] − 2cE[a]E[f(x)]E[ũ] + E[ũ²]`.
pub fn control_cost(
    x_now: &MomentVector,
    u_tilde: &MomentVector,
    a: &MomentVector,
    c: f64,
    dynamics: &DynamicsKind,
) -> Result<f64> {
    if u_tilde.order() < 2 {
        return Err(Error::InsufficientOrder {
            what: "control moments",
            needed: 2,
            available: u_tilde.order(),
        });
    }
    if a.order() < 2 {
        return Err(Error::InsufficientOrder {
            what: "parameter moments",
            needed: 2,
            available: a.order(),
        });
    }
    let fx = dynamics.power_moments(x_now, 2)?;
    Ok(c * c * a.get(2) * fx[2] - 2.0 * c * a.get(1) * fx[1] * u_tilde.get(1) + u_tilde.get(2))
}

/// Moments of the applied input `u = −c·a·f(x) + ũ` up to `order`.
pub fn full_input_moments(
    x_now: &MomentVector,
    u_tilde: &MomentVector,
    a: &MomentVector,
    c: f64,
    dynamics: &DynamicsKind,
    order: usize,
) -> Result<MomentVector> {
    if u_tilde.order() < order {
        return Err(Error::InsufficientOrder {
            what: "control moments",
            needed: order,
            available: u_tilde.order(),
        });
    }
    if a.order() < order {
        return Err(Error::InsufficientOrder {
            what: "parameter moments",
            needed: order,
            available: a.order(),
        });
    }
    let fx = dynamics.power_moments(x_now, order)?;
    let binom = binomial_table(order);
    let out = (1..=order)
        .map(|ell| {
            kahan_sum((0..=ell).map(|i| {
                binom[ell][i] * (-c).powi(i as i32) * a.get(i) * fx[i] * u_tilde.get(ell - i)
            }))
        })
        .collect();
    Ok(MomentVector::new(out))
}

/// Moments involved in one step of the moment system at a fixed gain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMoments {
    pub x_now: MomentVector,
    pub x_next: MomentVector,
    pub c: f64,
    pub u_tilde: MomentVector,
    /// `(1−c)^j · E[a^j]`, `j = 0..=x_next.order`.
    pub a_tilde_moments: Vec<f64>,
}

impl StepMoments {
    pub fn solve(
        x_now: &MomentVector,
        x_next: &MomentVector,
        a: &MomentVector,
        c: f64,
        dynamics: &DynamicsKind,
    ) -> Result<Self> {
        let u_tilde = solve_control_moments(x_now, x_next, a, c, dynamics)?;
        Ok(Self {
            x_now: x_now.clone(),
            x_next: x_next.clone(),
            c,
            a_tilde_moments: scaled_parameter_moments(a, c, x_next.order())?,
            u_tilde,
        })
    }
}
