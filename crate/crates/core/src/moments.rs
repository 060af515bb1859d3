//! Moment vectors, their Hankel matrices, and the moment trajectory
//! schedules used by the planner.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::distributions::DEFAULT_ORDER_CAP;
use crate::error::{Error, Result};

/// Tolerance on the smallest eigenvalue of a scaled Hankel matrix used to
/// classify it as positive definite or as lying on the PSD boundary.
pub const TAU_PSD: f64 = 1e-10;

/// Power moments `E[x^1], …, E[x^L]` of a scalar random variable.
/// The zeroth moment is implicitly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MomentRecord", from = "MomentRecord")]
pub struct MomentVector(Vec<f64>);

#[derive(Serialize, Deserialize)]
struct MomentRecord {
    order: usize,
    values: Vec<f64>,
}

impl From<MomentVector> for MomentRecord {
    fn from(m: MomentVector) -> Self {
        MomentRecord {
            order: m.0.len(),
            values: m.0,
        }
    }
}

impl From<MomentRecord> for MomentVector {
    fn from(r: MomentRecord) -> Self {
        MomentVector(r.values)
    }
}

impl MomentVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Highest moment order `L`.
    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// `E[x^ell]`, with `E[x^0] = 1`. Panics if `ell > order`.
    pub fn get(&self, ell: usize) -> f64 {
        if ell == 0 {
            1.0
        } else {
            self.0[ell - 1]
        }
    }

    /// `[1, m_1, …, m_L]`.
    pub fn with_zeroth(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(1.0);
        v.extend_from_slice(&self.0);
        v
    }

    /// `n` such that `order = 2n`.
    pub fn half_order(&self) -> Result<usize> {
        if self.0.len() % 2 == 1 {
            Err(Error::OddOrder(self.0.len()))
        } else {
            Ok(self.0.len() / 2)
        }
    }

    /// First `len` moments.
    pub fn truncate(&self, len: usize) -> Result<MomentVector> {
        if len > self.order() {
            return Err(Error::LengthExceeded {
                requested: len,
                available: self.order(),
            });
        }
        Ok(MomentVector(self.0[..len].to_vec()))
    }

    /// `E[x^{2m}] ≥ E[x^m]²` for all `m ≤ L/2`.
    pub fn satisfies_cauchy_schwarz(&self) -> bool {
        (1..=self.order() / 2).all(|m| self.get(2 * m) >= self.get(m) * self.get(m))
    }

    /// Scale `s = m₂^{-1/2}` that normalizes the second moment to one.
    pub fn normalizing_scale(&self) -> f64 {
        match self.0.get(1) {
            Some(&m2) if m2 > 0.0 && m2.is_finite() => 1.0 / m2.sqrt(),
            _ => 1.0,
        }
    }
}

/// Symmetric `(n+1)×(n+1)` matrix with entry `(i, j) = m_{i+j}`, `m_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix(DMatrix<f64>);

impl HankelMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn min_eig(&self) -> f64 {
        min_eig(&self.0)
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

/// Hankel matrix of an even-order moment vector.
pub fn hankel(m: &MomentVector) -> Result<HankelMatrix> {
    let n = m.half_order()?;
    let full = m.with_zeroth();
    Ok(HankelMatrix(DMatrix::from_fn(n + 1, n + 1, |i, j| full[i + j])))
}

/// Hankel matrix of `m` with entries pre-scaled by `diag(1, s, …, sⁿ)` on
/// both sides, `s = m₂^{-1/2}`.
pub fn scaled_hankel(m: &MomentVector) -> Result<HankelMatrix> {
    let n = m.half_order()?;
    let s = m.normalizing_scale();
    let full = m.with_zeroth();
    Ok(HankelMatrix(DMatrix::from_fn(n + 1, n + 1, |i, j| {
        full[i + j] * s.powi((i + j) as i32)
    })))
}

/// Smallest eigenvalue of the scaled Hankel matrix; the quantity every
/// positivity test in the crate is stated in.
pub fn scaled_min_eig(m: &MomentVector) -> Result<f64> {
    scaled_hankel(m).map(|h| h.min_eig())
}

/// Whether the scaled Hankel matrix is positive definite beyond [`TAU_PSD`].
pub fn is_positive_definite(m: &MomentVector) -> Result<bool> {
    scaled_min_eig(m).map(|e| e > TAU_PSD)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(h: &DMatrix<f64>) -> f64 {
    if h.nrows() == 0 {
        return f64::INFINITY;
    }
    if h.iter().any(|v| !v.is_finite()) {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Moment trajectory `X(k) = ((K−k)/K)·X(0) + (k/K)·X(K)` for `k = 0..=K`.
pub fn smooth_trajectory(
    x0: &MomentVector,
    x_final: &MomentVector,
    steps: usize,
) -> Result<Vec<MomentVector>> {
    if x0.order() != x_final.order() {
        return Err(Error::OrderMismatch(x0.order(), x_final.order()));
    }
    if steps == 0 {
        return Err(Error::InvalidProblem("horizon must be at least one step".into()));
    }
    if !is_positive_definite(x0)? {
        return Err(Error::EndpointNotPD("initial"));
    }
    if !is_positive_definite(x_final)? {
        return Err(Error::EndpointNotPD("final"));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.clone());
    for k in 1..steps {
        let (w0, w1) = interpolation_weights(k, steps);
        out.push(MomentVector(
            x0.0.iter()
                .zip(&x_final.0)
                .map(|(a, b)| w0 * a + w1 * b)
                .collect(),
        ));
    }
    out.push(x_final.clone());
    Ok(out)
}

/// `((K−k)/K, k/K)`.
pub fn interpolation_weights(k: usize, steps: usize) -> (f64, f64) {
    let kf = steps as f64;
    ((steps - k) as f64 / kf, k as f64 / kf)
}

/// Moment-vector length needed at each step: `2n·degree^{K−k}`.
pub fn extended_schedule(half_order: usize, steps: usize, degree: usize) -> Result<Vec<usize>> {
    extended_schedule_with_cap(half_order, steps, degree, DEFAULT_ORDER_CAP)
}

pub fn extended_schedule_with_cap(
    half_order: usize,
    steps: usize,
    degree: usize,
    cap: usize,
) -> Result<Vec<usize>> {
    if half_order == 0 || steps == 0 || degree == 0 {
        return Err(Error::InvalidProblem(
            "schedule needs n ≥ 1, K ≥ 1 and degree ≥ 1".into(),
        ));
    }
    let mut out = vec![0; steps + 1];
    let mut len = 2 * half_order;
    for k in (0..=steps).rev() {
        out[k] = len;
        if k > 0 {
            len = len
                .checked_mul(degree)
                .filter(|l| *l <= cap)
                .ok_or(Error::ScheduleOverflow {
                    required: len.saturating_mul(degree),
                    cap,
                })?;
        }
    }
    if out[0] > cap {
        return Err(Error::ScheduleOverflow {
            required: out[0],
            cap,
        });
    }
    Ok(out)
}

/// First `len` moments of `m`.
pub fn truncate(m: &MomentVector, len: usize) -> Result<MomentVector> {
    m.truncate(len)
}

/// Pascal triangle `C(i, j)` for `0 ≤ j ≤ i ≤ order`, in floating point.
pub fn binomial_table(order: usize) -> Vec<Vec<f64>> {
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for i in 0..=order {
        let mut row = vec![1.0; i + 1];
        for j in 1..i {
            row[j] = t[i - 1][j - 1] + t[i - 1][j];
        }
        t.push(row);
    }
    t
}
