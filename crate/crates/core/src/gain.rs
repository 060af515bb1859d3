//! Per-step gain selection: minimize `E[u²]` over `c ∈ [ε, 1]`, where `ε` is
//! the smallest gain whose control moments still form a valid moment sequence.

use serde::Serialize;

use crate::dynamics::{control_cost, solve_control_moments, DynamicsKind};
use crate::error::{Error, Result};
use crate::moments::{scaled_min_eig, MomentVector, TAU_PSD};

/// Bisection stops once the bracket is this narrow. The boundary gain has
/// to be resolved far below the eigenvalue tolerance so that control moments
/// at `ε` are singular to working precision.
const FLOOR_WIDTH: f64 = 1e-14;
const FLOOR_MAX_ITER: usize = 200;
const GOLDEN_WIDTH: f64 = 1e-10;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Outcome of the per-step gain search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainResult {
    pub c_star: f64,
    pub u_tilde: MomentVector,
    /// Lower endpoint `ε` of the feasible gain interval.
    pub feasible_lo: f64,
    /// Set when the control Hankel matrix at `c_star` is singular, so the
    /// control law must be atomic.
    pub boundary_atomic: bool,
    pub cost: f64,
    /// Smallest eigenvalue of the scaled control Hankel matrix at `c_star`.
    pub min_eig: f64,
}

/// Smallest scaled-Hankel eigenvalue of the control moments at gain `c`.
pub fn control_min_eig(
    x_now: &MomentVector,
    x_next: &MomentVector,
    a: &MomentVector,
    c: f64,
    dynamics: &DynamicsKind,
) -> Result<f64> {
    let u = solve_control_moments(x_now, x_next, a, c, dynamics)?;
    scaled_min_eig(&u)
}

/// Control effort at gain `c`, with the control moments solved at that gain.
pub fn cost_at(
    x_now: &MomentVector,
    x_next: &MomentVector,
    a: &MomentVector,
    c: f64,
    dynamics: &DynamicsKind,
) -> Result<f64> {
    let u = solve_control_moments(x_now, x_next, a, c, dynamics)?;
    control_cost(x_now, &u, a, c, dynamics)
}

/// Lower endpoint of the feasible gain interval, found by bisection.
/// Returns 0 when `c = 0` is already feasible.
pub fn feasible_floor(
    x_now: &MomentVector,
    x_next: &MomentVector,
    a: &MomentVector,
    dynamics: &DynamicsKind,
) -> Result<f64> {
    let eig = |c: f64| control_min_eig(x_now, x_next, a, c, dynamics);
    let at_one = eig(1.0)?;
    if at_one.is_nan() || at_one < -TAU_PSD {
        return Err(Error::InfeasibleAtOne);
    }
    if eig(0.0)? >= 0.0 {
        return Ok(0.0);
    }
    if at_one < 0.0 {
        // c = 1 is on the boundary within tolerance.
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..FLOOR_MAX_ITER {
        if hi - lo <= FLOOR_WIDTH {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eig(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Minimizes the control effort over the feasible gain interval.
pub fn optimize_gain(
    x_now: &MomentVector,
    x_next: &MomentVector,
    a: &MomentVector,
    dynamics: &DynamicsKind,
) -> Result<GainResult> {
    let eps = feasible_floor(x_now, x_next, a, dynamics)?;
    let cost = |c: f64| cost_at(x_now, x_next, a, c, dynamics);

    let (mut lo, mut hi) = (eps, 1.0);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = cost(x1)?;
    let mut f2 = cost(x2)?;
    while hi - lo > GOLDEN_WIDTH {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = cost(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = cost(x2)?;
        }
    }
    let mut c_star = 0.5 * (lo + hi);
    let mut best = cost(c_star)?;
    // The search never evaluates the endpoints themselves; ties go to the
    // smaller gain.
    for c in [1.0, eps] {
        let v = cost(c)?;
        if v <= best + 4.0 * f64::EPSILON * best.abs() {
            c_star = c;
            best = v;
        }
    }

    let u_tilde = solve_control_moments(x_now, x_next, a, c_star, dynamics)?;
    let min_eig = scaled_min_eig(&u_tilde)?;
    Ok(GainResult {
        c_star,
        feasible_lo: eps,
        boundary_atomic: min_eig <= TAU_PSD,
        cost: best,
        min_eig,
        u_tilde,
    })
}
