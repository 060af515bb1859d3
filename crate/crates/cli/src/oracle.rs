//! Reference computations exposed for independent checks.

use std::path::Path;

use moment_steer::dynamics::propagate;
use moment_steer::{DynamicsKind, MomentVector, ScalarDistribution};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Tolerance of the realization audit.
pub const REALIZE_CHECK_TOL: f64 = 1e-6;

/// Reads a JSON argument given inline, or from a file when prefixed by `@`.
fn json_arg<T: for<'de> Deserialize<'de>>(arg: &str) -> Result<T, Failure> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{path}: {e}")))?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| Failure::config(e.to_string()))
}

/// Closed-form moments of a distribution, or quadrature moments on request.
pub fn moments(dist: &str, order: usize, quadrature: bool) -> Result<String, Failure> {
    let d: ScalarDistribution = json_arg(dist)?;
    let m = if quadrature {
        d.moments_by_quadrature(order)
    } else {
        d.moments(order)
    }
    .map_err(Failure::config_from)?;
    Ok(serde_json::to_string(m.values()).expect("moments serialize"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomicInput {
    points: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnumerateInput {
    x: AtomicInput,
    a: AtomicInput,
    u: AtomicInput,
    c: f64,
    dynamics: DynamicsKind,
    order: usize,
}

#[derive(Debug, Serialize)]
struct EnumerateReport {
    propagated: Vec<f64>,
    enumerated: Vec<f64>,
    max_rel_error: f64,
}

fn atomic_moments(points: &[f64], probs: &[f64], order: usize) -> Vec<f64> {
    (1..=order)
        .map(|l| points.iter().zip(probs).map(|(x, p)| p * x.powi(l as i32)).sum())
        .collect()
}

fn max_rel_error(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / w.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Next-state moments by the moment recursion and by enumerating every atom
/// triple of `(x, a, ũ)`.
pub fn enumerate(spec: &str) -> Result<String, Failure> {
    let input: EnumerateInput = json_arg(spec)?;
    for (name, law) in [("x", &input.x), ("a", &input.a), ("u", &input.u)] {
        ScalarDistribution::atomic(law.points.clone(), law.probs.clone())
            .map_err(|e| Failure::config(format!("{name}: {e}")))?;
    }
    let f = &input.dynamics;
    f.validate().map_err(Failure::config_from)?;
    let order = input.order;
    let (x, a, u) = (&input.x, &input.a, &input.u);
    let propagated = propagate(
        &MomentVector::new(atomic_moments(&x.points, &x.probs, order * f.degree())),
        &MomentVector::new(atomic_moments(&u.points, &u.probs, order)),
        &MomentVector::new(atomic_moments(&a.points, &a.probs, order)),
        input.c,
        f,
    )
    .map_err(Failure::config_from)?
    .into_values();

    let mut points = Vec::new();
    let mut probs = Vec::new();
    for (xi, px) in x.points.iter().zip(&x.probs) {
        for (ai, pa) in a.points.iter().zip(&a.probs) {
            for (ui, pu) in u.points.iter().zip(&u.probs) {
                points.push((1.0 - input.c) * ai * f.eval(*xi) + ui);
                probs.push(px * pa * pu);
            }
        }
    }
    let enumerated = atomic_moments(&points, &probs, order);
    let report = EnumerateReport {
        max_rel_error: max_rel_error(&propagated, &enumerated),
        propagated,
        enumerated,
    };
    Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
}

#[derive(Debug, Serialize)]
struct RealizeReport {
    prescribed: Vec<f64>,
    realized: Vec<f64>,
    max_rel_error: f64,
    tolerance: f64,
    pass: bool,
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Failure::config(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|h| h.trim().to_string())
        .collect();
    let rows = lines
        .map(|line| {
            line.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

/// Audits an exported control density against prescribed moments. The
/// density file has columns `u, value, weight` with `Σ weight·value·u^ℓ` the
/// ℓ-th moment; without a weight column the trapezoid rule in `u` is used.
/// The moment file lists `order, prescribed[, …]`.
pub fn realize_check(density: &Path, sigma: &Path) -> Result<(String, bool), Failure> {
    let (dh, rows) = read_rows(density)?;
    let (_, srows) = read_rows(sigma)?;
    let prescribed: Vec<f64> = srows
        .iter()
        .map(|r| r.get(1).copied().ok_or_else(|| Failure::config("moment rows need two columns")))
        .collect::<Result<_, _>>()?;
    if rows.iter().any(|r| r.len() < 2) {
        return Err(Failure::config("density rows need at least two columns"));
    }
    let order = prescribed.len();
    let mut realized = vec![0.0; order];
    if dh.len() >= 3 {
        for r in &rows {
            let mut p = r[1] * r[2];
            for m in realized.iter_mut() {
                p *= r[0];
                *m += p;
            }
        }
    } else {
        for w in rows.windows(2) {
            let h = w[1][0] - w[0][0];
            let (mut p0, mut p1) = (w[0][1], w[1][1]);
            for m in realized.iter_mut() {
                p0 *= w[0][0];
                p1 *= w[1][0];
                *m += 0.5 * h * (p0 + p1);
            }
        }
    }
    let err = max_rel_error(&realized, &prescribed);
    let pass = err <= REALIZE_CHECK_TOL;
    let report = RealizeReport {
        prescribed,
        realized,
        max_rel_error: err,
        tolerance: REALIZE_CHECK_TOL,
        pass,
    };
    Ok((serde_json::to_string_pretty(&report).expect("report serializes"), pass))
}
