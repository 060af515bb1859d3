//! Composite Gauss-Legendre quadrature with panel doubling.
//!
//! Unbounded domains are folded onto a bounded parameter interval:
//! the whole line through `x = c + s·t/(1−t²)` on `t ∈ (−1, 1)` and half
//! lines through `x = a ± s·t/(1−t)` on `t ∈ [0, 1)`. Gauss nodes never
//! touch the singular endpoints, so integrands only need to decay.

use std::f64::consts::PI;
use std::sync::OnceLock;

const PANEL_ORDER: usize = 20;
const INITIAL_PANELS: usize = 4;
const MAX_PANELS: usize = 1 << 13;

/// Default relative tolerance between successive panel doublings.
pub const DEFAULT_RTOL: f64 = 1e-12;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule with `n` nodes, computed by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess for the i-th largest root.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared 20-point panel rule.
    pub fn panel() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(PANEL_ORDER))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integration domain on the state axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    RealLine { center: f64, scale: f64 },
    /// `[start, +inf)`
    UpperHalf { start: f64, scale: f64 },
    /// `(-inf, end]`
    LowerHalf { end: f64, scale: f64 },
}

impl Domain {
    fn parameter_range(&self) -> (f64, f64) {
        match self {
            Domain::Interval { lo, hi } => (*lo, *hi),
            Domain::RealLine { .. } => (-1.0, 1.0),
            Domain::UpperHalf { .. } | Domain::LowerHalf { .. } => (0.0, 1.0),
        }
    }

    /// Maps a parameter value to `(x, dx/dt)`.
    fn map(&self, t: f64) -> (f64, f64) {
        match *self {
            Domain::Interval { .. } => (t, 1.0),
            Domain::RealLine { center, scale } => {
                let d = 1.0 - t * t;
                (center + scale * t / d, scale * (1.0 + t * t) / (d * d))
            }
            Domain::UpperHalf { start, scale } => {
                let d = 1.0 - t;
                (start + scale * t / d, scale / (d * d))
            }
            Domain::LowerHalf { end, scale } => {
                let d = 1.0 - t;
                (end - scale * t / d, scale / (d * d))
            }
        }
    }
}

/// Failure to reach the requested tolerance, or a non-finite estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergent;

/// Fixed composite rule: `(x_i, w_i)` pairs for `∫ g(x) dx ≈ Σ w_i g(x_i)`.
pub fn composite_rule(domain: Domain, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::panel();
    let (p0, p1) = domain.parameter_range();
    let width = (p1 - p0) / panels as f64;
    let mut xs = Vec::with_capacity(panels * rule.nodes.len());
    let mut ws = Vec::with_capacity(panels * rule.nodes.len());
    for p in 0..panels {
        let a = p0 + p as f64 * width;
        let half = 0.5 * width;
        let mid = a + half;
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let (x, jac) = domain.map(mid + half * t);
            xs.push(x);
            ws.push(w * half * jac);
        }
    }
    (xs, ws)
}

/// Integrates the vector-valued `f` (writing `dim` components into its
/// output slice) over `domain`, doubling panels until every component's
/// successive estimates agree to `rtol` relative to `∫|f|`.
pub fn integrate_vec<F>(f: F, dim: usize, domain: Domain, rtol: f64) -> Result<Vec<f64>, Divergent>
where
    F: Fn(f64, &mut [f64]),
{
    let mut buf = vec![0.0; dim];
    let mut evaluate = |panels: usize| -> (Vec<f64>, Vec<f64>) {
        let (xs, ws) = composite_rule(domain, panels);
        let mut sum = vec![0.0; dim];
        let mut abs = vec![0.0; dim];
        for (x, w) in xs.iter().zip(&ws) {
            if !x.is_finite() || *w == 0.0 || !w.is_finite() {
                continue;
            }
            f(*x, &mut buf);
            for d in 0..dim {
                let v = w * buf[d];
                sum[d] += v;
                abs[d] += v.abs();
            }
        }
        (sum, abs)
    };

    let mut panels = INITIAL_PANELS;
    let (mut prev, _) = evaluate(panels);
    while panels < MAX_PANELS {
        panels *= 2;
        let (cur, abs) = evaluate(panels);
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Divergent);
        }
        let converged = cur
            .iter()
            .zip(&prev)
            .zip(&abs)
            .all(|((c, p), a)| (c - p).abs() <= rtol * a.max(f64::MIN_POSITIVE));
        if converged {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Divergent)
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(f: F, domain: Domain, rtol: f64) -> Result<f64, Divergent>
where
    F: Fn(f64) -> f64,
{
    integrate_vec(|x, out| out[0] = f(x), 1, domain, rtol).map(|v| v[0])
}
