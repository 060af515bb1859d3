//! Run configuration: the problem, output options and optional reference
//! values to compare against.

use std::path::{Path, PathBuf};

use moment_steer::engine::{default_fit_range, fit_polynomial};
use moment_steer::{DynamicsKind, ScalarDistribution, SteeringProblem};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit: EmitFlags,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_bins() -> usize {
    50
}

/// Problem description as written in a config file. Mirrors
/// [`SteeringProblem`], with dynamics that may also be a fitted surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub horizon: usize,
    pub half_order: usize,
    pub dynamics: DynamicsConfig,
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

fn default_cap() -> usize {
    moment_steer::distributions::DEFAULT_ORDER_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsConfig {
    Linear,
    Monomial {
        degree: usize,
    },
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// Least-squares polynomial surrogate of a named function.
    Fitted {
        function: NamedMap,
        degree: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range: Option<[f64; 2]>,
        #[serde(default = "default_residual_bound")]
        residual_bound: f64,
    },
}

fn default_residual_bound() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMap {
    Sin,
    Cos,
    Tanh,
    Atan,
    Exp,
    Logistic,
}

impl NamedMap {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            NamedMap::Sin => x.sin(),
            NamedMap::Cos => x.cos(),
            NamedMap::Tanh => x.tanh(),
            NamedMap::Atan => x.atan(),
            NamedMap::Exp => x.exp(),
            NamedMap::Logistic => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitFlags {
    pub trajectory: bool,
    pub densities: bool,
    pub histograms: bool,
    pub diagnostics: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            trajectory: true,
            densities: true,
            histograms: true,
            diagnostics: true,
        }
    }
}

/// Published values to compare a run against; reported, never enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    #[serde(default = "default_gain_tolerance")]
    pub gain_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atomic_control: Option<AtomicReference>,
}

fn default_gain_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicReference {
    pub step: usize,
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
    #[serde(default = "default_atom_tolerance")]
    pub tolerance: f64,
}

fn default_atom_tolerance() -> f64 {
    0.01
}

/// A problem ready for planning, plus the surrogate fit when one was made.
pub struct Resolved {
    pub problem: SteeringProblem,
    pub fit: Option<FitReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub function: NamedMap,
    pub range: [f64; 2],
    pub coeffs: Vec<f64>,
    pub max_residual: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Failure::config(e.to_string()))?;
        if config.histogram_bins == 0 {
            return Err(Failure::config("histogram_bins must be at least 1"));
        }
        Ok(config)
    }

    /// Canonical JSON text: defaults filled in, fixed key order.
    pub fn normalized(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn resolve(&self) -> Result<Resolved, Failure> {
        let p = &self.problem;
        let (dynamics, fit) = match &p.dynamics {
            DynamicsConfig::Linear => (DynamicsKind::Linear, None),
            DynamicsConfig::Monomial { degree } => (DynamicsKind::Monomial { degree: *degree }, None),
            DynamicsConfig::Polynomial { coeffs } => (
                DynamicsKind::polynomial(coeffs.clone()).map_err(Failure::config_from)?,
                None,
            ),
            DynamicsConfig::Fitted {
                function,
                degree,
                range,
                residual_bound,
            } => {
                let (lo, hi) = match range {
                    Some([lo, hi]) => (*lo, *hi),
                    None => default_fit_range(&p.initial, &p.target).map_err(Failure::config_from)?,
                };
                let f = *function;
                let fitted = fit_polynomial(|x| f.eval(x), *degree, (lo, hi), *residual_bound)
                    .map_err(Failure::config_from)?;
                let coeffs = match &fitted.dynamics {
                    DynamicsKind::Polynomial { coeffs } => coeffs.clone(),
                    other => vec![other.eval(0.0)],
                };
                let report = FitReport {
                    function: f,
                    range: [lo, hi],
                    coeffs,
                    max_residual: fitted.max_residual,
                };
                (fitted.dynamics, Some(report))
            }
        };
        let problem = SteeringProblem {
            horizon: p.horizon,
            half_order: p.half_order,
            dynamics,
            parameter: p.parameter.clone(),
            initial: p.initial.clone(),
            target: p.target.clone(),
            agents: p.agents,
            seed: p.seed,
            heavy_tail_prior: p.heavy_tail_prior,
            moment_cap: p.moment_cap,
        };
        problem.validate().map_err(Failure::config_from)?;
        Ok(Resolved { problem, fit })
    }
}
