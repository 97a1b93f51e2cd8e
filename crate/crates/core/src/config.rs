//! Run configuration: the external JSON schema and its conversion into
//! validated domain objects. Unknown keys are rejected everywhere.

use crate::correlator::{validate_correlator, Atom, Correlator, CorrelatorKind, CorrelatorSpec};
use crate::error::{Error, Result};
use crate::model::{validate_order_param, DiscreteOrderParameter, StateSpace};
use crate::parisi::EvalConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorConfig {
    pub kind: String,
    #[serde(rename = "A", default)]
    pub a: f64,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub w: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StateSpaceConfig {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub mu_atoms: Vec<MuAtomConfig>,
    #[serde(rename = "L", default)]
    pub l: f64,
    #[serde(default)]
    pub h1: f64,
    #[serde(default)]
    pub h2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MuAtomConfig {
    pub u: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(rename = "M_grid")]
    pub m_grid: Vec<f64>,
    pub y_halfwidth: f64,
    pub y_points: usize,
    pub quad_nodes: usize,
    pub lambda_bracket: (f64, f64),
    pub tol_lambda: f64,
    pub tol_value: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalConfig::default();
        EvalSection {
            m_grid: d.m_grid,
            y_halfwidth: d.y_halfwidth,
            y_points: d.y_points,
            quad_nodes: d.quad_nodes,
            lambda_bracket: d.lambda_bracket,
            tol_lambda: d.tol_lambda,
            tol_value: d.tol_value,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(rename = "N")]
    pub n: usize,
    pub reps: usize,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
}

fn default_t_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.1).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OrderParamSection {
    pub r: f64,
    pub q: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CascadeSection {
    #[serde(default = "default_cascade_x")]
    pub x: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_tree_x")]
    pub tree_x: Vec<f64>,
    #[serde(default = "default_tree_k")]
    pub tree_k: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(rename = "M", default = "default_m")]
    pub m: f64,
}

fn default_cascade_x() -> f64 {
    0.5
}
fn default_sigma() -> f64 {
    1.0
}
fn default_k() -> usize {
    10_000
}
fn default_reps() -> usize {
    10_000
}
fn default_tree_x() -> Vec<f64> {
    vec![0.2, 0.6]
}
fn default_tree_k() -> usize {
    100
}
fn default_samples() -> usize {
    200_000
}
fn default_m() -> f64 {
    2.0
}

impl Default for CascadeSection {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_format() -> String {
    "json".into()
}

/// Top-level run configuration (the `--config` file schema).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub correlator: CorrelatorConfig,
    pub state_space: StateSpaceConfig,
    #[serde(default = "default_beta")]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub rsb_levels: usize,
    #[serde(default)]
    pub eval: Option<EvalSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub order_param: Option<OrderParamSection>,
    #[serde(default)]
    pub cascade: Option<CascadeSection>,
    #[serde(default)]
    pub functional: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

fn default_beta() -> Vec<f64> {
    vec![1.0]
}

/// Parse and schema-validate a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::SchemaError {
        path: e.to_string(),
        message: "invalid config document".into(),
    })?;
    // validate nested specs eagerly so schema errors carry a key path
    cfg.correlator().map_err(|e| at("correlator", e))?;
    cfg.state_space().map_err(|e| at("state_space", e))?;
    if let Some(op) = &cfg.order_param {
        validate_order_param(op.r, op.q.clone(), op.x.clone())
            .map_err(|e| at("order_param", e))?;
    }
    if let Some(f) = &cfg.functional {
        if f != "parisi" && f != "cs" {
            return Err(Error::SchemaError {
                path: "functional".into(),
                message: format!("unknown functional {f:?} (expected \"parisi\" or \"cs\")"),
            });
        }
    }
    if let Some(out) = &cfg.output {
        if out.format != "json" && out.format != "csv" {
            return Err(Error::SchemaError {
                path: "output.format".into(),
                message: format!("unknown format {:?}", out.format),
            });
        }
    }
    Ok(cfg)
}

fn at(path: &str, e: Error) -> Error {
    Error::SchemaError {
        path: path.into(),
        message: e.to_string(),
    }
}

impl RunConfig {
    pub fn correlator(&self) -> Result<Correlator> {
        let kind = match self.correlator.kind.as_str() {
            "long_range" => CorrelatorKind::LongRange,
            "isotropic" => CorrelatorKind::Isotropic,
            other => {
                return Err(Error::SchemaError {
                    path: "correlator.kind".into(),
                    message: format!("unknown kind {other:?}"),
                })
            }
        };
        let spec = CorrelatorSpec {
            kind,
            slope_a: self.correlator.a,
            const_c0: self.correlator.c0,
            atoms: self
                .correlator
                .atoms
                .iter()
                .map(|a| Atom { w: a.w, t: a.t })
                .collect(),
        };
        validate_correlator(spec)
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        match self.state_space.kind.as_str() {
            "hypercube" => StateSpace::hypercube().validated(),
            "product" => StateSpace::Product {
                atoms: self
                    .state_space
                    .mu_atoms
                    .iter()
                    .map(|a| (a.u, a.p))
                    .collect(),
            }
            .validated(),
            "ball" => StateSpace::Ball {
                l: self.state_space.l,
                h1: self.state_space.h1,
                h2: self.state_space.h2,
            }
            .validated(),
            other => Err(Error::SchemaError {
                path: "state_space.type".into(),
                message: format!("unknown type {other:?}"),
            }),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let s = self.eval.clone().unwrap_or_default();
        EvalConfig {
            m_grid: s.m_grid,
            y_halfwidth: s.y_halfwidth,
            y_points: s.y_points,
            quad_nodes: s.quad_nodes,
            lambda_bracket: s.lambda_bracket,
            tol_lambda: s.tol_lambda,
            tol_value: s.tol_value,
        }
    }

    pub fn order_param(&self) -> Result<Option<DiscreteOrderParameter>> {
        match &self.order_param {
            None => Ok(None),
            Some(op) => Ok(Some(validate_order_param(
                op.r,
                op.q.clone(),
                op.x.clone(),
            )?)),
        }
    }

    /// Seed for stochastic commands; erroring when absent.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or(Error::SchemaError {
            path: "seed".into(),
            message: "seed is mandatory for stochastic commands".into(),
        })
    }
}

/// The default shipped configuration: single-atom correlator on the
/// hypercube, matching the acceptance instances.
pub fn default_config() -> RunConfig {
    parse_config(DEFAULT_CONFIG_JSON).expect("embedded default config must parse")
}

pub const DEFAULT_CONFIG_JSON: &str = r#"{
  "correlator": {"kind": "long_range", "A": 0.0, "atoms": [{"w": 1.0, "t": 1.0}]},
  "state_space": {"type": "hypercube"},
  "beta": [1.0],
  "rsb_levels": 2,
  "eval": {
    "M_grid": [100.0, 1000.0, 10000.0],
    "y_halfwidth": 64.0,
    "y_points": 4097,
    "quad_nodes": 64,
    "lambda_bracket": [-4.0, 4.0],
    "tol_lambda": 1e-6,
    "tol_value": 1e-4
  },
  "simulate": {"N": 12, "reps": 200},
  "seed": 20240817
}"#;
