//! Model parameters and experiment configuration (flat JSON, strict keys).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Boundary, Window};

/// Model constants shared by every run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub d: usize,
    #[serde(rename = "L")]
    pub side: f64,
    pub rho: f64,
    pub lambda: f64,
    pub seed: u64,
    pub boundary: Boundary,
    pub slab_len: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            d: 2,
            side: 20.0,
            rho: 0.75,
            lambda: 1.0,
            seed: 1,
            boundary: Boundary::Torus,
            slab_len: 1.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::InvalidParams(format!("d = {} not in {{1,2,3}}", self.d)));
        }
        if !(self.side >= 4.0) {
            return Err(Error::InvalidParams(format!("L = {} must be >= 4", self.side)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParams(format!("rho = {} not in [0,1]", self.rho)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParams(format!("lambda = {} must be > 0", self.lambda)));
        }
        if !(self.slab_len > 0.0) {
            return Err(Error::InvalidParams(format!(
                "slab_len = {} must be > 0",
                self.slab_len
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> Window {
        Window {
            d: self.d,
            side: self.side,
            boundary: self.boundary,
        }
    }

    /// Replica seeds are derived by offset so replica sets are reproducible
    /// regardless of the parallelism degree.
    pub fn with_seed(&self, seed: u64) -> SimParams {
        SimParams { seed, ..*self }
    }

    pub fn replica(&self, index: u64) -> SimParams {
        self.with_seed(self.seed.wrapping_add(index))
    }
}

/// Initial-condition generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Empty,
    Matern1,
    Matern2,
    SaturatedRsa,
}

fn default_replicas() -> usize {
    20
}
fn default_sample_dt() -> f64 {
    0.1
}
fn default_lambda_prop() -> f64 {
    1.0
}
fn default_t_end() -> f64 {
    10.0
}
fn default_t_min_fit() -> f64 {
    1.0
}
fn default_t_init() -> f64 {
    1.0
}
fn default_t_max() -> f64 {
    64.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_seeds() -> usize {
    100
}
fn default_parallelism() -> usize {
    0 // 0 = use available parallelism
}
fn default_rhos() -> Vec<f64> {
    vec![0.3, 0.5, 0.75, 0.9, 1.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub params: SimParams,
    pub t_end: f64,
    pub init: InitKind,
    pub lambda_prop: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            params: SimParams::default(),
            t_end: default_t_end(),
            init: InitKind::Empty,
            lambda_prop: default_lambda_prop(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoupleConfig {
    #[serde(flatten)]
    pub params: SimParams,
    pub t_end: f64,
    pub sample_dt: f64,
    pub replicas: usize,
    pub init2_lambda_prop: f64,
    pub t_min_fit: f64,
    pub parallelism: usize,
}

impl Default for CoupleConfig {
    fn default() -> Self {
        CoupleConfig {
            params: SimParams::default(),
            t_end: default_t_end(),
            sample_dt: default_sample_dt(),
            replicas: default_replicas(),
            init2_lambda_prop: default_lambda_prop(),
            t_min_fit: default_t_min_fit(),
            parallelism: default_parallelism(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CftpConfig {
    #[serde(flatten)]
    pub params: SimParams,
    pub t_init: f64,
    pub t_max: f64,
    pub replicas: usize,
    pub parallelism: usize,
}

impl Default for CftpConfig {
    fn default() -> Self {
        CftpConfig {
            params: SimParams::default(),
            t_init: default_t_init(),
            t_max: default_t_max(),
            replicas: default_replicas(),
            parallelism: default_parallelism(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub params: SimParams,
    pub rhos: Vec<f64>,
    pub t_long: f64,
    pub t_init: f64,
    pub t_max: f64,
    pub matern_lambda: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            params: SimParams::default(),
            rhos: default_rhos(),
            t_long: 50.0,
            t_init: default_t_init(),
            t_max: default_t_max(),
            matern_lambda: default_lambda_prop(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    #[serde(flatten)]
    pub params: SimParams,
    /// Reduce event budget for a fast smoke run.
    pub quick: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlabDemoConfig {
    #[serde(flatten)]
    pub params: SimParams,
    pub epsilon: f64,
    pub seeds: usize,
}

impl Default for SlabDemoConfig {
    fn default() -> Self {
        SlabDemoConfig {
            params: SimParams {
                side: 50.0,
                ..SimParams::default()
            },
            epsilon: default_epsilon(),
            seeds: default_seeds(),
        }
    }
}

/// Manifest written next to every artifact set; replaying it reproduces the
/// outputs byte-for-byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Manifest {
            tool: "hardcore-sbd".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
        }
    }
}

/// Parse a subcommand config from JSON text. The text may be either the flat
/// config object itself or a previously emitted manifest; in the latter case
/// the embedded config is extracted (and the command name checked).
pub fn parse_config<T: for<'de> Deserialize<'de>>(text: &str, command: &str) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let config_value = if value.get("tool").is_some() && value.get("config").is_some() {
        let manifest: Manifest = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("invalid manifest: {e}")))?;
        if manifest.command != command {
            return Err(Error::Config(format!(
                "manifest was produced by `{}`, not `{command}`",
                manifest.command
            )));
        }
        manifest.config
    } else {
        value
    };
    serde_json::from_value(config_value).map_err(|e| Error::Config(e.to_string()))
}
