//! The JSON run configuration. See `docs/config-schema.md`.

use std::path::Path;

use jumpld_core::control::{PenaltySchedule, SolverOptions};
use jumpld_core::cost::TerminalCost;
use jumpld_core::noise::{NoiseModel, NoiseSpec};
use jumpld_core::system::{GalerkinSystem, SystemSpec};
use jumpld_core::verify::{Axis, Ball, DualityGrid};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub noise: Option<NoiseSpec>,
    pub system: Option<SystemSpec>,
    pub g: Option<TerminalCost>,
    pub x0: Option<StateSpec>,
    pub target: Option<StateSpec>,
    pub horizon: Option<f64>,
    pub n: Option<u32>,
    pub ns: Option<Vec<u32>>,
    pub dt: Option<f64>,
    pub samples: Option<u64>,
    pub trajectories: Option<u64>,
    pub solver: Option<SolverOptions>,
    pub penalty: Option<PenaltySchedule>,
    pub noise_table: Option<NoiseTable>,
    pub duality: Option<DualityGrid>,
    pub lambdas: Option<Vec<f64>>,
    pub ball: Option<Ball>,
    pub table: Option<TableSpec>,
    pub pairs: Option<Vec<[StateSpec; 2]>>,
    pub c1: Option<f64>,
    pub tolerance: Option<f64>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// A state given directly, or as wave displacement and velocity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    State(Vec<f64>),
    Wave { u: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTable {
    #[serde(default = "ten")]
    pub s_max: f64,
    #[serde(default = "hundred_one")]
    pub points: usize,
}

fn ten() -> f64 {
    10.0
}

fn hundred_one() -> usize {
    101
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub time_points: usize,
    pub space: Vec<Axis>,
}

/// Parsed configuration with the SHA-256 of its canonical JSON form.
pub struct Loaded {
    pub config: Config,
    pub hash: String,
}

pub fn canonical_hash(value: &serde_json::Value) -> String {
    let text = serde_json::to_string(value).expect("values serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> CliResult<Loaded> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Schema(format!("not valid JSON: {e}")))?;
    let config: Config = serde_path_to_error::deserialize(&value)
        .map_err(|e| CliError::Schema(format!("`{}`: {}", e.path(), e.inner())))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Schema(format!(
            "`schema_version`: expected {SCHEMA_VERSION}, found {}",
            config.schema_version
        )));
    }
    Ok(Loaded {
        hash: canonical_hash(&value),
        config,
    })
}

impl Config {
    pub fn noise_model(&self, command: &str) -> CliResult<NoiseModel> {
        let spec = self.noise.clone().ok_or_else(|| CliError::missing("noise", command))?;
        Ok(NoiseModel::new(spec)?)
    }

    pub fn system(&self, command: &str) -> CliResult<GalerkinSystem> {
        let spec = self.system.as_ref().ok_or_else(|| CliError::missing("system", command))?;
        Ok(spec.build()?)
    }

    pub fn payoff(&self, command: &str, dim: usize) -> CliResult<TerminalCost> {
        let g = self.g.clone().ok_or_else(|| CliError::missing("g", command))?;
        g.validate(dim)?;
        Ok(g)
    }

    pub fn horizon(&self, command: &str) -> CliResult<f64> {
        let t = self.horizon.ok_or_else(|| CliError::missing("horizon", command))?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Schema("`horizon`: must be positive and finite".into()));
        }
        Ok(t)
    }

    pub fn scaling(&self, command: &str) -> CliResult<u32> {
        match self.n {
            Some(0) => Err(CliError::Schema("`n`: must be positive".into())),
            Some(n) => Ok(n),
            None => Err(CliError::missing("n", command)),
        }
    }

    pub fn scalings(&self, command: &str) -> CliResult<Vec<u32>> {
        let ns = self.ns.clone().ok_or_else(|| CliError::missing("ns", command))?;
        if ns.is_empty() || ns.contains(&0) || ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Schema("`ns`: must be positive and increasing".into()));
        }
        Ok(ns)
    }

    /// State step, default `T / 512`.
    pub fn steps(&self, horizon: f64) -> CliResult<usize> {
        match self.dt {
            None => Ok(512),
            Some(dt) if dt > 0.0 && dt <= horizon => Ok(((horizon / dt) - 1e-9).ceil().max(1.0) as usize),
            Some(_) => Err(CliError::Schema("`dt`: need 0 < dt <= horizon".into())),
        }
    }

    pub fn state(&self, field: &str, spec: Option<&StateSpec>, sys: &GalerkinSystem, command: &str) -> CliResult<DVector<f64>> {
        let spec = spec.ok_or_else(|| CliError::missing(field, command))?;
        resolve_state(field, spec, sys)
    }
}

pub fn resolve_state(field: &str, spec: &StateSpec, sys: &GalerkinSystem) -> CliResult<DVector<f64>> {
    let x = match spec {
        StateSpec::State(v) => {
            if v.len() != sys.dim() {
                return Err(CliError::Schema(format!(
                    "`{field}`: expected {} entries, found {}",
                    sys.dim(),
                    v.len()
                )));
            }
            DVector::from_column_slice(v)
        }
        StateSpec::Wave { u, v } => {
            let modes = sys.dim() / 2;
            if sys.wave().is_none() {
                return Err(CliError::Schema(format!("`{field}`: displacement/velocity form needs a wave system")));
            }
            if u.len() != modes || v.len() != modes {
                return Err(CliError::Schema(format!("`{field}`: u and v need {modes} entries each")));
            }
            sys.wave_state(u, v)
        }
    };
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Schema(format!("`{field}[{i}]`: must be finite")));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_reported_with_their_path() {
        let err = parse(r#"{"noise": {"variant": "CompoundPoissonGaussian", "q_spectrum": [1.0], "bogus": 1}}"#)
            .err()
            .unwrap();
        let msg = err.to_string();
        assert!(msg.contains("noise"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_ignores_key_order_and_whitespace() {
        let a = parse(r#"{"horizon": 1.0, "n": 5}"#).ok().unwrap();
        let b = parse("{\n  \"n\": 5,\n  \"horizon\": 1.0\n}").ok().unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
    }
}
