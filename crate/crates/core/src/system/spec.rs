use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_wave_system, DiffusionMap, DriftMap, GalerkinSystem, ScalarFn};
use crate::error::{Error, Result};

/// Serialized system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Wave {
        modes: usize,
        #[serde(rename = "F", default)]
        drift: DriftSpec,
        #[serde(default = "one")]
        c0: f64,
    },
    Generic {
        dim: usize,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
        b: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        c0: f64,
        #[serde(rename = "F", default)]
        drift: DriftSpec,
        #[serde(rename = "G", default)]
        diffusion: DiffusionSpec,
        #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    #[default]
    Zero,
    Linear {
        #[serde(rename = "K")]
        k: Vec<Vec<f64>>,
    },
    Nemytskii {
        f: ScalarFn,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    #[default]
    Identity,
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    Modulated {
        base: Vec<Vec<f64>>,
        amplitude: f64,
        direction: Vec<f64>,
    },
}

fn matrix(path: &str, rows: &[Vec<f64>], nrows: usize, ncols: Option<usize>) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::config(path, format!("expected {nrows} rows, got {}", rows.len())));
    }
    let ncols = ncols.unwrap_or_else(|| rows.first().map_or(0, |r| r.len()));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::config(format!("{path}[{i}]"), format!("expected {ncols} entries, got {}", r.len())));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("{path}[{i}][{j}]"), "must be finite"));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl SystemSpec {
    pub fn build(&self) -> Result<GalerkinSystem> {
        match self {
            SystemSpec::Wave { modes, drift, c0 } => {
                if *modes == 0 {
                    return Err(Error::config("system.modes", "must be at least 1"));
                }
                let f = match drift {
                    DriftSpec::Zero => ScalarFn::Zero,
                    DriftSpec::Nemytskii { f } => *f,
                    DriftSpec::Linear { .. } => {
                        return Err(Error::config("system.F.kind", "wave systems take a nemytskii drift"))
                    }
                };
                build_wave_system(*modes, f).with_c0(*c0)
            }
            SystemSpec::Generic {
                dim,
                a,
                b,
                c0,
                drift,
                diffusion,
                bound,
            } => {
                let d = *dim;
                if d == 0 {
                    return Err(Error::config("system.dim", "must be at least 1"));
                }
                let a = matrix("system.A", a, d, Some(d))?;
                let drift = match drift {
                    DriftSpec::Zero => DriftMap::Zero,
                    DriftSpec::Linear { k } => DriftMap::Linear(matrix("system.F.K", k, d, Some(d))?),
                    DriftSpec::Nemytskii { .. } => {
                        return Err(Error::config("system.F.kind", "nemytskii drift requires a wave system"))
                    }
                };
                let diffusion = match diffusion {
                    DiffusionSpec::Identity => DiffusionMap::Identity,
                    DiffusionSpec::Constant { matrix: m } => {
                        DiffusionMap::Constant(matrix("system.G.matrix", m, d, None)?)
                    }
                    DiffusionSpec::Modulated {
                        base,
                        amplitude,
                        direction,
                    } => {
                        if direction.len() != d {
                            return Err(Error::config("system.G.direction", format!("must have length {d}")));
                        }
                        DiffusionMap::Modulated {
                            base: matrix("system.G.base", base, d, None)?,
                            amplitude: *amplitude,
                            direction: DVector::from_vec(direction.clone()),
                        }
                    }
                };
                let mut sys = GalerkinSystem::generic(a, drift, diffusion)?;
                if let Some(b) = b {
                    let b = matrix("system.B", b, d, Some(d))?;
                    if (&b - b.transpose()).amax() > 1e-12 {
                        return Err(Error::config("system.B", "must be symmetric"));
                    }
                    sys = sys.with_b(b)?;
                }
                sys = sys.with_c0(*c0)?;
                if let Some(m) = bound {
                    sys = sys.with_bound(*m);
                }
                Ok(sys)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_wave_and_generic() {
        let w: SystemSpec = serde_json::from_str(
            r#"{"kind":"wave","modes":4,"F":{"kind":"nemytskii","f":{"kind":"sin","amplitude":1.0}},"c0":1.0}"#,
        )
        .unwrap();
        let sys = w.build().unwrap();
        assert_eq!(sys.dim(), 8);
        assert_eq!(sys.noise_dim(), 4);
        let g: SystemSpec = serde_json::from_str(r#"{"kind":"generic","dim":1,"A":[[1.0]]}"#).unwrap();
        let sys = g.build().unwrap();
        assert_eq!(sys.dim(), 1);
        assert_eq!(sys.c0(), 0.0);
    }

    #[test]
    fn malformed_matrix_is_path_qualified() {
        let g: SystemSpec = serde_json::from_str(r#"{"kind":"generic","dim":2,"A":[[1.0,0.0],[0.0]]}"#).unwrap();
        match g.build().unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "system.A[1]"),
            e => panic!("{e}"),
        }
    }
}
