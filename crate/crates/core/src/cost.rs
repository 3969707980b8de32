//! Terminal payoffs `g` for the Laplace functional and the control objective.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalCost {
    Constant { c: f64 },
    /// `<p, x>`. Unbounded, so only meaningful as an oracle.
    Linear { p: Vec<f64> },
    /// `scale * tanh(<p, x>)`.
    Tanh { p: Vec<f64>, scale: f64 },
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))`.
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `base + by`.
    Shifted { base: Box<TerminalCost>, by: f64 },
}

impl TerminalCost {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let want = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != dim {
                return Err(Error::config(
                    format!("g.{name}"),
                    format!("expected {dim} entries, found {}", v.len()),
                ));
            }
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::config(format!("g.{name}[{i}]"), "must be finite"));
            }
            Ok(())
        };
        let finite = |name: &str, x: f64| -> Result<()> {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("g.{name}"), "must be finite"))
            }
        };
        match self {
            TerminalCost::Constant { c } => finite("c", *c),
            TerminalCost::Linear { p } => want("p", p),
            TerminalCost::Tanh { p, scale } => {
                want("p", p)?;
                finite("scale", *scale)
            }
            TerminalCost::Bump {
                amplitude,
                center,
                width,
            } => {
                want("center", center)?;
                finite("amplitude", *amplitude)?;
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::config("g.width", "must be positive"));
                }
                Ok(())
            }
            TerminalCost::Shifted { base, by } => {
                finite("by", *by)?;
                base.validate(dim)
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm().is_finite()
    }

    /// `sup |g|`, infinite for the linear oracle.
    pub fn sup_norm(&self) -> f64 {
        match self {
            TerminalCost::Constant { c } => c.abs(),
            TerminalCost::Linear { p } => {
                if p.iter().all(|&v| v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            TerminalCost::Tanh { p, scale } => {
                if p.iter().all(|&v| v == 0.0) {
                    0.0
                } else {
                    scale.abs()
                }
            }
            TerminalCost::Bump { amplitude, .. } => amplitude.abs(),
            TerminalCost::Shifted { base, by } => {
                if let TerminalCost::Bump { amplitude, .. } = base.as_ref() {
                    // range is between `by` and `by + amplitude`
                    by.abs().max((by + amplitude).abs())
                } else {
                    base.sup_norm() + by.abs()
                }
            }
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            TerminalCost::Constant { c } => *c,
            TerminalCost::Linear { p } => dot(p, x),
            TerminalCost::Tanh { p, scale } => scale * dot(p, x).tanh(),
            TerminalCost::Bump {
                amplitude,
                center,
                width,
            } => amplitude * (-dist_sq(center, x) / (2.0 * width * width)).exp(),
            TerminalCost::Shifted { base, by } => base.value(x) + by,
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            TerminalCost::Constant { .. } => DVector::zeros(x.len()),
            TerminalCost::Linear { p } => DVector::from_column_slice(p),
            TerminalCost::Tanh { p, scale } => {
                let t = dot(p, x).tanh();
                DVector::from_column_slice(p) * (scale * (1.0 - t * t))
            }
            TerminalCost::Bump {
                amplitude,
                center,
                width,
            } => {
                let w2 = width * width;
                let e = amplitude * (-dist_sq(center, x) / (2.0 * w2)).exp();
                DVector::from_fn(x.len(), |i, _| -e * (x[i] - center[i]) / w2)
            }
            TerminalCost::Shifted { base, .. } => base.gradient(x),
        }
    }
}

fn dot(p: &[f64], x: &DVector<f64>) -> f64 {
    p.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

fn dist_sq(c: &[f64], x: &DVector<f64>) -> f64 {
    c.iter().zip(x.iter()).map(|(a, b)| (b - a).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs() -> Vec<TerminalCost> {
        vec![
            TerminalCost::Constant { c: 0.3 },
            TerminalCost::Linear { p: vec![0.5, -1.0] },
            TerminalCost::Tanh {
                p: vec![1.0, 2.0],
                scale: 0.7,
            },
            TerminalCost::Bump {
                amplitude: 0.5,
                center: vec![0.2, -0.1],
                width: 0.6,
            },
            TerminalCost::Shifted {
                base: Box::new(TerminalCost::Tanh {
                    p: vec![1.0, 0.0],
                    scale: 1.0,
                }),
                by: -0.2,
            },
        ]
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = DVector::from_vec(vec![0.4, -0.3]);
        for g in costs() {
            let grad = g.gradient(&x);
            for i in 0..2 {
                let mut e = DVector::zeros(2);
                e[i] = 1e-6;
                let fd = (g.value(&(&x + &e)) - g.value(&(&x - &e))) / 2e-6;
                assert!((fd - grad[i]).abs() < 1e-8, "{g:?}");
            }
        }
    }

    #[test]
    fn bounds() {
        let sups: Vec<f64> = costs().iter().map(|g| g.sup_norm()).collect();
        assert_eq!(sups, vec![0.3, f64::INFINITY, 0.7, 0.5, 1.2]);
        assert!(!costs()[1].is_bounded());
    }

    #[test]
    fn validation_paths() {
        let bad = TerminalCost::Bump {
            amplitude: 1.0,
            center: vec![0.0],
            width: 1.0,
        };
        let err = bad.validate(2).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "g.center"));
        let g: TerminalCost = serde_json::from_str(r#"{"kind":"tanh","p":[1.0],"scale":0.5}"#).unwrap();
        assert!(g.validate(1).is_ok());
    }
}
