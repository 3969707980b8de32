//! Levy noise models: Laplace exponents `H0`, their Legendre transforms `L0`,
//! and samplers for the scaled processes `L_n(t) = L(n t) / n`.
//!
//! Everything is expressed in the eigenbasis of the covariance `Q`, whose
//! eigenvalues form `q_spectrum`. Both models are radial:
//! `H0(p) = h(|Q^{1/2} p|)` and `L0(z) = l(|Q^{-1/2} z|)` on the range of
//! `Q^{1/2}`, `+inf` off it.

mod path;
pub mod radial;
pub mod subordinator;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use path::{substream, JumpPath, DEFAULT_GRID_STEPS};
pub use radial::{inverse_g, LegendreTable};
pub use subordinator::{RhoSpec, Subordinator};

/// Eigenvalues below this are treated as the kernel of `Q`.
pub const KERNEL_THRESHOLD: f64 = 1e-14;

/// A value in `[0, +inf]` where `+inf` is an explicit sentinel rather than an
/// overflowed float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extended {
    Finite(f64),
    PlusInfinity,
}

impl Extended {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Extended::PlusInfinity)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::PlusInfinity => None,
        }
    }

    /// Lossy conversion, for plotting and comparisons.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    CompoundPoissonGaussian,
    SubordinatedWiener,
}

fn default_eps_rho() -> f64 {
    1e-3
}

fn default_lambda_max() -> f64 {
    16.0
}

/// Serialized form of a [`NoiseModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub variant: Variant,
    pub q_spectrum: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<RhoSpec>,
    #[serde(default = "default_eps_rho")]
    pub eps_rho: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    spec: NoiseSpec,
    sqrt_q: Vec<f64>,
    subordinator: Option<Arc<Subordinator>>,
}

impl NoiseModel {
    pub fn new(spec: NoiseSpec) -> Result<Self> {
        if spec.q_spectrum.is_empty() {
            return Err(Error::config("noise.q_spectrum", "must not be empty"));
        }
        for (i, &q) in spec.q_spectrum.iter().enumerate() {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(Error::config(
                    format!("noise.q_spectrum[{i}]"),
                    format!("eigenvalue must be finite and nonnegative, got {q}"),
                ));
            }
        }
        if spec.q_spectrum.iter().all(|&q| q <= KERNEL_THRESHOLD) {
            return Err(Error::config("noise.q_spectrum", "at least one eigenvalue must be positive"));
        }
        let subordinator = match spec.variant {
            Variant::CompoundPoissonGaussian => {
                if spec.rho.is_some() {
                    return Err(Error::config("noise.rho", "only valid for SubordinatedWiener"));
                }
                None
            }
            Variant::SubordinatedWiener => {
                let rho = spec
                    .rho
                    .clone()
                    .ok_or_else(|| Error::config("noise.rho", "required for SubordinatedWiener"))?;
                Some(Arc::new(Subordinator::new(rho, spec.eps_rho, spec.lambda_max)?))
            }
        };
        let sqrt_q = spec.q_spectrum.iter().map(|q| q.sqrt()).collect();
        Ok(NoiseModel {
            spec,
            sqrt_q,
            subordinator,
        })
    }

    /// Compound Poisson process with rate 1 and `N(0, Q)` jumps.
    pub fn compound_poisson(q_spectrum: Vec<f64>) -> Result<Self> {
        Self::new(NoiseSpec {
            variant: Variant::CompoundPoissonGaussian,
            q_spectrum,
            rho: None,
            eps_rho: default_eps_rho(),
            lambda_max: default_lambda_max(),
        })
    }

    /// Wiener process with covariance `Q` time-changed by a subordinator.
    pub fn subordinated(q_spectrum: Vec<f64>, rho: RhoSpec, eps_rho: f64) -> Result<Self> {
        Self::new(NoiseSpec {
            variant: Variant::SubordinatedWiener,
            q_spectrum,
            rho: Some(rho),
            eps_rho,
            lambda_max: default_lambda_max(),
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn dim(&self) -> usize {
        self.sqrt_q.len()
    }

    pub fn q_spectrum(&self) -> &[f64] {
        &self.spec.q_spectrum
    }

    pub fn sqrt_q(&self) -> &[f64] {
        &self.sqrt_q
    }

    pub fn subordinator(&self) -> Option<&Subordinator> {
        self.subordinator.as_deref()
    }

    /// Operator norm of `Q^{1/2}`.
    pub fn sqrt_q_norm(&self) -> f64 {
        self.sqrt_q.iter().copied().fold(0.0, f64::max)
    }

    /// `int |z|^2 nu(dz) = Tr Q`.
    pub fn trace_q(&self) -> f64 {
        self.spec.q_spectrum.iter().sum()
    }

    fn check_dim(&self, v: &[f64]) {
        assert_eq!(v.len(), self.dim(), "vector dimension does not match q_spectrum");
    }

    /// Radial Hamiltonian `h(u)`.
    pub fn radial_h(&self, u: f64) -> Result<f64> {
        match &self.subordinator {
            None => Ok(radial::gaussian_h(u)),
            Some(s) => s.h(u),
        }
    }

    pub fn radial_h_prime(&self, u: f64) -> Result<f64> {
        match &self.subordinator {
            None => Ok(radial::gaussian_h_prime(u)),
            Some(s) => s.h_prime(u),
        }
    }

    /// Radial conjugate `l(s)`: closed form for Gaussian jumps, numerical
    /// conjugation of `h` otherwise.
    pub fn radial_l(&self, s: f64) -> Result<f64> {
        match &self.subordinator {
            None => Ok(radial::gaussian_l(s)),
            Some(_) => Ok(radial::conjugate_numeric(|u| self.radial_h(u), s)?.0),
        }
    }

    /// `l'(s)`, the maximizer in the conjugate.
    pub fn l0_prime_radial(&self, s: f64) -> Result<f64> {
        assert!(s >= 0.0, "l0_prime_radial needs s >= 0");
        match &self.subordinator {
            None => Ok(radial::gaussian_l_prime(s)),
            Some(_) => Ok(radial::conjugate_numeric(|u| self.radial_h(u), s)?.1),
        }
    }

    /// `(l(s), l'(s))` for use inside optimizers. Uses the precomputed
    /// conjugate table for subordinated noise; the value and derivative are
    /// exactly consistent with each other.
    pub fn running_cost(&self, s: f64) -> Result<(f64, f64)> {
        match &self.subordinator {
            None => Ok((radial::gaussian_l(s), radial::gaussian_l_prime(s))),
            Some(sub) => match sub.table().eval(s) {
                Some(v) => Ok(v),
                None => {
                    let (l, u) = radial::conjugate_numeric(|u| sub.h(u), s)?;
                    Ok((l, u))
                }
            },
        }
    }

    /// `|Q^{1/2} p|`.
    pub fn q_half_norm(&self, p: &[f64]) -> f64 {
        self.check_dim(p);
        p.iter()
            .zip(&self.sqrt_q)
            .map(|(x, s)| (x * s) * (x * s))
            .sum::<f64>()
            .sqrt()
    }

    /// `|Q^{-1/2} z|`, or `None` when `z` has a component in the kernel.
    pub fn q_inv_half_norm(&self, z: &[f64]) -> Option<f64> {
        self.check_dim(z);
        let mut acc = 0.0;
        for (&zk, &qk) in z.iter().zip(&self.spec.q_spectrum) {
            if qk < KERNEL_THRESHOLD {
                if zk != 0.0 {
                    return None;
                }
            } else {
                acc += zk * zk / qk;
            }
        }
        Some(acc.sqrt())
    }

    /// Laplace exponent `H0(p) = int (e^{<p,z>} - 1 - <p,z>) nu(dz)`.
    pub fn h0(&self, p: &[f64]) -> Result<f64> {
        self.radial_h(self.q_half_norm(p))
    }

    /// Legendre transform `L0(z) = sup_y (<z,y> - H0(y))`.
    pub fn l0(&self, z: &[f64]) -> Result<Extended> {
        match self.q_inv_half_norm(z) {
            None => Ok(Extended::PlusInfinity),
            Some(s) => Ok(Extended::Finite(self.radial_l(s)?)),
        }
    }

    /// `N_eps = sup_{|y| = 1/eps} H0(y)`, so that `|z| <= eps L0(z) + N_eps`.
    pub fn epsilon_bound(&self, eps: f64) -> Result<f64> {
        assert!(eps > 0.0, "epsilon_bound needs eps > 0");
        self.radial_h(self.sqrt_q_norm() / eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(q: &[f64]) -> NoiseModel {
        NoiseModel::compound_poisson(q.to_vec()).unwrap()
    }

    #[test]
    fn h0_examples() {
        assert_eq!(cp(&[1.0]).h0(&[0.0]).unwrap(), 0.0);
        let v = cp(&[1.0]).h0(&[1.0]).unwrap();
        assert!((v - 0.648_721_270_7).abs() < 1e-10);
        let v = cp(&[1.0, 4.0]).h0(&[1.0, 0.5]).unwrap();
        assert!((v - 1.718_281_828_5).abs() < 1e-10);
    }

    #[test]
    fn subordinated_point_mass_reduces_to_compound_poisson() {
        let sub = NoiseModel::subordinated(vec![1.0, 4.0], RhoSpec::PointMass { at: 1.0 }, 1e-3).unwrap();
        let p = [0.7, -0.2];
        let direct = (0.5 * (0.49 + 4.0 * 0.04f64)).exp() - 1.0;
        assert!((sub.h0(&p).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn l0_examples() {
        let m = cp(&[1.0]);
        assert_eq!(m.l0(&[0.0]).unwrap(), Extended::Finite(0.0));
        let v = m.l0(&[0.5f64.exp()]).unwrap().finite().unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        // Grid conjugation oracle over y in [-6, 6].
        let z = 0.5f64.exp();
        let mut best = f64::NEG_INFINITY;
        let mut y = -6.0;
        while y <= 6.0 {
            best = best.max(z * y - m.h0(&[y]).unwrap());
            y += 1e-4;
        }
        assert!((best - v).abs() < 1e-7);
        assert!(cp(&[1.0, 0.0]).l0(&[0.0, 1.0]).unwrap().is_infinite());
        assert!(!cp(&[1.0, 0.0]).l0(&[1.0, 0.0]).unwrap().is_infinite());
    }

    #[test]
    fn l0_prime_examples() {
        let m = cp(&[1.0]);
        assert_eq!(m.l0_prime_radial(0.0).unwrap(), 0.0);
        let s = 0.5f64.exp();
        let d = 1e-6;
        let fd = (m.radial_l(s + d).unwrap() - m.radial_l(s - d).unwrap()) / (2.0 * d);
        assert!((m.l0_prime_radial(s).unwrap() - 1.0).abs() < 1e-12);
        assert!((fd - 1.0).abs() < 1e-8);

        let sub = NoiseModel::subordinated(vec![1.0], RhoSpec::PointMass { at: 1.0 }, 1e-3).unwrap();
        let fd = (sub.radial_l(s + d).unwrap() - sub.radial_l(s - d).unwrap()) / (2.0 * d);
        assert!((sub.l0_prime_radial(s).unwrap() - 1.0).abs() < 1e-6);
        assert!((fd - 1.0).abs() < 1e-4);
    }

    #[test]
    fn epsilon_bound_examples() {
        let m = cp(&[1.0]);
        assert!((m.epsilon_bound(1.0).unwrap() - (0.5f64.exp() - 1.0)).abs() < 1e-15);
        assert!((m.epsilon_bound(0.5).unwrap() - (2f64.exp() - 1.0)).abs() < 1e-12);
        assert!(0.0 <= 1.0 * 0.0 + m.epsilon_bound(0.3).unwrap());
    }

    #[test]
    fn running_cost_table_agrees_with_exact_conjugate() {
        let sub = NoiseModel::subordinated(vec![1.0], RhoSpec::Ne2Family { alpha: -0.5 }, 1e-3).unwrap();
        for &s in &[0.05, 0.7, 2.0, 9.0] {
            let (l, dl) = sub.running_cost(s).unwrap();
            let exact = sub.radial_l(s).unwrap();
            assert!((l - exact).abs() < 1e-7 * (1.0 + exact), "s={s}");
            assert!((dl - sub.l0_prime_radial(s).unwrap()).abs() < 1e-4, "s={s}");
        }
    }

    #[test]
    fn construction_errors_name_the_offending_field() {
        let e = NoiseModel::compound_poisson(vec![1.0, -0.5]).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "noise.q_spectrum[1]"));
        let e = NoiseModel::new(NoiseSpec {
            variant: Variant::SubordinatedWiener,
            q_spectrum: vec![1.0],
            rho: None,
            eps_rho: 1e-3,
            lambda_max: 16.0,
        })
        .unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "noise.rho"));
        assert!(NoiseModel::compound_poisson(vec![0.0]).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let js = r#"{"variant":"SubordinatedWiener","q_spectrum":[1.0],"rho":{"kind":"ne2_family","alpha":-0.5},"eps_rho":0.001}"#;
        let spec: NoiseSpec = serde_json::from_str(js).unwrap();
        assert_eq!(spec.rho, Some(RhoSpec::Ne2Family { alpha: -0.5 }));
        NoiseModel::new(spec).unwrap();
    }
}
