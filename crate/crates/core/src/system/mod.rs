//! Galerkin truncations of the operator data `(A, F, G, B, c0)`.
//!
//! States live in `R^d` with the Euclidean inner product. For wave systems
//! the coordinates are energy coordinates `(A^{1/2} u, v)`, so the Euclidean
//! norm is the energy norm.

mod check;
mod linear;
mod maps;
mod spec;
mod wave;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
pub use check::{check_structural, check_structural_with};
pub use linear::{LinearPart, Propagator};
pub use maps::{DiffusionMap, DriftMap, Nemytskii, ScalarFn};
pub use spec::{DiffusionSpec, DriftSpec, SystemSpec};
pub use wave::build_wave_system;

/// Wave-specific metadata kept alongside the generic representation.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveInfo {
    /// Dirichlet Laplacian eigenvalues `mu_k = k^2` on `(0, pi)`.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    linear: LinearPart,
    b: DMatrix<f64>,
    b_sqrt: DMatrix<f64>,
    c0: f64,
    drift: DriftMap,
    diffusion: DiffusionMap,
    bound_m: f64,
    wave: Option<WaveInfo>,
}

pub(crate) fn sym_sqrt(m: &DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(0.5 * (m + m.transpose()));
    let d = eig.eigenvalues.map(|v| v.max(0.0).powf(power));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

pub(crate) fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(0.5 * (m + m.transpose())).eigenvalues.min()
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// `((A + I)(A^T + I))^{-1/2}`, the default weak-norm operator for generic systems.
pub fn default_b(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let shifted = a + DMatrix::identity(n, n);
    sym_sqrt(&(&shifted * shifted.transpose()), -0.5)
}

impl GalerkinSystem {
    /// Generic system with the default `B` and `c0 = 0`. `M` is set to an
    /// analytic upper bound for the hypotheses on `F` and `G`.
    pub fn generic(a: DMatrix<f64>, drift: DriftMap, diffusion: DiffusionMap) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::config("system.A", "must be square"));
        }
        let b = default_b(&a);
        Self::from_parts(LinearPart::from_matrix(a), b, 0.0, drift, diffusion, None)
    }

    pub fn from_parts(
        linear: LinearPart,
        b: DMatrix<f64>,
        c0: f64,
        drift: DriftMap,
        diffusion: DiffusionMap,
        wave: Option<WaveInfo>,
    ) -> Result<Self> {
        let d = linear.dim();
        if b.nrows() != d || b.ncols() != d {
            return Err(Error::config("system.B", format!("must be {d}x{d}")));
        }
        if !(c0 >= 0.0 && c0.is_finite()) {
            return Err(Error::config("system.c0", "must be finite and nonnegative"));
        }
        if let DriftMap::Linear(k) = &drift {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::config("system.F.K", format!("must be {d}x{d}")));
            }
        }
        match &diffusion {
            DiffusionMap::Constant(m) if m.nrows() != d => {
                return Err(Error::config("system.G.matrix", format!("must have {d} rows")));
            }
            DiffusionMap::Modulated { base, direction, .. } if base.nrows() != d || direction.len() != d => {
                return Err(Error::config(
                    "system.G",
                    format!("base must have {d} rows and direction length {d}"),
                ));
            }
            _ => {}
        }
        let b_sqrt = sym_sqrt(&b, 0.5);
        let mut sys = GalerkinSystem {
            linear,
            b,
            b_sqrt,
            c0,
            drift,
            diffusion,
            bound_m: 0.0,
            wave,
        };
        sys.bound_m = sys.analytic_bound();
        Ok(sys)
    }

    pub fn with_b(mut self, b: DMatrix<f64>) -> Result<Self> {
        let d = self.dim();
        if b.nrows() != d || b.ncols() != d {
            return Err(Error::config("system.B", format!("must be {d}x{d}")));
        }
        self.b_sqrt = sym_sqrt(&b, 0.5);
        self.b = b;
        self.bound_m = self.analytic_bound();
        Ok(self)
    }

    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        if !(c0 >= 0.0 && c0.is_finite()) {
            return Err(Error::config("system.c0", "must be finite and nonnegative"));
        }
        self.c0 = c0;
        Ok(self)
    }

    pub fn with_bound(mut self, m: f64) -> Self {
        self.bound_m = m;
        self
    }

    /// Replaces `A` by its Yosida approximation, keeping `B`, `F`, `G`.
    pub fn yosida_system(&self, lambda: f64) -> GalerkinSystem {
        GalerkinSystem {
            linear: self.linear.yosida(lambda),
            ..self.clone()
        }
    }

    /// `A_lambda` as a dense matrix.
    pub fn yosida(&self, lambda: f64) -> DMatrix<f64> {
        self.linear.yosida(lambda).matrix()
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion.noise_dim(self.dim())
    }

    pub fn linear(&self) -> &LinearPart {
        &self.linear
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        self.linear.matrix()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn drift(&self) -> &DriftMap {
        &self.drift
    }

    pub fn diffusion(&self) -> &DiffusionMap {
        &self.diffusion
    }

    pub fn bound(&self) -> f64 {
        self.bound_m
    }

    pub fn wave(&self) -> Option<&WaveInfo> {
        self.wave.as_ref()
    }

    /// `|x|_{-1} = |B^{1/2} x|`.
    pub fn minus_one_norm(&self, x: &DVector<f64>) -> f64 {
        (&self.b_sqrt * x).norm()
    }

    /// `S(t) x = exp(-t A) x`.
    pub fn semigroup_apply(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.linear.propagator(t).apply(x)
    }

    /// `|(lambda I + A)^{-1}|`.
    pub fn resolvent_norm(&self, lambda: f64) -> f64 {
        spectral_norm(&self.linear.resolvent(lambda))
    }

    fn analytic_bound(&self) -> f64 {
        let d = self.dim();
        let b_inv_sqrt = sym_sqrt(&self.b, -0.5);
        let f_lip = match &self.drift {
            DriftMap::Zero => 0.0,
            DriftMap::Linear(k) => spectral_norm(&(k * &b_inv_sqrt)),
            DriftMap::Nemytskii(n) => {
                // |diag(f')| <= Lip(f) bounds the Jacobian at every state.
                let unit = Nemytskii::new(ScalarFn::Linear { slope: 1.0 }, n.frequencies().to_vec());
                let jac = unit.jacobian(&DVector::zeros(d));
                n.scalar().lipschitz() * spectral_norm(&(jac * &b_inv_sqrt))
            }
        };
        let (g_bound, g_lip) = match &self.diffusion {
            DiffusionMap::Identity => (1.0, 0.0),
            DiffusionMap::Constant(m) => (spectral_norm(m), 0.0),
            DiffusionMap::Modulated {
                base,
                amplitude,
                direction,
            } => {
                let nb = spectral_norm(base);
                (nb * (1.0 + amplitude.abs()), nb * amplitude.abs() * (&b_inv_sqrt * direction).norm())
            }
        };
        let f0 = self.drift.apply(&DVector::zeros(d)).norm();
        f_lip.max(g_bound).max(g_lip).max(f0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_b_is_inverse_shifted_modulus() {
        let a = DMatrix::from_element(1, 1, 1.0);
        assert!((default_b(&a)[(0, 0)] - 0.5).abs() < 1e-15);
        let z = DMatrix::zeros(2, 2);
        assert!((default_b(&z) - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn minus_one_norm_is_a_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 2.0]);
        let sys = GalerkinSystem::generic(a, DriftMap::Zero, DiffusionMap::Identity).unwrap();
        assert_eq!(sys.minus_one_norm(&DVector::zeros(2)), 0.0);
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let y = DVector::from_vec(vec![0.3, 0.7]);
        assert!(sys.minus_one_norm(&(&x + &y)) <= sys.minus_one_norm(&x) + sys.minus_one_norm(&y) + 1e-15);
        assert!((sys.minus_one_norm(&(&x * -3.0)) - 3.0 * sys.minus_one_norm(&x)).abs() < 1e-14);
    }

    #[test]
    fn yosida_examples() {
        let zero = GalerkinSystem::generic(DMatrix::zeros(2, 2), DriftMap::Zero, DiffusionMap::Identity).unwrap();
        assert_eq!(zero.yosida(5.0).amax(), 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 1.0]);
        let sys = GalerkinSystem::generic(a.clone(), DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let mut prev = f64::INFINITY;
        for &lambda in &[10.0, 100.0, 1000.0] {
            let gap = spectral_norm(&(sys.yosida(lambda) - &a));
            assert!(gap < prev);
            // A - A_lambda = A^2 (lambda + A)^{-1} ~ A^2 / lambda
            let ratio = gap * lambda / spectral_norm(&(&a * &a));
            assert!((ratio - 1.0).abs() < 0.2, "lambda={lambda} ratio={ratio}");
            prev = gap;
        }
        for &lambda in &[1.0, 10.0, 100.0] {
            assert!(sys.resolvent_norm(lambda) <= 1.0 / lambda + 1e-14);
        }
    }

    #[test]
    fn semigroup_contracts() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 2.0, -2.0, 0.1]);
        let sys = GalerkinSystem::generic(a, DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        for &t in &[0.0, 0.1, 1.0, 5.0] {
            assert!(sys.semigroup_apply(t, &x).norm() <= x.norm() + 1e-14);
            assert!(sys.yosida_system(3.0).semigroup_apply(t, &x).norm() <= x.norm() + 1e-14);
        }
    }
}
