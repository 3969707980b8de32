//! Nonlinear drift `F` and noise coefficient `G`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Scalar Lipschitz functions used by Nemytskii drifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    Zero,
    Sin { amplitude: f64 },
    Tanh { amplitude: f64 },
    Linear { slope: f64 },
}

impl ScalarFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Sin { amplitude } => amplitude * x.sin(),
            ScalarFn::Tanh { amplitude } => amplitude * x.tanh(),
            ScalarFn::Linear { slope } => slope * x,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Sin { amplitude } => amplitude * x.cos(),
            ScalarFn::Tanh { amplitude } => amplitude * (1.0 - x.tanh().powi(2)),
            ScalarFn::Linear { slope } => slope,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Sin { amplitude } | ScalarFn::Tanh { amplitude } => amplitude.abs(),
            ScalarFn::Linear { slope } => slope.abs(),
        }
    }
}

/// Superposition operator `u(xi) -> f(u(xi))` on the Dirichlet sine basis of
/// `(0, pi)`, acting on wave states in energy coordinates `(A^{1/2} u, v)`.
/// Evaluated by collocation on `4K` interior points: synthesis, pointwise
/// `f`, then the discrete sine projection.
#[derive(Debug, Clone)]
pub struct Nemytskii {
    f: ScalarFn,
    frequency: Vec<f64>,
    synthesis: DMatrix<f64>,
    analysis: DMatrix<f64>,
}

impl Nemytskii {
    pub fn new(f: ScalarFn, frequency: Vec<f64>) -> Self {
        let k = frequency.len();
        let n = 4 * k;
        let h = std::f64::consts::PI / (n + 1) as f64;
        let norm = (2.0 / std::f64::consts::PI).sqrt();
        let synthesis = DMatrix::from_fn(n, k, |j, m| norm * (((m + 1) * (j + 1)) as f64 * h).sin());
        let analysis = synthesis.transpose() * h;
        Nemytskii {
            f,
            frequency,
            synthesis,
            analysis,
        }
    }

    pub fn scalar(&self) -> ScalarFn {
        self.f
    }

    /// `mu_k^{1/2}` for each mode.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequency
    }

    pub fn modes(&self) -> usize {
        self.frequency.len()
    }

    /// Sine coefficients of `u` from the energy-coordinate displacement block.
    fn displacement(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.modes(), (0..self.modes()).map(|i| x[i] / self.frequency[i]))
    }

    /// `F_1(u)` in sine coefficients.
    pub fn apply_displacement(&self, u: &DVector<f64>) -> DVector<f64> {
        let grid = &self.synthesis * u;
        &self.analysis * grid.map(|v| self.f.eval(v))
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let k = self.modes();
        let f1 = self.apply_displacement(&self.displacement(x));
        let mut out = DVector::zeros(2 * k);
        out.rows_mut(k, k).copy_from(&f1);
        out
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let k = self.modes();
        let grid = &self.synthesis * self.displacement(x);
        let d = grid.map(|v| self.f.derivative(v));
        let mut inner = self.synthesis.clone();
        for (j, mut row) in inner.row_iter_mut().enumerate() {
            row *= d[j];
        }
        let block = &self.analysis * inner;
        let mut jac = DMatrix::zeros(2 * k, 2 * k);
        for c in 0..k {
            for r in 0..k {
                jac[(k + r, c)] = block[(r, c)] / self.frequency[c];
            }
        }
        jac
    }
}

#[derive(Debug, Clone)]
pub enum DriftMap {
    Zero,
    Linear(DMatrix<f64>),
    Nemytskii(Nemytskii),
}

impl DriftMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DriftMap::Zero => DVector::zeros(x.len()),
            DriftMap::Linear(k) => k * x,
            DriftMap::Nemytskii(n) => n.apply(x),
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            DriftMap::Zero => DMatrix::zeros(x.len(), x.len()),
            DriftMap::Linear(k) => k.clone(),
            DriftMap::Nemytskii(n) => n.jacobian(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DriftMap::Zero => true,
            DriftMap::Linear(k) => k.iter().all(|&v| v == 0.0),
            DriftMap::Nemytskii(n) => n.scalar() == ScalarFn::Zero,
        }
    }
}

/// `G(x)`, a `d x m` matrix mapping noise coordinates to state coordinates.
#[derive(Debug, Clone)]
pub enum DiffusionMap {
    Identity,
    Constant(DMatrix<f64>),
    /// `G(x) = base * (1 + amplitude * tanh(<direction, x>))`.
    Modulated {
        base: DMatrix<f64>,
        amplitude: f64,
        direction: DVector<f64>,
    },
}

impl DiffusionMap {
    pub fn noise_dim(&self, state_dim: usize) -> usize {
        match self {
            DiffusionMap::Identity => state_dim,
            DiffusionMap::Constant(m) | DiffusionMap::Modulated { base: m, .. } => m.ncols(),
        }
    }

    pub fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            DiffusionMap::Identity => DMatrix::identity(x.len(), x.len()),
            DiffusionMap::Constant(m) => m.clone(),
            DiffusionMap::Modulated {
                base,
                amplitude,
                direction,
            } => base * (1.0 + amplitude * direction.dot(x).tanh()),
        }
    }

    /// `G(x) z`.
    pub fn apply(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        match self {
            DiffusionMap::Identity => z.clone(),
            DiffusionMap::Constant(m) => m * z,
            DiffusionMap::Modulated {
                base,
                amplitude,
                direction,
            } => (base * z) * (1.0 + amplitude * direction.dot(x).tanh()),
        }
    }

    /// `G(x)^T y`.
    pub fn apply_transpose(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        match self {
            DiffusionMap::Identity => y.clone(),
            DiffusionMap::Constant(m) => m.tr_mul(y),
            DiffusionMap::Modulated {
                base,
                amplitude,
                direction,
            } => base.tr_mul(y) * (1.0 + amplitude * direction.dot(x).tanh()),
        }
    }

    /// `(D_x [G(x) z])^T y`.
    pub fn state_jacobian_transpose(&self, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        match self {
            DiffusionMap::Identity | DiffusionMap::Constant(_) => DVector::zeros(x.len()),
            DiffusionMap::Modulated {
                base,
                amplitude,
                direction,
            } => {
                let th = direction.dot(x).tanh();
                let scale = amplitude * (1.0 - th * th) * (base * z).dot(y);
                direction * scale
            }
        }
    }

    pub fn is_state_independent(&self) -> bool {
        !matches!(self, DiffusionMap::Modulated { amplitude, .. } if *amplitude != 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_nemytskii_is_exact_on_the_sine_basis() {
        let n = Nemytskii::new(ScalarFn::Linear { slope: 2.0 }, vec![1.0, 2.0, 3.0]);
        let u = DVector::from_vec(vec![0.5, -1.0, 0.25]);
        let f1 = n.apply_displacement(&u);
        assert!((f1 - &u * 2.0).amax() < 1e-13);
    }

    #[test]
    fn nemytskii_jacobian_matches_finite_differences() {
        let n = Nemytskii::new(ScalarFn::Sin { amplitude: 1.0 }, vec![1.0, 2.0, 3.0]);
        let x = DVector::from_vec(vec![0.3, -0.7, 0.2, 0.1, 0.0, -0.4]);
        let jac = n.jacobian(&x);
        let h = 1e-6;
        for c in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let col = (n.apply(&xp) - n.apply(&xm)) / (2.0 * h);
            assert!((col - jac.column(c)).amax() < 1e-8, "column {c}");
        }
    }

    #[test]
    fn modulated_diffusion_jacobian_transpose() {
        let g = DiffusionMap::Modulated {
            base: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]),
            amplitude: 0.3,
            direction: DVector::from_vec(vec![1.0, -1.0]),
        };
        let x = DVector::from_vec(vec![0.2, 0.9]);
        let z = DVector::from_vec(vec![1.0, 0.4]);
        let y = DVector::from_vec(vec![-0.5, 1.5]);
        let got = g.state_jacobian_transpose(&x, &z, &y);
        let h = 1e-6;
        for c in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let fd = (g.apply(&xp, &z) - g.apply(&xm, &z)).dot(&y) / (2.0 * h);
            assert!((fd - got[c]).abs() < 1e-8);
        }
        assert!((g.apply_transpose(&x, &y) - g.matrix(&x).transpose() * &y).amax() < 1e-14);
    }
}
