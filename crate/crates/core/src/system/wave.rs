//! Galerkin wave equation `u_tt = u_xx + f(u) + noise` on `(0, pi)` with
//! Dirichlet boundary conditions, written as a first-order system in energy
//! coordinates `(A^{1/2} u, v)` with `A = -d^2/dx^2`.

use nalgebra::{DMatrix, DVector};

use super::{DiffusionMap, DriftMap, GalerkinSystem, LinearPart, Nemytskii, ScalarFn, WaveInfo};

/// Builds the `K`-mode wave system. The generator is skew-adjoint in the
/// energy inner product, `B = blockdiag(A^{-1/2}, A^{-1/2})`, `c0 = 1`, and
/// the noise forces the velocity block only.
pub fn build_wave_system(modes: usize, f: ScalarFn) -> GalerkinSystem {
    assert!(modes >= 1, "wave system needs at least one mode");
    let eigenvalues: Vec<f64> = (1..=modes).map(|k| (k * k) as f64).collect();
    let frequency: Vec<f64> = eigenvalues.iter().map(|m| m.sqrt()).collect();
    let linear = LinearPart::Rotations {
        damping: vec![0.0; modes],
        frequency: frequency.clone(),
    };
    let b = DMatrix::from_diagonal(&DVector::from_iterator(
        2 * modes,
        eigenvalues.iter().chain(&eigenvalues).map(|m| m.powf(-0.5)),
    ));
    let drift = match f {
        ScalarFn::Zero => DriftMap::Zero,
        f => DriftMap::Nemytskii(Nemytskii::new(f, frequency)),
    };
    let mut g = DMatrix::zeros(2 * modes, modes);
    for k in 0..modes {
        g[(modes + k, k)] = 1.0;
    }
    GalerkinSystem::from_parts(
        linear,
        b,
        1.0,
        drift,
        DiffusionMap::Constant(g),
        Some(WaveInfo { eigenvalues }),
    )
    .expect("wave construction is dimensionally consistent")
}

impl GalerkinSystem {
    /// Energy coordinates from sine coefficients of displacement and velocity.
    pub fn wave_state(&self, u: &[f64], v: &[f64]) -> DVector<f64> {
        let info = self.wave().expect("not a wave system");
        let k = info.eigenvalues.len();
        assert!(u.len() == k && v.len() == k);
        DVector::from_iterator(
            2 * k,
            u.iter()
                .zip(&info.eigenvalues)
                .map(|(x, m)| x * m.sqrt())
                .chain(v.iter().copied()),
        )
    }

    /// `(|A^{1/4} u|^2 + |A^{-1/4} v|^2)^{1/2}` from sine coefficients.
    pub fn wave_minus_one_norm(&self, u: &[f64], v: &[f64]) -> f64 {
        let info = self.wave().expect("not a wave system");
        let s: f64 = u
            .iter()
            .zip(v)
            .zip(&info.eigenvalues)
            .map(|((a, b), m)| m.sqrt() * a * a + b * b / m.sqrt())
            .sum();
        s.sqrt()
    }

    /// `|A^{-1/4}(F_1(u) - F_1(w))| / |A^{1/2}(u - w)|` for sine coefficient
    /// vectors `u`, `w`; `None` for systems without a Nemytskii drift.
    pub fn drift_smoothing_ratio(&self, u: &DVector<f64>, w: &DVector<f64>) -> Option<f64> {
        let info = self.wave()?;
        let DriftMap::Nemytskii(nem) = self.drift() else {
            return Some(0.0);
        };
        let diff = nem.apply_displacement(u) - nem.apply_displacement(w);
        let num: f64 = diff
            .iter()
            .zip(&info.eigenvalues)
            .map(|(d, m)| d * d / m.sqrt())
            .sum::<f64>()
            .sqrt();
        let den: f64 = (u - w)
            .iter()
            .zip(&info.eigenvalues)
            .map(|(d, m)| d * d * m)
            .sum::<f64>()
            .sqrt();
        Some(num / den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_mode_generator_is_a_quarter_turn() {
        let sys = build_wave_system(1, ScalarFn::Zero);
        let a = sys.a_matrix();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
    }

    #[test]
    fn three_modes_have_square_eigenvalues() {
        let sys = build_wave_system(3, ScalarFn::Zero);
        assert_eq!(sys.wave().unwrap().eigenvalues, vec![1.0, 4.0, 9.0]);
    }

    #[test]
    fn minus_one_norm_examples() {
        let sys = build_wave_system(1, ScalarFn::Zero);
        let x = sys.wave_state(&[1.0], &[0.0]);
        assert!((sys.minus_one_norm(&x) - 1.0).abs() < 1e-15);
        let sys = build_wave_system(2, ScalarFn::Zero);
        let x = sys.wave_state(&[0.0, 0.0], &[0.0, 1.0]);
        // oracle: eigendecomposition of B
        let eig = SymmetricEigen::new(sys.b().clone());
        let half = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.sqrt()))
            * eig.eigenvectors.transpose();
        let oracle = (half * &x).norm();
        assert!((sys.minus_one_norm(&x) - 4f64.powf(-0.25)).abs() < 1e-15);
        assert!((sys.minus_one_norm(&x) - oracle).abs() < 1e-14);
        let u = [0.3, -0.2];
        let v = [1.1, 0.4];
        let x = sys.wave_state(&u, &v);
        assert!((sys.minus_one_norm(&x) - sys.wave_minus_one_norm(&u, &v)).abs() < 1e-14);
    }

    #[test]
    fn energy_is_preserved_by_the_free_flow() {
        let sys = build_wave_system(5, ScalarFn::Zero);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = DVector::from_fn(10, |_, _| rng.random::<f64>() - 0.5);
            let t = 10.0 * rng.random::<f64>();
            let y = sys.semigroup_apply(t, &x);
            assert!((y.norm() - x.norm()).abs() < 1e-12);
            // explicit per-mode rotation oracle
            for k in 0..5 {
                let w = (k + 1) as f64;
                let (c, s) = ((w * t).cos(), (w * t).sin());
                assert!((y[k] - (c * x[k] + s * x[5 + k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn drift_smoothing_ratio_is_bounded_for_sine_nonlinearity() {
        let sys = build_wave_system(4, ScalarFn::Sin { amplitude: 1.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let u = DVector::from_fn(4, |_, _| 2.0 * rng.random::<f64>() - 1.0);
            let w = DVector::from_fn(4, |_, _| 2.0 * rng.random::<f64>() - 1.0);
            worst = worst.max(sys.drift_smoothing_ratio(&u, &w).unwrap());
        }
        assert!(worst.is_finite() && worst > 0.0);
        assert!(worst <= 1.0 + 1e-12);
    }
}
