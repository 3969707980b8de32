//! Property tests for the structural invariants of the noise, system,
//! simulation and estimation layers.

use jumpld_core::control::ControlPath;
use jumpld_core::cost::TerminalCost;
use jumpld_core::laplace::log_mean_exp;
use jumpld_core::noise::radial::g_sigma;
use jumpld_core::noise::{inverse_g, NoiseModel, RhoSpec};
use jumpld_core::simulate::{simulate_mild, Scheme};
use jumpld_core::system::{build_wave_system, DiffusionMap, DriftMap, GalerkinSystem, ScalarFn};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..4.0, 1..4)
}

fn vector(d: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, d)
}

fn model_and_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    spectrum().prop_flat_map(|q| {
        let d = q.len();
        (Just(q), vector(d, 2.0), vector(d, 3.0))
    })
}

/// `A = M^T M + (S - S^T)`, monotone by construction.
fn monotone_matrix(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (vector(d * d, 1.0), vector(d * d, 1.0)).prop_map(move |(m, s)| {
        let m = DMatrix::from_vec(d, d, m);
        let s = DMatrix::from_vec(d, d, s);
        m.transpose() * &m + (&s - s.transpose())
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn subordinated(q: Vec<f64>) -> NoiseModel {
    NoiseModel::subordinated(q, RhoSpec::PointMass { at: 1.0 }, 1e-3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fenchel_young_inequality((q, p, z) in model_and_pair()) {
        for model in [NoiseModel::compound_poisson(q.clone()).unwrap(), subordinated(q.clone())] {
            let h = model.h0(&p).unwrap();
            let l = model.l0(&z).unwrap().to_f64();
            prop_assert!(h >= 0.0 && l >= 0.0);
            prop_assert!(h + l >= dot(&p, &z) - 1e-7 * (1.0 + h + l), "h={h} l={l}");
        }
    }

    #[test]
    fn legendre_growth_bound((q, _p, z) in model_and_pair(), eps in prop::sample::select(vec![1.0, 0.5, 0.1])) {
        let model = NoiseModel::compound_poisson(q).unwrap();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = eps * model.l0(&z).unwrap().to_f64() + model.epsilon_bound(eps).unwrap();
        prop_assert!(norm <= bound * (1.0 + 1e-9), "norm={norm} bound={bound}");
    }

    #[test]
    fn radial_cost_is_monotone_and_convex(a in 0.0f64..8.0, b in 0.0f64..8.0) {
        let model = NoiseModel::compound_poisson(vec![1.0]).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let mid = 0.5 * (lo + hi);
        let (l_lo, l_hi, l_mid) = (model.radial_l(lo).unwrap(), model.radial_l(hi).unwrap(), model.radial_l(mid).unwrap());
        prop_assert!(l_lo <= l_hi + 1e-12);
        prop_assert!(l_mid <= 0.5 * (l_lo + l_hi) + 1e-10);
        prop_assert!(model.l0_prime_radial(lo).unwrap() <= model.l0_prime_radial(hi).unwrap() + 1e-10);
    }

    #[test]
    fn inverse_g_inverts(s in 0.0f64..1e3) {
        let f = inverse_g(s);
        prop_assert!((g_sigma(f) - s).abs() <= 1e-12 * (1.0 + s));
    }

    #[test]
    fn semigroup_is_a_contraction(a in monotone_matrix(3), x in vector(3, 5.0), t in 0.0f64..3.0) {
        let sys = GalerkinSystem::generic(a, DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let x = DVector::from_vec(x);
        prop_assert!(sys.semigroup_apply(t, &x).norm() <= x.norm() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn resolvent_norm_is_at_most_inverse_lambda(a in monotone_matrix(3), lambda in 0.1f64..1e3) {
        let sys = GalerkinSystem::generic(a, DriftMap::Zero, DiffusionMap::Identity).unwrap();
        prop_assert!(sys.resolvent_norm(lambda) * lambda <= 1.0 + 1e-9);
    }

    #[test]
    fn wave_energy_norm_matches_mode_formula(u in vector(3, 2.0), v in vector(3, 2.0)) {
        let sys = build_wave_system(3, ScalarFn::Zero);
        let x = sys.wave_state(&u, &v);
        let direct: f64 = (0..3)
            .map(|k| {
                let mu = ((k + 1) * (k + 1)) as f64;
                mu.sqrt() * u[k] * u[k] + v[k] * v[k] / mu.sqrt()
            })
            .sum::<f64>()
            .sqrt();
        prop_assert!((sys.minus_one_norm(&x) - direct).abs() <= 1e-9 * (1.0 + direct));
    }

    #[test]
    fn log_mean_exp_is_shift_covariant(ys in prop::collection::vec(-3.0f64..3.0, 1..40), c in -5.0f64..5.0, n in 1u32..30) {
        let base = log_mean_exp(&ys, n);
        let moved: Vec<f64> = ys.iter().map(|y| y + c).collect();
        let shifted = log_mean_exp(&moved, n);
        prop_assert!((shifted.value - base.value - c).abs() <= 1e-9);
        prop_assert!(base.ess <= base.samples as f64 * (1.0 + 1e-12));
        prop_assert!(base.half_width >= 0.0);
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(base.value >= lo - 1e-12 && base.value <= hi + 1e-12);
    }

    #[test]
    fn control_cost_vanishes_only_at_zero(w in vector(2, 3.0), intervals in 1usize..12) {
        let model = NoiseModel::compound_poisson(vec![1.0, 0.5]).unwrap();
        let path = ControlPath::constant(1.0, intervals, DVector::from_vec(w.clone()));
        let cost = path.cost(&model).unwrap();
        prop_assert!(cost >= 0.0);
        prop_assert_eq!(cost == 0.0, w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shifted_payoff_adds_its_offset(p in vector(2, 2.0), by in -2.0f64..2.0, x in vector(2, 3.0)) {
        let base = TerminalCost::Linear { p };
        let shifted = TerminalCost::Shifted { base: Box::new(base.clone()), by };
        let x = DVector::from_vec(x);
        prop_assert!((shifted.value(&x) - base.value(&x) - by).abs() <= 1e-12);
        prop_assert_eq!(shifted.gradient(&x), base.gradient(&x));
    }

    #[test]
    fn simulation_is_deterministic_per_substream(seed in any::<u64>(), idx in 0u64..1000) {
        let sys = build_wave_system(2, ScalarFn::Sin { amplitude: 0.5 });
        let model = NoiseModel::compound_poisson(vec![1.0, 0.25]).unwrap();
        let x0 = sys.wave_state(&[1.0, 0.5], &[0.0, 0.0]);
        let scheme = Scheme::new(1.0, 32);
        let a = simulate_mild(&sys, &model, &x0, 5, scheme, seed, idx).unwrap();
        let b = simulate_mild(&sys, &model, &x0, 5, scheme, seed, idx).unwrap();
        prop_assert_eq!(a.times, b.times);
        prop_assert_eq!(a.states, b.states);
    }
}
