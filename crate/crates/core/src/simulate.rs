//! Pathwise integration of `dX = (-A X + F(X)) dt + G(X-) dL_n`.
//!
//! Between events the drift is advanced with the exponential Euler step
//! `X <- S(h)(X + h F(X))`. The grid is the uniform grid joined with the jump
//! times; at a jump time the stored state is the post-jump value.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{JumpPath, NoiseModel};
use crate::system::GalerkinSystem;

/// Uniform time grid `0 = t_0 < ... < t_steps = horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub horizon: f64,
    pub steps: usize,
}

impl Scheme {
    pub fn new(horizon: f64, steps: usize) -> Self {
        assert!(horizon > 0.0 && horizon.is_finite(), "horizon must be positive");
        assert!(steps >= 1, "need at least one step");
        Scheme { horizon, steps }
    }

    /// Grid with step at most `dt`.
    pub fn with_dt(horizon: f64, dt: f64) -> Self {
        assert!(dt > 0.0 && dt <= horizon * (1.0 + 1e-12), "need 0 < dt <= T");
        Scheme::new(horizon, ((horizon / dt) - 1e-9).ceil().max(1.0) as usize)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is never empty")
    }

    /// `sup_k |X(t_k)|`.
    pub fn sup_norm(&self) -> f64 {
        self.states.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Grid event passed to observers.
pub struct Event<'a> {
    pub time: f64,
    pub state: &'a DVector<f64>,
    /// Left limit at a jump time.
    pub pre_jump: Option<&'a DVector<f64>>,
}

fn check_dims(sys: &GalerkinSystem, model: &NoiseModel, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, system dimension is {}",
            x0.len(),
            sys.dim()
        )));
    }
    if sys.noise_dim() != model.dim() {
        return Err(Error::Dimension(format!(
            "G expects noise of dimension {}, model has {}",
            sys.noise_dim(),
            model.dim()
        )));
    }
    Ok(())
}

fn drift_step(sys: &GalerkinSystem, x: &DVector<f64>, h: f64, prop: Option<&crate::system::Propagator>) -> DVector<f64> {
    let mut y = x.clone();
    if !sys.drift().is_zero() {
        y += sys.drift().apply(x) * h;
    }
    match prop {
        Some(p) => p.apply(&y),
        None => sys.linear().propagator(h).apply(&y),
    }
}

/// Integrates along a given jump path, reporting every grid event to
/// `observe`. Returns the terminal state.
pub fn integrate_path<O>(
    sys: &GalerkinSystem,
    path: &JumpPath,
    x0: &DVector<f64>,
    scheme: Scheme,
    mut observe: O,
) -> Result<DVector<f64>>
where
    O: FnMut(Event<'_>),
{
    let h = scheme.dt();
    let uniform = sys.linear().propagator(h);
    let tiny = 1e-12 * scheme.horizon;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut j = 0;
    observe(Event {
        time: 0.0,
        state: &x,
        pre_jump: None,
    });
    let finite = |x: &DVector<f64>, time: f64| -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { time })
        }
    };
    for k in 1..=scheme.steps {
        let t_end = scheme.time(k);
        while j < path.jump_times.len() && path.jump_times[j] < t_end - tiny {
            let tau = path.jump_times[j];
            if tau > t {
                x = drift_step(sys, &x, tau - t, None);
            }
            let pre = x.clone();
            x += sys.diffusion().apply(&pre, &path.marks[j]);
            finite(&x, tau)?;
            observe(Event {
                time: tau,
                state: &x,
                pre_jump: Some(&pre),
            });
            t = tau;
            j += 1;
        }
        let start = scheme.time(k - 1);
        x = if t == start {
            drift_step(sys, &x, h, Some(&uniform))
        } else {
            drift_step(sys, &x, t_end - t, None)
        };
        t = t_end;
        if j < path.jump_times.len() && (path.jump_times[j] - t_end).abs() <= tiny {
            let pre = x.clone();
            x += sys.diffusion().apply(&pre, &path.marks[j]);
            j += 1;
            finite(&x, t_end)?;
            observe(Event {
                time: t_end,
                state: &x,
                pre_jump: Some(&pre),
            });
        } else {
            finite(&x, t_end)?;
            observe(Event {
                time: t_end,
                state: &x,
                pre_jump: None,
            });
        }
    }
    Ok(x)
}

/// Full trajectory along a given jump path.
pub fn simulate_path(
    sys: &GalerkinSystem,
    path: &JumpPath,
    x0: &DVector<f64>,
    scheme: Scheme,
) -> Result<Trajectory> {
    let mut times = Vec::with_capacity(scheme.steps + path.len() + 1);
    let mut states = Vec::with_capacity(scheme.steps + path.len() + 1);
    integrate_path(sys, path, x0, scheme, |e| {
        times.push(e.time);
        states.push(e.state.clone());
    })?;
    Ok(Trajectory { times, states })
}

/// Samples the jump path for `(seed, sample_index)` on the scheme's grid.
pub fn sample_path(model: &NoiseModel, n: u32, scheme: Scheme, seed: u64, sample_index: u64) -> JumpPath {
    model.sample_scaled_path_on_grid(n, scheme.horizon, scheme.steps, seed, sample_index)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_mild(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    x0: &DVector<f64>,
    n: u32,
    scheme: Scheme,
    seed: u64,
    sample_index: u64,
) -> Result<Trajectory> {
    check_dims(sys, model, x0)?;
    simulate_path(sys, &sample_path(model, n, scheme, seed, sample_index), x0, scheme)
}

/// As [`simulate_mild`] with `A` replaced by its Yosida approximation; the
/// jump path is identical for the same `(seed, sample_index)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_yosida(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    x0: &DVector<f64>,
    n: u32,
    scheme: Scheme,
    lambda: f64,
    seed: u64,
    sample_index: u64,
) -> Result<Trajectory> {
    simulate_mild(&sys.yosida_system(lambda), model, x0, n, scheme, seed, sample_index)
}

/// Terminal state only, for estimators that do not need the path.
pub fn terminal_state(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    x0: &DVector<f64>,
    n: u32,
    scheme: Scheme,
    seed: u64,
    sample_index: u64,
) -> Result<DVector<f64>> {
    check_dims(sys, model, x0)?;
    integrate_path(sys, &sample_path(model, n, scheme, seed, sample_index), x0, scheme, |_| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupGapRow {
    pub lambda: f64,
    /// Empirical `E sup_t |X^lambda(t) - X(t)|^2`.
    pub mean_sq_sup_gap: f64,
    pub standard_error: f64,
}

/// Mean-square sup-norm gap between Yosida-approximated and exact
/// trajectories driven by the same jump paths.
#[allow(clippy::too_many_arguments)]
pub fn pathwise_sup_gap(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    x0: &DVector<f64>,
    n: u32,
    scheme: Scheme,
    lambdas: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<SupGapRow>> {
    check_dims(sys, model, x0)?;
    let approx: Vec<GalerkinSystem> = lambdas.iter().map(|&l| sys.yosida_system(l)).collect();
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = sample_path(model, n, scheme, seed, i);
            let base = simulate_path(sys, &path, x0, scheme)?;
            approx
                .iter()
                .map(|s| {
                    let mut k = 0;
                    let mut worst = 0.0f64;
                    integrate_path(s, &path, x0, scheme, |e| {
                        worst = worst.max((e.state - &base.states[k]).norm_squared());
                        k += 1;
                    })?;
                    Ok(worst)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let xs: Vec<f64> = per_sample.iter().map(|r| r[j]).collect();
            let (mean, se) = mean_and_se(&xs);
            SupGapRow {
                lambda,
                mean_sq_sup_gap: mean,
                standard_error: se,
            }
        })
        .collect())
}

/// Deterministic `sup_k |(S_lambda(t_k) - S(t_k)) x0|^2` over the grid.
pub fn semigroup_sup_gap(sys: &GalerkinSystem, x0: &DVector<f64>, scheme: Scheme, lambda: f64) -> f64 {
    let approx = sys.yosida_system(lambda);
    (0..=scheme.steps)
        .map(|k| {
            let t = scheme.time(k);
            (approx.semigroup_apply(t, x0) - sys.semigroup_apply(t, x0)).norm_squared()
        })
        .fold(0.0, f64::max)
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{build_wave_system, DiffusionMap, DriftMap, ScalarFn};
    use nalgebra::DMatrix;

    fn scalar(a: f64, g: DiffusionMap) -> GalerkinSystem {
        GalerkinSystem::generic(DMatrix::from_element(1, 1, a), DriftMap::Zero, g).unwrap()
    }

    fn cp1() -> NoiseModel {
        NoiseModel::compound_poisson(vec![1.0]).unwrap()
    }

    #[test]
    fn noiseless_linear_flow() {
        let sys = scalar(1.0, DiffusionMap::Constant(DMatrix::zeros(1, 1)));
        let x0 = DVector::from_element(1, 1.0);
        let tr = simulate_mild(&sys, &cp1(), &x0, 5, Scheme::new(1.0, 64), 0, 0).unwrap();
        assert!((tr.terminal()[0] - (-1f64).exp()).abs() < 1e-14);
        assert!(tr.states.windows(2).all(|w| w[1].norm() <= w[0].norm()));
    }

    #[test]
    fn pure_jump_case_is_exact_bit_for_bit() {
        let sys = scalar(0.0, DiffusionMap::Identity);
        let model = cp1();
        let x0 = DVector::from_element(1, 0.25);
        let scheme = Scheme::new(1.0, 16);
        for i in 0..50 {
            let path = sample_path(&model, 7, scheme, 3, i);
            let tr = simulate_path(&sys, &path, &x0, scheme).unwrap();
            let mut oracle = x0.clone();
            for m in &path.marks {
                oracle += m;
            }
            assert_eq!(tr.terminal(), &oracle);
            assert_eq!(tr.times.len(), tr.states.len());
            assert_eq!(tr.times.len(), 17 + path.len());
        }
    }

    #[test]
    fn cadlag_bookkeeping() {
        let sys = scalar(1.0, DiffusionMap::Identity);
        let model = cp1();
        let scheme = Scheme::new(1.0, 8);
        let x0 = DVector::from_element(1, 1.0);
        let path = sample_path(&model, 4, scheme, 9, 1);
        assert!(!path.is_empty());
        let tr = simulate_path(&sys, &path, &x0, scheme).unwrap();
        for (j, &tau) in path.jump_times.iter().enumerate() {
            let k = tr.times.iter().position(|&t| t == tau).unwrap();
            let pre = sys.semigroup_apply(tau - tr.times[k - 1], &tr.states[k - 1]);
            assert!((&tr.states[k] - (pre + &path.marks[j])).amax() < 1e-14);
        }
    }

    #[test]
    fn mean_follows_linear_flow() {
        let sys = scalar(1.0, DiffusionMap::Identity);
        let model = cp1();
        let x0 = DVector::from_element(1, 1.0);
        let scheme = Scheme::new(1.0, 32);
        let xs: Vec<f64> = (0..100_000u64)
            .into_par_iter()
            .map(|i| terminal_state(&sys, &model, &x0, 10, scheme, 4, i).unwrap()[0])
            .collect();
        let (mean, se) = mean_and_se(&xs);
        // S(h) applied 32 times is exact for the mean since jumps have mean 0
        assert!((mean - (-1f64).exp()).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn yosida_limit_and_zero_operator() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.3, 2.0]);
        let sys = GalerkinSystem::generic(a, DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let model = NoiseModel::compound_poisson(vec![1.0, 0.5]).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        let scheme = Scheme::new(1.0, 64);
        for i in 0..10 {
            let exact = simulate_mild(&sys, &model, &x0, 3, scheme, 1, i).unwrap();
            let approx = simulate_yosida(&sys, &model, &x0, 3, scheme, 1e6, 1, i).unwrap();
            for (p, q) in exact.states.iter().zip(&approx.states) {
                assert!((p - q).amax() < 1e-4);
            }
        }
        let zero = scalar(0.0, DiffusionMap::Identity);
        let x0 = DVector::from_element(1, 0.5);
        for &lambda in &[0.1, 1.0, 100.0] {
            let a = simulate_mild(&zero, &cp1(), &x0, 2, scheme, 5, 0).unwrap();
            let b = simulate_yosida(&zero, &cp1(), &x0, 2, scheme, lambda, 5, 0).unwrap();
            assert_eq!(a, b);
        }
        let rows = pathwise_sup_gap(&zero, &cp1(), &x0, 2, scheme, &[1.0, 10.0], 20, 0).unwrap();
        assert!(rows.iter().all(|r| r.mean_sq_sup_gap == 0.0));
    }

    #[test]
    fn yosida_uses_reduced_eigenvalue() {
        let sys = scalar(2.0, DiffusionMap::Constant(DMatrix::zeros(1, 1)));
        let x0 = DVector::from_element(1, 1.0);
        let tr = simulate_yosida(&sys, &cp1(), &x0, 1, Scheme::new(1.0, 4), 1.0, 0, 0).unwrap();
        assert!((tr.terminal()[0] - (-2.0f64 / 3.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn noiseless_gap_matches_semigroup_gap() {
        let sys = build_wave_system(3, ScalarFn::Zero);
        let quiet = GalerkinSystem::from_parts(
            sys.linear().clone(),
            sys.b().clone(),
            1.0,
            DriftMap::Zero,
            DiffusionMap::Constant(DMatrix::zeros(6, 3)),
            sys.wave().cloned(),
        )
        .unwrap();
        let model = NoiseModel::compound_poisson(vec![1.0, 0.25, 0.1]).unwrap();
        let x0 = quiet.wave_state(&[1.0, 0.5, 0.2], &[0.0, 0.3, 0.0]);
        let scheme = Scheme::new(1.0, 50);
        let rows = pathwise_sup_gap(&quiet, &model, &x0, 4, scheme, &[10.0], 5, 2).unwrap();
        let det = semigroup_sup_gap(&quiet, &x0, scheme, 10.0);
        assert!(rows[0].mean_sq_sup_gap >= det * (1.0 - 1e-10));
        // Jump times add grid points, so the path sup can only exceed the grid sup.
        assert!(rows[0].mean_sq_sup_gap <= det * 1.05);
    }

    #[test]
    fn wave_energy_conserved_without_noise() {
        let sys = build_wave_system(4, ScalarFn::Zero);
        let quiet = GalerkinSystem::from_parts(
            sys.linear().clone(),
            sys.b().clone(),
            1.0,
            DriftMap::Zero,
            DiffusionMap::Constant(DMatrix::zeros(8, 4)),
            sys.wave().cloned(),
        )
        .unwrap();
        let model = NoiseModel::compound_poisson(vec![1.0; 4]).unwrap();
        let x0 = quiet.wave_state(&[1.0, -0.5, 0.25, 0.1], &[0.2, 0.0, -0.3, 0.05]);
        let tr = simulate_mild(&quiet, &model, &x0, 10, Scheme::new(3.0, 300), 0, 0).unwrap();
        for s in &tr.states {
            assert!((s.norm() - x0.norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let sys = scalar(1.0, DiffusionMap::Identity);
        let model = NoiseModel::compound_poisson(vec![1.0, 1.0]).unwrap();
        let x0 = DVector::from_element(1, 0.0);
        assert!(matches!(
            simulate_mild(&sys, &model, &x0, 1, Scheme::new(1.0, 4), 0, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn overflow_reports_first_bad_time() {
        let sys = GalerkinSystem::generic(
            DMatrix::zeros(1, 1),
            DriftMap::Linear(DMatrix::from_element(1, 1, 1e300)),
            DiffusionMap::Identity,
        )
        .unwrap();
        let x0 = DVector::from_element(1, 1e10);
        let err = simulate_mild(&sys, &cp1(), &x0, 1, Scheme::new(1.0, 4), 0, 0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { time } if time > 0.0));
    }
}
