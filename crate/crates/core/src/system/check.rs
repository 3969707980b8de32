//! Numerical certificates for the structural hypotheses on `(A, B, c0, F, G)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{min_sym_eigenvalue, spectral_norm, DriftMap, GalerkinSystem};
use crate::noise::substream;
use crate::report::{Check, Report};

const EIG_TOL: f64 = 1e-10;

/// Certificates with the default budget of `10^4` sampled pairs.
pub fn check_structural(sys: &GalerkinSystem) -> Report {
    check_structural_with(sys, 10_000, 0)
}

fn random_state<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    let scale = 10f64.powf(4.0 * rng.random::<f64>() - 2.0);
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn check_structural_with(sys: &GalerkinSystem, pairs: usize, seed: u64) -> Report {
    let mut report = Report::new("structural");
    let d = sys.dim();
    let a = sys.a_matrix();
    let b = sys.b();

    report.push(Check::at_least("monotone_A", min_sym_eigenvalue(&a), -EIG_TOL));
    let asym = (b - b.transpose()).amax();
    report.push(Check::at_least("B_positive", min_sym_eigenvalue(b), 0.0).with_ci(asym));
    let bc = a.transpose() * b + b * sys.c0();
    report.push(Check::at_least("b_condition", min_sym_eigenvalue(&bc), -EIG_TOL));

    if sys.wave().is_some() {
        report.push(Check::at_most("skew_adjoint", (&a + a.transpose()).amax(), 1e-12));
    }

    let m = sys.bound();
    let slack = 1.0 + 1e-9;
    let f0 = sys.drift().apply(&DVector::zeros(d)).norm();
    report.push(Check::at_most("drift_at_origin", f0, m * slack));

    let mut rng = substream(seed, 0);
    let (mut f_ratio, mut g_ratio, mut g_norm) = (0.0f64, 0.0f64, 0.0f64);
    let mut smoothing = 0.0f64;
    for _ in 0..pairs {
        let x = random_state(&mut rng, d);
        let y = random_state(&mut rng, d);
        let dist = sys.minus_one_norm(&(&x - &y));
        if dist > 0.0 {
            f_ratio = f_ratio.max((sys.drift().apply(&x) - sys.drift().apply(&y)).norm() / dist);
            let gx = sys.diffusion().matrix(&x);
            let gy = sys.diffusion().matrix(&y);
            if !sys.diffusion().is_state_independent() {
                g_ratio = g_ratio.max(spectral_norm(&(&gx - &gy)) / dist);
            }
            g_norm = g_norm.max(if sys.diffusion().is_state_independent() {
                spectral_norm(&gx)
            } else {
                spectral_norm(&gx).max(spectral_norm(&gy))
            });
        }
        if let (Some(info), DriftMap::Nemytskii(_)) = (sys.wave(), sys.drift()) {
            let k = info.eigenvalues.len();
            let u = DVector::from_iterator(k, x.iter().take(k).copied());
            let w = DVector::from_iterator(k, y.iter().take(k).copied());
            if u != w {
                smoothing = smoothing.max(sys.drift_smoothing_ratio(&u, &w).unwrap_or(0.0));
            }
        }
    }
    report.push(Check::at_most("drift_lipschitz", f_ratio, m * slack));
    report.push(Check::at_most("diffusion_lipschitz", g_ratio, m * slack));
    report.push(Check::at_most("diffusion_bound", g_norm, m * slack));
    if let (Some(info), DriftMap::Nemytskii(n)) = (sys.wave(), sys.drift()) {
        let mu1 = info.eigenvalues[0];
        let bound = n.scalar().lipschitz() * mu1.powf(-0.75);
        report.push(Check::at_most("drift_smoothing_ratio", smoothing, bound * slack));
    }
    report
}
