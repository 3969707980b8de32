//! Checks tying `H0` to its Legendre transform `L0`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::noise::radial::conjugate_numeric;
use crate::noise::{radial, substream, Extended, NoiseModel, NoiseSpec, Variant};
use crate::report::{Check, Report};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualityGrid {
    /// Grid points for `|Q^{-1/2} z|` in `[0, s_max]`.
    pub points: usize,
    pub s_max: f64,
    /// Spacing of the dense `y` grid for the brute-force supremum.
    pub y_step: f64,
    /// Sampled `z` for the growth and epsilon-bound inequalities.
    pub samples: usize,
    pub eps: Vec<f64>,
    pub seed: u64,
}

impl Default for DualityGrid {
    fn default() -> Self {
        DualityGrid {
            points: 200,
            s_max: 10.0,
            y_step: 1e-4,
            samples: 10_000,
            eps: vec![1.0, 0.5, 0.1],
            seed: 0,
        }
    }
}

/// Tolerance on the duality checks.
pub fn duality_tolerance(model: &NoiseModel) -> f64 {
    match model.variant() {
        Variant::CompoundPoissonGaussian => 1e-5,
        Variant::SubordinatedWiener => 1e-3,
    }
}

fn l0_finite(model: &NoiseModel, z: &[f64]) -> Result<f64> {
    Ok(model.l0(z)?.to_f64())
}

/// Brute-force `sup_y (<z, y> - H0(y))` along the eigen-direction `k`,
/// where the supremum is attained for `z` parallel to `e_k`.
fn dense_conjugate(model: &NoiseModel, k: usize, zk: f64, step: f64) -> Result<f64> {
    let q = model.sqrt_q()[k];
    // maximizer y solves q h'(q y) = zk; bracket it
    let mut hi = 1.0;
    while model.radial_h_prime(q * hi)? * q < zk {
        hi *= 2.0;
    }
    let steps = (hi / step).ceil() as usize;
    let mut best = 0.0f64;
    for i in 0..=steps {
        let y = hi * i as f64 / steps as f64;
        best = best.max(zk * y - model.radial_h(q * y)?);
    }
    Ok(best)
}

pub fn legendre_duality_suite(model: &NoiseModel, grid: &DualityGrid) -> Result<Report> {
    let tol = duality_tolerance(model);
    let mut report = Report::new("legendre");
    let k = (0..model.dim())
        .max_by(|&a, &b| model.q_spectrum()[a].total_cmp(&model.q_spectrum()[b]))
        .expect("nonempty spectrum");
    let q = model.sqrt_q()[k];
    let s_grid: Vec<f64> = (0..grid.points)
        .map(|i| grid.s_max * i as f64 / (grid.points - 1).max(1) as f64)
        .collect();

    if model.variant() == Variant::CompoundPoissonGaussian {
        let mut worst = 0.0f64;
        for &s in &s_grid {
            let (numeric, _) = conjugate_numeric(|u| Ok(radial::gaussian_h(u)), s)?;
            worst = worst.max((numeric - radial::gaussian_l(s)).abs());
        }
        report.push(Check::at_most("conjugate_closed_form", worst, 1e-5));
    }

    let mut worst = 0.0f64;
    // the brute-force grid is slow for quadrature-backed h; thin it there
    let stride = if model.variant() == Variant::CompoundPoissonGaussian { 1 } else { 20 };
    for &s in s_grid.iter().step_by(stride) {
        let mut z = vec![0.0; model.dim()];
        z[k] = q * s;
        let brute = dense_conjugate(model, k, z[k], grid.y_step)?;
        worst = worst.max((brute - l0_finite(model, &z)?).abs());
    }
    report.push(Check::at_most("dense_grid_duality", worst, tol));

    let zero = vec![0.0; model.dim()];
    report.push(Check::at_most("l0_at_zero", l0_finite(model, &zero)?, 0.0));

    let mut spec: NoiseSpec = model.spec().clone();
    spec.q_spectrum.push(0.0);
    let padded = NoiseModel::new(spec)?;
    let mut z = vec![0.0; padded.dim()];
    z[padded.dim() - 1] = 1.0;
    let kernel_ok = matches!(padded.l0(&z)?, Extended::PlusInfinity) as u8 as f64;
    report.push(Check::at_least("kernel_sentinel", kernel_ok, 1.0));

    // sampled z in the range of Q^{1/2}, radii spanning five decades
    let mut rng = substream(grid.seed, 0);
    let mut zs = Vec::with_capacity(grid.samples);
    for _ in 0..grid.samples {
        let r = 10f64.powf(rng.random_range(-3.0..2.0));
        let w: Vec<f64> = (0..model.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z: Vec<f64> = w
            .iter()
            .zip(model.sqrt_q())
            .map(|(wi, qi)| r * qi * wi / norm)
            .collect();
        if z.iter().any(|v| *v != 0.0) {
            zs.push(z);
        }
    }
    let mut l_vals = Vec::with_capacity(zs.len());
    for z in &zs {
        l_vals.push(l0_finite(model, z)?);
    }
    let mut growth_violations = 0usize;
    for (z, l) in zs.iter().zip(&l_vals) {
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit: Vec<f64> = z.iter().map(|v| v / norm).collect();
        let rhs = norm - model.h0(&unit)?;
        if *l < rhs - 1e-12 * (1.0 + rhs.abs()) {
            growth_violations += 1;
        }
    }
    report.push(Check::at_most("growth", growth_violations as f64, 0.0));
    for &eps in &grid.eps {
        let bound = model.epsilon_bound(eps)?;
        let violations = zs
            .iter()
            .zip(&l_vals)
            .filter(|(z, l)| {
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rhs = eps * *l + bound;
                norm > rhs + 1e-12 * (1.0 + rhs)
            })
            .count();
        report.push(Check::at_most(format!("epsilon_bound_{eps}"), violations as f64, 0.0));
    }
    Ok(report)
}
