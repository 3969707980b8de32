//! Monte Carlo residual of the integro-PDE satisfied by `v_n`:
//! `v_t + <-A x + F(x), Dv> + int [e^{n(v(x + G z/n) - v(x))} - 1 - <Dv, G z>] nu(dz) = 0`.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::field::ValueField;
use crate::error::{Error, Result};
use crate::noise::{substream, NoiseModel};
use crate::simulate::mean_and_se;
use crate::system::GalerkinSystem;

/// Exponents are clipped here before exponentiation.
pub const EXPONENT_CLIP: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegroRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub residual: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegroResidual {
    pub rows: Vec<IntegroRow>,
    pub max_abs: f64,
    /// `max |residual| / standard_error` over the points.
    pub max_ratio: f64,
    pub clipped_draws: usize,
}

/// Draws from `nu` as `(weight, z)`: the finite part is sampled exactly and
/// `weight` carries its total mass.
fn draws(model: &NoiseModel, count: usize, seed: u64) -> (f64, Vec<DVector<f64>>) {
    let mut rng = substream(seed, 0);
    let d = model.dim();
    let mut out = Vec::with_capacity(count);
    let mass = match model.subordinator() {
        None => 1.0,
        Some(s) => s.mass_above_cutoff(),
    };
    for _ in 0..count {
        let t = model.subordinator().map_or(1.0, |s| s.sample_size(&mut rng));
        let z = DVector::from_iterator(
            d,
            model.sqrt_q().iter().map(|q| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                q * t.sqrt() * xi
            }),
        );
        out.push(z);
    }
    (mass, out)
}

/// Residual at each `(t, x)` with `draws` common random draws from `nu`.
///
/// For subordinated noise the jumps below the cutoff contribute their
/// second-order term `mean_below |Q^{1/2} G^T Dv|^2 / 2`.
pub fn integro_pde_residual(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    field: &dyn ValueField,
    n: u32,
    points: &[(f64, DVector<f64>)],
    draw_count: usize,
    seed: u64,
) -> Result<IntegroResidual> {
    if draw_count < 2 {
        return Err(Error::config("draws", "need at least two draws"));
    }
    if sys.noise_dim() != model.dim() {
        return Err(Error::Dimension(format!(
            "G expects noise of dimension {}, model has {}",
            sys.noise_dim(),
            model.dim()
        )));
    }
    let nf = n as f64;
    let (mass, zs) = draws(model, draw_count, seed);
    let mut rows = Vec::with_capacity(points.len());
    let mut clipped = 0;
    for (t, x) in points {
        if x.len() != sys.dim() {
            return Err(Error::Dimension(format!("point has length {}, expected {}", x.len(), sys.dim())));
        }
        let v = field.value(*t, x);
        let dv = field.gradient(*t, x);
        let mut drift = -sys.linear().apply(x);
        if !sys.drift().is_zero() {
            drift += sys.drift().apply(x);
        }
        let local = field.time_derivative(*t, x) + drift.dot(&dv);
        let integrand: Vec<f64> = zs
            .iter()
            .map(|z| {
                let gz = sys.diffusion().apply(x, z);
                let shifted = x + &gz / nf;
                let mut e = nf * (field.value(*t, &shifted) - v);
                if e > EXPONENT_CLIP {
                    e = EXPONENT_CLIP;
                    clipped += 1;
                }
                mass * (e.exp_m1() - dv.dot(&gz))
            })
            .collect();
        let (mean, se) = mean_and_se(&integrand);
        let small = match model.subordinator() {
            None => 0.0,
            Some(s) => {
                let q = sys.diffusion().apply_transpose(x, &dv);
                let w: f64 = q.iter().zip(model.sqrt_q()).map(|(a, b)| (a * b).powi(2)).sum();
                0.5 * s.mean_below_cutoff() * w
            }
        };
        rows.push(IntegroRow {
            t: *t,
            x: x.iter().copied().collect(),
            residual: local + mean + small,
            standard_error: se,
        });
    }
    let max_abs = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let max_ratio = rows
        .iter()
        .map(|r| {
            if r.residual == 0.0 {
                0.0
            } else {
                r.residual.abs() / r.standard_error
            }
        })
        .fold(0.0, f64::max);
    Ok(IntegroResidual {
        rows,
        max_abs,
        max_ratio,
        clipped_draws: clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::RhoSpec;
    use crate::system::{DiffusionMap, DriftMap};
    use crate::verify::field::{ConstantField, LinearField, SinePerturbed};
    use nalgebra::DMatrix;

    fn pts() -> Vec<(f64, DVector<f64>)> {
        [-1.0, 0.0, 0.7]
            .iter()
            .map(|&x| (0.25, DVector::from_element(1, x)))
            .collect()
    }

    #[test]
    fn linear_solution_and_negative_control() {
        let sys = GalerkinSystem::generic(DMatrix::zeros(1, 1), DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let model = NoiseModel::compound_poisson(vec![1.0]).unwrap();
        let p = DVector::from_element(1, 0.5);
        let field = LinearField {
            rate: model.h0(p.as_slice()).unwrap(),
            p,
            horizon: 1.0,
        };
        for &n in &[1, 5, 20] {
            let res = integro_pde_residual(&sys, &model, &field, n, &pts(), 20_000, 1).unwrap();
            assert!(res.max_ratio < 3.0, "n={n}: {res:?}");
        }
        let c = integro_pde_residual(&sys, &model, &ConstantField(0.7), 5, &pts(), 100, 0).unwrap();
        assert_eq!(c.max_abs, 0.0);
        let bad = SinePerturbed {
            base: field,
            amplitude: 0.1,
        };
        let res = integro_pde_residual(&sys, &model, &bad, 20, &pts(), 100_000, 1).unwrap();
        assert!(res.max_ratio > 10.0, "{res:?}");
    }

    #[test]
    fn point_mass_subordinator_behaves_like_compound_poisson() {
        let sys = GalerkinSystem::generic(DMatrix::zeros(1, 1), DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let model = NoiseModel::subordinated(vec![1.0], RhoSpec::PointMass { at: 1.0 }, 1e-3).unwrap();
        let p = DVector::from_element(1, 0.4);
        let field = LinearField {
            rate: model.h0(p.as_slice()).unwrap(),
            p,
            horizon: 1.0,
        };
        let res = integro_pde_residual(&sys, &model, &field, 3, &pts(), 20_000, 2).unwrap();
        assert!(res.max_ratio < 3.0, "{res:?}");
    }
}
