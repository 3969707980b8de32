//! Classical residual of `v_t + <-A x + F(x), Dv> + H0(G(x)^T Dv) = 0` on a
//! tabulated value function.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::ValueField;
use crate::control::{maximize_value, SolverOptions};
use crate::cost::TerminalCost;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::system::GalerkinSystem;

/// Uniform axis `lo, lo + step, ..., hi` with `points` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        assert!(points >= 2 && hi > lo, "axis needs two distinct points");
        Axis { lo, hi, points }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn at(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + self.step() * i as f64
        }
    }
}

/// `v` on a tensor grid in `(t, x_1, ..., x_d)`, `d <= 2`, stored with the
/// last space axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub time: Axis,
    pub space: Vec<Axis>,
    pub values: Vec<f64>,
}

impl ValueTable {
    fn check_dims(space: &[Axis]) -> Result<()> {
        if space.is_empty() || space.len() > 2 {
            return Err(Error::Dimension(format!(
                "value tables support 1 or 2 space dimensions, got {}",
                space.len()
            )));
        }
        Ok(())
    }

    fn space_points(&self) -> usize {
        self.space.iter().map(|a| a.points).product()
    }

    fn space_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.space).fold(0, |acc, (&i, a)| acc * a.points + i)
    }

    fn space_multi(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.space.len()];
        for (k, a) in self.space.iter().enumerate().rev() {
            out[k] = flat % a.points;
            flat /= a.points;
        }
        out
    }

    pub fn point(&self, idx: &[usize]) -> DVector<f64> {
        DVector::from_iterator(idx.len(), idx.iter().zip(&self.space).map(|(&i, a)| a.at(i)))
    }

    pub fn get(&self, ti: usize, idx: &[usize]) -> f64 {
        self.values[ti * self.space_points() + self.space_index(idx)]
    }

    fn build<F>(time: Axis, space: Vec<Axis>, f: F) -> Result<Self>
    where
        F: Fn(f64, &DVector<f64>) -> Result<f64> + Sync,
    {
        Self::check_dims(&space)?;
        let mut table = ValueTable {
            time,
            space,
            values: Vec::new(),
        };
        let per = table.space_points();
        let values: Vec<f64> = (0..time.points * per)
            .into_par_iter()
            .map(|k| {
                let t = time.at(k / per);
                let x = table.point(&table.space_multi(k % per));
                f(t, &x)
            })
            .collect::<Result<_>>()?;
        table.values = values;
        Ok(table)
    }

    /// Exact tabulation of a closed-form field.
    pub fn from_field(field: &dyn ValueField, time: Axis, space: Vec<Axis>) -> Result<Self> {
        Self::build(time, space, |t, x| Ok(field.value(t, x)))
    }

    /// `v(t, x)` by solving the control problem with horizon `T - t` at
    /// every node; the last time slice is `g` itself.
    #[allow(clippy::too_many_arguments)]
    pub fn from_control(
        sys: &GalerkinSystem,
        model: &NoiseModel,
        g: &TerminalCost,
        horizon: f64,
        time: Axis,
        space: Vec<Axis>,
        opts: &SolverOptions,
        seed: u64,
    ) -> Result<Self> {
        if (time.hi - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::config("table.time.hi", "must equal the horizon"));
        }
        Self::build(time, space, |t, x| {
            let rest = horizon - t;
            if rest <= 1e-12 * horizon {
                Ok(g.value(x))
            } else {
                Ok(maximize_value(sys, model, g, x, rest, opts, seed)?.value)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbResidual {
    pub max_abs: f64,
    /// Discretization error estimate: `max |R_h - R_2h| / 3`, floored.
    pub sigma: f64,
    pub evaluated: usize,
    pub excluded: usize,
    pub points: Vec<ResidualPoint>,
}

impl HjbResidual {
    /// `max_abs / sigma`.
    pub fn ratio(&self) -> f64 {
        self.max_abs / self.sigma
    }
}

/// Lower bound on the reported discretization error.
pub const SIGMA_FLOOR: f64 = 1e-9;
/// Kink exclusion: second differences above this multiple of the median.
pub const KINK_FACTOR: f64 = 10.0;
const KINK_FLOOR: f64 = 1e-10;

/// Residual at grid node `(ti, idx)` with central differences of half-width
/// `stride` nodes.
fn residual_at(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    table: &ValueTable,
    ti: usize,
    idx: &[usize],
    stride: usize,
) -> Result<f64> {
    let ht = table.time.step() * stride as f64;
    let vt = (table.get(ti + stride, idx) - table.get(ti - stride, idx)) / (2.0 * ht);
    let x = table.point(idx);
    let mut dv = DVector::zeros(idx.len());
    for k in 0..idx.len() {
        let (mut up, mut dn) = (idx.to_vec(), idx.to_vec());
        up[k] += stride;
        dn[k] -= stride;
        let h = table.space[k].step() * stride as f64;
        dv[k] = (table.get(ti, &up) - table.get(ti, &dn)) / (2.0 * h);
    }
    let mut drift = -sys.linear().apply(&x);
    if !sys.drift().is_zero() {
        drift += sys.drift().apply(&x);
    }
    let q = sys.diffusion().apply_transpose(&x, &dv);
    Ok(vt + drift.dot(&dv) + model.h0(q.as_slice())?)
}

fn second_difference(table: &ValueTable, ti: usize, idx: &[usize]) -> f64 {
    let c = table.get(ti, idx);
    let mut worst = (table.get(ti + 1, idx) - 2.0 * c + table.get(ti - 1, idx)).abs();
    for k in 0..idx.len() {
        let (mut up, mut dn) = (idx.to_vec(), idx.to_vec());
        up[k] += 1;
        dn[k] -= 1;
        worst = worst.max((table.get(ti, &up) - 2.0 * c + table.get(ti, &dn)).abs());
    }
    worst
}

/// Max residual over nodes at least two cells from the boundary, excluding
/// suspected kinks.
pub fn hjb_residual(sys: &GalerkinSystem, model: &NoiseModel, table: &ValueTable) -> Result<HjbResidual> {
    if table.space.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "table has {} space axes, system dimension is {}",
            table.space.len(),
            sys.dim()
        )));
    }
    if table.time.points < 5 || table.space.iter().any(|a| a.points < 5) {
        return Err(Error::config("table", "need at least 5 points per axis"));
    }
    let mut nodes = Vec::new();
    let per = table.space_points();
    for ti in 2..table.time.points - 2 {
        for flat in 0..per {
            let idx = table.space_multi(flat);
            if idx.iter().zip(&table.space).all(|(&i, a)| i >= 2 && i + 2 < a.points) {
                nodes.push((ti, idx));
            }
        }
    }
    let curvature: Vec<f64> = nodes.iter().map(|(ti, idx)| second_difference(table, *ti, idx)).collect();
    let mut sorted = curvature.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    let threshold = (KINK_FACTOR * median).max(KINK_FLOOR);

    let mut points = Vec::with_capacity(nodes.len());
    let (mut max_abs, mut max_gap, mut excluded) = (0.0f64, 0.0f64, 0);
    for ((ti, idx), c) in nodes.iter().zip(&curvature) {
        if *c > threshold {
            excluded += 1;
            continue;
        }
        let r1 = residual_at(sys, model, table, *ti, idx, 1)?;
        let r2 = residual_at(sys, model, table, *ti, idx, 2)?;
        max_abs = max_abs.max(r1.abs());
        max_gap = max_gap.max((r1 - r2).abs() / 3.0);
        points.push(ResidualPoint {
            t: table.time.at(*ti),
            x: table.point(idx).iter().copied().collect(),
            residual: r1,
        });
    }
    Ok(HjbResidual {
        max_abs,
        sigma: max_gap.max(SIGMA_FLOOR),
        evaluated: points.len(),
        excluded,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{DiffusionMap, DriftMap};
    use crate::verify::field::{ConstantField, LinearField, SinePerturbed};
    use nalgebra::DMatrix;

    fn flat1() -> (GalerkinSystem, NoiseModel) {
        (
            GalerkinSystem::generic(DMatrix::zeros(1, 1), DriftMap::Zero, DiffusionMap::Identity).unwrap(),
            NoiseModel::compound_poisson(vec![1.0]).unwrap(),
        )
    }

    #[test]
    fn exact_tabulation_has_tiny_residual() {
        let (sys, model) = flat1();
        let p = DVector::from_element(1, 0.5);
        let field = LinearField {
            rate: model.h0(p.as_slice()).unwrap(),
            p,
            horizon: 1.0,
        };
        let table = ValueTable::from_field(&field, Axis::new(0.0, 1.0, 17), vec![Axis::new(-1.0, 1.0, 17)]).unwrap();
        let res = hjb_residual(&sys, &model, &table).unwrap();
        assert!(res.max_abs < 1e-6, "{}", res.max_abs);
        assert!(res.ratio() < 3.0);
        assert_eq!(res.excluded, 0);
        let c = ValueTable::from_field(&ConstantField(0.3), Axis::new(0.0, 1.0, 9), vec![Axis::new(-1.0, 1.0, 9)]).unwrap();
        assert_eq!(hjb_residual(&sys, &model, &c).unwrap().max_abs, 0.0);
        let bad = SinePerturbed {
            base: field,
            amplitude: 0.1,
        };
        let t = ValueTable::from_field(&bad, Axis::new(0.0, 1.0, 17), vec![Axis::new(-1.0, 1.0, 17)]).unwrap();
        let res = hjb_residual(&sys, &model, &t).unwrap();
        assert!(res.ratio() > 10.0, "{res:?}");
    }

    #[test]
    fn two_dimensional_exact_case() {
        let sys = GalerkinSystem::generic(DMatrix::zeros(2, 2), DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let model = NoiseModel::compound_poisson(vec![1.0, 0.5]).unwrap();
        let p = DVector::from_vec(vec![0.3, -0.4]);
        let field = LinearField {
            rate: model.h0(p.as_slice()).unwrap(),
            p,
            horizon: 2.0,
        };
        let table = ValueTable::from_field(
            &field,
            Axis::new(0.0, 2.0, 9),
            vec![Axis::new(-1.0, 1.0, 7), Axis::new(0.0, 1.0, 6)],
        )
        .unwrap();
        assert!(hjb_residual(&sys, &model, &table).unwrap().max_abs < 1e-6);
    }

    #[test]
    fn control_tabulation_of_a_decaying_system() {
        let sys = GalerkinSystem::generic(DMatrix::from_element(1, 1, 1.0), DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let model = NoiseModel::compound_poisson(vec![1.0]).unwrap();
        let g = TerminalCost::Tanh {
            p: vec![1.0],
            scale: 0.5,
        };
        let opts = SolverOptions {
            intervals: 16,
            substeps: 8,
            restarts: 1,
            ..Default::default()
        };
        let table = ValueTable::from_control(&sys, &model, &g, 1.0, Axis::new(0.0, 1.0, 12), vec![Axis::new(-1.0, 1.0, 12)], &opts, 0).unwrap();
        let res = hjb_residual(&sys, &model, &table).unwrap();
        assert!(res.max_abs < 0.05, "{res:?}");
    }
}
