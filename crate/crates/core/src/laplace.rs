//! Monte Carlo estimation of `v_n = (1/n) log E exp(n g(X_n(T)))` and the
//! moment and continuity estimates for `X_n`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::TerminalCost;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::numerics::{tree_logsumexp, Z95};
use crate::report::{Check, Report};
use crate::simulate::{integrate_path, mean_and_se, sample_path, terminal_state, Scheme};
use crate::system::GalerkinSystem;

/// Below this effective sample size the estimate is flagged degenerate.
pub const DEGENERATE_ESS: f64 = 10.0;
/// Warn when `ess < ESS_WARN_FRACTION * samples`.
pub const ESS_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub n: u32,
    pub samples: u64,
    pub ess: f64,
    /// 95% half-width on the value scale.
    pub half_width: f64,
    pub degenerate: bool,
    pub low_ess_warning: bool,
    /// Set when `g` is the unbounded linear oracle.
    pub unbounded_cost: bool,
    pub threads: usize,
}

impl ValueEstimate {
    pub fn contains(&self, target: f64, widths: f64) -> bool {
        (self.value - target).abs() <= widths * self.half_width
    }
}

/// `(1/n) log mean_k exp(n y_k)` with ESS and a delta-method interval.
///
/// The reduction runs over a fixed pairwise tree in sample order, so the
/// result does not depend on how the samples were produced.
pub fn log_mean_exp(ys: &[f64], n: u32) -> ValueEstimate {
    assert!(!ys.is_empty(), "need at least one sample");
    let nf = n as f64;
    let top = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = ys.iter().map(|y| nf * (y - top)).collect();
    let acc = tree_logsumexp(&shifted);
    let m = ys.len() as f64;
    // acc.max == 0 unless `top` is infinite
    let log_mean = acc.max + acc.sum.ln() - m.ln();
    let value = top + log_mean / nf;
    let ess = acc.sum * acc.sum / acc.sum_sq;
    let mean_w = acc.sum / m;
    let var_w = (acc.sum_sq / m - mean_w * mean_w).max(0.0) * m / (m - 1.0).max(1.0);
    let half_width = Z95 * (var_w / m).sqrt() / mean_w / nf;
    ValueEstimate {
        value,
        n,
        samples: ys.len() as u64,
        ess,
        half_width,
        degenerate: ess < DEGENERATE_ESS,
        low_ess_warning: ess < ESS_WARN_FRACTION * m,
        unbounded_cost: false,
        threads: rayon::current_num_threads(),
    }
}

fn check_initial(sys: &GalerkinSystem, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, system dimension is {}",
            x0.len(),
            sys.dim()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn laplace_functional(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    g: &TerminalCost,
    x0: &DVector<f64>,
    n: u32,
    scheme: Scheme,
    samples: u64,
    seed: u64,
) -> Result<ValueEstimate> {
    check_initial(sys, x0)?;
    g.validate(sys.dim())?;
    if samples == 0 {
        return Err(Error::config("samples", "must be positive"));
    }
    let ys: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| terminal_state(sys, model, x0, n, scheme, seed, i).map(|x| g.value(&x)))
        .collect::<Result<_>>()?;
    let mut est = log_mean_exp(&ys, n);
    est.unbounded_cost = !g.is_bounded();
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: u32,
    pub estimate: ValueEstimate,
}

/// `(1/n) log E sup_s exp(n c1 |X_n(s)|)` for each `n`.
#[allow(clippy::too_many_arguments)]
pub fn exp_moment_curve(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    x0: &DVector<f64>,
    scheme: Scheme,
    ns: &[u32],
    c1: f64,
    samples: u64,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    check_initial(sys, x0)?;
    if !(c1 > 0.0) {
        return Err(Error::config("c1", "must be positive"));
    }
    ns.iter()
        .map(|&n| {
            let ys: Vec<f64> = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let path = sample_path(model, n, scheme, seed, i);
                    let mut sup = 0.0f64;
                    integrate_path(sys, &path, x0, scheme, |e| sup = sup.max(e.state.norm()))?;
                    Ok(c1 * sup)
                })
                .collect::<Result<_>>()?;
            Ok(CurvePoint {
                n,
                estimate: log_mean_exp(&ys, n),
            })
        })
        .collect()
}

/// Spread `max - min` of a curve's values.
pub fn curve_spread(curve: &[CurvePoint]) -> f64 {
    let vals = curve.iter().map(|p| p.estimate.value);
    let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.fold(f64::INFINITY, f64::min);
    hi - lo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    /// `|x - y|_{-1}^2`.
    pub initial_gap: f64,
    /// `max_s E|X(s) - Y(s)|_{-1}^2` over the grid.
    pub max_mean_gap: f64,
    /// `max_mean_gap / initial_gap`, zero when `x = y`.
    pub ratio: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementRow {
    pub t: f64,
    /// `E|X(t) - x|_{-1}^2`.
    pub mean_sq_weak: f64,
    /// `E|X(t) - x|^2`.
    pub mean_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityResult {
    pub pairs: Vec<PairRow>,
    pub increments: Vec<IncrementRow>,
    pub report: Report,
}

/// Caps asserted by [`continuity_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityCaps {
    /// Bound on the coupled ratio `E|X-Y|_{-1}^2 / |x-y|_{-1}^2`.
    pub ratio: f64,
    /// Bound on `E|X(t)-x|_{-1}^2 / t`.
    pub increment_rate: f64,
}

impl Default for ContinuityCaps {
    fn default() -> Self {
        ContinuityCaps {
            ratio: 10.0,
            increment_rate: 10.0,
        }
    }
}

/// Coupled-path estimates of the continuity of `X_n` in the initial datum
/// and in time. Increments are measured from the first `x`.
#[allow(clippy::too_many_arguments)]
pub fn continuity_suite(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    pairs: &[(DVector<f64>, DVector<f64>)],
    n: u32,
    scheme: Scheme,
    samples: u64,
    seed: u64,
    caps: ContinuityCaps,
) -> Result<ContinuityResult> {
    if pairs.is_empty() {
        return Err(Error::config("pairs", "need at least one pair"));
    }
    for (x, y) in pairs {
        check_initial(sys, x)?;
        check_initial(sys, y)?;
    }
    let steps = scheme.steps;
    let on_grid = |e: &crate::simulate::Event<'_>| e.pre_jump.is_none() || is_grid_time(e.time, scheme);

    let mut rows = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        // per-sample squared weak gaps on the uniform grid
        let gaps: Vec<Vec<f64>> = (0..samples)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let path = sample_path(model, n, scheme, seed, i);
                let mut xs = Vec::with_capacity(steps + 1);
                integrate_path(sys, &path, x, scheme, |e| {
                    if on_grid(&e) {
                        xs.push(e.state.clone())
                    }
                })?;
                let mut out = Vec::with_capacity(steps + 1);
                integrate_path(sys, &path, y, scheme, |e| {
                    if on_grid(&e) {
                        let k = out.len();
                        out.push(sys.minus_one_norm(&(e.state - &xs[k])).powi(2));
                    }
                })?;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let initial_gap = sys.minus_one_norm(&(x - y)).powi(2);
        let mut best = (0.0, 0.0);
        for k in 0..gaps[0].len() {
            let col: Vec<f64> = gaps.iter().map(|g| g[k]).collect();
            let (m, se) = mean_and_se(&col);
            if m > best.0 {
                best = (m, se);
            }
        }
        let (ratio, se) = if initial_gap > 0.0 {
            (best.0 / initial_gap, best.1 / initial_gap)
        } else {
            (0.0, best.1)
        };
        rows.push(PairRow {
            initial_gap,
            max_mean_gap: best.0,
            ratio,
            standard_error: se,
        });
    }

    let x = &pairs[0].0;
    let incs: Vec<Vec<(f64, f64)>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, f64)>> {
            let path = sample_path(model, n, scheme, seed, i);
            let mut out = Vec::with_capacity(steps + 1);
            integrate_path(sys, &path, x, scheme, |e| {
                if on_grid(&e) {
                    let d = e.state - x;
                    out.push((sys.minus_one_norm(&d).powi(2), d.norm_squared()))
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let m = samples as f64;
    let increments: Vec<IncrementRow> = (0..incs[0].len())
        .map(|k| IncrementRow {
            t: scheme.time(k),
            mean_sq_weak: incs.iter().map(|r| r[k].0).sum::<f64>() / m,
            mean_sq: incs.iter().map(|r| r[k].1).sum::<f64>() / m,
        })
        .collect();

    let mut report = Report::new("continuity");
    let (worst, worst_se) = rows
        .iter()
        .map(|r| (r.ratio, r.standard_error))
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    report.push(Check::at_most("coupled_ratio", worst, caps.ratio).with_ci(Z95 * worst_se));
    let rate = increments
        .iter()
        .skip(1)
        .map(|r| r.mean_sq_weak / r.t)
        .fold(0.0, f64::max);
    report.push(Check::at_most("increment_rate", rate, caps.increment_rate));
    // E|X(t)-x|^2 -> 0 as t -> 0: the first step sits below the last.
    let first = increments.get(1).map_or(0.0, |r| r.mean_sq);
    let last = increments.last().map_or(0.0, |r| r.mean_sq);
    report.push(Check::at_most("increment_shrinks", first, last));
    Ok(ContinuityResult {
        pairs: rows,
        increments,
        report,
    })
}

fn is_grid_time(t: f64, scheme: Scheme) -> bool {
    let k = (t / scheme.dt()).round() as usize;
    k <= scheme.steps && scheme.time(k) == t
}
