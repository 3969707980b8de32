//! Jump measures `rho` of the subordinator in the subordinated Wiener model.
//!
//! The measure is normalized at construction so that `int t rho(dt) = 1`,
//! which makes the covariance of the subordinated process equal to `Q`.
//! Only finite-activity measures are accepted: atoms, or the family
//! `t^{-1-alpha} exp(-t^2) dt` with `alpha < 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::radial::LegendreTable;
use crate::error::{Error, Result};
use crate::numerics::integrate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoSpec {
    /// A single atom at `at`; its weight is fixed by the normalization.
    PointMass { at: f64 },
    /// Finitely many atoms `sizes[i]` with relative weights `weights[i]`.
    Tabulated { sizes: Vec<f64>, weights: Vec<f64> },
    /// `t^{-1-alpha} exp(-t^2) dt`, restricted to `alpha < 0`.
    Ne2Family { alpha: f64 },
}

#[derive(Debug, Clone)]
enum SizeSampler {
    Atoms { sizes: Vec<f64>, cumulative: Vec<f64> },
    InverseCdf { t: Vec<f64>, cdf: Vec<f64> },
    Empty,
}

#[derive(Debug, Clone)]
pub struct Subordinator {
    spec: RhoSpec,
    scale: f64,
    eps: f64,
    mass_above: f64,
    mean_below: f64,
    sampler: SizeSampler,
    table: LegendreTable,
}

const QUAD_ABS: f64 = 1e-14;
const QUAD_REL: f64 = 1e-11;

/// `exp(log_w) * expm1(x)` without overflowing the intermediate.
fn weighted_expm1(x: f64, log_w: f64) -> f64 {
    if x < 30.0 {
        log_w.exp() * x.exp_m1()
    } else {
        (log_w + x).exp() - log_w.exp()
    }
}

impl Subordinator {
    pub fn new(spec: RhoSpec, eps: f64, lambda_max: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config("noise.eps_rho", "small-jump cutoff must be positive"));
        }
        match &spec {
            RhoSpec::PointMass { at } => {
                if !(*at > 0.0 && at.is_finite()) {
                    return Err(Error::config("noise.rho.at", "atom location must be positive"));
                }
            }
            RhoSpec::Tabulated { sizes, weights } => {
                if sizes.is_empty() || sizes.len() != weights.len() {
                    return Err(Error::config(
                        "noise.rho",
                        "sizes and weights must be non-empty and of equal length",
                    ));
                }
                for (i, (&t, &w)) in sizes.iter().zip(weights).enumerate() {
                    if !(t > 0.0 && t.is_finite()) {
                        return Err(Error::config(format!("noise.rho.sizes[{i}]"), "must be positive"));
                    }
                    if !(w >= 0.0 && w.is_finite()) {
                        return Err(Error::config(format!("noise.rho.weights[{i}]"), "must be nonnegative"));
                    }
                }
                if weights.iter().all(|&w| w == 0.0) {
                    return Err(Error::config("noise.rho.weights", "at least one weight must be positive"));
                }
            }
            RhoSpec::Ne2Family { alpha } => {
                if !(*alpha < 0.0 && alpha.is_finite()) {
                    return Err(Error::config(
                        "noise.rho.alpha",
                        "only finite-activity members (alpha < 0) are supported",
                    ));
                }
            }
        }
        let mut sub = Subordinator {
            spec,
            scale: 1.0,
            eps,
            mass_above: 0.0,
            mean_below: 0.0,
            sampler: SizeSampler::Empty,
            table: LegendreTable::build(|_| Ok(0.0), |_| Ok(0.0), 1.0, 0.0, 2.0)?,
        };
        let mean = sub.integrate("int t rho(dt)", |t, lw| (lw + t.ln()).exp())?;
        sub.scale = 1.0 / mean;
        sub.mass_above = sub.integrate_range("rho([eps, inf))", eps, f64::INFINITY, |_, lw| lw.exp())?;
        sub.mean_below = sub.integrate_range("int_0^eps t rho(dt)", 0.0, eps, |t, lw| (lw + t.ln()).exp())?;
        sub.certify_exponential_moments(lambda_max)?;
        sub.sampler = sub.build_sampler()?;
        sub.table = LegendreTable::build(|u| sub.h(u), |u| sub.h_prime(u), 1e-4, 64.0, 1.005)?;
        Ok(sub)
    }

    pub fn spec(&self) -> &RhoSpec {
        &self.spec
    }

    pub fn cutoff(&self) -> f64 {
        self.eps
    }

    /// Normalization constant applied to the raw measure.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `rho([eps, inf))`, the rate of simulated subordinator jumps.
    pub fn mass_above_cutoff(&self) -> f64 {
        self.mass_above
    }

    /// `int_0^eps t rho(dt)`, folded into a Gaussian increment when simulating.
    pub fn mean_below_cutoff(&self) -> f64 {
        self.mean_below
    }

    pub(crate) fn table(&self) -> &LegendreTable {
        &self.table
    }

    /// `int phi(t) rho(dt)` where the integrand receives `(t, log density)`.
    pub fn integrate<F>(&self, what: &str, phi: F) -> Result<f64>
    where
        F: Fn(f64, f64) -> f64,
    {
        self.integrate_range(what, 0.0, f64::INFINITY, phi)
    }

    fn integrate_range<F>(&self, what: &str, lo: f64, hi: f64, phi: F) -> Result<f64>
    where
        F: Fn(f64, f64) -> f64,
    {
        self.integrate_peaked(what, lo, hi, 0.0, phi)
    }

    fn integrate_peaked<F>(&self, what: &str, lo: f64, hi: f64, peak: f64, phi: F) -> Result<f64>
    where
        F: Fn(f64, f64) -> f64,
    {
        let raw = match &self.spec {
            RhoSpec::PointMass { at } => {
                if *at >= lo && *at < hi {
                    phi(*at, 0.0)
                } else {
                    0.0
                }
            }
            RhoSpec::Tabulated { sizes, weights } => sizes
                .iter()
                .zip(weights)
                .filter(|(&t, &w)| t >= lo && t < hi && w > 0.0)
                .map(|(&t, &w)| phi(t, w.ln()))
                .sum(),
            RhoSpec::Ne2Family { alpha } => {
                let a = *alpha;
                let end = hi.min(peak.max(1.0) + 8.0 + (-a).sqrt());
                let mut bps: Vec<f64> = [lo, 1e-3, 1.0, peak, end]
                    .into_iter()
                    .filter(|&b| b >= lo && b <= end)
                    .collect();
                bps.sort_by(f64::total_cmp);
                bps.dedup();
                integrate(
                    |t| {
                        if t <= 0.0 {
                            return 0.0;
                        }
                        phi(t, (-1.0 - a) * t.ln() - t * t)
                    },
                    &bps,
                    QUAD_ABS,
                    QUAD_REL,
                )
                .ok_or_else(|| Error::Quadrature {
                    integral: what.to_string(),
                })?
            }
        };
        if !raw.is_finite() {
            return Err(Error::Quadrature {
                integral: what.to_string(),
            });
        }
        Ok(self.scale * raw)
    }

    /// `h(u) = int (exp(t u^2 / 2) - 1) rho(dt)`.
    pub fn h(&self, u: f64) -> Result<f64> {
        let c = 0.5 * u * u;
        self.integrate_peaked(
            "h(u) = int (exp(t u^2/2) - 1) rho(dt)",
            0.0,
            f64::INFINITY,
            0.5 * c,
            |t, lw| weighted_expm1(c * t, lw),
        )
    }

    /// `h'(u) = int t u exp(t u^2 / 2) rho(dt)`.
    pub fn h_prime(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        let c = 0.5 * u * u;
        self.integrate_peaked(
            "h'(u) = int t u exp(t u^2/2) rho(dt)",
            0.0,
            f64::INFINITY,
            0.5 * c,
            |t, lw| (lw + c * t + (t * u).ln()).exp(),
        )
    }

    /// `int_1^inf exp(lambda t) rho(dt)`.
    pub fn exponential_moment(&self, lambda: f64) -> Result<f64> {
        self.integrate_peaked(
            "int_1^inf exp(lambda t) rho(dt)",
            1.0,
            f64::INFINITY,
            0.5 * lambda,
            |t, lw| (lw + lambda * t).exp(),
        )
    }

    fn certify_exponential_moments(&self, lambda_max: f64) -> Result<()> {
        let mut lambda = 1.0;
        while lambda <= lambda_max {
            let m = self.exponential_moment(lambda)?;
            if !m.is_finite() {
                return Err(Error::config(
                    "noise.rho",
                    format!("exponential moment diverges at lambda = {lambda}"),
                ));
            }
            lambda *= 2.0;
        }
        Ok(())
    }

    fn build_sampler(&self) -> Result<SizeSampler> {
        if self.mass_above == 0.0 {
            return Ok(SizeSampler::Empty);
        }
        match &self.spec {
            RhoSpec::PointMass { at } => Ok(SizeSampler::Atoms {
                sizes: vec![*at],
                cumulative: vec![1.0],
            }),
            RhoSpec::Tabulated { sizes, weights } => {
                let mut acc = 0.0;
                let mut s = Vec::new();
                let mut c = Vec::new();
                for (&t, &w) in sizes.iter().zip(weights) {
                    if t >= self.eps && w > 0.0 {
                        acc += w;
                        s.push(t);
                        c.push(acc);
                    }
                }
                let total = acc;
                c.iter_mut().for_each(|v| *v /= total);
                Ok(SizeSampler::Atoms {
                    sizes: s,
                    cumulative: c,
                })
            }
            RhoSpec::Ne2Family { alpha } => {
                let end = 1.0f64.max(self.eps) + 8.0 + (-alpha).sqrt();
                let mut t = Vec::new();
                if self.eps < 1.0 {
                    let n = 200;
                    let r = (1.0 / self.eps).powf(1.0 / n as f64);
                    let mut x = self.eps;
                    for _ in 0..n {
                        t.push(x);
                        x *= r;
                    }
                }
                let start = self.eps.max(1.0);
                let n = 400;
                for k in 0..=n {
                    t.push(start + (end - start) * k as f64 / n as f64);
                }
                let mut cdf = vec![0.0];
                let mut acc = 0.0;
                for w in t.windows(2) {
                    acc += self.integrate_range("rho sampler table", w[0], w[1], |_, lw| lw.exp())?;
                    cdf.push(acc);
                }
                cdf.iter_mut().for_each(|v| *v /= acc);
                Ok(SizeSampler::InverseCdf { t, cdf })
            }
        }
    }

    /// Draw a jump size from `rho` restricted to `[eps, inf)`, normalized.
    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match &self.sampler {
            SizeSampler::Atoms { sizes, cumulative } => {
                let i = cumulative.partition_point(|&c| c <= u).min(sizes.len() - 1);
                sizes[i]
            }
            SizeSampler::InverseCdf { t, cdf } => {
                let i = cdf.partition_point(|&c| c <= u).clamp(1, t.len() - 1);
                let (c0, c1) = (cdf[i - 1], cdf[i]);
                let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                t[i - 1] + frac * (t[i] - t[i - 1])
            }
            SizeSampler::Empty => 0.0,
        }
    }
}
