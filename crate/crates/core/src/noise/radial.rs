//! One-dimensional radial Hamiltonians `h` and their Legendre conjugates `l`.
//!
//! Both built-in noise models have a Laplace exponent of the form
//! `H0(p) = h(|Q^{1/2} p|)`, so all the convex analysis reduces to the scalar
//! pair `(h, l)` with `l(s) = sup_{u >= 0} (s u - h(u))`.

use crate::error::Result;
use crate::numerics::{golden_max, newton_bisect};

/// `g(sigma) = sigma * exp(sigma^2 / 2)`, the derivative of the Gaussian
/// radial Hamiltonian.
pub fn g_sigma(sigma: f64) -> f64 {
    sigma * (0.5 * sigma * sigma).exp()
}

/// Inverse of [`g_sigma`] on `[0, inf)`.
pub fn inverse_g(s: f64) -> f64 {
    assert!(s >= 0.0, "inverse_g needs s >= 0, got {s}");
    if s == 0.0 {
        return 0.0;
    }
    if s.is_infinite() {
        return f64::INFINITY;
    }
    // g(sigma) >= sigma and, for sigma >= 1, g(sigma) >= exp(sigma^2/2).
    let hi = s.min(1f64.max((2.0 * s.max(1.0).ln()).sqrt())) * (1.0 + 1e-12) + 1e-300;
    newton_bisect(
        |x| {
            let e = (0.5 * x * x).exp();
            (x * e - s, (1.0 + x * x) * e)
        },
        0.0,
        hi,
        1e-16,
    )
}

/// Gaussian-jump radial Hamiltonian `h(u) = exp(u^2/2) - 1`.
pub fn gaussian_h(u: f64) -> f64 {
    (0.5 * u * u).exp_m1()
}

pub fn gaussian_h_prime(u: f64) -> f64 {
    g_sigma(u)
}

/// Closed-form conjugate `l(s) = (f^2 - 1) exp(f^2/2) + 1` with `f = inverse_g(s)`,
/// rearranged as `(f^2 - 1) expm1(f^2/2) + f^2` to avoid cancellation near 0.
pub fn gaussian_l(s: f64) -> f64 {
    let f = inverse_g(s);
    let f2 = f * f;
    (f2 - 1.0) * (0.5 * f2).exp_m1() + f2
}

/// `l'(s) = f(s)` by stationarity of the conjugate.
pub fn gaussian_l_prime(s: f64) -> f64 {
    inverse_g(s)
}

/// Numerical conjugate of a convex nondecreasing `h` with `h(0) = 0`:
/// scan a log-spaced grid of `u`, then refine by golden section.
/// Returns `(l(s), argmax u)`.
pub fn conjugate_numeric<H>(h: H, s: f64) -> Result<(f64, f64)>
where
    H: Fn(f64) -> Result<f64>,
{
    const GRID: usize = 400;
    const U_MIN: f64 = 1e-6;
    if s <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut u_max = 1.0;
    for _ in 0..64 {
        if h(u_max)? > s * u_max + 1.0 {
            break;
        }
        u_max *= 2.0;
    }
    let ratio = (u_max / U_MIN).powf(1.0 / (GRID - 1) as f64);
    let mut grid = Vec::with_capacity(GRID + 1);
    grid.push(0.0);
    let mut u = U_MIN;
    for _ in 0..GRID {
        grid.push(u);
        u *= ratio;
    }
    let mut best = (0usize, 0.0);
    for (i, &u) in grid.iter().enumerate().skip(1) {
        let v = s * u - h(u)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    let lo = grid[best.0.saturating_sub(1)];
    let hi = grid[(best.0 + 1).min(grid.len() - 1)];
    let objective = |u: f64| match h(u) {
        Ok(hv) => s * u - hv,
        Err(_) => f64::NEG_INFINITY,
    };
    let (u_star, value) = golden_max(objective, lo, hi, 1e-10);
    if value >= best.1 {
        Ok((value.max(0.0), u_star))
    } else {
        Ok((best.1, grid[best.0]))
    }
}

/// Conjugate pairs `(s_i, l(s_i), u_i)` generated exactly by sweeping `u`:
/// `s = h'(u)`, `l(s) = s u - h(u)`, `l'(s) = u`. Between nodes `l` is the
/// cubic Hermite interpolant, and [`LegendreTable::eval`] returns that
/// interpolant together with its exact derivative.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    s: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
}

impl LegendreTable {
    pub fn build<H, D>(h: H, h_prime: D, u_min: f64, u_cap: f64, ratio: f64) -> Result<Self>
    where
        H: Fn(f64) -> Result<f64>,
        D: Fn(f64) -> Result<f64>,
    {
        let (mut s, mut l, mut uu) = (Vec::new(), Vec::new(), Vec::new());
        let mut u = u_min;
        while u <= u_cap {
            let (hv, dv) = match (h(u), h_prime(u)) {
                (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() && a < 1e200 => (a, b),
                (Err(e), _) | (_, Err(e)) if s.is_empty() => return Err(e),
                _ => break,
            };
            if let Some(&last) = s.last() {
                if dv <= last {
                    u *= ratio;
                    continue;
                }
            }
            s.push(dv);
            l.push((dv * u - hv).max(0.0));
            uu.push(u);
            u *= ratio;
        }
        Ok(LegendreTable { s, l, u: uu })
    }

    pub fn s_max(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }

    /// `(l(s), l'(s))`, or `None` past the end of the table.
    pub fn eval(&self, s: f64) -> Option<(f64, f64)> {
        if s <= 0.0 {
            return Some((0.0, 0.0));
        }
        let s0 = *self.s.first()?;
        if s < s0 {
            // l is quadratic to leading order near the origin.
            let c = self.l[0] / (s0 * s0);
            return Some((c * s * s, 2.0 * c * s));
        }
        if s > self.s_max() {
            return None;
        }
        let i = match self.s.partition_point(|&x| x <= s) {
            0 => 0,
            k if k >= self.s.len() => self.s.len() - 2,
            k => k - 1,
        };
        let (x0, x1) = (self.s[i], self.s[i + 1]);
        let w = x1 - x0;
        let t = (s - x0) / w;
        let (y0, y1, m0, m1) = (self.l[i], self.l[i + 1], self.u[i] * w, self.u[i + 1] * w);
        let t2 = t * t;
        let t3 = t2 * t;
        let val = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let der = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / w;
        Some((val, der))
    }
}
