//! Scalar numerical building blocks: adaptive Gauss-Kronrod quadrature,
//! golden-section search, log-sum-exp reductions and a safeguarded Newton
//! solver.

// 15-point Kronrod nodes (non-negative half) and weights, with the embedded
// 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (G7/K15) integration of `f` over each consecutive
/// pair of `breakpoints`. Returns `None` when the error target is not met
/// within the subdivision budget or the integrand produces non-finite values.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Option<f64> {
    const MAX_INTERVALS: usize = 2000;
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(&f, w[0], w[1]);
            pieces.push((w[0], w[1], v, e));
        }
    }
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return None;
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Some(total);
        }
        if pieces.len() >= MAX_INTERVALS {
            return None;
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))?;
        let (a, b, _, _) = pieces.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return None;
        }
        let (v1, e1) = gk15(&f, a, m);
        let (v2, e2) = gk15(&f, m, b);
        pieces.push((a, m, v1, e1));
        pieces.push((m, b, v2, e2));
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iter = 0;
    while (b - a).abs() > tol && iter < 200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

/// Solve `f(x) = 0` for increasing `f` on `[lo, hi]` with Newton steps,
/// falling back to bisection whenever Newton leaves the bracket.
pub fn newton_bisect<F: Fn(f64) -> (f64, f64)>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= tol * (1.0 + x.abs()) || hi - lo <= tol * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Numerically stable `log(sum(exp(xs)))`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Partial log-sum-exp state: `(max, sum of exp(x - max), sum of exp(2(x - max)))`.
/// Merging is associative, so a fixed pairwise tree gives reproducible totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedSum {
    pub max: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ShiftedSum {
    pub const EMPTY: ShiftedSum = ShiftedSum {
        max: f64::NEG_INFINITY,
        sum: 0.0,
        sum_sq: 0.0,
    };

    pub fn single(x: f64) -> Self {
        ShiftedSum {
            max: x,
            sum: 1.0,
            sum_sq: 1.0,
        }
    }

    pub fn merge(self, other: ShiftedSum) -> ShiftedSum {
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        let m = self.max.max(other.max);
        let (a, b) = ((self.max - m).exp(), (other.max - m).exp());
        ShiftedSum {
            max: m,
            sum: self.sum * a + other.sum * b,
            sum_sq: self.sum_sq * a * a + other.sum_sq * b * b,
        }
    }

    pub fn log_sum(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Pairwise-tree reduction of log-weights. The tree shape depends only on the
/// number of inputs.
pub fn tree_logsumexp(xs: &[f64]) -> ShiftedSum {
    match xs.len() {
        0 => ShiftedSum::EMPTY,
        1 => ShiftedSum::single(xs[0]),
        n => {
            let (l, r) = xs.split_at(n / 2);
            tree_logsumexp(l).merge(tree_logsumexp(r))
        }
    }
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
