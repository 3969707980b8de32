use nalgebra::DVector;

/// A value function `v(t, x)` with its derivatives in closed form.
pub trait ValueField: Sync {
    fn value(&self, t: f64, x: &DVector<f64>) -> f64;
    fn time_derivative(&self, t: f64, x: &DVector<f64>) -> f64;
    fn gradient(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
}

/// `v(t, x) = <p, x> + (T - t) rate`; with `rate = H0(p)` this solves both
/// the HJB equation and the integro-PDE when `A = 0, F = 0, G = I`.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub p: DVector<f64>,
    pub rate: f64,
    pub horizon: f64,
}

impl ValueField for LinearField {
    fn value(&self, t: f64, x: &DVector<f64>) -> f64 {
        self.p.dot(x) + (self.horizon - t) * self.rate
    }

    fn time_derivative(&self, _t: f64, _x: &DVector<f64>) -> f64 {
        -self.rate
    }

    fn gradient(&self, _t: f64, _x: &DVector<f64>) -> DVector<f64> {
        self.p.clone()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl ValueField for ConstantField {
    fn value(&self, _t: f64, _x: &DVector<f64>) -> f64 {
        self.0
    }

    fn time_derivative(&self, _t: f64, _x: &DVector<f64>) -> f64 {
        0.0
    }

    fn gradient(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }
}

/// `base + amplitude * sin(x_1)`, a negative control.
#[derive(Debug, Clone)]
pub struct SinePerturbed<F> {
    pub base: F,
    pub amplitude: f64,
}

impl<F: ValueField> ValueField for SinePerturbed<F> {
    fn value(&self, t: f64, x: &DVector<f64>) -> f64 {
        self.base.value(t, x) + self.amplitude * x[0].sin()
    }

    fn time_derivative(&self, t: f64, x: &DVector<f64>) -> f64 {
        self.base.time_derivative(t, x)
    }

    fn gradient(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.base.gradient(t, x);
        g[0] += self.amplitude * x[0].cos();
        g
    }
}
