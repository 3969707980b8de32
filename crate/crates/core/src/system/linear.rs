//! The linear part `A` of the drift and the semigroup `S(t) = exp(-t A)`.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

/// Storage for `A`, chosen so that `exp(-t A)` is cheap and exact where
/// possible.
#[derive(Debug, Clone)]
pub enum LinearPart {
    Diagonal(Vec<f64>),
    Symmetric {
        vectors: DMatrix<f64>,
        values: Vec<f64>,
    },
    /// Independent 2x2 blocks `[[damping, -frequency], [frequency, damping]]`
    /// acting on coordinates `(k, K + k)`.
    Rotations {
        damping: Vec<f64>,
        frequency: Vec<f64>,
    },
    Dense(DMatrix<f64>),
}

/// `exp(-t A)` for one fixed `t`.
#[derive(Debug, Clone)]
pub enum Propagator {
    Diagonal(Vec<f64>),
    Rotations(Vec<(f64, f64, f64)>),
    Matrix(DMatrix<f64>),
}

impl Propagator {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Propagator::Diagonal(f) => DVector::from_iterator(x.len(), x.iter().zip(f).map(|(v, f)| v * f)),
            Propagator::Rotations(blocks) => {
                let k = blocks.len();
                let mut y = x.clone();
                for (i, &(c, s, decay)) in blocks.iter().enumerate() {
                    let (a, b) = (x[i], x[k + i]);
                    y[i] = decay * (c * a + s * b);
                    y[k + i] = decay * (-s * a + c * b);
                }
                y
            }
            Propagator::Matrix(m) => m * x,
        }
    }

    pub fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Propagator::Diagonal(_) => self.apply(x),
            Propagator::Rotations(blocks) => {
                let k = blocks.len();
                let mut y = x.clone();
                for (i, &(c, s, decay)) in blocks.iter().enumerate() {
                    let (a, b) = (x[i], x[k + i]);
                    y[i] = decay * (c * a - s * b);
                    y[k + i] = decay * (s * a + c * b);
                }
                y
            }
            Propagator::Matrix(m) => m.tr_mul(x),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Propagator::Diagonal(f) => DMatrix::from_diagonal(&DVector::from_vec(f.clone())),
            Propagator::Rotations(blocks) => {
                let k = blocks.len();
                let mut m = DMatrix::zeros(2 * k, 2 * k);
                for (i, &(c, s, decay)) in blocks.iter().enumerate() {
                    m[(i, i)] = decay * c;
                    m[(i, k + i)] = decay * s;
                    m[(k + i, i)] = -decay * s;
                    m[(k + i, k + i)] = decay * c;
                }
                m
            }
            Propagator::Matrix(m) => m.clone(),
        }
    }
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    a.iter().enumerate().all(|(idx, v)| {
        let (i, j) = (idx % a.nrows(), idx / a.nrows());
        i == j || *v == 0.0
    })
}

impl LinearPart {
    /// Picks the cheapest exact representation of a square matrix.
    pub fn from_matrix(a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "A must be square");
        if is_diagonal(&a) {
            return LinearPart::Diagonal(a.diagonal().iter().copied().collect());
        }
        if a == a.transpose() {
            let eig = SymmetricEigen::new(a);
            return LinearPart::Symmetric {
                vectors: eig.eigenvectors,
                values: eig.eigenvalues.iter().copied().collect(),
            };
        }
        LinearPart::Dense(a)
    }

    pub fn dim(&self) -> usize {
        match self {
            LinearPart::Diagonal(d) => d.len(),
            LinearPart::Symmetric { values, .. } => values.len(),
            LinearPart::Rotations { damping, .. } => 2 * damping.len(),
            LinearPart::Dense(m) => m.nrows(),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            LinearPart::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_vec(d.clone())),
            LinearPart::Symmetric { vectors, values } => {
                vectors * DMatrix::from_diagonal(&DVector::from_vec(values.clone())) * vectors.transpose()
            }
            LinearPart::Rotations { damping, frequency } => {
                let k = damping.len();
                let mut m = DMatrix::zeros(2 * k, 2 * k);
                for i in 0..k {
                    m[(i, i)] = damping[i];
                    m[(i, k + i)] = -frequency[i];
                    m[(k + i, i)] = frequency[i];
                    m[(k + i, k + i)] = damping[i];
                }
                m
            }
            LinearPart::Dense(m) => m.clone(),
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            LinearPart::Diagonal(d) => DVector::from_iterator(x.len(), x.iter().zip(d).map(|(v, a)| v * a)),
            _ => self.matrix() * x,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LinearPart::Diagonal(d) => d.iter().all(|&v| v == 0.0),
            LinearPart::Symmetric { values, .. } => values.iter().all(|&v| v == 0.0),
            LinearPart::Rotations { damping, frequency } => {
                damping.iter().chain(frequency).all(|&v| v == 0.0)
            }
            LinearPart::Dense(m) => m.iter().all(|&v| v == 0.0),
        }
    }

    /// `exp(-t A)`; dense matrices go through scaling and squaring with a
    /// Pade approximant.
    pub fn propagator(&self, t: f64) -> Propagator {
        assert!(t >= 0.0, "semigroup time must be nonnegative");
        match self {
            LinearPart::Diagonal(d) => Propagator::Diagonal(d.iter().map(|a| (-t * a).exp()).collect()),
            LinearPart::Symmetric { vectors, values } => {
                let f = DVector::from_iterator(values.len(), values.iter().map(|a| (-t * a).exp()));
                Propagator::Matrix(vectors * DMatrix::from_diagonal(&f) * vectors.transpose())
            }
            LinearPart::Rotations { damping, frequency } => Propagator::Rotations(
                damping
                    .iter()
                    .zip(frequency)
                    .map(|(&a, &b)| ((b * t).cos(), (b * t).sin(), (-a * t).exp()))
                    .collect(),
            ),
            LinearPart::Dense(m) => Propagator::Matrix((m * (-t)).exp()),
        }
    }

    /// Yosida approximation `A_lambda = lambda A (lambda I + A)^{-1}`.
    pub fn yosida(&self, lambda: f64) -> LinearPart {
        assert!(lambda > 0.0, "Yosida parameter must be positive");
        let scalar = |a: f64| lambda * a / (lambda + a);
        match self {
            LinearPart::Diagonal(d) => LinearPart::Diagonal(d.iter().map(|&a| scalar(a)).collect()),
            LinearPart::Symmetric { vectors, values } => LinearPart::Symmetric {
                vectors: vectors.clone(),
                values: values.iter().map(|&a| scalar(a)).collect(),
            },
            LinearPart::Rotations { damping, frequency } => {
                let (mut d, mut f) = (Vec::new(), Vec::new());
                for (&a, &b) in damping.iter().zip(frequency) {
                    let z = Complex::new(a, b);
                    let zl = z * lambda / (z + lambda);
                    d.push(zl.re);
                    f.push(zl.im);
                }
                LinearPart::Rotations {
                    damping: d,
                    frequency: f,
                }
            }
            LinearPart::Dense(m) => {
                let n = m.nrows();
                let shifted = DMatrix::identity(n, n) * lambda + m;
                let r = shifted
                    .lu()
                    .try_inverse()
                    .expect("lambda I + A is invertible for monotone A");
                LinearPart::Dense(m * r * lambda)
            }
        }
    }

    /// `(lambda I + A)^{-1}` as a dense matrix.
    pub fn resolvent(&self, lambda: f64) -> DMatrix<f64> {
        let n = self.dim();
        (DMatrix::identity(n, n) * lambda + self.matrix())
            .lu()
            .try_inverse()
            .expect("lambda I + A is invertible for monotone A")
    }
}
