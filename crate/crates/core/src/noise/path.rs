use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::NoiseModel;

/// Simulation grid used for the small-jump Gaussian part when the caller
/// does not supply one.
pub const DEFAULT_GRID_STEPS: usize = 512;

/// Jump times and (already `1/n`-scaled) marks of `L_n` on `(0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub marks: Vec<DVector<f64>>,
}

impl JumpPath {
    pub fn len(&self) -> usize {
        self.jump_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }

    /// `L_n(t)`: sum of marks at times `<= t`.
    pub fn value_at(&self, t: f64, dim: usize) -> DVector<f64> {
        let mut acc = DVector::zeros(dim);
        for (s, m) in self.jump_times.iter().zip(&self.marks) {
            if *s > t {
                break;
            }
            acc += m;
        }
        acc
    }
}

/// Independent, reproducible substream for one Monte Carlo sample.
pub fn substream(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

impl NoiseModel {
    fn gaussian_mark<R: Rng + ?Sized>(&self, rng: &mut R, std: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.sqrt_q().iter().map(|s| {
                let xi: f64 = rng.sample(StandardNormal);
                s * std * xi
            }),
        )
    }

    /// Draw `z` from the normalized Levy measure restricted to simulated
    /// jumps. Returns `(total mass, z)`.
    pub fn sample_levy_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, DVector<f64>) {
        match self.subordinator() {
            None => (1.0, self.gaussian_mark(rng, 1.0)),
            Some(sub) => {
                let sigma = sub.sample_size(rng);
                (sub.mass_above_cutoff(), self.gaussian_mark(rng, sigma.sqrt()))
            }
        }
    }

    /// Sample `L_n` on `(0, T]` with the default small-jump grid.
    pub fn sample_scaled_path(&self, n: u32, horizon: f64, seed: u64, sample_index: u64) -> JumpPath {
        self.sample_scaled_path_on_grid(n, horizon, DEFAULT_GRID_STEPS, seed, sample_index)
    }

    /// Sample `L_n` on `(0, T]`. For subordinated noise the activity below the
    /// cutoff is replaced by Gaussian increments at the `grid_steps` uniform
    /// grid points, with covariance `dt * int_0^eps t rho(dt) * Q / n`.
    pub fn sample_scaled_path_on_grid(
        &self,
        n: u32,
        horizon: f64,
        grid_steps: usize,
        seed: u64,
        sample_index: u64,
    ) -> JumpPath {
        assert!(n >= 1, "scaling n must be at least 1");
        assert!(horizon > 0.0, "horizon must be positive");
        let nf = n as f64;
        let mut rng = substream(seed, sample_index);
        let rate = match self.subordinator() {
            None => 1.0,
            Some(sub) => sub.mass_above_cutoff(),
        };
        let mean = nf * horizon * rate;
        let count = if mean > 0.0 {
            Poisson::new(mean).expect("finite Poisson mean").sample(&mut rng) as usize
        } else {
            0
        };
        let mut times: Vec<f64> = (0..count)
            .map(|_| horizon * (1.0 - rng.random::<f64>()))
            .collect();
        times.sort_by(f64::total_cmp);
        let mut events: Vec<(f64, DVector<f64>)> = times
            .into_iter()
            .map(|t| {
                let std = match self.subordinator() {
                    None => 1.0,
                    Some(sub) => sub.sample_size(&mut rng).sqrt(),
                };
                (t, self.gaussian_mark(&mut rng, std / nf))
            })
            .collect();

        if let Some(sub) = self.subordinator() {
            let m = sub.mean_below_cutoff();
            if m > 0.0 && grid_steps > 0 {
                let dt = horizon / grid_steps as f64;
                let std = (dt * m / nf).sqrt();
                let small: Vec<(f64, DVector<f64>)> = (1..=grid_steps)
                    .map(|k| (horizon * k as f64 / grid_steps as f64, self.gaussian_mark(&mut rng, std)))
                    .collect();
                events = merge_events(events, small);
            }
        }

        let (jump_times, marks) = events.into_iter().unzip();
        JumpPath {
            horizon,
            jump_times,
            marks,
        }
    }
}

fn merge_events(a: Vec<(f64, DVector<f64>)>, b: Vec<(f64, DVector<f64>)>) -> Vec<(f64, DVector<f64>)> {
    let mut out: Vec<(f64, DVector<f64>)> = Vec::with_capacity(a.len() + b.len());
    let mut ia = a.into_iter().peekable();
    let mut ib = b.into_iter().peekable();
    loop {
        let next = match (ia.peek(), ib.peek()) {
            (Some(x), Some(y)) => {
                if x.0 <= y.0 {
                    ia.next()
                } else {
                    ib.next()
                }
            }
            (Some(_), None) => ia.next(),
            (None, Some(_)) => ib.next(),
            (None, None) => break,
        }
        .unwrap();
        match out.last_mut() {
            Some(last) if last.0 == next.0 => last.1 += next.1,
            _ => out.push(next),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::RhoSpec;

    #[test]
    fn expected_jump_count_is_n_t() {
        let m = NoiseModel::compound_poisson(vec![1.0]).unwrap();
        let k = 20_000;
        let total: usize = (0..k).map(|i| m.sample_scaled_path(1, 1.0, 3, i).len()).sum();
        let mean = total as f64 / k as f64;
        // Poisson(1): standard error 1/sqrt(k)
        assert!((mean - 1.0).abs() < 3.0 / (k as f64).sqrt(), "{mean}");
    }

    #[test]
    fn sampling_is_a_pure_function_of_seed_and_index() {
        let m = NoiseModel::subordinated(vec![1.0, 0.5], RhoSpec::Ne2Family { alpha: -0.5 }, 1e-2).unwrap();
        let a = m.sample_scaled_path(5, 1.0, 11, 42);
        let b = m.sample_scaled_path(5, 1.0, 11, 42);
        let c = m.sample_scaled_path(5, 1.0, 11, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.jump_times.windows(2).all(|w| w[0] < w[1]));
        assert!(a.jump_times.iter().all(|&t| t > 0.0 && t <= 1.0));
        assert_eq!(a.jump_times.len(), a.marks.len());
    }

    #[test]
    fn subordinated_second_moment_matches_trace_q() {
        let m = NoiseModel::subordinated(vec![1.0, 1.0], RhoSpec::Ne2Family { alpha: -0.5 }, 5e-2).unwrap();
        let (n, k) = (10u32, 40_000u64);
        let sq: Vec<f64> = (0..k)
            .map(|i| m.sample_scaled_path_on_grid(n, 1.0, 64, 5, i).value_at(1.0, 2).norm_squared())
            .collect();
        let mean = sq.iter().sum::<f64>() / k as f64;
        let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        let se = (var / k as f64).sqrt();
        assert!((mean - 0.2).abs() < 3.0 * se, "{mean} +- {se}");
    }
}
