//! The deterministic control problem behind the Laplace limit.
//!
//! Controls are parametrized as `u = Q^{1/2} w` and are piecewise constant on
//! `intervals` equal pieces of `[0, T]`; each piece is integrated with
//! `substeps` exponential Euler steps
//! `X <- S(h)(X + h (F(X) + G(X) Q^{1/2} w))`. The running cost is
//! `sum_j dt_u l(|w_j|)`. Gradients are the exact discrete adjoint of this
//! stepper.

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::TerminalCost;
use crate::error::{Error, Result};
use crate::noise::{substream, Extended, NoiseModel};
use crate::simulate::Trajectory;
use crate::system::{GalerkinSystem, Propagator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub horizon: f64,
    /// One vector in noise coordinates per control interval.
    pub values: Vec<DVector<f64>>,
}

impl ControlPath {
    pub fn zeros(horizon: f64, intervals: usize, dim: usize) -> Self {
        Self::constant(horizon, intervals, DVector::zeros(dim))
    }

    pub fn constant(horizon: f64, intervals: usize, w: DVector<f64>) -> Self {
        assert!(intervals >= 1, "need at least one control interval");
        ControlPath {
            horizon,
            values: vec![w; intervals],
        }
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn interval_length(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    /// Left endpoint of interval `j`.
    pub fn start(&self, j: usize) -> f64 {
        self.horizon * j as f64 / self.intervals() as f64
    }

    /// `sum_j dt_u l(|w_j|)`.
    pub fn cost(&self, model: &NoiseModel) -> Result<f64> {
        let dt = self.interval_length();
        let mut total = 0.0;
        for w in &self.values {
            total += dt * model.running_cost(w.norm())?.0;
        }
        Ok(total)
    }

    fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|w| w.iter().copied()).collect()
    }

    fn from_flat(horizon: f64, dim: usize, flat: &[f64]) -> Self {
        ControlPath {
            horizon,
            values: flat.chunks(dim).map(DVector::from_column_slice).collect(),
        }
    }
}

/// Control and state discretization shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub intervals: usize,
    /// State steps per control interval.
    pub substeps: usize,
    pub restarts: usize,
    pub max_iters: u64,
    /// Standard deviation of the Gaussian restart perturbations.
    pub perturbation: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            intervals: 32,
            substeps: 16,
            restarts: 8,
            max_iters: 400,
            perturbation: 0.5,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.intervals == 0 {
            return Err(Error::config("solver.intervals", "must be positive"));
        }
        if self.substeps == 0 {
            return Err(Error::config("solver.substeps", "must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::config("solver.restarts", "must be positive"));
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(Error::config("solver.perturbation", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Exponential Euler stepper with a fixed step.
struct Stepper<'a> {
    sys: &'a GalerkinSystem,
    sqrt_q: DVector<f64>,
    prop: Propagator,
    h: f64,
    substeps: usize,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a GalerkinSystem, model: &NoiseModel, horizon: f64, intervals: usize, substeps: usize) -> Result<Self> {
        if sys.noise_dim() != model.dim() {
            return Err(Error::Dimension(format!(
                "G expects noise of dimension {}, model has {}",
                sys.noise_dim(),
                model.dim()
            )));
        }
        let h = horizon / (intervals * substeps) as f64;
        Ok(Stepper {
            sys,
            sqrt_q: DVector::from_column_slice(model.sqrt_q()),
            prop: sys.linear().propagator(h),
            h,
            substeps,
        })
    }

    fn forward(&self, x0: &DVector<f64>, u: &ControlPath) -> Result<Vec<DVector<f64>>> {
        if x0.len() != self.sys.dim() {
            return Err(Error::Dimension(format!(
                "initial state has length {}, system dimension is {}",
                x0.len(),
                self.sys.dim()
            )));
        }
        let steps = u.intervals() * self.substeps;
        let mut xs = Vec::with_capacity(steps + 1);
        xs.push(x0.clone());
        let mut x = x0.clone();
        for j in 0..u.intervals() {
            let b = u.values[j].component_mul(&self.sqrt_q);
            for _ in 0..self.substeps {
                let mut y = &x + self.sys.diffusion().apply(&x, &b) * self.h;
                if !self.sys.drift().is_zero() {
                    y += self.sys.drift().apply(&x) * self.h;
                }
                x = self.prop.apply(&y);
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite {
                        time: self.h * xs.len() as f64,
                    });
                }
                xs.push(x.clone());
            }
        }
        Ok(xs)
    }

    /// Gradient in `w` of a terminal functional with gradient `lambda` at
    /// `X(T)`.
    fn backward(&self, xs: &[DVector<f64>], u: &ControlPath, mut lambda: DVector<f64>) -> Vec<DVector<f64>> {
        let mut grads = vec![DVector::zeros(u.dim()); u.intervals()];
        for j in (0..u.intervals()).rev() {
            let b = u.values[j].component_mul(&self.sqrt_q);
            for s in (0..self.substeps).rev() {
                let x = &xs[j * self.substeps + s];
                let mu = self.prop.apply_transpose(&lambda);
                grads[j] += self.sys.diffusion().apply_transpose(x, &mu) * self.h;
                let mut next = &mu + self.sys.diffusion().state_jacobian_transpose(x, &b, &mu) * self.h;
                if !self.sys.drift().is_zero() {
                    next += self.sys.drift().jacobian(x).tr_mul(&mu) * self.h;
                }
                lambda = next;
            }
            grads[j].component_mul_assign(&self.sqrt_q);
        }
        grads
    }
}

/// Controlled state at every step of the grid.
pub fn solve_state(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    x0: &DVector<f64>,
    u: &ControlPath,
    substeps: usize,
) -> Result<Trajectory> {
    let stepper = Stepper::new(sys, model, u.horizon, u.intervals(), substeps)?;
    let states = stepper.forward(x0, u)?;
    let steps = states.len() - 1;
    let times = (0..=steps)
        .map(|k| if k == steps { u.horizon } else { u.horizon * k as f64 / steps as f64 })
        .collect();
    Ok(Trajectory { times, states })
}

/// `J(x0, u) = g(X(T)) - cost(u)`.
pub fn objective(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    g: &TerminalCost,
    x0: &DVector<f64>,
    u: &ControlPath,
    substeps: usize,
) -> Result<f64> {
    let tr = solve_state(sys, model, x0, u, substeps)?;
    Ok(g.value(tr.terminal()) - u.cost(model)?)
}

enum Terminal<'a> {
    Payoff(&'a TerminalCost),
    /// `-(mu/2) |X(T) - y|^2`.
    Penalty { target: &'a DVector<f64>, mu: f64 },
}

impl Terminal<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Terminal::Payoff(g) => g.value(x),
            Terminal::Penalty { target, mu } => -0.5 * mu * (x - *target).norm_squared(),
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Terminal::Payoff(g) => g.gradient(x),
            Terminal::Penalty { target, mu } => (x - *target) * -mu,
        }
    }
}

struct Evaluation {
    objective: f64,
    cost: f64,
    terminal: DVector<f64>,
    gradient: Vec<f64>,
}

/// Last evaluated point with its objective and gradient.
type Cached = (Vec<f64>, f64, Vec<f64>);

struct Problem<'a> {
    stepper: &'a Stepper<'a>,
    model: &'a NoiseModel,
    x0: &'a DVector<f64>,
    terminal: Terminal<'a>,
    horizon: f64,
    dim: usize,
    cache: RefCell<Option<Cached>>,
    best: RefCell<Option<(f64, Vec<f64>)>>,
}

impl Problem<'_> {
    fn evaluate(&self, flat: &[f64]) -> Result<Evaluation> {
        let u = ControlPath::from_flat(self.horizon, self.dim, flat);
        let xs = self.stepper.forward(self.x0, &u)?;
        let xt = xs.last().expect("nonempty");
        let mut grads = self.stepper.backward(&xs, &u, self.terminal.gradient(xt));
        let dt = u.interval_length();
        let mut cost = 0.0;
        for (w, gr) in u.values.iter().zip(grads.iter_mut()) {
            let s = w.norm();
            let (l, dl) = self.model.running_cost(s)?;
            cost += dt * l;
            if s > 0.0 {
                *gr -= w * (dt * dl / s);
            }
        }
        Ok(Evaluation {
            objective: self.terminal.value(xt) - cost,
            cost,
            terminal: xt.clone(),
            gradient: grads.iter().flat_map(|g| g.iter().copied()).collect(),
        })
    }

    /// Negated objective and gradient, memoized on the last point.
    fn negated(&self, flat: &[f64]) -> std::result::Result<(f64, Vec<f64>), argmin::core::Error> {
        if let Some((p, v, g)) = self.cache.borrow().as_ref() {
            if p.as_slice() == flat {
                return Ok((*v, g.clone()));
            }
        }
        let e = self.evaluate(flat).map_err(argmin::core::Error::new)?;
        let v = -e.objective;
        let g: Vec<f64> = e.gradient.iter().map(|x| -x).collect();
        let mut best = self.best.borrow_mut();
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            *best = Some((v, flat.to_vec()));
        }
        *self.cache.borrow_mut() = Some((flat.to_vec(), v, g.clone()));
        Ok((v, g))
    }
}

/// Borrowed view handed to the solver so the best-seen record survives a
/// failed run.
struct Negated<'a, 'b>(&'a Problem<'b>);

impl CostFunction for Negated<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        self.0.negated(p).map(|r| r.0)
    }
}

impl Gradient for Negated<'_, '_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        self.0.negated(p).map(|r| r.1)
    }
}

struct Ascent {
    control: ControlPath,
    objective: f64,
    cost: f64,
    terminal: DVector<f64>,
    gradient_norm: f64,
    converged: bool,
}

/// One L-BFGS ascent from `start`; falls back to the best evaluated point
/// if the line search fails.
fn ascend(
    stepper: &Stepper<'_>,
    model: &NoiseModel,
    x0: &DVector<f64>,
    terminal: Terminal<'_>,
    start: &ControlPath,
    max_iters: u64,
) -> Result<Ascent> {
    let problem = Problem {
        stepper,
        model,
        x0,
        terminal,
        horizon: start.horizon,
        dim: start.dim(),
        cache: RefCell::new(None),
        best: RefCell::new(None),
    };
    let init = start.flatten();
    // the start point must be evaluable
    problem.evaluate(&init)?;
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
        .with_tolerance_grad(1e-11)
        .expect("positive tolerance")
        .with_tolerance_cost(0.0)
        .expect("nonnegative tolerance");
    let outcome = Executor::new(Negated(&problem), solver)
        .configure(|s| s.param(init.clone()).max_iters(max_iters))
        .run();
    let (flat, solver_converged) = match outcome {
        Ok(res) => {
            let state = res.state();
            let reason = state.get_termination_status().clone();
            let converged = matches!(
                reason,
                TerminationStatus::Terminated(TerminationReason::SolverConverged)
            );
            let p = state.get_best_param().cloned().unwrap_or_else(|| init.clone());
            (p, converged)
        }
        Err(_) => (problem.best.borrow().as_ref().map_or(init.clone(), |b| b.1.clone()), false),
    };
    // keep whichever of the solver's answer and the best seen is higher
    let returned = problem.negated(&flat).map(|r| r.0).unwrap_or(f64::INFINITY);
    let seen = problem.best.borrow().clone();
    let flat = match seen {
        Some((v, p)) if v < returned => p,
        _ => flat,
    };
    let e = problem.evaluate(&flat)?;
    let gradient_norm = e.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = 1.0 + e.objective.abs();
    Ok(Ascent {
        control: ControlPath::from_flat(start.horizon, start.dim(), &flat),
        objective: e.objective,
        cost: e.cost,
        terminal: e.terminal,
        gradient_norm,
        converged: solver_converged || gradient_norm <= 1e-6 * scale,
    })
}

fn restart_start(base: &ControlPath, r: usize, sigma: f64, seed: u64) -> ControlPath {
    if r == 0 || sigma == 0.0 {
        return base.clone();
    }
    let mut rng = substream(seed, (1u64 << 63) | r as u64);
    let mut start = base.clone();
    for w in &mut start.values {
        for v in w.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    start
}

/// Runs every restart in parallel; the best objective wins, ties going to
/// the lowest restart index.
#[allow(clippy::too_many_arguments)]
fn multi_start<'a, T>(
    stepper: &Stepper<'_>,
    model: &NoiseModel,
    x0: &DVector<f64>,
    terminal: T,
    base: &ControlPath,
    opts: &SolverOptions,
    restarts: usize,
    seed: u64,
) -> Result<(Ascent, usize)>
where
    T: Fn() -> Terminal<'a> + Sync,
{
    let runs: Vec<Result<Ascent>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = restart_start(base, r, opts.perturbation, seed);
            ascend(stepper, model, x0, terminal(), &start, opts.max_iters)
        })
        .collect();
    let mut best: Option<Ascent> = None;
    let mut first_err = None;
    let mut converged = 0;
    for run in runs {
        match run {
            Ok(a) => {
                converged += a.converged as usize;
                if best.as_ref().is_none_or(|b| a.objective > b.objective) {
                    best = Some(a);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(b) => Ok((b, converged)),
        None => Err(first_err.expect("at least one restart")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSolution {
    /// `J` at the returned control: a lower bound on the value.
    pub value: f64,
    pub cost: f64,
    pub terminal_payoff: f64,
    pub converged: bool,
    pub gradient_norm: f64,
    pub restarts_converged: usize,
    /// `K = 2 sup|g|` and whether the optimal cost respects it.
    pub cost_cap: f64,
    pub within_cap: bool,
    pub control: ControlPath,
}

/// Multi-start maximization of `J(x0, .)`.
pub fn maximize_value(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    g: &TerminalCost,
    x0: &DVector<f64>,
    horizon: f64,
    opts: &SolverOptions,
    seed: u64,
) -> Result<ValueSolution> {
    opts.validate()?;
    g.validate(sys.dim())?;
    let stepper = Stepper::new(sys, model, horizon, opts.intervals, opts.substeps)?;
    let base = ControlPath::zeros(horizon, opts.intervals, model.dim());
    let (best, restarts_converged) = multi_start(
        &stepper,
        model,
        x0,
        || Terminal::Payoff(g),
        &base,
        opts,
        opts.restarts,
        seed,
    )?;
    let cost_cap = 2.0 * g.sup_norm();
    Ok(ValueSolution {
        value: best.objective,
        cost: best.cost,
        terminal_payoff: g.value(&best.terminal),
        converged: best.converged,
        gradient_norm: best.gradient_norm,
        restarts_converged,
        cost_cap,
        within_cap: best.cost <= cost_cap * (1.0 + 1e-9),
        control: best.control,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySchedule {
    pub initial: f64,
    pub factor: f64,
    pub stages: usize,
    /// Running costs above this with an unresolved mismatch mark the target
    /// unreachable.
    pub cost_cap: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule {
            initial: 10.0,
            factor: 10.0,
            stages: 6,
            cost_cap: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub mu: f64,
    pub cost: f64,
    pub mismatch: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: Extended,
    pub cost: f64,
    /// `|X(T) - y|` at the returned control.
    pub mismatch: f64,
    pub tolerance: f64,
    /// Mismatch below tolerance.
    pub valid: bool,
    pub converged: bool,
    pub stages: Vec<StageRow>,
    pub control: ControlPath,
}

/// Quadratic-penalty homotopy for the minimal cost of steering `x0` to `y`
/// in time `T`.
#[allow(clippy::too_many_arguments)]
pub fn rate_function(
    sys: &GalerkinSystem,
    model: &NoiseModel,
    x0: &DVector<f64>,
    y: &DVector<f64>,
    horizon: f64,
    opts: &SolverOptions,
    schedule: &PenaltySchedule,
    seed: u64,
) -> Result<RateEstimate> {
    opts.validate()?;
    if schedule.stages == 0 || !(schedule.initial > 0.0) || !(schedule.factor >= 1.0) {
        return Err(Error::config("penalty", "need stages >= 1, initial > 0, factor >= 1"));
    }
    if y.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "target has length {}, system dimension is {}",
            y.len(),
            sys.dim()
        )));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::config("target", "must be finite"));
    }
    let stepper = Stepper::new(sys, model, horizon, opts.intervals, opts.substeps)?;
    let tolerance = 1e-3 * (1.0 + y.norm());
    let mut current = ControlPath::zeros(horizon, opts.intervals, model.dim());
    let mut stages = Vec::with_capacity(schedule.stages);
    let mut last = None;
    let mut mu = schedule.initial;
    for stage in 0..schedule.stages {
        let restarts = if stage == 0 { opts.restarts } else { 1 };
        let (best, _) = multi_start(
            &stepper,
            model,
            x0,
            || Terminal::Penalty { target: y, mu },
            &current,
            opts,
            restarts,
            seed,
        )?;
        let mismatch = (&best.terminal - y).norm();
        stages.push(StageRow {
            mu,
            cost: best.cost,
            mismatch,
            converged: best.converged,
        });
        current = best.control.clone();
        last = Some(best);
        mu *= schedule.factor;
    }
    let best = last.expect("at least one stage");
    let mismatch = (&best.terminal - y).norm();
    let valid = mismatch <= tolerance;
    let stagnated = stages.len() >= 2 && mismatch > 0.5 * stages[0].mismatch;
    let value = if !valid && (stagnated || best.cost > schedule.cost_cap) {
        Extended::PlusInfinity
    } else {
        Extended::Finite(best.cost)
    };
    Ok(RateEstimate {
        value,
        cost: best.cost,
        mismatch,
        tolerance,
        valid,
        converged: best.converged,
        stages,
        control: best.control,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::inverse_g;
    use crate::numerics::integrate;
    use crate::system::{build_wave_system, DiffusionMap, DriftMap, ScalarFn};
    use nalgebra::DMatrix;

    fn scalar(a: f64) -> GalerkinSystem {
        GalerkinSystem::generic(DMatrix::from_element(1, 1, a), DriftMap::Zero, DiffusionMap::Identity).unwrap()
    }

    fn cp(q: Vec<f64>) -> NoiseModel {
        NoiseModel::compound_poisson(q).unwrap()
    }

    fn quick() -> SolverOptions {
        SolverOptions {
            intervals: 8,
            substeps: 4,
            restarts: 3,
            ..Default::default()
        }
    }

    #[test]
    fn state_solve_closed_forms() {
        let x0 = DVector::from_element(1, 0.5);
        let u = ControlPath::constant(1.0, 4, DVector::from_element(1, 1.0));
        let tr = solve_state(&scalar(0.0), &cp(vec![1.0]), &x0, &u, 8).unwrap();
        assert!((tr.terminal()[0] - 1.5).abs() < 1e-14);
        let zero = ControlPath::zeros(1.0, 4, 1);
        let tr = solve_state(&scalar(1.0), &cp(vec![1.0]), &x0, &zero, 8).unwrap();
        assert!((tr.terminal()[0] - 0.5 * (-1f64).exp()).abs() < 1e-14);
        let wave = build_wave_system(4, ScalarFn::Zero);
        let x0 = wave.wave_state(&[1.0, 0.5, -0.2, 0.1], &[0.0, 0.3, 0.2, -0.4]);
        let tr = solve_state(&wave, &cp(vec![1.0; 4]), &x0, &ControlPath::zeros(2.0, 8, 4), 16).unwrap();
        assert!(tr.states.iter().all(|s| (s.norm() - x0.norm()).abs() < 1e-10));
    }

    #[test]
    fn running_cost_closed_form() {
        let model = cp(vec![1.0]);
        let u = ControlPath::constant(1.0, 7, DVector::from_element(1, 0.5f64.exp()));
        assert!((u.cost(&model).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ControlPath::zeros(1.0, 3, 2).cost(&model).unwrap(), 0.0);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let sys = GalerkinSystem::generic(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.4, 0.5]),
            DriftMap::Linear(DMatrix::from_row_slice(2, 2, &[0.1, -0.2, 0.3, 0.0])),
            DiffusionMap::Modulated {
                base: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.7]),
                amplitude: 0.3,
                direction: DVector::from_vec(vec![0.5, -1.0]),
            },
        )
        .unwrap();
        let model = cp(vec![1.0, 0.5]);
        let g = TerminalCost::Bump {
            amplitude: 0.8,
            center: vec![0.3, -0.2],
            width: 0.7,
        };
        let x0 = DVector::from_vec(vec![0.2, 0.1]);
        let stepper = Stepper::new(&sys, &model, 1.0, 3, 5).unwrap();
        let problem = Problem {
            stepper: &stepper,
            model: &model,
            x0: &x0,
            terminal: Terminal::Payoff(&g),
            horizon: 1.0,
            dim: 2,
            cache: RefCell::new(None),
            best: RefCell::new(None),
        };
        let w = vec![0.3, -0.1, 0.0, 0.2, -0.5, 0.4];
        let e = problem.evaluate(&w).unwrap();
        for i in 0..w.len() {
            let (mut a, mut b) = (w.clone(), w.clone());
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (problem.evaluate(&a).unwrap().objective - problem.evaluate(&b).unwrap().objective) / 2e-6;
            assert!((fd - e.gradient[i]).abs() < 1e-7, "component {i}: {fd} vs {}", e.gradient[i]);
        }
    }

    #[test]
    fn constant_payoff_needs_no_control() {
        let g = TerminalCost::Constant { c: 0.4 };
        let sol = maximize_value(&scalar(1.0), &cp(vec![1.0]), &g, &DVector::zeros(1), 1.0, &quick(), 0).unwrap();
        assert_eq!(sol.value, 0.4);
        assert!(sol.control.values.iter().all(|w| w.norm() < 1e-12));
        assert!(sol.within_cap);
    }

    #[test]
    fn linear_payoff_value_and_young_equality() {
        let model = cp(vec![1.0]);
        let p = 0.5;
        let g = TerminalCost::Linear { p: vec![p] };
        let x0 = DVector::from_element(1, 0.3);
        let sol = maximize_value(&scalar(0.0), &model, &g, &x0, 1.0, &quick(), 1).unwrap();
        let exact = p * 0.3 + model.h0(&[p]).unwrap();
        assert!((sol.value - exact).abs() < 1e-9 * exact.abs(), "{} vs {exact}", sol.value);
        for w in &sol.control.values {
            let young = p * w[0] - model.radial_l(w[0].abs()).unwrap();
            assert!((young - model.h0(&[p]).unwrap()).abs() < 1e-9);
            // maximizer of p w - l(|w|) is w = h'(p) = p e^{p^2/2}
            assert!((w[0] - p * (p * p / 2.0).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn decaying_system_matches_adjoint_reduction() {
        let model = cp(vec![1.0]);
        let p = 0.8;
        let g = TerminalCost::Linear { p: vec![p] };
        let x0 = DVector::from_element(1, 1.0);
        let opts = SolverOptions {
            intervals: 32,
            substeps: 16,
            restarts: 2,
            ..Default::default()
        };
        let sol = maximize_value(&scalar(1.0), &model, &g, &x0, 1.0, &opts, 2).unwrap();
        // the discrete optimum, interval by interval
        let h = 1.0 / 512.0;
        let mut discrete = p * (-1f64).exp() * x0[0];
        for j in 0..32 {
            let avg: f64 = (0..16)
                .map(|s| {
                    let k = j * 16 + s;
                    h * (-(1.0 - k as f64 * h)).exp()
                })
                .sum::<f64>()
                * 32.0;
            discrete += model.h0(&[p * avg]).unwrap() / 32.0;
        }
        assert!((sol.value - discrete).abs() < 1e-8, "{} vs {discrete}", sol.value);
        let continuous = p * (-1f64).exp()
            + integrate(|s| model.h0(&[p * (-(1.0 - s)).exp()]).unwrap(), &[0.0, 1.0], 1e-12, 1e-12).unwrap();
        assert!((sol.value - continuous).abs() < 1e-3 * continuous);
    }

    #[test]
    fn rate_function_oracles() {
        let model = cp(vec![1.0]);
        let sys = scalar(0.0);
        let x0 = DVector::from_element(1, 0.2);
        let opts = SolverOptions {
            restarts: 2,
            ..quick()
        };
        let sched = PenaltySchedule::default();
        let free = rate_function(&sys, &model, &x0, &x0, 1.0, &opts, &sched, 0).unwrap();
        assert!(free.value.to_f64() < 1e-6 && free.valid);
        let y = DVector::from_element(1, 0.2 + 0.5f64.exp());
        let r = rate_function(&sys, &model, &x0, &y, 1.0, &opts, &sched, 0).unwrap();
        assert!(r.valid, "{r:?}");
        assert!((r.value.to_f64() - 1.0).abs() < 1e-3, "{:?}", r.value);
        let f = inverse_g(0.5f64.exp());
        assert!((f - 1.0).abs() < 1e-12);
        for w in &r.control.values {
            assert!((w[0] - 0.5f64.exp()).abs() < 1e-2);
        }
    }

    #[test]
    fn kernel_direction_is_unreachable() {
        let model = cp(vec![1.0, 0.0]);
        let sys = GalerkinSystem::generic(DMatrix::zeros(2, 2), DriftMap::Zero, DiffusionMap::Identity).unwrap();
        let x0 = DVector::zeros(2);
        let y = DVector::from_vec(vec![0.5, 0.3]);
        let r = rate_function(&sys, &model, &x0, &y, 1.0, &quick(), &PenaltySchedule::default(), 0).unwrap();
        assert_eq!(r.value, Extended::PlusInfinity);
        assert!(!r.valid);
    }
}
