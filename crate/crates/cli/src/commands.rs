//! Subcommand implementations. Each writes its JSON result and any CSV files
//! through the [`Sink`].

use jumpld_core::control::{maximize_value, rate_function, SolverOptions};
use jumpld_core::experiments::{self, Experiment, RunOptions};
use jumpld_core::laplace::{continuity_suite, curve_spread, exp_moment_curve, laplace_functional, ContinuityCaps};
use jumpld_core::noise::{NoiseModel, NoiseSpec, Variant};
use jumpld_core::report::{Check, Report};
use jumpld_core::simulate::{simulate_mild, Scheme};
use jumpld_core::system::check_structural;
use jumpld_core::verify::{
    hjb_residual, laplace_limit_convergence, ldp_probability_check, legendre_duality_suite, yosida_convergence_suite,
    Axis, LdpOptions, ValueTable,
};
use serde_json::json;

use crate::config::{resolve_state, Config};
use crate::error::{CliError, CliResult};
use crate::output::{gap_vs_n, header, indexed_header, rate_vs_target, residual_heatmap, Sink};

/// Laplace estimates below this sample count are refused.
pub const MIN_LAPLACE_SAMPLES: u64 = 1000;

/// Bound on the spread of the exponential-moment curve across `ns`.
const SPREAD_TOLERANCE: f64 = 0.5;

pub struct Ctx<'a> {
    pub config: &'a Config,
    pub seed: u64,
    pub samples: Option<u64>,
}

impl Ctx<'_> {
    fn samples(&self, default: u64) -> u64 {
        self.samples.or(self.config.samples).unwrap_or(default)
    }
}

fn finish(report: &Report) -> CliResult<()> {
    if report.pass() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::ChecksFailed(format!("{}: {}", report.name, names.join(", "))))
    }
}

pub fn noise_table(ctx: &Ctx, sink: &mut Sink) -> CliResult<()> {
    let model = ctx.config.noise_model("noise-table")?;
    let grid = ctx.config.noise_table.unwrap_or(crate::config::NoiseTable {
        s_max: 10.0,
        points: 101,
    });
    if grid.points < 2 || !(grid.s_max > 0.0) {
        return Err(CliError::Schema("`noise_table`: need points >= 2 and s_max > 0".into()));
    }
    let mut rows = Vec::with_capacity(grid.points);
    for i in 0..grid.points {
        let r = grid.s_max * i as f64 / (grid.points - 1) as f64;
        rows.push(vec![
            r,
            model.radial_h(r)?,
            model.radial_h_prime(r)?,
            model.radial_l(r)?,
            model.l0_prime_radial(r)?,
        ]);
    }
    sink.csv("noise_table.csv", &header(&["r", "h", "h_prime", "l", "l_prime"]), rows)?;
    sink.json(
        "noise_table.json",
        "noise-table",
        &json!({"points": grid.points, "s_max": grid.s_max, "variant": model.variant()}),
    )
}

pub fn simulate(ctx: &Ctx, sink: &mut Sink) -> CliResult<()> {
    let c = ctx.config;
    let (sys, model) = (c.system("simulate")?, c.noise_model("simulate")?);
    let x0 = c.state("x0", c.x0.as_ref(), &sys, "simulate")?;
    let (n, horizon) = (c.scaling("simulate")?, c.horizon("simulate")?);
    let scheme = Scheme::new(horizon, c.steps(horizon)?);
    let count = ctx.samples.or(c.trajectories).unwrap_or(1);
    let mut summary = Vec::new();
    for i in 0..count {
        let tr = simulate_mild(&sys, &model, &x0, n, scheme, ctx.seed, i)?;
        sink.csv(
            &format!("trajectory_{i}.csv"),
            &indexed_header("t", "x", sys.dim()),
            tr.times.iter().zip(&tr.states).map(|(t, x)| {
                let mut row = vec![*t];
                row.extend(x.iter());
                row
            }),
        )?;
        summary.push(json!({
            "sample_index": i,
            "grid_points": tr.times.len(),
            "sup_norm": tr.sup_norm(),
            "terminal": tr.terminal().as_slice(),
        }));
    }
    sink.json("simulate.json", "simulate", &json!({"n": n, "horizon": horizon, "steps": scheme.steps, "trajectories": summary}))
}

pub fn laplace(ctx: &Ctx, sink: &mut Sink) -> CliResult<()> {
    let c = ctx.config;
    let (sys, model) = (c.system("laplace")?, c.noise_model("laplace")?);
    let g = c.payoff("laplace", sys.dim())?;
    let x0 = c.state("x0", c.x0.as_ref(), &sys, "laplace")?;
    let (n, horizon) = (c.scaling("laplace")?, c.horizon("laplace")?);
    let samples = ctx.samples(10_000);
    if samples < MIN_LAPLACE_SAMPLES {
        return Err(CliError::Schema(format!("`samples`: need at least {MIN_LAPLACE_SAMPLES}")));
    }
    let scheme = Scheme::new(horizon, c.steps(horizon)?);
    let est = laplace_functional(&sys, &model, &g, &x0, n, scheme, samples, ctx.seed)?;
    sink.json("laplace.json", "laplace", &est)
}

fn solver(c: &Config) -> SolverOptions {
    c.solver.unwrap_or_default()
}

fn control_csv(sink: &mut Sink, name: &str, control: &jumpld_core::control::ControlPath) -> CliResult<()> {
    sink.csv(
        name,
        &indexed_header("t", "w", control.dim()),
        control.values.iter().enumerate().map(|(j, w)| {
            let mut row = vec![control.start(j)];
            row.extend(w.iter());
            row
        }),
    )
}

pub fn value(ctx: &Ctx, sink: &mut Sink) -> CliResult<()> {
    let c = ctx.config;
    let (sys, model) = (c.system("value")?, c.noise_model("value")?);
    let g = c.payoff("value", sys.dim())?;
    let x0 = c.state("x0", c.x0.as_ref(), &sys, "value")?;
    let horizon = c.horizon("value")?;
    let sol = maximize_value(&sys, &model, &g, &x0, horizon, &solver(c), ctx.seed)?;
    control_csv(sink, "control.csv", &sol.control)?;
    sink.json(
        "value.json",
        "value",
        &json!({
            "value": sol.value,
            "cost": sol.cost,
            "terminal_payoff": sol.terminal_payoff,
            "converged": sol.converged,
            "gradient_norm": sol.gradient_norm,
            "restarts_converged": sol.restarts_converged,
            "cost_cap": sol.cost_cap,
            "within_cap": sol.within_cap,
        }),
    )
}

pub fn rate(ctx: &Ctx, sink: &mut Sink) -> CliResult<()> {
    let c = ctx.config;
    let (sys, model) = (c.system("rate")?, c.noise_model("rate")?);
    let x0 = c.state("x0", c.x0.as_ref(), &sys, "rate")?;
    let y = c.state("target", c.target.as_ref(), &sys, "rate")?;
    let horizon = c.horizon("rate")?;
    let penalty = c.penalty.unwrap_or_default();
    let est = rate_function(&sys, &model, &x0, &y, horizon, &solver(c), &penalty, ctx.seed)?;
    control_csv(sink, "rate_control.csv", &est.control)?;
    sink.json(
        "rate.json",
        "rate",
        &json!({
            "value": est.value,
            "cost": est.cost,
            "mismatch": est.mismatch,
            "tolerance": est.tolerance,
            "valid": est.valid,
            "converged": est.converged,
            "stages": est.stages,
        }),
    )
}

pub const SUITES: [&str; 8] = [
    "legendre",
    "structural",
    "hjb",
    "laplace-limit",
    "yosida",
    "ldp",
    "continuity",
    "exp-moment",
];

pub fn verify(ctx: &Ctx, suite: &str, sink: &mut Sink) -> CliResult<()> {
    let c = ctx.config;
    let cmd = format!("verify {suite}");
    let name = format!("verify_{}.json", suite.replace('-', "_"));
    let report = match suite {
        "legendre" => {
            let model = match &c.noise {
                Some(spec) => NoiseModel::new(spec.clone())?,
                None => NoiseModel::new(NoiseSpec {
                    variant: Variant::CompoundPoissonGaussian,
                    q_spectrum: vec![1.0],
                    rho: None,
                    eps_rho: 1e-3,
                    lambda_max: 16.0,
                })?,
            };
            let mut grid = c.duality.clone().unwrap_or_default();
            grid.seed = ctx.seed;
            if let Some(s) = ctx.samples {
                grid.samples = s as usize;
            }
            let report = legendre_duality_suite(&model, &grid)?;
            sink.json(&name, &cmd, &report)?;
            report
        }
        "structural" => {
            let report = check_structural(&c.system(&cmd)?);
            sink.json(&name, &cmd, &report)?;
            report
        }
        "hjb" => {
            let (sys, model) = (c.system(&cmd)?, c.noise_model(&cmd)?);
            let g = c.payoff(&cmd, sys.dim())?;
            let horizon = c.horizon(&cmd)?;
            let spec = c.table.clone().ok_or_else(|| CliError::missing("table", &cmd))?;
            if spec.time_points < 5 {
                return Err(CliError::Schema("`table.time_points`: need at least 5".into()));
            }
            let table = ValueTable::from_control(
                &sys,
                &model,
                &g,
                horizon,
                Axis::new(0.0, horizon, spec.time_points),
                spec.space,
                &solver(c),
                ctx.seed,
            )?;
            let res = hjb_residual(&sys, &model, &table)?;
            let tol = c.tolerance.unwrap_or(0.05);
            let mut report = Report::new("hjb");
            report.push(Check::at_most("max_residual", res.max_abs, tol).with_ci(res.sigma));
            let points: Vec<_> = res.points.iter().map(|p| (p.t, p.x.clone(), p.residual)).collect();
            residual_heatmap(sink, &points)?;
            sink.json(
                &name,
                &cmd,
                &json!({"report": report, "max_abs": res.max_abs, "sigma": res.sigma, "evaluated": res.evaluated, "excluded": res.excluded}),
            )?;
            report
        }
        "laplace-limit" => {
            let (sys, model) = (c.system(&cmd)?, c.noise_model(&cmd)?);
            let g = c.payoff(&cmd, sys.dim())?;
            let x0 = c.state("x0", c.x0.as_ref(), &sys, &cmd)?;
            let horizon = c.horizon(&cmd)?;
            let table = laplace_limit_convergence(
                &sys,
                &model,
                &g,
                &x0,
                Scheme::new(horizon, c.steps(horizon)?),
                &c.scalings(&cmd)?,
                ctx.samples(100_000),
                ctx.seed,
                &solver(c),
                c.tolerance.unwrap_or(0.05),
            )?;
            let rows: Vec<_> = table.rows.iter().map(|r| (r.n as f64, r.gap, r.estimate.half_width)).collect();
            gap_vs_n(sink, &rows)?;
            sink.json(&name, &cmd, &table)?;
            table.report
        }
        "yosida" => {
            let (sys, model) = (c.system(&cmd)?, c.noise_model(&cmd)?);
            let x0 = c.state("x0", c.x0.as_ref(), &sys, &cmd)?;
            let horizon = c.horizon(&cmd)?;
            let lambdas = c.lambdas.clone().ok_or_else(|| CliError::missing("lambdas", &cmd))?;
            let table = yosida_convergence_suite(
                &sys,
                &model,
                &x0,
                c.scaling(&cmd)?,
                Scheme::new(horizon, c.steps(horizon)?),
                &lambdas,
                ctx.samples(1000),
                ctx.seed,
            )?;
            sink.csv(
                "yosida_gap.csv",
                &header(&["lambda", "gap", "se", "semigroup_gap"]),
                table.rows.iter().map(|r| {
                    vec![r.gap.lambda, r.gap.mean_sq_sup_gap, r.gap.standard_error, r.semigroup_gap]
                }),
            )?;
            sink.json(&name, &cmd, &table)?;
            table.report
        }
        "ldp" => {
            let (sys, model) = (c.system(&cmd)?, c.noise_model(&cmd)?);
            let x0 = c.state("x0", c.x0.as_ref(), &sys, &cmd)?;
            let horizon = c.horizon(&cmd)?;
            let ball = c.ball.clone().ok_or_else(|| CliError::missing("ball", &cmd))?;
            let opts = LdpOptions {
                samples: ctx.samples(1_000_000),
                solver: c.solver.unwrap_or(LdpOptions::default().solver),
                penalty: c.penalty.unwrap_or_default(),
                ..Default::default()
            };
            let table = ldp_probability_check(
                &sys,
                &model,
                &x0,
                Scheme::new(horizon, c.steps(horizon)?),
                &ball,
                &c.scalings(&cmd)?,
                &opts,
                ctx.seed,
            )?;
            sink.csv(
                "ldp_rates.csv",
                &header(&["n", "rate", "ci", "hits"]),
                table.rows.iter().map(|r| vec![r.n as f64, r.empirical_rate, r.ci, r.hits as f64]),
            )?;
            sink.json(&name, &cmd, &table)?;
            table.report
        }
        "continuity" => {
            let (sys, model) = (c.system(&cmd)?, c.noise_model(&cmd)?);
            let horizon = c.horizon(&cmd)?;
            let specs = c.pairs.clone().ok_or_else(|| CliError::missing("pairs", &cmd))?;
            let mut pairs = Vec::with_capacity(specs.len());
            for (i, [a, b]) in specs.iter().enumerate() {
                pairs.push((
                    resolve_state(&format!("pairs[{i}][0]"), a, &sys)?,
                    resolve_state(&format!("pairs[{i}][1]"), b, &sys)?,
                ));
            }
            let res = continuity_suite(
                &sys,
                &model,
                &pairs,
                c.scaling(&cmd)?,
                Scheme::new(horizon, c.steps(horizon)?),
                ctx.samples(1000),
                ctx.seed,
                ContinuityCaps::default(),
            )?;
            sink.json(&name, &cmd, &res)?;
            res.report
        }
        "exp-moment" => {
            let (sys, model) = (c.system(&cmd)?, c.noise_model(&cmd)?);
            let x0 = c.state("x0", c.x0.as_ref(), &sys, &cmd)?;
            let horizon = c.horizon(&cmd)?;
            let c1 = c.c1.ok_or_else(|| CliError::missing("c1", &cmd))?;
            let curve = exp_moment_curve(
                &sys,
                &model,
                &x0,
                Scheme::new(horizon, c.steps(horizon)?),
                &c.scalings(&cmd)?,
                c1,
                ctx.samples(10_000),
                ctx.seed,
            )?;
            let mut report = Report::new("exp-moment");
            report.push(Check::at_most("spread", curve_spread(&curve), SPREAD_TOLERANCE));
            sink.json(&name, &cmd, &json!({"report": report, "curve": curve}))?;
            report
        }
        other => {
            return Err(CliError::Schema(format!(
                "unknown suite `{other}`; expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    finish(&report)
}

pub fn repro(id: &str, seed: u64, samples: Option<u64>, sink: &mut Sink) -> CliResult<()> {
    let exp = Experiment::from_id(id).ok_or_else(|| {
        let ids: Vec<&str> = Experiment::ALL.iter().map(|e| e.id()).collect();
        CliError::Schema(format!("unknown experiment `{id}`; expected one of {}", ids.join(", ")))
    })?;
    let outcome = experiments::run(exp, RunOptions { seed, samples })?;
    emit_plot_data(exp, &outcome.data, sink)?;
    sink.json(&format!("repro_{}.json", id.replace('-', "_")), &format!("repro {id}"), &outcome)?;
    finish(&outcome.report)
}

fn num(v: &serde_json::Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// Plot-ready CSV files for the experiments that have them.
fn emit_plot_data(exp: Experiment, data: &serde_json::Value, sink: &mut Sink) -> CliResult<()> {
    let rows = data["rows"].as_array().cloned().unwrap_or_default();
    match exp {
        Experiment::LinearOracle | Experiment::LaplaceLimit => {
            let table: Vec<_> = rows.iter().map(|r| (num(&r["n"]), num(&r["gap"]), num(&r["ci"]))).collect();
            gap_vs_n(sink, &table)
        }
        Experiment::RateOracle => {
            let table: Vec<_> = rows
                .iter()
                .map(|r| {
                    let rate = r["rate"].get("finite").map_or(f64::INFINITY, num);
                    (num(&r["target"]), rate, num(&r["exact"]))
                })
                .collect();
            rate_vs_target(sink, &table)
        }
        Experiment::PdeResiduals => {
            let pts: Vec<_> = data["heatmap"]
                .as_array()
                .cloned()
                .unwrap_or_default()
                .iter()
                .map(|p| {
                    let x: Vec<f64> = p["x"].as_array().map(|a| a.iter().map(num).collect()).unwrap_or_default();
                    (num(&p["t"]), x, num(&p["residual"]))
                })
                .collect();
            residual_heatmap(sink, &pts)
        }
        Experiment::LdpBracketing => sink.csv(
            "ldp_rates.csv",
            &header(&["n", "rate", "ci", "hits"]),
            rows.iter()
                .map(|r| vec![num(&r["n"]), num(&r["empirical_rate"]), num(&r["ci"]), num(&r["hits"])]),
        ),
        _ => Ok(()),
    }
}

/// Structural and noise checks without running any simulation.
pub fn validate(ctx: &Ctx, sink: &mut Sink) -> CliResult<()> {
    let c = ctx.config;
    let mut report = Report::new("validate");
    let mut dims = None;
    if c.noise.is_some() {
        let model = c.noise_model("validate")?;
        report.push(Check::at_most("h0_at_zero", model.h0(&vec![0.0; model.dim()])?, 0.0));
        let l = model.l0(&vec![0.0; model.dim()])?.to_f64();
        report.push(Check::at_most("l0_at_zero", l, 0.0));
        dims = Some(model.dim());
    }
    if c.system.is_some() {
        let sys = c.system("validate")?;
        if let Some(d) = dims {
            if d != sys.noise_dim() {
                return Err(CliError::Schema(format!(
                    "`noise.q_spectrum`: G expects {} noise coordinates, found {d}",
                    sys.noise_dim()
                )));
            }
        }
        for check in check_structural(&sys).checks {
            report.push(check);
        }
        if let Some(g) = &c.g {
            g.validate(sys.dim())?;
        }
        if let Some(x0) = &c.x0 {
            resolve_state("x0", x0, &sys)?;
        }
        if let Some(y) = &c.target {
            resolve_state("target", y, &sys)?;
        }
    }
    sink.json("validate.json", "validate", &report)?;
    if report.pass() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::Schema(format!("structural checks failed: {}", names.join(", "))))
    }
}

