//! Subcommands. Each returns a [`Report`]; writing files is left to the caller.

use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use meanfield_core::constants::{constants_report, correlation_bound, lsi_lower_bound, ConstantsOptions, ConstantsReport, QuadratureOptions};
use meanfield_core::meanfield::{
    evolve_and_trace, find_fixed_points, solve_invariant, ChaosOptions, EvolveOptions, GridMeasure, InvariantOptions, InvariantSolution,
    IterationRecord,
};
use meanfield_core::particles::{estimate_spectral_gap, sample_covariance, sample_mala, sample_ula, GapOptions, GibbsSampleSet, MalaOptions, Observable};
use meanfield_core::potentials::{MeanFieldModel, ProfileQuality};
use meanfield_core::Error;
use serde_json::Value;

use crate::config::{initial_measure, ExperimentConfig, InitKind, ObservableKind, SamplerKind};
use crate::output::{num, opt_num, Cell, Report, Table};
use crate::{parallel, verify};

/// Separation in `W_1` below which two fixed points count as the same.
const FIXED_POINT_SEPARATION: f64 = 1e-6;

/// Tolerance on observed contraction factors above `gamma0`.
pub const CONTRACTION_SLACK: f64 = 5e-3;

/// Tolerance of the discrete free-energy dissipation check.
pub const DISSIPATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Constants,
    Sample,
    Invariant,
    Evolve,
    Chaos,
    Verify,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Sample => "sample",
            Command::Invariant => "invariant",
            Command::Evolve => "evolve",
            Command::Chaos => "chaos",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

impl FromStr for Command {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        <Command as clap::ValueEnum>::from_str(s, false).map_err(|_| anyhow!("unknown command `{s}`"))
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Report> {
    let report = match command {
        Command::Constants => run_constants(cfg),
        Command::Sample => run_sample(cfg),
        Command::Invariant => run_invariant(cfg),
        Command::Evolve => run_evolve(cfg),
        Command::Chaos => run_chaos(cfg),
        Command::Verify => run_verify(cfg),
        Command::Sweep => run_sweep(cfg),
    };
    report.with_context(|| format!("{} failed", command.name()))
}

fn quality_name(q: ProfileQuality) -> &'static str {
    match q {
        ProfileQuality::Exact => "exact",
        ProfileQuality::UpperBound => "upper_bound",
        ProfileQuality::Approximate => "approximate",
    }
}

fn constants_options(cfg: &ExperimentConfig) -> ConstantsOptions {
    ConstantsOptions { quadrature: QuadratureOptions { abs_tol: cfg.constants.quadrature_tol, ..Default::default() }, ..Default::default() }
}

fn constants_for(cfg: &ExperimentConfig, model: &MeanFieldModel, n: usize, rho_lsm: Option<f64>) -> Result<ConstantsReport> {
    Ok(constants_report(model, n, rho_lsm, &constants_options(cfg))?)
}

fn model_summary(report: &mut Report, cfg: &ExperimentConfig) {
    report.set("model", cfg.model.family.clone());
    report.set("params", Value::Array(cfg.model.params.iter().map(|&p| num(p)).collect()));
}

pub fn run_constants(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model.build()?;
    let c = &cfg.constants;
    let k = constants_for(cfg, &model, c.n, c.rho_lsm)?;
    let mut r = Report::new("constants");
    model_summary(&mut r, cfg);
    r.set("n", k.n);
    r.set("c_lip_m", num(k.c_lip_m));
    r.set("profile_quality", quality_name(k.profile_quality));
    r.set("lambda_1m_bound", num(k.lambda_1m_bound));
    r.set("h", num(k.h.value));
    r.set("h_quality", quality_name(k.h.quality));
    r.set("poincare_bound", num(k.poincare.value));
    r.set("poincare_vacuous", k.poincare.vacuous);
    r.set("cross_hessian_norm", num(k.cross_hessian_norm.value));
    r.set("cross_hessian_quality", quality_name(k.cross_hessian_norm.quality));
    r.set("gamma0", num(k.gamma0));
    r.set("zegarlinski_condition", k.gamma0 < 1.0);
    r.set("rho_lsm", opt_num(k.rho_lsm));
    r.set("lsi_bound", opt_num(k.lsi_bound));
    r.set("correlation_constant", opt_num(k.correlation_constant));
    let corr = correlation_bound(k.c_lip_m, k.h.value, k.n, c.lip_f, c.lip_g).ok();
    r.set("correlation_bound", opt_num(corr));
    Ok(r)
}

fn observable_for(kind: ObservableKind, model: &MeanFieldModel) -> Observable {
    match kind {
        ObservableKind::Auto => Observable::slowest_for(model),
        ObservableKind::Magnetization => Observable::Magnetization,
        ObservableKind::Difference => Observable::Difference { first: 0, second: 1, axis: 0 },
    }
}

fn observable_name(o: Observable) -> String {
    match o {
        Observable::Magnetization => "magnetization".into(),
        Observable::Coordinate { particle, axis } => format!("x{particle}[{axis}]"),
        Observable::Difference { first, second, axis } => format!("x{first}[{axis}]-x{second}[{axis}]"),
    }
}

pub fn run_sample(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model.build()?;
    let s = &cfg.sample;
    let opts = MalaOptions { samples: s.samples, dt: s.dt, burn_in: s.burn_in, thin: s.thin, seed: cfg.seed, stream: 0, init: None };
    let set = match s.sampler {
        SamplerKind::Mala => sample_mala(&model, s.n, &opts)?,
        SamplerKind::Ula => sample_ula(&model, s.n, &opts)?,
    };
    let cov = sample_covariance(&set);
    let mut r = Report::new("sample");
    model_summary(&mut r, cfg);
    r.set("n", s.n);
    r.set("dim", model.dim);
    r.set("sampler", if s.sampler == SamplerKind::Mala { "mala" } else { "ula" });
    r.set("samples", set.len());
    r.set("acceptance_rate", opt_num(set.acceptance_rate));
    r.set("min_ess", num(cov.min_ess));
    let mut table = Table::new("covariance", &["i", "j", "mean_i", "covariance", "standard_error"]);
    for i in 0..cov.size {
        for j in i..cov.size {
            let k = i * cov.size + j;
            table.push(vec![i.into(), j.into(), cov.mean[i].into(), cov.covariance[k].into(), cov.standard_errors[k].into()]);
        }
    }
    r.tables.push(table);
    if s.dump {
        r.tables.push(samples_table(&set, s.dt, s.thin));
    }
    if s.gap {
        let observable = observable_for(s.observable, &model);
        let gap_opts = GapOptions { dt: s.gap_dt, duration: s.gap_duration, seed: cfg.seed, ..Default::default() };
        let est = estimate_spectral_gap(&model, s.n, observable, &gap_opts)?;
        let bound = constants_for(cfg, &model, s.n, None)?.poincare;
        r.set("observable", observable_name(observable));
        r.set("relaxation_rate", num(est.rate));
        r.set("relaxation_rate_ci_low", num(est.ci.0));
        r.set("relaxation_rate_ci_high", num(est.ci.1));
        r.set("poincare_bound", num(bound.value));
        // Every mode relaxes at least as fast as the spectral gap.
        r.check("rate_above_poincare_bound", bound.vacuous || est.ci.1 >= bound.value);
    }
    Ok(r)
}

/// One row per particle per kept configuration. `step` counts sampler
/// iterations after burn-in and `time` is `step * dt`.
fn samples_table(set: &GibbsSampleSet, dt: f64, thin: usize) -> Table {
    let mut header = vec!["step".to_string(), "time".into(), "particle".into()];
    header.extend((0..set.dim).map(|k| format!("coord_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new("samples", &header);
    for s in 0..set.len() {
        let step = s * thin;
        for (i, x) in set.configuration(s).chunks(set.dim).enumerate() {
            let mut row = vec![step.into(), (step as f64 * dt).into(), i.into()];
            row.extend(x.iter().map(|&v| Cell::from(v)));
            t.push(row);
        }
    }
    t
}

fn history_table(name: &str, history: &[IterationRecord]) -> Table {
    let mut t = Table::new(name, &["iteration", "residual_l1", "w1_step", "factor"]);
    for h in history {
        t.push(vec![h.iteration.into(), h.residual_l1.into(), h.w1_step.into(), h.factor.into()]);
    }
    t
}

/// The invariant measure: unique and certified when `gamma0 < 1`, otherwise
/// all fixed points reached from the symmetric and tilted starts.
pub struct InvariantOutcome {
    pub gamma0: f64,
    pub solutions: Vec<InvariantSolution>,
    /// Set when the certified iteration failed to converge.
    pub failure: Option<(usize, f64, Vec<IterationRecord>)>,
}

pub fn invariant_measures(cfg: &ExperimentConfig, model: &MeanFieldModel) -> Result<InvariantOutcome> {
    let grid = cfg.grid.build_for(model)?;
    let gamma0 = constants_for(cfg, model, 2, None)?.gamma0;
    let inv = &cfg.invariant;
    let init = match inv.init {
        InitKind::Reference => None,
        InitKind::Gaussian => Some(initial_measure(inv.init, inv.init_mean, inv.init_variance, model, grid, None)?),
        InitKind::Invariant => bail!("invariant.init cannot be `invariant`"),
    };
    let opts = InvariantOptions { tol: inv.tol, max_iter: inv.max_iter, init, gamma0: Some(gamma0) };
    if gamma0 < 1.0 {
        return match solve_invariant(model, grid, &opts) {
            Ok(sol) => Ok(InvariantOutcome { gamma0, solutions: vec![sol], failure: None }),
            Err(Error::NoConvergence { iterations, residual, history }) => {
                Ok(InvariantOutcome { gamma0, solutions: Vec::new(), failure: Some((iterations, residual, history)) })
            }
            Err(e) => Err(e.into()),
        };
    }
    let solutions = find_fixed_points(model, grid, &opts, inv.tilt, FIXED_POINT_SEPARATION)?;
    Ok(InvariantOutcome { gamma0, solutions, failure: None })
}

pub fn run_invariant(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model.build()?;
    let out = invariant_measures(cfg, &model)?;
    let mut r = Report::new("invariant");
    model_summary(&mut r, cfg);
    r.set("gamma0", num(out.gamma0));
    r.set("certified", out.gamma0 < 1.0);
    if let Some((iterations, residual, history)) = &out.failure {
        r.set("iterations", *iterations);
        r.set("residual_l1", num(*residual));
        r.tables.push(history_table("history", history));
        r.check("converged", false);
        return Ok(r);
    }
    r.check("converged", !out.solutions.is_empty());
    r.set("fixed_points", out.solutions.len());
    r.set("means", Value::Array(out.solutions.iter().map(|s| num(s.measure.mean())).collect()));
    if let Some(first) = out.solutions.first() {
        r.set("iterations", first.history.len());
        r.set("residual_l1", num(first.history.last().map_or(f64::NAN, |h| h.residual_l1)));
        r.set("max_factor", opt_num(first.max_factor()));
        if out.gamma0 < 1.0 {
            let worst = first.max_factor().unwrap_or(0.0);
            r.check("contraction_check", worst <= out.gamma0 + CONTRACTION_SLACK);
        }
        r.tables.push(history_table("history", &first.history));
        let grid = first.measure.grid;
        let mut header: Vec<String> = vec!["x_center".into()];
        header.extend((0..out.solutions.len()).map(|k| if k == 0 { "density".into() } else { format!("density_{k}") }));
        let mut t = Table { name: "measure".into(), header, rows: Vec::new() };
        for i in 0..grid.n_cells {
            let mut row = vec![Cell::Float(grid.center(i))];
            row.extend(out.solutions.iter().map(|s| Cell::Float(s.measure.density[i])));
            t.push(row);
        }
        r.tables.push(t);
    }
    Ok(r)
}

pub fn run_evolve(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model.build()?;
    let out = invariant_measures(cfg, &model)?;
    let nu_inf: GridMeasure = out.solutions.first().map(|s| s.measure.clone()).ok_or_else(|| anyhow!("no invariant measure found"))?;
    let e = &cfg.evolve;
    let nu0 = initial_measure(e.init, e.init_mean, e.init_variance, &model, nu_inf.grid, Some(&nu_inf))?;
    let rho_ls = match (e.rho_ls, e.rho_lsm) {
        (Some(rho), _) => Some(rho),
        (None, Some(rho_lsm)) => Some(lsi_lower_bound(rho_lsm, out.gamma0)?),
        (None, None) => None,
    };
    let certified = out.gamma0 < 1.0;
    let opts = EvolveOptions { t_end: e.t_end, dt: e.dt, record_every: e.record_every, rho_ls, slack: e.slack, certified };
    let trace = evolve_and_trace(&model, &nu0, &nu_inf, &opts)?;
    let mut r = Report::new("evolve");
    model_summary(&mut r, cfg);
    r.set("gamma0", num(out.gamma0));
    r.set("certified", certified);
    r.set("rho_ls", opt_num(rho_ls));
    r.set("h_w_initial", num(trace.points[0].h_w));
    r.set("max_free_energy_increase", num(trace.max_free_energy_increase));
    r.set("max_mass_correction", num(trace.max_mass_correction));
    if let Some(fit) = trace.fitted_rate {
        r.set("fitted_rate", num(fit.rate));
        r.set("fit_t_start", num(fit.t_start));
        r.set("fit_t_end", num(fit.t_end));
        r.set("fit_points", fit.points);
        if let Some(rho) = rho_ls {
            r.check("rate_check", fit.rate >= 0.5 * rho);
        }
    } else {
        r.set("fitted_rate", Value::Null);
    }
    r.check("free_energy_dissipation", trace.max_free_energy_increase <= DISSIPATION_TOLERANCE);
    if rho_ls.is_some() {
        r.check("bound_checks", trace.all_checks_pass());
    }
    let mut t = Table::new("trace", &["t", "H_W", "I_W", "W2", "E_f", "lsi_check", "t2_check", "decay_check", "mean", "variance"]);
    for p in &trace.points {
        t.push(vec![
            p.t.into(),
            p.h_w.into(),
            p.i_w.into(),
            p.w2.into(),
            p.e_f.into(),
            p.lsi_check.into(),
            p.t2_check.into(),
            p.decay_check.into(),
            p.mean.into(),
            p.variance.into(),
        ]);
    }
    r.tables.push(t);
    Ok(r)
}

pub fn run_chaos(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model.build()?;
    let grid = cfg.grid.build_for(&model)?;
    let c = &cfg.chaos;
    let nu0 = match c.init {
        InitKind::Invariant => invariant_measures(cfg, &model)?.solutions.first().map(|s| s.measure.clone()).ok_or_else(|| anyhow!("no invariant measure found"))?,
        kind => initial_measure(kind, c.init_mean, c.init_variance, &model, grid, None)?,
    };
    let opts = ChaosOptions { ns: c.ns.clone(), t_end: c.t_end, dt: c.dt, pde_dt: c.pde_dt, pooled_samples: c.pooled_samples, seed: cfg.seed };
    let table = parallel::chaos_check(&model, &nu0, &opts)?;
    let mut r = Report::new("chaos");
    model_summary(&mut r, cfg);
    r.set("t_end", num(c.t_end));
    let mut t = Table::new("chaos", &["n", "replicas", "samples", "w2", "noise_floor"]);
    for row in &table.rows {
        t.push(vec![row.n.into(), row.replicas.into(), row.samples.into(), row.w2.into(), row.noise_floor.into()]);
    }
    r.tables.push(t);
    r.check("decreasing", table.decreasing());
    Ok(r)
}

pub fn run_verify(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("verify");
    let mut t = Table::new("verify", &["criterion", "title", "passed", "detail"]);
    for &id in &cfg.verify.criteria {
        let outcome = verify::run_criterion(id, cfg.seed)?;
        println!("{} {:>2} {}: {}", if outcome.passed { "PASS" } else { "FAIL" }, id, outcome.title, outcome.detail);
        t.push(vec![(id as usize).into(), outcome.title.into(), outcome.passed.into(), outcome.detail.clone().into()]);
        r.check(&format!("criterion_{id:02}"), outcome.passed);
    }
    r.tables.push(t);
    Ok(r)
}

/// Cartesian product of the sweep axes, in row-major order.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<Vec<toml::Value>> {
    cfg.sweep.axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect()
    })
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let command: Command = cfg.sweep.command.parse()?;
    if matches!(command, Command::Sweep | Command::Verify) {
        bail!("sweep.command must be constants, sample, invariant, evolve or chaos");
    }
    let points = sweep_points(cfg);
    let configs: Vec<ExperimentConfig> = points
        .iter()
        .map(|values| {
            cfg.sweep.axes.iter().zip(values).try_fold(cfg.clone(), |c, (axis, v)| c.with_override(&axis.key, v))
        })
        .collect::<Result<_>>()?;
    let reports: Vec<Result<Report>> = parallel::map_ordered(&configs, |c| run(command, c));
    let reports: Vec<Report> = reports.into_iter().collect::<Result<_>>()?;
    let mut keys: Vec<String> = Vec::new();
    for rep in &reports {
        for (k, v) in &rep.summary {
            if !v.is_array() && !v.is_object() && !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    keys.sort();
    let mut header: Vec<&str> = cfg.sweep.axes.iter().map(|a| a.key.as_str()).collect();
    header.push("passed");
    header.extend(keys.iter().map(String::as_str));
    let mut t = Table::new("sweep", &header);
    for (values, rep) in points.iter().zip(&reports) {
        let mut row: Vec<Cell> = values.iter().map(|v| Cell::Text(toml_scalar(v))).collect();
        row.push(rep.passed.into());
        row.extend(keys.iter().map(|k| rep.summary.get(k).map_or(Cell::Empty, |v| Cell::Text(crate::output::render_json_scalar(v)))));
        t.push(row);
    }
    let mut r = Report::new("sweep");
    r.set("sweep_command", command.name());
    r.set("points", points.len());
    r.check("all_points_pass", reports.iter().all(|rep| rep.passed));
    r.tables.push(t);
    Ok(r)
}

fn toml_scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::Float(x) => crate::output::format_float(*x),
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points_form_the_cartesian_product() {
        let cfg = ExperimentConfig::parse(
            "[sweep]\ncommand = \"constants\"\n[[sweep.axes]]\nkey = \"constants.n\"\nvalues = [2, 3, 4]\n[[sweep.axes]]\nkey = \"model.params.0\"\nvalues = [0.5, 1.0]\n",
        )
        .unwrap();
        let points = sweep_points(&cfg);
        assert_eq!(points.len(), 6);
        assert_eq!(points[1], vec![toml::Value::Integer(2), toml::Value::Float(1.0)]);
    }

    #[test]
    fn commands_parse_by_name() {
        assert_eq!("evolve".parse::<Command>().unwrap(), Command::Evolve);
        assert!("plot".parse::<Command>().is_err());
    }
}
