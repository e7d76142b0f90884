//! One function per experiment kind. Each takes a resolved configuration
//! and a seed and returns its artifacts plus any failure messages.

use rayon::prelude::*;
use serde_json::Value;

use super::config::{deep_widths, need, ExperimentConfig, ExperimentKind, Network};
use super::emit::{meta_float, Artifact, Cell};
use crate::abstract_gd::{
    decay_fit, groenwall_conclusion_violation, groenwall_conditions, groenwall_random_check, groenwall_simulate, TrainTrace,
};
use crate::activation::Activation;
use crate::deep::{self, DeepParams, DeepSchedule, DeepTrainOptions};
use crate::error::Result;
use crate::linalg;
use crate::operator::{HolderSampling, KernelOperator};
use crate::quadrature::{Domain, QuadratureGrid};
use crate::shallow::{self, derived_seed, ShallowSchedule, TrainOptions};
use crate::spectral1d::{eval_basis, omega, synthesize_target, synthesize_target_with, Parity};

/// Artifacts of one run plus the reasons it failed, if any.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn merge(&mut self, other: Outcome) {
        self.artifacts.extend(other.artifacts);
        self.failures.extend(other.failures);
    }
}

/// Configuration embedded in output headers (the output directory is not
/// part of the result).
fn header(a: &mut Artifact, cfg: &ExperimentConfig, seed: Option<u64>) -> Result<()> {
    let mut embedded = cfg.clone();
    embedded.out = None;
    let kind = need(&cfg.experiment, "experiment")?;
    a.meta("experiment", kind.name());
    if let Some(seed) = seed {
        a.meta("seed", seed);
    }
    a.meta("config", serde_json::to_value(&embedded).map_err(|e| crate::Error::Config(e.to_string()))?);
    Ok(())
}

fn stem(kind: ExperimentKind, seed: Option<u64>, part: Option<&str>) -> String {
    let mut s = kind.name().to_string();
    if let Some(seed) = seed {
        s.push_str(&format!("_seed{seed}"));
    }
    if let Some(part) = part {
        s.push('_');
        s.push_str(part);
    }
    s
}

fn trial_seeds(seed: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|t| derived_seed(seed, "trial", t)).collect()
}

pub(crate) fn run_seeded(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<Outcome> {
    match kind {
        ExperimentKind::NtkEigen => ntk_eigen(cfg),
        ExperimentKind::GpTable => gp_table(cfg),
        ExperimentKind::RateSweep => super::rate::rate_sweep_outcome(cfg),
        _ => {
            let parts: Vec<Outcome> = cfg
                .seeds
                .par_iter()
                .map(|&seed| match kind {
                    ExperimentKind::TrainShallow => train_shallow(cfg, seed),
                    ExperimentKind::TrainDeep => train_deep(cfg, seed),
                    ExperimentKind::NtkConcentration => ntk_concentration(cfg, seed),
                    ExperimentKind::NtkPerturbation => ntk_perturbation(cfg, seed),
                    _ => groenwall_check(cfg, seed),
                })
                .collect::<Result<_>>()?;
            let mut out = Outcome::default();
            for p in parts {
                out.merge(p);
            }
            Ok(out)
        }
    }
}

/// Trains one shallow network of width `m` with the schedule and numerics of
/// `cfg`, which must be resolved for `train-shallow` or `rate-sweep`.
pub fn shallow_run(cfg: &ExperimentConfig, m: usize, seed: u64) -> Result<(TrainTrace, ShallowSchedule)> {
    let (model, sc, nu) = (&cfg.model, &cfg.schedule, &cfg.numerics);
    let s = need(&sc.s, "schedule.s")?;
    let grid = QuadratureGrid::gauss_legendre(need(&nu.grid, "numerics.grid")?)?;
    let target = synthesize_target(
        Domain::Interval1d,
        s,
        need(&nu.target_modes, "numerics.target_modes")?,
        need(&nu.target_margin, "numerics.target_margin")?,
        seed,
    )?;
    let p = shallow::init_shallow(m, seed)?;
    let mut sched = shallow::make_schedule(
        m,
        s,
        need(&sc.c_h, "schedule.c_h")?,
        need(&sc.c_a, "schedule.c_a")?,
        need(&sc.c_gamma, "schedule.c_gamma")?,
    )?;
    if let Some(cap) = sc.gamma_cap {
        sched = sched.with_gamma_cap(cap);
    }
    let opts = TrainOptions {
        activation: need(&model.activation, "model.activation")?,
        modes: need(&nu.modes, "numerics.modes")?,
        record_residuals: false,
    };
    let (trace, _) = shallow::train_shallow(&p, &target, &sched, &grid, need(&sc.max_steps, "schedule.max_steps")?, &opts)?;
    Ok((trace, sched))
}

const TRACE_COLUMNS: [&str; 7] = ["step", "loss0_sq", "loss_s_sq", "weight_dist", "grad_scaled", "residual_l1", "threshold_flag"];

fn trace_row(r: &crate::abstract_gd::StepRecord) -> Vec<Cell> {
    vec![
        r.step.into(),
        r.loss0_sq.into(),
        r.loss_s_sq.into(),
        r.weight_dist.into(),
        r.grad_scaled.into(),
        r.residual_l1.into(),
        r.threshold_flag.into(),
    ]
}

fn trace_summary(a: &mut Artifact, trace: &TrainTrace) -> Option<String> {
    a.meta_f64("threshold", trace.threshold);
    let y0 = trace.records.first().map_or(f64::NAN, |r| r.loss_s_sq);
    a.meta_f64("loss_s_sq_init", y0);
    a.meta("steps", trace.len());
    a.meta("reached_threshold", trace.reached_threshold());
    a.meta("first_non_decrease", trace.first_non_decrease().map_or(Value::Null, Value::from));
    a.meta_f64("max_loss_s_ratio", trace.records.iter().map(|r| r.loss_s_sq / y0).fold(0.0, f64::max));
    match decay_fit(trace) {
        Ok(fit) => {
            a.meta_f64("decay_rate", fit.rate).meta_f64("decay_r_squared", fit.r_squared);
        }
        Err(_) => {
            a.meta("decay_rate", Value::Null).meta("decay_r_squared", Value::Null);
        }
    }
    a.meta("abort", trace.abort.clone().map_or(Value::Null, Value::from));
    trace.abort.clone()
}

fn train_shallow(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let m = need(&cfg.model.m, "model.m")?;
    let (trace, sched) = shallow_run(cfg, m, seed)?;
    let mut cols = TRACE_COLUMNS.to_vec();
    cols.push("weight_margin");
    let mut a = Artifact::new(stem(ExperimentKind::TrainShallow, Some(seed), None), &cols);
    header(&mut a, cfg, Some(seed))?;
    a.meta_f64("h", sched.h).meta_f64("tau", sched.tau).meta_f64("gamma", sched.gamma).meta_f64("alpha", sched.alpha);
    a.meta_f64("theorem_rate", sched.theorem_rate());
    let abort = trace_summary(&mut a, &trace);
    let margins = shallow::weight_distance_margins(&trace, m);
    a.meta_f64("min_weight_margin", margins.iter().copied().fold(f64::INFINITY, f64::min));
    for (r, margin) in trace.records.iter().zip(&margins) {
        let mut row = trace_row(r);
        row.push((*margin).into());
        a.push(row);
    }
    let failures = abort.map(|e| format!("train-shallow seed {seed}: {e}")).into_iter().collect();
    Ok(Outcome { artifacts: vec![a], failures })
}

fn deep_target_parity(act: Activation) -> Parity {
    if act.is_odd() {
        Parity::Odd
    } else {
        Parity::All
    }
}

/// β from the empirical NTK of an independent network `factor` times wider.
fn deep_beta(cfg: &ExperimentConfig, widths: &[usize], seed: u64, grid: &QuadratureGrid) -> Result<f64> {
    if let Some(beta) = cfg.schedule.beta {
        return Ok(beta);
    }
    let model = &cfg.model;
    let factor = need(&cfg.numerics.beta_width_factor, "numerics.beta_width_factor")?;
    let wide: Vec<usize> = widths.iter().enumerate().map(|(i, &w)| if i + 1 == widths.len() { w } else { w * factor }).collect();
    let net = deep::init_deep(
        &wide,
        need(&model.d, "model.d")?,
        need(&model.depth, "model.depth")?,
        derived_seed(seed, "beta-net", 0),
        need(&model.activation, "model.activation")?,
    )?;
    deep::estimate_beta(&net, grid, &need(&cfg.numerics.beta_harmonics, "numerics.beta_harmonics")?)
}

fn deep_setup(cfg: &ExperimentConfig, seed: u64) -> Result<(DeepParams, DeepSchedule, QuadratureGrid)> {
    let (model, sc, nu) = (&cfg.model, &cfg.schedule, &cfg.numerics);
    let widths = deep_widths(model)?;
    let act = need(&model.activation, "model.activation")?;
    let p = deep::init_deep(&widths, need(&model.d, "model.d")?, need(&model.depth, "model.depth")?, seed, act)?;
    let grid = QuadratureGrid::circle_trapezoid(need(&nu.grid, "numerics.grid")?)?;
    let beta = deep_beta(cfg, &widths, seed, &grid)?;
    let mut sched = deep::make_deep_schedule(
        p.m(),
        need(&sc.s, "schedule.s")?,
        need(&sc.alpha, "schedule.alpha")?,
        beta,
        need(&sc.c_h, "schedule.c_h")?,
        need(&sc.c_a, "schedule.c_a")?,
        need(&sc.c_gamma, "schedule.c_gamma")?,
    )?;
    if let Some(cap) = sc.gamma_cap {
        sched = sched.with_gamma_cap(cap);
    }
    Ok((p, sched, grid))
}

fn train_deep(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let (p, sched, grid) = deep_setup(cfg, seed)?;
    let (sc, nu) = (&cfg.schedule, &cfg.numerics);
    let target = synthesize_target_with(
        Domain::CircleFourier,
        sched.s,
        need(&nu.target_modes, "numerics.target_modes")?,
        need(&nu.target_margin, "numerics.target_margin")?,
        seed,
        deep_target_parity(p.activation()),
    )?;
    let opts = DeepTrainOptions { modes: need(&nu.modes, "numerics.modes")?, record_residuals: false };
    let (trace, _) = deep::train_deep(&p, &target, &sched, &grid, need(&sc.max_steps, "schedule.max_steps")?, &opts)?;

    let depth = p.depth();
    let mut cols: Vec<String> = TRACE_COLUMNS.iter().map(|c| c.to_string()).collect();
    cols.push("weight_ratio".into());
    cols.extend((0..depth).map(|l| format!("layer_norm_{l}")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut a = Artifact::new(stem(ExperimentKind::TrainDeep, Some(seed), None), &col_refs);
    header(&mut a, cfg, Some(seed))?;
    a.meta_f64("h", sched.h).meta_f64("tau", sched.tau).meta_f64("gamma", sched.gamma);
    a.meta_f64("alpha", sched.alpha).meta_f64("beta", sched.beta);
    a.meta_f64("theorem_rate", sched.theorem_rate());
    a.meta("widths", p.widths().to_vec());
    let abort = trace_summary(&mut a, &trace);
    let ratios = deep::weight_distance_ratios(&trace, p.widths()[0], p.m());
    a.meta_f64("max_weight_ratio", ratios.iter().copied().fold(0.0, f64::max));
    for (n, r) in trace.records.iter().enumerate() {
        let mut row = trace_row(r);
        row.push(if n == 0 { Cell::Missing } else { ratios[n - 1].into() });
        row.extend((0..depth).map(|l| r.layer_norms.get(l).copied().into()));
        a.push(row);
    }
    let failures = abort.map(|e| format!("train-deep seed {seed}: {e}")).into_iter().collect();
    Ok(Outcome { artifacts: vec![a], failures })
}

/// Interval basis function the limit eigenfunction k should match, for the
/// piecewise-linear activations whose spectrum is known in closed form.
fn reference_eigenfunction(act: Activation, k: usize, x: f64) -> Option<f64> {
    match act {
        Activation::ReluReflected => eval_basis(k, x).ok(),
        Activation::Relu => eval_basis(k, -x).ok(),
        _ => None,
    }
}

fn ntk_eigen(cfg: &ExperimentConfig) -> Result<Outcome> {
    let act = need(&cfg.model.activation, "model.activation")?;
    let grid = QuadratureGrid::gauss_legendre(need(&cfg.numerics.grid, "numerics.grid")?)?;
    let count = need(&cfg.numerics.eigen_count, "numerics.eigen_count")?;
    let op = KernelOperator::assemble(|x, y| shallow::limit_ntk_shallow(act, x, y), &grid)?;
    let pairs = op.eigendecompose(count)?;
    let mut a =
        Artifact::new(stem(ExperimentKind::NtkEigen, None, None), &["k", "eigenvalue", "reference", "rel_error", "eigvec_l2_error"]);
    header(&mut a, cfg, None)?;
    let (mut worst_value, mut worst_vec) = (0.0f64, 0.0f64);
    for (k, pair) in pairs.iter().enumerate() {
        let known = act.is_piecewise_linear();
        let reference = 1.0 / (2.0 * omega(k) * omega(k));
        let vec_err = known.then(|| {
            let err = |sign: f64| -> f64 {
                let diff: Vec<f64> = grid
                    .nodes()
                    .iter()
                    .zip(&pair.nodal)
                    .map(|(&x, v)| v - sign * reference_eigenfunction(act, k, x).unwrap_or(f64::NAN))
                    .collect();
                grid.l2_norm(&diff)
            };
            err(1.0).min(err(-1.0))
        });
        let rel = known.then(|| (pair.value - reference).abs() / reference);
        worst_value = worst_value.max(rel.unwrap_or(0.0));
        worst_vec = worst_vec.max(vec_err.unwrap_or(0.0));
        a.push(vec![k.into(), pair.value.into(), known.then_some(reference).into(), rel.into(), vec_err.into()]);
    }
    if act.is_piecewise_linear() {
        a.meta_f64("max_rel_error", worst_value).meta_f64("max_eigvec_l2_error", worst_vec);
    }
    Ok(Outcome { artifacts: vec![a], failures: Vec::new() })
}

fn ntk_concentration(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let (model, nu, sw) = (&cfg.model, &cfg.numerics, &cfg.sweep);
    let act = need(&model.activation, "model.activation")?;
    let m_list = need(&sw.m_list, "sweep.m_list")?;
    let trials = need(&sw.trials, "sweep.trials")?;
    let kind = ExperimentKind::NtkConcentration;
    let mut summary = Artifact::new(stem(kind, Some(seed), Some("summary")), &["m", "median"]);
    let mut cells = Artifact::new(stem(kind, Some(seed), Some("cells")), &["m", "trial", "value"]);
    header(&mut summary, cfg, Some(seed))?;
    header(&mut cells, cfg, Some(seed))?;
    let rows: Vec<(usize, f64, Vec<f64>)> = match cfg.network() {
        Network::Shallow => {
            let grid = QuadratureGrid::gauss_legendre(need(&nu.grid, "numerics.grid")?)?;
            let s_order = need(&sw.s_order, "sweep.s_order")?;
            let table = shallow::concentration_experiment(act, &m_list, trials, seed, s_order, need(&nu.modes, "numerics.modes")?, &grid)?;
            summary.meta("quantity", format!("operator norm of H_m - H in S = {s_order} to L2"));
            table.rows.into_iter().map(|r| (r.m, r.median, r.norms)).collect()
        }
        Network::Deep => {
            let seeds = trial_seeds(seed, trials);
            let sweep = deep::gamma_width_sweep(
                act,
                need(&model.depth, "model.depth")?,
                &m_list,
                &seeds,
                need(&nu.holder_grid, "numerics.holder_grid")?,
            )?;
            summary.meta("quantity", "sup over the angle grid of |Gamma_m - Gamma_4m|");
            sweep.into_iter().map(|r| (r.width, r.median_sup_diff, r.sup_diffs)).collect()
        }
    };
    if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let fit = linalg::log_log_slope(&x, &y)?;
        summary.meta_f64("slope", fit.slope).meta_f64("r_squared", fit.r_squared);
    }
    for (m, median, values) in rows {
        summary.push(vec![m.into(), median.into()]);
        for (t, v) in values.into_iter().enumerate() {
            cells.push(vec![m.into(), t.into(), v.into()]);
        }
    }
    Ok(Outcome { artifacts: vec![summary, cells], failures: Vec::new() })
}

fn ntk_perturbation(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let (model, nu, sw) = (&cfg.model, &cfg.numerics, &cfg.sweep);
    let act = need(&model.activation, "model.activation")?;
    let m = need(&model.m, "model.m")?;
    let radii = need(&sw.radii, "sweep.radii")?;
    let trials = need(&sw.trials, "sweep.trials")?;
    let kind = ExperimentKind::NtkPerturbation;
    match cfg.network() {
        Network::Shallow => {
            let grid = QuadratureGrid::gauss_legendre(need(&nu.grid, "numerics.grid")?)?;
            let p = shallow::init_shallow(m, seed)?;
            let s_order = need(&sw.s_order, "sweep.s_order")?;
            let table =
                shallow::perturbation_experiment(&p, act, &radii, trials, seed, s_order, need(&nu.modes, "numerics.modes")?, &grid)?;
            let mut a = Artifact::new(stem(kind, Some(seed), None), &["radius", "op_diff", "derivative_diff"]);
            header(&mut a, cfg, Some(seed))?;
            a.meta("op_slope", table.op_slope.map_or(Value::Null, meta_float));
            a.meta("derivative_slope", table.derivative_slope.map_or(Value::Null, meta_float));
            for r in table.rows {
                a.push(vec![r.radius.into(), r.op_diff.into(), r.derivative_diff.into()]);
            }
            Ok(Outcome { artifacts: vec![a], failures: Vec::new() })
        }
        Network::Deep => {
            let s = need(&cfg.schedule.s, "schedule.s")?;
            let holder_exp = s + need(&nu.epsilon, "numerics.epsilon")?;
            let sampling = HolderSampling {
                grid_n: need(&nu.holder_grid, "numerics.holder_grid")?,
                sep_factor: need(&nu.holder_sep, "numerics.holder_sep")?,
            };
            let seeds = trial_seeds(seed, trials);
            let table =
                deep::holder_perturbation_experiment(act, need(&model.depth, "model.depth")?, m, &radii, &seeds, holder_exp, sampling)?;
            let mut summary = Artifact::new(stem(kind, Some(seed), Some("summary")), &["radius", "median_estimate"]);
            let mut cells = Artifact::new(stem(kind, Some(seed), Some("cells")), &["radius", "trial", "estimate"]);
            header(&mut summary, cfg, Some(seed))?;
            header(&mut cells, cfg, Some(seed))?;
            summary.meta_f64("holder_exponent", holder_exp);
            summary.meta_f64("slope", table.fit.slope).meta_f64("r_squared", table.fit.r_squared);
            for r in table.rows {
                summary.push(vec![r.radius.into(), r.median_estimate.into()]);
                for (t, e) in r.estimates.into_iter().enumerate() {
                    cells.push(vec![r.radius.into(), t.into(), e.into()]);
                }
            }
            Ok(Outcome { artifacts: vec![summary, cells], failures: Vec::new() })
        }
    }
}

fn groenwall_check(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let steps = need(&cfg.sweep.steps, "sweep.steps")?;
    let kind = ExperimentKind::GroenwallCheck;
    if let Some(p) = &cfg.groenwall {
        let trace = groenwall_simulate(p, steps)?;
        let report = groenwall_conditions(p, &trace.x, &trace.y)?;
        let violation = groenwall_conclusion_violation(p, &trace)?;
        let mut a =
            Artifact::new(stem(kind, Some(seed), None), &["n", "x", "y", "x_bound", "cond1_margin", "cond2_margin", "conditions_hold"]);
        header(&mut a, cfg, Some(seed))?;
        a.meta_f64("threshold1", report.threshold1).meta_f64("threshold2", report.threshold2);
        a.meta("aborted_at", trace.aborted_at.map_or(Value::Null, Value::from));
        a.meta("first_condition_violation", report.first_violation.map_or(Value::Null, Value::from));
        a.meta("conclusion_violation", violation.map_or(Value::Null, Value::from));
        a.meta("pass", violation.is_none());
        for n in 0..trace.x.len() {
            let bound = (-p.gamma * p.b * n as f64).exp() * p.x0;
            let (m1, m2) = (report.cond1_margin[n], report.cond2_margin[n]);
            a.push(vec![
                n.into(),
                trace.x[n].into(),
                trace.y[n].into(),
                bound.into(),
                m1.into(),
                m2.into(),
                (m1 >= 0.0 && m2 >= 0.0).into(),
            ]);
        }
        let failures = violation.map(|n| format!("groenwall-check: conclusion fails at step {n}")).into_iter().collect();
        return Ok(Outcome { artifacts: vec![a], failures });
    }
    let draws = groenwall_random_check(need(&cfg.sweep.draws, "sweep.draws")?, steps, seed)?;
    let mut a = Artifact::new(
        stem(kind, Some(seed), None),
        &["draw", "a", "b", "c", "d", "rho", "gamma", "x0", "y0", "checked_steps", "aborted_at", "violation"],
    );
    header(&mut a, cfg, Some(seed))?;
    let violations = draws.iter().filter(|d| d.violation.is_some()).count();
    a.meta("draws", draws.len());
    a.meta("violations", violations);
    a.meta("aborted", draws.iter().filter(|d| d.aborted_at.is_some()).count());
    a.meta("pass", violations == 0);
    for (i, d) in draws.iter().enumerate() {
        let q = &d.params;
        a.push(vec![
            i.into(),
            q.a.into(),
            q.b.into(),
            q.c.into(),
            q.d.into(),
            q.rho.into(),
            q.gamma.into(),
            q.x0.into(),
            q.y0.into(),
            d.checked_steps.into(),
            d.aborted_at.into(),
            d.violation.into(),
        ]);
    }
    let failures = if violations > 0 { vec![format!("groenwall-check: {violations} draws violate the conclusion")] } else { Vec::new() };
    Ok(Outcome { artifacts: vec![a], failures })
}

fn gp_table(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (model, nu) = (&cfg.model, &cfg.numerics);
    let n = need(&nu.grid, "numerics.grid")?;
    let t: Vec<f64> = (0..n).map(|i| if i + 1 == n { 1.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 }).collect();
    let table = deep::gp_recursion(
        need(&model.activation, "model.activation")?,
        &t,
        need(&model.depth, "model.depth")?,
        need(&nu.gh_order, "numerics.gh_order")?,
    )?;
    let cols: Vec<String> = std::iter::once("t".to_string()).chain((0..table.sigma.len()).map(|l| format!("sigma_{l}"))).collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut a = Artifact::new(stem(ExperimentKind::GpTable, None, None), &col_refs);
    header(&mut a, cfg, None)?;
    a.meta("diagonal", Value::Array(table.diagonal.iter().map(|&v| meta_float(v)).collect()));
    a.meta_f64("c_sigma", table.c_sigma).meta_f64("cap_sigma", table.cap_sigma);
    a.meta("clamped", table.clamped).meta("bounds_hold", table.bounds_hold());
    for (i, &ti) in table.t.iter().enumerate() {
        a.push(std::iter::once(Cell::from(ti)).chain(table.sigma.iter().map(|l| Cell::from(l[i]))).collect());
    }
    let failures =
        if table.bounds_hold() { Vec::new() } else { vec!["gp-table: lower diagonal bound c_sigma is not positive".to_string()] };
    Ok(Outcome { artifacts: vec![a], failures })
}
