//! Width sweeps of the shallow trainer and the log-log rate fit of the
//! final error against m.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::config::{need, ExperimentConfig, ExperimentKind};
use super::emit::{meta_float, Artifact, Cell};
use super::experiments::{shallow_run, Outcome};
use crate::abstract_gd::ThresholdVariant;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// The ideal slope −s is allowed to be beaten by at most this factor.
pub const IDEAL_SLACK: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCell {
    pub m: usize,
    pub seed: u64,
    pub steps: usize,
    pub reached_threshold: bool,
    pub final_loss0_sq: f64,
    pub init_loss_s_sq: f64,
    /// ‖κⁿ‖₀² / ‖κ⁰‖_s² at the last step.
    pub error: f64,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceSlopes {
    /// Exponent of the width in the convergence bound.
    pub theorem_rate: f64,
    /// −s, the best piecewise-linear approximation rate.
    pub ideal_pw_linear_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub m_values: Vec<usize>,
    /// Median error over the non-aborted seeds of each width.
    pub error_values: Vec<f64>,
    pub fitted_slope: f64,
    /// 95% percentile interval from resampling seeds within each width.
    pub slope_ci: (f64, f64),
    pub reference_slopes: ReferenceSlopes,
    /// Lower and upper end of the accepted slope range.
    pub bracket: (f64, f64),
    pub cells: Vec<RateCell>,
}

impl RateFit {
    pub fn bracket_holds(&self) -> bool {
        self.fitted_slope >= self.bracket.0 && self.fitted_slope <= self.bracket.1
    }
}

fn fit_slope(m: &[usize], errors: &[f64]) -> f64 {
    let x: Vec<f64> = m.iter().map(|&v| v as f64).collect();
    linalg::log_log_slope(&x, errors).map_or(f64::NAN, |f| f.slope)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Trains every (m, seed) cell of `config` (resolved for `rate-sweep`) and
/// fits the final-error slope.
pub fn rate_sweep(config: &ExperimentConfig) -> Result<RateFit> {
    let cfg = config.resolve(ExperimentKind::RateSweep)?;
    let m_list = need(&cfg.sweep.m_list, "sweep.m_list")?;
    let s = need(&cfg.schedule.s, "schedule.s")?;
    let cells_in: Vec<(usize, u64)> = m_list.iter().flat_map(|&m| cfg.seeds.iter().map(move |&seed| (m, seed))).collect();
    let cells: Vec<RateCell> = cells_in
        .par_iter()
        .map(|&(m, seed)| {
            let (trace, _) = shallow_run(&cfg, m, seed)?;
            let first = trace.records.first().ok_or_else(|| Error::refused("empty training trace"))?;
            let last = trace.last().unwrap_or(first);
            Ok(RateCell {
                m,
                seed,
                steps: trace.len(),
                reached_threshold: trace.reached_threshold(),
                final_loss0_sq: last.loss0_sq,
                init_loss_s_sq: first.loss_s_sq,
                error: last.loss0_sq / first.loss_s_sq,
                aborted: trace.abort.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let groups: Vec<(usize, Vec<f64>)> = m_list
        .iter()
        .map(|&m| (m, cells.iter().filter(|c| c.m == m && c.aborted.is_none()).map(|c| c.error).collect::<Vec<_>>()))
        .filter(|(_, e)| !e.is_empty())
        .collect();
    let m_values: Vec<usize> = groups.iter().map(|g| g.0).collect();
    let error_values: Vec<f64> = groups.iter().map(|g| linalg::median(&g.1)).collect();
    let fitted_slope = fit_slope(&m_values, &error_values);

    let mut r = rng::stream(cfg.seeds[0], "rate-bootstrap");
    let mut slopes: Vec<f64> = (0..need(&cfg.sweep.bootstrap, "sweep.bootstrap")?)
        .map(|_| {
            let medians: Vec<f64> = groups
                .iter()
                .map(|(_, e)| linalg::median(&(0..e.len()).map(|_| e[r.random_range(0..e.len())]).collect::<Vec<_>>()))
                .collect();
            fit_slope(&m_values, &medians)
        })
        .filter(|v| v.is_finite())
        .collect();
    slopes.sort_by(f64::total_cmp);

    let theorem_rate = ThresholdVariant::Shallow { s }.exponent()?;
    let tolerance = need(&cfg.sweep.tolerance, "sweep.tolerance")?;
    Ok(RateFit {
        m_values,
        error_values,
        fitted_slope,
        slope_ci: (percentile(&slopes, 0.025), percentile(&slopes, 0.975)),
        reference_slopes: ReferenceSlopes { theorem_rate, ideal_pw_linear_rate: -s },
        bracket: (-s * IDEAL_SLACK, theorem_rate * (1.0 - tolerance)),
        cells,
    })
}

pub(crate) fn rate_sweep_outcome(cfg: &ExperimentConfig) -> Result<Outcome> {
    let fit = rate_sweep(cfg)?;
    let kind = ExperimentKind::RateSweep;
    let mut embedded = cfg.clone();
    embedded.out = None;
    let config = serde_json::to_value(&embedded).map_err(|e| Error::Config(e.to_string()))?;
    let mut summary = Artifact::new(format!("{}_summary", kind.name()), &["m", "median_error"]);
    let mut cells = Artifact::new(
        format!("{}_cells", kind.name()),
        &["m", "seed", "steps", "reached_threshold", "final_loss0_sq", "init_loss_s_sq", "error", "aborted"],
    );
    for a in [&mut summary, &mut cells] {
        a.meta("experiment", kind.name()).meta("seeds", cfg.seeds.clone()).meta("config", config.clone());
    }
    summary.meta_f64("fitted_slope", fit.fitted_slope);
    summary.meta("slope_ci", Value::Array(vec![meta_float(fit.slope_ci.0), meta_float(fit.slope_ci.1)]));
    summary.meta_f64("theorem_rate", fit.reference_slopes.theorem_rate);
    summary.meta_f64("ideal_pw_linear_rate", fit.reference_slopes.ideal_pw_linear_rate);
    summary.meta("bracket", Value::Array(vec![meta_float(fit.bracket.0), meta_float(fit.bracket.1)]));
    summary.meta("bracket_holds", fit.bracket_holds());
    for (m, e) in fit.m_values.iter().zip(&fit.error_values) {
        summary.push(vec![(*m).into(), (*e).into()]);
    }
    let mut failures = Vec::new();
    for c in &fit.cells {
        let aborted = c.aborted.clone().map_or(Cell::Missing, Cell::Text);
        cells.push(vec![
            c.m.into(),
            c.seed.into(),
            c.steps.into(),
            c.reached_threshold.into(),
            c.final_loss0_sq.into(),
            c.init_loss_s_sq.into(),
            c.error.into(),
            aborted,
        ]);
        if let Some(e) = &c.aborted {
            failures.push(format!("rate-sweep m {} seed {}: {e}", c.m, c.seed));
        }
    }
    if !fit.bracket_holds() {
        failures.push(format!("rate-sweep: slope {} outside [{}, {}]", fit.fitted_slope, fit.bracket.0, fit.bracket.1));
    }
    Ok(Outcome { artifacts: vec![summary, cells], failures })
}
