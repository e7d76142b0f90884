//! Network-agnostic convergence bookkeeping: the two-sequence Grönwall
//! bound, per-step loss-reduction audits, stopping thresholds and decay fits.

use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::SpectralGram;
use crate::spectral1d::SpectralCoeffs;

/// Parameters of the recurrences
///
/// ```text
/// x_{n+1} = x_n − γ a x_n^{1+ρ} y_n^{−ρ} + γ b x_n
/// y_{n+1} = y_n − γ c x_n^ρ y_n^{1−ρ} + γ d √(x_n y_n)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub rho: f64,
    pub gamma: f64,
    pub x0: f64,
    pub y0: f64,
}

impl SequenceParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.c, self.d, self.gamma];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg("a, b, c, d and gamma must be finite and nonnegative"));
        }
        if !(self.rho > 0.5) || !self.rho.is_finite() {
            return Err(Error::arg(format!("rho must exceed 1/2, got {}", self.rho)));
        }
        if !(self.x0 > 0.0 && self.y0 > 0.0) || !self.x0.is_finite() || !self.y0.is_finite() {
            return Err(Error::arg("x0 and y0 must be positive"));
        }
        Ok(())
    }

    /// (d/c)^{2/(2ρ−1)} y₀ and (2b/a)^{1/ρ} y₀.
    pub fn thresholds(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let t1 = if self.d == 0.0 {
            0.0
        } else if self.c == 0.0 {
            return Err(Error::refused("c = 0 with d > 0: first condition is undefined"));
        } else {
            (self.d / self.c).powf(2.0 / (2.0 * self.rho - 1.0)) * self.y0
        };
        let t2 = if self.b == 0.0 {
            0.0
        } else if self.a == 0.0 {
            return Err(Error::refused("a = 0 with b > 0: second condition is undefined"));
        } else {
            (2.0 * self.b / self.a).powf(1.0 / self.rho) * self.y0
        };
        Ok((t1, t2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub threshold1: f64,
    pub threshold2: f64,
    pub cond1_margin: Vec<f64>,
    pub cond2_margin: Vec<f64>,
    pub first_violation: Option<usize>,
}

pub fn groenwall_conditions(p: &SequenceParams, x_trace: &[f64], y_trace: &[f64]) -> Result<ConditionReport> {
    if x_trace.is_empty() || x_trace.len() != y_trace.len() {
        return Err(Error::arg("traces must be nonempty and of equal length"));
    }
    if x_trace.iter().chain(y_trace).any(|v| !(*v > 0.0)) {
        return Err(Error::arg("traces must be positive"));
    }
    let (t1, t2) = p.thresholds()?;
    let cond1_margin: Vec<f64> = x_trace.iter().map(|x| x - t1).collect();
    let cond2_margin: Vec<f64> = x_trace.iter().map(|x| x - t2).collect();
    let first_violation = cond1_margin.iter().zip(&cond2_margin).position(|(m1, m2)| *m1 < 0.0 || *m2 < 0.0);
    Ok(ConditionReport { threshold1: t1, threshold2: t2, cond1_margin, cond2_margin, first_violation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTrace {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Step whose iterate left the positive half-line, if any. The traces stop
    /// before it.
    pub aborted_at: Option<usize>,
}

/// Iterates the recurrences with equality for `n_steps` steps.
pub fn groenwall_simulate(p: &SequenceParams, n_steps: usize) -> Result<SequenceTrace> {
    p.validate()?;
    let mut x = vec![p.x0];
    let mut y = vec![p.y0];
    for n in 0..n_steps {
        let (xn, yn) = (x[n], y[n]);
        let xn1 = xn - p.gamma * p.a * xn.powf(1.0 + p.rho) * yn.powf(-p.rho) + p.gamma * p.b * xn;
        let yn1 = yn - p.gamma * p.c * xn.powf(p.rho) * yn.powf(1.0 - p.rho) + p.gamma * p.d * (xn * yn).sqrt();
        if !(xn1 > 0.0 && yn1 > 0.0) || !xn1.is_finite() || !yn1.is_finite() {
            return Ok(SequenceTrace { x, y, aborted_at: Some(n + 1) });
        }
        x.push(xn1);
        y.push(yn1);
    }
    Ok(SequenceTrace { x, y, aborted_at: None })
}

/// First step n at which `x_n ≤ e^{−γbn} x₀` or `y_n ≤ y₀` fails while the
/// conditions held for all k < n.
pub fn groenwall_conclusion_violation(p: &SequenceParams, trace: &SequenceTrace) -> Result<Option<usize>> {
    let report = groenwall_conditions(p, &trace.x, &trace.y)?;
    let last = report.first_violation.unwrap_or(trace.x.len() - 1);
    for n in 0..=last.min(trace.x.len() - 1) {
        let bound = (-p.gamma * p.b * n as f64).exp() * p.x0;
        let tol = 1e-12 * p.x0.max(p.y0);
        if trace.x[n] > bound + tol || trace.y[n] > p.y0 + tol {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Random sequence parameters whose conditions hold at step 0.
///
/// Ranges: a, c ∈ [0.5, 2], b, d ∈ [0, 0.05], ρ ∈ (0.55, 2), γ ∈ [0, 0.2],
/// y₀ ∈ [0.5, 2], x₀ ∈ [0.05, 1]. Draws failing either condition at x₀ are
/// rejected and redrawn.
pub fn sample_sequence_params<R: rand::Rng>(rng: &mut R) -> SequenceParams {
    loop {
        let p = SequenceParams {
            a: rng.random_range(0.5..=2.0),
            b: rng.random_range(0.0..=0.05),
            c: rng.random_range(0.5..=2.0),
            d: rng.random_range(0.0..=0.05),
            rho: rng.random_range(0.55..2.0),
            gamma: rng.random_range(0.0..=0.2),
            x0: rng.random_range(0.05..=1.0),
            y0: rng.random_range(0.5..=2.0),
        };
        if let Ok((t1, t2)) = p.thresholds() {
            if p.x0 >= t1 && p.x0 >= t2 {
                return p;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GroenwallDraw {
    pub params: SequenceParams,
    /// Steps checked: the prefix on which the conditions held.
    pub checked_steps: usize,
    pub aborted_at: Option<usize>,
    pub violation: Option<usize>,
}

/// Samples `draws` parameter sets, simulates each for `n_steps` and checks
/// the conclusion on the prefix where the conditions hold.
pub fn groenwall_random_check(draws: usize, n_steps: usize, seed: u64) -> Result<Vec<GroenwallDraw>> {
    let mut rng = crate::rng::stream(seed, "groenwall-draws");
    (0..draws)
        .map(|_| {
            let params = sample_sequence_params(&mut rng);
            let trace = groenwall_simulate(&params, n_steps)?;
            let report = groenwall_conditions(&params, &trace.x, &trace.y)?;
            let checked_steps = report.first_violation.map_or(trace.x.len(), |k| k + 1);
            let violation = groenwall_conclusion_violation(&params, &trace)?;
            Ok(GroenwallDraw { params, checked_steps, aborted_at: trace.aborted_at, violation })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// ‖κⁿ‖₀².
    pub loss0_sq: f64,
    /// ‖κⁿ‖_s².
    pub loss_s_sq: f64,
    /// Distance of the trained weights from initialization.
    pub weight_dist: f64,
    /// γ‖∇ℓ(θⁿ)‖.
    pub grad_scaled: f64,
    /// Set once ‖κⁿ‖₀² is below the stopping threshold.
    pub threshold_flag: bool,
    /// ‖κⁿ‖ in L1, used by the deep weight-distance audit.
    pub residual_l1: f64,
    /// Spectral norms of the weight matrices (deep only), scaled by m^{−1/2}.
    pub layer_norms: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<StepRecord>,
    /// Residual coefficients per recorded step, when requested.
    pub residuals: Option<Vec<SpectralCoeffs>>,
    pub threshold: f64,
    pub gamma: f64,
    pub abort: Option<String>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn reached_threshold(&self) -> bool {
        self.records.last().is_some_and(|r| r.threshold_flag)
    }

    /// First step at which ‖κ‖₀² fails to strictly decrease while the
    /// previous step was still above threshold.
    pub fn first_non_decrease(&self) -> Option<usize> {
        self.records.windows(2).find(|w| !w[0].threshold_flag && !(w[1].loss0_sq < w[0].loss0_sq)).map(|w| w[1].step)
    }
}

/// Which theorem's stopping threshold to use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdVariant {
    /// Exponent −(1/2)((1−s)/(2−s)) s.
    Shallow { s: f64 },
    /// Exponent −(1/2)(α/(1+α))(s/β).
    Deep { s: f64, alpha: f64, beta: f64 },
}

impl ThresholdVariant {
    pub fn exponent(&self) -> Result<f64> {
        match *self {
            ThresholdVariant::Shallow { s } => Ok(-0.5 * ((1.0 - s) / (2.0 - s)) * s),
            ThresholdVariant::Deep { s, alpha, beta } => {
                if !(beta > 0.0) {
                    return Err(Error::arg(format!("beta must be positive, got {beta}")));
                }
                Ok(-0.5 * (alpha / (1.0 + alpha)) * (s / beta))
            }
        }
    }
}

/// c_a m^{exponent} ‖κ⁰‖_s².
pub fn theorem_threshold(norm_s_sq_init: f64, m: usize, variant: ThresholdVariant, c_a: f64) -> Result<f64> {
    if c_a < 0.0 || !c_a.is_finite() {
        return Err(Error::arg("c_a must be finite and nonnegative"));
    }
    Ok(c_a * (m as f64).powf(variant.exponent()?) * norm_s_sq_init)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    /// C in x_n ≈ C e^{−rate·n} x₀.
    pub amplitude: f64,
    pub r_squared: f64,
    pub steps_used: usize,
}

/// Least-squares fit of log ‖κⁿ‖₀² against n over the steps above threshold.
pub fn decay_fit(trace: &TrainTrace) -> Result<DecayFit> {
    let above: Vec<&StepRecord> = trace.records.iter().filter(|r| !r.threshold_flag).collect();
    if above.len() < 10 {
        return Err(Error::refused(format!("only {} steps above threshold, need at least 10", above.len())));
    }
    let x0 = trace.records[0].loss0_sq;
    let n: Vec<f64> = above.iter().map(|r| r.step as f64).collect();
    let y: Vec<f64> = above.iter().map(|r| r.loss0_sq.ln()).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::refused("nonpositive loss in the fit window"));
    }
    let fit = linalg::fit_line(&n, &y)?;
    Ok(DecayFit { rate: -fit.slope, amplitude: fit.intercept.exp() / x0, r_squared: fit.r_squared, steps_used: above.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AuditRow {
    pub step: usize,
    pub s_order: f64,
    /// ℓ_S(θ^{n+1}) − ℓ_S(θⁿ).
    pub delta: f64,
    /// γ⟨κ, Hκ⟩_S.
    pub coercive: f64,
    /// 3γ[h + γ‖∇ℓ‖]^α ‖κ‖_S ‖κ‖₀, the factor multiplying c.
    pub perturbation: f64,
    /// Smallest c ≥ 0 for which the step satisfies the inequality.
    pub c_min: f64,
    pub loss_increased: bool,
}

impl AuditRow {
    /// Slack of the inequality for a given constant c (nonnegative = holds).
    pub fn margin(&self, c: f64) -> f64 {
        -self.coercive + c * self.perturbation - self.delta
    }
}

/// Per-step constants for the loss-reduction inequality
///
/// ```text
/// ℓ_S(θ^{n+1}) − ℓ_S(θⁿ) ≤ −γ⟨κ, Hκ⟩_S + 3cγ[hⁿ + γ‖∇ℓ‖]^α ‖κ‖_S ‖κ‖₀
/// ```
///
/// with hⁿ the largest weight distance seen so far.
pub fn loss_reduction_audit(trace: &TrainTrace, h_op: &SpectralGram, s_orders: &[f64], alpha: f64) -> Result<Vec<AuditRow>> {
    let residuals = trace.residuals.as_ref().ok_or_else(|| Error::refused("trace has no per-step residual coefficients"))?;
    if residuals.len() < trace.records.len() {
        return Err(Error::refused("trace is missing residual coefficients for some steps"));
    }
    let gamma = trace.gamma;
    let mut rows = Vec::new();
    let mut h_max: f64 = 0.0;
    for n in 0..trace.records.len().saturating_sub(1) {
        let rec = &trace.records[n];
        h_max = h_max.max(rec.weight_dist);
        let (k0, k1) = (&residuals[n], &residuals[n + 1]);
        let norm0 = k0.sobolev_norm(0.0);
        for &s in s_orders {
            let delta = 0.5 * (k1.sobolev_norm_sq(s) - k0.sobolev_norm_sq(s));
            let coercive = gamma * h_op.quadratic_form(k0, s);
            let perturbation = 3.0 * gamma * (h_max + rec.grad_scaled).powf(alpha) * k0.sobolev_norm(s) * norm0;
            let excess = delta + coercive;
            let c_min = if excess <= 0.0 {
                0.0
            } else if perturbation > 0.0 {
                excess / perturbation
            } else {
                f64::INFINITY
            };
            rows.push(AuditRow { step: rec.step, s_order: s, delta, coercive, perturbation, c_min, loss_increased: delta > 0.0 });
        }
    }
    Ok(rows)
}
