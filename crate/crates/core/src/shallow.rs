//! The one-dimensional shallow network
//!
//! ```text
//! f_θ(x) = m^{−1/2} Σ_r a_r σ(x − b_r),   x ∈ [-1, 1],
//! ```
//!
//! with fixed random signs a_r and trained biases b_r.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::abstract_gd::{theorem_threshold, StepRecord, ThresholdVariant, TrainTrace};
use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linalg::{self, LineFit};
use crate::operator::SpectralGram;
use crate::quadrature::{Domain, QuadratureGrid};
use crate::rng;
use crate::spectral1d::{coeff_len, multiplier, omega, Projector, SpectralCoeffs};

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowParams {
    signs: Vec<f64>,
    biases: Vec<f64>,
}

impl ShallowParams {
    pub fn new(signs: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if signs.is_empty() || signs.len() != biases.len() {
            return Err(Error::arg("signs and biases must be nonempty and of equal length"));
        }
        if signs.iter().any(|a| *a != 1.0 && *a != -1.0) {
            return Err(Error::arg("signs must be ±1"));
        }
        if biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::arg("biases must be finite"));
        }
        Ok(ShallowParams { signs, biases })
    }

    pub fn width(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Same signs, new biases.
    pub fn with_biases(&self, biases: Vec<f64>) -> Result<Self> {
        Self::new(self.signs.clone(), biases)
    }

    /// ‖b − b̄‖_∞.
    pub fn distance(&self, other: &ShallowParams) -> f64 {
        self.biases.iter().zip(&other.biases).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// How far the biases have left [-1, 1].
    pub fn bias_drift(&self) -> f64 {
        self.biases.iter().fold(0.0f64, |m, b| m.max(b.abs() - 1.0))
    }
}

/// Rademacher signs and uniform biases on [-1, 1].
pub fn init_shallow(m: usize, seed: u64) -> Result<ShallowParams> {
    if m == 0 {
        return Err(Error::arg("width must be at least 1"));
    }
    let mut r = rng::stream(seed, "shallow-init");
    let signs = (0..m).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let biases = (0..m).map(|_| r.random_range(-1.0..=1.0)).collect();
    Ok(ShallowParams { signs, biases })
}

/// Biases in ascending order with prefix sums of a_r and a_r b_r.
struct SortedUnits {
    sorted: Vec<f64>,
    prefix_a: Vec<f64>,
    prefix_ab: Vec<f64>,
}

impl SortedUnits {
    fn new(p: &ShallowParams) -> Self {
        let mut idx: Vec<usize> = (0..p.width()).collect();
        idx.sort_by(|&i, &j| p.biases[i].total_cmp(&p.biases[j]));
        let mut prefix_a = Vec::with_capacity(idx.len() + 1);
        let mut prefix_ab = Vec::with_capacity(idx.len() + 1);
        let (mut sa, mut sab) = (0.0, 0.0);
        prefix_a.push(0.0);
        prefix_ab.push(0.0);
        for &i in &idx {
            sa += p.signs[i];
            sab += p.signs[i] * p.biases[i];
            prefix_a.push(sa);
            prefix_ab.push(sab);
        }
        SortedUnits { sorted: idx.iter().map(|&i| p.biases[i]).collect(), prefix_a, prefix_ab }
    }

    fn eval(&self, act: Activation, x: f64) -> f64 {
        let m = self.sorted.len();
        match act {
            Activation::Relu => {
                let k = self.sorted.partition_point(|&b| b < x);
                x * self.prefix_a[k] - self.prefix_ab[k]
            }
            Activation::ReluReflected => {
                let k = self.sorted.partition_point(|&b| b <= x);
                (self.prefix_ab[m] - self.prefix_ab[k]) - x * (self.prefix_a[m] - self.prefix_a[k])
            }
            _ => unreachable!("fast path is only for piecewise-linear units"),
        }
    }
}

pub fn forward_shallow(p: &ShallowParams, xs: &[f64], act: Activation) -> Vec<f64> {
    let scale = 1.0 / (p.width() as f64).sqrt();
    if act.is_piecewise_linear() {
        let units = SortedUnits::new(p);
        xs.iter().map(|&x| scale * units.eval(act, x)).collect()
    } else {
        xs.par_iter().map(|&x| scale * p.signs.iter().zip(&p.biases).map(|(a, b)| a * act.value(x - b)).sum::<f64>()).collect()
    }
}

/// Direct double loop, kept as a reference implementation.
pub fn forward_naive(p: &ShallowParams, xs: &[f64], act: Activation) -> Vec<f64> {
    let scale = 1.0 / (p.width() as f64).sqrt();
    xs.iter()
        .map(|&x| {
            let mut acc = 0.0;
            for r in 0..p.width() {
                acc += p.signs[r] * act.value(x - p.biases[r]);
            }
            scale * acc
        })
        .collect()
}

fn require_interval(grid: &QuadratureGrid) -> Result<()> {
    if grid.domain() != Domain::Interval1d {
        return Err(Error::arg("shallow networks live on the interval grid"));
    }
    Ok(())
}

/// ½ Σ_i w_i κ(x_i)².
pub fn quadrature_loss(p: &ShallowParams, target_values: &[f64], grid: &QuadratureGrid, act: Activation) -> f64 {
    let f = forward_shallow(p, grid.nodes(), act);
    let k: Vec<f64> = f.iter().zip(target_values).map(|(a, b)| a - b).collect();
    0.5 * grid.dot(&k, &k)
}

/// ∂ℓ/∂b_r = −m^{−1/2} a_r ∫ κ(x) σ̇(x − b_r) dx, by quadrature.
pub fn grad_from_residual(p: &ShallowParams, kappa: &[f64], grid: &QuadratureGrid, act: Activation) -> Vec<f64> {
    let scale = 1.0 / (p.width() as f64).sqrt();
    let nodes = grid.nodes();
    let wk: Vec<f64> = grid.weights().iter().zip(kappa).map(|(w, k)| w * k).collect();
    match act {
        Activation::Relu | Activation::ReluReflected => {
            let mut prefix = Vec::with_capacity(wk.len() + 1);
            let mut acc = 0.0;
            prefix.push(0.0);
            for v in &wk {
                acc += v;
                prefix.push(acc);
            }
            let total = acc;
            p.signs
                .iter()
                .zip(&p.biases)
                .map(|(&a, &b)| {
                    if act == Activation::Relu {
                        let k = nodes.partition_point(|&x| x <= b);
                        -scale * a * (total - prefix[k])
                    } else {
                        let k = nodes.partition_point(|&x| x < b);
                        scale * a * prefix[k]
                    }
                })
                .collect()
        }
        _ => p
            .signs
            .par_iter()
            .zip(&p.biases)
            .map(|(&a, &b)| -scale * a * nodes.iter().zip(&wk).map(|(&x, &v)| v * act.derivative(x - b)).sum::<f64>())
            .collect(),
    }
}

pub fn grad_loss_shallow(p: &ShallowParams, target: &SpectralCoeffs, grid: &QuadratureGrid, act: Activation) -> Result<Vec<f64>> {
    require_interval(grid)?;
    let t = target.synthesize(grid)?;
    let f = forward_shallow(p, grid.nodes(), act);
    let kappa: Vec<f64> = f.iter().zip(&t).map(|(a, b)| a - b).collect();
    Ok(grad_from_residual(p, &kappa, grid, act))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShallowSchedule {
    pub m: usize,
    pub s: f64,
    pub c_h: f64,
    pub c_a: f64,
    pub c_gamma: f64,
    pub h: f64,
    pub tau: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub gamma_cap: Option<f64>,
}

/// h = c_h m^{−1/(2(2−s))}, τ = h^{2(1−s)} m, γ = c_γ h √m, α = 1 − s.
pub fn make_schedule(m: usize, s: f64, c_h: f64, c_a: f64, c_gamma: f64) -> Result<ShallowSchedule> {
    if !(s > 0.0 && s < 0.5) {
        return Err(Error::arg(format!("smoothness s must lie in (0, 1/2), got {s}")));
    }
    if m == 0 {
        return Err(Error::arg("width must be at least 1"));
    }
    if !(c_h > 0.0 && c_gamma > 0.0 && c_a >= 0.0) || ![c_h, c_a, c_gamma].iter().all(|v| v.is_finite()) {
        return Err(Error::arg("schedule constants must be finite, c_h and c_gamma positive"));
    }
    let mf = m as f64;
    let h = c_h * mf.powf(-1.0 / (2.0 * (2.0 - s)));
    let tau = h.powf(2.0 * (1.0 - s)) * mf;
    let gamma = c_gamma * h * mf.sqrt();
    Ok(ShallowSchedule { m, s, c_h, c_a, c_gamma, h, tau, gamma, alpha: 1.0 - s, gamma_cap: None })
}

impl ShallowSchedule {
    /// γ = min(c_γ h √m, cap).
    pub fn with_gamma_cap(mut self, cap: f64) -> Self {
        self.gamma = (self.c_gamma * self.h * (self.m as f64).sqrt()).min(cap);
        self.gamma_cap = Some(cap);
        self
    }

    pub fn threshold(&self, norm_s_sq_init: f64) -> Result<f64> {
        theorem_threshold(norm_s_sq_init, self.m, ThresholdVariant::Shallow { s: self.s }, self.c_a)
    }

    /// γ h^{1−s}, the decay rate in the convergence bound.
    pub fn theorem_rate(&self) -> f64 {
        self.gamma * self.h.powf(1.0 - self.s)
    }
}

/// Largest eigenvalue of the limit kernel for either ReLU orientation.
pub const RELU_LIMIT_LAMBDA_MAX: f64 = 8.0 / (std::f64::consts::PI * std::f64::consts::PI);

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub activation: Activation,
    /// Spectral truncation used for ‖κ‖_s.
    pub modes: usize,
    /// Keep the residual coefficients of every step (for loss-reduction audits).
    pub record_residuals: bool,
}

/// Gradient descent on the biases until the stopping threshold or `max_steps`.
pub fn train_shallow(
    p: &ShallowParams,
    target: &SpectralCoeffs,
    schedule: &ShallowSchedule,
    grid: &QuadratureGrid,
    max_steps: usize,
    opts: &TrainOptions,
) -> Result<(TrainTrace, ShallowParams)> {
    require_interval(grid)?;
    if schedule.m != p.width() {
        return Err(Error::arg(format!("schedule is for width {}, network has {}", schedule.m, p.width())));
    }
    if target.basis() != Domain::Interval1d {
        return Err(Error::arg("target must be an interval expansion"));
    }
    if target.len() > grid.max_modes() {
        return Err(Error::Aliasing { requested: target.len(), max: grid.max_modes() });
    }
    let projector = Projector::new(grid, opts.modes)?;
    let target_values = projector.synthesize(target);
    let act = opts.activation;
    let gamma = schedule.gamma;
    let b0 = p.biases.clone();
    let mut cur = p.clone();
    let mut trace = TrainTrace { gamma, threshold: f64::NAN, ..Default::default() };
    let mut residuals = opts.record_residuals.then(Vec::new);

    for n in 0..=max_steps {
        let f = forward_shallow(&cur, grid.nodes(), act);
        let kappa: Vec<f64> = f.iter().zip(&target_values).map(|(a, b)| a - b).collect();
        let loss0_sq = grid.dot(&kappa, &kappa);
        let coeffs = projector.analyze_values(&kappa);
        let loss_s_sq = coeffs.sobolev_norm_sq(schedule.s);
        if !loss0_sq.is_finite() || !loss_s_sq.is_finite() {
            trace.abort = Some(format!("non-finite loss at step {n}"));
            break;
        }
        if n == 0 {
            trace.threshold = schedule.threshold(loss_s_sq)?;
        }
        let grad = grad_from_residual(&cur, &kappa, grid, act);
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let finished = loss0_sq < trace.threshold || loss0_sq == 0.0;
        trace.records.push(StepRecord {
            step: n,
            loss0_sq,
            loss_s_sq,
            weight_dist: cur.biases.iter().zip(&b0).fold(0.0, |m, (a, b)| m.max((a - b).abs())),
            grad_scaled: gamma * gmax,
            threshold_flag: finished,
            residual_l1: grid.weights().iter().zip(&kappa).map(|(w, k)| w * k.abs()).sum(),
            layer_norms: Vec::new(),
        });
        if let Some(r) = residuals.as_mut() {
            r.push(coeffs);
        }
        if finished || n == max_steps {
            break;
        }
        for (b, g) in cur.biases.iter_mut().zip(&grad) {
            *b -= gamma * g;
        }
    }
    trace.residuals = residuals;
    Ok((trace, cur))
}

/// Per-step slack of ‖θⁿ − θ⁰‖_∞ ≤ (2γ/√m) Σ_{k<n} ‖κᵏ‖₀ (nonnegative = holds).
pub fn weight_distance_margins(trace: &TrainTrace, m: usize) -> Vec<f64> {
    let factor = 2.0 * trace.gamma / (m as f64).sqrt();
    let mut partial = 0.0;
    trace
        .records
        .iter()
        .map(|r| {
            let margin = factor * partial - r.weight_dist;
            partial += r.loss0_sq.sqrt();
            margin
        })
        .collect()
}

/// Empirical NTK (1/m) Σ_r σ̇(x − b_r) σ̇(y − b̄_r).
#[derive(Debug, Clone)]
pub struct EmpiricalNtk {
    left: Vec<f64>,
    right: Option<Vec<f64>>,
    sorted: Vec<f64>,
    act: Activation,
}

pub fn empirical_ntk_shallow(p: &ShallowParams, act: Activation) -> EmpiricalNtk {
    let mut sorted = p.biases.clone();
    sorted.sort_by(f64::total_cmp);
    EmpiricalNtk { left: p.biases.clone(), right: None, sorted, act }
}

pub fn empirical_ntk_cross(p: &ShallowParams, pbar: &ShallowParams, act: Activation) -> Result<EmpiricalNtk> {
    if p.width() != pbar.width() {
        return Err(Error::arg("cross kernel needs equal widths"));
    }
    Ok(EmpiricalNtk { left: p.biases.clone(), right: Some(pbar.biases.clone()), sorted: Vec::new(), act })
}

impl EmpiricalNtk {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let m = self.left.len() as f64;
        match (&self.right, self.act) {
            (None, Activation::Relu) => self.sorted.partition_point(|&b| b < x.min(y)) as f64 / m,
            (None, Activation::ReluReflected) => (self.sorted.len() - self.sorted.partition_point(|&b| b <= x.max(y))) as f64 / m,
            (right, act) => {
                let right = right.as_ref().unwrap_or(&self.left);
                self.left.iter().zip(right).map(|(b, bb)| act.derivative(x - b) * act.derivative(y - bb)).sum::<f64>() / m
            }
        }
    }
}

/// Infinite-width NTK E_b[σ̇(x − b) σ̇(y − b)] for b uniform on [-1, 1].
pub fn limit_ntk_shallow(act: Activation, x: f64, y: f64) -> f64 {
    match act {
        Activation::Relu => (x.min(y) + 1.0).clamp(0.0, 2.0) / 2.0,
        Activation::ReluReflected => (1.0 - x.max(y)).clamp(0.0, 2.0) / 2.0,
        _ => {
            thread_local! {
                static GL: QuadratureGrid = QuadratureGrid::gauss_legendre(256).expect("fixed order");
            }
            GL.with(|g| {
                0.5 * g.nodes().iter().zip(g.weights()).map(|(&b, &w)| w * act.derivative(x - b) * act.derivative(y - b)).sum::<f64>()
            })
        }
    }
}

/// Table of ∫ φ_j(x) σ̇(x − b_r) dx, shape `len × biases.len()`.
///
/// Exact for the ReLU variants; by quadrature on `grid` otherwise.
pub fn derivative_features(biases: &[f64], act: Activation, modes: usize, grid: &QuadratureGrid) -> Result<DMatrix<f64>> {
    let len = coeff_len(Domain::Interval1d, modes);
    match act {
        Activation::Relu | Activation::ReluReflected => {
            let anti = |j: usize, x: f64| {
                let w = omega(j);
                let ph = if j.is_multiple_of(2) { -std::f64::consts::FRAC_PI_4 } else { std::f64::consts::FRAC_PI_4 };
                -(w * x + ph).cos() / w
            };
            Ok(DMatrix::from_fn(len, biases.len(), |j, r| {
                let b = biases[r];
                if act == Activation::Relu {
                    let lo = b.clamp(-1.0, 1.0);
                    anti(j, 1.0) - anti(j, lo)
                } else {
                    let hi = b.clamp(-1.0, 1.0);
                    -(anti(j, hi) - anti(j, -1.0))
                }
            }))
        }
        _ => {
            require_interval(grid)?;
            let proj = Projector::new(grid, modes)?;
            let nodes = grid.nodes();
            let s = DMatrix::from_fn(nodes.len(), biases.len(), |i, r| act.derivative(nodes[i] - biases[r]));
            Ok(proj.weighted_basis() * s)
        }
    }
}

/// Spectral Gram of H_{θ,θ̄} over the first `modes` modes.
pub fn empirical_gram(
    p: &ShallowParams,
    pbar: &ShallowParams,
    act: Activation,
    modes: usize,
    grid: &QuadratureGrid,
) -> Result<SpectralGram> {
    let l = derivative_features(&p.biases, act, modes, grid)?;
    let r = if std::ptr::eq(p, pbar) { l.clone() } else { derivative_features(&pbar.biases, act, modes, grid)? };
    SpectralGram::from_features(Domain::Interval1d, &l, &r, 1.0 / p.width() as f64)
}

/// Spectral Gram of the limit kernel, (1/2)∫ P(b) P(b)ᵀ db.
pub fn limit_gram(act: Activation, modes: usize, grid: &QuadratureGrid) -> Result<SpectralGram> {
    let len = coeff_len(Domain::Interval1d, modes);
    let bq = QuadratureGrid::gauss_legendre(2 * len + 64)?;
    let mut feats = derivative_features(bq.nodes(), act, modes, grid)?;
    for (r, mut col) in feats.column_iter_mut().enumerate() {
        col *= (0.5 * bq.weights()[r]).sqrt();
    }
    SpectralGram::from_features(Domain::Interval1d, &feats, &feats, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationRow {
    pub m: usize,
    pub median: f64,
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationTable {
    pub rows: Vec<ConcentrationRow>,
    pub slope: f64,
    pub r_squared: f64,
}

/// Seed for the `index`-th independent draw of an experiment.
pub fn derived_seed(seed: u64, label: &str, index: u64) -> u64 {
    rng::stream_indexed(seed, label, index).next_u64()
}

/// ‖H_{θ⁰,θ⁰} − H‖_{S,0} over widths and independent initializations.
pub fn concentration_experiment(
    act: Activation,
    m_list: &[usize],
    trials: usize,
    seed: u64,
    s_order: f64,
    modes: usize,
    grid: &QuadratureGrid,
) -> Result<ConcentrationTable> {
    if m_list.is_empty() || trials == 0 {
        return Err(Error::arg("concentration needs at least one width and one trial"));
    }
    let limit = limit_gram(act, modes, grid)?;
    let cells: Vec<(usize, usize)> = m_list.iter().flat_map(|&m| (0..trials).map(move |t| (m, t))).collect();
    let norms: Vec<f64> = cells
        .par_iter()
        .map(|&(m, t)| {
            let p = init_shallow(m, derived_seed(seed, &format!("concentration-m{m}"), t as u64))?;
            empirical_gram(&p, &p, act, modes, grid)?.sub(&limit)?.op_norm(s_order, modes)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ConcentrationRow> = m_list
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let v = norms[i * trials..(i + 1) * trials].to_vec();
            ConcentrationRow { m, median: linalg::median(&v), norms: v }
        })
        .collect();
    let (slope, r_squared) = if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.median).collect();
        let fit = linalg::log_log_slope(&x, &y)?;
        (fit.slope, fit.r_squared)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ConcentrationTable { rows, slope, r_squared })
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationRow {
    pub radius: f64,
    /// Median of ‖H_{θ̃,θ⁰} − H_{θ̃,θ̄}‖_{S,0}.
    pub op_diff: f64,
    /// Median of sup_{‖ν‖_∞≤1} ‖Σ_r (∂_r f_θ⁰ − ∂_r f_θ̄) ν_r‖_S (lower bound).
    pub derivative_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationTable {
    pub rows: Vec<PerturbationRow>,
    pub op_slope: Option<f64>,
    pub derivative_slope: Option<f64>,
}

/// Lower bound for sup over the unit cube of ‖M ν‖ by sign-ascent.
fn cube_norm_lower_bound(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 || m.amax() == 0.0 {
        return 0.0;
    }
    let svd = m.clone().svd(true, false);
    let best = svd.singular_values.imax();
    let u = svd.u.expect("requested").column(best).into_owned();
    let mut nu = (m.transpose() * u).map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
    let mut value = (m * &nu).norm();
    for _ in 0..50 {
        let g = m.transpose() * (m * &nu);
        let next = g.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let nv = (m * &next).norm();
        if nv <= value * (1.0 + 1e-14) {
            break;
        }
        nu = next;
        value = nv;
    }
    value
}

/// Kernel and derivative differences under uniform bias perturbations.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_experiment(
    p: &ShallowParams,
    act: Activation,
    radii: &[f64],
    trials: usize,
    seed: u64,
    s_order: f64,
    modes: usize,
    grid: &QuadratureGrid,
) -> Result<PerturbationTable> {
    if radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || trials == 0 {
        return Err(Error::arg("radii must be nonnegative and trials positive"));
    }
    let m = p.width();
    let p0 = derivative_features(&p.biases, act, modes, grid)?;
    let mult: Vec<f64> = (0..p0.nrows()).map(|j| multiplier(Domain::Interval1d, j, s_order)).collect();
    let cells: Vec<(usize, usize)> = (0..radii.len()).flat_map(|i| (0..trials).map(move |t| (i, t))).collect();
    let results: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(i, t)| {
            let radius = radii[i];
            let mut r = rng::stream_indexed(seed, &format!("perturb-r{i}"), t as u64);
            let mut perturbed =
                || -> Vec<f64> { p.biases.iter().map(|b| if radius > 0.0 { b + r.random_range(-radius..=radius) } else { *b }).collect() };
            let bar = perturbed();
            let tilde = perturbed();
            let pbar = derivative_features(&bar, act, modes, grid)?;
            let ptilde = derivative_features(&tilde, act, modes, grid)?;
            let diff = &p0 - &pbar;
            let mut op = (&ptilde * diff.transpose()) / m as f64;
            for (j, mut row) in op.row_iter_mut().enumerate() {
                row *= mult[j];
            }
            let op_norm = linalg::spectral_norm(&op);
            let mut d = diff;
            for (j, mut row) in d.row_iter_mut().enumerate() {
                row *= mult[j] / (m as f64).sqrt();
            }
            for (c, mut col) in d.column_iter_mut().enumerate() {
                col *= p.signs[c];
            }
            Ok((op_norm, cube_norm_lower_bound(&d)))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<PerturbationRow> = radii
        .iter()
        .enumerate()
        .map(|(i, &radius)| {
            let chunk = &results[i * trials..(i + 1) * trials];
            PerturbationRow {
                radius,
                op_diff: linalg::median(&chunk.iter().map(|c| c.0).collect::<Vec<_>>()),
                derivative_diff: linalg::median(&chunk.iter().map(|c| c.1).collect::<Vec<_>>()),
            }
        })
        .collect();
    let positive: Vec<&PerturbationRow> = rows.iter().filter(|r| r.radius > 0.0 && r.op_diff > 0.0 && r.derivative_diff > 0.0).collect();
    let slope = |f: fn(&PerturbationRow) -> f64| -> Option<f64> {
        if positive.len() < 2 {
            return None;
        }
        let x: Vec<f64> = positive.iter().map(|r| r.radius).collect();
        let y: Vec<f64> = positive.iter().map(|r| f(r)).collect();
        linalg::log_log_slope(&x, &y).ok().map(|fit: LineFit| fit.slope)
    };
    Ok(PerturbationTable { op_slope: slope(|r| r.op_diff), derivative_slope: slope(|r| r.derivative_diff), rows })
}

/// μ̂ = √m max_r ‖∂_r f_θ‖_s = max_r ‖σ̇(· − b_r)‖_s on the first `modes` modes.
pub fn derivative_bound(p: &ShallowParams, act: Activation, s: f64, modes: usize, grid: &QuadratureGrid) -> Result<f64> {
    let feats = derivative_features(&p.biases, act, modes, grid)?;
    let w: Vec<f64> = (0..feats.nrows()).map(|j| multiplier(Domain::Interval1d, j, 2.0 * s)).collect();
    Ok(feats.column_iter().map(|c| c.iter().zip(&w).map(|(v, w)| w * v * v).sum::<f64>().sqrt()).fold(0.0, f64::max))
}
