//! Deep fully connected network on the unit circle S¹ ⊂ R²
//!
//! ```text
//! f¹(x) = W⁰ V x,   f^{ℓ+1}(x) = W^ℓ m_ℓ^{−1/2} σ(f^ℓ(x)),   f(x) = w m_L^{−1/2} σ(f^L(x)),
//! ```
//!
//! with only W^{L−1} trained. Circle points are angles θ, fed to the network
//! as (cos θ, sin θ).

use std::hash::{DefaultHasher, Hash, Hasher};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::abstract_gd::{theorem_threshold, StepRecord, ThresholdVariant, TrainTrace};
use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linalg::{self, LineFit};
use crate::operator::{fit_beta_at, holder_from_values, holder_points, HolderEstimate, HolderSampling, KernelOperator};
use crate::quadrature::{Domain, GaussHermite, QuadratureGrid};
use crate::rng;
use crate::shallow::derived_seed;
use crate::spectral1d::{coeff_len, Projector, SpectralCoeffs};

/// Gauss–Hermite order used by the Gaussian-process recursion.
pub const GH_ORDER: usize = 64;

/// Largest allowed ratio between hidden widths.
pub const MAX_WIDTH_RATIO: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DeepParams {
    v: DMatrix<f64>,
    /// W⁰ … W^{L−2}.
    fixed: Vec<DMatrix<f64>>,
    /// W^{L−1}.
    trained: DMatrix<f64>,
    w_last: Vec<f64>,
    /// m₀ … m_{L+1}.
    widths: Vec<usize>,
    activation: Activation,
}

fn check_activation(act: Activation) -> Result<()> {
    if act.is_piecewise_linear() {
        return Err(Error::arg(format!("deep networks need a smooth activation, got {act}")));
    }
    Ok(())
}

fn check_width_ratio(hidden: &[usize]) -> Result<()> {
    let lo = *hidden.iter().min().unwrap_or(&0);
    let hi = *hidden.iter().max().unwrap_or(&0);
    if lo == 0 {
        return Err(Error::arg("hidden widths must be positive"));
    }
    if hi as f64 > MAX_WIDTH_RATIO * lo as f64 {
        return Err(Error::arg(format!("hidden widths {hidden:?} differ by more than a factor {MAX_WIDTH_RATIO}")));
    }
    Ok(())
}

impl DeepParams {
    pub fn new(v: DMatrix<f64>, fixed: Vec<DMatrix<f64>>, trained: DMatrix<f64>, w_last: Vec<f64>, activation: Activation) -> Result<Self> {
        check_activation(activation)?;
        if fixed.is_empty() {
            return Err(Error::arg("depth must be at least 2"));
        }
        let (m0, d) = v.shape();
        if d == 0 || m0 < d {
            return Err(Error::arg(format!("first width {m0} must be at least the input dimension {d}")));
        }
        let gram_err = (v.tr_mul(&v) - DMatrix::<f64>::identity(d, d)).amax();
        if gram_err > 1e-10 {
            return Err(Error::arg(format!("V must have orthonormal columns (deviation {gram_err:e})")));
        }
        let mut widths = vec![m0];
        for (l, w) in fixed.iter().chain(std::iter::once(&trained)).enumerate() {
            if w.ncols() != widths[l] {
                return Err(Error::arg(format!("W^{l} has {} columns, expected {}", w.ncols(), widths[l])));
            }
            widths.push(w.nrows());
        }
        if w_last.len() != widths[widths.len() - 1] {
            return Err(Error::arg("last weight vector does not match the last hidden width"));
        }
        if w_last.iter().any(|a| *a != 1.0 && *a != -1.0) {
            return Err(Error::arg("last weights must be ±1"));
        }
        check_width_ratio(&widths)?;
        widths.push(1);
        let finite = v.iter().chain(fixed.iter().flat_map(|w| w.iter())).chain(trained.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::arg("weights must be finite"));
        }
        Ok(DeepParams { v, fixed, trained, w_last, widths, activation })
    }

    /// L.
    pub fn depth(&self) -> usize {
        self.fixed.len() + 1
    }

    /// m₀ … m_{L+1}.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// m = m_{L−1}, the input width of the trained layer.
    pub fn m(&self) -> usize {
        self.widths[self.depth() - 1]
    }

    pub fn input_dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn fixed(&self) -> &[DMatrix<f64>] {
        &self.fixed
    }

    pub fn trained(&self) -> &DMatrix<f64> {
        &self.trained
    }

    pub fn w_last(&self) -> &[f64] {
        &self.w_last
    }

    /// W^ℓ for ℓ < L.
    pub fn weight(&self, ell: usize) -> Option<&DMatrix<f64>> {
        match ell.cmp(&(self.depth() - 1)) {
            std::cmp::Ordering::Less => Some(&self.fixed[ell]),
            std::cmp::Ordering::Equal => Some(&self.trained),
            std::cmp::Ordering::Greater => None,
        }
    }

    /// Same fixed layers, new W^{L−1}.
    pub fn with_trained(&self, trained: DMatrix<f64>) -> Result<Self> {
        if trained.shape() != self.trained.shape() {
            return Err(Error::arg("trained layer shape mismatch"));
        }
        if trained.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg("weights must be finite"));
        }
        Ok(DeepParams { trained, ..self.clone() })
    }

    /// Hash of V, W⁰ … W^{L−2} and the last weights.
    pub fn fixed_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.activation.tag().hash(&mut h);
        for m in std::iter::once(&self.v).chain(&self.fixed) {
            m.shape().hash(&mut h);
            m.iter().for_each(|x| x.to_bits().hash(&mut h));
        }
        self.w_last.iter().for_each(|x| x.to_bits().hash(&mut h));
        h.finish()
    }

    pub fn shares_fixed_layers(&self, other: &DeepParams) -> bool {
        self.activation == other.activation
            && self.v == other.v
            && self.fixed == other.fixed
            && self.w_last == other.w_last
            && self.trained.shape() == other.trained.shape()
    }

    /// ‖W^ℓ‖ m_ℓ^{−1/2} for ℓ = 0 … L−1.
    pub fn layer_norms(&self) -> Vec<f64> {
        (0..self.depth()).map(|l| linalg::spectral_norm(self.weight(l).unwrap()) / (self.widths[l] as f64).sqrt()).collect()
    }
}

/// (m, …, m, 1) for depth L.
pub fn uniform_widths(m: usize, depth: usize) -> Vec<usize> {
    let mut w = vec![m; depth + 1];
    w.push(1);
    w
}

fn gaussian_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

/// V from the QR factor of a Gaussian matrix, standard normal weights and
/// Rademacher last weights. `widths` lists m₀ … m_{L+1} with m_{L+1} = 1.
pub fn init_deep(widths: &[usize], d: usize, depth: usize, seed: u64, activation: Activation) -> Result<DeepParams> {
    check_activation(activation)?;
    if depth < 2 {
        return Err(Error::arg("depth must be at least 2"));
    }
    if widths.len() != depth + 2 || widths[depth + 1] != 1 {
        return Err(Error::arg(format!("need {} widths ending in 1, got {widths:?}", depth + 2)));
    }
    if d == 0 || widths[0] < d {
        return Err(Error::arg(format!("first width {} must be at least the input dimension {d}", widths[0])));
    }
    check_width_ratio(&widths[..=depth])?;
    let mut r = rng::stream(seed, "deep-init");
    let v = gaussian_matrix(&mut r, widths[0], d).qr().q();
    let fixed = (0..depth - 1).map(|l| gaussian_matrix(&mut r, widths[l + 1], widths[l])).collect();
    let trained = gaussian_matrix(&mut r, widths[depth], widths[depth - 1]);
    let w_last = (0..widths[depth]).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
    DeepParams::new(v, fixed, trained, w_last, activation)
}

/// Columns (cos θ, sin θ).
pub fn circle_points(thetas: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(2, thetas.len(), |i, j| if i == 0 { thetas[j].cos() } else { thetas[j].sin() })
}

fn check_inputs(p: &DeepParams, xs: &DMatrix<f64>) -> Result<()> {
    if xs.nrows() != p.input_dim() {
        return Err(Error::arg(format!("inputs have dimension {}, network expects {}", xs.nrows(), p.input_dim())));
    }
    for col in xs.column_iter() {
        let n = col.norm();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::Domain { x: n, domain: "unit sphere" });
        }
    }
    Ok(())
}

fn activate(z: &DMatrix<f64>, act: Activation, scale: f64) -> DMatrix<f64> {
    z.map(|x| scale * act.value(x))
}

fn inv_sqrt(m: usize) -> f64 {
    1.0 / (m as f64).sqrt()
}

/// f¹ … f^{L−1}.
fn lower_layers(p: &DeepParams, xs: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut layers = vec![&p.fixed[0] * (&p.v * xs)];
    for l in 1..p.fixed.len() {
        let a = activate(&layers[l - 1], p.activation, inv_sqrt(p.widths[l]));
        layers.push(&p.fixed[l] * a);
    }
    layers
}

/// σ(f^{L−1}) m_{L−1}^{−1/2}: the input of the trained layer, independent of
/// the trained weights.
fn trained_input(p: &DeepParams, lower: &[DMatrix<f64>]) -> DMatrix<f64> {
    activate(lower.last().unwrap(), p.activation, inv_sqrt(p.m()))
}

fn head(p: &DeepParams, features: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let fl = &p.trained * features;
    let scale = inv_sqrt(p.widths[p.depth()]);
    let out = fl.column_iter().map(|c| scale * c.iter().zip(&p.w_last).map(|(z, w)| w * p.activation.value(*z)).sum::<f64>()).collect();
    (fl, out)
}

#[derive(Debug, Clone)]
pub struct DeepForward {
    /// f¹ … f^L, one column per input point.
    pub layers: Vec<DMatrix<f64>>,
    pub output: Vec<f64>,
}

/// Forward pass for the columns of `xs`, which must have unit norm.
pub fn forward_deep(p: &DeepParams, xs: &DMatrix<f64>) -> Result<DeepForward> {
    check_inputs(p, xs)?;
    let mut layers = lower_layers(p, xs);
    let (fl, output) = head(p, &trained_input(p, &layers));
    layers.push(fl);
    Ok(DeepForward { layers, output })
}

/// Network output on the nodes of a circle grid.
pub fn forward_circle(p: &DeepParams, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    require_circle(grid)?;
    Ok(forward_deep(p, &circle_points(grid.nodes()))?.output)
}

fn require_circle(grid: &QuadratureGrid) -> Result<()> {
    if grid.domain() != Domain::CircleFourier {
        return Err(Error::arg("deep networks live on the circle; use a circle grid"));
    }
    Ok(())
}

fn target_values(target: &SpectralCoeffs, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    if target.basis() != Domain::CircleFourier {
        return Err(Error::arg("target must be a circle expansion"));
    }
    let max = coeff_len(Domain::CircleFourier, grid.max_modes());
    if target.len() > max {
        return Err(Error::Aliasing { requested: target.len(), max });
    }
    target.synthesize(grid)
}

/// ½ ∫ (f − target)² dθ by quadrature.
pub fn deep_loss(p: &DeepParams, target: &SpectralCoeffs, grid: &QuadratureGrid) -> Result<f64> {
    let t = target_values(target, grid)?;
    let f = forward_circle(p, grid)?;
    let k: Vec<f64> = f.iter().zip(&t).map(|(a, b)| a - b).collect();
    Ok(0.5 * grid.dot(&k, &k))
}

/// w ⊙ σ̇(f^L) m_L^{−1/2}, one column per point.
fn output_sensitivity(p: &DeepParams, fl: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = inv_sqrt(p.widths[p.depth()]);
    let mut u = fl.map(|z| scale * p.activation.derivative(z));
    for mut col in u.column_iter_mut() {
        col.component_mul_assign(&DVector::from_column_slice(&p.w_last));
    }
    u
}

/// Columns of `u` scaled by w_i κ(x_i).
fn weighted_sensitivity(u: &DMatrix<f64>, kappa: &[f64], grid: &QuadratureGrid) -> DMatrix<f64> {
    let mut a = u.clone();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= grid.weights()[j] * kappa[j];
    }
    a
}

/// ∫ κ(x) ∂_{W^{L−1}} f(x) dx, a sum of rank-one matrices u(x) v(x)ᵀ.
pub fn grad_w_loss(p: &DeepParams, target: &SpectralCoeffs, grid: &QuadratureGrid) -> Result<DMatrix<f64>> {
    let t = target_values(target, grid)?;
    let xs = circle_points(grid.nodes());
    let features = trained_input(p, &lower_layers(p, &xs));
    let (fl, out) = head(p, &features);
    let kappa: Vec<f64> = out.iter().zip(&t).map(|(a, b)| a - b).collect();
    Ok(weighted_sensitivity(&output_sensitivity(p, &fl), &kappa, grid) * features.transpose())
}

/// Rank-one factors of the trained-layer partials: ∂f(x)/∂W^{L−1}_{ij} = u_i(x) v_j(x).
#[derive(Debug, Clone)]
pub struct NtkFactors {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

pub fn ntk_factors(p: &DeepParams, xs: &DMatrix<f64>) -> Result<NtkFactors> {
    check_inputs(p, xs)?;
    let v = trained_input(p, &lower_layers(p, xs));
    let (fl, _) = head(p, &v);
    Ok(NtkFactors { u: output_sensitivity(p, &fl), v })
}

fn check_pair(p: &DeepParams, pbar: &DeepParams) -> Result<()> {
    if !p.shares_fixed_layers(pbar) {
        return Err(Error::arg("parameter sets have different fixed layers"));
    }
    Ok(())
}

/// Γ̂(x_i, y_j) = Σ_λ ∂_λ f_p(x_i) ∂_λ f_pbar(y_j) over the trained layer.
pub fn gamma_matrix(p: &DeepParams, pbar: Option<&DeepParams>, xs: &DMatrix<f64>, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = pbar.unwrap_or(p);
    check_pair(p, q)?;
    let a = ntk_factors(p, xs)?;
    let b = ntk_factors(q, ys)?;
    Ok(a.u.tr_mul(&b.u).component_mul(&a.v.tr_mul(&b.v)))
}

pub fn empirical_gamma(p: &DeepParams, pbar: Option<&DeepParams>, x: &[f64], y: &[f64]) -> Result<f64> {
    let xs = DMatrix::from_column_slice(x.len(), 1, x);
    let ys = DMatrix::from_column_slice(y.len(), 1, y);
    Ok(gamma_matrix(p, pbar, &xs, &ys)?[(0, 0)])
}

/// λ_min / λ_max of the Γ̂ grid matrix on the given angles.
pub fn gamma_psd_ratio(p: &DeepParams, thetas: &[f64]) -> Result<f64> {
    let xs = circle_points(thetas);
    let g = gamma_matrix(p, None, &xs, &xs)?;
    let sym = (&g + g.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    let max = ev.max();
    if max <= 0.0 {
        return Err(Error::refused("Γ̂ grid matrix has no positive eigenvalue"));
    }
    Ok(ev.min() / max)
}

/// Forward Gaussian-process kernels Σ^ℓ(t), t = xᵀy, for ℓ = 0 … L.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpKernelTable {
    pub t: Vec<f64>,
    /// `sigma[ℓ][i]` = Σ^ℓ(t_i).
    pub sigma: Vec<Vec<f64>>,
    /// Σ^ℓ(1) from the one-dimensional reduction.
    pub diagonal: Vec<f64>,
    /// min over ℓ = 1 … L of Σ^ℓ(1).
    pub c_sigma: f64,
    /// max over ℓ = 1 … L of Σ^ℓ(1).
    pub cap_sigma: f64,
    /// Some 2×2 covariance lost positive semidefiniteness and was clamped.
    pub clamped: bool,
}

impl GpKernelTable {
    pub fn bounds_hold(&self) -> bool {
        self.c_sigma > 0.0
    }

    /// Header `t,sigma_0,…,sigma_L`.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        let cols: Vec<String> = (0..self.sigma.len()).map(|l| format!("sigma_{l}")).collect();
        writeln!(out, "t,{}", cols.join(","))?;
        for (i, t) in self.t.iter().enumerate() {
            write!(out, "{t:?}")?;
            for layer in &self.sigma {
                write!(out, ",{:?}", layer[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// E[σ(u)σ(v)] for (u, v) ~ N(0, [[a, c], [c, a]]) through the eigenvectors
/// (1, ±1)/√2; returns whether an eigenvalue had to be clamped.
fn bivariate(gh: &GaussHermite, act: Activation, a: f64, c: f64) -> (f64, bool) {
    let (l1, l2) = (a + c, a - c);
    let tol = 1e-12 * a.abs().max(f64::MIN_POSITIVE);
    let clamped = l1 < -tol || l2 < -tol;
    let s1 = (0.5 * l1.max(0.0)).sqrt();
    let s2 = (0.5 * l2.max(0.0)).sqrt();
    let e = gh.expect2(|z1, z2| act.value(s1 * z1 + s2 * z2) * act.value(s1 * z1 - s2 * z2));
    (e, clamped)
}

/// Σ⁰(t) = t, Σ^{ℓ+1}(t) = E[σ(u)σ(v)] with A built from Σ^ℓ(1) and Σ^ℓ(t).
pub fn gp_recursion(act: Activation, t_grid: &[f64], depth: usize, gh_order: usize) -> Result<GpKernelTable> {
    if depth == 0 {
        return Err(Error::arg("depth must be positive"));
    }
    if let Some(t) = t_grid.iter().find(|t| !(-1.0..=1.0).contains(*t)) {
        return Err(Error::Domain { x: *t, domain: "[-1, 1]" });
    }
    let gh = GaussHermite::new(gh_order)?;
    let mut sigma = vec![t_grid.to_vec()];
    let mut diagonal = vec![1.0];
    let mut clamped = false;
    for l in 0..depth {
        let a = diagonal[l];
        let next: Vec<(f64, bool)> = sigma[l].par_iter().map(|&c| bivariate(&gh, act, a, c)).collect();
        clamped |= next.iter().any(|x| x.1);
        sigma.push(next.into_iter().map(|x| x.0).collect());
        let root = a.max(0.0).sqrt();
        diagonal.push(gh.expect(|z| act.value(root * z).powi(2)));
    }
    let tail = &diagonal[1..];
    Ok(GpKernelTable {
        t: t_grid.to_vec(),
        sigma,
        c_sigma: tail.iter().copied().fold(f64::INFINITY, f64::min),
        cap_sigma: tail.iter().copied().fold(0.0, f64::max),
        diagonal,
        clamped,
    })
}

/// sup_x ‖∂_{W^ℓ} f(x)‖ / (m₀/m_ℓ)^{1/2} over the columns of `xs`; ℓ = L is
/// the last weight vector.
pub fn partial_bound_check(p: &DeepParams, ell: usize, xs: &DMatrix<f64>) -> Result<f64> {
    let depth = p.depth();
    if ell > depth {
        return Err(Error::arg(format!("layer {ell} out of range 0..={depth}")));
    }
    let fwd = forward_deep(p, xs)?;
    let act = p.activation;
    // inputs a^ℓ of each weight matrix
    let input = |l: usize| -> DMatrix<f64> {
        if l == 0 {
            &p.v * xs
        } else {
            activate(&fwd.layers[l - 1], act, inv_sqrt(p.widths[l]))
        }
    };
    let a = input(ell);
    let norms: Vec<f64> = if ell == depth {
        a.column_iter().map(|c| c.norm()).collect()
    } else {
        // g^k = ∂f/∂f^k, from g^L down to g^{ℓ+1}
        let mut g = output_sensitivity(p, &fwd.layers[depth - 1]);
        for k in (ell + 1..depth).rev() {
            let back = p.weight(k).unwrap().tr_mul(&g);
            let scale = inv_sqrt(p.widths[k]);
            g = back.zip_map(&fwd.layers[k - 1], |b, z| b * scale * act.derivative(z));
        }
        g.column_iter().zip(a.column_iter()).map(|(gc, ac)| gc.norm() * ac.norm()).collect()
    };
    let sup = norms.iter().copied().fold(0.0, f64::max);
    Ok(sup / (p.widths[0] as f64 / p.widths[ell] as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpConsistencyRow {
    pub width: usize,
    pub layer: usize,
    /// Median over seeds of the grid-mean |(1/m_ℓ)‖σ(f^ℓ(x))‖² − Σ^ℓ(1)|.
    pub median_deviation: f64,
}

/// Empirical forward second moments against Σ^ℓ(1). Layer 0 compares
/// (1/m₁)‖f¹(x)‖² with Σ⁰(1) = 1.
pub fn gamma_vs_gp_consistency(
    act: Activation,
    depth: usize,
    widths: &[usize],
    seeds: &[u64],
    thetas: &[f64],
) -> Result<Vec<GpConsistencyRow>> {
    if widths.len() < 3 {
        return Err(Error::arg("consistency check needs at least three widths"));
    }
    if seeds.is_empty() || thetas.is_empty() {
        return Err(Error::arg("need at least one seed and one point"));
    }
    let table = gp_recursion(act, &[1.0], depth, GH_ORDER)?;
    let xs = circle_points(thetas);
    let mut rows = Vec::new();
    for &m in widths {
        let per_seed: Vec<Vec<f64>> = seeds
            .par_iter()
            .map(|&seed| -> Result<Vec<f64>> {
                let p = init_deep(&uniform_widths(m, depth), 2, depth, seed, act)?;
                let fwd = forward_deep(&p, &xs)?;
                let mut dev = Vec::with_capacity(depth + 1);
                for l in 0..=depth {
                    let (f, width) = if l == 0 { (&fwd.layers[0], p.widths[1]) } else { (&fwd.layers[l - 1], p.widths[l]) };
                    let total: f64 = f
                        .column_iter()
                        .map(|c| {
                            let moment =
                                if l == 0 { c.norm_squared() } else { c.iter().map(|z| act.value(*z).powi(2)).sum::<f64>() } / width as f64;
                            (moment - table.diagonal[l]).abs()
                        })
                        .sum();
                    dev.push(total / f.ncols() as f64);
                }
                Ok(dev)
            })
            .collect::<Result<_>>()?;
        for l in 0..=depth {
            let vals: Vec<f64> = per_seed.iter().map(|d| d[l]).collect();
            rows.push(GpConsistencyRow { width: m, layer: l, median_deviation: linalg::median(&vals) });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSweepRow {
    pub width: usize,
    pub median_sup_diff: f64,
    /// sup over the grid of |Γ̂_m − Γ̂_{4m}| per seed.
    pub sup_diffs: Vec<f64>,
}

/// Distance between empirical NTKs of independent networks at widths m and
/// 4m, on `grid_n` equispaced angles.
pub fn gamma_width_sweep(act: Activation, depth: usize, widths: &[usize], seeds: &[u64], grid_n: usize) -> Result<Vec<GammaSweepRow>> {
    if widths.is_empty() || seeds.is_empty() {
        return Err(Error::arg("sweep needs widths and seeds"));
    }
    let xs = circle_points(&holder_points(Domain::CircleFourier, grid_n));
    let gamma_at = |m: usize, seed: u64| -> Result<DMatrix<f64>> {
        let p = init_deep(&uniform_widths(m, depth), 2, depth, seed, act)?;
        gamma_matrix(&p, None, &xs, &xs)
    };
    widths
        .iter()
        .map(|&m| {
            let sup_diffs = seeds
                .iter()
                .map(|&seed| {
                    let small = gamma_at(m, derived_seed(seed, "gamma-sweep", m as u64))?;
                    let large = gamma_at(4 * m, derived_seed(seed, "gamma-sweep", 4 * m as u64 + 1))?;
                    Ok((small - large).amax())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(GammaSweepRow { width: m, median_sup_diff: linalg::median(&sup_diffs), sup_diffs })
        })
        .collect()
}

/// W^{L−1} moved along a seeded Gaussian direction so that
/// ‖W̄ − W‖ m^{−1/2} = `radius`.
pub fn perturb_trained(p: &DeepParams, radius: f64, seed: u64) -> Result<DeepParams> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::arg("perturbation radius must be finite and nonnegative"));
    }
    let mut r = rng::stream(seed, "deep-perturb");
    let (rows, cols) = p.trained.shape();
    let dir = gaussian_matrix(&mut r, rows, cols);
    let norm = linalg::spectral_norm(&dir);
    let step = dir * (radius * (p.m() as f64).sqrt() / norm);
    p.with_trained(&p.trained + step)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderPerturbationRow {
    pub radius: f64,
    pub median_estimate: f64,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderPerturbationTable {
    pub rows: Vec<HolderPerturbationRow>,
    /// log-log fit of the median estimate against the radius.
    pub fit: LineFit,
    pub holder_exp: f64,
}

/// C^{e,e} estimate of Γ̂(θ) − Γ̂(θ̄), both kernel arguments taken at the same
/// weights.
pub fn perturbation_holder(p: &DeepParams, pert: &DeepParams, holder_exp: f64, sampling: HolderSampling) -> Result<HolderEstimate> {
    check_pair(p, pert)?;
    let pts = holder_points(Domain::CircleFourier, sampling.grid_n);
    let xs = circle_points(&pts);
    let base = gamma_matrix(p, None, &xs, &xs)?;
    let moved = gamma_matrix(pert, None, &xs, &xs)?;
    let spacing = 2.0 * std::f64::consts::PI / sampling.grid_n as f64;
    holder_from_values(&(base - moved), &pts, Domain::CircleFourier, holder_exp, holder_exp, sampling.sep_factor * spacing)
}

/// Hölder estimates of the perturbed NTK over radii, one network and one
/// direction per seed.
#[allow(clippy::too_many_arguments)]
pub fn holder_perturbation_experiment(
    act: Activation,
    depth: usize,
    m: usize,
    radii: &[f64],
    seeds: &[u64],
    holder_exp: f64,
    sampling: HolderSampling,
) -> Result<HolderPerturbationTable> {
    if radii.len() < 2 || seeds.is_empty() {
        return Err(Error::arg("need at least two radii and one seed"));
    }
    let nets: Vec<DeepParams> = seeds.iter().map(|&s| init_deep(&uniform_widths(m, depth), 2, depth, s, act)).collect::<Result<_>>()?;
    let rows = radii
        .iter()
        .map(|&radius| {
            let estimates = nets
                .iter()
                .zip(seeds)
                .map(|(p, &seed)| {
                    let pert = perturb_trained(p, radius, seed)?;
                    Ok(perturbation_holder(p, &pert, holder_exp, sampling)?.estimate())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(HolderPerturbationRow { radius, median_estimate: linalg::median(&estimates), estimates })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.median_estimate).collect();
    Ok(HolderPerturbationTable { fit: linalg::log_log_slope(&x, &y)?, rows, holder_exp })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeepSchedule {
    pub m: usize,
    pub s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_h: f64,
    pub c_a: f64,
    pub c_gamma: f64,
    pub h: f64,
    pub tau: f64,
    pub gamma: f64,
    pub gamma_cap: Option<f64>,
}

/// h = c_h m^{−1/(2(1+α))}, τ = h^{2α} m, γ = c_γ h √m.
pub fn make_deep_schedule(m: usize, s: f64, alpha: f64, beta: f64, c_h: f64, c_a: f64, c_gamma: f64) -> Result<DeepSchedule> {
    if !(s > 0.0 && s < 0.5) {
        return Err(Error::arg(format!("smoothness s must lie in (0, 1/2), got {s}")));
    }
    if !(alpha >= 0.0 && alpha < 1.0 - s) {
        return Err(Error::arg(format!("alpha must lie in [0, 1 − s), got {alpha}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::arg(format!("beta must be positive, got {beta}")));
    }
    if m == 0 {
        return Err(Error::arg("width must be at least 1"));
    }
    if !(c_h > 0.0 && c_gamma > 0.0 && c_a >= 0.0) || ![c_h, c_a, c_gamma].iter().all(|v| v.is_finite()) {
        return Err(Error::arg("schedule constants must be finite, c_h and c_gamma positive"));
    }
    let mf = m as f64;
    let h = c_h * mf.powf(-0.5 / (1.0 + alpha));
    Ok(DeepSchedule {
        m,
        s,
        alpha,
        beta,
        c_h,
        c_a,
        c_gamma,
        h,
        tau: h.powf(2.0 * alpha) * mf,
        gamma: c_gamma * h * mf.sqrt(),
        gamma_cap: None,
    })
}

impl DeepSchedule {
    /// γ = min(c_γ h √m, cap).
    pub fn with_gamma_cap(mut self, cap: f64) -> Self {
        self.gamma = (self.c_gamma * self.h * (self.m as f64).sqrt()).min(cap);
        self.gamma_cap = Some(cap);
        self
    }

    pub fn threshold(&self, norm_s_sq_init: f64) -> Result<f64> {
        let variant = ThresholdVariant::Deep { s: self.s, alpha: self.alpha, beta: self.beta };
        theorem_threshold(norm_s_sq_init, self.m, variant, self.c_a)
    }

    /// γ h^α.
    pub fn theorem_rate(&self) -> f64 {
        self.gamma * self.h.powf(self.alpha)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DeepTrainOptions {
    /// Harmonics used for ‖κ‖_s.
    pub modes: usize,
    pub record_residuals: bool,
}

/// Largest singular value of A Fᵀ given the triangular factor of F = QR.
fn norm_through(a: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    linalg::spectral_norm(&(a * r.transpose()))
}

/// Gradient descent on W^{L−1} until the stopping threshold or `max_steps`.
/// `weight_dist` records ‖W^{L−1}(n) − W^{L−1}(0)‖ m^{−1/2}; `layer_norms`
/// records ‖W^ℓ‖ m_ℓ^{−1/2} for ℓ = 0 … L−1.
pub fn train_deep(
    p: &DeepParams,
    target: &SpectralCoeffs,
    schedule: &DeepSchedule,
    grid: &QuadratureGrid,
    max_steps: usize,
    opts: &DeepTrainOptions,
) -> Result<(TrainTrace, DeepParams)> {
    require_circle(grid)?;
    if schedule.m != p.m() {
        return Err(Error::arg(format!("schedule is for width {}, network has {}", schedule.m, p.m())));
    }
    let t = target_values(target, grid)?;
    let projector = Projector::new(grid, opts.modes)?;
    let xs = circle_points(grid.nodes());
    let features = trained_input(p, &lower_layers(p, &xs));
    let r_factor = features.clone().qr().r();
    let gamma = schedule.gamma;
    let sqrt_m = (p.m() as f64).sqrt();
    let fixed_norms: Vec<f64> = p.layer_norms()[..p.depth() - 1].to_vec();
    let trained_scale = inv_sqrt(p.widths[p.depth() - 1]);

    let mut cur = p.clone();
    let mut displacement = DMatrix::<f64>::zeros(p.trained.nrows(), grid.len());
    let mut power_vec = DVector::<f64>::zeros(0);
    let mut trace = TrainTrace { gamma, threshold: f64::NAN, ..Default::default() };
    let mut residuals = opts.record_residuals.then(Vec::new);

    for n in 0..=max_steps {
        let (fl, out) = head(&cur, &features);
        let kappa: Vec<f64> = out.iter().zip(&t).map(|(a, b)| a - b).collect();
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
        let a = weighted_sensitivity(&output_sensitivity(&cur, &fl), &kappa, grid);
        let finished = loss0_sq < trace.threshold || loss0_sq == 0.0;
        let mut layer_norms = fixed_norms.clone();
        layer_norms.push(linalg::spectral_norm_power(&cur.trained, &mut power_vec, 200) * trained_scale);
        trace.records.push(StepRecord {
            step: n,
            loss0_sq,
            loss_s_sq,
            weight_dist: norm_through(&displacement, &r_factor) / sqrt_m,
            grad_scaled: gamma * norm_through(&a, &r_factor) / sqrt_m,
            threshold_flag: finished,
            residual_l1: grid.weights().iter().zip(&kappa).map(|(w, k)| w * k.abs()).sum(),
            layer_norms,
        });
        if let Some(r) = residuals.as_mut() {
            r.push(coeffs);
        }
        if finished || n == max_steps {
            break;
        }
        cur.trained -= (&a * features.transpose()) * gamma;
        displacement -= a * gamma;
    }
    trace.residuals = residuals;
    Ok((trace, cur))
}

/// Per-step ratio of ‖W(n) − W(0)‖ m^{−1/2} to γ m₀^{1/2} m^{−1} Σ_{k<n} ‖κᵏ‖_{L1},
/// from step 1 on; the maximum is the run-measured constant of the
/// weight-distance bound.
pub fn weight_distance_ratios(trace: &TrainTrace, m0: usize, m: usize) -> Vec<f64> {
    let factor = trace.gamma * (m0 as f64).sqrt() / m as f64;
    let mut partial = 0.0;
    let mut out = Vec::new();
    for (n, r) in trace.records.iter().enumerate() {
        if n > 0 {
            out.push(r.weight_dist / (factor * partial));
        }
        partial += r.residual_l1;
    }
    out
}

/// Smoothing order β̂ of the empirical NTK of `p`, fitted to the diagonal
/// Gram entries at the cosine and sine coefficients of `harmonics`.
pub fn estimate_beta(p: &DeepParams, grid: &QuadratureGrid, harmonics: &[usize]) -> Result<f64> {
    require_circle(grid)?;
    let kmax = *harmonics.iter().max().ok_or_else(|| Error::arg("need at least one harmonic"))?;
    if harmonics.contains(&0) {
        return Err(Error::arg("harmonic 0 has unit Sobolev weight and carries no decay information"));
    }
    let xs = circle_points(grid.nodes());
    let values = gamma_matrix(p, None, &xs, &xs)?;
    let gram = KernelOperator::from_values(grid, values)?.gram(kmax)?;
    let indices: Vec<usize> = harmonics.iter().flat_map(|&k| [2 * k - 1, 2 * k]).collect();
    fit_beta_at(&gram, &indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral1d::{analyze, synthesize_target_with, Parity};
    use proptest::prelude::*;

    fn small(seed: u64) -> DeepParams {
        init_deep(&uniform_widths(32, 3), 2, 3, seed, Activation::Tanh).unwrap()
    }

    #[test]
    fn init_properties() {
        let p = init_deep(&uniform_widths(64, 3), 2, 3, 0, Activation::Tanh).unwrap();
        let err = (p.v().tr_mul(p.v()) - DMatrix::<f64>::identity(2, 2)).amax();
        assert!(err < 1e-12);
        assert_eq!(p, init_deep(&uniform_widths(64, 3), 2, 3, 0, Activation::Tanh).unwrap());
        assert_eq!(p.widths(), &[64, 64, 64, 64, 1]);
        assert_eq!(p.m(), 64);
        for n in p.layer_norms() {
            assert!((0.5..=3.0).contains(&n), "{n}");
        }
    }

    #[test]
    fn init_rejections() {
        assert!(init_deep(&[64, 200, 64, 64, 1], 2, 3, 0, Activation::Tanh).is_err());
        assert!(init_deep(&[1, 1, 1, 1, 1], 2, 3, 0, Activation::Tanh).is_err());
        assert!(init_deep(&uniform_widths(8, 3), 2, 3, 0, Activation::Relu).is_err());
        assert!(init_deep(&uniform_widths(8, 1), 2, 1, 0, Activation::Tanh).is_err());
        assert!(init_deep(&[8, 8, 8, 8], 2, 3, 0, Activation::Tanh).is_err());
    }

    #[test]
    fn forward_rejects_off_sphere() {
        let p = small(1);
        let xs = DMatrix::from_column_slice(2, 1, &[1.0, 0.1]);
        assert!(matches!(forward_deep(&p, &xs), Err(Error::Domain { .. })));
    }

    #[test]
    fn zero_trained_layer_gives_zero_output() {
        let p = small(2);
        let p = p.with_trained(DMatrix::zeros(32, 32)).unwrap();
        let out = forward_deep(&p, &circle_points(&[0.0, 1.0, 2.5])).unwrap().output;
        assert!(out.iter().all(|&o| o == 0.0));
    }

    fn naive_output(p: &DeepParams, x: &[f64]) -> f64 {
        let act = p.activation();
        let mut h: Vec<f64> = (0..p.widths()[0]).map(|i| (0..x.len()).map(|k| p.v()[(i, k)] * x[k]).sum()).collect();
        let mut first = true;
        for l in 0..p.depth() {
            let w = p.weight(l).unwrap();
            let scale = if first { 1.0 } else { 1.0 / (p.widths()[l] as f64).sqrt() };
            let input: Vec<f64> = if first { h.clone() } else { h.iter().map(|z| act.value(*z)).collect() };
            h = (0..w.nrows()).map(|i| scale * (0..w.ncols()).map(|j| w[(i, j)] * input[j]).sum::<f64>()).collect();
            first = false;
        }
        let scale = 1.0 / (h.len() as f64).sqrt();
        scale * h.iter().zip(p.w_last()).map(|(z, w)| w * act.value(*z)).sum::<f64>()
    }

    #[test]
    fn forward_matches_naive_recursion() {
        let p = init_deep(&uniform_widths(64, 3), 2, 3, 3, Activation::Tanh).unwrap();
        let theta = 0.7;
        let fast = forward_deep(&p, &circle_points(&[theta])).unwrap().output[0];
        let slow = naive_output(&p, &[theta.cos(), theta.sin()]);
        assert!((fast - slow).abs() < 1e-12, "{fast} {slow}");
    }

    #[test]
    fn outputs_stay_bounded_across_inits() {
        let xs = circle_points(&holder_points(Domain::CircleFourier, 16));
        let worst = (0..100u64)
            .map(|seed| {
                let p = init_deep(&uniform_widths(64, 3), 2, 3, seed, Activation::Tanh).unwrap();
                forward_deep(&p, &xs).unwrap().output.iter().fold(0.0f64, |m, o| m.max(o.abs()))
            })
            .fold(0.0f64, f64::max);
        // |tanh| ≤ 1 bounds the output by √m_L; the observed constant is O(1)
        assert!(worst < 4.0, "{worst}");
    }

    fn circle_target(seed: u64) -> SpectralCoeffs {
        synthesize_target_with(Domain::CircleFourier, 0.25, 8, 0.1, seed, Parity::Odd).unwrap()
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let p = small(4).with_trained(DMatrix::zeros(32, 32)).unwrap();
        let grid = QuadratureGrid::circle_trapezoid(64).unwrap();
        let zero = SpectralCoeffs::zeros(Domain::CircleFourier, 17);
        assert_eq!(grad_w_loss(&p, &zero, &grid).unwrap().amax(), 0.0);
    }

    fn fd_error(p: &DeepParams, target: &SpectralCoeffs, grid: &QuadratureGrid) -> f64 {
        let g = grad_w_loss(p, target, grid).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let mut up = p.trained().clone();
                up[(i, j)] += h;
                let mut down = p.trained().clone();
                down[(i, j)] -= h;
                let lu = deep_loss(&p.with_trained(up).unwrap(), target, grid).unwrap();
                let ld = deep_loss(&p.with_trained(down).unwrap(), target, grid).unwrap();
                worst = worst.max(((lu - ld) / (2.0 * h) - g[(i, j)]).abs());
            }
        }
        worst / g.amax()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = QuadratureGrid::circle_trapezoid(64).unwrap();
        for seed in 0..2 {
            let err = fd_error(&small(seed), &circle_target(seed), &grid);
            assert!(err < 1e-5, "seed {seed}: {err:e}");
        }
    }

    #[test]
    fn gradient_integrand_constant_is_width_stable() {
        let xs = circle_points(&holder_points(Domain::CircleFourier, 32));
        let c: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&m| {
                let p = init_deep(&uniform_widths(m, 3), 2, 3, 5, Activation::Tanh).unwrap();
                partial_bound_check(&p, 2, &xs).unwrap()
            })
            .collect();
        let (lo, hi) = (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(0.0, f64::max));
        assert!(hi / lo < 1.5, "{c:?}");
    }

    fn naive_gamma(p: &DeepParams, q: &DeepParams, x: &[f64], y: &[f64]) -> f64 {
        // materialized Jacobians of both networks with respect to W^{L−1}
        let jac = |net: &DeepParams, pt: &[f64]| -> DMatrix<f64> {
            let xs = DMatrix::from_column_slice(2, 1, pt);
            let fwd = forward_deep(net, &xs).unwrap();
            let l = net.depth();
            let prev = &fwd.layers[l - 2];
            let last = &fwd.layers[l - 1];
            let (ml, mprev) = (net.widths()[l] as f64, net.widths()[l - 1] as f64);
            DMatrix::from_fn(net.trained().nrows(), net.trained().ncols(), |i, j| {
                net.w_last()[i] * net.activation().derivative(last[(i, 0)]) * net.activation().value(prev[(j, 0)])
                    / (ml.sqrt() * mprev.sqrt())
            })
        };
        jac(p, x).dot(&jac(q, y))
    }

    #[test]
    fn gamma_matches_naive_jacobian_contraction() {
        let p = init_deep(&uniform_widths(64, 3), 2, 3, 6, Activation::Tanh).unwrap();
        let q = perturb_trained(&p, 0.2, 9).unwrap();
        let (x, y) = ([0.3f64.cos(), 0.3f64.sin()], [2.0f64.cos(), 2.0f64.sin()]);
        for (a, b) in [(&p, &p), (&p, &q), (&q, &p)] {
            let fast = empirical_gamma(a, Some(b), &x, &y).unwrap();
            let slow = naive_gamma(a, b, &x, &y);
            assert!((fast - slow).abs() < 1e-10, "{fast} {slow}");
        }
    }

    #[test]
    fn gamma_symmetric_nonnegative_psd() {
        let p = small(7);
        let thetas = holder_points(Domain::CircleFourier, 24);
        let xs = circle_points(&thetas);
        let g = gamma_matrix(&p, None, &xs, &xs).unwrap();
        assert!((&g - g.transpose()).amax() < 1e-10);
        assert!((0..24).all(|i| g[(i, i)] >= 0.0));
        assert!(gamma_psd_ratio(&p, &thetas).unwrap() >= -1e-8);
    }

    #[test]
    fn gamma_rejects_mismatched_fixed_layers() {
        let (p, q) = (small(1), small(2));
        assert!(empirical_gamma(&p, Some(&q), &[1.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn gp_layer_zero_is_identity_and_bounded_by_diagonal() {
        let t: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 / 20.0).collect();
        let table = gp_recursion(Activation::Tanh, &t, 4, GH_ORDER).unwrap();
        assert_eq!(table.sigma[0], t);
        for l in 0..=4 {
            for v in &table.sigma[l] {
                assert!(*v <= table.diagonal[l] * (1.0 + 1e-12), "layer {l}");
            }
        }
        assert!(table.bounds_hold() && table.c_sigma > 0.0);
        assert!(table.cap_sigma >= table.c_sigma);
        assert!(!table.clamped);
        // odd activation keeps every layer odd in t
        assert!((table.sigma[2][0] + table.sigma[2][40]).abs() < 1e-12);
    }

    #[test]
    fn gp_first_layer_matches_monte_carlo() {
        let table = gp_recursion(Activation::Tanh, &[1.0], 1, GH_ORDER).unwrap();
        let mut r = rng::stream(11, "mc");
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut r);
            let v = z.tanh().powi(2);
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((table.diagonal[1] - mean).abs() < 3.0 * se, "{} {mean} {se}", table.diagonal[1]);
        assert!((table.sigma[1][0] - table.diagonal[1]).abs() < 1e-12);
    }

    #[test]
    fn gp_rejects_out_of_range_angles() {
        assert!(gp_recursion(Activation::Tanh, &[1.5], 2, GH_ORDER).is_err());
    }

    #[test]
    fn gp_csv_layout() {
        let table = gp_recursion(Activation::Tanh, &[-1.0, 0.0, 1.0], 2, 16).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,sigma_0,sigma_1,sigma_2");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0.0,0.0,"));
    }

    #[test]
    fn partial_bound_ratio_across_widths() {
        let xs = circle_points(&holder_points(Domain::CircleFourier, 16));
        let ratios: Vec<f64> = [32, 64, 128, 256]
            .iter()
            .map(|&m| {
                let p = init_deep(&uniform_widths(m, 3), 2, 3, 1, Activation::Tanh).unwrap();
                partial_bound_check(&p, 2, &xs).unwrap()
            })
            .collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        assert!(hi / lo < 3.0 && lo > 0.0, "{ratios:?}");
        let p = small(3);
        for ell in 0..=3 {
            assert!(partial_bound_check(&p, ell, &xs).unwrap().is_finite());
        }
        assert!(partial_bound_check(&p, 4, &xs).is_err());
        let zero = p.with_trained(DMatrix::zeros(32, 32)).unwrap();
        assert!(partial_bound_check(&zero, 2, &xs).unwrap().is_finite());
    }

    #[test]
    fn partial_bound_matches_naive_gradient_layer() {
        // the trained-layer partial is u vᵀ, so its norm is ‖u‖‖v‖
        let p = small(8);
        let xs = circle_points(&[1.1]);
        let f = ntk_factors(&p, &xs).unwrap();
        let direct = f.u.column(0).norm() * f.v.column(0).norm();
        assert!((partial_bound_check(&p, 2, &xs).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn forward_moments_approach_gp() {
        let thetas = holder_points(Domain::CircleFourier, 8);
        let seeds: Vec<u64> = (0..12).collect();
        let rows = gamma_vs_gp_consistency(Activation::Tanh, 3, &[64, 256, 1024], &seeds, &thetas).unwrap();
        let dev = |w: usize, l: usize| rows.iter().find(|r| r.width == w && r.layer == l).unwrap().median_deviation;
        for &m in &[64usize, 256, 1024] {
            assert!(dev(m, 0) <= 3.5 / (m as f64).sqrt(), "layer 0 width {m}");
        }
        for l in 0..=3 {
            for (a, b) in [(64, 256), (256, 1024)] {
                let ratio = dev(b, l) / dev(a, l);
                assert!((0.25..=0.75).contains(&ratio), "layer {l} {a}->{b}: {ratio}");
            }
        }
        let again = gamma_vs_gp_consistency(Activation::Tanh, 3, &[64, 256, 1024], &seeds, &thetas).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn schedule_formulas() {
        let s = make_deep_schedule(256, 0.25, 0.5, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert!((s.h - 256f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        assert!((s.tau - s.h.powf(1.0) * 256.0).abs() < 1e-12);
        assert!((s.gamma - 0.5 * s.h * 16.0).abs() < 1e-15);
        assert!(make_deep_schedule(256, 0.25, 0.75, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(make_deep_schedule(256, 0.6, 0.1, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(make_deep_schedule(256, 0.25, 0.5, 0.0, 1.0, 1.0, 0.5).is_err());
        assert_eq!(s.with_gamma_cap(0.01).gamma, 0.01);
    }

    #[test]
    fn zero_network_and_zero_target_stop_immediately() {
        let p = small(1).with_trained(DMatrix::zeros(32, 32)).unwrap();
        let grid = QuadratureGrid::circle_trapezoid(64).unwrap();
        let sched = make_deep_schedule(32, 0.25, 0.5, 1.0, 1.0, 1.0, 0.5).unwrap();
        let target = SpectralCoeffs::zeros(Domain::CircleFourier, 17);
        let opts = DeepTrainOptions { modes: 8, record_residuals: false };
        let (trace, _) = train_deep(&p, &target, &sched, &grid, 100, &opts).unwrap();
        assert_eq!(trace.len(), 1);
        assert!(trace.reached_threshold());
    }

    #[test]
    fn training_decreases_loss_and_freezes_other_layers() {
        let grid = QuadratureGrid::circle_trapezoid(64).unwrap();
        for seed in 1..=3u64 {
            let p = init_deep(&uniform_widths(256, 3), 2, 3, seed, Activation::Tanh).unwrap();
            let target = circle_target(seed);
            let sched = make_deep_schedule(256, 0.25, 0.5, 1.0, 0.5, 0.5, 0.5).unwrap();
            let opts = DeepTrainOptions { modes: 16, record_residuals: false };
            let (trace, fin) = train_deep(&p, &target, &sched, &grid, 200, &opts).unwrap();
            assert!(trace.abort.is_none());
            assert_eq!(trace.first_non_decrease(), None, "seed {seed}");
            assert!(trace.len() > 2);
            assert_eq!(fin.fixed_fingerprint(), p.fixed_fingerprint());
            assert_ne!(fin.trained(), p.trained());
            assert_eq!(trace.records[0].layer_norms.len(), 3);
            let direct = linalg::spectral_norm(&(fin.trained() - p.trained())) / 16.0;
            let last = trace.last().unwrap();
            // the recorded distance is for the last state reached
            assert!((last.weight_dist - direct).abs() < 1e-9 * direct.max(1.0), "{} {direct}", last.weight_dist);
            let xs = circle_points(grid.nodes());
            let c0 = partial_bound_check(&p, 2, &xs).unwrap();
            let ratios = weight_distance_ratios(&trace, 256, 256);
            let cmax = ratios.iter().copied().fold(0.0, f64::max);
            assert!(cmax > 0.0 && cmax <= 1.5 * c0, "{cmax} {c0}");
        }
    }

    #[test]
    fn beta_estimate_is_positive_on_odd_harmonics() {
        let grid = QuadratureGrid::circle_trapezoid(64).unwrap();
        let p = init_deep(&uniform_widths(512, 3), 2, 3, 1, Activation::Tanh).unwrap();
        let beta = estimate_beta(&p, &grid, &[1, 3, 5]).unwrap();
        assert!(beta > 0.0, "{beta}");
        assert!(estimate_beta(&p, &grid, &[0, 1]).is_err());
    }

    #[test]
    fn projection_of_network_output_has_odd_symmetry() {
        // tanh networks are odd in x, so only odd harmonics appear
        let p = small(5);
        let grid = QuadratureGrid::circle_trapezoid(64).unwrap();
        let c = analyze(|th| forward_deep(&p, &circle_points(&[th])).unwrap().output[0], &grid, 8).unwrap();
        for k in [2usize, 4, 6] {
            assert!(c.coeffs()[2 * k - 1].abs() < 1e-12 && c.coeffs()[2 * k].abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn gamma_symmetry_holds(seed in 0u64..1000, a in 0.0f64..std::f64::consts::TAU, b in 0.0f64..std::f64::consts::TAU) {
            let p = small(seed);
            let (x, y) = ([a.cos(), a.sin()], [b.cos(), b.sin()]);
            let g1 = empirical_gamma(&p, None, &x, &y).unwrap();
            let g2 = empirical_gamma(&p, None, &y, &x).unwrap();
            prop_assert!((g1 - g2).abs() < 1e-10);
            prop_assert!(empirical_gamma(&p, None, &x, &x).unwrap() >= 0.0);
        }

        #[test]
        fn perturbation_radius_is_exact(seed in 0u64..1000, r in 0.01f64..0.5) {
            let p = small(seed);
            let q = perturb_trained(&p, r, seed).unwrap();
            let d = linalg::spectral_norm(&(q.trained() - p.trained())) / (p.m() as f64).sqrt();
            prop_assert!((d - r).abs() < 1e-10 * r.max(1.0));
            prop_assert_eq!(q.fixed_fingerprint(), p.fixed_fingerprint());
        }
    }
}
