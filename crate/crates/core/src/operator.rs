//! Discretized integral operators `(Hv)(x) = ∫ k(x, y) v(y) dy`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::{Domain, QuadratureGrid};
use crate::rng;
use crate::spectral1d::{coeff_len, multiplier, Projector, SpectralCoeffs};

/// A kernel sampled on a quadrature grid.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    grid: QuadratureGrid,
    values: DMatrix<f64>,
}

impl KernelOperator {
    pub fn assemble<K>(kernel: K, grid: &QuadratureGrid) -> Result<Self>
    where
        K: Fn(f64, f64) -> f64 + Sync,
    {
        let nodes = grid.nodes();
        let n = nodes.len();
        let rows: Vec<Vec<f64>> = nodes.par_iter().map(|&x| nodes.iter().map(|&y| kernel(x, y)).collect()).collect();
        let mut values = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Assembly { i, j, value: v });
                }
                values[(i, j)] = v;
            }
        }
        Ok(KernelOperator { grid: grid.clone(), values })
    }

    pub fn from_values(grid: &QuadratureGrid, values: DMatrix<f64>) -> Result<Self> {
        let n = grid.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::arg(format!("kernel matrix is {}x{}, grid has {n} nodes", values.nrows(), values.ncols())));
        }
        for j in 0..n {
            for i in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Assembly { i, j, value: v });
                }
            }
        }
        Ok(KernelOperator { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let wv = DVector::from_iterator(v.len(), self.grid.weights().iter().zip(v).map(|(w, x)| w * x));
        (&self.values * wv).as_slice().to_vec()
    }

    pub fn asymmetry(&self) -> f64 {
        linalg::relative_asymmetry(&self.values)
    }

    /// Matrix of ⟨φ_j, H φ_k⟩ over the first `modes` modes.
    pub fn gram(&self, modes: usize) -> Result<SpectralGram> {
        let p = Projector::new(&self.grid, modes)?;
        let bw = p.weighted_basis();
        let left = bw * &self.values;
        let g = left * bw.transpose();
        Ok(SpectralGram { basis: self.grid.domain(), matrix: g })
    }

    /// Top `count` eigenpairs, eigenvalues descending.
    pub fn eigendecompose(&self, count: usize) -> Result<Vec<EigenPair>> {
        let asym = self.asymmetry();
        if asym > 1e-8 {
            return Err(Error::Asymmetric(asym));
        }
        let n = self.grid.len();
        let sw: Vec<f64> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * sw[i] * (self.values[(i, j)] + self.values[(j, i)]) * sw[j]);
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let projector = Projector::new(&self.grid, self.grid.max_modes())?;
        let pairs = order
            .into_iter()
            .take(count.min(n))
            .map(|idx| {
                let mut nodal: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, idx)] / sw[i]).collect();
                let mut coeffs = projector.analyze_values(&nodal);
                let cmax = coeffs.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs()));
                let lead = coeffs.coeffs().iter().copied().find(|c| c.abs() > 1e-6 * cmax);
                if lead.is_some_and(|c| c < 0.0) {
                    nodal.iter_mut().for_each(|v| *v = -*v);
                    coeffs = coeffs.scaled(-1.0);
                }
                EigenPair { value: eig.eigenvalues[idx], nodal, coeffs }
            })
            .collect();
        Ok(pairs)
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// L2-normalized eigenfunction at the grid nodes.
    pub nodal: Vec<f64>,
    pub coeffs: SpectralCoeffs,
}

/// An operator represented in the orthonormal spectral basis,
/// entry (j, k) = ⟨φ_j, H φ_k⟩.
#[derive(Debug, Clone)]
pub struct SpectralGram {
    basis: Domain,
    matrix: DMatrix<f64>,
}

impl SpectralGram {
    pub fn new(basis: Domain, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::arg("Gram matrix must be square"));
        }
        Ok(SpectralGram { basis, matrix })
    }

    /// Diagonal operator with the given eigenvalues in the spectral basis.
    pub fn diagonal(basis: Domain, eigenvalues: &[f64]) -> Self {
        SpectralGram { basis, matrix: DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues)) }
    }

    /// `scale · L Rᵀ` for feature tables L, R of shape `len × features`.
    pub fn from_features(basis: Domain, left: &DMatrix<f64>, right: &DMatrix<f64>, scale: f64) -> Result<Self> {
        if left.shape() != right.shape() {
            return Err(Error::arg("feature tables differ in shape"));
        }
        Ok(SpectralGram { basis, matrix: (left * right.transpose()) * scale })
    }

    pub fn basis(&self) -> Domain {
        self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sub(&self, other: &SpectralGram) -> Result<SpectralGram> {
        if self.basis != other.basis || self.len() != other.len() {
            return Err(Error::arg("Gram matrices are not compatible"));
        }
        Ok(SpectralGram { basis: self.basis, matrix: &self.matrix - &other.matrix })
    }

    pub fn asymmetry(&self) -> f64 {
        linalg::relative_asymmetry(&self.matrix)
    }

    /// ‖H‖ as a map from H⁰ to H^S, restricted to the first `modes` modes.
    pub fn op_norm(&self, s_order: f64, modes: usize) -> Result<f64> {
        let len = coeff_len(self.basis, modes);
        if len > self.len() {
            return Err(Error::Aliasing { requested: modes, max: crate::spectral1d::modes_for_len(self.basis, self.len()) });
        }
        let m = DMatrix::from_fn(len, len, |i, j| multiplier(self.basis, i, s_order) * self.matrix[(i, j)]);
        Ok(linalg::spectral_norm(&m))
    }

    pub fn apply(&self, v: &SpectralCoeffs) -> SpectralCoeffs {
        let n = self.len();
        let x = DVector::from_iterator(n, (0..n).map(|j| v.coeffs().get(j).copied().unwrap_or(0.0)));
        let y = &self.matrix * x;
        SpectralCoeffs::new(self.basis, y.as_slice().to_vec()).expect("finite Gram product")
    }

    /// ⟨v, H v⟩_S = Σ_j mult_j^{2S} v_j (Hv)_j.
    pub fn quadratic_form(&self, v: &SpectralCoeffs, s_order: f64) -> f64 {
        let hv = self.apply(v);
        hv.coeffs()
            .iter()
            .enumerate()
            .map(|(j, h)| multiplier(self.basis, j, 2.0 * s_order) * v.coeffs().get(j).copied().unwrap_or(0.0) * h)
            .sum()
    }
}

/// ‖H‖ from H⁰ to H^S on the first `modes` modes of the grid basis.
pub fn op_norm_s0(op: &KernelOperator, s_order: f64, modes: usize) -> Result<f64> {
    op.gram(modes)?.op_norm(s_order, modes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    pub min_ratio: f64,
    pub mean_ratio: f64,
}

/// Ratios ⟨v, Hv⟩_S / ‖v‖²_{S−β} over random Gaussian coefficient vectors
/// supported on `support` (all modes of the Gram if `None`).
pub fn coercivity_check(
    gram: &SpectralGram,
    beta: f64,
    s_order: f64,
    trials: usize,
    seed: u64,
    support: Option<&[usize]>,
) -> Result<CoercivityReport> {
    if trials == 0 {
        return Err(Error::arg("coercivity check needs at least one trial"));
    }
    let all: Vec<usize> = (0..gram.len()).collect();
    let support = support.unwrap_or(&all);
    if support.iter().any(|&j| j >= gram.len()) {
        return Err(Error::arg("coercivity support exceeds the Gram truncation"));
    }
    let mut rng = rng::stream(seed, "coercivity");
    let mut min_ratio = f64::INFINITY;
    let mut sum = 0.0;
    for _ in 0..trials {
        let mut c = vec![0.0; gram.len()];
        for &j in support {
            c[j] = StandardNormal.sample(&mut rng);
        }
        let v = SpectralCoeffs::new(gram.basis(), c)?;
        let ratio = gram.quadratic_form(&v, s_order) / v.sobolev_norm_sq(s_order - beta);
        min_ratio = min_ratio.min(ratio);
        sum += ratio;
    }
    Ok(CoercivityReport { min_ratio, mean_ratio: sum / trials as f64 })
}

/// β̂ with λ_k ∝ mult_k^{−2β̂}, fitted over `eigenvalues[window]` matched to
/// spectral index k.
pub fn fit_beta(eigenvalues: &[f64], basis: Domain, window: std::ops::Range<usize>) -> Result<f64> {
    let indices: Vec<usize> = window.collect();
    let values: Vec<f64> = indices
        .iter()
        .map(|&k| eigenvalues.get(k).copied().ok_or_else(|| Error::arg("fit window exceeds eigenvalue count")))
        .collect::<Result<_>>()?;
    fit_beta_values(&indices, &values, basis, eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// β̂ from the diagonal Gram entries ⟨φ_k, Hφ_k⟩ at the given indices; exact
/// for operators diagonal in the basis (zonal kernels on the circle).
pub fn fit_beta_at(gram: &SpectralGram, indices: &[usize]) -> Result<f64> {
    let values: Vec<f64> = indices
        .iter()
        .map(|&k| if k < gram.len() { Ok(gram.matrix()[(k, k)]) } else { Err(Error::arg("fit index exceeds the Gram truncation")) })
        .collect::<Result<_>>()?;
    let scale = (0..gram.len()).fold(0.0f64, |m, k| m.max(gram.matrix()[(k, k)].abs()));
    fit_beta_values(indices, &values, gram.basis(), scale)
}

fn fit_beta_values(indices: &[usize], values: &[f64], basis: Domain, scale: f64) -> Result<f64> {
    if indices.len() < 2 {
        return Err(Error::arg("fit window needs at least two eigenvalues"));
    }
    if let Some(pos) = values.iter().position(|&v| v <= 1e-12 * scale || !v.is_finite()) {
        return Err(Error::refused(format!("eigenvalue at index {} is not positive ({:e})", indices[pos], values[pos])));
    }
    let x: Vec<f64> = indices.iter().map(|&k| multiplier(basis, k, 1.0)).collect();
    let fit = linalg::log_log_slope(&x, values)?;
    Ok(-fit.slope / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderEstimate {
    pub s_exp: f64,
    pub t_exp: f64,
    pub sup_term: f64,
    pub x_quotient: f64,
    pub y_quotient: f64,
    pub mixed_quotient: f64,
    pub grid_spacing: f64,
    pub min_separation: f64,
}

impl HolderEstimate {
    pub fn estimate(&self) -> f64 {
        self.sup_term + self.x_quotient + self.y_quotient + self.mixed_quotient
    }
}

/// Uniform sample points used by the Hölder estimator: `n` equispaced points
/// on [-1, 1] (nested when `n − 1` doubles) or `n` angles on the circle
/// (nested when `n` doubles).
pub fn holder_points(domain: Domain, n: usize) -> Vec<f64> {
    match domain {
        Domain::Interval1d => {
            if n == 1 {
                return vec![0.0];
            }
            (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
        }
        Domain::CircleFourier => (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect(),
    }
}

fn holder_spacing(domain: Domain, n: usize) -> f64 {
    match domain {
        Domain::Interval1d => 2.0 / (n.max(2) - 1) as f64,
        Domain::CircleFourier => 2.0 * PI / n as f64,
    }
}

fn distance(domain: Domain, a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    match domain {
        Domain::Interval1d => d,
        Domain::CircleFourier => d.min(2.0 * PI - d),
    }
}

/// Lower bound for the C^{s,t} norm of `kernel` from a uniform grid.
pub fn holder_norm_estimate<K>(kernel: K, domain: Domain, s_exp: f64, t_exp: f64, grid_n: usize, min_sep: f64) -> Result<HolderEstimate>
where
    K: Fn(f64, f64) -> f64 + Sync,
{
    let pts = holder_points(domain, grid_n);
    let rows: Vec<Vec<f64>> = pts.par_iter().map(|&x| pts.iter().map(|&y| kernel(x, y)).collect()).collect();
    let m = DMatrix::from_fn(pts.len(), pts.len(), |i, j| rows[i][j]);
    holder_from_values(&m, &pts, domain, s_exp, t_exp, min_sep)
}

/// Same estimate from kernel values `values[(i, j)] = k(pts[i], pts[j])`
/// on a uniform grid produced by [`holder_points`].
pub fn holder_from_values(
    values: &DMatrix<f64>,
    pts: &[f64],
    domain: Domain,
    s_exp: f64,
    t_exp: f64,
    min_sep: f64,
) -> Result<HolderEstimate> {
    if !(s_exp > 0.0 && s_exp <= 1.0 && t_exp > 0.0 && t_exp <= 1.0) {
        return Err(Error::arg(format!("Hölder exponents must lie in (0, 1], got ({s_exp}, {t_exp})")));
    }
    let n = pts.len();
    if n < 2 || values.nrows() != n || values.ncols() != n {
        return Err(Error::arg("Hölder estimate needs at least two matching grid points"));
    }
    let spacing = holder_spacing(domain, n);
    if !(min_sep > 0.0) || min_sep < spacing * (1.0 - 1e-12) {
        return Err(Error::refused(format!("minimum separation {min_sep} is below the grid spacing {spacing}")));
    }
    let sup_term = values.amax();
    let pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let d = distance(domain, pts[i], pts[j]);
            (d >= min_sep * (1.0 - 1e-12)).then_some((i, j, d))
        })
        .collect();

    let (x_quotient, y_quotient) = pairs
        .par_iter()
        .map(|&(i, ip, d)| {
            let (ds, dt) = (d.powf(s_exp), d.powf(t_exp));
            let mut qx: f64 = 0.0;
            let mut qy: f64 = 0.0;
            for y in 0..n {
                qx = qx.max((values[(i, y)] - values[(ip, y)]).abs() / ds);
                qy = qy.max((values[(y, i)] - values[(y, ip)]).abs() / dt);
            }
            (qx, qy)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));

    let mixed_quotient = pairs
        .par_iter()
        .map(|&(i, ip, dx)| {
            let dxs = dx.powf(s_exp);
            let mut q: f64 = 0.0;
            for &(j, jp, dy) in &pairs {
                let num = values[(i, j)] - values[(ip, j)] - values[(i, jp)] + values[(ip, jp)];
                q = q.max(num.abs() / (dxs * dy.powf(t_exp)));
            }
            q
        })
        .reduce(|| 0.0, f64::max);

    Ok(HolderEstimate { s_exp, t_exp, sup_term, x_quotient, y_quotient, mixed_quotient, grid_spacing: spacing, min_separation: min_sep })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Sampling used for the Hölder factor of the duality check.
#[derive(Debug, Clone, Copy)]
pub struct HolderSampling {
    pub grid_n: usize,
    /// Minimum separation in multiples of the grid spacing.
    pub sep_factor: f64,
}

impl Default for HolderSampling {
    fn default() -> Self {
        HolderSampling { grid_n: 33, sep_factor: 4.0 }
    }
}

/// Compares ∬ f k g with ‖f‖_{−s}‖g‖_{−t}‖k‖_{C^{s+ε, t+ε}}.
#[allow(clippy::too_many_arguments)]
pub fn kernel_duality_bound_check<K>(
    kernel: K,
    f: &SpectralCoeffs,
    g: &SpectralCoeffs,
    grid: &QuadratureGrid,
    s_exp: f64,
    t_exp: f64,
    eps: f64,
    sampling: HolderSampling,
) -> Result<DualityReport>
where
    K: Fn(f64, f64) -> f64 + Sync,
{
    if !(eps > 0.0 && s_exp > 0.0 && t_exp > 0.0 && s_exp + eps <= 1.0 && t_exp + eps < 1.0) {
        return Err(Error::arg(format!("duality exponents out of range: s={s_exp}, t={t_exp}, eps={eps}")));
    }
    let op = KernelOperator::assemble(&kernel, grid)?;
    let fv = f.synthesize(grid)?;
    let gv = g.synthesize(grid)?;
    let lhs = grid.dot(&fv, &op.apply(&gv));
    let domain = grid.domain();
    let min_sep = sampling.sep_factor * holder_spacing(domain, sampling.grid_n);
    let holder = holder_norm_estimate(&kernel, domain, s_exp + eps, t_exp + eps, sampling.grid_n, min_sep)?;
    let rhs = f.sobolev_norm(-s_exp) * g.sobolev_norm(-t_exp) * holder.estimate();
    let slack = 2.0;
    Ok(DualityReport { lhs, rhs, slack, holds: lhs.abs() <= rhs * slack })
}
