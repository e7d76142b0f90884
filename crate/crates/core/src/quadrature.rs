//! Quadrature rules on the two computational domains.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// The interval [-1, 1] with the sine basis.
    Interval1d,
    /// The circle, parametrised by angle in [0, 2π), with the Fourier basis.
    CircleFourier,
}

impl Domain {
    pub fn measure(self) -> f64 {
        match self {
            Domain::Interval1d => 2.0,
            Domain::CircleFourier => 2.0 * PI,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Interval1d => "[-1,1]",
            Domain::CircleFourier => "S^1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    domain: Domain,
}

impl QuadratureGrid {
    /// Gauss–Legendre rule with `n` nodes on [-1, 1], ascending.
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("quadrature needs at least one node"));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess for the i-th largest root.
            let theta = PI * (i as f64 + 0.75) / (nf + 0.5);
            let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[n - 1 - i] = x;
            nodes[i] = -x;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(QuadratureGrid { nodes, weights, domain: Domain::Interval1d })
    }

    /// Uniform trapezoid rule with `n` nodes on [0, 2π).
    pub fn circle_trapezoid(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("quadrature needs at least one node"));
        }
        let h = 2.0 * PI / n as f64;
        let nodes = (0..n).map(|i| i as f64 * h).collect();
        Ok(QuadratureGrid { nodes, weights: vec![h; n], domain: Domain::CircleFourier })
    }

    /// Smallest grid rated for `modes` modes (interval) or harmonics (circle).
    pub fn for_modes(domain: Domain, modes: usize) -> Result<Self> {
        let n = 4 * modes.max(1);
        match domain {
            Domain::Interval1d => Self::gauss_legendre(n),
            Domain::CircleFourier => Self::circle_trapezoid(n),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Polynomial degree (interval) or trigonometric degree (circle)
    /// integrated exactly.
    pub fn exactness(&self) -> usize {
        match self.domain {
            Domain::Interval1d => 2 * self.len() - 1,
            Domain::CircleFourier => self.len() - 1,
        }
    }

    /// Largest truncation this grid resolves without aliasing.
    pub fn max_modes(&self) -> usize {
        self.len() / 4
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        self.dot(values, values).sqrt()
    }

    /// Spacing of the grid (largest gap between neighbouring nodes).
    pub fn spacing(&self) -> f64 {
        match self.domain {
            Domain::CircleFourier => 2.0 * PI / self.len() as f64,
            Domain::Interval1d => self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
        }
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (x * p - pm1) / (x * x - 1.0);
    (p, d)
}

/// Gauss–Hermite rule for the standard normal measure (weights sum to 1).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("Gauss-Hermite order must be positive"));
        }
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let off = (k as f64).sqrt();
            jacobi[(k - 1, k)] = off;
            jacobi[(k, k - 1)] = off;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(GaussHermite { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1 / total).collect() })
    }

    /// E[f(Z)] for Z ~ N(0, 1).
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }

    /// E[f(Z1, Z2)] for independent standard normals.
    pub fn expect2(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (&z1, &w1) in self.nodes.iter().zip(&self.weights) {
            let mut inner = 0.0;
            for (&z2, &w2) in self.nodes.iter().zip(&self.weights) {
                inner += w2 * f(z1, z2);
            }
            acc += w1 * inner;
        }
        acc
    }
}
