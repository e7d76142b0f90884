//! Spectral function spaces on [-1, 1] and on the circle.
//!
//! On the interval the basis is
//!
//! ```text
//! φ_k(x) = sin(ω_k x − π/4)   (k even)
//! φ_k(x) = sin(ω_k x + π/4)   (k odd),      ω_k = π/4 + kπ/2,
//! ```
//!
//! which is orthonormal in L2(-1, 1). On the circle the basis is the real
//! Fourier system, stored as `[1, cos θ, sin θ, cos 2θ, sin 2θ, ...]` with
//! L2 normalisation. Sobolev norms are diagonal in both bases.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature::{Domain, QuadratureGrid};
use crate::rng;

#[inline]
pub fn omega(k: usize) -> f64 {
    FRAC_PI_4 + FRAC_PI_2 * k as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequency {
    pub k: usize,
    pub omega: f64,
}

impl Frequency {
    pub fn new(k: usize) -> Self {
        Frequency { k, omega: omega(k) }
    }
}

#[inline]
fn phase(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        -FRAC_PI_4
    } else {
        FRAC_PI_4
    }
}

#[inline]
fn interval_basis(k: usize, x: f64) -> f64 {
    (omega(k) * x + phase(k)).sin()
}

/// Harmonic number of the `j`-th circle coefficient.
#[inline]
pub fn circle_harmonic(j: usize) -> usize {
    j.div_ceil(2)
}

#[inline]
fn circle_basis(j: usize, theta: f64) -> f64 {
    if j == 0 {
        return 1.0 / (2.0 * PI).sqrt();
    }
    let k = circle_harmonic(j) as f64;
    if j % 2 == 1 {
        (k * theta).cos() / PI.sqrt()
    } else {
        (k * theta).sin() / PI.sqrt()
    }
}

/// φ_k(x) on [-1, 1].
pub fn eval_basis(k: usize, x: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain { x, domain: Domain::Interval1d.name() });
    }
    Ok(interval_basis(k, x))
}

/// The `j`-th basis function of either domain, without a range check.
#[inline]
pub fn basis_value(domain: Domain, j: usize, x: f64) -> f64 {
    match domain {
        Domain::Interval1d => interval_basis(j, x),
        Domain::CircleFourier => circle_basis(j, x),
    }
}

/// Diagonal Sobolev weight of the `j`-th coefficient at order `s`.
#[inline]
pub fn multiplier(domain: Domain, j: usize, s: f64) -> f64 {
    match domain {
        Domain::Interval1d => omega(j).powf(s),
        Domain::CircleFourier => {
            let k = circle_harmonic(j) as f64;
            (1.0 + k * k).powf(0.5 * s)
        }
    }
}

/// Number of coefficients for a truncation of `modes` modes (interval) or
/// `modes` harmonics (circle).
pub fn coeff_len(domain: Domain, modes: usize) -> usize {
    match domain {
        Domain::Interval1d => modes,
        Domain::CircleFourier => 2 * modes + 1,
    }
}

/// Modes needed to hold `len` coefficients.
pub fn modes_for_len(domain: Domain, len: usize) -> usize {
    match domain {
        Domain::Interval1d => len,
        Domain::CircleFourier => len / 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    coeffs: Vec<f64>,
    basis: Domain,
}

impl SpectralCoeffs {
    pub fn new(basis: Domain, coeffs: Vec<f64>) -> Result<Self> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::arg(format!("coefficient {i} is not finite")));
        }
        Ok(SpectralCoeffs { coeffs, basis })
    }

    pub fn zeros(basis: Domain, len: usize) -> Self {
        SpectralCoeffs { coeffs: vec![0.0; len], basis }
    }

    pub fn unit(basis: Domain, len: usize, j: usize) -> Self {
        let mut c = Self::zeros(basis, len);
        c.coeffs[j] = 1.0;
        c
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn basis(&self) -> Domain {
        self.basis
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(j, c)| multiplier(self.basis, j, 2.0 * s) * c * c).sum()
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        SpectralCoeffs { coeffs: self.coeffs.iter().map(|c| alpha * c).collect(), basis: self.basis }
    }

    /// Truncate or zero-pad to `len` coefficients.
    pub fn resized(&self, len: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(len, 0.0);
        SpectralCoeffs { coeffs, basis: self.basis }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, c)| c * basis_value(self.basis, j, x)).sum()
    }

    /// Values of the expansion at the nodes of `grid`.
    pub fn synthesize(&self, grid: &QuadratureGrid) -> Result<Vec<f64>> {
        if grid.domain() != self.basis {
            return Err(Error::arg("grid and coefficients live on different domains"));
        }
        Ok(grid.nodes().iter().map(|&x| self.eval(x)).collect())
    }

    /// `index,coefficient` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "index,coefficient")?;
        for (j, c) in self.coeffs.iter().enumerate() {
            writeln!(out, "{j},{c}")?;
        }
        Ok(())
    }
}

/// Cached basis tables for repeated analysis and synthesis on one grid.
#[derive(Debug, Clone)]
pub struct Projector {
    grid: QuadratureGrid,
    /// `len × N`, entry (j, i) = w_i φ_j(x_i).
    weighted: DMatrix<f64>,
    /// `N × len`, entry (i, j) = φ_j(x_i).
    values: DMatrix<f64>,
}

impl Projector {
    pub fn new(grid: &QuadratureGrid, modes: usize) -> Result<Self> {
        check_aliasing(grid, modes)?;
        let domain = grid.domain();
        let len = coeff_len(domain, modes);
        let n = grid.len();
        let values = DMatrix::from_fn(n, len, |i, j| basis_value(domain, j, grid.nodes()[i]));
        let weighted = DMatrix::from_fn(len, n, |j, i| grid.weights()[i] * values[(i, j)]);
        Ok(Projector { grid: grid.clone(), weighted, values })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.weighted.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `len × N` table of w_i φ_j(x_i).
    pub fn weighted_basis(&self) -> &DMatrix<f64> {
        &self.weighted
    }

    /// `N × len` table of φ_j(x_i).
    pub fn basis_values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn analyze_values(&self, values: &[f64]) -> SpectralCoeffs {
        let v = DVector::from_column_slice(values);
        let c = &self.weighted * v;
        SpectralCoeffs { coeffs: c.as_slice().to_vec(), basis: self.grid.domain() }
    }

    pub fn synthesize(&self, c: &SpectralCoeffs) -> Vec<f64> {
        let mut padded = c.coeffs.clone();
        padded.resize(self.len(), 0.0);
        let v = &self.values * DVector::from_vec(padded);
        v.as_slice().to_vec()
    }
}

fn check_aliasing(grid: &QuadratureGrid, modes: usize) -> Result<()> {
    let max = grid.max_modes();
    if modes > max {
        return Err(Error::Aliasing { requested: modes, max });
    }
    Ok(())
}

/// Coefficients ⟨φ_j, f⟩ by quadrature, for `modes` modes (interval) or
/// harmonics (circle).
pub fn analyze(f: impl Fn(f64) -> f64, grid: &QuadratureGrid, modes: usize) -> Result<SpectralCoeffs> {
    check_aliasing(grid, modes)?;
    let domain = grid.domain();
    let fx: Vec<f64> = grid.nodes().iter().map(|&x| f(x)).collect();
    let coeffs = (0..coeff_len(domain, modes))
        .map(|j| grid.nodes().iter().zip(grid.weights()).zip(&fx).map(|((&x, &w), &v)| w * v * basis_value(domain, j, x)).sum())
        .collect();
    SpectralCoeffs::new(domain, coeffs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Compares ‖c‖_b with ‖c‖_a^{1−θ}‖c‖_csup^θ, θ = (b−a)/(csup−a).
pub fn interpolation_check(c: &SpectralCoeffs, a: f64, b: f64, csup: f64) -> Result<InterpolationReport> {
    if !(a < b && b < csup) {
        return Err(Error::arg(format!("interpolation orders must satisfy a < b < c, got ({a}, {b}, {csup})")));
    }
    let theta = (b - a) / (csup - a);
    let lhs = c.sobolev_norm(b);
    let rhs = c.sobolev_norm(a).powf(1.0 - theta) * c.sobolev_norm(csup).powf(theta);
    if !lhs.is_finite() || !rhs.is_finite() {
        return Err(Error::arg("interpolation norms are not finite"));
    }
    let ratio = if rhs == 0.0 {
        if lhs == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    };
    Ok(InterpolationReport { lhs, rhs, ratio })
}

/// Which modes a synthesized target may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parity {
    #[default]
    All,
    /// Odd circle harmonics only (functions with f(−x) = −f(x)).
    Odd,
}

/// Random-sign target with coefficient magnitudes `mult_j^{−(s+1/2+margin)}`.
pub fn synthesize_target(basis: Domain, s: f64, modes: usize, margin: f64, seed: u64) -> Result<SpectralCoeffs> {
    synthesize_target_with(basis, s, modes, margin, seed, Parity::All)
}

pub fn synthesize_target_with(basis: Domain, s: f64, modes: usize, margin: f64, seed: u64, parity: Parity) -> Result<SpectralCoeffs> {
    if modes == 0 {
        return Err(Error::arg("target needs at least one mode"));
    }
    if margin < 0.0 || !margin.is_finite() || !s.is_finite() {
        return Err(Error::arg("target margin must be a finite nonnegative number"));
    }
    let mut rng = rng::stream(seed, "target");
    let order = -(s + 0.5 + margin);
    let coeffs = (0..coeff_len(basis, modes))
        .map(|j| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let keep = match parity {
                Parity::All => true,
                Parity::Odd => circle_harmonic(j) % 2 == 1,
            };
            if keep {
                sign * multiplier(basis, j, order)
            } else {
                0.0
            }
        })
        .collect();
    SpectralCoeffs::new(basis, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frequencies() {
        assert_eq!(Frequency::new(0).omega, FRAC_PI_4);
        assert!((omega(1) - 3.0 * PI / 4.0).abs() < 1e-15);
        assert!((0..100).all(|k| omega(k) < omega(k + 1)));
    }

    #[test]
    fn basis_reference_values() {
        assert!((eval_basis(1, 0.0).unwrap() - FRAC_PI_4.sin()).abs() < 1e-15);
        assert!(eval_basis(0, 1.0).unwrap().abs() < 1e-15);
        assert!((eval_basis(2, 0.3).unwrap() - 0.382_683_432_365_089_8).abs() < 1e-14);
        assert!(matches!(eval_basis(0, 1.5), Err(Error::Domain { .. })));
        assert!(eval_basis(0, -1.0000001).is_err());
    }

    #[test]
    fn sobolev_reference_values() {
        let e1 = SpectralCoeffs::unit(Domain::Interval1d, 4, 1);
        assert!((e1.sobolev_norm(0.0) - 1.0).abs() < 1e-15);
        assert!((e1.sobolev_norm(0.25) - 1.2389471586471041).abs() < 1e-14);
        assert!((e1.sobolev_norm(-1.0) - 0.4244131815783876).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_under_quadrature() {
        for (domain, modes) in [(Domain::Interval1d, 64), (Domain::CircleFourier, 32)] {
            let grid = QuadratureGrid::for_modes(domain, modes).unwrap();
            let p = Projector::new(&grid, modes).unwrap();
            let gram = p.weighted_basis() * p.basis_values();
            let eye = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
            assert!((gram - eye).amax() < 1e-10, "{domain:?}");
        }
    }

    #[test]
    fn analyze_unit_and_linear_combinations() {
        let grid = QuadratureGrid::for_modes(Domain::Interval1d, 16).unwrap();
        let c = analyze(|x| interval_basis(3, x), &grid, 16).unwrap();
        for (j, v) in c.coeffs().iter().enumerate() {
            let want = if j == 3 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10);
        }
        let c = analyze(|x| interval_basis(1, x) + 2.0 * interval_basis(5, x), &grid, 16).unwrap();
        let mut want = vec![0.0; 16];
        want[1] = 1.0;
        want[5] = 2.0;
        for (a, b) in c.coeffs().iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn analyze_identity_matches_dense_trapezoid() {
        // Reference: trapezoid rule with 10^6 + 1 nodes.
        let reference =
            [0.3478993935428367, 0.6045397302754248, 0.1898023514142942, -0.2149758316602056, -0.12145699955705204, 0.12914689198393434];
        let grid = QuadratureGrid::for_modes(Domain::Interval1d, 64).unwrap();
        let c = analyze(|x| x, &grid, 64).unwrap();
        for (k, r) in reference.iter().enumerate() {
            assert!((c.coeffs()[k] - r).abs() < 1e-8, "k={k}");
        }
    }

    #[test]
    fn aliasing_guard() {
        let grid = QuadratureGrid::for_modes(Domain::Interval1d, 32).unwrap();
        let k = 32 + 10;
        let err = analyze(|x| interval_basis(k, x), &grid, k + 1).unwrap_err();
        assert!(matches!(err, Error::Aliasing { requested: 43, max: 32 }));
        assert!(Projector::new(&grid, 33).is_err());
        let circle = QuadratureGrid::for_modes(Domain::CircleFourier, 8).unwrap();
        assert!(analyze(|t| t.cos(), &circle, 9).is_err());
    }

    #[test]
    fn circle_analysis() {
        let grid = QuadratureGrid::for_modes(Domain::CircleFourier, 8).unwrap();
        let c = analyze(|t| 3.0 + (2.0 * t).sin() - 0.5 * (5.0 * t).cos(), &grid, 8).unwrap();
        assert_eq!(c.len(), 17);
        assert!((c.coeffs()[0] - 3.0 * (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((c.coeffs()[4] - PI.sqrt()).abs() < 1e-12);
        assert!((c.coeffs()[9] + 0.5 * PI.sqrt()).abs() < 1e-12);
        let vals = c.synthesize(&grid).unwrap();
        assert!((c.sobolev_norm(0.0) - grid.l2_norm(&vals)).abs() < 1e-10);
        let e = SpectralCoeffs::unit(Domain::CircleFourier, 17, 4);
        assert!((e.sobolev_norm(1.0) - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn interpolation_reference() {
        let mut v = vec![0.0; 10];
        v[1] = 1.0;
        v[9] = 1.0;
        let c = SpectralCoeffs::new(Domain::Interval1d, v).unwrap();
        let r = interpolation_check(&c, -1.0, 0.0, 0.25).unwrap();
        assert!((r.ratio - 0.8530918439766925).abs() < 1e-12);
        let e = SpectralCoeffs::unit(Domain::Interval1d, 12, 7);
        let r = interpolation_check(&e, -0.7, 0.1, 0.4).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-14);
        assert!(interpolation_check(&e, 0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn target_examples() {
        let t = synthesize_target(Domain::Interval1d, 0.25, 1, 0.0, 99).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t.coeffs()[0].abs() - omega(0).powf(-0.75)).abs() < 1e-15);

        // Tail-sum oracle: magnitudes do not depend on the seed.
        let a = synthesize_target(Domain::Interval1d, 0.25, 256, 0.25, 7).unwrap().sobolev_norm(0.25);
        let b = synthesize_target(Domain::Interval1d, 0.25, 512, 0.25, 7).unwrap().sobolev_norm(0.25);
        let rel = (b - a) / a;
        assert!((rel - 3.93e-3).abs() < 1e-4, "rel={rel}");

        let n128 = synthesize_target(Domain::Interval1d, 0.45, 128, 0.05, 1).unwrap().sobolev_norm_sq(0.55);
        let n8192 = synthesize_target(Domain::Interval1d, 0.45, 8192, 0.05, 1).unwrap().sobolev_norm_sq(0.55);
        assert!(n8192 / n128 > 2.0);

        let x = synthesize_target(Domain::Interval1d, 0.3, 40, 0.1, 5).unwrap();
        let y = synthesize_target(Domain::Interval1d, 0.3, 40, 0.1, 5).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn odd_parity_targets() {
        let t = synthesize_target_with(Domain::CircleFourier, 0.25, 6, 0.1, 3, Parity::Odd).unwrap();
        for (j, c) in t.coeffs().iter().enumerate() {
            assert_eq!(*c != 0.0, circle_harmonic(j) % 2 == 1);
        }
    }

    #[test]
    fn csv_block() {
        let c = SpectralCoeffs::new(Domain::Interval1d, vec![0.5, -1.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,coefficient\n0,0.5\n1,-1\n");
    }

    proptest! {
        #[test]
        fn interpolation_holds(v in proptest::collection::vec(-10.0f64..10.0, 1..40),
                               a in -2.0f64..0.0, gap1 in 0.05f64..1.0, gap2 in 0.05f64..1.0) {
            let c = SpectralCoeffs::new(Domain::Interval1d, v).unwrap();
            let r = interpolation_check(&c, a, a + gap1, a + gap1 + gap2).unwrap();
            prop_assert!(r.ratio <= 1.0 + 1e-12);
        }

        #[test]
        fn norm_is_homogeneous(v in proptest::collection::vec(-5.0f64..5.0, 1..30),
                               alpha in -4.0f64..4.0, s in -1.5f64..1.5) {
            let c = SpectralCoeffs::new(Domain::Interval1d, v).unwrap();
            let lhs = c.scaled(alpha).sobolev_norm(s);
            let rhs = alpha.abs() * c.sobolev_norm(s);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn l2_norm_consistent(v in proptest::collection::vec(-3.0f64..3.0, 1..20)) {
            let grid = QuadratureGrid::for_modes(Domain::Interval1d, 32).unwrap();
            let c = SpectralCoeffs::new(Domain::Interval1d, v).unwrap();
            let vals = c.synthesize(&grid).unwrap();
            prop_assert!((grid.l2_norm(&vals) - c.sobolev_norm(0.0)).abs() < 1e-8);
        }

        #[test]
        fn analyze_inverts_synthesize(v in proptest::collection::vec(-3.0f64..3.0, 1..20)) {
            let grid = QuadratureGrid::for_modes(Domain::Interval1d, 32).unwrap();
            let p = Projector::new(&grid, 32).unwrap();
            let c = SpectralCoeffs::new(Domain::Interval1d, v.clone()).unwrap();
            let back = p.analyze_values(&p.synthesize(&c));
            for (j, x) in back.coeffs().iter().enumerate() {
                let want = v.get(j).copied().unwrap_or(0.0);
                prop_assert!((x - want).abs() < 1e-10);
            }
        }
    }
}
