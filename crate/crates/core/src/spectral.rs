//! Finite-difference eigenbasis of `−d²/dx² + V` with Dirichlet boundary
//! conditions, coupling matrices and discrete Sobolev norms.
//!
//! Functions are sampled at the interior nodes `x_i = i·h`, `i = 1..n`, with
//! `h = L/(n+1)`. Inner products use the trapezoid rule, which on the interior
//! nodes reduces to `⟨f, g⟩ = h·Σ f_i g_i` because boundary values vanish.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_len, input, Error, Result};
use crate::linalg::{RealMatrix, SymTridiagonal};
use crate::potential::Potential;

/// Uniform grid of interior nodes on `(0, length)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n_points: usize,
    length: f64,
    spacing: f64,
}

impl Grid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < Self::MIN_POINTS {
            return Err(input(alloc::format!("n_points must be at least {}", Self::MIN_POINTS)));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(input("grid length must be positive and finite"));
        }
        Ok(Self { n_points, length, spacing: length / (n_points + 1) as f64 })
    }

    /// Grid on the unit interval.
    pub fn unit(n_points: usize) -> Result<Self> {
        Self::new(n_points, 1.0)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Position of the `i`-th interior node, `i` 0-based.
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.spacing
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.node(i))
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().map(f).collect()
    }

    pub fn sample_potential(&self, p: &Potential) -> Vec<f64> {
        self.nodes().map(|x| p.eval(x, self.length)).collect()
    }

    /// Trapezoid inner product of two real grid functions.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.spacing * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Eigenvalues of the discrete Dirichlet Laplacian on this grid,
    /// `μ_j = (4/h²)·sin²(jπh/(2L))`, `j = 1..=count`.
    pub fn laplacian_eigenvalues(&self, count: usize) -> Vec<f64> {
        let h = self.spacing;
        (1..=count)
            .map(|j| {
                let s = (j as f64 * PI * h / (2.0 * self.length)).sin();
                4.0 * s * s / (h * h)
            })
            .collect()
    }
}

/// Samples of the potential `V` and the control profile `Q` at interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPair {
    v: Vec<f64>,
    q: Vec<f64>,
}

impl PotentialPair {
    pub fn new(grid: &Grid, v: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        ensure_len(grid.n_points(), v.len())?;
        ensure_len(grid.n_points(), q.len())?;
        if v.iter().chain(&q).any(|x| !x.is_finite()) {
            return Err(input("potential samples must be finite"));
        }
        Ok(Self { v, q })
    }

    pub fn from_potentials(grid: &Grid, v: &Potential, q: &Potential) -> Result<Self> {
        Self::new(grid, grid.sample_potential(v), grid.sample_potential(q))
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

/// Truncated eigenbasis `{λ_j, e_j}` of `−d²/dx² + V` together with the
/// coupling matrix `B_jk = ⟨Q e_k, e_j⟩` and the Sobolev scale `μ_j`.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: Grid,
    potentials: PotentialPair,
    eigenvalues: Vec<f64>,
    modes: Vec<f64>,
    coupling: RealMatrix,
    norm_scale: Vec<f64>,
}

/// Lowest `truncation` eigenpairs of the second-order finite-difference
/// operator, quadrature-normalized, with the first clearly nonzero sample of
/// every eigenfunction positive.
pub fn build_basis(grid: &Grid, potentials: &PotentialPair, truncation: usize) -> Result<SpectralBasis> {
    let n = grid.n_points();
    ensure_len(n, potentials.v.len())?;
    ensure_len(n, potentials.q.len())?;
    if truncation == 0 {
        return Err(input("truncation must be at least 1"));
    }
    if truncation > n / 4 {
        return Err(Error::Resolution { truncation, n_points: n });
    }
    if potentials.v.iter().chain(&potentials.q).any(|x| !x.is_finite()) {
        return Err(input("potential samples must be finite"));
    }

    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let tri = SymTridiagonal::scaled_laplacian_plus(inv_h2, potentials.v.clone());
    let (eigenvalues, vectors) = tri.lowest_eigenpairs(truncation);
    if eigenvalues.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Numerical("eigenvalues are not strictly increasing".into()));
    }

    let mut modes = Vec::with_capacity(truncation * n);
    let scale = 1.0 / h.sqrt();
    for mut v in vectors {
        let peak = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let first = v.iter().copied().find(|x| x.abs() > 1e-8 * peak).unwrap_or(1.0);
        let sign = if first < 0.0 { -scale } else { scale };
        for x in v.iter_mut() {
            *x *= sign;
        }
        modes.extend_from_slice(&v);
    }

    let mut basis = SpectralBasis {
        grid: *grid,
        potentials: potentials.clone(),
        eigenvalues,
        modes,
        coupling: RealMatrix::zeros(truncation),
        norm_scale: grid.laplacian_eigenvalues(truncation),
    };
    basis.coupling = coupling_matrix(&basis, &potentials.q)?;
    Ok(basis)
}

/// `B_jk = ⟨Q e_k, e_j⟩` by trapezoid quadrature, symmetrized as `(B+Bᵀ)/2`.
pub fn coupling_matrix(basis: &SpectralBasis, q_samples: &[f64]) -> Result<RealMatrix> {
    let n = basis.grid.n_points();
    ensure_len(n, q_samples.len())?;
    let m = basis.truncation();
    let mut b = RealMatrix::zeros(m);
    let mut weighted = vec![0.0; n];
    for k in 0..m {
        for (w, (q, e)) in weighted.iter_mut().zip(q_samples.iter().zip(basis.mode_slice(k))) {
            *w = q * e;
        }
        for j in 0..m {
            b.set(j, k, basis.grid.inner(&weighted, basis.mode_slice(j)));
        }
    }
    b.symmetrize();
    Ok(b)
}

impl SpectralBasis {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potentials(&self) -> &PotentialPair {
        &self.potentials
    }

    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `λ_level`, 1-based.
    pub fn eigenvalue(&self, level: usize) -> f64 {
        self.eigenvalues[level - 1]
    }

    pub fn coupling(&self) -> &RealMatrix {
        &self.coupling
    }

    /// `B_{jk}` with 1-based levels.
    pub fn coupling_entry(&self, j: usize, k: usize) -> f64 {
        self.coupling.get(j - 1, k - 1)
    }

    pub fn norm_scale(&self) -> &[f64] {
        &self.norm_scale
    }

    /// Samples of `e_level` on the interior nodes, 1-based.
    pub fn mode(&self, level: usize) -> &[f64] {
        self.mode_slice(level - 1)
    }

    pub(crate) fn mode_slice(&self, index: usize) -> &[f64] {
        let n = self.grid.n_points();
        &self.modes[index * n..(index + 1) * n]
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.truncation() {
            Err(Error::Truncation { bound: level, truncation: self.truncation() })
        } else {
            Ok(())
        }
    }

    /// Basis for the same grid and potentials with `Q` replaced.
    pub fn with_control_profile(&self, q_samples: Vec<f64>) -> Result<Self> {
        let potentials = PotentialPair::new(&self.grid, self.potentials.v.clone(), q_samples)?;
        let coupling = coupling_matrix(self, &potentials.q)?;
        Ok(Self { potentials, coupling, ..self.clone() })
    }
}

/// Coefficient vector `c_j = ⟨z, e_j⟩` of a state in the truncated eigenbasis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantumState {
    coeffs: Vec<Complex64>,
}

impl QuantumState {
    /// Wraps coefficients as given (no normalization).
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    /// Scales the coefficients onto the unit sphere.
    pub fn normalized(coeffs: Vec<Complex64>) -> Result<Self> {
        let mut s = Self { coeffs };
        let norm = s.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(input("cannot normalize a zero or non-finite state"));
        }
        for c in s.coeffs.iter_mut() {
            *c /= norm;
        }
        Ok(s)
    }

    /// Normalized superposition with real amplitudes `amps[j-1]` on level `j`.
    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::normalized(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Eigenstate `e_level` in a truncation of size `m`.
    pub fn eigenstate(m: usize, level: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); m];
        coeffs[level - 1] = Complex64::new(1.0, 0.0);
        Self { coeffs }
    }

    /// Uniformly distributed point of the unit sphere in `ℂ^m`.
    pub fn random<R: RngCore + ?Sized>(m: usize, rng: &mut R) -> Self {
        loop {
            let coeffs: Vec<Complex64> = (0..m)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(re, im)
                })
                .collect();
            if let Ok(s) = Self::normalized(coeffs) {
                return s;
            }
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// ℓ² norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨z, e_level⟩`, 1-based.
    pub fn amplitude(&self, level: usize) -> Complex64 {
        self.coeffs[level - 1]
    }

    pub fn population(&self, level: usize) -> f64 {
        self.coeffs[level - 1].norm_sqr()
    }

    /// Componentwise complex conjugate. The eigenfunctions are real, so this
    /// is complex conjugation of the represented function.
    pub fn conjugate(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.conj()).collect() }
    }

    /// `⟨self, other⟩ = Σ self_j · conj(other_j)`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * factor).collect() }
    }

    /// Coefficientwise `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| a * x + b * y).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Discrete Sobolev norm `(Σ_j μ_j^s |c_j|²)^{1/2}`; `s = 0` is the ℓ² norm.
pub fn sobolev_norm(state: &QuantumState, s: f64, basis: &SpectralBasis) -> Result<f64> {
    ensure_len(basis.truncation(), state.len())?;
    if !s.is_finite() {
        return Err(input("Sobolev order must be finite"));
    }
    if s == 0.0 {
        return Ok(state.norm());
    }
    Ok(state
        .coeffs
        .iter()
        .zip(&basis.norm_scale)
        .map(|(c, mu)| mu.powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Quadrature inner products of grid samples against each eigenfunction.
pub fn project(basis: &SpectralBasis, samples: &[Complex64]) -> Result<QuantumState> {
    let n = basis.grid.n_points();
    ensure_len(n, samples.len())?;
    let h = basis.grid.spacing();
    let coeffs = (0..basis.truncation())
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (z, e) in samples.iter().zip(basis.mode_slice(k)) {
                acc += z * e;
            }
            acc * h
        })
        .collect();
    Ok(QuantumState::new(coeffs))
}

/// Grid samples of `Σ_j c_j e_j`.
pub fn synthesize(basis: &SpectralBasis, state: &QuantumState) -> Result<Vec<Complex64>> {
    ensure_len(basis.truncation(), state.len())?;
    let n = basis.grid.n_points();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, c) in state.coeffs.iter().enumerate() {
        for (o, e) in out.iter_mut().zip(basis.mode_slice(k)) {
            *o += c * e;
        }
    }
    Ok(out)
}

/// First-order sensitivity `dλ_j(V + τσ)/dτ|_{τ=0} = ⟨σ, e_j²⟩`.
pub fn eigenvalue_derivative(basis: &SpectralBasis, sigma: &[f64], level: usize) -> Result<f64> {
    ensure_len(basis.grid.n_points(), sigma.len())?;
    basis.check_level(level)?;
    let e = basis.mode(level);
    Ok(basis.grid.spacing() * sigma.iter().zip(e).map(|(s, e)| s * e * e).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis_for(n: usize, v: &str, q: &str, m: usize) -> SpectralBasis {
        let grid = Grid::unit(n).unwrap();
        let pots = PotentialPair::from_potentials(&grid, &v.parse().unwrap(), &q.parse().unwrap()).unwrap();
        build_basis(&grid, &pots, m).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::unit(15).is_err());
        assert!(Grid::new(32, 0.0).is_err());
        let g = Grid::unit(31).unwrap();
        assert_eq!(g.spacing(), 1.0 / 32.0);
        assert_eq!(g.node(0), 1.0 / 32.0);
    }

    #[test]
    fn resolution_and_input_errors() {
        let grid = Grid::unit(64).unwrap();
        let pots = PotentialPair::from_potentials(&grid, &Potential::zero(), &Potential::linear(1.0)).unwrap();
        assert!(matches!(build_basis(&grid, &pots, 17), Err(Error::Resolution { .. })));
        let mut v = vec![0.0; 64];
        v[3] = f64::NAN;
        assert!(PotentialPair::new(&grid, v, vec![0.0; 64]).is_err());
    }

    #[test]
    fn constant_shift_moves_every_eigenvalue() {
        let a = basis_for(256, "zero", "linear 1", 8);
        let b = basis_for(256, "cosine 3.5 0", "linear 1", 8);
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((y - x - 3.5).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn eigenfunctions_orthonormal_with_positive_start() {
        let basis = basis_for(512, "zero", "linear 1", 10);
        let g = basis.grid();
        for j in 1..=10 {
            assert!(basis.mode(j)[0] > 0.0);
            for k in 1..=10 {
                let dot = g.inner(basis.mode(j), basis.mode(k));
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "({j},{k}) -> {dot}");
            }
        }
    }

    #[test]
    fn control_profile_one_gives_identity_coupling() {
        let basis = basis_for(512, "linear 1", "zero", 8);
        let ones = vec![1.0; 512];
        let b = coupling_matrix(&basis, &ones).unwrap();
        for j in 0..8 {
            for k in 0..8 {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((b.get(j, k) - want).abs() < 1e-10);
            }
        }
        assert!(b.is_symmetric());
    }

    #[test]
    fn sobolev_norm_edge_cases() {
        let basis = basis_for(1024, "zero", "linear 1", 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = QuantumState::random(10, &mut rng);
        assert_eq!(sobolev_norm(&z, 0.0, &basis).unwrap(), z.norm());
        let e1 = QuantumState::eigenstate(10, 1);
        let h2 = sobolev_norm(&e1, 2.0, &basis).unwrap();
        assert!((h2 / (PI * PI) - 1.0).abs() < 1e-4);
        let e9 = QuantumState::eigenstate(10, 9);
        let mu = basis.norm_scale();
        let n1 = sobolev_norm(&e1, -1.0, &basis).unwrap();
        let n9 = sobolev_norm(&e9, -1.0, &basis).unwrap();
        assert!(n9 < n1);
        assert!((n1 - mu[0].powf(-0.5)).abs() < 1e-15);
        assert!((n9 - mu[8].powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn synthesize_then_project_round_trips() {
        let basis = basis_for(512, "linear 1", "gauss 1 0.37 0.1", 10);
        let e3 = QuantumState::eigenstate(10, 3);
        let samples = synthesize(&basis, &e3).unwrap();
        for (s, e) in samples.iter().zip(basis.mode(3)) {
            assert_eq!(s.re, *e);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = QuantumState::random(10, &mut rng);
        let back = project(&basis, &synthesize(&basis, &z).unwrap()).unwrap();
        let err = back.coeffs().iter().zip(z.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn projection_obeys_bessel() {
        let basis = basis_for(512, "zero", "linear 1", 6);
        let g = basis.grid();
        let f: Vec<Complex64> = g.nodes().map(|x| Complex64::new(x * (1.0 - x) * (5.0 * x).cos(), x.sin())).collect();
        let norm_f = (g.spacing() * f.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        let c = project(&basis, &f).unwrap();
        assert!(c.norm() <= norm_f);
    }

    #[test]
    fn eigenvalue_derivative_closed_forms() {
        let basis = basis_for(2048, "zero", "linear 1", 6);
        let ones = vec![1.0; 2048];
        for j in 1..=6 {
            assert!((eigenvalue_derivative(&basis, &ones, j).unwrap() - 1.0).abs() < 1e-10);
        }
        let sigma = basis.grid().sample(|x| (2.0 * PI * x).cos());
        let a1 = eigenvalue_derivative(&basis, &sigma, 1).unwrap();
        assert!((a1 + 0.5).abs() < 1e-6, "{a1}");
        assert!(eigenvalue_derivative(&basis, &sigma, 7).is_err());
    }
}
