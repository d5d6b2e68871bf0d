//! Cubic equation `i ż = −Δz + Vz + uQ|z|²z` in the truncated eigenbasis.
//!
//! The cubic sub-flow is discretized by a Galerkin kick: with
//! `A(c)_jk = ⟨Q|Sc|² e_k, e_j⟩` (real symmetric, `S` the synthesis map) a kick of
//! length `dt` solves
//!
//! ```text
//! (I + iθA(c_m)) c₁ = (I − iθA(c_m)) c₀,   θ = u·dt/2,   c_m = (c₀ + c₁)/2
//! ```
//!
//! by fixed-point iteration on `c_m`. Every iterate is a Cayley transform of a
//! symmetric matrix, hence unitary, whether or not the iteration has settled.
//! Drifts are the same fused half steps as in the linear propagator, so a zero
//! control reproduces the linear free flow bit for bit.

use alloc::vec;
use alloc::vec::Vec;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{ensure_len, input, Error, Result};
use crate::lyapunov::{closed_loop_with, feedback_from_image, ClosedLoopRecord, FeedbackParams, Plant};
use crate::propagator::{check_tables, ControlSignal, PropagatorTables};
use crate::spectral::{project, sobolev_norm, synthesize, QuantumState, SpectralBasis};
use crate::Complex64;

/// `‖z‖_{H²}` above which a path is flagged as blown up.
pub const BLOW_UP_H2: f64 = 1e6;

const KICK_TOL: f64 = 1e-15;
const KICK_MAX_ITER: usize = 60;

/// Solves `M x = b` in place by Gaussian elimination with partial pivoting;
/// `m` is row-major `n × n` and is destroyed.
fn solve_complex(m: &mut [Complex64], b: &mut [Complex64], n: usize) -> Result<()> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b2| m[a * n + col].norm().total_cmp(&m[b2 * n + col].norm()))
            .unwrap_or(col);
        if m[pivot * n + col].norm() == 0.0 {
            return Err(Error::Numerical("singular kick matrix".into()));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = m[col * n + col].inv();
        for row in col + 1..n {
            let f = m[row * n + col] * inv;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let t = m[col * n + k];
                m[row * n + k] -= f * t;
            }
            let t = b[col];
            b[row] -= f * t;
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= m[row * n + k] * b[k];
        }
        b[row] = acc / m[row * n + row];
    }
    Ok(())
}

/// Scratch space for repeated kicks on one basis.
struct Kick<'a> {
    basis: &'a SpectralBasis,
    z: Vec<Complex64>,
    weight: Vec<f64>,
    a: Vec<f64>,
    mat: Vec<Complex64>,
    rhs: Vec<Complex64>,
    next: Vec<Complex64>,
}

impl<'a> Kick<'a> {
    fn new(basis: &'a SpectralBasis) -> Self {
        let (n, m) = (basis.grid().n_points(), basis.truncation());
        let zero = Complex64::new(0.0, 0.0);
        Self {
            basis,
            z: vec![zero; n],
            weight: vec![0.0; n],
            a: vec![0.0; m * m],
            mat: vec![zero; m * m],
            rhs: vec![zero; m],
            next: vec![zero; m],
        }
    }

    /// Fills `self.a` with `A(c)`.
    fn assemble(&mut self, c: &[Complex64]) {
        let b = self.basis;
        let m = b.truncation();
        let h = b.grid().spacing();
        self.z.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (k, ck) in c.iter().enumerate() {
            for (z, e) in self.z.iter_mut().zip(b.mode_slice(k)) {
                *z += ck * e;
            }
        }
        for ((w, z), q) in self.weight.iter_mut().zip(&self.z).zip(b.potentials().q()) {
            *w = h * q * z.norm_sqr();
        }
        for j in 0..m {
            let ej = b.mode_slice(j);
            for k in j..m {
                let ek = b.mode_slice(k);
                let v: f64 = self.weight.iter().zip(ej).zip(ek).map(|((w, x), y)| w * x * y).sum();
                self.a[j * m + k] = v;
                self.a[k * m + j] = v;
            }
        }
    }

    fn apply(&mut self, coeffs: &mut [Complex64], u: f64, dt: f64) -> Result<()> {
        let m = coeffs.len();
        let theta = u * dt / 2.0;
        let c0 = coeffs.to_vec();
        let mut c1 = c0.clone();
        let mut mid = c0.clone();
        for _ in 0..KICK_MAX_ITER {
            self.assemble(&mid);
            for j in 0..m {
                let mut acc = c0[j];
                for k in 0..m {
                    let t = Complex64::new(0.0, theta * self.a[j * m + k]);
                    self.mat[j * m + k] = t;
                    acc -= t * c0[k];
                }
                self.mat[j * m + j] += 1.0;
                self.rhs[j] = acc;
            }
            self.next.copy_from_slice(&self.rhs);
            solve_complex(&mut self.mat, &mut self.next, m)?;
            let change: f64 = self.next.iter().zip(&c1).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            c1.copy_from_slice(&self.next);
            if !change.is_finite() {
                return Err(Error::Numerical("cubic kick produced non-finite values".into()));
            }
            if change <= KICK_TOL {
                coeffs.copy_from_slice(&c1);
                return Ok(());
            }
            for ((md, a), b) in mid.iter_mut().zip(&c0).zip(&c1) {
                *md = (a + b) * 0.5;
            }
        }
        // Still a unitary update; only the midpoint is not fully settled.
        coeffs.copy_from_slice(&c1);
        Ok(())
    }
}

/// Micro-stepper for the cubic equation with fused half drifts.
pub struct CubicStepper<'a> {
    tables: &'a PropagatorTables,
    kick: Kick<'a>,
    coeffs: &'a mut [Complex64],
    pending: usize,
}

impl<'a> CubicStepper<'a> {
    pub fn new(basis: &'a SpectralBasis, tables: &'a PropagatorTables, coeffs: &'a mut [Complex64]) -> Result<Self> {
        ensure_len(basis.truncation(), tables.truncation())?;
        ensure_len(basis.truncation(), coeffs.len())?;
        Ok(Self { tables, kick: Kick::new(basis), coeffs, pending: 0 })
    }

    pub fn step(&mut self, u: f64) -> Result<()> {
        if !u.is_finite() {
            return Err(input("control value is not finite"));
        }
        if u == 0.0 {
            self.pending += 2;
            return Ok(());
        }
        self.tables.drift(self.coeffs, self.pending + 1);
        self.kick.apply(self.coeffs, u, self.tables.dt())?;
        self.pending = 1;
        Ok(())
    }

    /// Coefficient moduli are correct even with drift still owed.
    pub fn moduli_view(&self) -> &[Complex64] {
        self.coeffs
    }

    pub fn finish(self) {
        self.tables.drift(self.coeffs, self.pending);
    }
}

/// `U_T(z0, u)` for the cubic equation.
pub fn propagate_cubic(
    state0: &QuantumState,
    control: &ControlSignal,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
) -> Result<QuantumState> {
    Ok(propagate_cubic_monitored(state0, control, basis, tables)?.state)
}

#[derive(Debug, Clone)]
pub struct CubicRun {
    pub state: QuantumState,
    /// Time at which `‖z‖_{H²}` first exceeded [`BLOW_UP_H2`]; the run stops there.
    pub blow_up: Option<f64>,
    pub max_h2: f64,
}

pub fn propagate_cubic_monitored(
    state0: &QuantumState,
    control: &ControlSignal,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
) -> Result<CubicRun> {
    check_tables(basis, control, tables)?;
    ensure_len(basis.truncation(), state0.len())?;
    if (state0.norm() - 1.0).abs() > 1e-8 {
        return Err(input("cubic propagation needs a unit state"));
    }
    let mut coeffs = state0.coeffs().to_vec();
    let mut max_h2 = sobolev_norm(state0, 2.0, basis)?;
    let mut blow_up = None;
    let mu2: Vec<f64> = basis.norm_scale().iter().map(|m| m * m).collect();
    let mut s = CubicStepper::new(basis, tables, &mut coeffs)?;
    for (i, &u) in control.values().iter().enumerate() {
        s.step(u)?;
        let h2 = s.moduli_view().iter().zip(&mu2).map(|(c, w)| w * c.norm_sqr()).sum::<f64>().sqrt();
        if !h2.is_finite() {
            return Err(Error::Numerical("cubic state became non-finite".into()));
        }
        max_h2 = max_h2.max(h2);
        if h2 > BLOW_UP_H2 {
            blow_up = Some((i + 1) as f64 * control.dt());
            break;
        }
    }
    s.finish();
    Ok(CubicRun { state: QuantumState::new(coeffs), blow_up, max_h2 })
}

/// Coefficients of `P(Q|z|²z)`.
pub fn cubic_image(basis: &SpectralBasis, state: &QuantumState) -> Result<Vec<Complex64>> {
    let mut z = synthesize(basis, state)?;
    for (z, q) in z.iter_mut().zip(basis.potentials().q()) {
        *z *= q * z.norm_sqr();
    }
    Ok(project(basis, &z)?.into_coeffs())
}

/// `u(z) = −δ Im(α Σ_{j≠i} λ_j² w_j c̄_j − w_i c̄_i)` with `w = P(Q|z|²z)`.
pub fn nonlinear_feedback_gain(state: &QuantumState, basis: &SpectralBasis, alpha: f64, delta: f64, target: usize) -> Result<f64> {
    let w = cubic_image(basis, state)?;
    feedback_from_image(state, &w, basis, alpha, delta, target)
}

/// The cubic equation as a [`Plant`].
#[derive(Clone, Copy)]
pub struct CubicPlant<'a> {
    pub basis: &'a SpectralBasis,
    pub tables: &'a PropagatorTables,
}

impl Plant for CubicPlant<'_> {
    fn basis(&self) -> &SpectralBasis {
        self.basis
    }

    fn dt(&self) -> f64 {
        self.tables.dt()
    }

    fn advance(&self, coeffs: &mut [Complex64], u: f64, steps: usize) -> Result<()> {
        let mut s = CubicStepper::new(self.basis, self.tables, coeffs)?;
        for _ in 0..steps {
            s.step(u)?;
        }
        s.finish();
        Ok(())
    }

    fn coupling_image(&self, state: &QuantumState) -> Result<Vec<Complex64>> {
        cubic_image(self.basis, state)
    }
}

/// Sample-and-hold closed loop for the cubic equation, stopped by
/// `V ≤ stop_threshold` or after `horizon`.
pub fn cubic_closed_loop(
    state0: &QuantumState,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    params: &FeedbackParams,
    horizon: f64,
) -> Result<ClosedLoopRecord> {
    let plant = CubicPlant { basis, tables };
    closed_loop_with(&plant, state0, params, horizon, |_, _, v| v <= params.stop_threshold)
}

/// `⟨Q e_p³, e_l⟩` by grid quadrature.
pub fn cubic_coupling(basis: &SpectralBasis, p: usize, l: usize) -> Result<f64> {
    basis.check_level(p)?;
    basis.check_level(l)?;
    let h = basis.grid().spacing();
    let (ep, el) = (basis.mode(p), basis.mode(l));
    Ok(h * basis.potentials().q().iter().zip(ep).zip(el).map(|((q, a), b)| q * a * a * a * b).sum::<f64>())
}

/// First-order response `⟨y(T), e_l⟩` of the cubic flow from `e_p` to the
/// control `u` on `[0, T]`:
///
/// ```text
/// −i e^{−iλ_l T} ⟨Q e_p³, e_l⟩ ∫₀ᵀ e^{−i(λ_p−λ_l)s} u(s) ds
/// ```
///
/// The integral is exact for the piecewise-constant control.
pub fn linearized_response(p: usize, l: usize, control: &ControlSignal, basis: &SpectralBasis) -> Result<Complex64> {
    basis.check_level(p)?;
    basis.check_level(l)?;
    let (lp, ll) = (basis.eigenvalue(p), basis.eigenvalue(l));
    let omega = lp - ll;
    if omega.abs() <= 1e-9 * lp.abs().max(ll.abs()).max(1.0) {
        return Err(Error::Resonance { p, l, gap: omega });
    }
    let coupling = cubic_coupling(basis, p, l)?;
    let dt = control.dt();
    let x = omega * dt / 2.0;
    let sinc = if x.abs() < 1e-8 { 1.0 } else { x.sin() / x };
    let mut integral = Complex64::new(0.0, 0.0);
    for (m, &u) in control.values().iter().enumerate() {
        if u != 0.0 {
            integral += Complex64::cis(-omega * (m as f64 + 0.5) * dt) * u;
        }
    }
    integral *= dt * sinc;
    let t = control.duration();
    Ok(Complex64::new(0.0, -1.0) * Complex64::cis(-ll * t) * coupling * integral)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCheck {
    /// Responses to `sin(ωt)` and `cos(ωt)` on `[0, 1]`, `ω = λ_p − λ_l`.
    pub sin_response: Complex64,
    pub cos_response: Complex64,
    /// Singular values of the real 2×2 matrix, largest first.
    pub singular_values: [f64; 2],
    pub full_rank: bool,
}

/// Whether the linearized response restricted to `span{sin ωt, cos ωt}` is a
/// real-linear isomorphism onto `ℂ`.
pub fn rank_check(p: usize, l: usize, basis: &SpectralBasis, dt: f64) -> Result<RankCheck> {
    basis.check_level(p)?;
    basis.check_level(l)?;
    let omega = basis.eigenvalue(p) - basis.eigenvalue(l);
    let steps = ControlSignal::steps_for(dt, 1.0);
    let rs = linearized_response(p, l, &ControlSignal::from_fn(dt, steps, |t| (omega * t).sin())?, basis)?;
    let rc = linearized_response(p, l, &ControlSignal::from_fn(dt, steps, |t| (omega * t).cos())?, basis)?;
    let (a, b, c, d) = (rs.re, rc.re, rs.im, rc.im);
    let fro2 = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s_max = ((fro2 + disc) / 2.0).sqrt();
    let s_min = if s_max > 0.0 { det / s_max } else { 0.0 };
    Ok(RankCheck {
        sin_response: rs,
        cos_response: rc,
        singular_values: [s_max, s_min],
        full_rank: s_max > 0.0 && s_min > 1e-8 * s_max,
    })
}

/// `(‖z_a − z_b‖, ‖U(z_a) − U(z_b)‖)` under the same control.
pub fn distance_change(
    za: &QuantumState,
    zb: &QuantumState,
    control: &ControlSignal,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
) -> Result<(f64, f64)> {
    let before = za.distance(zb);
    let ua = propagate_cubic(za, control, basis, tables)?;
    let ub = propagate_cubic(zb, control, basis, tables)?;
    Ok((before, ua.distance(&ub)))
}
