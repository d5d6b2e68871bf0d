//! Strang-split time integration of `i ċ = Λc + u(t)Bc`.
//!
//! One micro-step is `e^{−iΛdt/2} · G e^{−iuDdt} Gᵀ · e^{−iΛdt/2}` where
//! `B = G D Gᵀ`. Every factor is an exact unitary, so the norm is preserved to
//! rounding regardless of `dt`. Adjacent half drifts are fused, and the
//! coupling factor is skipped when `u == 0`, which makes free evolution exact.

use alloc::vec;
use alloc::vec::Vec;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{ensure_len, input, Result};
use crate::linalg::{symmetric_eigen, RealMatrix};
use crate::spectral::{QuantumState, SpectralBasis};
use crate::Complex64;

/// Piecewise-constant control: `values[i]` acts on `[i·dt, (i+1)·dt)`.
///
/// An empty signal (zero duration) is allowed and propagates to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    dt: f64,
    values: Vec<f64>,
}

impl ControlSignal {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(input("control step dt must be positive and finite"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(input(alloc::format!("control value {i} is not finite")));
        }
        Ok(Self { dt, values })
    }

    pub fn zero(dt: f64, steps: usize) -> Result<Self> {
        Self::new(dt, vec![0.0; steps])
    }

    pub fn constant(dt: f64, steps: usize, value: f64) -> Result<Self> {
        Self::new(dt, vec![value; steps])
    }

    /// Samples `f` at the micro-step midpoints `(i+½)·dt`, which keeps the
    /// splitting second order for smooth controls.
    pub fn from_fn(dt: f64, steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(dt, (0..steps).map(|i| f((i as f64 + 0.5) * dt)).collect())
    }

    /// Number of micro-steps needed to cover `duration` (rounded to nearest).
    pub fn steps_for(dt: f64, duration: f64) -> usize {
        (duration / dt).round() as usize
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `∫ u² dt`, exact for the piecewise-constant signal.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.dt
    }

    /// Micro-steps `range` as a signal restarting at time zero.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.values.len() {
            return Err(input("control slice out of range"));
        }
        Ok(Self { dt: self.dt, values: self.values[range].to_vec() })
    }

    /// `self` followed by `other`; both must share `dt`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if (self.dt - other.dt).abs() > 1e-15 * self.dt {
            return Err(input("cannot concatenate controls with different dt"));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self { dt: self.dt, values })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.dt, self.values.iter().map(|v| v * factor).collect())
    }
}

/// `u(t) = w(k − t)`; `k` must equal the duration of `w`.
pub fn reverse_control(w: &ControlSignal, k: f64) -> Result<ControlSignal> {
    let duration = w.duration();
    if !k.is_finite() || (k - duration).abs() > 1e-9 * (1.0 + duration) {
        return Err(input(alloc::format!("reversal time {k} differs from control duration {duration}")));
    }
    let mut values = w.values.clone();
    values.reverse();
    Ok(ControlSignal { dt: w.dt, values })
}

/// Componentwise conjugate; corresponds to `z ↦ z̄` because the modes are real.
pub fn conjugate(state: &QuantumState) -> QuantumState {
    state.conjugate()
}

/// Per-basis data for a fixed `dt`: drift phases and `B = G D Gᵀ`.
#[derive(Debug, Clone)]
pub struct PropagatorTables {
    dt: f64,
    eigenvalues: Vec<f64>,
    half_phases: Vec<Complex64>,
    full_phases: Vec<Complex64>,
    g: RealMatrix,
    d: Vec<f64>,
}

impl PropagatorTables {
    pub fn new(basis: &SpectralBasis, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(input("dt must be positive and finite"));
        }
        let eig = symmetric_eigen(basis.coupling());
        let eigenvalues = basis.eigenvalues().to_vec();
        let half_phases = eigenvalues.iter().map(|&l| Complex64::cis(-l * dt / 2.0)).collect();
        let full_phases = eigenvalues.iter().map(|&l| Complex64::cis(-l * dt)).collect();
        Ok(Self { dt, eigenvalues, half_phases, full_phases, g: eig.vectors, d: eig.values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `e^{−iλ_j dt/2}`.
    pub fn drift_phases(&self) -> &[Complex64] {
        &self.half_phases
    }

    /// `(G, D)` with `B = G diag(D) Gᵀ`.
    pub fn coupling_eigen(&self) -> (&RealMatrix, &[f64]) {
        (&self.g, &self.d)
    }

    /// Starts a stepper on `coeffs`; call [`Stepper::finish`] to flush the
    /// pending half drift.
    pub fn stepper<'a>(&'a self, coeffs: &'a mut [Complex64]) -> Result<Stepper<'a>> {
        ensure_len(self.truncation(), coeffs.len())?;
        let m = coeffs.len();
        Ok(Stepper { tables: self, coeffs, pending: 0, scratch: vec![Complex64::new(0.0, 0.0); m] })
    }

    /// Free drift over `halves · dt/2`.
    pub(crate) fn drift(&self, coeffs: &mut [Complex64], halves: usize) {
        match halves {
            0 => {}
            1 => mul_phases(coeffs, &self.half_phases),
            2 => mul_phases(coeffs, &self.full_phases),
            k => {
                let tau = k as f64 * self.dt / 2.0;
                for (c, &l) in coeffs.iter_mut().zip(&self.eigenvalues) {
                    *c *= Complex64::cis(-l * tau);
                }
            }
        }
    }

    /// Advances `coeffs` by `steps` micro-steps at constant `u`.
    pub fn evolve_constant(&self, coeffs: &mut [Complex64], u: f64, steps: usize) -> Result<()> {
        if !u.is_finite() {
            return Err(input("control value is not finite"));
        }
        let mut s = self.stepper(coeffs)?;
        for _ in 0..steps {
            s.step(u);
        }
        s.finish();
        Ok(())
    }
}

/// Applies micro-steps one at a time with fused half drifts.
pub struct Stepper<'a> {
    tables: &'a PropagatorTables,
    coeffs: &'a mut [Complex64],
    /// Half drifts owed before the next coupling factor.
    pending: usize,
    scratch: Vec<Complex64>,
}

impl Stepper<'_> {
    pub fn step(&mut self, u: f64) {
        if u != 0.0 {
            self.pending += 1;
            self.flush();
            self.couple(u);
            self.pending = 1;
        } else {
            self.pending += 2;
        }
    }

    /// Current state with all owed drift applied.
    pub fn coeffs(&mut self) -> &[Complex64] {
        self.flush();
        self.coeffs
    }

    pub fn finish(mut self) {
        self.flush();
    }

    fn flush(&mut self) {
        self.tables.drift(self.coeffs, self.pending);
        self.pending = 0;
    }

    fn couple(&mut self, u: f64) {
        let t = self.tables;
        t.g.mul_transpose_complex(self.coeffs, &mut self.scratch);
        for (y, &d) in self.scratch.iter_mut().zip(&t.d) {
            *y *= Complex64::cis(-u * d * t.dt);
        }
        t.g.mul_complex(&self.scratch, self.coeffs);
    }
}

fn mul_phases(coeffs: &mut [Complex64], phases: &[Complex64]) {
    for (c, p) in coeffs.iter_mut().zip(phases) {
        *c *= p;
    }
}

pub(crate) fn check_tables(basis: &SpectralBasis, control: &ControlSignal, tables: &PropagatorTables) -> Result<()> {
    ensure_len(basis.truncation(), tables.truncation())?;
    if (control.dt - tables.dt).abs() > 1e-12 * tables.dt {
        return Err(input(alloc::format!("control dt {} does not match table dt {}", control.dt, tables.dt)));
    }
    Ok(())
}

/// `U_T(z0, u)` with `T = control.duration()`.
pub fn propagate(
    state0: &QuantumState,
    control: &ControlSignal,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
) -> Result<QuantumState> {
    check_tables(basis, control, tables)?;
    ensure_len(basis.truncation(), state0.len())?;
    let mut coeffs = state0.coeffs().to_vec();
    let mut s = tables.stepper(&mut coeffs)?;
    for &u in control.values() {
        s.step(u);
    }
    s.finish();
    Ok(QuantumState::new(coeffs))
}

/// States recorded every `every` micro-steps (including both endpoints).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
}

impl Trajectory {
    pub fn last(&self) -> &QuantumState {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

pub fn propagate_sampled(
    state0: &QuantumState,
    control: &ControlSignal,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    every: usize,
) -> Result<Trajectory> {
    check_tables(basis, control, tables)?;
    ensure_len(basis.truncation(), state0.len())?;
    if every == 0 {
        return Err(input("sampling cadence must be at least 1"));
    }
    let mut times = vec![0.0];
    let mut states = vec![state0.clone()];
    let mut coeffs = state0.coeffs().to_vec();
    let n = control.len();
    let mut s = tables.stepper(&mut coeffs)?;
    for (i, &u) in control.values().iter().enumerate() {
        s.step(u);
        if (i + 1) % every == 0 || i + 1 == n {
            times.push((i + 1) as f64 * control.dt);
            states.push(QuantumState::new(s.coeffs().to_vec()));
        }
    }
    s.finish();
    Ok(Trajectory { times, states })
}
