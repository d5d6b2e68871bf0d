//! Lyapunov function `V_i`, the feedback law and the sample-and-hold closed loop.
//!
//! In coefficients, with `w = Bc`,
//!
//! ```text
//! V_i(c) = α Σ_{j≠i} λ_j² |c_j|² + 1 − |c_i|²
//! u(c)   = −δ Im( α Σ_{j≠i} λ_j² w_j c̄_j − w_i c̄_i )
//! ```
//!
//! and along the exact closed loop `dV/dt = −(2/δ) u²`.

use alloc::vec::Vec;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{ensure_len, input, Error, Result};
use crate::propagator::{ControlSignal, PropagatorTables};
use crate::spectral::{sobolev_norm, QuantumState, SpectralBasis};
use crate::Complex64;

/// Monotonicity slack per hold step, relative to `1 + V`.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackParams {
    pub alpha: f64,
    pub delta: f64,
    /// 1-based level `i` of `V_i`.
    pub target: usize,
    /// Micro-steps per sample-and-hold interval.
    pub hold_steps: usize,
    /// The loop stops once `V ≤ stop_threshold`.
    pub stop_threshold: f64,
    /// Halve `δ` when a hold step raises `V` beyond [`MONOTONE_TOL`].
    pub adapt_delta: bool,
}

impl FeedbackParams {
    pub fn new(alpha: f64, delta: f64, target: usize) -> Result<Self> {
        let p = Self { alpha, delta, target, hold_steps: 10, stop_threshold: 1e-4, adapt_delta: true };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(input("alpha must be positive"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(input("delta must be positive"));
        }
        if self.target == 0 {
            return Err(input("target level is 1-based"));
        }
        if self.hold_steps == 0 {
            return Err(input("hold must span at least one micro-step"));
        }
        if !(self.stop_threshold.is_finite() && self.stop_threshold >= 0.0) {
            return Err(input("stop threshold must be non-negative"));
        }
        Ok(())
    }

    pub fn with_hold_steps(self, hold_steps: usize) -> Self {
        Self { hold_steps, ..self }
    }

    pub fn with_stop_threshold(self, stop_threshold: f64) -> Self {
        Self { stop_threshold, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    pub fn fixed_delta(self) -> Self {
        Self { adapt_delta: false, ..self }
    }
}

fn weights(basis: &SpectralBasis, alpha: f64, target: usize) -> impl Iterator<Item = f64> + '_ {
    basis.eigenvalues().iter().enumerate().map(move |(j, l)| if j + 1 == target { 0.0 } else { alpha * l * l })
}

pub fn lyapunov_value(state: &QuantumState, basis: &SpectralBasis, alpha: f64, target: usize) -> Result<f64> {
    ensure_len(basis.truncation(), state.len())?;
    basis.check_level(target)?;
    let weighted: f64 = state.coeffs().iter().zip(weights(basis, alpha, target)).map(|(c, w)| w * c.norm_sqr()).sum();
    Ok(weighted + 1.0 - state.population(target))
}

/// Feedback from a precomputed coupling image `w` (`Bc` for the linear
/// equation, the projected cubic term for the nonlinear one).
pub fn feedback_from_image(state: &QuantumState, image: &[Complex64], basis: &SpectralBasis, alpha: f64, delta: f64, target: usize) -> Result<f64> {
    ensure_len(basis.truncation(), state.len())?;
    ensure_len(basis.truncation(), image.len())?;
    basis.check_level(target)?;
    let c = state.coeffs();
    let mut acc = Complex64::new(0.0, 0.0);
    for ((w, cj), a) in image.iter().zip(c).zip(weights(basis, alpha, target)) {
        acc += w * cj.conj() * a;
    }
    acc -= image[target - 1] * c[target - 1].conj();
    Ok(-delta * acc.im)
}

pub fn feedback_gain(state: &QuantumState, basis: &SpectralBasis, params: &FeedbackParams) -> Result<f64> {
    ensure_len(basis.truncation(), state.len())?;
    let w = off_diagonal_image(basis, state);
    feedback_from_image(state, &w, basis, params.alpha, params.delta, params.target)
}

/// `Bc` without the diagonal of `B`. Each diagonal term `B_jj |c_j|²` is real
/// and drops out of the feedback, so removing it changes nothing except that
/// `u(c·e_i)` comes out exactly zero for every phase `c`.
fn off_diagonal_image(basis: &SpectralBasis, state: &QuantumState) -> Vec<Complex64> {
    let b = basis.coupling();
    let c = state.coeffs();
    (0..c.len())
        .map(|j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, (bjk, ck)) in b.row(j).iter().zip(c).enumerate() {
                if k != j {
                    acc += ck * bjk;
                }
            }
            acc
        })
        .collect()
}

/// `C` with `C·(1 + V_i(z)) ≥ ‖z‖₂` on the unit sphere:
/// `C = μ_i + max_{j≠i}(μ_j/|λ_j|) / (2√α)`.
pub fn coercivity_constant(basis: &SpectralBasis, alpha: f64, target: usize) -> Result<f64> {
    basis.check_level(target)?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(input("alpha must be positive"));
    }
    let mu = basis.norm_scale();
    let mut kappa: f64 = 0.0;
    for (j, l) in basis.eigenvalues().iter().enumerate() {
        if j + 1 == target {
            continue;
        }
        if *l == 0.0 {
            return Err(Error::Precondition(alloc::format!("λ_{} = 0 gives no H² control", j + 1)));
        }
        kappa = kappa.max(mu[j] / l.abs());
    }
    Ok(mu[target - 1] + kappa / (2.0 * alpha.sqrt()))
}

/// Dynamics driven by a scalar control and steered by [`closed_loop_with`].
pub trait Plant {
    fn basis(&self) -> &SpectralBasis;
    fn dt(&self) -> f64;
    /// Advances `coeffs` by `steps` micro-steps at constant `u`.
    fn advance(&self, coeffs: &mut [Complex64], u: f64, steps: usize) -> Result<()>;
    /// The vector `w` entering the feedback law.
    fn coupling_image(&self, state: &QuantumState) -> Result<Vec<Complex64>>;
}

/// The linear equation `i ċ = Λc + uBc`.
#[derive(Clone, Copy)]
pub struct LinearPlant<'a> {
    pub basis: &'a SpectralBasis,
    pub tables: &'a PropagatorTables,
}

impl Plant for LinearPlant<'_> {
    fn basis(&self) -> &SpectralBasis {
        self.basis
    }

    fn dt(&self) -> f64 {
        self.tables.dt()
    }

    fn advance(&self, coeffs: &mut [Complex64], u: f64, steps: usize) -> Result<()> {
        self.tables.evolve_constant(coeffs, u, steps)
    }

    fn coupling_image(&self, state: &QuantumState) -> Result<Vec<Complex64>> {
        ensure_len(self.basis.truncation(), state.len())?;
        Ok(off_diagonal_image(self.basis, state))
    }
}

/// Sampled closed-loop trajectory, one row per hold interval.
#[derive(Debug, Clone, Default)]
pub struct ClosedLoopRecord {
    pub times: Vec<f64>,
    pub lyapunov: Vec<f64>,
    /// Feedback evaluated at each recorded state; `control[k]` is held on
    /// `[times[k], times[k+1])`.
    pub control: Vec<f64>,
    pub target_population: Vec<f64>,
    pub norm_l2: Vec<f64>,
    pub norm_h2: Vec<f64>,
    /// Every applied micro-step value.
    pub signal: Vec<f64>,
    /// `Σ (2/δ_k) u_k² · hold`, the dissipation the exact flow would produce.
    pub dissipation: f64,
    pub final_delta: f64,
    pub delta_halvings: usize,
    /// Initial state had `⟨z0, e_i⟩ = 0`.
    pub warn_orthogonal: bool,
    /// Initial `V_i(z0)` was outside `(0, 1)`.
    pub warn_lyapunov_range: bool,
    /// Reached the stopping rule before the horizon.
    pub stopped: bool,
    pub final_state: QuantumState,
}

impl ClosedLoopRecord {
    /// `|V(T) − V(0) + Σ(2/δ)u²·hold|`.
    pub fn dissipation_residual(&self) -> f64 {
        match (self.lyapunov.first(), self.lyapunov.last()) {
            (Some(a), Some(b)) => (b - a + self.dissipation).abs(),
            _ => 0.0,
        }
    }

    /// Largest single-row increase of `V`, relative to `1 + V`.
    pub fn worst_increase(&self) -> f64 {
        self.lyapunov.windows(2).map(|w| (w[1] - w[0]) / (1.0 + w[0].abs())).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn control_signal(&self, dt: f64) -> Result<ControlSignal> {
        ControlSignal::new(dt, self.signal.clone())
    }
}

/// Closed loop for the linear equation, stopped by `V ≤ stop_threshold` or
/// after `horizon` time units.
pub fn closed_loop(
    state0: &QuantumState,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    params: &FeedbackParams,
    horizon: f64,
) -> Result<ClosedLoopRecord> {
    let plant = LinearPlant { basis, tables };
    closed_loop_with(&plant, state0, params, horizon, |_, _, v| v <= params.stop_threshold)
}

/// Sample-and-hold closed loop on any [`Plant`]. `stop(t, z, V)` is asked at
/// every recorded row, the initial one included.
pub fn closed_loop_with<P: Plant + ?Sized>(
    plant: &P,
    state0: &QuantumState,
    params: &FeedbackParams,
    horizon: f64,
    mut stop: impl FnMut(f64, &QuantumState, f64) -> bool,
) -> Result<ClosedLoopRecord> {
    params.validate()?;
    let basis = plant.basis();
    basis.check_level(params.target)?;
    ensure_len(basis.truncation(), state0.len())?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(input("horizon must be finite and non-negative"));
    }
    let dt = plant.dt();
    let hold = params.hold_steps;
    let total_steps = ControlSignal::steps_for(dt, horizon);
    let (alpha, target) = (params.alpha, params.target);
    let gain = |z: &QuantumState, delta: f64| -> Result<f64> {
        let w = plant.coupling_image(z)?;
        feedback_from_image(z, &w, basis, alpha, delta, target)
    };

    let mut rec = ClosedLoopRecord { final_delta: params.delta, final_state: state0.clone(), ..Default::default() };
    let mut delta = params.delta;
    let mut z = state0.clone();
    let mut v = lyapunov_value(&z, basis, alpha, target)?;
    rec.warn_orthogonal = z.population(target) == 0.0;
    rec.warn_lyapunov_range = !(v > 0.0 && v < 1.0);

    let push_row = |rec: &mut ClosedLoopRecord, t: f64, z: &QuantumState, v: f64, u: f64| -> Result<()> {
        rec.times.push(t);
        rec.lyapunov.push(v);
        rec.control.push(u);
        rec.target_population.push(z.population(target));
        rec.norm_l2.push(z.norm());
        rec.norm_h2.push(sobolev_norm(z, 2.0, basis)?);
        Ok(())
    };

    let mut step = 0usize;
    let mut u = gain(&z, delta)?;
    push_row(&mut rec, 0.0, &z, v, u)?;
    if stop(0.0, &z, v) {
        rec.stopped = true;
    }
    while !rec.stopped && step < total_steps {
        let n = hold.min(total_steps - step);
        let mut trial;
        let mut v_new;
        loop {
            trial = z.clone();
            plant.advance(trial.coeffs_mut(), u, n)?;
            if !trial.is_finite() {
                return Err(Error::Numerical("closed-loop state became non-finite".into()));
            }
            v_new = lyapunov_value(&trial, basis, alpha, target)?;
            let overshoot = v_new > v + MONOTONE_TOL * (1.0 + v);
            if !(params.adapt_delta && overshoot && rec.delta_halvings < 60) {
                break;
            }
            delta /= 2.0;
            rec.delta_halvings += 1;
            u = gain(&z, delta)?;
        }
        rec.dissipation += 2.0 / delta * u * u * n as f64 * dt;
        rec.signal.extend(core::iter::repeat(u).take(n));
        step += n;
        z = trial;
        v = v_new;
        u = gain(&z, delta)?;
        let t = step as f64 * dt;
        push_row(&mut rec, t, &z, v, u)?;
        if stop(t, &z, v) {
            rec.stopped = true;
        }
    }
    rec.final_delta = delta;
    rec.final_state = z;
    Ok(rec)
}

/// Resonant pulse `a·cos((λ_p − λ_i)t)` that gives level `i` a nonzero
/// amplitude when the initial state has none. The pulse runs until `|c_i|`
/// stops growing or reaches `0.1`, then zero control pads it to a whole
/// number of time units.
pub fn excite_from_orthogonal(
    state0: &QuantumState,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    target: usize,
    budget: f64,
) -> Result<(ControlSignal, QuantumState)> {
    basis.check_level(target)?;
    ensure_len(basis.truncation(), state0.len())?;
    if !(budget.is_finite() && budget > 0.0) {
        return Err(input("amplitude budget must be positive"));
    }
    if state0.amplitude(target).norm() > 1e-12 {
        return Err(Error::Precondition(alloc::format!("state already overlaps level {target}")));
    }
    let m = basis.truncation();
    let source = (1..=m)
        .filter(|&p| p != target && state0.population(p) > 1e-24)
        .map(|p| (p, state0.amplitude(p).norm() * basis.coupling_entry(target, p).abs()))
        .filter(|&(_, score)| score > 1e-12)
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let Some((p, _)) = source else {
        return Err(Error::NoCouplingPath { target });
    };

    let dt = tables.dt();
    let a = 0.5 * budget;
    let omega = basis.eigenvalue(p) - basis.eigenvalue(target);
    let rabi = a * basis.coupling_entry(target, p).abs() / 2.0;
    let max_steps = ControlSignal::steps_for(dt, (core::f64::consts::FRAC_PI_2 / rabi).min(1e4)).max(1);
    let chunk = ControlSignal::steps_for(dt, 0.1).max(1);

    let mut coeffs = state0.coeffs().to_vec();
    let mut values = Vec::new();
    let mut best = (0.0f64, 0usize);
    let mut stepper = tables.stepper(&mut coeffs)?;
    let mut i = 0;
    while i < max_steps {
        let u = a * (omega * (i as f64 + 0.5) * dt).cos();
        stepper.step(u);
        values.push(u);
        i += 1;
        if i % chunk == 0 || i == max_steps {
            let amp = stepper.coeffs()[target - 1].norm();
            if amp > best.0 {
                best = (amp, i);
            } else if amp < 0.5 * best.0 {
                break;
            }
            if amp >= 0.1 {
                break;
            }
        }
    }
    stepper.finish();
    values.truncate(best.1);
    let whole = ControlSignal::steps_for(dt, (values.len() as f64 * dt).ceil());
    values.resize(whole.max(values.len()), 0.0);
    let control = ControlSignal::new(dt, values)?;
    let state = crate::propagator::propagate(state0, &control, basis, tables)?;
    if state.amplitude(target).norm() <= 1e-6 {
        return Err(Error::NoCouplingPath { target });
    }
    Ok((control, state))
}
