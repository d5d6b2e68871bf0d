//! Approximate steering between unit states at integer times.
//!
//! `z0` is driven close to `e_i` by the feedback, its phase is fixed by free
//! drift over whole time units, and the same is done for `z̄1`. Reversing the
//! second control and appending it to the first carries `z0` near `z1`, since
//! all controls act isometrically.

use alloc::vec::Vec;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{ensure_len, input, Error, Result};
use crate::lyapunov::{closed_loop_with, excite_from_orthogonal, FeedbackParams, LinearPlant};
use crate::propagator::{conjugate, propagate, reverse_control, ControlSignal, PropagatorTables};
use crate::spectral::{QuantumState, SpectralBasis};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizeOptions {
    /// Target distance to `e_i` after phase alignment.
    pub eps_half: f64,
    /// Closed-loop time limit.
    pub max_time: f64,
    /// Amplitude bound for the excitation pulse used when `⟨z0, e_i⟩ = 0`.
    pub excite_budget: f64,
    /// Whole time units of free drift searched for phase alignment.
    pub max_align_steps: usize,
}

impl StabilizeOptions {
    pub fn new(eps_half: f64, max_time: f64) -> Self {
        Self { eps_half, max_time, excite_budget: 1.0, max_align_steps: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct Stabilized {
    /// Excitation, feedback and alignment drift, in that order.
    pub control: ControlSignal,
    /// `‖U(z0, control) − e_i‖`, measured by propagation.
    pub distance: f64,
    /// Unit phase of `⟨z, e_i⟩` when the feedback stopped.
    pub phase: Complex64,
    /// Whole time units spent under feedback (excitation included).
    pub feedback_time: usize,
    pub align_steps: usize,
    /// False when no alignment within `max_align_steps` met `eps_half`.
    pub aligned: bool,
    pub final_delta: f64,
}

fn steps_per_unit(dt: f64) -> Result<usize> {
    let n = ControlSignal::steps_for(dt, 1.0);
    if n == 0 || (n as f64 * dt - 1.0).abs() > 1e-9 {
        return Err(input("dt must divide the unit time interval"));
    }
    Ok(n)
}

/// Drives `z0` to within `eps_half` of `e_target` at an integer time.
pub fn stabilize_to_eigenstate(
    z0: &QuantumState,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    params: &FeedbackParams,
    options: &StabilizeOptions,
) -> Result<Stabilized> {
    params.validate()?;
    let target = params.target;
    basis.check_level(target)?;
    ensure_len(basis.truncation(), z0.len())?;
    let eps = options.eps_half;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(input("eps_half must be positive"));
    }
    let dt = tables.dt();
    let unit = steps_per_unit(dt)?;
    if unit % params.hold_steps != 0 {
        return Err(input("hold interval must divide the unit time interval"));
    }
    let eigen = QuantumState::eigenstate(basis.truncation(), target);
    if z0.distance(&eigen) == 0.0 {
        return Ok(Stabilized {
            control: ControlSignal::new(dt, Vec::new())?,
            distance: 0.0,
            phase: Complex64::new(1.0, 0.0),
            feedback_time: 0,
            align_steps: 0,
            aligned: true,
            final_delta: params.delta,
        });
    }
    if !(options.max_time.is_finite() && options.max_time > 0.0) {
        return Err(Error::Timeout { elapsed: 0.0, best: z0.distance(&eigen) });
    }

    let plant = LinearPlant { basis, tables };
    let mut values: Vec<f64> = Vec::new();
    let mut z = z0.clone();
    if z.amplitude(target).norm() <= 1e-12 {
        let (pulse, excited) = excite_from_orthogonal(&z, basis, tables, target, options.excite_budget)?;
        values.extend_from_slice(pulse.values());
        z = excited;
    }
    // Distance to the phase circle of e_i is sqrt(2 − 2|c_i|); stop at half of eps.
    let circle = |s: &QuantumState| (2.0 - 2.0 * s.amplitude(target).norm()).max(0.0).sqrt();
    let mut params = *params;
    let mut elapsed = values.len() as f64 * dt;
    let mut best = circle(&z);

    for attempt in 0..2 {
        let remaining = options.max_time - elapsed;
        let mut step_count = 0usize;
        let first = attempt == 0;
        let rec = closed_loop_with(&plant, &z, &params.with_stop_threshold(0.0), remaining.max(0.0), |_, s, _| {
            step_count += 1;
            let at_integer = (step_count - 1) * params.hold_steps % unit == 0;
            // The retry runs for at least one whole unit before stopping.
            let moved = first || step_count > unit / params.hold_steps;
            at_integer && moved && circle(s) < eps / 2.0
        })?;
        values.extend_from_slice(&rec.signal);
        elapsed += rec.signal.len() as f64 * dt;
        z = rec.final_state.clone();
        params.delta = rec.final_delta;
        best = best.min(circle(&z));
        if !rec.stopped {
            return Err(Error::Timeout { elapsed, best });
        }

        let c = z.amplitude(target);
        let phase = c / c.norm();
        let lambda = basis.eigenvalue(target);
        // Free drift over n units leaves |c_j| fixed and turns c_i by e^{−iλ_i n}.
        let hit = (0..=options.max_align_steps)
            .find(|&n| (2.0 - 2.0 * (c * Complex64::cis(-lambda * n as f64)).re).max(0.0).sqrt() < eps);
        if hit.is_none() && attempt == 0 {
            continue;
        }
        let n = hit.unwrap_or_else(|| {
            (0..=options.max_align_steps)
                .max_by(|&a, &b| {
                    let ra = (c * Complex64::cis(-lambda * a as f64)).re;
                    let rb = (c * Complex64::cis(-lambda * b as f64)).re;
                    ra.total_cmp(&rb)
                })
                .unwrap_or(0)
        });
        let feedback_time = values.len() / unit;
        values.resize(values.len() + n * unit, 0.0);
        let control = ControlSignal::new(dt, values)?;
        let reached = propagate(z0, &control, basis, tables)?;
        let distance = reached.distance(&eigen);
        return Ok(Stabilized {
            control,
            distance,
            phase,
            feedback_time,
            align_steps: n,
            aligned: hit.is_some() && distance < eps,
            final_delta: params.delta,
        });
    }
    unreachable!("the second attempt always returns")
}

#[derive(Debug, Clone)]
pub struct Steered {
    pub control: ControlSignal,
    /// `‖U(z0, control) − z1‖`, measured by propagation.
    pub achieved: f64,
    /// Duration of the forward leg.
    pub k0: f64,
    /// Duration of the reversed leg.
    pub k1: f64,
    pub sup_u: f64,
    /// Feedback gain of the successful attempt.
    pub delta: f64,
}

/// Steers `z0` to within `eps` of `z1` with `sup|u| < budget`, halving `δ`
/// (at most `max_halvings` times) while the amplitude bound is exceeded.
pub fn steer(
    z0: &QuantumState,
    z1: &QuantumState,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    params: &FeedbackParams,
    eps: f64,
    budget: f64,
    max_time: f64,
    max_halvings: usize,
) -> Result<Steered> {
    ensure_len(basis.truncation(), z0.len())?;
    ensure_len(basis.truncation(), z1.len())?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(input("eps must be positive"));
    }
    if !(budget > 0.0) {
        return Err(input("amplitude budget must be positive"));
    }
    for z in [z0, z1] {
        if (z.norm() - 1.0).abs() > 1e-8 {
            return Err(input("steering needs unit states"));
        }
    }
    let dt = tables.dt();
    if z0.distance(z1) < 1e-14 {
        return Ok(Steered {
            control: ControlSignal::new(dt, Vec::new())?,
            achieved: z0.distance(z1),
            k0: 0.0,
            k1: 0.0,
            sup_u: 0.0,
            delta: params.delta,
        });
    }
    let mut options = StabilizeOptions::new(eps / 2.0, max_time);
    options.excite_budget = budget;
    let mut smallest_sup = f64::INFINITY;
    let mut delta = params.delta;
    for _ in 0..=max_halvings {
        let p = params.with_delta(delta);
        let forward = stabilize_to_eigenstate(z0, basis, tables, &p, &options)?;
        let backward = stabilize_to_eigenstate(&conjugate(z1), basis, tables, &p, &options)?;
        let u1 = reverse_control(&backward.control, backward.control.duration())?;
        let control = forward.control.concat(&u1)?;
        let sup_u = control.sup_norm();
        smallest_sup = smallest_sup.min(sup_u);
        if sup_u < budget {
            let achieved = propagate(z0, &control, basis, tables)?.distance(z1);
            if !(achieved < eps) {
                return Err(Error::Numerical(alloc::format!(
                    "steering verification failed: distance {achieved} ≥ {eps}"
                )));
            }
            return Ok(Steered {
                k0: forward.control.duration(),
                k1: u1.duration(),
                control,
                achieved,
                sup_u,
                delta,
            });
        }
        delta /= 2.0;
    }
    Err(Error::Budget { budget, sup: smallest_sup })
}
