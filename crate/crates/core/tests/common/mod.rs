#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use schro_core::spectral::build_basis;
use schro_core::{ControlSignal, Grid, PotentialPair, QuantumState, SpectralBasis};

pub fn basis(n: usize, v: &str, q: &str, m: usize) -> SpectralBasis {
    let grid = Grid::unit(n).unwrap();
    let pots = PotentialPair::from_potentials(&grid, &v.parse().unwrap(), &q.parse().unwrap()).unwrap();
    build_basis(&grid, &pots, m).unwrap()
}

/// `V = x` with a Gaussian bump for `Q`: passes the linear condition at `N = 8`.
pub fn generic(n: usize, m: usize) -> SpectralBasis {
    basis(n, "linear 1", "gauss 1 0.37 0.1", m)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_state(m: usize, seed: u64) -> QuantumState {
    QuantumState::random(m, &mut rng(seed))
}

/// Sum of a few sines with seeded amplitudes and frequencies.
pub fn smooth_control(dt: f64, duration: f64, amplitude: f64, seed: u64) -> ControlSignal {
    use rand_core::RngCore;
    let mut r = rng(seed);
    let mut unit = || (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let terms: Vec<(f64, f64, f64)> = (0..4).map(|_| (amplitude * (2.0 * unit() - 1.0), 1.0 + 9.0 * unit(), 6.3 * unit())).collect();
    ControlSignal::from_fn(dt, ControlSignal::steps_for(dt, duration), |t| {
        terms.iter().map(|(a, w, ph)| a * (w * t + ph).sin()).sum()
    })
    .unwrap()
}
