mod common;

use std::f64::consts::PI;

use schro_core::spectral::{build_basis, eigenvalue_derivative, project, sobolev_norm, synthesize};
use schro_core::{Error, Grid, PotentialPair, QuantumState};

/// `y(1)` for `−y'' + x·y = λy`, `y(0) = 0`, `y'(0) = 1`, by RK4.
fn shoot(lambda: f64, steps: usize) -> f64 {
    let h = 1.0 / steps as f64;
    let f = |x: f64, y: f64, p: f64| (p, (x - lambda) * y);
    let (mut y, mut p) = (0.0, 1.0);
    for k in 0..steps {
        let x = k as f64 * h;
        let (a1, b1) = f(x, y, p);
        let (a2, b2) = f(x + h / 2.0, y + h / 2.0 * a1, p + h / 2.0 * b1);
        let (a3, b3) = f(x + h / 2.0, y + h / 2.0 * a2, p + h / 2.0 * b2);
        let (a4, b4) = f(x + h, y + h * a3, p + h * b3);
        y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        p += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    y
}

fn shooting_eigenvalue(j: usize) -> f64 {
    let guess = (j * j) as f64 * PI * PI + 0.5;
    let (mut lo, mut hi) = (guess - 5.0, guess + 5.0);
    let flo = shoot(lo, 4000);
    assert!(flo * shoot(hi, 4000) < 0.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid, 4000) * flo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn flat_spectrum_matches_continuum_and_discrete_closed_forms() {
    let n = 4096;
    let b = common::basis(n, "zero", "linear 1", 10);
    let h = 1.0 / (n + 1) as f64;
    let mut worst: f64 = 0.0;
    for j in 1..=10 {
        let lam = b.eigenvalue(j);
        worst = worst.max((lam / ((j * j) as f64 * PI * PI) - 1.0).abs());
        let discrete = 4.0 / (h * h) * (j as f64 * PI * h / 2.0).sin().powi(2);
        assert!((lam - discrete).abs() <= 1e-10 * discrete, "j={j}: {lam} vs {discrete}");
    }
    assert!(worst <= 1e-4, "{worst}");
}

#[test]
fn richardson_extrapolation_agrees_with_shooting_for_linear_potential() {
    let coarse = common::basis(1023, "linear 1", "zero", 5);
    let fine = common::basis(2047, "linear 1", "zero", 5);
    for j in 1..=5 {
        let extrapolated = (4.0 * fine.eigenvalue(j) - coarse.eigenvalue(j)) / 3.0;
        let shot = shooting_eigenvalue(j);
        assert!((extrapolated - shot).abs() <= 1e-6 * shot, "j={j}: {extrapolated} vs {shot}");
    }
}

#[test]
fn eigenvalues_increase_and_modes_are_orthonormal() {
    let b = common::generic(300, 12);
    assert!(b.eigenvalues().windows(2).all(|w| w[0] < w[1]));
    let g = b.grid();
    for j in 1..=12 {
        for k in 1..=12 {
            let dot = g.inner(b.mode(j), b.mode(k));
            let want = if j == k { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-11, "{j} {k} {dot}");
        }
        let first = b.mode(j).iter().copied().find(|x| x.abs() > 1e-6).unwrap();
        assert!(first > 0.0);
    }
}

/// `∫₀¹ x · 2 sin(jπx) sin(kπx) dx`.
fn linear_coupling(j: usize, k: usize) -> f64 {
    if j == k {
        return 0.5;
    }
    if (j + k) % 2 == 0 {
        return 0.0;
    }
    let (jf, kf) = (j as f64, k as f64);
    -8.0 * jf * kf / (PI * PI * (jf * jf - kf * kf).powi(2))
}

#[test]
fn flat_potential_couplings_match_closed_form() {
    let b = common::basis(4096, "zero", "linear 1", 6);
    assert!((b.coupling_entry(1, 1) - 0.5).abs() <= 1e-6);
    assert!((b.coupling_entry(1, 2) + 16.0 / (9.0 * PI * PI)).abs() <= 1e-6);
    assert!(b.coupling_entry(1, 3).abs() <= 1e-8);
    for j in 1..=6 {
        for k in 1..=6 {
            let want = linear_coupling(j, k);
            // Modes carry the sign of sin(jπx) near x = 0.
            assert!((b.coupling_entry(j, k) - want).abs() <= 1e-6, "{j} {k}");
            assert_eq!(b.coupling_entry(j, k), b.coupling_entry(k, j));
        }
    }
}

#[test]
fn eigenvalue_derivative_matches_finite_differences() {
    let n = 512;
    let grid = Grid::unit(n).unwrap();
    let v: Vec<f64> = grid.sample(|x| x);
    let q = grid.sample(|_| 0.0);
    // Large enough that the O(τ) remainder at τ = 1e-5 sits well above ulp(λ_j)/τ.
    let sigma: Vec<f64> = grid.sample(|x| 20.0 * (3.0 * PI * x).cos() + 5.0 * x * x);
    let base = build_basis(&grid, &PotentialPair::new(&grid, v.clone(), q.clone()).unwrap(), 4).unwrap();
    let shifted = |tau: f64| {
        let vt: Vec<f64> = v.iter().zip(&sigma).map(|(a, s)| a + tau * s).collect();
        build_basis(&grid, &PotentialPair::new(&grid, vt, q.clone()).unwrap(), 4).unwrap()
    };
    let (b4, b5) = (shifted(1e-4), shifted(1e-5));
    for j in 1..=4 {
        let d = eigenvalue_derivative(&base, &sigma, j).unwrap();
        let r4 = ((b4.eigenvalue(j) - base.eigenvalue(j)) / 1e-4 - d).abs();
        let r5 = ((b5.eigenvalue(j) - base.eigenvalue(j)) / 1e-5 - d).abs();
        let ratio = r4 / r5;
        assert!((8.0..=12.0).contains(&ratio), "j={j}: remainders {r4:e} {r5:e}");
    }
    let ones = grid.sample(|_| 1.0);
    for j in 1..=4 {
        assert!((eigenvalue_derivative(&base, &ones, j).unwrap() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn synthesis_and_projection_are_inverse_on_the_span() {
    let b = common::generic(256, 8);
    let z = common::random_state(8, 3);
    let back = project(&b, &synthesize(&b, &z).unwrap()).unwrap();
    assert!(back.distance(&z) < 1e-12);
}

#[test]
fn sobolev_norms_of_eigenstates() {
    let b = common::generic(256, 8);
    for j in 1..=8 {
        let e = QuantumState::eigenstate(8, j);
        let mu = b.norm_scale()[j - 1];
        assert!((sobolev_norm(&e, 2.0, &b).unwrap() - mu).abs() <= 1e-12 * mu);
        assert!((sobolev_norm(&e, -1.0, &b).unwrap() - mu.powf(-0.5)).abs() <= 1e-15);
    }
}

#[test]
fn construction_errors() {
    let grid = Grid::unit(64).unwrap();
    let pots = PotentialPair::from_potentials(&grid, &"zero".parse().unwrap(), &"linear 1".parse().unwrap()).unwrap();
    assert!(matches!(build_basis(&grid, &pots, 17), Err(Error::Resolution { .. })));
    assert!(build_basis(&grid, &pots, 0).is_err());
    assert!(PotentialPair::new(&grid, vec![0.0; 63], vec![0.0; 64]).is_err());
    let nan = PotentialPair::new(&grid, vec![f64::NAN; 64], vec![0.0; 64]);
    assert!(nan.is_err() || build_basis(&grid, &nan.unwrap(), 4).is_err());
}
