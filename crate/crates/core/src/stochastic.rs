//! Randomly kicked chain `z_{k+1} = U_1(z_k, η_k)` with
//! `η_k(t) = Σ_j b_j ξ_{jk} g_j(t)` on each unit interval.
//!
//! Path `i` of a Monte Carlo run draws from stream `i` of the base seed (see
//! [`crate::seed`]), so per-path results do not depend on scheduling and the
//! serial drivers here agree bit for bit with parallel ones built from
//! [`entrance_path`] and [`growth_path`].

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};
use core::fmt;
use core::str::FromStr;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;
use rand_core::RngCore;
use rand_distr::{Distribution, Open01, StandardNormal};

use crate::error::{ensure_len, input, Error, Result};
use crate::propagator::{propagate, ControlSignal, PropagatorTables};
use crate::seed::{stream_rng, stream_seeds};
use crate::spectral::{sobolev_norm, QuantumState, SpectralBasis};

/// Orthonormal families `{g_j}` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisFamily {
    /// `g_1 = 1`, `g_{2m} = √2 cos(2πmt)`, `g_{2m+1} = √2 sin(2πmt)`.
    #[default]
    Fourier,
    /// `g_1 = 1`, `g_j = √2 cos((j−1)πt)`.
    Cosine,
}

impl BasisFamily {
    /// `g_j(t)`, 1-based `j`.
    pub fn eval(self, j: usize, t: f64) -> f64 {
        if j <= 1 {
            return 1.0;
        }
        match self {
            BasisFamily::Fourier => {
                let m = (j / 2) as f64;
                if j % 2 == 0 {
                    SQRT_2 * (2.0 * PI * m * t).cos()
                } else {
                    SQRT_2 * (2.0 * PI * m * t).sin()
                }
            }
            BasisFamily::Cosine => SQRT_2 * ((j - 1) as f64 * PI * t).cos(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BasisFamily::Fourier => "fourier",
            BasisFamily::Cosine => "cosine",
        }
    }
}

impl FromStr for BasisFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(BasisFamily::Fourier),
            "cosine" => Ok(BasisFamily::Cosine),
            _ => Err(input(alloc::format!("unknown basis family {s:?}"))),
        }
    }
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unit-variance noise laws with a continuous density positive on all of ℝ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Logistic with scale `√3/π`.
    Logistic,
}

impl NoiseFamily {
    pub fn sample<R: RngCore + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseFamily::Gaussian => StandardNormal.sample(rng),
            NoiseFamily::Logistic => {
                let u: f64 = Open01.sample(rng);
                (3.0f64).sqrt() / PI * (u / (1.0 - u)).ln()
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Logistic => "logistic",
        }
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "logistic" => Ok(NoiseFamily::Logistic),
            _ => Err(input(alloc::format!("unknown noise family {s:?}"))),
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomAmplitudeModel {
    b: Vec<f64>,
    basis: BasisFamily,
    noise: NoiseFamily,
}

impl RandomAmplitudeModel {
    /// Zero coefficients are accepted so that noise-free runs can be expressed.
    pub fn new(b: Vec<f64>, basis: BasisFamily, noise: NoiseFamily) -> Result<Self> {
        if b.is_empty() {
            return Err(input("need at least one amplitude coefficient"));
        }
        if b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(input("amplitude coefficients must be finite and non-negative"));
        }
        Ok(Self { b, basis, noise })
    }

    /// `b_j = scale · j^{−2}` for `j ≤ terms`.
    pub fn power_law(terms: usize, scale: f64) -> Result<Self> {
        Self::new((1..=terms).map(|j| scale / (j * j) as f64).collect(), BasisFamily::Fourier, NoiseFamily::Gaussian)
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn basis_family(&self) -> BasisFamily {
        self.basis
    }

    pub fn noise_family(&self) -> NoiseFamily {
        self.noise
    }

    /// `E‖η‖²_{L²[0,1]} = Σ b_j²`.
    pub fn energy(&self) -> f64 {
        self.b.iter().map(|b| b * b).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().all(|&b| b == 0.0)
    }
}

impl Default for RandomAmplitudeModel {
    fn default() -> Self {
        Self::power_law(16, 1.0).expect("static parameters are valid")
    }
}

fn unit_steps(dt: f64) -> Result<usize> {
    let n = ControlSignal::steps_for(dt, 1.0);
    if n == 0 || (n as f64 * dt - 1.0).abs() > 1e-9 {
        return Err(input("dt must divide the unit time interval"));
    }
    Ok(n)
}

/// Draws kicks `η` on `[0, 1]` for a fixed micro-step, with `g_j` tabulated
/// at the midpoints.
#[derive(Debug, Clone)]
pub struct EtaSampler<'a> {
    model: &'a RandomAmplitudeModel,
    dt: f64,
    /// `b_j g_j(t_m)`, row `j`.
    table: Vec<f64>,
    steps: usize,
}

impl<'a> EtaSampler<'a> {
    pub fn new(model: &'a RandomAmplitudeModel, dt: f64) -> Result<Self> {
        let steps = unit_steps(dt)?;
        let mut table = Vec::with_capacity(model.b.len() * steps);
        for (j, b) in model.b.iter().enumerate() {
            table.extend((0..steps).map(|i| b * model.basis.eval(j + 1, (i as f64 + 0.5) * dt)));
        }
        Ok(Self { model, dt, table, steps })
    }

    /// The `ξ_j` are drawn in order `j = 1, 2, …`, one per coefficient.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<ControlSignal> {
        let mut values = vec![0.0; self.steps];
        for row in self.table.chunks(self.steps) {
            let xi = self.model.noise.sample(rng);
            for (v, g) in values.iter_mut().zip(row) {
                *v += xi * g;
            }
        }
        ControlSignal::new(self.dt, values)
    }
}

/// One kick `η` on `[0, 1]`, sampled at micro-step midpoints.
pub fn sample_eta<R: RngCore + ?Sized>(model: &RandomAmplitudeModel, dt: f64, rng: &mut R) -> Result<ControlSignal> {
    EtaSampler::new(model, dt)?.sample(rng)
}

#[derive(Debug, Clone)]
pub struct ChainRecord {
    /// `z_0, …, z_K`.
    pub states: Vec<QuantumState>,
    /// `‖z_k‖_s`.
    pub norm_pos: Vec<f64>,
    /// `‖z_k‖_{−s}`.
    pub norm_neg: Vec<f64>,
    /// `η_0, …, η_{K−1}`, when requested.
    pub kicks: Vec<ControlSignal>,
}

/// `K` steps of the chain with Sobolev order `s` recorded on both sides.
pub fn simulate_chain<R: RngCore + ?Sized>(
    z0: &QuantumState,
    model: &RandomAmplitudeModel,
    steps: usize,
    s: f64,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    rng: &mut R,
    keep_kicks: bool,
) -> Result<ChainRecord> {
    ensure_len(basis.truncation(), z0.len())?;
    let mut rec = ChainRecord { states: vec![z0.clone()], norm_pos: Vec::new(), norm_neg: Vec::new(), kicks: Vec::new() };
    rec.norm_pos.push(sobolev_norm(z0, s, basis)?);
    rec.norm_neg.push(sobolev_norm(z0, -s, basis)?);
    let sampler = EtaSampler::new(model, tables.dt())?;
    let mut z = z0.clone();
    for _ in 0..steps {
        let eta = sampler.sample(rng)?;
        z = propagate(&z, &eta, basis, tables)?;
        rec.norm_pos.push(sobolev_norm(&z, s, basis)?);
        rec.norm_neg.push(sobolev_norm(&z, -s, basis)?);
        rec.states.push(z.clone());
        if keep_kicks {
            rec.kicks.push(eta);
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingConfig {
    /// Radius of the `H^{−s}` ball around zero.
    pub r: f64,
    pub s: f64,
    /// Censoring horizon `K_max`.
    pub max_steps: usize,
}

impl StoppingConfig {
    pub fn new(r: f64, s: f64, max_steps: usize) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(input("ball radius must be positive"));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(input("Sobolev order must be positive"));
        }
        Ok(Self { r, s, max_steps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Entrance {
    /// First integer time with `‖z_k‖_{−s} < r`.
    Hit(usize),
    /// No entrance up to and including `K_max`.
    Censored(usize),
}

impl Entrance {
    pub fn time(self) -> Option<usize> {
        match self {
            Entrance::Hit(k) => Some(k),
            Entrance::Censored(_) => None,
        }
    }

    /// Whether `τ > k` is known to hold.
    pub fn survives(self, k: usize) -> bool {
        match self {
            Entrance::Hit(t) => t > k,
            Entrance::Censored(kmax) => kmax >= k,
        }
    }
}

pub fn first_entrance_time<R: RngCore + ?Sized>(
    z0: &QuantumState,
    model: &RandomAmplitudeModel,
    stopping: &StoppingConfig,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    rng: &mut R,
) -> Result<Entrance> {
    ensure_len(basis.truncation(), z0.len())?;
    let sampler = EtaSampler::new(model, tables.dt())?;
    let mut z = z0.clone();
    for k in 0..=stopping.max_steps {
        if sobolev_norm(&z, -stopping.s, basis)? < stopping.r {
            return Ok(Entrance::Hit(k));
        }
        if k == stopping.max_steps {
            break;
        }
        let eta = sampler.sample(rng)?;
        z = propagate(&z, &eta, basis, tables)?;
    }
    Ok(Entrance::Censored(stopping.max_steps))
}

/// Entrance time of path `index` under `base_seed`.
pub fn entrance_path(
    z0: &QuantumState,
    model: &RandomAmplitudeModel,
    stopping: &StoppingConfig,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    base_seed: u64,
    index: usize,
) -> Result<Entrance> {
    first_entrance_time(z0, model, stopping, basis, tables, &mut stream_rng(base_seed, index as u64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub n: usize,
    /// Fraction of paths with `τ > n·block`.
    pub p_hat: f64,
    /// Binomial standard error `sqrt(p(1−p)/paths)`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub paths: usize,
    pub finite: usize,
    pub censored: usize,
    pub max_steps: usize,
    pub block: usize,
    pub curve: Vec<TailPoint>,
    /// Least-squares slope of `log p̂(n)` over the points with `p̂ > 0`, and its
    /// standard error; `None` with fewer than three such points.
    pub log_slope: Option<(f64, f64)>,
    /// Every path was censored.
    pub degenerate: bool,
}

/// Survival curve `P̂{τ > n·block}` for `n = 0..=n_max` from per-path entrance times.
pub fn tail_from_entrances(entrances: &[Entrance], n_max: usize, block: usize, max_steps: usize) -> Result<TailReport> {
    if block == 0 {
        return Err(input("block length must be positive"));
    }
    if n_max * block > max_steps {
        return Err(input(alloc::format!(
            "n_max·block = {} exceeds the censoring horizon {max_steps}",
            n_max * block
        )));
    }
    let paths = entrances.len();
    if paths == 0 {
        return Err(input("no paths"));
    }
    let censored = entrances.iter().filter(|e| e.time().is_none()).count();
    let curve: Vec<TailPoint> = (0..=n_max)
        .map(|n| {
            let alive = entrances.iter().filter(|e| e.survives(n * block)).count();
            let p = alive as f64 / paths as f64;
            TailPoint { n, p_hat: p, stderr: (p * (1.0 - p) / paths as f64).sqrt() }
        })
        .collect();
    let pts: Vec<(f64, f64)> = curve.iter().filter(|c| c.p_hat > 0.0).map(|c| (c.n as f64, c.p_hat.ln())).collect();
    Ok(TailReport {
        paths,
        finite: paths - censored,
        censored,
        max_steps,
        block,
        curve,
        log_slope: ols_slope(&pts),
        degenerate: censored == paths,
    })
}

/// Slope and its standard error for `y = a + b·x`.
pub fn ols_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some((slope, (sse / (nf - 2.0) / sxx).sqrt()))
}

/// Serial tail estimate over `paths` seeded paths.
pub fn tail_statistics(
    z0: &QuantumState,
    model: &RandomAmplitudeModel,
    stopping: &StoppingConfig,
    n_max: usize,
    block: usize,
    paths: usize,
    base_seed: u64,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
) -> Result<TailReport> {
    if paths < 50 {
        return Err(input("tail statistics need at least 50 paths"));
    }
    stream_seeds(base_seed, paths)?;
    let entrances = (0..paths)
        .map(|i| entrance_path(z0, model, stopping, basis, tables, base_seed, i))
        .collect::<Result<Vec<_>>>()?;
    tail_from_entrances(&entrances, n_max, block, stopping.max_steps)
}

/// Running extrema along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPath {
    /// `G_k = max_{m≤k} ‖z_m‖_s`, `k = 0..=K`.
    pub running_max: Vec<f64>,
    /// `L_k = min_{m≤k} ‖z_m‖_{−s}`.
    pub running_min: Vec<f64>,
}

pub fn growth_path(
    z0: &QuantumState,
    model: &RandomAmplitudeModel,
    steps: usize,
    s: f64,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
    base_seed: u64,
    index: usize,
) -> Result<GrowthPath> {
    if !(s.is_finite() && s > 0.0) {
        return Err(input("Sobolev order must be positive"));
    }
    let mut rng = stream_rng(base_seed, index as u64);
    let rec = simulate_chain(z0, model, steps, s, basis, tables, &mut rng, false)?;
    let mut running_max = Vec::with_capacity(rec.norm_pos.len());
    let mut running_min = Vec::with_capacity(rec.norm_neg.len());
    let (mut g, mut l) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, n) in rec.norm_pos.iter().zip(&rec.norm_neg) {
        g = g.max(*p);
        l = l.min(*n);
        running_max.push(g);
        running_min.push(l);
    }
    Ok(GrowthPath { running_max, running_min })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub paths: usize,
    pub steps: usize,
    /// `K/10`, `K/2`, `K`.
    pub checkpoints: Vec<usize>,
    pub median_g: Vec<f64>,
    pub median_l: Vec<f64>,
}

impl GrowthReport {
    /// `median G_K / median G_{K/10}`.
    pub fn growth_factor(&self) -> f64 {
        self.median_g[self.median_g.len() - 1] / self.median_g[0]
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn growth_summary(paths: &[GrowthPath], steps: usize) -> Result<GrowthReport> {
    if paths.is_empty() {
        return Err(input("no paths"));
    }
    let checkpoints = vec![steps / 10, steps / 2, steps];
    for p in paths {
        ensure_len(steps + 1, p.running_max.len())?;
    }
    let median_g = checkpoints.iter().map(|&k| median(paths.iter().map(|p| p.running_max[k]).collect())).collect();
    let median_l = checkpoints.iter().map(|&k| median(paths.iter().map(|p| p.running_min[k]).collect())).collect();
    Ok(GrowthReport { paths: paths.len(), steps, checkpoints, median_g, median_l })
}

/// Serial growth report over `paths` seeded paths.
pub fn growth_report(
    z0: &QuantumState,
    model: &RandomAmplitudeModel,
    steps: usize,
    s: f64,
    paths: usize,
    base_seed: u64,
    basis: &SpectralBasis,
    tables: &PropagatorTables,
) -> Result<GrowthReport> {
    stream_seeds(base_seed, paths)?;
    let runs = (0..paths)
        .map(|i| growth_path(z0, model, steps, s, basis, tables, base_seed, i))
        .collect::<Result<Vec<_>>>()?;
    growth_summary(&runs, steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportProbe {
    pub samples: usize,
    /// Draws with `‖u − β‖_{L²(0,k)} < eps`.
    pub hits: usize,
    /// Smallest distance seen.
    pub min_distance: f64,
    /// `‖u − Pu‖`, with `P` the projection onto `span{g_j}` on every unit
    /// interval: no draw of the model can come closer than this.
    pub floor: f64,
}

/// Monte Carlo estimate of `P{‖u − β‖ < eps}` for a target control `u` whose
/// duration is a whole number of units.
pub fn support_probe(target: &ControlSignal, model: &RandomAmplitudeModel, eps: f64, samples: usize, seed: u64) -> Result<SupportProbe> {
    let dt = target.dt();
    let unit = unit_steps(dt)?;
    if target.len() % unit != 0 {
        return Err(input("target control must span whole time units"));
    }
    let j_max = model.b.len();
    let g: Vec<Vec<f64>> =
        (1..=j_max).map(|j| (0..unit).map(|i| model.basis.eval(j, (i as f64 + 0.5) * dt)).collect()).collect();
    let mut floor2 = 0.0;
    for chunk in target.values().chunks(unit) {
        let mut resid = chunk.to_vec();
        for gj in &g {
            let a: f64 = chunk.iter().zip(gj).map(|(u, g)| u * g).sum::<f64>() * dt;
            for (r, gv) in resid.iter_mut().zip(gj) {
                *r -= a * gv;
            }
        }
        floor2 += resid.iter().map(|r| r * r).sum::<f64>() * dt;
    }
    let sampler = EtaSampler::new(model, dt)?;
    let mut rng = stream_rng(seed, 0);
    let mut hits = 0;
    let mut min_distance = f64::INFINITY;
    for _ in 0..samples {
        let mut d2 = 0.0;
        for chunk in target.values().chunks(unit) {
            let eta = sampler.sample(&mut rng)?;
            d2 += chunk.iter().zip(eta.values()).map(|(u, e)| (u - e) * (u - e)).sum::<f64>() * dt;
        }
        let d = d2.sqrt();
        min_distance = min_distance.min(d);
        if d < eps {
            hits += 1;
        }
    }
    Ok(SupportProbe { samples, hits, min_distance, floor: floor2.sqrt() })
}
