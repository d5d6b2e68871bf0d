//! Finite-index checks of the spectral non-degeneracy hypotheses.
//!
//! Every check scans indices `1..=N` only and records `N` in its report. A
//! pairing counts as zero when `|value| ≤ tol`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, Uniform};

use crate::error::{input, Error, Result};
use crate::potential::{Potential, Term};
use crate::seed::stream_rng;
use crate::spectral::{build_basis, Grid, PotentialPair, SpectralBasis};
use crate::Complex64;

/// Largest index bound accepted by the four-index scans.
pub const MAX_QUARTIC_BOUND: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConditionId {
    CouplingNonvanishing,
    GapCondition,
    AlphaAdmissible,
    NonlinearCoupling,
    NonlinearGap,
}

impl ConditionId {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::CouplingNonvanishing => "coupling_nonvanishing",
            ConditionId::GapCondition => "gap_condition",
            ConditionId::AlphaAdmissible => "alpha_admissible",
            ConditionId::NonlinearCoupling => "nonlinear_coupling",
            ConditionId::NonlinearGap => "nonlinear_gap",
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One offending index tuple (1-based) and the value that was found too small.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub indices: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition_id: ConditionId,
    /// Reference level the condition is stated for (`1` unless targeting another level).
    pub target: usize,
    pub index_bound: usize,
    pub tolerance: f64,
    /// Sorted lexicographically by indices.
    pub violations: Vec<Violation>,
    pub passed: bool,
}

impl ConditionReport {
    fn new(condition_id: ConditionId, target: usize, index_bound: usize, tolerance: f64, mut violations: Vec<Violation>) -> Self {
        violations.sort_by(|a, b| a.indices.cmp(&b.indices));
        let passed = violations.is_empty();
        Self { condition_id, target, index_bound, tolerance, violations, passed }
    }

    pub fn contains(&self, indices: &[usize]) -> bool {
        self.violations.iter().any(|v| v.indices == indices)
    }
}

fn check_bound(basis: &SpectralBasis, index_bound: usize) -> Result<()> {
    if index_bound == 0 || index_bound > basis.truncation() {
        return Err(Error::Truncation { bound: index_bound, truncation: basis.truncation() });
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(input("tolerance must be finite and non-negative"));
    }
    Ok(())
}

/// Both parts of the linear condition relative to level 1.
pub fn check_condition_p(basis: &SpectralBasis, index_bound: usize, tol: f64) -> Result<(ConditionReport, ConditionReport)> {
    Ok((
        check_coupling_nonvanishing(basis, 1, index_bound, tol)?,
        check_gap_condition(basis, 1, index_bound, tol)?,
    ))
}

/// Levels `j ≤ N` with `|B_{ij}| ≤ tol`.
pub fn check_coupling_nonvanishing(basis: &SpectralBasis, target: usize, index_bound: usize, tol: f64) -> Result<ConditionReport> {
    check_bound(basis, index_bound)?;
    basis.check_level(target)?;
    check_tol(tol)?;
    let violations = (1..=index_bound)
        .map(|j| (j, basis.coupling_entry(target, j)))
        .filter(|(_, b)| b.abs() <= tol)
        .map(|(j, value)| Violation { indices: vec![j], value })
        .collect();
    Ok(ConditionReport::new(ConditionId::CouplingNonvanishing, target, index_bound, tol, violations))
}

/// Tuples `(j, p, q)` with `j ≠ i`, `{i, j} ≠ {p, q}` and
/// `|(λ_i − λ_j) − (λ_p − λ_q)| ≤ tol`.
///
/// Pair differences are sorted once and each `λ_i − λ_j` is matched against a
/// window, so the cost is `O(N² log N)` plus the output size.
pub fn check_gap_condition(basis: &SpectralBasis, target: usize, index_bound: usize, tol: f64) -> Result<ConditionReport> {
    check_bound(basis, index_bound)?;
    basis.check_level(target)?;
    check_tol(tol)?;
    let n = index_bound;
    let lam = |k: usize| basis.eigenvalue(k);
    let mut diffs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for p in 1..=n {
        for q in 1..=n {
            diffs.push((lam(p) - lam(q), p, q));
        }
    }
    diffs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut violations = Vec::new();
    for j in (1..=n).filter(|&j| j != target) {
        let gap = lam(target) - lam(j);
        let start = diffs.partition_point(|d| d.0 < gap - tol);
        for &(d, p, q) in diffs[start..].iter().take_while(|d| d.0 <= gap + tol) {
            let same_pair = (p == target && q == j) || (p == j && q == target);
            let value = gap - d;
            if !same_pair && value.abs() <= tol {
                violations.push(Violation { indices: vec![j, p, q], value });
            }
        }
    }
    Ok(ConditionReport::new(ConditionId::GapCondition, target, index_bound, tol, violations))
}

/// Levels `j ≠ i`, `j ≤ N`, where `B_{ji}(αλ_j² + 1)` is at most `tol` in
/// magnitude, i.e. where the resonant coefficient multiplying
/// `e^{±i(λ_i−λ_j)t}` in the free-drift expansion of the feedback vanishes.
///
/// Any finite `alpha` is accepted so that roots can be constructed in tests;
/// the feedback itself requires `alpha > 0`.
pub fn check_alpha_admissible(basis: &SpectralBasis, target: usize, alpha: f64, index_bound: usize, tol: f64) -> Result<ConditionReport> {
    check_bound(basis, index_bound)?;
    basis.check_level(target)?;
    check_tol(tol)?;
    if !alpha.is_finite() {
        return Err(input("alpha must be finite"));
    }
    let violations = (1..=index_bound)
        .filter(|&j| j != target)
        .map(|j| {
            let l = basis.eigenvalue(j);
            (j, basis.coupling_entry(j, target) * (alpha * l * l + 1.0))
        })
        .filter(|(_, v)| v.abs() <= tol)
        .map(|(j, value)| Violation { indices: vec![j], value })
        .collect();
    Ok(ConditionReport::new(ConditionId::AlphaAdmissible, target, index_bound, tol, violations))
}

/// How two four-term eigenvalue combinations are judged to be "different".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapReading {
    /// Compare the signed combinations `{i,p} − {j,q}` after cancelling
    /// indices common to both sides. Two tuples that reduce to the same
    /// combination are the same sum of eigenvalues and never conflict.
    #[default]
    Reduced,
    /// Compare the unsigned multisets `{i,j,p,q}` literally. Under this
    /// reading the condition fails for every potential, e.g.
    /// `(1,2,3,3)` against `(1,2,4,4)`.
    LiteralMultiset,
}

/// Quartic pairings `⟨Q e_i e_j, e_p e_q⟩` for all `i, j, p, q ≤ N`, stored
/// at `((i·N + j)·N + p)·N + q` with 0-based indices.
pub fn quartic_pairings(basis: &SpectralBasis, index_bound: usize) -> Result<Vec<f64>> {
    check_bound(basis, index_bound)?;
    if index_bound > MAX_QUARTIC_BOUND {
        return Err(Error::Resource(alloc::format!("four-index scan limited to N ≤ {MAX_QUARTIC_BOUND}, got {index_bound}")));
    }
    let n = index_bound;
    let h = basis.grid().spacing();
    let q = basis.potentials().q();
    let npts = q.len();
    // products[a ≤ b] = e_a e_b on the grid
    let mut products: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for a in 0..n {
        for b in a..n {
            let ea = basis.mode(a + 1);
            let eb = basis.mode(b + 1);
            products.insert((a, b), ea.iter().zip(eb).map(|(x, y)| x * y).collect());
        }
    }
    let mut out = vec![0.0; n * n * n * n];
    let pairs: Vec<(usize, usize)> = products.keys().copied().collect();
    for (ai, &(i, j)) in pairs.iter().enumerate() {
        let left: Vec<f64> = products[&(i, j)].iter().zip(q).map(|(x, qv)| x * qv).collect();
        for &(p, r) in &pairs[ai..] {
            let right = &products[&(p, r)];
            let mut acc = 0.0;
            for k in 0..npts {
                acc += left[k] * right[k];
            }
            let value = h * acc;
            // The pairing is symmetric under every permutation of the four indices.
            for &(a, b) in &[(i, j), (j, i)] {
                for &(c, d) in &[(p, r), (r, p)] {
                    out[((a * n + b) * n + c) * n + d] = value;
                    out[((c * n + d) * n + a) * n + b] = value;
                }
            }
        }
    }
    Ok(out)
}

/// Both parts of the nonlinear condition.
pub fn check_condition_2p(
    basis: &SpectralBasis,
    index_bound: usize,
    tol: f64,
    reading: GapReading,
) -> Result<(ConditionReport, ConditionReport)> {
    Ok((check_quartic_coupling(basis, index_bound, tol)?, check_quartic_gap(basis, index_bound, tol, reading)?))
}

/// Quadruples with `|⟨Q e_i e_j, e_p e_q⟩| ≤ tol`.
pub fn check_quartic_coupling(basis: &SpectralBasis, index_bound: usize, tol: f64) -> Result<ConditionReport> {
    check_tol(tol)?;
    let values = quartic_pairings(basis, index_bound)?;
    let n = index_bound;
    let mut violations = Vec::new();
    for (idx, &value) in values.iter().enumerate() {
        if value.abs() <= tol {
            let (i, j, p, q) = (idx / (n * n * n), (idx / (n * n)) % n, (idx / n) % n, idx % n);
            violations.push(Violation { indices: vec![i + 1, j + 1, p + 1, q + 1], value });
        }
    }
    Ok(ConditionReport::new(ConditionId::NonlinearCoupling, 1, index_bound, tol, violations))
}

/// Signed combination `{i,p} − {j,q}` with common indices cancelled; `pos`
/// and `neg` are sorted and padded with zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Reduced {
    pos: [usize; 2],
    neg: [usize; 2],
}

impl Reduced {
    fn of(i: usize, j: usize, p: usize, q: usize) -> Self {
        let mut pos = vec![i, p];
        let mut neg = vec![j, q];
        let mut k = 0;
        while k < pos.len() {
            if let Some(m) = neg.iter().position(|&x| x == pos[k]) {
                neg.remove(m);
                pos.remove(k);
            } else {
                k += 1;
            }
        }
        pos.sort_unstable();
        neg.sort_unstable();
        let pad = |v: &[usize]| {
            let mut a = [0usize; 2];
            a[..v.len()].copy_from_slice(v);
            a
        };
        Self { pos: pad(&pos), neg: pad(&neg) }
    }

    fn is_trivial(&self) -> bool {
        self.pos == [0, 0] && self.neg == [0, 0]
    }
}

fn sorted4(i: usize, j: usize, p: usize, q: usize) -> [usize; 4] {
    let mut a = [i, j, p, q];
    a.sort_unstable();
    a
}

/// Tuple pairs `(i,j,p,q; i',j',p',q')` with equal
/// `λ_i − λ_j + λ_p − λ_q` up to `tol`, where `{i,p} ≠ {j,q}` and the two
/// tuples differ under `reading`. Each conflicting class pair is reported once,
/// by the lexicographically smallest tuple of each class.
pub fn check_quartic_gap(basis: &SpectralBasis, index_bound: usize, tol: f64, reading: GapReading) -> Result<ConditionReport> {
    check_bound(basis, index_bound)?;
    check_tol(tol)?;
    if index_bound > MAX_QUARTIC_BOUND {
        return Err(Error::Resource(alloc::format!("four-index scan limited to N ≤ {MAX_QUARTIC_BOUND}, got {index_bound}")));
    }
    let n = index_bound;
    let lam = |k: usize| basis.eigenvalue(k);
    let value = |t: &[usize; 4]| lam(t[0]) - lam(t[1]) + lam(t[2]) - lam(t[3]);
    let mut violations = Vec::new();
    match reading {
        GapReading::Reduced => {
            // One representative (smallest tuple) per reduced combination.
            let mut classes: BTreeMap<Reduced, [usize; 4]> = BTreeMap::new();
            for i in 1..=n {
                for j in 1..=n {
                    for p in 1..=n {
                        for q in 1..=n {
                            classes.entry(Reduced::of(i, j, p, q)).or_insert([i, j, p, q]);
                        }
                    }
                }
            }
            let mut entries: Vec<(f64, Reduced, [usize; 4])> =
                classes.into_iter().map(|(k, t)| (value(&t), k, t)).collect();
            entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for a in 0..entries.len() {
                for b in a + 1..entries.len() {
                    let diff = entries[b].0 - entries[a].0;
                    if diff > tol {
                        break;
                    }
                    let (first, second) = order_pair(&entries[a], &entries[b]);
                    if first.1.is_trivial() {
                        continue;
                    }
                    let mut indices = first.2.to_vec();
                    indices.extend_from_slice(&second.2);
                    violations.push(Violation { indices, value: first.0 - second.0 });
                }
            }
        }
        GapReading::LiteralMultiset => {
            let mut entries: Vec<(f64, [usize; 4])> = Vec::with_capacity(n * n * n * n);
            for i in 1..=n {
                for j in 1..=n {
                    for p in 1..=n {
                        for q in 1..=n {
                            let t = [i, j, p, q];
                            entries.push((value(&t), t));
                        }
                    }
                }
            }
            entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nontrivial = |t: &[usize; 4]| sorted2(t[0], t[2]) != sorted2(t[1], t[3]);
            for a in 0..entries.len() {
                for b in a + 1..entries.len() {
                    let diff = entries[b].0 - entries[a].0;
                    if diff > tol {
                        break;
                    }
                    let (ta, tb) = (entries[a].1, entries[b].1);
                    if sorted4(ta[0], ta[1], ta[2], ta[3]) == sorted4(tb[0], tb[1], tb[2], tb[3]) {
                        continue;
                    }
                    let (x, y) = if ta <= tb { (ta, tb) } else { (tb, ta) };
                    let (x, y) = if nontrivial(&x) { (x, y) } else if nontrivial(&y) { (y, x) } else { continue };
                    let mut indices = x.to_vec();
                    indices.extend_from_slice(&y);
                    violations.push(Violation { indices, value: value(&x) - value(&y) });
                }
            }
        }
    }
    Ok(ConditionReport::new(ConditionId::NonlinearGap, 1, index_bound, tol, violations))
}

fn sorted2(a: usize, b: usize) -> [usize; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Puts the non-trivial class first, otherwise the smaller representative.
fn order_pair<'a>(
    a: &'a (f64, Reduced, [usize; 4]),
    b: &'a (f64, Reduced, [usize; 4]),
) -> (&'a (f64, Reduced, [usize; 4]), &'a (f64, Reduced, [usize; 4])) {
    if a.1.is_trivial() {
        (b, a)
    } else if b.1.is_trivial() || a.2 <= b.2 {
        (a, b)
    } else {
        (b, a)
    }
}

/// `(1/T)∫₀ᵀ f(t) e^{−i r_n t} dt` by the trapezoid rule, with `samples`
/// taken at `t_k = k·T/(len−1)` and `n` 1-based.
///
/// For `f = Σ c_j e^{i r_j t}` this tends to `c_n` at rate `O(1/(T·gap))`.
pub fn exponential_coefficient(samples: &[Complex64], frequencies: &[f64], n: usize, horizon: f64) -> Result<Complex64> {
    if samples.len() < 2 {
        return Err(input("need at least two samples"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(input("horizon must be positive"));
    }
    if n == 0 || n > frequencies.len() {
        return Err(Error::Truncation { bound: n, truncation: frequencies.len() });
    }
    let mut sorted = frequencies.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.iter().any(|r| !r.is_finite()) {
        return Err(input("frequencies must be finite and pairwise distinct"));
    }
    let r = frequencies[n - 1];
    let last = samples.len() - 1;
    let dt = horizon / last as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, f) in samples.iter().enumerate() {
        let w = if k == 0 || k == last { 0.5 } else { 1.0 };
        acc += f * Complex64::cis(-r * k as f64 * dt) * w;
    }
    Ok(acc * dt / horizon)
}

/// Parameterized potentials sampled by [`genericity_scan`].
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialFamily {
    Fixed(Potential),
    /// `Σ_{k=1}^{terms} a_k cos(kπx/L)` with `a_k` uniform in `[−amplitude, amplitude]`.
    CosineSum { terms: usize, amplitude: f64 },
}

impl PotentialFamily {
    pub fn draw<R: rand_core::RngCore + ?Sized>(&self, rng: &mut R) -> Result<Potential> {
        match self {
            PotentialFamily::Fixed(p) => Ok(p.clone()),
            PotentialFamily::CosineSum { terms, amplitude } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(input("family amplitude must be finite and non-negative"));
                }
                if *amplitude == 0.0 {
                    return Ok(Potential::zero());
                }
                let dist = Uniform::new_inclusive(-amplitude, *amplitude).map_err(|e| input(alloc::format!("{e}")))?;
                Ok(Potential::new(
                    (1..=*terms).map(|k| Term::Cosine { a: dist.sample(rng), k: k as f64 }).collect(),
                ))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenericityReport {
    pub samples: usize,
    pub passed: usize,
    /// `None` when no samples were drawn.
    pub pass_rate: Option<f64>,
    /// Failing draws with the conditions they violated.
    pub failures: Vec<(Potential, Vec<ConditionId>)>,
}

/// Draws `sample_count` potentials (draw `k` uses stream `k` of `seed`) and
/// checks both parts of the linear condition at level 1 for each.
pub fn genericity_scan(
    family: &PotentialFamily,
    q: &Potential,
    grid: &Grid,
    truncation: usize,
    sample_count: usize,
    index_bound: usize,
    tol: f64,
    seed: u64,
) -> Result<GenericityReport> {
    let mut passed = 0;
    let mut failures = Vec::new();
    for k in 0..sample_count {
        let mut rng = stream_rng(seed, k as u64);
        let v = family.draw(&mut rng)?;
        let pots = PotentialPair::from_potentials(grid, &v, q)?;
        let basis = build_basis(grid, &pots, truncation)?;
        let (a, b) = check_condition_p(&basis, index_bound, tol)?;
        let failed: Vec<ConditionId> = [a, b].iter().filter(|r| !r.passed).map(|r| r.condition_id).collect();
        if failed.is_empty() {
            passed += 1;
        } else {
            failures.push((v, failed));
        }
    }
    let pass_rate = (sample_count > 0).then(|| passed as f64 / sample_count as f64);
    Ok(GenericityReport { samples: sample_count, passed, pass_rate, failures })
}
