//! Small dense and tridiagonal symmetric eigensolvers.
//!
//! The finite-difference operator is a symmetric tridiagonal matrix of which
//! only the lowest few eigenpairs are wanted, so it is handled with Sturm
//! bisection plus inverse iteration. Dense symmetric matrices (the coupling
//! matrix, a few dozen rows at most) go through cyclic Jacobi rotations.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;

/// Square real matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Panics if `data.len() != n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data must hold n*n entries");
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`, which is exactly symmetric.
    pub fn symmetrize(&mut self) {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, avg);
                self.set(j, i, avg);
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// Induced 2-norm bound via the Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `out = A x` for a complex vector.
    pub fn mul_complex(&self, x: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, xv) in row.iter().zip(x) {
                acc += xv * a;
            }
            *o = acc;
        }
    }

    /// `out = Aᵀ x` for a complex vector.
    pub fn mul_transpose_complex(&self, x: &[Complex64], out: &mut [Complex64]) {
        for o in out.iter_mut() {
            *o = Complex64::new(0.0, 0.0);
        }
        for (i, xv) in x.iter().enumerate() {
            let row = self.row(i);
            for (o, a) in out.iter_mut().zip(row) {
                *o += xv * a;
            }
        }
    }

    /// Largest deviation of `AᵀA` from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| self.get(k, i) * self.get(k, j)).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Eigen-decomposition `A = G diag(values) Gᵀ` with eigenvectors stored as the
/// columns of `vectors`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: RealMatrix,
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
pub fn symmetric_eigen(a: &RealMatrix) -> SymmetricEigen {
    let n = a.dim();
    let mut m = a.clone();
    let mut v = RealMatrix::identity(n);
    let scale = m.frobenius().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = RealMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, col, v.get(k, src));
        }
    }
    SymmetricEigen { values, vectors }
}

/// Symmetric tridiagonal matrix: `diag` of length `n`, `off` of length `n-1`.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    /// `(c, w)` when the matrix is `c·tridiag(−1, 2, −1) + diag(w)`.
    laplacian: Option<(f64, Vec<f64>)>,
}

impl SymTridiagonal {
    /// Panics unless `off.len() + 1 == diag.len()` and `diag` is non-empty.
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty() && off.len() + 1 == diag.len());
        Self { diag, off, laplacian: None }
    }

    /// `c·tridiag(−1, 2, −1) + diag(w)` with `c > 0`. Keeping `w` apart from
    /// `2c` lets the small eigenvalues be resolved relative to `w` rather
    /// than to `c`. Panics if `w` is empty or `c` is not positive.
    pub fn scaled_laplacian_plus(c: f64, w: Vec<f64>) -> Self {
        assert!(!w.is_empty() && c > 0.0);
        let diag = w.iter().map(|x| 2.0 * c + x).collect();
        let off = vec![-c; w.len() - 1];
        Self { diag, off, laplacian: Some((c, w)) }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    fn pivmin(&self) -> f64 {
        let max_off2 = self.off.iter().fold(0.0f64, |acc, e| acc.max(e * e));
        f64::MIN_POSITIVE * max_off2.max(1.0)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = self.pivmin();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.dim() {
            let e = self.off[i - 1];
            q = self.diag[i] - x - e * e / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        match self.shifted_ldl() {
            Some(ldl) => ldl.eigenvalue(k),
            None => self.eigenvalue_sturm(k),
        }
    }

    fn eigenvalue_sturm(&self, k: usize) -> f64 {
        let (lo, hi) = self.gershgorin();
        bisect(lo, hi, k, |x| self.count_below(x))
    }

    /// `T − σI = L D Lᵀ` with `σ` the lower Gershgorin bound, if the factor
    /// is positive definite. Counting on the factored form resolves small
    /// eigenvalues to high relative accuracy; counting on `T` directly loses
    /// about `ε‖T‖` absolutely, which is large for fine grids.
    fn shifted_ldl(&self) -> Option<ShiftedLdl> {
        if let Some((c, w)) = &self.laplacian {
            return Self::laplacian_ldl(*c, w, self.gershgorin().1);
        }
        let n = self.dim();
        let (sigma, hi) = self.gershgorin();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        let mut prev = self.diag[0] - sigma;
        d.push(prev);
        for i in 1..n {
            if !(prev > 0.0 && prev.is_finite()) {
                return None;
            }
            let li = self.off[i - 1] / prev;
            l.push(li);
            prev = self.diag[i] - sigma - li * self.off[i - 1];
            d.push(prev);
        }
        if !(prev > 0.0 && prev.is_finite()) {
            return None;
        }
        Some(ShiftedLdl { sigma, upper: hi - sigma, d, l })
    }

    /// Shift `σ = min w`. With `d_i = c(1 + t_i)` the pivots obey
    /// `t_0 = 1 + g_0`, `t_i = g_i + t_{i−1}/(1 + t_{i−1})`, `g_i = (w_i − σ)/c`,
    /// a sum of non-negative terms that never cancels.
    fn laplacian_ldl(c: f64, w: &[f64], hi: f64) -> Option<ShiftedLdl> {
        let sigma = w.iter().copied().fold(f64::INFINITY, f64::min);
        if !sigma.is_finite() {
            return None;
        }
        let n = w.len();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n - 1);
        let mut t = 1.0 + (w[0] - sigma) / c;
        d.push(c * (1.0 + t));
        for &wi in &w[1..] {
            l.push(-1.0 / (1.0 + t));
            t = (wi - sigma) / c + t / (1.0 + t);
            d.push(c * (1.0 + t));
        }
        if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return None;
        }
        Some(ShiftedLdl { sigma, upper: hi - sigma, d, l })
    }

    /// Solves `(T − shift·I) x = rhs` in place by Gaussian elimination with
    /// partial pivoting; exactly singular pivots are replaced by a tiny value
    /// so the routine can serve inverse iteration.
    pub fn solve_shifted(&self, shift: f64, rhs: &mut [f64]) {
        let n = self.dim();
        let tiny = f64::EPSILON * self.gershgorin().1.abs().max(1.0);
        if n == 1 {
            let d = self.diag[0] - shift;
            rhs[0] /= if d == 0.0 { tiny } else { d };
            return;
        }
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - shift).collect();
        let mut dl = self.off.clone();
        let mut du = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n - 1];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let f = dl[i] / d[i];
                dl[i] = f;
                d[i + 1] -= f * du[i];
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = f;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - f * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        for i in 0..n - 1 {
            if swapped[i] {
                let tmp = rhs[i];
                rhs[i] = rhs[i + 1];
                rhs[i + 1] = tmp - dl[i] * rhs[i];
            } else {
                rhs[i + 1] -= dl[i] * rhs[i];
            }
        }
        rhs[n - 1] /= d[n - 1];
        rhs[n - 2] = (rhs[n - 2] - du[n - 2] * rhs[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - du2[i] * rhs[i + 2]) / d[i];
        }
    }

    /// The `count` lowest eigenpairs. Eigenvectors have unit Euclidean norm
    /// and are mutually orthogonal to rounding.
    pub fn lowest_eigenpairs(&self, count: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.dim();
        let values: Vec<f64> = (0..count).map(|k| self.eigenvalue(k)).collect();
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
        for (k, &lambda) in values.iter().enumerate() {
            // Deterministic start vector with components along every mode.
            let mut x: Vec<f64> = (0..n)
                .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * (0.618 + k as f64 * 0.137)).sin())
                .collect();
            for _ in 0..3 {
                self.solve_shifted(lambda, &mut x);
                orthogonalize(&mut x, &vectors);
                normalize(&mut x);
            }
            orthogonalize(&mut x, &vectors);
            normalize(&mut x);
            vectors.push(x);
        }
        (values, vectors)
    }
}

struct ShiftedLdl {
    sigma: f64,
    upper: f64,
    d: Vec<f64>,
    l: Vec<f64>,
}

impl ShiftedLdl {
    /// Negative pivots of `LDLᵀ − xI` by the stationary qd transform.
    fn count_below(&self, x: f64) -> usize {
        let n = self.d.len();
        let mut count = 0;
        let mut s = -x;
        for i in 0..n {
            let mut dplus = self.d[i] + s;
            if dplus == 0.0 {
                dplus = -f64::MIN_POSITIVE;
            }
            if dplus < 0.0 {
                count += 1;
            }
            if i + 1 < n {
                let lplus = self.d[i] * self.l[i] / dplus;
                s = lplus * self.l[i] * s - x;
                if !s.is_finite() {
                    // Overflow past an exact zero pivot; restart the recurrence.
                    s = -x;
                }
            }
        }
        count
    }

    fn eigenvalue(&self, k: usize) -> f64 {
        self.sigma + bisect(0.0, self.upper, k, |x| self.count_below(x))
    }
}

/// Bisection for the `k`-th eigenvalue inside `[lo, hi]`, run to full
/// relative precision.
fn bisect(mut lo: f64, mut hi: f64, k: usize, count_below: impl Fn(f64) -> usize) -> f64 {
    let width = (hi - lo).abs().max(1.0);
    if lo != 0.0 {
        lo -= 1e-12 * width;
    }
    hi += 1e-12 * width;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

fn orthogonalize(x: &mut [f64], against: &[Vec<f64>]) {
    for _ in 0..2 {
        for prev in against {
            let dot: f64 = x.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (xi, pi) in x.iter_mut().zip(prev) {
                *xi -= dot * pi;
            }
        }
    }
}
