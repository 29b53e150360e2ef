//! Dense and banded linear algebra with no external numerical dependencies.
//!
//! Symmetric matrices are stored by their lower band; a dense symmetric
//! matrix is simply one whose bandwidth is `order - 1`. Two routes to the
//! symmetric-definite pencil `A v = γ B v` are provided:
//!
//! * [`sym_generalized_eig`]: Cholesky reduction of `B` followed by cyclic
//!   Jacobi on the dense reduced matrix. Returns every eigenpair.
//! * [`banded_generalized_eig`]: Sylvester inertia counts of `A - s B` and
//!   bisection on `s`, then shift-invert iteration for the vectors. Cost is
//!   linear in the order, so it is the route used inside root finders.

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    order: usize,
    bandwidth: usize,
    // row i holds entries (i, i - d) for d = 0..=bandwidth at i * (bandwidth + 1) + d
    lower: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(order.saturating_sub(1));
        Self {
            order,
            bandwidth,
            lower: vec![0.0; order * (bandwidth + 1)],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order, 0);
        for i in 0..order {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), 0);
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds from a dense row-major square array, reading the lower triangle.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("dense input is not square".into()));
        }
        let mut m = Self::zeros(n, n.saturating_sub(1));
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, rows[i][j]);
            }
        }
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        (d <= self.bandwidth).then(|| i * (self.bandwidth + 1) + d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.lower[s])
    }

    /// Sets entry (i, j), and by symmetry (j, i).
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bandwidth));
        self.lower[s] = value;
    }

    /// Adds to entry (i, j). Each unordered pair is one stored value, so
    /// symmetric assembly must add each pair once.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bandwidth));
        self.lower[s] += value;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.order);
        let bw = self.bandwidth;
        let mut y = vec![0.0; self.order];
        for i in 0..self.order {
            let row = &self.lower[i * (bw + 1)..(i + 1) * (bw + 1)];
            y[i] += row[0] * x[i];
            for d in 1..=bw.min(i) {
                let a = row[d];
                y[i] += a * x[i - d];
                y[i - d] += a * x[i];
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.lower.iter_mut().for_each(|v| *v *= c);
        m
    }

    /// Linear combination `Σ cᵢ Mᵢ` of matrices of equal order.
    pub fn combine(terms: &[(f64, &SymMatrix)]) -> Self {
        let order = terms.first().map_or(0, |t| t.1.order);
        let bw = terms.iter().map(|t| t.1.bandwidth).max().unwrap_or(0);
        let mut out = Self::zeros(order, bw);
        for &(c, m) in terms {
            assert_eq!(m.order, order, "combine: order mismatch");
            if c == 0.0 {
                continue;
            }
            for i in 0..order {
                for d in 0..=m.bandwidth.min(i) {
                    out.lower[i * (bw + 1) + d] += c * m.lower[i * (m.bandwidth + 1) + d];
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.order {
            for d in 0..=self.bandwidth.min(i) {
                let v = self.lower[i * (self.bandwidth + 1) + d];
                s += if d == 0 { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    /// Largest absolute row sum (equal to the 1-norm by symmetry).
    pub fn inf_norm(&self) -> f64 {
        let mut rows = vec![0.0; self.order];
        for i in 0..self.order {
            for d in 0..=self.bandwidth.min(i) {
                let v = self.lower[i * (self.bandwidth + 1) + d].abs();
                rows[i] += v;
                if d > 0 {
                    rows[i - d] += v;
                }
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Spectral norm estimate by power iteration.
    pub fn norm2_estimate(&self) -> f64 {
        if self.order == 0 {
            return 0.0;
        }
        let mut x: Vec<f64> = (0..self.order).map(|i| 1.0 + ((i as f64) * 0.618).sin() * 0.5).collect();
        let mut est = 0.0;
        for _ in 0..60 {
            let nx = norm2(&x);
            if nx == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            let y = self.matvec(&x);
            est = norm2(&y);
            x = y;
        }
        est
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.order, self.order);
        for i in 0..self.order {
            for j in i.saturating_sub(self.bandwidth)..=i {
                let v = self.get(i, j);
                d.set(i, j, v);
                d.set(j, i, v);
            }
        }
        d
    }

    pub fn to_band(&self) -> BandMatrix {
        let bw = self.bandwidth;
        let mut b = BandMatrix::zeros(self.order, bw, bw);
        for i in 0..self.order {
            for j in i.saturating_sub(bw)..=i {
                let v = self.get(i, j);
                b.set(i, j, v);
                b.set(j, i, v);
            }
        }
        b
    }

    /// Sylvester inertia from an unpivoted banded LDLᵀ factorisation.
    ///
    /// Exact zero pivots are replaced by a tiny positive value scaled to the
    /// matrix norm, which perturbs the count only for shifts sitting exactly on
    /// an eigenvalue.
    pub fn inertia(&self) -> Inertia {
        let n = self.order;
        let bw = self.bandwidth;
        let w = bw + 1;
        // l[i*w + d] = L(i, i-d), d >= 1
        let mut l = vec![0.0; n * w];
        let mut dvals = vec![0.0; n];
        let tiny = f64::EPSILON * self.inf_norm().max(f64::MIN_POSITIVE);
        let mut inertia = Inertia::default();
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            let mut dj = self.lower[j * w];
            for k in k0..j {
                let ljk = l[j * w + (j - k)];
                dj -= ljk * ljk * dvals[k];
            }
            if dj == 0.0 || !dj.is_finite() {
                inertia.zero += 1;
                dj = tiny;
            } else if dj > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            dvals[j] = dj;
            for i in (j + 1)..n.min(j + bw + 1) {
                let mut s = self.lower[i * w + (i - j)];
                let kk0 = i.saturating_sub(bw).max(k0);
                for k in kk0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)] * dvals[k];
                }
                l[i * w + (i - j)] = s / dj;
            }
        }
        inertia
    }
}

/// Counts of positive, negative and zero pivots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], x))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// General band matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i-kl ..= i+ku at i*(kl+ku+1) + (j + kl - i)
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        (j + self.kl >= i && j <= i + self.ku).then(|| i * (self.kl + self.ku + 1) + (j + self.kl - i))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside band"));
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside band"));
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let j0 = i.saturating_sub(self.kl);
                let j1 = (i + self.ku).min(self.n - 1);
                (j0..=j1).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n.saturating_sub(1));
            for j in j0..=j1 {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Largest |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i.saturating_sub(self.kl)..=(i + self.ku).min(self.n.saturating_sub(1)) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn lu(&self) -> Result<BandLu> {
        BandLu::factor(self)
    }
}

/// LU factorisation of a band matrix with partial pivoting.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    // upper factor width: ku + kl
    uw: usize,
    // u[i*(uw+1) + (j-i)], j in i..=i+uw
    u: Vec<f64>,
    // multipliers l[i*kl + (r-i-1)], r in i+1..=i+kl
    l: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn factor(m: &BandMatrix) -> Result<Self> {
        let n = m.n;
        let kl = m.kl;
        let uw = m.ku + kl;
        // working rows over absolute columns [i - kl, i + uw]
        let ww = kl + uw + 1;
        let mut w = vec![0.0; n * ww];
        let at = |i: usize, j: usize| i * ww + (j + kl - i);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + m.ku).min(n.saturating_sub(1)) {
                w[at(i, j)] = m.get(i, j);
            }
        }
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * kl.max(1)];
        let mut pivots = vec![0; n];
        for i in 0..n {
            let rlast = (i + kl).min(n - 1);
            let mut p = i;
            let mut best = w[at(i, i)].abs();
            for r in (i + 1)..=rlast {
                let v = w[at(r, i)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= scale * 1e-300 || !best.is_finite() {
                return Err(Error::Singular { index: i });
            }
            pivots[i] = p;
            let clast = (i + uw).min(n - 1);
            if p != i {
                for j in i..=clast {
                    w.swap(at(i, j), at(p, j));
                }
            }
            let piv = w[at(i, i)];
            for r in (i + 1)..=rlast {
                let f = w[at(r, i)] / piv;
                l[i * kl + (r - i - 1)] = f;
                w[at(r, i)] = 0.0;
                if f != 0.0 {
                    for j in (i + 1)..=clast {
                        w[at(r, j)] -= f * w[at(i, j)];
                    }
                }
            }
        }
        let mut u = vec![0.0; n * (uw + 1)];
        for i in 0..n {
            for j in i..=(i + uw).min(n - 1) {
                u[i * (uw + 1) + (j - i)] = w[at(i, j)];
            }
        }
        Ok(Self {
            n,
            kl,
            uw,
            u,
            l,
            pivots,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let n = self.n;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let p = self.pivots[i];
            if p != i {
                x.swap(i, p);
            }
            let xi = x[i];
            for r in (i + 1)..=(i + self.kl).min(n - 1) {
                x[r] -= self.l[i * self.kl + (r - i - 1)] * xi;
            }
        }
        for i in (0..n).rev() {
            let row = &self.u[i * (self.uw + 1)..(i + 1) * (self.uw + 1)];
            let mut s = x[i];
            for j in (i + 1)..=(i + self.uw).min(n - 1) {
                s -= row[j - i] * x[j];
            }
            x[i] = s / row[0];
        }
        x
    }
}

/// Solves `M x = rhs` for a band matrix.
pub fn solve_banded(m: &BandMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.order() {
        return Err(Error::DimensionMismatch(format!(
            "rhs length {} vs order {}",
            rhs.len(),
            m.order()
        )));
    }
    Ok(m.lu()?.solve(rhs))
}

/// Lower-triangular banded Cholesky factor `L` with `L Lᵀ = B`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    order: usize,
    bandwidth: usize,
    // l[i*(bw+1) + d] = L(i, i-d)
    l: Vec<f64>,
}

impl CholeskyFactor {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j > self.bandwidth {
            0.0
        } else {
            self.l[i * (self.bandwidth + 1) + (i - j)]
        }
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let w = self.bandwidth + 1;
        let mut y = b.to_vec();
        for i in 0..self.order {
            let mut s = y[i];
            for d in 1..=self.bandwidth.min(i) {
                s -= self.l[i * w + d] * y[i - d];
            }
            y[i] = s / self.l[i * w];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let w = self.bandwidth + 1;
        let mut x = y.to_vec();
        for i in (0..self.order).rev() {
            let xi = x[i] / self.l[i * w];
            x[i] = xi;
            for d in 1..=self.bandwidth.min(i) {
                x[i - d] -= self.l[i * w + d] * xi;
            }
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.order, self.order);
        for i in 0..self.order {
            for j in i.saturating_sub(self.bandwidth)..=i {
                d.set(i, j, self.get(i, j));
            }
        }
        d
    }
}

/// Banded Cholesky factorisation; fails with the first non-positive pivot.
pub fn cholesky(b: &SymMatrix) -> Result<CholeskyFactor> {
    let n = b.order;
    let bw = b.bandwidth;
    let w = bw + 1;
    let mut l = vec![0.0; n * w];
    for j in 0..n {
        let k0 = j.saturating_sub(bw);
        let mut d = b.lower[j * w];
        for k in k0..j {
            let v = l[j * w + (j - k)];
            d -= v * v;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[j * w] = ljj;
        for i in (j + 1)..n.min(j + bw + 1) {
            let mut s = b.lower[i * w + (i - j)];
            for k in i.saturating_sub(bw).max(k0)..j {
                s -= l[i * w + (i - k)] * l[j * w + (j - k)];
            }
            l[i * w + (i - j)] = s / ljj;
        }
    }
    Ok(CholeskyFactor {
        order: n,
        bandwidth: bw,
        l,
    })
}

/// Eigenvalues in descending order with matching column eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_TOL: f64 = 1e-13;

/// Cyclic Jacobi for a dense symmetric matrix. Returns unsorted eigenvalues
/// and the orthogonal matrix whose columns are the eigenvectors.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `tol * ‖A‖_F`.
pub fn jacobi_eigen(a: &DenseMatrix, tol: f64, max_sweeps: usize) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::DimensionMismatch("Jacobi needs a square matrix".into()));
    }
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let total = m.frobenius_norm();
    let threshold = tol * total;
    let off_norm = |m: &DenseMatrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m.get(i, j) * m.get(i, j);
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    loop {
        let off = off_norm(&m);
        if off <= threshold || total == 0.0 {
            break;
        }
        if sweeps >= max_sweeps {
            return Err(Error::NoConvergence { sweeps, off_norm: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                // skip rotations that cannot change the diagonal
                if apq.abs() < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) && sweeps > 3 {
                    m.set(p, q, 0.0);
                    m.set(q, p, 0.0);
                    continue;
                }
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
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let values = (0..n).map(|i| m.get(i, i)).collect();
    Ok((values, v))
}

/// Top `count` eigenpairs of `A v = γ B v` via Cholesky reduction and Jacobi.
/// Vectors are B-orthonormal.
pub fn sym_generalized_eig(a: &SymMatrix, b: &SymMatrix, count: usize) -> Result<EigenPairs> {
    sym_generalized_eig_tol(a, b, count, JACOBI_TOL)
}

/// [`sym_generalized_eig`] with an explicit Jacobi off-diagonal tolerance.
pub fn sym_generalized_eig_tol(a: &SymMatrix, b: &SymMatrix, count: usize, tol: f64) -> Result<EigenPairs> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("eigen tolerance must lie in (0, 1), got {tol}")));
    }
    let n = a.order;
    if b.order != n {
        return Err(Error::DimensionMismatch(format!("A is {n}, B is {}", b.order)));
    }
    if count > n {
        return Err(Error::DimensionMismatch(format!("requested {count} eigenpairs of order {n}")));
    }
    let chol = cholesky(b)?;
    // W = L⁻¹ A column by column, then C = L⁻¹ Wᵀ
    let ad = a.to_dense();
    let mut w = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col = chol.solve_lower(&ad.column(j));
        for i in 0..n {
            w.set(i, j, col[i]);
        }
    }
    let mut c = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let row: Vec<f64> = (0..n).map(|k| w.get(j, k)).collect();
        let col = chol.solve_lower(&row);
        for i in 0..n {
            c.set(i, j, col[i]);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (c.get(i, j) + c.get(j, i));
            c.set(i, j, s);
            c.set(j, i, s);
        }
    }
    let (values, z) = jacobi_eigen(&c, tol, JACOBI_MAX_SWEEPS)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]));
    let mut out = EigenPairs {
        values: Vec::with_capacity(count),
        vectors: Vec::with_capacity(count),
    };
    for &idx in order.iter().take(count) {
        out.values.push(values[idx]);
        out.vectors.push(chol.solve_upper(&z.column(idx)));
    }
    Ok(out)
}

/// Number of eigenvalues of the pencil (A, B) strictly greater than `shift`,
/// from the inertia of `A - shift·B` (B must be positive definite).
pub fn count_eigenvalues_above(a: &SymMatrix, b: &SymMatrix, shift: f64) -> usize {
    SymMatrix::combine(&[(1.0, a), (-shift, b)]).inertia().positive
}

/// The `k`-th largest eigenvalue (1-based) of the pencil (A, B) by inertia
/// bisection, resolved to the last representable bit.
pub fn kth_largest_eigenvalue(a: &SymMatrix, b: &SymMatrix, k: usize) -> Result<f64> {
    let n = a.order;
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!("eigenvalue index {k} of order {n}")));
    }
    let scale = {
        let mut s: f64 = 0.0;
        for i in 0..n {
            let bii = b.get(i, i);
            if bii > 0.0 {
                s = s.max(a.get(i, i).abs() / bii);
            }
        }
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    };
    let mut hi = scale;
    let mut guard = 0;
    while count_eigenvalues_above(a, b, hi) >= 1 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NoConvergence { sweeps: guard, off_norm: hi });
        }
    }
    let mut lo = -scale;
    guard = 0;
    while count_eigenvalues_above(a, b, lo) < k {
        lo *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NoConvergence { sweeps: guard, off_norm: lo });
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_eigenvalues_above(a, b, mid) >= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Shift-invert iteration for the eigenvector of (A, B) nearest `shift`,
/// B-orthogonalised against `previous`. Returns a B-normalised vector.
pub fn inverse_iteration(a: &SymMatrix, b: &SymMatrix, shift: f64, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.order;
    let scale = a.inf_norm().max(b.inf_norm()).max(f64::MIN_POSITIVE);
    let mut s = shift;
    let lu = loop {
        match SymMatrix::combine(&[(1.0, a), (-s, b)]).to_band().lu() {
            Ok(lu) => break lu,
            Err(Error::Singular { .. }) => {
                s += scale * 1e-14 * (1.0 + s.abs());
            }
            Err(e) => return Err(e),
        }
    };
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877).sin()).collect();
    let b_orth = |x: &mut Vec<f64>| {
        for p in previous {
            let c = b.bilinear(p, x);
            x.iter_mut().zip(p).for_each(|(xi, pi)| *xi -= c * pi);
        }
        let nb = b.quad_form(x).max(0.0).sqrt();
        if nb > 0.0 {
            x.iter_mut().for_each(|v| *v /= nb);
        }
    };
    b_orth(&mut x);
    for _ in 0..6 {
        let bx = b.matvec(&x);
        let mut y = lu.solve(&bx);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular { index: 0 });
        }
        b_orth(&mut y);
        x = y;
    }
    Ok(x)
}

/// Top `count` eigenpairs of the banded pencil (A, B) by inertia bisection
/// plus shift-invert iteration. Vectors are B-orthonormal.
pub fn banded_generalized_eig(a: &SymMatrix, b: &SymMatrix, count: usize) -> Result<EigenPairs> {
    if b.order != a.order {
        return Err(Error::DimensionMismatch(format!("A is {}, B is {}", a.order, b.order)));
    }
    cholesky(b)?;
    let mut out = EigenPairs {
        values: Vec::with_capacity(count),
        vectors: Vec::with_capacity(count),
    };
    for k in 1..=count {
        let value = kth_largest_eigenvalue(a, b, k)?;
        let v = inverse_iteration(a, b, value, &out.vectors)?;
        out.values.push(value);
        out.vectors.push(v);
    }
    Ok(out)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
