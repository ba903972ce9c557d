//! Sparse matrix plumbing, direct factorizations and Krylov solvers.
//!
//! Matrices are stored in compressed-column form (faer). Assembly goes through
//! [`Triplets`], which sums duplicate entries, so element contributions can be
//! pushed without any bookkeeping.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Parallelism};

use crate::error::{Error, Result};

/// Coordinate-format accumulator for sparse assembly.
#[derive(Debug, Clone)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols, "triplet ({i},{j}) out of range");
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    /// Pushes an entry even when it is zero, to pin the sparsity pattern.
    #[inline]
    pub fn push_structural(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    /// Adds `scale * m` with its top-left corner at `(row0, col0)`.
    pub fn add_block(&mut self, row0: usize, col0: usize, m: &SparseMatrix, scale: f64) {
        m.for_each(|i, j, v| self.push(row0 + i, col0 + j, scale * v));
    }

    /// Adds `scale * mᵀ` with its top-left corner at `(row0, col0)`.
    pub fn add_block_transposed(&mut self, row0: usize, col0: usize, m: &SparseMatrix, scale: f64) {
        m.for_each(|i, j, v| self.push(row0 + j, col0 + i, scale * v));
    }

    pub fn append(&mut self, other: Triplets) {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        self.entries.extend(other.entries);
    }

    /// Compressed-column matrix with duplicates summed: a counting sort by
    /// column followed by a small sort within each column.
    pub fn build(&self) -> SparseMatrix {
        let mut col_ptr = vec![0usize; self.ncols + 1];
        for &(_, j, _) in &self.entries {
            col_ptr[j + 1] += 1;
        }
        for j in 0..self.ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut bucket = vec![(0usize, 0.0f64); self.entries.len()];
        for &(i, j, v) in &self.entries {
            bucket[next[j]] = (i, v);
            next[j] += 1;
        }
        let mut ptr = Vec::with_capacity(self.ncols + 1);
        let mut rows = Vec::with_capacity(self.entries.len());
        let mut vals = Vec::with_capacity(self.entries.len());
        ptr.push(0);
        for j in 0..self.ncols {
            let col = &mut bucket[col_ptr[j]..col_ptr[j + 1]];
            col.sort_unstable_by_key(|e| e.0);
            let start = rows.len();
            for &(i, v) in col.iter() {
                if rows.len() > start && rows[rows.len() - 1] == i {
                    *vals.last_mut().expect("nonempty column") += v;
                } else {
                    rows.push(i);
                    vals.push(v);
                }
            }
            ptr.push(rows.len());
        }
        let symbolic = SymbolicSparseColMat::new_checked(self.nrows, self.ncols, ptr, None, rows);
        SparseMatrix {
            inner: SparseColMat::new(symbolic, vals),
        }
    }
}

/// Compressed-column sparse matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Triplets::new(nrows, ncols).build()
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.build()
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut t = Triplets::new(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            t.push(i, i, v);
        }
        t.build()
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.inner.row_indices().len()
    }

    pub fn as_faer(&self) -> &SparseColMat<usize, f64> {
        &self.inner
    }

    /// Calls `f(row, col, value)` for every stored entry.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        let cp = self.inner.col_ptrs();
        let ri = self.inner.row_indices();
        let vals = self.inner.values();
        for j in 0..self.ncols() {
            for k in cp[j]..cp[j + 1] {
                f(ri[k], j, vals[k]);
            }
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.mul_vec_acc(x, 1.0, &mut y);
        y
    }

    /// `y += alpha A x`.
    pub fn mul_vec_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols(), "matvec input length");
        assert_eq!(y.len(), self.nrows(), "matvec output length");
        let cp = self.inner.col_ptrs();
        let ri = self.inner.row_indices();
        let vals = self.inner.values();
        for j in 0..self.ncols() {
            let xj = alpha * x[j];
            if xj == 0.0 {
                continue;
            }
            for k in cp[j]..cp[j + 1] {
                y[ri[k]] += vals[k] * xj;
            }
        }
    }

    /// `y = Aᵀ x`.
    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows(), "transposed matvec input length");
        let cp = self.inner.col_ptrs();
        let ri = self.inner.row_indices();
        let vals = self.inner.values();
        (0..self.ncols())
            .map(|j| (cp[j]..cp[j + 1]).map(|k| vals[k] * x[ri[k]]).sum())
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    /// `xᵀ A x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut t = Triplets::with_capacity(self.ncols(), self.nrows(), self.nnz());
        self.for_each(|i, j, v| t.push(j, i, v));
        t.build()
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols(), rhs.nrows(), "matmul dimensions");
        let inner = faer::sparse::linalg::matmul::sparse_sparse_matmul(
            self.inner.as_ref(),
            rhs.inner.as_ref(),
            1.0,
            Parallelism::None,
        )
        .expect("sparse product allocation");
        SparseMatrix { inner }
    }

    /// `Pᵀ A P`.
    pub fn congruence(&self, p: &SparseMatrix) -> SparseMatrix {
        p.transpose().matmul(&self.matmul(p))
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &SparseMatrix, scale: f64) -> SparseMatrix {
        assert_eq!((self.nrows(), self.ncols()), (other.nrows(), other.ncols()));
        let mut t = Triplets::with_capacity(self.nrows(), self.ncols(), self.nnz() + other.nnz());
        t.add_block(0, 0, self, 1.0);
        t.add_block(0, 0, other, scale);
        t.build()
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut t = Triplets::with_capacity(self.nrows(), self.ncols(), self.nnz());
        t.add_block(0, 0, self, s);
        t.build()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows().min(self.ncols())];
        self.for_each(|i, j, v| {
            if i == j {
                d[i] += v;
            }
        });
        d
    }

    /// Keeps only the listed rows and columns, in the given order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> SparseMatrix {
        let rmap = index_map(self.nrows(), rows);
        let cmap = index_map(self.ncols(), cols);
        let mut t = Triplets::new(rows.len(), cols.len());
        self.for_each(|i, j, v| {
            if let (Some(a), Some(b)) = (rmap[i], cmap[j]) {
                t.push(a, b, v);
            }
        });
        t.build()
    }

    /// Largest absolute entry of `A − Aᵀ`, relative to the largest entry of `A`.
    pub fn asymmetry(&self) -> f64 {
        let d = self.add_scaled(&self.transpose(), -1.0);
        let mut num: f64 = 0.0;
        d.for_each(|_, _, v| num = num.max(v.abs()));
        let mut den: f64 = 0.0;
        self.for_each(|_, _, v| den = den.max(v.abs()));
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows(), self.ncols());
        self.for_each(|i, j, v| m[(i, j)] += v);
        m
    }
}

fn index_map(n: usize, keep: &[usize]) -> Vec<Option<usize>> {
    let mut map = vec![None; n];
    for (k, &i) in keep.iter().enumerate() {
        map[i] = Some(k);
    }
    map
}

/// Sparse LU factorization that keeps its symbolic analysis so matrices with
/// an unchanged pattern can be refactored cheaply.
pub struct SparseLu {
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "LU of a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let symbolic = SymbolicLu::try_new(a.inner.symbolic())
            .map_err(|e| Error::Singular(format!("symbolic LU failed: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), a.inner.as_ref())
            .map_err(|e| Error::Singular(format!("numeric LU failed: {e:?}")))?;
        Ok(Self {
            symbolic,
            lu,
            n: a.nrows(),
        })
    }

    /// Refactors a matrix with the same sparsity pattern as the original.
    pub fn refactor(&mut self, a: &SparseMatrix) -> Result<()> {
        self.lu = Lu::try_new_with_symbolic(self.symbolic.clone(), a.inner.as_ref())
            .map_err(|e| Error::Singular(format!("numeric LU failed: {e:?}")))?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Dimension(format!(
                "rhs of length {} for a system of size {}",
                b.len(),
                self.n
            )));
        }
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        let x: Vec<f64> = (0..self.n).map(|i| rhs.read(i, 0)).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("LU solve produced non-finite values".into()));
        }
        Ok(x)
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct IterativeReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Restarted, right-preconditioned GMRES.
///
/// `apply` computes `y = A x`, `precond` computes `y ≈ A⁻¹ x`. Convergence is
/// measured on the true residual `‖b − A x‖ / ‖b‖`.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, IterativeReport) {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return (
            vec![0.0; n],
            IterativeReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut total = 0;
    let restart = restart.max(1);
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= tol || total >= max_iter {
            return (
                x,
                IterativeReport {
                    iterations: total,
                    relative_residual: rel,
                    converged: rel <= tol,
                },
            );
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            // Modified Gram–Schmidt, applied twice for robustness.
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = dot(&w, vi);
                    h[i][k] += hij;
                    axpy(-hij, vi, &mut w);
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= 0.5 * tol || total >= max_iter || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            axpy(*yi, zi, &mut x);
        }
        if k_used == 0 {
            let ax = apply(&x);
            let rel = norm(&sub(b, &ax)) / bnorm;
            return (
                x,
                IterativeReport {
                    iterations: total,
                    relative_residual: rel,
                    converged: rel <= tol,
                },
            );
        }
    }
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems with a
/// symmetric positive definite preconditioner.
pub fn minres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, IterativeReport) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (
            x,
            IterativeReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut r1 = b.to_vec();
    let mut y = precond(&r1);
    let mut beta1 = dot(&r1, &y);
    if beta1 <= 0.0 {
        return (
            x,
            IterativeReport {
                iterations: 0,
                relative_residual: 1.0,
                converged: false,
            },
        );
    }
    beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let mut beta = beta1;
    let mut oldb = 0.0;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut iters = 0;
    while iters < max_iter {
        iters += 1;
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|yi| s * yi).collect();
        let mut yv = apply(&v);
        if iters >= 2 {
            axpy(-beta / oldb, &r1, &mut yv);
        }
        let alfa = dot(&v, &yv);
        axpy(-alfa / beta, &r2, &mut yv);
        r1 = std::mem::replace(&mut r2, yv);
        y = precond(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if (iters % 25 == 0 || phibar / beta1 <= tol)
            && norm(&sub(b, &apply(&x))) / bnorm <= tol
        {
            break;
        }
        if beta == 0.0 {
            break;
        }
    }
    let rel = norm(&sub(b, &apply(&x))) / bnorm;
    (
        x,
        IterativeReport {
            iterations: iters,
            relative_residual: rel,
            converged: rel <= tol,
        },
    )
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(s: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

/// Extreme eigenvalues of a symmetric dense matrix.
pub fn symmetric_eigen_range(m: &nalgebra::DMatrix<f64>) -> (f64, f64) {
    let sym = 0.5 * (m + m.transpose());
    let e = sym.symmetric_eigen();
    let lo = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}
