//! Compressed sparse row storage and the direct solver used for every
//! algebraic system in the crate.

#[cfg(not(feature = "umfpack"))]
use faer::linalg::solvers::SolveCore;
#[cfg(not(feature = "umfpack"))]
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
#[cfg(not(feature = "umfpack"))]
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
#[cfg(not(feature = "umfpack"))]
use faer::{Conj, MatMut};
use thiserror::Error;

/// Default relative residual tolerance for linear solves.
pub const DEFAULT_LIN_TOL: f64 = 1e-10;

const MAX_REFINEMENTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("triplet ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    OutOfRange { row: usize, col: usize, n_rows: usize, n_cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve stalled at relative residual {achieved:.3e} (target {target:.3e})")]
    Residual { achieved: f64, target: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SparseError> {
        for &(row, col, _) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(SparseError::OutOfRange { row, col, n_rows, n_cols });
            }
        }
        // counting sort by row, stable in input order
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut sorted = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            sorted[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..n_rows {
            let row = &mut sorted[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            let start = col_idx.len();
            for &(c, v) in row.iter() {
                if col_idx.len() > start && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    fn find(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b].binary_search(&c).ok().map(|k| a + k)
    }

    /// Stored value at `(r, c)`, zero if structurally absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.find(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(c, v)| v * x[*c]).sum()
            })
            .collect()
    }

    /// `y += alpha * A x`.
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *yr += alpha * cols.iter().zip(vals).map(|(c, v)| v * x[*c]).sum::<f64>();
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                col_idx[next[*c]] = r;
                values[next[*c]] = *v;
                next[*c] += 1;
            }
        }
        Self { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr: counts, col_idx, values }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Append the entries of `alpha * self` shifted by `(row_off, col_off)` to a triplet list.
    pub fn push_triplets(&self, row_off: usize, col_off: usize, alpha: f64, out: &mut Vec<(usize, usize, f64)>) {
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            out.extend(cols.iter().zip(vals).map(|(c, v)| (row_off + r, col_off + c, alpha * v)));
        }
    }

    /// `self[row_off.., col_off..] += alpha * block`; every entry of `block` must
    /// already be present in the pattern of `self`.
    pub fn add_block_in_pattern(&mut self, block: &CsrMatrix, row_off: usize, col_off: usize, alpha: f64) -> Result<(), SparseError> {
        for r in 0..block.n_rows {
            let (cols, vals) = block.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let k = self.find(row_off + r, col_off + c).ok_or_else(|| {
                    SparseError::Dimension(format!("entry ({}, {}) not in pattern", row_off + r, col_off + c))
                })?;
                self.values[k] += alpha * v;
            }
        }
        Ok(())
    }

    /// Replace row `r` by the identity row, keeping the sparsity pattern.
    pub fn set_identity_row(&mut self, r: usize) -> Result<(), SparseError> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        let mut has_diag = false;
        for k in a..b {
            if self.col_idx[k] == r {
                self.values[k] = 1.0;
                has_diag = true;
            } else {
                self.values[k] = 0.0;
            }
        }
        if has_diag {
            Ok(())
        } else {
            Err(SparseError::Dimension(format!("row {r} has no diagonal entry")))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                row[*c] += v;
            }
        }
        d
    }

    fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n_rows == other.n_rows && self.n_cols == other.n_cols && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }
}

pub fn triplet_to_csr(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<CsrMatrix, SparseError> {
    CsrMatrix::from_triplets(n_rows, n_cols, triplets)
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(not(feature = "umfpack"))]
struct Factors {
    symbolic: SymbolicLu<usize>,
    lu: Option<Lu<usize, f64>>,
}

#[cfg(not(feature = "umfpack"))]
impl Factors {
    fn analyze(a: &CsrMatrix) -> Result<Self, SparseError> {
        faer::set_global_parallelism(faer::Par::Seq);
        let sym = SymbolicSparseColMatRef::new_checked(a.n_rows, a.n_rows, &a.row_ptr, None, &a.col_idx);
        let symbolic = SymbolicLu::try_new(sym).map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        Ok(Self { symbolic, lu: None })
    }

    fn factor(&mut self, a: &CsrMatrix) -> Result<(), SparseError> {
        let sym = SymbolicSparseColMatRef::new_checked(a.n_rows, a.n_rows, &a.row_ptr, None, &a.col_idx);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), SparseColMatRef::new(sym, &a.values))
            .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        self.lu = Some(lu);
        Ok(())
    }

    fn solve_in_place(&self, _a: &CsrMatrix, b: &mut [f64]) -> Result<(), SparseError> {
        let n = b.len();
        let lu = self.lu.as_ref().expect("solve before factor");
        lu.solve_transpose_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(b, n, 1));
        Ok(())
    }
}

#[cfg(feature = "umfpack")]
struct Factors(crate::umfpack::UmfpackLu);

#[cfg(feature = "umfpack")]
impl Factors {
    fn analyze(a: &CsrMatrix) -> Result<Self, SparseError> {
        crate::umfpack::UmfpackLu::analyze(a.n_rows, &a.row_ptr, &a.col_idx, &a.values)
            .map(Self)
            .map_err(SparseError::Factorization)
    }

    fn factor(&mut self, a: &CsrMatrix) -> Result<(), SparseError> {
        self.0.factor(&a.values).map_err(SparseError::Factorization)
    }

    fn solve_in_place(&self, a: &CsrMatrix, b: &mut [f64]) -> Result<(), SparseError> {
        self.0.solve_in_place(&a.values, b).map_err(SparseError::Factorization)
    }
}

/// Sparse LU solver. The symbolic analysis is kept while the sparsity pattern
/// is unchanged, and the last numeric factorization can be reused for further
/// right-hand sides.
// CSR arrays of A are the CSC arrays of A^T; the backends factor A^T and use transposed solves.
#[derive(Default)]
pub struct DirectSolver {
    factors: Option<Factors>,
    factored: Option<CsrMatrix>,
}

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Factor `a`, replacing any previous factorization.
    pub fn factor(&mut self, a: &CsrMatrix) -> Result<(), SparseError> {
        if a.n_cols != a.n_rows {
            return Err(SparseError::Dimension(format!("matrix is {}x{}, expected square", a.n_rows, a.n_cols)));
        }
        let reuse = matches!(&self.factored, Some(p) if p.same_pattern(a)) && self.factors.is_some();
        self.factored = None;
        if !reuse {
            self.factors = None;
            self.factors = Some(Factors::analyze(a)?);
        }
        self.factors.as_mut().unwrap().factor(a)?;
        self.factored = Some(a.clone());
        Ok(())
    }

    /// Whether a factorization is available for [`DirectSolver::solve_factored`].
    pub fn is_factored(&self) -> bool {
        self.factored.is_some()
    }

    /// Solve with the last factored matrix `A` to `||A x - b|| <= tol ||b||`,
    /// with iterative refinement.
    pub fn solve_factored(&self, b: &[f64], tol: f64) -> Result<Vec<f64>, SparseError> {
        let a = self
            .factored
            .as_ref()
            .ok_or_else(|| SparseError::Factorization("no factorization available".into()))?;
        let n = a.n_rows;
        if b.len() != n {
            return Err(SparseError::Dimension(format!("rhs has length {}, expected {n}", b.len())));
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let factors = self.factors.as_ref().unwrap();
        let mut x = b.to_vec();
        factors.solve_in_place(a, &mut x)?;
        let target = tol * bnorm;
        let mut best = f64::INFINITY;
        for _ in 0..=MAX_REFINEMENTS {
            let mut r = b.to_vec();
            a.matvec_add(-1.0, &x, &mut r);
            let rn = norm2(&r);
            if !rn.is_finite() {
                return Err(SparseError::Factorization("non-finite solution".into()));
            }
            if rn <= target {
                return Ok(x);
            }
            if rn >= best {
                break;
            }
            best = rn;
            factors.solve_in_place(a, &mut r)?;
            x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
        }
        Err(SparseError::Residual { achieved: best / bnorm, target: tol })
    }

    /// Solve `A x = b` by GMRES preconditioned with the last factorization,
    /// which may belong to a different matrix on the same pattern. Returns
    /// `None` when `max_iter` iterations do not reach `||A x - b|| <= tol ||b||`.
    pub fn solve_preconditioned(&self, a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Option<Vec<f64>>, SparseError> {
        let (Some(factored), Some(factors)) = (&self.factored, &self.factors) else {
            return Ok(None);
        };
        if !factored.same_pattern(a) {
            return Ok(None);
        }
        gmres(a, b, |v| factors.solve_in_place(factored, v), tol, max_iter)
    }

    /// Factor `a` and solve `A x = b` to `||A x - b|| <= tol ||b||`.
    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>, SparseError> {
        if b.len() != a.n_rows {
            return Err(SparseError::Dimension(format!("rhs has length {}, expected {}", b.len(), a.n_rows)));
        }
        if a.n_cols == a.n_rows && norm2(b) == 0.0 {
            return Ok(vec![0.0; a.n_rows]);
        }
        self.factor(a)?;
        self.solve_factored(b, tol)
    }
}

/// Right-preconditioned GMRES from a zero initial guess without restarts.
/// `precond` overwrites its argument with `M^{-1} v`. Returns `None` when
/// `max_iter` iterations do not reach `||A x - b|| <= tol ||b||`.
pub fn gmres<P>(a: &CsrMatrix, b: &[f64], mut precond: P, tol: f64, max_iter: usize) -> Result<Option<Vec<f64>>, SparseError>
where
    P: FnMut(&mut [f64]) -> Result<(), SparseError>,
{
    let n = a.n_rows;
    if a.n_cols != n || b.len() != n {
        return Err(SparseError::Dimension(format!("GMRES on a {}x{} matrix with rhs {}", n, a.n_cols, b.len())));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(Some(vec![0.0; n]));
    }
    let target = tol * bnorm;
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / bnorm).collect()];
    let mut precond_basis: Vec<Vec<f64>> = Vec::new();
    // Hessenberg columns after Givens rotations, rotations and rotated rhs
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![bnorm];
    for k in 0..max_iter {
        let mut z = basis[k].clone();
        precond(&mut z)?;
        let mut w = a.matvec(&z);
        precond_basis.push(z);
        let mut col = Vec::with_capacity(k + 2);
        for v in &basis {
            let hij: f64 = w.iter().zip(v).map(|(p, q)| p * q).sum();
            w.iter_mut().zip(v).for_each(|(p, q)| *p -= hij * q);
            col.push(hij);
        }
        let wn = norm2(&w);
        col.push(wn);
        for (i, &(c, s)) in rot.iter().enumerate() {
            let (x, y) = (col[i], col[i + 1]);
            col[i] = c * x + s * y;
            col[i + 1] = -s * x + c * y;
        }
        let r = col[k].hypot(col[k + 1]);
        if r == 0.0 || !r.is_finite() {
            return Ok(None);
        }
        let (c, s) = (col[k] / r, col[k + 1] / r);
        col[k] = r;
        col[k + 1] = 0.0;
        rot.push((c, s));
        g.push(-s * g[k]);
        g[k] *= c;
        h.push(col);
        let converged = g[k + 1].abs() <= target;
        if converged || k + 1 == max_iter || wn == 0.0 {
            // back substitution for the Krylov coefficients
            let m = k + 1;
            let mut y = vec![0.0; m];
            for i in (0..m).rev() {
                let mut acc = g[i];
                for j in i + 1..m {
                    acc -= h[j][i] * y[j];
                }
                y[i] = acc / h[i][i];
            }
            let mut x = vec![0.0; n];
            for (yj, zj) in y.iter().zip(&precond_basis) {
                x.iter_mut().zip(zj).for_each(|(p, q)| *p += yj * q);
            }
            let mut res = b.to_vec();
            a.matvec_add(-1.0, &x, &mut res);
            let rn = norm2(&res);
            if !rn.is_finite() {
                return Ok(None);
            }
            if rn <= target {
                return Ok(Some(x));
            }
            if wn == 0.0 || k + 1 == max_iter {
                return Ok(None);
            }
        }
        basis.push(w.iter().map(|v| v / wn).collect());
    }
    Ok(None)
}

/// One-shot solve of `A x = b` to relative residual `tol`.
pub fn solve_linear(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>, SparseError> {
    DirectSolver::new().solve(a, b, tol)
}
