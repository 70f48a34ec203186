//! Compressed sparse row matrices, a sparse LU backed by faer, and a 1-norm
//! condition estimate.

use std::io::{self, Write};

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut};
use thiserror::Error;

/// Stored entries with magnitude below this are dropped on finalisation.
pub const DROP_TOL: f64 = 1e-300;

/// A factorisation is flagged near-singular when `max|A| * ||A^-1||_1`
/// exceeds this, standing in for a pivot below `1e-14 max|A|`.
pub const SINGULAR_RATIO: f64 = 1e14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is numerically singular: {0}")]
    Singular(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Unordered triplet accumulator; duplicates are summed on [`CooBuilder::build`].
#[derive(Clone, Debug)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> CooBuilder {
        CooBuilder { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> CooBuilder {
        CooBuilder { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn build(self) -> CsrMatrix {
        let CooBuilder { nrows, ncols, entries } = self;
        // bucket by row, then sort and merge each row
        let mut counts = vec![0usize; nrows + 1];
        for &(i, _, _) in &entries {
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut slots = vec![(0usize, 0.0f64); entries.len()];
        for (i, j, v) in entries {
            slots[next[i]] = (j, v);
            next[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(slots.len());
        let mut values = Vec::with_capacity(slots.len());
        indptr.push(0);
        for i in 0..nrows {
            let row = &mut slots[counts[i]..counts[i + 1]];
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                if v.abs() >= DROP_TOL {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows, ncols, indptr, indices, values }
    }
}

impl CsrMatrix {
    /// Builds from raw parts. Column indices must be strictly increasing
    /// within each row.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<CsrMatrix, SparseError> {
        if indptr.len() != nrows + 1 || indices.len() != values.len() || indptr[nrows] != indices.len() {
            return Err(SparseError::DimensionMismatch("inconsistent CSR arrays".into()));
        }
        for i in 0..nrows {
            let row = &indices[indptr[i]..indptr[i + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.last().is_some_and(|&j| j >= ncols) {
                return Err(SparseError::DimensionMismatch(format!("row {i} indices not sorted or out of range")));
            }
        }
        Ok(CsrMatrix { nrows, ncols, indptr, indices, values })
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<CsrMatrix, SparseError> {
        let mut b = CooBuilder::with_capacity(nrows, ncols, triplets.len());
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(SparseError::DimensionMismatch(format!("entry ({i}, {j}) outside {nrows}x{ncols}")));
            }
            b.push(i, j, v);
        }
        Ok(b.build())
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> CsrMatrix {
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut b = CooBuilder::new(rows.len(), ncols);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                b.push(i, j, v);
            }
        }
        b.build()
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// Position of `(i, j)` in the value array, if stored.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.indptr[i];
        self.indices[start..self.indptr[i + 1]].binary_search(&j).ok().map(|k| start + k)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "transpose_matvec dimension");
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = CooBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                b.push(j, i, a);
            }
        }
        b.build()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.ncols];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            col[j] += v.abs();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Drops stored entries below [`DROP_TOL`] in magnitude.
    pub fn pruned(self) -> CsrMatrix {
        if self.values.iter().all(|v| v.abs() >= DROP_TOL) {
            return self;
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        indptr.push(0);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if a.abs() >= DROP_TOL {
                    indices.push(j);
                    values.push(a);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs();
        (0..self.nrows).all(|i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).all(|(&j, &a)| (a - self.get(j, i)).abs() <= rel_tol * scale)
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }

    /// Coordinate text dump, one `i j value` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                writeln!(w, "{i} {j} {a:.16e}")?;
            }
        }
        Ok(())
    }
}

/// What [`lu_factor_with`] does when the matrix looks numerically singular.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotPolicy {
    Strict,
    /// Keep the factorisation and set [`LuFactor::near_singular`].
    Report,
}

pub struct LuFactor {
    a: CsrMatrix,
    // faer factorises the CSC view of our CSR arrays, which is Aᵀ
    lu: Lu<usize, f64>,
    norm1: f64,
    inv_norm1: f64,
    near_singular: bool,
}

impl std::fmt::Debug for LuFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactor")
            .field("n", &self.a.nrows)
            .field("norm1", &self.norm1)
            .field("inv_norm1", &self.inv_norm1)
            .field("near_singular", &self.near_singular)
            .finish()
    }
}

pub fn lu_factor(a: CsrMatrix) -> Result<LuFactor, SparseError> {
    lu_factor_with(a, PivotPolicy::Strict)
}

pub fn lu_factor_with(a: CsrMatrix, policy: PivotPolicy) -> Result<LuFactor, SparseError> {
    let n = a.nrows;
    if n != a.ncols {
        return Err(SparseError::DimensionMismatch(format!("LU of a {}x{} matrix", a.nrows, a.ncols)));
    }
    let lu = {
        let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &a.indptr, None, &a.indices);
        let at = SparseColMatRef::new(symbolic, &a.values);
        let sym = SymbolicLu::try_new(symbolic).map_err(|e| SparseError::Singular(format!("symbolic analysis: {e:?}")))?;
        Lu::try_new_with_symbolic(sym, at).map_err(|e| SparseError::Singular(format!("{e:?}")))?
    };
    let (norm1, max_abs) = (a.norm1(), a.max_abs());
    let mut f = LuFactor { a, lu, norm1, inv_norm1: f64::NAN, near_singular: false };
    let inv = if n == 0 { 0.0 } else { f.estimate_inverse_norm1() };
    f.inv_norm1 = inv;
    f.near_singular = !inv.is_finite() || max_abs * inv > SINGULAR_RATIO || (n > 0 && max_abs == 0.0);
    if f.near_singular && policy == PivotPolicy::Strict {
        return Err(SparseError::Singular(format!("max|A| * ||A^-1||_1 ~ {:.3e}", max_abs * inv)));
    }
    Ok(f)
}

impl LuFactor {
    pub fn dim(&self) -> usize {
        self.a.nrows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn near_singular(&self) -> bool {
        self.near_singular
    }

    /// `x <- A^-1 x`, no refinement.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        self.lu.solve_transpose_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(x, n, 1));
    }

    /// `x <- A^-T x`, no refinement.
    pub fn solve_transpose_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        self.lu.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(x, n, 1));
    }

    /// Solves `A x = b` with one step of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        if b.len() != self.dim() {
            return Err(SparseError::DimensionMismatch(format!("rhs length {} vs {}", b.len(), self.dim())));
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        let ax = self.a.matvec(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        self.solve_in_place(&mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SparseError::Singular("non-finite solution".into()));
        }
        Ok(x)
    }

    /// Lower-bound estimate of `||A^-1||_1`.
    fn estimate_inverse_norm1(&self) -> f64 {
        inverse_norm1_estimate(self.dim(), |x| self.solve_in_place(x), |x| self.solve_transpose_in_place(x))
    }

    /// Estimated `||A||_1 ||A^-1||_1`; `||A||_1` is exact.
    pub fn cond1_estimate(&self) -> f64 {
        self.norm1 * self.inv_norm1
    }
}

pub fn solve(factor: &LuFactor, b: &[f64]) -> Result<Vec<f64>, SparseError> {
    factor.solve(b)
}

pub fn cond1_estimate(factor: &LuFactor) -> f64 {
    factor.cond1_estimate()
}

const HAGER_MAX_ITER: usize = 5;

/// Hager's 1-norm power iteration (Higham's refinement) for `||A^-1||_1`,
/// given solves with `A` and `Aᵀ`. Starts from the uniform vector and then
/// takes the alternating-sign probe as a second candidate.
pub fn inverse_norm1_estimate(n: usize, solve: impl Fn(&mut [f64]), solve_t: impl Fn(&mut [f64])) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let norm1 = |v: &[f64]| v.iter().map(|a| a.abs()).sum::<f64>();
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    let mut last_j = usize::MAX;
    for iter in 0..HAGER_MAX_ITER {
        let mut y = x.clone();
        solve(&mut y);
        let ny = norm1(&y);
        if !ny.is_finite() {
            return f64::INFINITY;
        }
        if iter > 0 && ny <= est {
            break;
        }
        est = ny;
        let mut z: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        solve_t(&mut z);
        let (j, zmax) = z.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bj, bv), (j, &v)| {
            if v.abs() > bv {
                (j, v.abs())
            } else {
                (bj, bv)
            }
        });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x.iter_mut().for_each(|v| *v = 0.0);
        x[j] = 1.0;
    }
    let denom = (n.max(2) - 1) as f64;
    let mut alt: Vec<f64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / denom)
        })
        .collect();
    let nalt = norm1(&alt);
    solve(&mut alt);
    let cand = norm1(&alt) / nalt;
    if cand.is_finite() { est.max(cand) } else { f64::INFINITY }
}
