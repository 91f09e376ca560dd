//! Sparse and dense direct factorizations.
//!
//! The sparse LU is backed by `faer` (COLAMD ordering, partial pivoting);
//! the symbolic analysis can be reused across matrices sharing a pattern,
//! which is what the nonlinear flow iteration does.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Conj, Mat, MatMut, Par};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

struct CscParts {
    symbolic: SymbolicSparseColMat<usize>,
    values: Vec<f64>,
}

fn to_csc(a: &CsrMatrix) -> CscParts {
    // CSC of A has the same arrays as CSR of Aᵀ.
    let t = a.transpose();
    let symbolic = SymbolicSparseColMat::new_checked(
        a.n_rows(),
        a.n_cols(),
        t.row_offsets().to_vec(),
        None,
        t.col_indices().to_vec(),
    );
    CscParts {
        symbolic,
        values: t.values().to_vec(),
    }
}

/// Reusable symbolic analysis of a sparsity pattern.
#[derive(Clone)]
pub struct LuAnalysis {
    symbolic: Arc<SymbolicLu<usize>>,
    n: usize,
    nnz: usize,
}

impl LuAnalysis {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::contract("LU requires a square matrix"));
        }
        let parts = to_csc(a);
        let symbolic = factorize_symbolic_lu(parts.symbolic.as_ref(), LuSymbolicParams::default())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            symbolic: Arc::new(symbolic),
            n: a.n_rows(),
            nnz: a.nnz(),
        })
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    symbolic: Arc<SymbolicLu<usize>>,
    numeric: NumericLu<usize, f64>,
    n: usize,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

fn stack_err(e: impl std::fmt::Debug) -> Error {
    Error::Factorization(format!("{e:?}"))
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let analysis = LuAnalysis::new(a)?;
        Self::with_analysis(&analysis, a)
    }

    /// Numeric factorization reusing an analysis of the same pattern.
    pub fn with_analysis(analysis: &LuAnalysis, a: &CsrMatrix) -> Result<Self> {
        if a.n_rows() != analysis.n || a.nnz() != analysis.nnz {
            return Err(Error::contract("matrix pattern differs from the analysed one"));
        }
        let parts = to_csc(a);
        let mat = SparseColMatRef::new(parts.symbolic.as_ref(), &parts.values);
        let sym = &analysis.symbolic;
        let mut numeric = NumericLu::new();
        let mut buf = MemBuffer::try_new(sym.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()))
            .map_err(stack_err)?;
        sym.factorize_numeric_lu(&mut numeric, mat, Par::Seq, MemStack::new(&mut buf), Default::default())
            .map_err(stack_err)?;
        Ok(Self {
            symbolic: sym.clone(),
            numeric,
            n: a.n_rows(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        self.run(x, false)
    }

    /// Solves `Aᵀ x = b` with the same factors.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_transpose_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_transpose_in_place(&self, x: &mut [f64]) -> Result<()> {
        self.run(x, true)
    }

    fn run(&self, x: &mut [f64], transpose: bool) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let mut buf = MemBuffer::try_new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq)).map_err(stack_err)?;
        let stack = MemStack::new(&mut buf);
        let lu = LuRef::new_unchecked(&self.symbolic, &self.numeric);
        let rhs = MatMut::from_column_major_slice_mut(x, self.n, 1);
        if transpose {
            lu.solve_transpose_in_place_with_conj(Conj::No, rhs, Par::Seq, stack);
        } else {
            lu.solve_in_place_with_conj(Conj::No, rhs, Par::Seq, stack);
        }
        finite(x)
    }
}

fn finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Factorization("matrix is numerically singular".into()))
    }
}

/// Dense LU with partial pivoting (used below the dense-fallback threshold).
pub struct DenseLu {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    n: usize,
}

impl DenseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::contract("LU requires a square matrix"));
        }
        let n = a.n_rows();
        let mut m = Mat::<f64>::zeros(n, n);
        for r in 0..n {
            for (c, v) in a.row(r) {
                m[(r, c)] = v;
            }
        }
        Ok(Self {
            lu: m.partial_piv_lu(),
            n,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let rhs = faer::MatRef::from_column_major_slice(b, self.n, 1);
        let x = self.lu.solve(rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        finite(&out)?;
        Ok(out)
    }
}

/// Gaussian elimination with partial pivoting on a small dense system.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::contract("solve_dense: matrix must be n x n"));
    }
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[p][k].abs() <= 1e-300_f64.max(scale * 1e-15) {
            return Err(Error::Factorization(format!("singular pivot at column {k}")));
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * b[j]).sum();
        b[k] = (b[k] - s) / a[k][k];
    }
    Ok(b)
}
