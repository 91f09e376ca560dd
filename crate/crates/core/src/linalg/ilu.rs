//! ILU(0) preconditioner on the matrix's own sparsity pattern.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Ilu0 {
    factors: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::contract("ILU(0) requires a square matrix"));
        }
        let n = a.n_rows();
        let offsets = a.row_offsets().to_vec();
        let cols = a.col_indices().to_vec();
        let mut vals = a.values().to_vec();
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            for k in offsets[r]..offsets[r + 1] {
                if cols[k] == r {
                    diag[r] = k;
                }
            }
            if diag[r] == usize::MAX {
                return Err(Error::Factorization(format!("ILU(0): row {r} has no diagonal entry")));
            }
        }
        // IKJ variant restricted to the pattern.
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in offsets[i]..offsets[i + 1] {
                pos[cols[k]] = k;
            }
            for kk in offsets[i]..offsets[i + 1] {
                let k = cols[kk];
                if k >= i {
                    break;
                }
                let pivot = vals[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::Factorization(format!("ILU(0): zero pivot in row {k}")));
                }
                let lik = vals[kk] / pivot;
                vals[kk] = lik;
                for jj in diag[k] + 1..offsets[k + 1] {
                    let j = cols[jj];
                    let p = pos[j];
                    if p != usize::MAX {
                        vals[p] -= lik * vals[jj];
                    }
                }
            }
            for k in offsets[i]..offsets[i + 1] {
                pos[cols[k]] = usize::MAX;
            }
            if vals[diag[i]] == 0.0 {
                return Err(Error::Factorization(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        let factors = CsrMatrix::new(n, n, offsets, cols, vals)?;
        Ok(Self { factors, diag })
    }

    /// `z = (LU)⁻¹ r`
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let f = &self.factors;
        let (off, cols, vals) = (f.row_offsets(), f.col_indices(), f.values());
        let n = r.len();
        for i in 0..n {
            let mut s = r[i];
            for k in off[i]..self.diag[i] {
                s -= vals[k] * z[cols[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..off[i + 1] {
                s -= vals[k] * z[cols[k]];
            }
            z[i] = s / vals[self.diag[i]];
        }
    }

    /// `z = (LU)⁻ᵀ r = L⁻ᵀ U⁻ᵀ r`
    pub fn apply_transpose(&self, r: &[f64], z: &mut [f64]) {
        let f = &self.factors;
        let (off, cols, vals) = (f.row_offsets(), f.col_indices(), f.values());
        let n = r.len();
        z.copy_from_slice(r);
        // Uᵀ is lower triangular: forward substitution by columns of U.
        for i in 0..n {
            z[i] /= vals[self.diag[i]];
            let zi = z[i];
            for k in self.diag[i] + 1..off[i + 1] {
                z[cols[k]] -= vals[k] * zi;
            }
        }
        // Lᵀ is unit upper triangular.
        for i in (0..n).rev() {
            let zi = z[i];
            for k in off[i]..self.diag[i] {
                z[cols[k]] -= vals[k] * zi;
            }
        }
    }
}
