use crate::error::{Error, Result};

use super::CsrMatrix;

/// Zero fill-in incomplete LU factorization on the pattern of `A`.
///
/// `L` (unit lower) and `U` share the storage of one CSR copy of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    factors: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid("ILU(0) needs a square matrix"));
        }
        let n = a.nrows();
        let mut lu = a.clone();
        let row_ptr = lu.row_ptr().to_vec();
        let col_idx = lu.col_idx().to_vec();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                if col_idx[k] == i {
                    diag_pos[i] = k;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::invalid(format!("ILU(0): row {i} has no diagonal entry")));
            }
        }
        // Position lookup for the current row.
        let mut pos = vec![usize::MAX; n];
        let vals = lu.values_mut();
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = k;
            }
            for kk in row_ptr[i]..row_ptr[i + 1] {
                let k = col_idx[kk];
                if k >= i {
                    break;
                }
                let pivot = vals[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(Error::NotPositiveDefinite { pivot: k, value: 0.0 });
                }
                let factor = vals[kk] / pivot;
                vals[kk] = factor;
                for jj in diag_pos[k] + 1..row_ptr[k + 1] {
                    let p = pos[col_idx[jj]];
                    if p != usize::MAX {
                        vals[p] -= factor * vals[jj];
                    }
                }
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = usize::MAX;
            }
            if vals[diag_pos[i]] == 0.0 {
                return Err(Error::NotPositiveDefinite { pivot: i, value: 0.0 });
            }
        }
        Ok(Ilu0 {
            factors: lu,
            diag_pos,
        })
    }

    /// Applies `(LU)⁻¹` in place.
    pub fn apply(&self, x: &mut [f64]) {
        let n = x.len();
        let rp = self.factors.row_ptr();
        let ci = self.factors.col_idx();
        let v = self.factors.values();
        for i in 0..n {
            let mut s = x[i];
            for k in rp[i]..self.diag_pos[i] {
                s -= v[k] * x[ci[k]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in self.diag_pos[i] + 1..rp[i + 1] {
                s -= v[k] * x[ci[k]];
            }
            x[i] = s / v[self.diag_pos[i]];
        }
    }
}
