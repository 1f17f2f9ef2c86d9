use crate::error::{Error, Result};

use super::CsrMatrix;

/// Cholesky factor `A = L Lᵀ` stored by rows over the lower envelope (profile) of `A`.
///
/// Fill stays inside the envelope, so for banded orderings (structured grids in
/// row-major order, node-major coarse systems) storage and work scale with the bandwidth.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric positive definite matrix. Only the lower triangle is read.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid("Cholesky factorization needs a square matrix"));
        }
        let n = a.nrows();
        let mut first = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            let (cols, _) = a.row(i);
            let f = cols.first().copied().unwrap_or(i).min(i);
            first.push(f);
            offsets.push(offsets[i] + (i - f + 1));
        }
        let mut data = vec![0.0; offsets[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let base = offsets[i] - first[i];
            for (&c, &v) in cols.iter().zip(vals) {
                if c <= i {
                    data[base + c] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = offsets[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let row_j = offsets[j];
                let li = &data[row_i + (start - fi)..row_i + (j - fi)];
                let lj = &data[row_j + (start - fj)..row_j + (j - fj)];
                let dot: f64 = li.iter().zip(lj).map(|(x, y)| x * y).sum();
                let diag_j = data[row_j + (j - fj)];
                data[row_i + (j - fi)] = (data[row_i + (j - fi)] - dot) / diag_j;
            }
            let li = &data[row_i..row_i + (i - fi)];
            let sq: f64 = li.iter().map(|x| x * x).sum();
            let d = data[row_i + (i - fi)] - sq;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            data[row_i + (i - fi)] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            n,
            first,
            offsets,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&x[fi..i]).map(|(l, y)| l * y).sum();
            x[i] = (x[i] - dot) / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, l) in (fi..i).zip(&row[..i - fi]) {
                x[k] -= l * xi;
            }
        }
        Ok(())
    }
}
