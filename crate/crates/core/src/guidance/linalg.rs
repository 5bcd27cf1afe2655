//! Sparse equality constraints and the banded Cholesky factor used to project
//! onto them.

/// Sparse row-major matrix with a right-hand side: `A x = b`.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub cols: usize,
}

impl SparseRows {
    pub fn new(cols: usize) -> Self {
        SparseRows {
            rows: Vec::new(),
            rhs: Vec::new(),
            cols,
        }
    }

    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// `A x - b`
    pub fn residual(&self, x: &[f64], out: &mut [f64]) {
        for ((row, b), o) in self.rows.iter().zip(&self.rhs).zip(out.iter_mut()) {
            *o = row.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - b;
        }
    }

    /// `out -= A^T y`
    pub fn sub_transpose(&self, y: &[f64], out: &mut [f64]) {
        for (row, &yi) in self.rows.iter().zip(y) {
            for &(j, a) in row {
                out[j] -= a * yi;
            }
        }
    }

    /// Half-bandwidth of `A A^T` for the current row order.
    pub fn gram_bandwidth(&self) -> usize {
        let mut first = vec![usize::MAX; self.cols];
        let mut last = vec![0usize; self.cols];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                first[j] = first[j].min(i);
                last[j] = last[j].max(i);
            }
        }
        first
            .iter()
            .zip(&last)
            .filter(|(f, _)| **f != usize::MAX)
            .map(|(f, l)| l - f)
            .max()
            .unwrap_or(0)
    }

    pub fn row_dot(&self, a: usize, b: usize) -> f64 {
        // Rows are short (at most 5 entries), a quadratic merge is fine.
        let mut s = 0.0;
        for &(ja, va) in &self.rows[a] {
            for &(jb, vb) in &self.rows[b] {
                if ja == jb {
                    s += va * vb;
                }
            }
        }
        s
    }
}

/// Lower-triangular banded Cholesky factor of a symmetric positive definite
/// matrix.
#[derive(Debug, Clone)]
pub(crate) struct BandedCholesky {
    n: usize,
    bw: usize,
    // Row i holds L[i][i-bw ..= i]; entries left of column 0 stay zero.
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

impl BandedCholesky {
    /// Factors `A A^T`.
    pub fn gram(a: &SparseRows) -> Result<Self, NotPositiveDefinite> {
        let bw = a.gram_bandwidth();
        let n = a.len();
        Self::factor(n, bw, |i, j| a.row_dot(i, j))
    }

    /// Factors the symmetric matrix whose lower band is given by `entry(i, j)`
    /// for `i - bw <= j <= i`.
    pub fn factor(
        n: usize,
        bw: usize,
        entry: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, NotPositiveDefinite> {
        let w = bw + 1;
        let mut l = BandedCholesky {
            n,
            bw,
            data: vec![0.0; n * w],
        };
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let kstart = lo.max(j.saturating_sub(bw));
                let mut s = entry(i, j);
                for k in kstart..j {
                    s -= l.at(i, k) * l.at(j, k);
                }
                if i == j {
                    if s.is_nan() || s <= 0.0 {
                        return Err(NotPositiveDefinite { row: i, pivot: s });
                    }
                    *l.at_mut(i, i) = s.sqrt();
                } else {
                    *l.at_mut(i, j) = s / l.at(j, j);
                }
            }
        }
        Ok(l)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    /// Solves `L L^T x = b` in place.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.at(k, i) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }
}
