//! Minimal dense linear algebra: row-major `f64` matrices, a numerically
//! stable softmax, a Jacobi eigensolver for symmetric matrices, and PCA.
//!
//! Everything is 64-bit; gradient checks elsewhere in the crate rely on the
//! precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a flat row-major buffer. Errors if the length disagrees.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix buffer has {} entries, expected {}x{}={}",
                data.len(),
                rows,
                cols,
                rows * cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from nested rows. Errors on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// `out += self * x`.
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *o += acc;
        }
    }

    /// `out += self^T * x`.
    pub fn tr_matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &xr) in x.iter().enumerate() {
            let row = self.row(r);
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * xr;
            }
        }
    }

    /// Rank-1 update `self += scale * x * y^T`.
    pub fn add_outer(&mut self, x: &[f64], y: &[f64], scale: f64) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (r, &xr) in x.iter().enumerate() {
            let row = self.row_mut(r);
            for (o, &yc) in row.iter_mut().zip(y) {
                *o += scale * xr * yc;
            }
        }
    }

    /// Plain matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Column means.
    pub fn col_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        for m in &mut means {
            *m /= n;
        }
        means
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Scale every entry in place.
    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

/// Dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += s * x`.
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Numerically stable softmax over one logit vector (log-sum-exp trick).
///
/// Output entries are in (0, 1] and sum to 1; adding a constant to every
/// logit does not change the result.
pub fn softmax_row(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of empty logit vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("softmax input contains non-finite values".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Result of a principal component analysis.
///
/// `components` has the principal directions as columns, ordered by
/// decreasing variance; `scores` are the centered data projected onto them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcaResult {
    pub mean: Vec<f64>,
    pub components: Matrix,
    pub variances: Vec<f64>,
    pub scores: Matrix,
}

impl PcaResult {
    /// Apply the frozen transform to new rows (center, then project).
    pub fn transform(&self, data: &Matrix) -> Result<Matrix> {
        let k = self.mean.len();
        if data.cols() != k {
            return Err(Error::InvalidInput(format!(
                "transform expects {k} columns, got {}",
                data.cols()
            )));
        }
        let mut centered = data.clone();
        for r in 0..centered.rows() {
            let row = centered.row_mut(r);
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        Ok(centered.matmul(&self.components))
    }
}

/// PCA of an n-by-k data matrix via eigendecomposition of the sample
/// covariance (divisor n-1) of the mean-centered, unscaled data.
///
/// Sign convention: the largest-magnitude entry of each component is
/// positive, ties broken toward the lowest row index.
pub fn pca(data: &Matrix) -> Result<PcaResult> {
    let n = data.rows();
    let k = data.cols();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "pca needs at least 2 rows, got {n}"
        )));
    }
    if k < 1 {
        return Err(Error::InvalidInput("pca needs at least 1 column".into()));
    }
    if !data.is_finite() {
        return Err(Error::InvalidInput("pca input contains non-finite values".into()));
    }

    let mean = data.col_means();
    let mut centered = data.clone();
    for r in 0..n {
        let row = centered.row_mut(r);
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    // Sample covariance C = B^T B / (n - 1).
    let mut cov = Matrix::zeros(k, k);
    for r in 0..n {
        let row = centered.row(r);
        cov.add_outer(row, row, 1.0);
    }
    cov.scale(1.0 / (n as f64 - 1.0));

    let (mut values, vectors) = symmetric_eigen(&cov);

    // Sort by decreasing eigenvalue, stable in the original index for ties.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));

    let mut components = Matrix::zeros(k, k);
    for (new_c, &old_c) in order.iter().enumerate() {
        // Fix the sign so the largest-magnitude entry is positive.
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..k {
            let a = vectors.get(r, old_c).abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        let flip = if vectors.get(best, old_c) < 0.0 { -1.0 } else { 1.0 };
        for r in 0..k {
            components.set(r, new_c, flip * vectors.get(r, old_c));
        }
    }

    let mut variances: Vec<f64> = order.iter().map(|&c| values[c].max(0.0)).collect();
    // Tiny negative eigenvalues are roundoff on a PSD matrix; already clamped.
    values.clear();

    for v in &mut variances {
        if !v.is_finite() {
            return Err(Error::InvalidInput("pca produced a non-finite variance".into()));
        }
    }

    let scores = centered.matmul(&components);
    Ok(PcaResult {
        mean,
        components,
        variances,
        scores,
    })
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns,
/// unordered. Intended for the small (k <= ~50) symmetric matrices this
/// crate produces.
pub fn symmetric_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    assert_eq!(m.rows(), m.cols(), "symmetric_eigen needs a square matrix");
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    if n == 1 {
        return (vec![a.get(0, 0)], v);
    }

    let scale = 1.0 + a.frobenius_norm();
    let tol = 1e-15 * scale;
    let max_sweeps = 100;

    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q).powi(2);
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q of A.
                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for i in 0..n {
                    let api = a.get(p, i);
                    let aqi = a.get(q, i);
                    a.set(p, i, c * api - s * aqi);
                    a.set(q, i, s * api + c * aqi);
                }
                // Accumulate the rotation into V.
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let values = (0..n).map(|i| a.get(i, i)).collect();
    (values, v)
}

/// Pearson correlation of two equal-length samples.
///
/// Errors if either sample is constant (the correlation is undefined).
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput("pearson needs two equal-length non-empty samples".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("a sample is constant".into()));
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}
