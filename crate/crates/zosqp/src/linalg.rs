//! Dense linear algebra kernel.
//!
//! Small row-major matrices, slice-based vector helpers, Householder thin QR,
//! and the equality-constrained proximal solve that both the subspace sampler
//! and the QP solver are built on. Dimensions here are tiny (subspace size d
//! and constraint counts), so simple O(n^3) dense routines are the right tool.

use thiserror::Error;

/// Column-norm threshold below which QR declares rank deficiency.
pub const QR_RANK_TOL: f64 = 1e-12;
/// Pivot threshold below which the saddle-point solve declares singularity.
pub const SADDLE_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("rank deficient: column {col} has norm {norm:.3e} after orthogonalization")]
    RankDeficient { col: usize, norm: f64 },
    #[error("singular constraint system: pivot {index} has magnitude {value:.3e}")]
    SingularSystem { index: usize, value: f64 },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
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
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Stack the rows of `self` on top of the rows of `other`.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "column mismatch in vstack");
        let mut m = Matrix::zeros(self.rows + other.rows, self.cols);
        m.data[..self.data.len()].copy_from_slice(&self.data);
        m.data[self.data.len()..].copy_from_slice(&other.data);
        m
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "dimension mismatch in matvec");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// y = A^T x
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "dimension mismatch in tr_matvec");
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            axpy(x[i], self.row(i), &mut y);
        }
        y
    }

    /// C = A B
    pub fn matmul(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.rows, "dimension mismatch in matmul");
        let mut c = Matrix::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..b.cols {
                    c.data[i * b.cols + j] += aik * b.get(k, j);
                }
            }
        }
        c
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }
}

/// <x, y>
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// ||x||_2
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// ||x||_inf (0 for the empty vector)
pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// ||x||_1
pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// y += a x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// x - y
pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// x + y
pub fn add(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

/// a x
pub fn scale(a: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

/// Thin QR factorization of an n x d matrix (n >= d) by Householder
/// reflections: G = Q R with Q n x d orthonormal and R d x d upper triangular
/// with nonnegative diagonal. Fails with `RankDeficient` when the remaining
/// column norm at some step falls to `QR_RANK_TOL` or below.
pub fn thin_qr(g: &Matrix) -> Result<(Matrix, Matrix), LinalgError> {
    let (n, d) = (g.rows(), g.cols());
    assert!(n >= d, "thin QR requires at least as many rows as columns");

    let mut a = g.clone();
    // Householder vectors, one per column; v[j] has length n - j.
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(d);

    for j in 0..d {
        let mut v: Vec<f64> = (j..n).map(|i| a.get(i, j)).collect();
        let sigma = norm2(&v);
        if sigma <= QR_RANK_TOL {
            return Err(LinalgError::RankDeficient { col: j, norm: sigma });
        }
        // Reflect onto -sign(v0) * sigma * e1 for stability; signs are fixed
        // after the factorization so the R diagonal comes out nonnegative.
        let alpha = if v[0] >= 0.0 { -sigma } else { sigma };
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 > 0.0 {
            let beta = 2.0 / vnorm2;
            // Apply H = I - beta v v^T to the trailing submatrix.
            for col in j..d {
                let s: f64 = (j..n).map(|i| v[i - j] * a.get(i, col)).sum();
                let bs = beta * s;
                for i in j..n {
                    let val = a.get(i, col) - bs * v[i - j];
                    a.set(i, col, val);
                }
            }
        }
        a.set(j, j, alpha);
        for i in j + 1..n {
            a.set(i, j, 0.0);
        }
        vs.push(v);
    }

    let mut r = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            r.set(i, j, a.get(i, j));
        }
    }

    // Accumulate Q by applying the reflections in reverse to the first d
    // columns of the identity.
    let mut q = Matrix::zeros(n, d);
    for j in 0..d {
        q.set(j, j, 1.0);
    }
    for j in (0..d).rev() {
        let v = &vs[j];
        let vnorm2 = dot(v, v);
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        for col in 0..d {
            let s: f64 = (j..n).map(|i| v[i - j] * q.get(i, col)).sum();
            let bs = beta * s;
            for i in j..n {
                let val = q.get(i, col) - bs * v[i - j];
                q.set(i, col, val);
            }
        }
    }

    // Sign convention: nonnegative R diagonal.
    for j in 0..d {
        if r.get(j, j) < 0.0 {
            for col in j..d {
                let val = -r.get(j, col);
                r.set(j, col, val);
            }
            for i in 0..n {
                let val = -q.get(i, j);
                q.set(i, j, val);
            }
        }
    }

    Ok((q, r))
}

/// Solve the strictly convex equality-constrained proximal problem
///
///   minimize  <c, a> + (l/2) ||a||^2   subject to  E a = b,
///
/// returning the minimizer together with the equality multipliers y of the
/// stationarity condition c + l a + E^T y = 0. E is k x d with k <= d and must
/// have full row rank; rank is checked through QR of E^T with pivot threshold
/// `SADDLE_RANK_TOL`.
pub fn solve_saddle(
    l: f64,
    e: &Matrix,
    c: &[f64],
    b: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let (k, d) = (e.rows(), e.cols());
    assert!(l > 0.0, "proximal weight must be positive");
    assert!(k <= d, "more equality rows than variables");
    assert_eq!(c.len(), d);
    assert_eq!(b.len(), k);

    if k == 0 {
        return Ok((scale(-1.0 / l, c), Vec::new()));
    }

    // E^T = Q1 R1; split a into its row-space and null-space components.
    let (q1, r1) = match thin_qr(&e.transpose()) {
        Ok(qr) => qr,
        Err(LinalgError::RankDeficient { col, norm }) => {
            return Err(LinalgError::SingularSystem { index: col, value: norm })
        }
        Err(other) => return Err(other),
    };
    for i in 0..k {
        let piv = r1.get(i, i);
        if piv.abs() <= SADDLE_RANK_TOL {
            return Err(LinalgError::SingularSystem { index: i, value: piv.abs() });
        }
    }

    // Row-space part: E a = b  <=>  R1^T (Q1^T a) = b.
    let w = solve_lower_tr(&r1, b); // R1^T w = b with R1^T lower triangular
    // Null-space part: stationarity gives a_null = -(I - Q1 Q1^T) c / l.
    let qtc = q1.tr_matvec(c);
    let proj = q1.matvec(&qtc);
    let q1w = q1.matvec(&w);
    let a: Vec<f64> = (0..d).map(|i| q1w[i] - (c[i] - proj[i]) / l).collect();
    // Multipliers: R1 y = -Q1^T c - l w.
    let rhs: Vec<f64> = (0..k).map(|i| -qtc[i] - l * w[i]).collect();
    let y = solve_upper_tr(&r1, &rhs);

    Ok((a, y))
}

/// Solve R^T w = b where R is upper triangular (forward substitution).
fn solve_lower_tr(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let k = r.rows();
    let mut w = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for j in 0..i {
            s -= r.get(j, i) * w[j];
        }
        w[i] = s / r.get(i, i);
    }
    w
}

/// Solve R y = b where R is upper triangular (back substitution).
fn solve_upper_tr(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let k = r.rows();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= r.get(i, j) * y[j];
        }
        y[i] = s / r.get(i, i);
    }
    y
}
