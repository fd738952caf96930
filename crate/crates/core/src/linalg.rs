//! Dense kernels with pinned accumulation order.
//!
//! Every reduction in this module is a plain left-to-right sum. That is
//! slower than a blocked/SIMD matmul but it makes traces and golden files
//! reproducible down to the last bit across platforms, which the
//! convergence diagnostics rely on. Matrices are small here (hidden sizes
//! of tens to hundreds), so the trade is cheap.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{NcelmError, Result};

/// Plain left-to-right dot product.
pub fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// `a * b` (row-major triple loop, left-to-right accumulation).
pub fn mat_mul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let (k2, m) = b.dim();
    assert_eq!(k, k2, "mat_mul: inner dimensions differ");
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[[i, l]] * b[[l, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// `a^T * b`.
pub fn mat_t_mul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, d) = a.dim();
    let (n2, m) = b.dim();
    assert_eq!(n, n2, "mat_t_mul: row counts differ");
    let mut out = Array2::zeros((d, m));
    for i in 0..d {
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..n {
                acc += a[[l, i]] * b[[l, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// `a * v`.
pub fn mat_vec(a: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    let (n, k) = a.dim();
    assert_eq!(k, v.len(), "mat_vec: dimensions differ");
    let mut out = Array1::zeros(n);
    for i in 0..n {
        out[i] = dot(a.row(i), v.view());
    }
    out
}

/// `a^T * v`.
pub fn mat_t_vec(a: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    let (n, d) = a.dim();
    assert_eq!(n, v.len(), "mat_t_vec: dimensions differ");
    let mut out = Array1::zeros(d);
    for j in 0..d {
        let mut acc = 0.0;
        for i in 0..n {
            acc += a[[i, j]] * v[i];
        }
        out[j] = acc;
    }
    out
}

/// `a^T * a`, filled symmetrically from one triangle.
pub fn gram(a: &Array2<f64>) -> Array2<f64> {
    let (n, d) = a.dim();
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for l in 0..n {
                acc += a[[l, i]] * a[[l, j]];
            }
            out[[i, j]] = acc;
            out[[j, i]] = acc;
        }
    }
    out
}

/// Squared Frobenius norm, left-to-right.
pub fn frobenius_sq(a: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for x in a.iter() {
        acc += x * x;
    }
    acc
}

/// Sum of absolute entry differences.
pub fn l1_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "l1_diff: shapes differ");
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (x - y).abs();
    }
    acc
}

pub fn norm2(v: ArrayView1<'_, f64>) -> f64 {
    dot(v, v).sqrt()
}

/// Something that can apply the inverse of a symmetric positive definite
/// matrix to a vector.
pub trait SpdSolve {
    fn dim(&self) -> usize;
    fn solve_vec(&self, rhs: &Array1<f64>) -> Array1<f64>;

    /// Solve against every column of `rhs`.
    fn solve_mat(&self, rhs: &Array2<f64>) -> Array2<f64> {
        let (d, m) = rhs.dim();
        let mut out = Array2::zeros((d, m));
        for j in 0..m {
            let col = rhs.column(j).to_owned();
            let x = self.solve_vec(&col);
            out.column_mut(j).assign(&x);
        }
        out
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    /// Factor `a = L L^T`. Fails when a pivot is not strictly positive,
    /// which for a genuinely SPD input only happens through NaN/Inf
    /// contamination.
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let (n, m) = a.dim();
        assert_eq!(n, m, "cholesky: matrix must be square");
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let mut acc = a[[i, j]];
                for k in 0..j {
                    acc -= l[[i, k]] * l[[j, k]];
                }
                if i == j {
                    if acc <= 0.0 || !acc.is_finite() {
                        return Err(NcelmError::NumericalDegeneracy {
                            learner: 0,
                            iteration: 0,
                            lambda: 0.0,
                            c: 0.0,
                            detail: format!(
                                "Cholesky pivot {i} is {acc:e}; matrix is not positive definite"
                            ),
                        });
                    }
                    l[[i, j]] = acc.sqrt();
                } else {
                    l[[i, j]] = acc / l[[j, j]];
                }
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }
}

impl SpdSolve for Cholesky {
    fn dim(&self) -> usize {
        self.lower.nrows()
    }

    fn solve_vec(&self, rhs: &Array1<f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(rhs.len(), n, "cholesky solve: rhs length differs");
        let l = &self.lower;
        // forward: L y = rhs
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let mut acc = rhs[i];
            for k in 0..i {
                acc -= l[[i, k]] * y[k];
            }
            y[i] = acc / l[[i, i]];
        }
        // backward: L^T x = y
        let mut x = Array1::zeros(n);
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in (i + 1)..n {
                acc -= l[[k, i]] * x[k];
            }
            x[i] = acc / l[[i, i]];
        }
        x
    }
}

/// Solve handle for `A = base + coeff * g g^T` via Sherman-Morrison on a
/// cached factorization of `base`. Exact (up to roundoff) and reuses one
/// factorization for every rank-one shift.
///
/// When `coeff * g = 0` the correction is exactly zero, so solves agree
/// bit-for-bit with the unshifted system.
#[derive(Debug, Clone)]
pub struct RankOneShift<'a> {
    base: &'a Cholesky,
    gain: Array1<f64>,
    g: Array1<f64>,
    coeff: f64,
    denom: f64,
}

impl<'a> RankOneShift<'a> {
    pub fn new(base: &'a Cholesky, g: Array1<f64>, coeff: f64) -> Self {
        let gain = base.solve_vec(&g);
        let denom = 1.0 + coeff * dot(g.view(), gain.view());
        Self {
            base,
            gain,
            g,
            coeff,
            denom,
        }
    }
}

impl SpdSolve for RankOneShift<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn solve_vec(&self, rhs: &Array1<f64>) -> Array1<f64> {
        let mut x = self.base.solve_vec(rhs);
        let scale = self.coeff * dot(self.g.view(), x.view()) / self.denom;
        for (xi, ui) in x.iter_mut().zip(self.gain.iter()) {
            *xi -= scale * ui;
        }
        x
    }
}
