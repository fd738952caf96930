//! Shared test oracles, deliberately independent of the library's solve
//! paths: dense LU with partial pivoting, a Jacobi eigensolver for
//! symmetric matrices, finite differences, and synthetic dataset
//! generators.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use ncelm_core::dataio::Dataset;
use ncelm_core::rng::SplitMix64;

pub fn random_matrix(rng: &mut SplitMix64, n: usize, m: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, m));
    for v in out.iter_mut() {
        *v = rng.next_symmetric();
    }
    out
}

pub fn random_vector(rng: &mut SplitMix64, n: usize) -> Array1<f64> {
    let mut out = Array1::zeros(n);
    for v in out.iter_mut() {
        *v = rng.next_symmetric();
    }
    out
}

/// Random two-blob classification data: class 0 centered at -mu, class 1
/// at +mu (and further classes at shifted centers), so the task is
/// learnable and ensemble outputs are non-degenerate.
pub fn synthetic_dataset(seed: u64, n: usize, k: usize, n_classes: usize) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let mut features = Array2::zeros((n, k));
    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let cls = row % n_classes;
        let center = (cls as f64 - (n_classes - 1) as f64 / 2.0) * 1.5;
        for col in 0..k {
            features[[row, col]] = center + rng.next_symmetric() * 2.0;
        }
        labels.push(format!("c{cls}"));
    }
    Dataset::from_labels(features, &labels, format!("synthetic-{seed}")).unwrap()
}

/// Like `synthetic_dataset` but with explicit per-class counts.
pub fn synthetic_dataset_with_counts(seed: u64, counts: &[usize], k: usize) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let n: usize = counts.iter().sum();
    let n_classes = counts.len();
    let mut features = Array2::zeros((n, k));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (cls, &count) in counts.iter().enumerate() {
        let center = (cls as f64 - (n_classes - 1) as f64 / 2.0) * 1.5;
        for _ in 0..count {
            for col in 0..k {
                features[[row, col]] = center + rng.next_symmetric() * 2.0;
            }
            labels.push(format!("c{cls}"));
            row += 1;
        }
    }
    Dataset::from_labels(features, &labels, format!("synthetic-{seed}")).unwrap()
}

/// Dense LU factorization with partial pivoting; the oracle-side linear
/// solver (independent of the library's Cholesky path).
pub struct DenseLu {
    lu: Array2<f64>,
    pivots: Vec<usize>,
}

impl DenseLu {
    pub fn factor(a: &Array2<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut lu = a.clone();
        let mut pivots: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut max_row = col;
            let mut max_val = lu[[col, col]].abs();
            for row in (col + 1)..n {
                let v = lu[[row, col]].abs();
                if v > max_val {
                    max_val = v;
                    max_row = row;
                }
            }
            if max_val == 0.0 {
                return None;
            }
            if max_row != col {
                for j in 0..n {
                    let tmp = lu[[col, j]];
                    lu[[col, j]] = lu[[max_row, j]];
                    lu[[max_row, j]] = tmp;
                }
                pivots.swap(col, max_row);
            }
            for row in (col + 1)..n {
                let factor = lu[[row, col]] / lu[[col, col]];
                lu[[row, col]] = factor;
                for j in (col + 1)..n {
                    lu[[row, j]] -= factor * lu[[col, j]];
                }
            }
        }
        Some(Self { lu, pivots })
    }

    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        let mut x = Array1::zeros(n);
        for i in 0..n {
            x[i] = b[self.pivots[i]];
        }
        for i in 0..n {
            for j in 0..i {
                let xj = x[j];
                x[i] -= self.lu[[i, j]] * xj;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let xj = x[j];
                x[i] -= self.lu[[i, j]] * xj;
            }
            x[i] /= self.lu[[i, i]];
        }
        x
    }

    pub fn inverse(&self) -> Array2<f64> {
        let n = self.lu.nrows();
        let mut inv = Array2::zeros((n, n));
        for col in 0..n {
            let mut e = Array1::zeros(n);
            e[col] = 1.0;
            let x = self.solve(&e);
            inv.column_mut(col).assign(&x);
        }
        inv
    }
}

pub fn dense_inverse(a: &Array2<f64>) -> Array2<f64> {
    DenseLu::factor(a).expect("oracle matrix is singular").inverse()
}

pub fn dense_solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    DenseLu::factor(a).expect("oracle matrix is singular").solve(b)
}

pub fn dense_solve_mat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let lu = DenseLu::factor(a).expect("oracle matrix is singular");
    let mut out = Array2::zeros(b.dim());
    for col in 0..b.ncols() {
        let x = lu.solve(&b.column(col).to_owned());
        out.column_mut(col).assign(&x);
    }
    out
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi rotation method.
pub fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    for _sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[[i, i]]).collect()
}

/// Spectral norm through the Jacobi oracle: sqrt of the largest
/// eigenvalue of `m' m`.
pub fn dense_spectral_norm(m: &Array2<f64>) -> f64 {
    let (n, d) = m.dim();
    let mut gram = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for l in 0..n {
                acc += m[[l, i]] * m[[l, j]];
            }
            gram[[i, j]] = acc;
        }
    }
    let max_eig = jacobi_eigenvalues(&gram)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    max_eig.max(0.0).sqrt()
}

/// Largest absolute eigenvalue of a symmetric matrix (Jacobi oracle).
pub fn dense_symmetric_spectral_norm(m: &Array2<f64>) -> f64 {
    jacobi_eigenvalues(m)
        .into_iter()
        .fold(0.0_f64, |acc, e| acc.max(e.abs()))
}

/// The per-learner, per-class training objective with a frozen ensemble
/// output column `f`:
/// `|beta|^2 + C |H beta - y|^2 + lambda <H beta, f>^2`.
pub fn learner_objective(
    hidden: &Array2<f64>,
    beta: &Array1<f64>,
    y: &Array1<f64>,
    f: &Array1<f64>,
    c: f64,
    lambda: f64,
) -> f64 {
    let n = hidden.nrows();
    let mut h_beta = Array1::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for k in 0..hidden.ncols() {
            acc += hidden[[i, k]] * beta[k];
        }
        h_beta[i] = acc;
    }
    let norm_beta: f64 = beta.iter().map(|b| b * b).sum();
    let residual: f64 = h_beta
        .iter()
        .zip(y.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let inner: f64 = h_beta.iter().zip(f.iter()).map(|(p, q)| p * q).sum();
    norm_beta + c * residual + lambda * inner * inner
}

/// Central finite-difference gradient of `objective` at `beta`.
pub fn fd_gradient<F: Fn(&Array1<f64>) -> f64>(
    objective: F,
    beta: &Array1<f64>,
    step: f64,
) -> Array1<f64> {
    let mut grad = Array1::zeros(beta.len());
    for i in 0..beta.len() {
        let mut plus = beta.clone();
        plus[i] += step;
        let mut minus = beta.clone();
        minus[i] -= step;
        grad[i] = (objective(&plus) - objective(&minus)) / (2.0 * step);
    }
    grad
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn matrix_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        num += (x - y) * (x - y);
        den += y * y;
    }
    (num / den.max(1e-300)).sqrt()
}
