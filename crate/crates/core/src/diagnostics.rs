//! Convergence diagnostics for the fixed-point ensemble update: distances
//! between stacked weight states, spectral norms, the low-rank Woodbury
//! correction that relates consecutive iterates, and the computable upper
//! bounds on the diversity parameter lambda.
//!
//! Notation used throughout: for a candidate ensemble output column `f`
//! (one class), the per-learner system matrix is
//! `A = I/C + H'H + (lambda/C) (H'f)(H'f)'`. Consecutive outputs
//! `f_prev -> f_curr` differ by the rank-two matrix
//! `delta = f_curr f_curr' - f_prev f_prev'`, and the correction
//! `Delta = A^{-1} H' ((C/lambda) I + delta H A^{-1} H')^{-1} delta H`
//! measures how far one more update moves a solution:
//! `T(u) = u - Delta u`. All of these shrink to zero as the iteration
//! approaches its fixed point, which is what the trace records.

use ndarray::{Array1, Array2};

use crate::error::{NcelmError, Result};
use crate::linalg::{self, SpdSolve};

/// Relative tolerance for power iterations.
const POWER_TOL: f64 = 1e-10;
/// Iteration cap for power iterations.
const POWER_CAP: usize = 10_000;

/// Result of a power-iteration norm estimate. `converged` is false when
/// the iteration cap was reached; `achieved_tol` then reports how far the
/// estimate still moved on the last step.
#[derive(Debug, Clone, Copy)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub achieved_tol: f64,
}

/// Largest singular value of `m`, by power iteration on `m'm` with a
/// deterministic all-ones start vector.
pub fn spectral_norm(m: &Array2<f64>) -> NormEstimate {
    let (n, d) = m.dim();
    if n == 0 || d == 0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
            achieved_tol: 0.0,
        };
    }
    let mut v = Array1::from_elem(d, 1.0 / (d as f64).sqrt());
    let mut prev = f64::NAN;
    let mut last_tol = f64::INFINITY;
    for it in 1..=POWER_CAP {
        let w = linalg::mat_vec(m, &v);
        let z = linalg::mat_t_vec(m, &w);
        let nz = linalg::norm2(z.view());
        if nz == 0.0 {
            // Start vector lies in the null space; for these PSD products
            // that only happens when the matrix itself is zero.
            return NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
                achieved_tol: 0.0,
            };
        }
        v = z / nz;
        if !prev.is_nan() {
            last_tol = (nz - prev).abs() / nz.max(f64::MIN_POSITIVE);
            if last_tol <= POWER_TOL {
                return NormEstimate {
                    value: nz.sqrt(),
                    iterations: it,
                    converged: true,
                    achieved_tol: last_tol,
                };
            }
        }
        prev = nz;
    }
    NormEstimate {
        value: prev.sqrt(),
        iterations: POWER_CAP,
        converged: false,
        achieved_tol: last_tol,
    }
}

/// `||A^{-1}||_2` for a symmetric positive definite `A` given through its
/// solve handle, by power iteration on `A^{-1}` (same tolerances and start
/// vector as [`spectral_norm`]).
pub fn inverse_spectral_norm(solver: &dyn SpdSolve) -> NormEstimate {
    let d = solver.dim();
    let mut v = Array1::from_elem(d, 1.0 / (d as f64).sqrt());
    let mut prev = f64::NAN;
    let mut last_tol = f64::INFINITY;
    for it in 1..=POWER_CAP {
        let z = solver.solve_vec(&v);
        let nz = linalg::norm2(z.view());
        if nz == 0.0 {
            return NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
                achieved_tol: 0.0,
            };
        }
        v = z / nz;
        if !prev.is_nan() {
            last_tol = (nz - prev).abs() / nz.max(f64::MIN_POSITIVE);
            if last_tol <= POWER_TOL {
                return NormEstimate {
                    value: nz,
                    iterations: it,
                    converged: true,
                    achieved_tol: last_tol,
                };
            }
        }
        prev = nz;
    }
    NormEstimate {
        value: prev,
        iterations: POWER_CAP,
        converged: false,
        achieved_tol: last_tol,
    }
}

fn check_same_shape(u: &[Array2<f64>], v: &[Array2<f64>]) -> Result<()> {
    if u.len() != v.len() {
        return Err(NcelmError::DimensionMismatch {
            context: "stacked weights: learner counts".into(),
            expected: u.len(),
            actual: v.len(),
        });
    }
    for (a, b) in u.iter().zip(v.iter()) {
        if a.dim() != b.dim() {
            return Err(NcelmError::DimensionMismatch {
                context: "stacked weights: matrix shapes".into(),
                expected: a.len(),
                actual: b.len(),
            });
        }
    }
    Ok(())
}

/// Squared-L2 distance between two stacked weight states: per learner the
/// squared Frobenius norm of the difference, totalled over learners.
/// Returns `(total, per_learner)`; the total is exactly the left-to-right
/// sum of the per-learner values.
pub fn distance_l2(u: &[Array2<f64>], v: &[Array2<f64>]) -> Result<(f64, Vec<f64>)> {
    check_same_shape(u, v)?;
    let mut per_learner = Vec::with_capacity(u.len());
    for (a, b) in u.iter().zip(v.iter()) {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            let d = x - y;
            acc += d * d;
        }
        per_learner.push(acc);
    }
    let mut total = 0.0;
    for d in &per_learner {
        total += d;
    }
    Ok((total, per_learner))
}

/// L1 distance: sum of absolute entry differences over all learners,
/// hidden units and classes.
pub fn distance_l1(u: &[Array2<f64>], v: &[Array2<f64>]) -> Result<f64> {
    check_same_shape(u, v)?;
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        acc += linalg::l1_diff(a, b);
    }
    Ok(acc)
}

/// Factored form of the rank-two difference of output outer products for
/// one class column: `delta = curr curr' - prev prev'`.
#[derive(Debug, Clone)]
pub struct RankTwoDelta {
    pub curr: Array1<f64>,
    pub prev: Array1<f64>,
}

impl RankTwoDelta {
    /// Extract class column `class` from consecutive ensemble outputs.
    pub fn from_outputs(f_curr: &Array2<f64>, f_prev: &Array2<f64>, class: usize) -> Self {
        Self {
            curr: f_curr.column(class).to_owned(),
            prev: f_prev.column(class).to_owned(),
        }
    }

    /// Dense N x N materialization. Only sensible for small N (tests,
    /// inspection); the trace path never builds this.
    pub fn dense(&self) -> Array2<f64> {
        let n = self.curr.len();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] = self.curr[i] * self.curr[j] - self.prev[i] * self.prev[j];
            }
        }
        out
    }

    /// Exact spectral norm from the 2x2 Gram data of the two columns.
    ///
    /// With `a = curr.curr`, `b = prev.prev`, `c = curr.prev`, the action of
    /// `delta` on span{curr, prev} in that basis is `[[a, c], [-c, -b]]`,
    /// so the two (possibly) nonzero eigenvalues are
    /// `((a - b) +- sqrt((a - b)^2 + 4(ab - c^2))) / 2`; the discriminant is
    /// nonnegative by Cauchy-Schwarz and is clamped against roundoff.
    pub fn spectral_norm(&self) -> f64 {
        let a = linalg::dot(self.curr.view(), self.curr.view());
        let b = linalg::dot(self.prev.view(), self.prev.view());
        let c = linalg::dot(self.curr.view(), self.prev.view());
        let disc = ((a - b) * (a - b) + 4.0 * (a * b - c * c)).max(0.0).sqrt();
        let e_plus = ((a - b) + disc) / 2.0;
        let e_minus = ((a - b) - disc) / 2.0;
        e_plus.abs().max(e_minus.abs())
    }
}

/// Woodbury correction `Delta` (hidden_dim x hidden_dim) for one learner
/// and class:
///
/// `Delta = A^{-1} H' ((C/lambda) I_N + delta H A^{-1} H')^{-1} delta H`
///
/// where `solver` applies `A^{-1}` and `delta` is the factored rank-two
/// output difference. The inner N x N system is never formed: folding the
/// factored `delta` through a second low-rank inversion reduces it to a
/// 2x2 solve, leaving the cost at two `A`-solves plus O(N D).
///
/// Satisfies `(A + (lambda/C) H' delta H)^{-1} = A^{-1} - Delta A^{-1}`
/// and, when `u = A^{-1} H' y`, `T(u) = u - Delta u`.
pub fn woodbury_correction(
    hidden: &Array2<f64>,
    solver: &dyn SpdSolve,
    delta: &RankTwoDelta,
    c: f64,
    lambda: f64,
) -> Result<Array2<f64>> {
    if lambda <= 0.0 || lambda.is_nan() {
        return Err(NcelmError::InvalidConfig {
            reason: format!("woodbury correction requires lambda > 0, got {lambda}"),
        });
    }
    let d = hidden.ncols();
    let w_u = linalg::mat_t_vec(hidden, &delta.curr);
    let w_v = linalg::mat_t_vec(hidden, &delta.prev);
    let z_u = solver.solve_vec(&w_u);
    let z_v = solver.solve_vec(&w_v);

    // 2x2 core: (C/lambda) I + Q' (H A^{-1} H') P with P = [u, -v], Q = [u, v].
    let ratio = c / lambda;
    let m00 = ratio + linalg::dot(w_u.view(), z_u.view());
    let m01 = -linalg::dot(w_u.view(), z_v.view());
    let m10 = linalg::dot(w_v.view(), z_u.view());
    let m11 = ratio - linalg::dot(w_v.view(), z_v.view());
    let det = m00 * m11 - m01 * m10;
    if det == 0.0 || !det.is_finite() {
        return Err(NcelmError::NumericalDegeneracy {
            learner: 0,
            iteration: 0,
            lambda,
            c,
            detail: format!(
                "singular 2x2 core in Woodbury correction (det={det:e}, \
                 |delta_curr|^2={:e}, |delta_prev|^2={:e})",
                linalg::dot(delta.curr.view(), delta.curr.view()),
                linalg::dot(delta.prev.view(), delta.prev.view()),
            ),
        });
    }
    let inv00 = m11 / det;
    let inv01 = -m01 / det;
    let inv10 = -m10 / det;
    let inv11 = m00 / det;

    // Delta = [z_u, -z_v] * inv * [w_u'; w_v']
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        let left0 = z_u[i];
        let left1 = -z_v[i];
        let row0 = left0 * inv00 + left1 * inv10;
        let row1 = left0 * inv01 + left1 * inv11;
        for j in 0..d {
            out[[i, j]] = row0 * w_u[j] + row1 * w_v[j];
        }
    }
    Ok(out)
}

/// Ratio of inverse-system norms between consecutive iterates.
/// In the training loop the numerator is taken at the previous ensemble
/// output and the denominator at the current one.
pub fn eta_ratio(inv_norm_prev: f64, inv_norm_curr: f64) -> f64 {
    assert!(
        inv_norm_curr > 0.0,
        "inverse-system norm must be positive (SPD system)"
    );
    inv_norm_prev / inv_norm_curr
}

/// Closed-form largest generalized eigenvalue of the 2x2 distance-ratio
/// pencil: `gamma = (nu^2 nv^2) / (nu^2 + nv^2)` for correction norms
/// `nu`, `nv`. Zero when either norm is zero.
pub fn gamma_max(norm_delta_u: f64, norm_delta_v: f64) -> f64 {
    let a = norm_delta_u * norm_delta_u;
    let b = norm_delta_v * norm_delta_v;
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    a * b / (a + b)
}

/// Largest finite root of `det(X - gamma Y) = 0` for the explicit pencil
/// `X = diag(nu^2, nv^2)`, `Y = [[1, -1], [-1, 1]]`, via the numerically
/// expanded characteristic polynomial. Returns `None` when the pencil has
/// no finite eigenvalue.
pub fn gamma_pencil(norm_delta_u: f64, norm_delta_v: f64) -> Option<f64> {
    let x = [
        [norm_delta_u * norm_delta_u, 0.0],
        [0.0, norm_delta_v * norm_delta_v],
    ];
    let y = [[1.0, -1.0], [-1.0, 1.0]];
    // det(X - gY) = c2 g^2 + c1 g + c0
    let c2 = y[0][0] * y[1][1] - y[0][1] * y[1][0];
    let c1 = -(x[0][0] * y[1][1] + x[1][1] * y[0][0]) + (x[0][1] * y[1][0] + x[1][0] * y[0][1]);
    let c0 = x[0][0] * x[1][1] - x[0][1] * x[1][0];
    if c2 != 0.0 {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return None;
        }
        let r1 = (-c1 + disc.sqrt()) / (2.0 * c2);
        let r2 = (-c1 - disc.sqrt()) / (2.0 * c2);
        Some(r1.max(r2))
    } else if c1 != 0.0 {
        Some(-c0 / c1)
    } else {
        None
    }
}

/// Closed form and pencil value side by side. The pencil is authoritative:
/// `value` is the pencil eigenvalue whenever one exists, and `discrepancy`
/// is set when the two routes differ by more than 1e-8 (relative to the
/// larger magnitude, floored at 1).
#[derive(Debug, Clone, Copy)]
pub struct GammaReconciliation {
    pub value: f64,
    pub closed_form: f64,
    pub pencil: Option<f64>,
    pub discrepancy: Option<f64>,
}

pub fn gamma_reconciled(norm_delta_u: f64, norm_delta_v: f64) -> GammaReconciliation {
    let closed_form = gamma_max(norm_delta_u, norm_delta_v);
    let pencil = gamma_pencil(norm_delta_u, norm_delta_v);
    match pencil {
        Some(p) => {
            let diff = (p - closed_form).abs();
            let scale = p.abs().max(closed_form.abs()).max(1.0);
            let discrepancy = if diff > 1e-8 * scale { Some(diff) } else { None };
            GammaReconciliation {
                value: p,
                closed_form,
                pencil,
                discrepancy,
            }
        }
        None => GammaReconciliation {
            value: closed_form,
            closed_form,
            pencil,
            discrepancy: None,
        },
    }
}

/// Computable per-learner upper bound on the diversity parameter:
///
/// `2 ||I + C H'H|| / (3 (1 + ||H'ff'H||)) * sqrt((eta du^2 + dv^2) / (du^2 dv^2))`
///
/// with `du`, `dv` the spectral norms of the current and previous output
/// deltas. Returns positive infinity when either delta norm is zero; the
/// bound is vacuous once the iteration has stalled, which is exactly the
/// relaxation the trace records near convergence.
pub fn lambda_bound_prime(
    h_norm_term: f64,
    penalty_norm_term: f64,
    eta: f64,
    delta_u_norm: f64,
    delta_v_norm: f64,
) -> f64 {
    if delta_u_norm == 0.0 || delta_v_norm == 0.0 {
        return f64::INFINITY;
    }
    let du2 = delta_u_norm * delta_u_norm;
    let dv2 = delta_v_norm * delta_v_norm;
    let prefactor = (2.0 * h_norm_term) / (3.0 * (1.0 + penalty_norm_term));
    prefactor * ((eta * du2 + dv2) / (du2 * dv2)).sqrt()
}

/// Looser bound written directly in terms of
/// `alpha = ||A^{-1}||^2 ||H||^4`:
///
/// `(2C/3) sqrt((a_u du^2 + a_v dv^2) / (a_u a_v du^2 dv^2))`.
pub fn lambda_max_bound(
    alpha_u: f64,
    alpha_v: f64,
    delta_u_norm: f64,
    delta_v_norm: f64,
    c: f64,
) -> f64 {
    let du2 = delta_u_norm * delta_u_norm;
    let dv2 = delta_v_norm * delta_v_norm;
    if alpha_u * du2 == 0.0 || alpha_v * dv2 == 0.0 {
        return f64::INFINITY;
    }
    (2.0 * c / 3.0) * ((alpha_u * du2 + alpha_v * dv2) / (alpha_u * alpha_v * du2 * dv2)).sqrt()
}

/// Upper bound on `||Delta||^2` implied by the triangle/product norm chain:
/// `alpha d^2 / (C^2/lambda^2 - alpha d^2)`. The denominator can go
/// nonpositive for large lambda, in which case the bound does not apply
/// and `None` is returned. Also `None` at lambda = 0, where the correction
/// itself is identically zero.
pub fn delta_correction_bound(alpha: f64, delta_norm: f64, c: f64, lambda: f64) -> Option<f64> {
    if lambda == 0.0 {
        return None;
    }
    let d2 = delta_norm * delta_norm;
    let denom = (c * c) / (lambda * lambda) - alpha * d2;
    if denom > 0.0 {
        Some(alpha * d2 / denom)
    } else {
        None
    }
}

/// Inputs for evaluating the implicit bound equation at one learner and
/// class. The system matrices depend on the candidate lambda, so the solve
/// machinery is kept rather than precomputed norms.
pub struct LambdaBoundContext {
    base: linalg::Cholesky,
    g_prev: Array1<f64>,
    g_curr: Array1<f64>,
    c: f64,
    delta_u_norm: f64,
    delta_v_norm: f64,
}

impl LambdaBoundContext {
    /// `f_hat_prev`/`f_hat_curr` are the output columns defining the two
    /// system matrices; `delta_u_norm`/`delta_v_norm` the corresponding
    /// output-delta spectral norms.
    pub fn new(
        hidden: &Array2<f64>,
        f_hat_prev: &Array1<f64>,
        f_hat_curr: &Array1<f64>,
        delta_u_norm: f64,
        delta_v_norm: f64,
        c: f64,
    ) -> Result<Self> {
        let base = crate::elm::ridge_factor(hidden, c)?;
        let g_prev = linalg::mat_t_vec(hidden, f_hat_prev);
        let g_curr = linalg::mat_t_vec(hidden, f_hat_curr);
        Ok(Self {
            base,
            g_prev,
            g_curr,
            c,
            delta_u_norm,
            delta_v_norm,
        })
    }

    /// Residual of the implicit bound equation at `lambda`:
    /// `H(lambda) = lambda - (2C) / (3 ||A_prev^{-1}||) * sqrt((eta du^2 + dv^2)/(du^2 dv^2))`
    /// where both inverse norms are evaluated at this lambda. Negative
    /// infinity when either delta norm is zero (no finite root exists).
    pub fn residual(&self, lambda: f64) -> f64 {
        if self.delta_u_norm == 0.0 || self.delta_v_norm == 0.0 {
            return f64::NEG_INFINITY;
        }
        let coeff = lambda / self.c;
        let a_prev = linalg::RankOneShift::new(&self.base, self.g_prev.clone(), coeff);
        let a_curr = linalg::RankOneShift::new(&self.base, self.g_curr.clone(), coeff);
        let inv_prev = inverse_spectral_norm(&a_prev).value;
        let inv_curr = inverse_spectral_norm(&a_curr).value;
        let eta = eta_ratio(inv_prev, inv_curr);
        let du2 = self.delta_u_norm * self.delta_u_norm;
        let dv2 = self.delta_v_norm * self.delta_v_norm;
        lambda - (2.0 * self.c) / (3.0 * inv_prev) * ((eta * du2 + dv2) / (du2 * dv2)).sqrt()
    }
}

/// Outcome of the numeric search for the implicit lambda bound.
#[derive(Debug, Clone, Copy)]
pub enum LambdaRoot {
    Root {
        lambda: f64,
        residual: f64,
        bisection_steps: usize,
    },
    /// No sign change found while doubling the upper end of the bracket;
    /// the bound is effectively unbounded on the scanned range.
    NoSignChange { max_lambda_scanned: f64 },
}

/// Locate the zero of the implicit bound equation by doubling the bracket
/// end until the residual changes sign (at most 60 doublings from 1), then
/// bisecting to 1e-10 relative width (at most 60 steps).
pub fn find_lambda_bound(ctx: &LambdaBoundContext) -> LambdaRoot {
    let mut hi = 1.0;
    let mut doublings = 0;
    while ctx.residual(hi) < 0.0 {
        doublings += 1;
        if doublings > 60 {
            return LambdaRoot::NoSignChange {
                max_lambda_scanned: hi,
            };
        }
        hi *= 2.0;
    }
    let mut lo = 0.0;
    let mut steps = 0;
    for _ in 0..60 {
        if (hi - lo) <= 1e-10 * hi.max(f64::MIN_POSITIVE) {
            break;
        }
        steps += 1;
        let mid = 0.5 * (lo + hi);
        if ctx.residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    LambdaRoot::Root {
        lambda,
        residual: ctx.residual(lambda),
        bisection_steps: steps,
    }
}

/// Empirical contraction ratio `d(T(u), T(v)) / d(u, v)` for one map
/// application. Rejects coincident points.
pub fn empirical_contraction_ratio<F>(
    step: F,
    u: &[Array2<f64>],
    v: &[Array2<f64>],
) -> Result<f64>
where
    F: Fn(&[Array2<f64>]) -> Result<Vec<Array2<f64>>>,
{
    let (d_uv, _) = distance_l2(u, v)?;
    if d_uv == 0.0 {
        return Err(NcelmError::ZeroDistance);
    }
    let tu = step(u)?;
    let tv = step(v)?;
    let (d_t, _) = distance_l2(&tu, &tv)?;
    Ok(d_t / d_uv)
}
