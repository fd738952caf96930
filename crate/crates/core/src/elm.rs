//! Extreme Learning Machine base learner: a random fixed hidden layer and
//! the closed-form ridge solution for the output weights.
//!
//! Only the output weights are learned. For hidden output matrix `H`
//! (N x D), targets `Y` (N x J) and regularization `C > 0`, the per-class
//! output weights solve `(I/C + H'H) beta_j = H'Y_j`; the system matrix is
//! symmetric positive definite by construction, so one Cholesky
//! factorization serves all J right-hand sides.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{NcelmError, Result};
use crate::linalg::{self, Cholesky, SpdSolve};
use crate::rng::SplitMix64;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation '{other}' (expected sigmoid or tanh)")),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::Sigmoid => write!(f, "sigmoid"),
            Activation::Tanh => write!(f, "tanh"),
        }
    }
}

/// Random input-to-hidden projection, fixed after construction.
///
/// Weights and biases are i.i.d. uniform on [-1, 1] drawn from SplitMix64,
/// weights first in row-major order, then biases; regenerating from the
/// same `(seed, input_dim, hidden_dim, activation)` is bit-identical.
#[derive(Debug, Clone)]
pub struct HiddenLayer {
    pub input_weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
    pub seed: u64,
}

impl HiddenLayer {
    pub fn new(seed: u64, input_dim: usize, hidden_dim: usize, activation: Activation) -> Self {
        assert!(input_dim >= 1, "input dimension must be at least 1");
        assert!(hidden_dim >= 1, "hidden dimension must be at least 1");
        let mut rng = SplitMix64::new(seed);
        let mut input_weights = Array2::zeros((input_dim, hidden_dim));
        for k in 0..input_dim {
            for d in 0..hidden_dim {
                input_weights[[k, d]] = rng.next_symmetric();
            }
        }
        let mut biases = Array1::zeros(hidden_dim);
        for d in 0..hidden_dim {
            biases[d] = rng.next_symmetric();
        }
        Self {
            input_weights,
            biases,
            activation,
            seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_weights.ncols()
    }

    /// Map features (N x K) to hidden outputs (N x D):
    /// `H[n][d] = act(sum_k x[n][k] * W[k][d] + bias[d])`.
    pub fn map(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.input_dim() {
            return Err(NcelmError::DimensionMismatch {
                context: "hidden layer input".into(),
                expected: self.input_dim(),
                actual: features.ncols(),
            });
        }
        let n = features.nrows();
        let d = self.hidden_dim();
        let mut out = Array2::zeros((n, d));
        for row in 0..n {
            for col in 0..d {
                let mut z = 0.0;
                for k in 0..self.input_dim() {
                    z += features[[row, k]] * self.input_weights[[k, col]];
                }
                z += self.biases[col];
                out[[row, col]] = self.activation.apply(z);
            }
        }
        Ok(out)
    }
}

/// One ensemble member: its hidden layer plus learned output weights
/// (hidden_dim x n_classes).
#[derive(Debug, Clone)]
pub struct BaseLearner {
    pub hidden: HiddenLayer,
    pub beta: Array2<f64>,
}

impl BaseLearner {
    /// `hidden_map(features) * beta`.
    pub fn output(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let h = self.hidden.map(features)?;
        Ok(linalg::mat_mul(&h, &self.beta))
    }
}

/// Closed-form ridge solution: `beta = (I/C + H'H)^{-1} H'Y`, computed as
/// an SPD solve (never an explicit inverse), one factorization for all
/// target columns.
pub fn ridge_solve(hidden: &Array2<f64>, targets: &Array2<f64>, c: f64) -> Result<Array2<f64>> {
    let chol = ridge_factor(hidden, c)?;
    let hty = linalg::mat_t_mul(hidden, targets);
    Ok(chol.solve_mat(&hty))
}

/// Cholesky factorization of `I/C + H'H`.
pub fn ridge_factor(hidden: &Array2<f64>, c: f64) -> Result<Cholesky> {
    if c <= 0.0 || c.is_nan() {
        return Err(NcelmError::InvalidConfig {
            reason: format!("regularization C must be positive, got {c}"),
        });
    }
    if hidden.nrows() == 0 {
        return Err(NcelmError::EmptyDataset);
    }
    let d = hidden.ncols();
    let mut a = linalg::gram(hidden);
    let ridge = 1.0 / c;
    for i in 0..d {
        a[[i, i]] += ridge;
    }
    Cholesky::factor(&a).map_err(|e| match e {
        NcelmError::NumericalDegeneracy { detail, .. } => NcelmError::NumericalDegeneracy {
            learner: 0,
            iteration: 0,
            lambda: 0.0,
            c,
            detail,
        },
        other => other,
    })
}
